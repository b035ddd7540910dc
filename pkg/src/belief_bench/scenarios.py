"""Named constructions: the event queue, the blind-emission counterexample,
two-state selection instances and the multi-simulator calibration setting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .belief import CorruptionSpec
from .errors import InvalidModelError
from .pomdp import History, Policy, Pomdp, random_pomdp, random_policy
from .selection import LATENT, OBSERVATION, SelectionConfig

OBS_O, OBS_X = 0, 1


@dataclass
class Scenario:
    """A runnable experiment.

    ``pomdp`` is the real system.  ``simulators`` (optional) is the candidate
    simulator family with ``simulators[real_index]`` identical to ``pomdp``.
    ``candidate_specs`` lists corruptions applied to each model's exact belief
    (``None`` stands for the exact belief itself).
    """

    name: str
    kind: str
    pomdp: Pomdp
    pi_b: Policy
    candidate_specs: list
    policy: Policy | None = None
    pi_prime: Policy | None = None
    simulators: list | None = None
    real_index: int | None = None
    selection: dict = field(default_factory=dict)
    roots: list = field(default_factory=list)
    expected: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.policy is None:
            self.policy = self.pi_b
        if self.simulators is not None:
            if self.real_index is None or not 0 <= self.real_index < len(self.simulators):
                raise InvalidModelError("real_index must point into simulators", "real_index")
            if self.simulators[self.real_index] is not self.pomdp:
                raise InvalidModelError("the real system must be one of the simulators", "simulators")
            for k, sim in enumerate(self.simulators):
                if not sim.same_shape(self.pomdp):
                    raise InvalidModelError("layer sizes differ from the real system", f"simulators[{k}]")


# --- event queue ------------------------------------------------------------------


def geometric_intervals(K: int, p: float = 0.3) -> np.ndarray:
    """Geometric(p) gaps on ``1..K``, renormalized after truncation."""
    w = p * (1.0 - p) ** np.arange(K)
    return w / w.sum()


def make_queue_pomdp(interval_dist, horizon: int) -> Pomdp:
    """Action-less renewal process; observation X (index 1) marks an event.

    The latent state is ``(countdown c, event flag e)`` stored as ``c + K*e``:
    ``c`` counts the steps until the next event (0 means next step) and ``e``
    records whether an event happened at the current step.
    """
    D = np.asarray(interval_dist, dtype=float)
    K = len(D)
    if K < 1 or np.any(D < 0) or abs(D.sum() - 1.0) > 1e-12:
        raise InvalidModelError("interval distribution must be a probability vector", "interval_dist")
    if K >= horizon:
        raise InvalidModelError(f"need max interval K={K} below the horizon {horizon}", "interval_dist")
    S = 2 * K
    fresh = np.zeros(S)
    fresh[K : 2 * K] = D  # state (i-1, e=1) for interval i
    P = np.zeros((S, 1, S))
    for e in (0, 1):
        P[K * e, 0] = fresh
        for c in range(1, K):
            P[c + K * e, 0, c - 1] = 1.0
    E = np.zeros((S, 2))
    E[:K, OBS_O] = 1.0
    E[K:, OBS_X] = 1.0
    R = np.array([0.0, 1.0])
    return Pomdp(fresh, tuple([P] * horizon), tuple([E] * (horizon + 1)), tuple([R] * horizon), 1.0, name="queue")


def renewal_law(interval_dist, elapsed: int, length: int) -> dict:
    """Law of the next ``length`` event indicators when the last event was ``elapsed`` steps ago.

    ``elapsed = 0`` with a point mass on an immediate event is expressed by
    ``renewal_law_from_gap``; this form conditions the current gap on exceeding
    ``elapsed``.
    """
    D = np.asarray(interval_dist, dtype=float)
    gaps = np.zeros(len(D) + 1)
    tail = D[elapsed:].sum()
    for i in range(elapsed + 1, len(D) + 1):
        gaps[i - elapsed] = D[i - 1] / tail
    return renewal_law_from_gap(D, gaps, length)


def renewal_law_from_gap(interval_dist, first_gap, length: int) -> dict:
    """Event-indicator law when the first gap has law ``first_gap[g]`` and later gaps follow ``interval_dist``."""
    D = np.asarray(interval_dist, dtype=float)
    out: dict = {}

    def walk(prefix, prob, gap_law):
        for g in range(1, len(gap_law)):
            pg = gap_law[g]
            if pg <= 0:
                continue
            if len(prefix) + g > length:
                seq = prefix + (OBS_O,) * (length - len(prefix))
                out[seq] = out.get(seq, 0.0) + prob * pg
                continue
            walk(prefix + (OBS_O,) * (g - 1) + (OBS_X,), prob * pg, np.concatenate([[0.0], D]))

    if length == 0:
        return {(): 1.0}
    walk((), 1.0, np.asarray(first_gap, dtype=float))
    return out


def make_queue_scenario(interval_dist=None, horizon: int = 12, K: int = 6, p: float = 0.3) -> Scenario:
    """Queue POMDP with the exact belief and the countdown-zero belief as candidates.

    The root is the history ``X O O`` with its single action.
    """
    D = geometric_intervals(K, p) if interval_dist is None else np.asarray(interval_dist, dtype=float)
    pomdp = make_queue_pomdp(D, horizon)
    root = History((OBS_X, OBS_O, OBS_O), (0, 0))
    if len(D) < 3:
        root = History((OBS_X,), ())
    spec = CorruptionSpec("point-mass-at", rule="queue-countdown-zero", name="countdown-zero")
    return Scenario(
        name="queue",
        kind="queue",
        pomdp=pomdp,
        pi_b=Policy.uniform(1),
        candidate_specs=[None, spec],
        roots=[(root, 0)],
        expected={"queue-law-real": True, "queue-law-single-reset": True, "queue-law-repeated-reset": True},
        params={"interval_dist": [float(x) for x in D], "horizon": horizon},
    )


# --- blind emission counterexample ---------------------------------------------------


def make_example1_pomdp(seed: int = 0, t0: int = 2, horizon: int = 3, states: int = 3, obs: int = 2, actions: int = 2) -> Pomdp:
    """Random POMDP whose emission at layer ``t0`` is one shared row (observations there carry no state information)."""
    if not 1 <= t0 < horizon:
        raise InvalidModelError(f"t0 must satisfy 1 <= t0 < H={horizon}", "t0")
    base = random_pomdp(seed, horizon=horizon, states=states, obs=obs, actions=actions)
    rng = np.random.default_rng([seed, 1])
    emis = list(base.emission)
    row = rng.dirichlet(np.ones(emis[t0].shape[1]))
    emis[t0] = np.tile(row, (emis[t0].shape[0], 1))
    return Pomdp(base.init, base.transition, tuple(emis), base.reward[1:], base.r_max, name=f"example1-{seed}")


def example1_spec(seed: int, t0: int, magnitude: float = 1.0) -> CorruptionSpec:
    """Arbitrary (seeded Dirichlet) belief one step before the blind layer, exact elsewhere."""
    return CorruptionSpec("random-dirichlet", seed=seed, weight=magnitude, steps=frozenset([t0 - 1]), name="blind-step-arbitrary")


def make_example1_scenario(seed: int = 0, t0: int = 2, magnitude: float = 1.0, horizon: int = 3) -> Scenario:
    pomdp = make_example1_pomdp(seed, t0, horizon)
    pi_b = random_policy(pomdp, [seed, 2])
    return Scenario(
        name="example1",
        kind="example1",
        pomdp=pomdp,
        pi_b=pi_b,
        candidate_specs=[None, example1_spec(seed, t0, magnitude)],
        pi_prime=random_policy(pomdp, [seed, 3], "history-tabular"),
        selection={
            LATENT: SelectionConfig(400, 400, (t0 - 1,), LATENT, seed=seed),
            OBSERVATION: SelectionConfig(400, 400, tuple(range(horizon)), OBSERVATION, seed=seed),
        },
        expected={
            "pairing-latent-single-reset": True,
            "pairing-observation-single-reset": False,
            "pairing-latent-repeated-reset": True,
            "pairing-observation-repeated-reset": True,
        },
        params={"seed": seed, "t0": t0, "magnitude": magnitude, "horizon": horizon},
    )


# --- two-state selection instances ------------------------------------------------------


def make_two_state_pomdp(horizon: int = 2, stay: float = 0.9, acc0: float = 0.7, acc: float = 0.95) -> Pomdp:
    """Sticky two-state chain with a weak first observation and sharper later ones."""
    P = np.array([[[stay, 1 - stay]], [[1 - stay, stay]]])
    E0 = np.array([[acc0, 1 - acc0], [1 - acc0, acc0]])
    E = np.array([[acc, 1 - acc], [1 - acc, acc]])
    R = np.array([0.0, 1.0])
    return Pomdp(
        np.array([0.5, 0.5]), tuple([P] * horizon), (E0,) + tuple([E] * horizon), tuple([R] * horizon), 1.0, name="two-state"
    )


def make_selection_scenario(mode: str = LATENT, seed: int = 0, n: int = 400, N: int = 400) -> Scenario:
    """Latent mode: exact vs mix-with-uniform(0.9); observation mode: exact vs a state swap at step 1."""
    pomdp = make_two_state_pomdp()
    if mode == LATENT:
        spec = CorruptionSpec("mix-with-uniform", lam=0.9)
        steps = (1, 2)
    else:
        spec = CorruptionSpec("swap-at-step", t0=1, perm=(1, 0))
        steps = (1,)
    return Scenario(
        name=f"selection-{mode}",
        kind="selection",
        pomdp=pomdp,
        pi_b=Policy.uniform(1),
        candidate_specs=[None, spec],
        selection={mode: SelectionConfig(n, N, steps, mode, seed=seed)},
        expected={"selects-exact": True},
        params={"mode": mode, "n": n, "N": N},
    )


# --- simulator families --------------------------------------------------------------------


def perturb_pomdp(base: Pomdp, seed, weight: float, name: str = "") -> Pomdp:
    """Mix every transition row and every emission row past layer 0 with a random row.

    The initial distribution and first emission are kept, so every member of a
    family induces the same law of ``o_0``.
    """
    rng = np.random.default_rng(seed)
    trans = [(1 - weight) * P + weight * rng.dirichlet(np.ones(P.shape[2]), size=P.shape[:2]) for P in base.transition]
    emis = [base.emission[0]] + [
        (1 - weight) * E + weight * rng.dirichlet(np.ones(E.shape[1]), size=E.shape[0]) for E in base.emission[1:]
    ]
    return Pomdp(base.init, tuple(trans), tuple(emis), base.reward[1:], base.r_max, name=name or f"{base.name}~{weight:g}")


def _family(real: Pomdp, seed: int, weights, real_index: int):
    others = [perturb_pomdp(real, [seed, 10 + k], w, name=f"sim{k}") for k, w in enumerate(weights)]
    sims = others[:real_index] + [real] + others[real_index:]
    return sims


def make_two_stage_scenario(seed: int = 0, horizon: int = 3, real_index: int = 1, n: int = 400, N: int = 400) -> Scenario:
    """K=3 simulators (the real one plus two perturbations) and three belief candidates."""
    real = random_pomdp([seed, 100], horizon=horizon, states=3, obs=3, actions=2)
    sims = _family(real, seed, (0.5, 0.8), real_index)
    pi_b = random_policy(real, [seed, 2])
    specs = [None, CorruptionSpec("mix-with-uniform", lam=0.6), CorruptionSpec("random-dirichlet", seed=seed + 7, weight=0.8)]
    cfg = SelectionConfig(n, N, tuple(range(horizon)), LATENT, seed=seed)
    return Scenario(
        name="two-stage",
        kind="two-stage",
        pomdp=real,
        pi_b=pi_b,
        candidate_specs=specs,
        pi_prime=random_policy(real, [seed, 3], "history-tabular"),
        simulators=sims,
        real_index=real_index,
        selection={"config": cfg},
        expected={"thm-2stage": True, "one-shot-repeated-reset": True, "one-shot-single-reset": None},
        params={"seed": seed, "horizon": horizon, "real_index": real_index, "n": n, "N": N},
    )


def make_two_stage_adversarial(seed: int = 0, t0: int = 2, horizon: int = 3, real_index: int = 0, n: int = 400, N: int = 400) -> Scenario:
    """Two-stage family around the blind-emission POMDP, with its blind candidate in the belief set."""
    real = make_example1_pomdp(seed, t0, horizon)
    sims = _family(real, seed, (0.5, 0.8), real_index)
    pi_b = random_policy(real, [seed, 2])
    specs = [None, example1_spec(seed, t0), CorruptionSpec("mix-with-uniform", lam=0.6)]
    cfg = SelectionConfig(n, N, tuple(range(horizon)), LATENT, seed=seed)
    return Scenario(
        name="two-stage-adversarial",
        kind="two-stage",
        pomdp=real,
        pi_b=pi_b,
        candidate_specs=specs,
        pi_prime=random_policy(real, [seed, 3], "history-tabular"),
        simulators=sims,
        real_index=real_index,
        selection={"config": cfg},
        expected={"thm-2stage": True, "one-shot-repeated-reset": True, "one-shot-single-reset": False},
        params={"seed": seed, "t0": t0, "horizon": horizon, "real_index": real_index, "n": n, "N": N},
    )


CATALOG = {
    "queue": lambda seed=0: make_queue_scenario(),
    "example1": lambda seed=0: make_example1_scenario(seed),
    "selection-latent": lambda seed=0: make_selection_scenario(LATENT, seed),
    "selection-observation": lambda seed=0: make_selection_scenario(OBSERVATION, seed),
    "two-stage": lambda seed=0: make_two_stage_scenario(seed),
    "two-stage-adversarial": lambda seed=0: make_two_stage_adversarial(seed),
}


def make_scenario(name: str, seed: int = 0) -> Scenario:
    if name not in CATALOG:
        raise InvalidModelError(f"unknown scenario {name!r}; known: {sorted(CATALOG)}", "scenario")
    return CATALOG[name](seed)
