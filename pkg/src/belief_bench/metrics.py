"""Exact distances, expected-TV quantities, coverage coefficients and bound checks.

Every expectation here is an exact sum over the history index weighted by
occupancies, never a sample average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .belief import BeliefSampler, belief_tables
from .errors import BeliefBenchError, LayerMismatchError, UnreachableHistoryError
from .pomdp import Distribution, History, HistoryIndex, Policy, Pomdp, exact_q, occupancies
from .rollout import exact_repeated_reset_q, exact_single_reset_q, observable_model

BOUND_TOL = 1e-9
DP_INEQ_TOL = 1e-12
RATIO_RTOL = 1e-12


def tv(p, q) -> float:
    """``0.5 * sum |p - q|`` between two distributions on the same domain."""
    if isinstance(p, Distribution) and isinstance(q, Distribution) and p.domain != q.domain:
        raise LayerMismatchError(f"cannot compare {p.domain} with {q.domain}")
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise LayerMismatchError(f"domain sizes differ: {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


def tv_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise TV along the last axis."""
    return 0.5 * np.abs(p - q).sum(axis=-1)


def _weighted(weights, values, what):
    live = weights > 0
    vals = values[live]
    if np.isnan(vals).any():
        raise UnreachableHistoryError(f"{what} is undefined on a history with positive probability")
    return float(np.dot(weights[live], vals))


def belief_tv_layer(pomdp: Pomdp, b: BeliefSampler, t: int) -> np.ndarray:
    """``TV(b(.|tau), b*(.|tau))`` for every layer-``t`` history (NaN where undefined)."""
    return tv_rows(belief_tables(b)[t], pomdp.filtered.belief[t])


def observable_tv_layer(pomdp: Pomdp, b: BeliefSampler, t: int) -> np.ndarray:
    """``TV(M_{Gamma,b}, M_Gamma)`` per ``(tau_t, a)``, shape ``(n_t, A)``."""
    return tv_rows(observable_model(pomdp, b)[t], pomdp.filtered.pred[t])


def expected_belief_tv(pomdp: Pomdp, b: BeliefSampler, pi_b: Policy, t: int) -> float:
    """``E_{tau_t ~ Gamma^{pi_b}} TV(b, b*)``."""
    w = occupancies(pomdp, pi_b, t)[t]
    return _weighted(w, belief_tv_layer(pomdp, b, t), "candidate belief")


def pair_weights(pomdp: Pomdp, policy: Policy, t: int, occ=None) -> np.ndarray:
    """``P^pi[tau_t, a_t]`` as an ``(n_t, A)`` array."""
    occ = occupancies(pomdp, policy, t) if occ is None else occ
    return occ[t][:, None] * policy.layer_table(pomdp.index, t)


def expected_observable_tv(pomdp: Pomdp, b: BeliefSampler, pi_b: Policy, t: int) -> float:
    """``E_{(tau_t, a_t) ~ Gamma^{pi_b}} TV(M_{Gamma,b}, M_Gamma)``."""
    if not 0 <= t < pomdp.horizon:
        raise LayerMismatchError(f"observable TV needs 0 <= t < H, got {t}")
    w = pair_weights(pomdp, pi_b, t)
    return _weighted(w.ravel(), observable_tv_layer(pomdp, b, t).ravel(), "observable model")


def expected_model_tv(real: Pomdp, laws: Sequence[np.ndarray], pi_b: Policy, t: int) -> float:
    """``E_{(tau_t,a_t) ~ real^{pi_b}} TV(laws[t], M_real)`` for an arbitrary history-MDP ``laws``."""
    w = pair_weights(real, pi_b, t)
    return _weighted(w.ravel(), tv_rows(laws[t], real.filtered.pred[t]).ravel(), "model")


def expected_abs_diff(pomdp: Pomdp, q1, q2, policy: Policy, t: int, occ=None) -> float:
    """``E_{(tau_t,a_t) ~ Gamma^{policy}} |q1 - q2|`` at step ``t``."""
    w = pair_weights(pomdp, policy, t, occ)
    return _weighted(w.ravel(), np.abs(q1.values[t] - q2.values[t]).ravel(), "Q-value")


# --- coverage -------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageReport:
    """Worst-case density ratio with its witness.

    ``value`` is ``math.inf`` (serialized as ``"inf"``) when the denominator
    policy misses mass the numerator policy puts down; the witness is then the
    offending history/action or statistic value.
    """

    kind: str
    value: float
    witness: object
    numerator: float = 0.0
    denominator: float = 0.0

    @property
    def infinite(self) -> bool:
        return math.isinf(self.value)

    def to_dict(self):
        wit = self.witness
        if isinstance(wit, tuple) and wit and isinstance(wit[0], History):
            wit = [wit[0].render()] + list(wit[1:])
        elif isinstance(wit, History):
            wit = wit.render()
        return {
            "kind": self.kind,
            "value": "inf" if self.infinite else self.value,
            "witness": wit,
            "numerator": self.numerator,
            "denominator": self.denominator,
        }


def _ratio_argmax(num, den):
    """Max of ``num/den`` over entries with ``num > 0``; +inf with witness if ``den == 0`` there."""
    live = num > 0
    starved = live & (den <= 0)
    if np.any(starved):
        i = int(np.flatnonzero(starved.ravel())[0])
        return math.inf, i
    ratio = np.where(live, num / np.where(live, den, 1.0), -np.inf)
    i = int(np.argmax(ratio.ravel()))
    return float(ratio.ravel()[i]), i


def importance_product(pomdp: Pomdp, pi_prime: Policy, pi_b: Policy, t: int) -> np.ndarray:
    """``prod_{t' <= t} pi'(a_t'|tau_t') / pi_b(a_t'|tau_t')`` for every ``(tau_t, a_t)``."""
    index = pomdp.index
    with np.errstate(divide="ignore", invalid="ignore"):
        prod = np.ones(index.sizes[0])
        for k in range(t + 1):
            step = pi_prime.layer_table(index, k) / pi_b.layer_table(index, k)
            full = prod[:, None] * step
            if k == t:
                return full
            prod = np.repeat(full.reshape(-1), index.obs_sizes[k + 1])
    raise AssertionError("unreachable")


def history_coverage(pomdp: Pomdp, pi_prime: Policy, pi_b: Policy, t: int) -> CoverageReport:
    """``max P^{pi'}[tau_t, a_t] / P^{pi_b}[tau_t, a_t]`` with an importance-weight cross-check."""
    num = pair_weights(pomdp, pi_prime, t)
    den = pair_weights(pomdp, pi_b, t)
    value, i = _ratio_argmax(num, den)
    h_idx, a = divmod(i, pomdp.num_actions)
    witness = (pomdp.index.history(t, h_idx), a)
    if not math.isinf(value):
        prod = importance_product(pomdp, pi_prime, pi_b, t)
        live = num > 0
        gap = np.abs(num[live] / den[live] - prod[live])
        if np.any(gap > RATIO_RTOL * np.maximum(1.0, prod[live])):
            raise BeliefBenchError("occupancy ratio disagrees with the importance-weight product")
    return CoverageReport("history-ratio", value, witness, float(num.ravel()[i]), float(den.ravel()[i]))


@dataclass(frozen=True, eq=False)
class SufficientStat:
    """``z_t = phi(tau_t)`` stored as integer labels per layer of the history index."""

    index: HistoryIndex
    labels: tuple
    name: str = "phi"

    @classmethod
    def from_function(cls, index: HistoryIndex, fn: Callable[[History], object], name="phi"):
        labels = []
        for t in range(index.horizon + 1):
            keys = [fn(index.history(t, i)) for i in range(index.sizes[t])]
            _, inv = np.unique(np.array([repr(k) for k in keys]), return_inverse=True)
            labels.append(inv.astype(np.int64))
        return cls(index, tuple(labels), name)

    @classmethod
    def constant(cls, index: HistoryIndex):
        return cls(index, tuple(np.zeros(n, dtype=np.int64) for n in index.sizes), "constant")

    @classmethod
    def identity(cls, index: HistoryIndex):
        return cls(index, tuple(np.arange(n, dtype=np.int64) for n in index.sizes), "identity")

    @classmethod
    def from_rows(cls, index: HistoryIndex, tables: Sequence[Sequence[np.ndarray]], name="rows", decimals=12):
        """Group histories whose rows agree across all ``tables`` (rounded; NaN rows form one group)."""
        labels = []
        for t in range(index.horizon + 1):
            key = np.concatenate([np.round(np.nan_to_num(tb[t], nan=-1.0), decimals) for tb in tables], axis=1)
            _, inv = np.unique(key, axis=0, return_inverse=True)
            labels.append(inv.reshape(-1).astype(np.int64))
        return cls(index, tuple(labels), name)

    def product(self, other: "SufficientStat") -> "SufficientStat":
        labels = []
        for a, b in zip(self.labels, other.labels):
            _, inv = np.unique(np.stack([a, b], axis=1), axis=0, return_inverse=True)
            labels.append(inv.reshape(-1).astype(np.int64))
        return SufficientStat(self.index, tuple(labels), f"{self.name}x{other.name}")


def z_coverage(pomdp: Pomdp, phi: SufficientStat, pi_prime: Policy, pi_b: Policy, t: int) -> CoverageReport:
    """``max_z P^{pi'}[z_t] / P^{pi_b}[z_t]`` with marginals summed over histories."""
    z = phi.labels[t]
    k = int(z.max()) + 1
    num = np.bincount(z, weights=occupancies(pomdp, pi_prime, t)[t], minlength=k)
    den = np.bincount(z, weights=occupancies(pomdp, pi_b, t)[t], minlength=k)
    value, i = _ratio_argmax(num, den)
    return CoverageReport("z-ratio", value, int(i), float(num[i]), float(den[i]))


def composed_pair_weights(pomdp: Pomdp, layer_policies: Sequence[Policy], t: int) -> np.ndarray:
    """``P[tau_t, a_t]`` when step ``k`` actions come from ``layer_policies[k]``."""
    filt = pomdp.filtered
    w = filt.lik[0].copy()
    for k in range(t):
        pi = layer_policies[k].layer_table(pomdp.index, k)
        w = (w[:, None, None] * pi[:, :, None] * np.nan_to_num(filt.pred[k], nan=0.0)).reshape(-1)
    return w[:, None] * layer_policies[t].layer_table(pomdp.index, t)


def repeated_reset_coverage(pomdp: Pomdp, pi_prime: Policy, pi: Policy, pi_b: Policy, t: int):
    """Coverage sum for the Repeated-Reset extension, under both readings of the composed policy.

    Reading ``through-t`` follows ``pi'`` for ``a_0..a_t``; reading ``before-t``
    follows ``pi'`` for ``a_0..a_{t-1}``.  Both compare step-``t'`` occupancies.
    Returns ``(larger_sum, {reading: sum})``.
    """
    H = pomdp.horizon
    sums = {}
    for name, switch in (("through-t", t + 1), ("before-t", t)):
        total = 0.0
        for tp in range(t, H):
            pols = [pi_prime if k < switch else pi for k in range(tp + 1)]
            value, _ = _ratio_argmax(composed_pair_weights(pomdp, pols, tp), pair_weights(pomdp, pi_b, tp))
            total += value
        sums[name] = total
    return max(sums.values()), sums


# --- bound catalog ----------------------------------------------------------------------


@dataclass
class BoundInstance:
    """Ingredients for the bound catalog.

    ``pomdp`` is the simulator the candidate ``b`` belongs to.  ``policy`` is the
    roll-out policy, ``pi_prime`` an alternative roll-in policy and ``real`` the
    true system for the two-stage bounds (defaults to ``pomdp``).
    """

    pomdp: Pomdp
    b: BeliefSampler
    pi_b: Policy
    policy: Policy | None = None
    pi_prime: Policy | None = None
    real: Pomdp | None = None
    phi: SufficientStat | None = None
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.policy is None:
            self.policy = self.pi_b
        if self.real is not None and not self.real.same_shape(self.pomdp):
            raise LayerMismatchError("real system and simulator must share layer sizes")

    def cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # shared ingredients
    def q_true(self, policy_key="policy", system="pomdp"):
        pol = getattr(self, policy_key)
        sysm = self.real if system == "real" else self.pomdp
        return self.cached(("q", policy_key, system), lambda: exact_q(sysm, pol))

    def q_single(self, policy_key="policy"):
        pol = getattr(self, policy_key)
        return self.cached(("q1r", policy_key), lambda: exact_single_reset_q(self.pomdp, self.b, pol))

    def q_repeated(self, policy_key="policy"):
        pol = getattr(self, policy_key)
        return self.cached(("qrr", policy_key), lambda: exact_repeated_reset_q(self.pomdp, self.b, pol))

    def occ(self, policy_key="pi_b", system="pomdp"):
        pol = getattr(self, policy_key)
        sysm = self.real if system == "real" else self.pomdp
        return self.cached(("occ", policy_key, system), lambda: occupancies(sysm, pol))

    def belief_eps(self, t):
        return self.cached(("eb", t), lambda: expected_belief_tv(self.pomdp, self.b, self.pi_b, t))

    def obs_eps_max(self):
        H = self.pomdp.horizon
        return self.cached(
            "eo", lambda: max(expected_observable_tv(self.pomdp, self.b, self.pi_b, k) for k in range(H))
        )

    def eps0(self):
        """``max_t E_{real^{pi_b}} TV(M_{Gamma,b}, M_real)``."""
        real = self.real or self.pomdp
        laws = observable_model(self.pomdp, self.b)
        return self.cached(
            "eps0", lambda: max(expected_model_tv(real, laws, self.pi_b, k) for k in range(real.horizon))
        )

    def eps1(self):
        """``max_t E_{Gamma^{pi_b}} TV(b, b*_Gamma)`` over ``t < H``."""
        return self.cached("eps1", lambda: max(self.belief_eps(k) for k in range(self.pomdp.horizon)))


@dataclass(frozen=True)
class BoundCheckRecord:
    name: str
    t: int | None
    lhs: float
    rhs: float
    slack: float
    passed: bool
    details: dict = field(default_factory=dict)
    label: str = ""

    def to_dict(self):
        def enc(x):
            return "inf" if isinstance(x, float) and math.isinf(x) else x

        return {
            "name": self.name,
            "label": self.label,
            "t": self.t,
            "lhs": enc(self.lhs),
            "rhs": enc(self.rhs),
            "slack": enc(self.slack),
            "pass": self.passed,
            "details": {k: enc(v) for k, v in self.details.items()},
        }


def _record(name, inst, t, lhs, rhs, tol=BOUND_TOL, **details):
    slack = rhs - lhs
    return BoundCheckRecord(name, t, float(lhs), float(rhs), float(slack), bool(slack >= -tol), details, inst.label)


def _single_reset(inst, t):
    """E_{pi_b}|Q_1R^pi - Q^pi| <= eps_t V_max."""
    p = inst.pomdp
    lhs = expected_abs_diff(p, inst.q_single(), inst.q_true(), inst.pi_b, t, inst.occ())
    eps = inst.belief_eps(t)
    return _record("single-reset", inst, t, lhs, eps * p.v_max, eps=eps)


def _single_reset_pointwise(inst, t):
    """max over reachable (tau, a) of |Q_1R - Q| - TV(b, b*) V_max <= 0."""
    p = inst.pomdp
    diff = np.abs(inst.q_single().values[t] - inst.q_true().values[t])
    excess = diff - belief_tv_layer(p, inst.b, t)[:, None] * p.v_max
    live = p.filtered.reachable(t)
    lhs = float(np.max(excess[live])) if live.any() else 0.0
    return _record("single-reset-pointwise", inst, t, lhs, 0.0)


def _repeated_reset(inst, t):
    """E_{pi_b}|Q_{M_b}^{pi_b} - Q^{pi_b}| <= eps (H - t) V_max with eps = max_t observable TV."""
    p = inst.pomdp
    q_rr = inst.cached("qrr-b", lambda: exact_repeated_reset_q(p, inst.b, inst.pi_b))
    q = inst.q_true("pi_b")
    lhs = expected_abs_diff(p, q_rr, q, inst.pi_b, t, inst.occ())
    eps = inst.obs_eps_max()
    return _record("repeated-reset", inst, t, lhs, eps * (p.horizon - t) * p.v_max, eps=eps)


def _data_processing(inst, t):
    """max over reachable (tau, a) of TV(M_b, M) - TV(b, b*) <= 0."""
    p = inst.pomdp
    live = p.filtered.reachable(t)
    excess = observable_tv_layer(p, inst.b, t) - belief_tv_layer(p, inst.b, t)[:, None]
    lhs = float(np.max(excess[live])) if live.any() else 0.0
    return _record("data-processing", inst, t, lhs, 0.0, tol=DP_INEQ_TOL)


def _coverage_single_reset(inst, t):
    """E_{pi'}|Q_1R - Q^pi| <= eps * max ratio, eps = E_{pi_b}|Q_1R - Q^pi|."""
    p = inst.pomdp
    q1, q = inst.q_single(), inst.q_true()
    eps = expected_abs_diff(p, q1, q, inst.pi_b, t, inst.occ())
    lhs = expected_abs_diff(p, q1, q, inst.pi_prime, t, inst.occ("pi_prime"))
    cov = history_coverage(p, inst.pi_prime, inst.pi_b, t)
    rhs = math.inf if cov.infinite else eps * cov.value
    return _record("coverage-single-reset", inst, t, lhs, rhs, eps=eps, coverage=cov.value)


def _coverage_repeated_reset(inst, t):
    """E_{pi'}|Q_{M_b}^pi - Q^pi| <= eps V_max sum_{t'>=t} coverage(t')."""
    p = inst.pomdp
    lhs = expected_abs_diff(p, inst.q_repeated(), inst.q_true(), inst.pi_prime, t, inst.occ("pi_prime"))
    eps = inst.obs_eps_max()
    total, readings = repeated_reset_coverage(p, inst.pi_prime, inst.policy, inst.pi_b, t)
    rhs = math.inf if math.isinf(total) else eps * p.v_max * total
    return _record("coverage-repeated-reset", inst, t, lhs, rhs, eps=eps, **{f"coverage_{k}": v for k, v in readings.items()})


def _default_phi(inst):
    p = inst.pomdp
    return SufficientStat.from_rows(p.index, [p.filtered.belief, belief_tables(inst.b)], name="belief-pair")


def _coverage_sufficient_stat(inst, t):
    """E_{pi'}|Q_1R^pi - Q^pi| <= eps V_max max_z P^{pi'}[z]/P^{pi_b}[z]."""
    p = inst.pomdp
    phi = inst.phi or inst.cached("phi", lambda: _default_phi(inst))
    lhs = expected_abs_diff(p, inst.q_single(), inst.q_true(), inst.pi_prime, t, inst.occ("pi_prime"))
    eps = inst.belief_eps(t)
    cov = z_coverage(p, phi, inst.pi_prime, inst.pi_b, t)
    rhs = math.inf if cov.infinite else eps * p.v_max * cov.value
    return _record("coverage-sufficient-stat", inst, t, lhs, rhs, eps=eps, coverage=cov.value)


def _real_lhs(inst, q_model, t):
    real = inst.real or inst.pomdp
    q_real = inst.q_true("pi_b", "real" if inst.real is not None else "pomdp")
    return expected_abs_diff(real, q_model, q_real, inst.pi_b, t, inst.occ("pi_b", "real" if inst.real is not None else "pomdp"))


def _thm_two_stage(inst, t):
    """E_{real^{pi_b}}|Q_1R(Gamma,b)^{pi_b} - Q_real^{pi_b}| <= (2 eps0 + 3 eps1) H V_max."""
    p = inst.pomdp
    q1 = inst.cached("q1r-b", lambda: exact_single_reset_q(p, inst.b, inst.pi_b))
    lhs = _real_lhs(inst, q1, t)
    e0, e1 = inst.eps0(), inst.eps1()
    return _record("thm-2stage", inst, t, lhs, (2 * e0 + 3 * e1) * p.horizon * p.v_max, eps0=e0, eps1=e1)


def _one_shot(inst, t, single):
    p = inst.pomdp
    if single:
        q = inst.cached("q1r-b", lambda: exact_single_reset_q(p, inst.b, inst.pi_b))
    else:
        q = inst.cached("qrr-b", lambda: exact_repeated_reset_q(p, inst.b, inst.pi_b))
    lhs = _real_lhs(inst, q, t)
    e0 = inst.eps0()
    name = "one-shot-single-reset" if single else "one-shot-repeated-reset"
    return _record(name, inst, t, lhs, e0 * p.horizon * p.v_max, eps0=e0)


def trajectory_tv(real: Pomdp, laws: Sequence[np.ndarray], o0_law: np.ndarray, policy: Policy) -> float:
    """TV between full observable trajectory laws of ``real`` and a history MDP ``laws`` under ``policy``."""
    filt = real.filtered
    w_real = filt.lik[0].copy()
    w_model = np.asarray(o0_law, dtype=float).copy()
    for k in range(real.horizon):
        pi = policy.layer_table(real.index, k)
        w_real = (w_real[:, None, None] * pi[:, :, None] * np.nan_to_num(filt.pred[k], nan=0.0)).reshape(-1)
        step = np.zeros_like(laws[k])
        live = w_model > 0
        step[live] = w_model[live, None, None] * pi[live, :, None] * laws[k][live]
        if np.isnan(step).any():
            raise UnreachableHistoryError("model law undefined on a history it reaches")
        w_model = step.reshape(-1)
    return float(0.5 * np.abs(w_real - w_model).sum())


def _subadditivity(inst, t=None):
    """TV(trajectory laws) <= TV(o_0 laws) + sum_t E_{real^{pi_b}} TV(M_{Gamma,b}, M_real)."""
    real = inst.real or inst.pomdp
    p = inst.pomdp
    laws = observable_model(p, inst.b)
    o0 = p.filtered.lik[0]
    lhs = trajectory_tv(real, laws, o0, inst.pi_b)
    rhs = 0.5 * np.abs(o0 - real.filtered.lik[0]).sum() + sum(
        expected_model_tv(real, laws, inst.pi_b, k) for k in range(real.horizon)
    )
    return _record("subadditivity", inst, None, lhs, rhs, tol=DP_INEQ_TOL)


BOUNDS = {
    "single-reset": _single_reset,
    "single-reset-pointwise": _single_reset_pointwise,
    "repeated-reset": _repeated_reset,
    "data-processing": _data_processing,
    "coverage-single-reset": _coverage_single_reset,
    "coverage-repeated-reset": _coverage_repeated_reset,
    "coverage-sufficient-stat": _coverage_sufficient_stat,
    "thm-2stage": _thm_two_stage,
    "one-shot-repeated-reset": lambda inst, t: _one_shot(inst, t, False),
    "one-shot-single-reset": lambda inst, t: _one_shot(inst, t, True),
    "subadditivity": _subadditivity,
}
NEEDS_PI_PRIME = {"coverage-single-reset", "coverage-repeated-reset", "coverage-sufficient-stat"}
STEPLESS = {"subadditivity"}


def check_bound(name: str, inst: BoundInstance, t: int | None = None) -> BoundCheckRecord:
    """Evaluate both sides of the named inequality at step ``t``."""
    if name not in BOUNDS:
        raise BeliefBenchError(f"unknown inequality {name!r}; known: {sorted(BOUNDS)}")
    if name in NEEDS_PI_PRIME and inst.pi_prime is None:
        raise BeliefBenchError(f"{name} needs a roll-in policy pi_prime")
    if name not in STEPLESS and (t is None or not 0 <= t < inst.pomdp.horizon):
        raise LayerMismatchError(f"{name} needs 0 <= t < H, got {t}")
    return BOUNDS[name](inst, t)


def check_all(names: Sequence[str], inst: BoundInstance) -> list[BoundCheckRecord]:
    """Every named inequality at every step ``t < H`` (stepless ones once)."""
    out = []
    for name in names:
        if name in STEPLESS:
            out.append(check_bound(name, inst))
        else:
            out.extend(check_bound(name, inst, t) for t in range(inst.pomdp.horizon))
    return out
