"""Candidate belief-state approximations.

Algorithms only ever call :meth:`BeliefSampler.sample`.  Exact distributions
are kept private to the sampler and are reachable solely through the oracle
functions :func:`exact_dist` and :func:`belief_table`, which tests and metrics
use as ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import (
    InvalidModelError,
    LayerMismatchError,
    MissingExactDistError,
    UnreachableHistoryError,
)
from .pomdp import Distribution, History, Pomdp


class BeliefSampler:
    """Sampling access to ``b(. | tau_t)``.

    Subclasses implement ``_draw``.  ``sample`` returns a single state when
    ``size`` is None and an int64 array otherwise.
    """

    label: str = "belief"
    pomdp: Pomdp | None = None

    def sample(self, history: History, rng: np.random.Generator, size=None):
        out = self._draw(history, rng, 1 if size is None else int(size))
        return int(out[0]) if size is None else out

    def _draw(self, history, rng, size):  # pragma: no cover - interface
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r})"


class FunctionBelief(BeliefSampler):
    """Wrap an arbitrary ``fn(history, rng, size) -> states``; no exact distribution."""

    def __init__(self, fn: Callable, label: str, pomdp: Pomdp | None = None):
        self._fn = fn
        self.label = label
        self.pomdp = pomdp

    def _draw(self, history, rng, size):
        out = np.atleast_1d(np.asarray(self._fn(history, rng, size), dtype=np.int64))
        if self.pomdp is not None:
            s_t = self.pomdp.state_sizes[history.t]
            if out.min() < 0 or out.max() >= s_t:
                raise LayerMismatchError(f"sampler {self.label!r} left S_{history.t}")
        return out


class TableBelief(BeliefSampler):
    """Belief given by an explicit table over the history index of ``pomdp``.

    ``tables[t]`` has shape ``(n_t, |S_t|)``; NaN rows mark histories where the
    candidate is undefined (unreachable in the model it was built from).
    """

    def __init__(self, pomdp: Pomdp, tables, label: str):
        self.pomdp = pomdp
        self.label = label
        tabs = []
        for t, tb in enumerate(tables):
            tb = np.array(tb, dtype=float)
            if tb.shape != (pomdp.index.sizes[t], pomdp.state_sizes[t]):
                raise LayerMismatchError(f"belief table {t} has shape {tb.shape}")
            tb.setflags(write=False)
            tabs.append(tb)
        self._tables = tuple(tabs)
        self._cdf = [None] * len(tabs)

    def _layer_cdf(self, t):
        if self._cdf[t] is None:
            self._cdf[t] = kernels.make_cdf(np.nan_to_num(self._tables[t], nan=0.0))
        return self._cdf[t]

    def _draw(self, history, rng, size):
        idx = self.pomdp.index.index(history)
        return self.sample_nodes(history.t, np.full(size, idx), rng.random(size))

    def sample_nodes(self, t: int, nodes, u) -> np.ndarray:
        """Vectorized draw for layer-``t`` node indices with pre-drawn uniforms."""
        nodes = np.asarray(nodes, dtype=np.int64)
        bad = np.isnan(self._tables[t][nodes, 0])
        if np.any(bad):
            h = self.pomdp.index.history(t, int(nodes[np.argmax(bad)]))
            raise UnreachableHistoryError(f"{self.label}: no belief at history {h}")
        return kernels.draw_rows(self._layer_cdf(t), nodes, u)

    def kernel_tables(self):
        """``(bel_cdf, bel_ok)`` padded over all nodes, as the rollout kernel expects."""
        s_max = max(self.pomdp.state_sizes)
        parts, ok = [], []
        for t, tb in enumerate(self._tables):
            pad = np.zeros((tb.shape[0], s_max))
            pad[:, : tb.shape[1]] = np.nan_to_num(tb, nan=0.0)
            parts.append(pad)
            ok.append(~np.isnan(tb[:, 0]))
        return kernels.make_cdf(np.concatenate(parts)), np.concatenate(ok).astype(np.uint8)


# --- oracle-only access -------------------------------------------------------


def belief_table(b: BeliefSampler, t: int) -> np.ndarray:
    """Exact ``b(. | tau_t)`` for every layer-``t`` history (oracle-only)."""
    if not isinstance(b, TableBelief):
        raise MissingExactDistError(f"candidate {b.label!r} has no exact distribution")
    return b._tables[t]


def belief_tables(b: BeliefSampler) -> tuple[np.ndarray, ...]:
    if not isinstance(b, TableBelief):
        raise MissingExactDistError(f"candidate {b.label!r} has no exact distribution")
    return b._tables


def exact_dist(b: BeliefSampler, history: History) -> Distribution:
    """Exact distribution of candidate ``b`` at ``history`` (oracle-only)."""
    row = belief_table(b, history.t)[b.pomdp.index.index(history)]
    if np.isnan(row[0]):
        raise UnreachableHistoryError(f"{b.label}: no belief at history {history}")
    return Distribution(f"S{history.t}", row / row.sum())


def has_exact(b: BeliefSampler) -> bool:
    return isinstance(b, TableBelief)


def make_exact_belief(pomdp: Pomdp) -> TableBelief:
    """``b*`` for ``pomdp``: the filtered posterior at every history."""
    return TableBelief(pomdp, pomdp.filtered.belief, "exact")


# --- corruptions --------------------------------------------------------------


def _queue_countdown_zero(pomdp: Pomdp, t: int) -> np.ndarray:
    # queue layout: state = countdown + K * event_flag, observation 1 is an event
    k = pomdp.state_sizes[t] // 2
    return k * (pomdp.index.last_obs(t) == 1)


POINT_MASS_RULES: dict[str, Callable[[Pomdp, int], np.ndarray]] = {
    "queue-countdown-zero": _queue_countdown_zero,
}

MODES = ("mix-with-uniform", "point-mass-at", "swap-at-step", "always-state-zero", "random-dirichlet")


@dataclass(frozen=True)
class CorruptionSpec:
    """How to derive a wrong candidate from an exact belief.

    ``steps`` restricts the corruption to the listed layers (None means every
    layer; ``swap-at-step`` always acts on ``t0`` only).
    """

    mode: str
    lam: float = 0.0
    state: int | None = None
    rule: str | None = None
    t0: int | None = None
    perm: tuple[int, ...] | None = None
    seed: int = 0
    weight: float = 1.0
    steps: frozenset | None = None
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidModelError(f"unknown corruption mode {self.mode!r}", "mode")
        if self.mode == "mix-with-uniform" and not 0.0 <= self.lam <= 1.0:
            raise InvalidModelError(f"lambda {self.lam} outside [0, 1]", "lam")
        if self.mode == "random-dirichlet" and not 0.0 <= self.weight <= 1.0:
            raise InvalidModelError(f"weight {self.weight} outside [0, 1]", "weight")
        if self.mode == "point-mass-at":
            if (self.state is None) == (self.rule is None):
                raise InvalidModelError("give exactly one of state or rule", "state")
            if self.rule is not None and self.rule not in POINT_MASS_RULES:
                raise InvalidModelError(f"unknown rule {self.rule!r}", "rule")
        if self.mode == "swap-at-step":
            if self.t0 is None or self.perm is None:
                raise InvalidModelError("swap-at-step needs t0 and perm", "perm")
            perm = tuple(int(p) for p in self.perm)
            if sorted(perm) != list(range(len(perm))):
                raise InvalidModelError(f"{list(perm)} is not a permutation", "perm")
            object.__setattr__(self, "perm", perm)
            object.__setattr__(self, "steps", frozenset([int(self.t0)]))
        if self.steps is not None:
            object.__setattr__(self, "steps", frozenset(int(s) for s in self.steps))

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.mode == "mix-with-uniform":
            core = f"mix-with-uniform({self.lam:g})"
        elif self.mode == "point-mass-at":
            core = f"point-mass-at({self.rule if self.rule else self.state})"
        elif self.mode == "swap-at-step":
            core = f"swap-at-step({self.t0},{list(self.perm)})"
        elif self.mode == "random-dirichlet":
            core = f"random-dirichlet({self.seed},{self.weight:g})"
        else:
            core = "always-state-zero"
        if self.steps is not None and self.mode != "swap-at-step":
            core += "@" + ",".join(str(s) for s in sorted(self.steps))
        return core

    def applies(self, t: int) -> bool:
        return self.steps is None or t in self.steps


def _point_mass(n_nodes, n_states, states):
    out = np.zeros((n_nodes, n_states))
    out[np.arange(n_nodes), states] = 1.0
    return out


def corrupt_table(pomdp: Pomdp, tb: np.ndarray, t: int, spec: CorruptionSpec) -> np.ndarray:
    """Apply ``spec`` to one layer table (NaN rows stay NaN unless the rule is total)."""
    n, S = tb.shape
    if spec.mode == "mix-with-uniform":
        return (1.0 - spec.lam) * tb + spec.lam / S
    if spec.mode == "always-state-zero":
        return _point_mass(n, S, np.zeros(n, dtype=int))
    if spec.mode == "point-mass-at":
        if spec.rule is not None:
            states = np.asarray(POINT_MASS_RULES[spec.rule](pomdp, t), dtype=int)
        else:
            if not 0 <= spec.state < S:
                raise InvalidModelError(f"state {spec.state} outside S_{t}", "state")
            states = np.full(n, spec.state)
        return _point_mass(n, S, states)
    if spec.mode == "swap-at-step":
        if len(spec.perm) != S:
            raise InvalidModelError(f"permutation has {len(spec.perm)} entries, S_{t} has {S}", "perm")
        return tb[:, list(spec.perm)]
    # random-dirichlet: one seeded stream per (seed, layer), one row per history
    rng = np.random.default_rng([spec.seed, t])
    noise = rng.dirichlet(np.ones(S), size=n)
    return (1.0 - spec.weight) * tb + spec.weight * noise


def corrupt_belief(base: BeliefSampler, spec: CorruptionSpec) -> TableBelief:
    """Candidate equal to ``base`` off ``spec.steps`` and transformed on them."""
    tables = belief_tables(base)
    pomdp = base.pomdp
    if spec.mode == "swap-at-step" and not 0 <= spec.t0 <= pomdp.horizon:
        raise InvalidModelError(f"t0 {spec.t0} outside 0..{pomdp.horizon}", "t0")
    out = []
    for t, tb in enumerate(tables):
        out.append(corrupt_table(pomdp, tb, t, spec) if spec.applies(t) else tb)
    return TableBelief(pomdp, out, spec.label)


def build_candidates(pomdp: Pomdp, specs, include_exact: bool = True) -> list[TableBelief]:
    """Exact belief (optional) followed by one corrupted candidate per spec."""
    exact = make_exact_belief(pomdp)
    cands = [exact] if include_exact else []
    for spec in specs:
        if spec is None or spec == "exact":
            if not include_exact:
                cands.append(exact)
            continue
        cands.append(corrupt_belief(exact, spec))
    return cands
