"""Layered tabular POMDPs, histories, policies and the exact history-MDP oracles.

Histories are addressed through a mixed-radix index over the full product of
observation and action sequences (:class:`HistoryIndex`).  Layer ``t+1`` is laid
out as ``(parent, action, observation)`` in row-major order, so any array of
shape ``(n_t, A, |O_{t+1}|)`` reshapes directly onto the next layer.  All exact
dynamic programs in the package are vectorized over these layers.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import (
    EnumerationCapError,
    InvalidModelError,
    LayerMismatchError,
    UnreachableHistoryError,
)

PROB_TOL = 1e-12
DP_TOL = 1e-10
UNREACHABLE_TOL = 1e-300
DEFAULT_CAP = 10**7


def enumeration_cap() -> int:
    """Node cap for exact enumeration; ``BELIEF_BENCH_CAP`` overrides the default."""
    raw = os.environ.get("BELIEF_BENCH_CAP")
    return int(raw) if raw else DEFAULT_CAP


def _check_prob_rows(arr, name):
    arr = np.asarray(arr, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidModelError("entries must be finite and non-negative", name)
    bad = np.abs(arr.sum(axis=-1) - 1.0) > PROB_TOL
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidModelError(f"row {list(where)} does not sum to 1", name)
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class History:
    """Observable history ``(o_0..o_t, a_0..a_{t-1})``; hashable, used as a table key."""

    obs: tuple[int, ...]
    acts: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obs", tuple(int(o) for o in self.obs))
        object.__setattr__(self, "acts", tuple(int(a) for a in self.acts))
        if len(self.obs) != len(self.acts) + 1:
            raise InvalidModelError(
                f"history needs len(obs) == len(acts) + 1, got {len(self.obs)} and {len(self.acts)}"
            )

    @property
    def t(self) -> int:
        return len(self.acts)

    def extend(self, action: int, obs: int) -> "History":
        return History(self.obs + (int(obs),), self.acts + (int(action),))

    def prefix(self, t: int) -> "History":
        return History(self.obs[: t + 1], self.acts[:t])

    def render(self) -> str:
        parts = [str(self.obs[0])]
        for a, o in zip(self.acts, self.obs[1:]):
            parts += [str(a), str(o)]
        return "-".join(parts)

    @classmethod
    def parse(cls, text: str) -> "History":
        tokens = [int(x) for x in text.strip().split("-")]
        if len(tokens) % 2 == 0:
            raise InvalidModelError(f"cannot parse history {text!r}")
        return cls(tuple(tokens[0::2]), tuple(tokens[1::2]))

    def __str__(self):
        return self.render()


class HistoryIndex:
    """Mixed-radix enumeration of every observation/action sequence per layer."""

    def __init__(self, obs_sizes: Sequence[int], num_actions: int, cap: int | None = None):
        self.obs_sizes = tuple(int(o) for o in obs_sizes)
        self.num_actions = int(num_actions)
        self.horizon = len(self.obs_sizes) - 1
        self.cap = enumeration_cap() if cap is None else int(cap)
        sizes = [self.obs_sizes[0]]
        for t in range(1, self.horizon + 1):
            sizes.append(sizes[-1] * self.num_actions * self.obs_sizes[t])
        self.sizes = tuple(sizes)
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(sizes)[:-1]]))
        self.total = int(sum(sizes))

    @property
    def key(self):
        return (self.obs_sizes, self.num_actions)

    def check(self, t: int | None = None) -> None:
        t = self.horizon if t is None else t
        if self.sizes[t] > self.cap:
            factors = [str(self.obs_sizes[0])] + [
                f"({self.num_actions}*{self.obs_sizes[k]})" for k in range(1, t + 1)
            ]
            raise EnumerationCapError(
                f"|O_0|*prod(|A|*|O_k|, k<={t}) = {'*'.join(factors)} = {self.sizes[t]} "
                f"exceeds the enumeration cap {self.cap}"
            )

    def index(self, history: History) -> int:
        self.validate(history)
        idx = history.obs[0]
        for k, a in enumerate(history.acts):
            idx = (idx * self.num_actions + a) * self.obs_sizes[k + 1] + history.obs[k + 1]
        return idx

    def validate(self, history: History) -> None:
        if history.t > self.horizon:
            raise LayerMismatchError(f"history {history} is longer than the horizon {self.horizon}")
        for k, o in enumerate(history.obs):
            if not 0 <= o < self.obs_sizes[k]:
                raise LayerMismatchError(f"observation {o} at step {k} is outside O_{k}")
        for a in history.acts:
            if not 0 <= a < self.num_actions:
                raise LayerMismatchError(f"action {a} is outside the action set")

    def history(self, t: int, idx: int) -> History:
        obs, acts = [], []
        idx = int(idx)
        for k in range(t, 0, -1):
            idx, o = divmod(idx, self.obs_sizes[k])
            idx, a = divmod(idx, self.num_actions)
            obs.append(o)
            acts.append(a)
        obs.append(idx)
        return History(tuple(reversed(obs)), tuple(reversed(acts)))

    def last_obs(self, t: int) -> np.ndarray:
        return np.arange(self.sizes[t]) % self.obs_sizes[t]

    def last_action(self, t: int) -> np.ndarray:
        return (np.arange(self.sizes[t]) // self.obs_sizes[t]) % self.num_actions

    def parent(self, t: int) -> np.ndarray:
        return np.arange(self.sizes[t]) // (self.obs_sizes[t] * self.num_actions)

    def obs_matrix(self, t: int) -> np.ndarray:
        """Observation sequences of every layer-``t`` node, shape ``(n_t, t+1)``."""
        idx = np.arange(self.sizes[t])
        cols = []
        for k in range(t, 0, -1):
            idx, o = np.divmod(idx, self.obs_sizes[k])
            idx = idx // self.num_actions
            cols.append(o)
        cols.append(idx)
        return np.stack(cols[::-1], axis=1)

    def act_matrix(self, t: int) -> np.ndarray:
        idx = np.arange(self.sizes[t])
        cols = []
        for k in range(t, 0, -1):
            idx = idx // self.obs_sizes[k]
            idx, a = np.divmod(idx, self.num_actions)
            cols.append(a)
        if not cols:
            return np.zeros((self.sizes[t], 0), dtype=int)
        return np.stack(cols[::-1], axis=1)

    def subtree(self, t: int, idx: int, depth: int) -> range:
        """Contiguous index range of the layer ``t+depth`` descendants of node ``idx``."""
        lo, hi = idx, idx + 1
        for k in range(t + 1, t + depth + 1):
            width = self.num_actions * self.obs_sizes[k]
            lo, hi = lo * width, hi * width
        return range(lo, hi)


@dataclass(frozen=True, eq=False)
class Distribution:
    """A probability vector tagged with its domain (``"S<t>"`` or ``"O<t>"``)."""

    domain: str
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(_check_prob_rows(self.probs, self.domain)))

    def __len__(self):
        return len(self.probs)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)


@dataclass(frozen=True, eq=False)
class FilterResult:
    """Exact forward filter over every history in the index.

    ``belief[t]`` has NaN rows at unreachable histories; ``pred[t][h, a]`` is the
    observable model ``M(. | tau_t, a)`` and ``lik[t]`` is ``P(o_{0:t} | a_{0:t-1})``.
    """

    belief: tuple[np.ndarray, ...]
    lik: tuple[np.ndarray, ...]
    pred: tuple[np.ndarray, ...]

    def reachable(self, t: int) -> np.ndarray:
        return self.lik[t] > 0


@dataclass(frozen=True, eq=False)
class Pomdp:
    """Layered finite-horizon POMDP.

    ``transition[t]`` has shape ``(|S_t|, |A|, |S_{t+1}|)``, ``emission[t]`` shape
    ``(|S_t|, |O_t|)``.  ``reward[t]`` maps ``O_t`` to ``[0, r_max]``; ``reward[0]``
    is all zeros because ``o_0`` carries no reward.
    """

    init: np.ndarray
    transition: tuple
    emission: tuple
    reward: tuple
    r_max: float
    name: str = ""

    def __post_init__(self):
        init = _check_prob_rows(self.init, "init")
        if init.ndim != 1:
            raise InvalidModelError("must be a vector", "init")
        H = len(self.transition)
        if H < 1:
            raise InvalidModelError("horizon must be at least 1", "transition")
        if len(self.emission) != H + 1:
            raise InvalidModelError(f"expected {H + 1} emission layers", "emission")
        rewards = list(self.reward)
        if len(rewards) == H:
            rewards = [np.zeros(np.shape(self.emission[0])[1])] + rewards
        if len(rewards) != H + 1:
            raise InvalidModelError(f"expected {H} reward layers", "reward")
        trans, emis = [], []
        s_prev = init.shape[0]
        n_act = None
        for t, P in enumerate(self.transition):
            P = _check_prob_rows(P, f"transition[{t}]")
            if P.ndim != 3 or P.shape[0] != s_prev:
                raise InvalidModelError(
                    f"expected shape ({s_prev}, A, S_{t + 1}), got {P.shape}", f"transition[{t}]"
                )
            if n_act is None:
                n_act = P.shape[1]
            elif P.shape[1] != n_act:
                raise InvalidModelError("action count differs across layers", f"transition[{t}]")
            trans.append(_frozen(P))
            s_prev = P.shape[2]
        s_sizes = [init.shape[0]] + [P.shape[2] for P in trans]
        for t, E in enumerate(self.emission):
            E = _check_prob_rows(E, f"emission[{t}]")
            if E.ndim != 2 or E.shape[0] != s_sizes[t]:
                raise InvalidModelError(
                    f"expected shape ({s_sizes[t]}, O_{t}), got {E.shape}", f"emission[{t}]"
                )
            emis.append(_frozen(E))
        r_max = float(self.r_max)
        if not np.isfinite(r_max) or r_max < 0:
            raise InvalidModelError("must be a finite non-negative number", "r_max")
        rew = []
        for t, R in enumerate(rewards):
            R = np.asarray(R, dtype=float)
            if R.shape != (emis[t].shape[1],):
                raise InvalidModelError(f"expected {emis[t].shape[1]} values", f"reward[{t}]")
            if np.any(R < 0) or np.any(R > r_max) or np.any(~np.isfinite(R)):
                raise InvalidModelError(f"values must lie in [0, {r_max}]", f"reward[{t}]")
            rew.append(_frozen(R))
        if np.any(rew[0] != 0):
            raise InvalidModelError("o_0 carries no reward", "reward[0]")
        object.__setattr__(self, "init", _frozen(init))
        object.__setattr__(self, "transition", tuple(trans))
        object.__setattr__(self, "emission", tuple(emis))
        object.__setattr__(self, "reward", tuple(rew))
        object.__setattr__(self, "r_max", r_max)

    @property
    def horizon(self) -> int:
        return len(self.transition)

    @property
    def num_actions(self) -> int:
        return self.transition[0].shape[1]

    @property
    def state_sizes(self) -> tuple[int, ...]:
        return tuple(E.shape[0] for E in self.emission)

    @property
    def obs_sizes(self) -> tuple[int, ...]:
        return tuple(E.shape[1] for E in self.emission)

    @property
    def v_max(self) -> float:
        return self.horizon * self.r_max

    @cached_property
    def index(self) -> HistoryIndex:
        return HistoryIndex(self.obs_sizes, self.num_actions)

    @cached_property
    def obs_kernel(self) -> tuple[np.ndarray, ...]:
        """``PE[t][s, a, o] = sum_s' P(s'|s,a) E(o|s')`` for ``t < H``."""
        return tuple(
            np.einsum("sap,po->sao", self.transition[t], self.emission[t + 1])
            for t in range(self.horizon)
        )

    @cached_property
    def trans_cdf_rows(self) -> tuple[np.ndarray, ...]:
        """Per-layer cumulative transition rows indexed by ``s * A + a``."""
        return tuple(kernels.make_cdf(P.reshape(-1, P.shape[2])) for P in self.transition)

    @cached_property
    def emis_cdf_rows(self) -> tuple[np.ndarray, ...]:
        return tuple(kernels.make_cdf(E) for E in self.emission)

    @cached_property
    def padded(self) -> dict:
        """Padded cumulative tables consumed by the sampling kernels."""
        H, A = self.horizon, self.num_actions
        s_max, o_max = max(self.state_sizes), max(self.obs_sizes)
        trans = np.zeros((H, s_max, A, s_max))
        for t, P in enumerate(self.transition):
            trans[t, : P.shape[0], :, : P.shape[2]] = P
        emis = np.zeros((H + 1, s_max, o_max))
        reward = np.zeros((H + 1, o_max))
        for t, E in enumerate(self.emission):
            emis[t, : E.shape[0], : E.shape[1]] = E
            reward[t, : E.shape[1]] = self.reward[t]
        init = np.zeros(s_max)
        init[: len(self.init)] = self.init
        return {
            "trans_cdf": kernels.make_cdf(trans),
            "emis_cdf": kernels.make_cdf(emis),
            "init_cdf": kernels.make_cdf(init),
            "reward": np.ascontiguousarray(reward),
            "s_max": s_max,
        }

    @cached_property
    def filtered(self) -> FilterResult:
        return forward_filter(self)

    def same_shape(self, other: "Pomdp") -> bool:
        return (
            self.state_sizes == other.state_sizes
            and self.obs_sizes == other.obs_sizes
            and self.num_actions == other.num_actions
        )


def forward_filter(pomdp: Pomdp) -> FilterResult:
    """Vectorized exact filter over all histories (checks the enumeration cap)."""
    index = pomdp.index
    index.check()
    E0 = pomdp.emission[0]
    joint = pomdp.init[:, None] * E0  # (S0, O0)
    m0 = joint.sum(axis=0)
    ok = m0 >= UNREACHABLE_TOL
    with np.errstate(invalid="ignore", divide="ignore"):
        b = (joint / m0).T
    b[~ok] = np.nan
    beliefs, liks, preds = [b], [np.where(ok, m0, 0.0)], []
    for t in range(pomdp.horizon):
        P, E = pomdp.transition[t], pomdp.emission[t + 1]
        b = beliefs[t]
        pred_s = np.einsum("hs,sap->hap", b, P)
        joint = pred_s[:, :, :, None] * E[None, None, :, :]  # (n, A, S', O')
        m = joint.sum(axis=2)  # (n, A, O')
        preds.append(m)
        with np.errstate(invalid="ignore", divide="ignore"):
            nb = joint / m[:, :, None, :]
        n_next = index.sizes[t + 1]
        nb = nb.transpose(0, 1, 3, 2).reshape(n_next, -1)
        m_flat = m.reshape(-1)
        parent_ok = np.repeat(liks[t] > 0, pomdp.num_actions * E.shape[1])
        ok = parent_ok & (np.nan_to_num(m_flat, nan=0.0) >= UNREACHABLE_TOL)
        nb[~ok] = np.nan
        lik = np.where(ok, np.repeat(liks[t], pomdp.num_actions * E.shape[1]) * np.nan_to_num(m_flat), 0.0)
        beliefs.append(nb)
        liks.append(lik)
    return FilterResult(tuple(beliefs), tuple(liks), tuple(preds))


@dataclass(frozen=True, eq=False)
class Policy:
    """History-dependent action distributions.

    Kinds: ``uniform``; ``observation-markov`` (``tables[t]`` of shape ``(|O_t|, A)``);
    ``history-tabular`` (explicit rows per :class:`History` plus a total ``default``).
    """

    kind: str
    num_actions: int
    tables: tuple = ()
    entries: Mapping = field(default_factory=dict)
    default: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "observation-markov", "history-tabular"):
            raise InvalidModelError(f"unknown policy kind {self.kind!r}", "policy.kind")
        if self.kind == "observation-markov":
            object.__setattr__(
                self,
                "tables",
                tuple(
                    _frozen(_check_prob_rows(tb, f"policy.table[{t}]"))
                    for t, tb in enumerate(self.tables)
                ),
            )
            for t, tb in enumerate(self.tables):
                if tb.ndim != 2 or tb.shape[1] != self.num_actions:
                    raise InvalidModelError("rows must have one entry per action", f"policy.table[{t}]")
        if self.kind == "history-tabular":
            if self.default is None:
                raise InvalidModelError("history-tabular policies need a default row", "policy.default")
            default = _frozen(_check_prob_rows(self.default, "policy.default"))
            if default.shape != (self.num_actions,):
                raise InvalidModelError("wrong length", "policy.default")
            object.__setattr__(self, "default", default)
            entries = {}
            for h, row in self.entries.items():
                row = _frozen(_check_prob_rows(row, f"policy.entries[{h}]"))
                if row.shape != (self.num_actions,):
                    raise InvalidModelError("wrong length", f"policy.entries[{h}]")
                entries[h] = row
            object.__setattr__(self, "entries", entries)

    @classmethod
    def uniform(cls, num_actions: int) -> "Policy":
        return cls("uniform", num_actions)

    @classmethod
    def observation_markov(cls, tables) -> "Policy":
        tables = [np.asarray(tb, dtype=float) for tb in tables]
        return cls("observation-markov", tables[0].shape[1], tables=tuple(tables))

    @classmethod
    def history_tabular(cls, entries: Mapping[History, Sequence[float]], default) -> "Policy":
        default = np.asarray(default, dtype=float)
        return cls("history-tabular", len(default), entries=dict(entries), default=default)

    def probs(self, history: History) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(self.num_actions, 1.0 / self.num_actions)
        if self.kind == "observation-markov":
            if history.t >= len(self.tables):
                raise LayerMismatchError(f"policy has no table for step {history.t}")
            return self.tables[history.t][history.obs[-1]]
        return self.entries.get(history, self.default)

    def layer_table(self, index: HistoryIndex, t: int) -> np.ndarray:
        """Action distributions for every layer-``t`` node, shape ``(n_t, A)``."""
        if self.num_actions != index.num_actions:
            raise LayerMismatchError("policy and model disagree on the action count")
        n = index.sizes[t]
        if self.kind == "uniform":
            return np.full((n, self.num_actions), 1.0 / self.num_actions)
        if self.kind == "observation-markov":
            if t >= len(self.tables):
                raise LayerMismatchError(f"policy has no table for step {t}")
            if self.tables[t].shape[0] != index.obs_sizes[t]:
                raise LayerMismatchError(f"policy table {t} does not cover O_{t}")
            return self.tables[t][index.last_obs(t)]
        table = np.tile(self.default, (n, 1))
        for h, row in self.entries.items():
            if h.t == t:
                table[index.index(h)] = row
        return table


@dataclass(frozen=True)
class Trajectory:
    latent: tuple[int, ...]
    obs: tuple[int, ...]
    acts: tuple[int, ...]
    rewards: tuple[float, ...]

    def history(self, t: int) -> History:
        return History(self.obs[: t + 1], self.acts[:t])


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Array form of many episodes: ``latent``/``obs`` are ``(count, H+1)``, ``acts``/``rewards`` ``(count, H)``."""

    latent: np.ndarray
    obs: np.ndarray
    acts: np.ndarray
    rewards: np.ndarray

    def __len__(self):
        return self.latent.shape[0]

    def __getitem__(self, i) -> Trajectory:
        return Trajectory(
            tuple(int(x) for x in self.latent[i]),
            tuple(int(x) for x in self.obs[i]),
            tuple(int(x) for x in self.acts[i]),
            tuple(float(x) for x in self.rewards[i]),
        )

    def history(self, i: int, t: int) -> History:
        return History(tuple(self.obs[i, : t + 1]), tuple(self.acts[i, :t]))

    def strip_latent(self) -> "TrajectoryBatch":
        """Observable-only copy (latent column filled with -1)."""
        return TrajectoryBatch(np.full_like(self.latent, -1), self.obs, self.acts, self.rewards)


def _cat(cdf_row, u) -> int:
    return int(kernels.draw(cdf_row, u)[0])


def sample_trajectory(pomdp: Pomdp, policy: Policy, rng: np.random.Generator) -> Trajectory:
    """One episode, drawing ``2 + 3H`` uniforms in the same layout as :func:`sample_trajectories`."""
    H = pomdp.horizon
    u = rng.random(2 + 3 * H)
    s = _cat(kernels.make_cdf(pomdp.init), u[0])
    o = _cat(pomdp.emis_cdf_rows[0][s], u[1])
    latent, obs, acts, rewards = [s], [o], [], []
    history = History((o,))
    for t in range(H):
        a = _cat(kernels.make_cdf(policy.probs(history)), u[2 + 3 * t])
        s = _cat(pomdp.trans_cdf_rows[t][s * pomdp.num_actions + a], u[3 + 3 * t])
        o = _cat(pomdp.emis_cdf_rows[t + 1][s], u[4 + 3 * t])
        latent.append(s)
        obs.append(o)
        acts.append(a)
        rewards.append(float(pomdp.reward[t + 1][o]))
        history = history.extend(a, o)
    return Trajectory(tuple(latent), tuple(obs), tuple(acts), tuple(rewards))


def policy_cdf_table(pomdp: Pomdp, policy: Policy) -> np.ndarray:
    """Cumulative policy rows for every node of every layer (last layer is filler)."""
    index = pomdp.index
    rows = [policy.layer_table(index, t) for t in range(pomdp.horizon)]
    rows.append(np.full((index.sizes[-1], pomdp.num_actions), 1.0 / pomdp.num_actions))
    return kernels.make_cdf(np.concatenate(rows, axis=0))


def sample_trajectories(
    pomdp: Pomdp, policy: Policy, count: int, rng: np.random.Generator, backend: str | None = None
) -> TrajectoryBatch:
    """``count`` episodes at once; identical to repeated :func:`sample_trajectory` calls.

    Uses the sampling kernel when the history index fits under the cap, else
    falls back to the per-episode loop.
    """
    H = pomdp.horizon
    try:
        pomdp.index.check()
    except EnumerationCapError:
        trajs = [sample_trajectory(pomdp, policy, rng) for _ in range(count)]
        return TrajectoryBatch(
            np.array([tr.latent for tr in trajs], dtype=np.int64).reshape(count, H + 1),
            np.array([tr.obs for tr in trajs], dtype=np.int64).reshape(count, H + 1),
            np.array([tr.acts for tr in trajs], dtype=np.int64).reshape(count, H),
            np.array([tr.rewards for tr in trajs], dtype=float).reshape(count, H),
        )
    pad = pomdp.padded
    u = rng.random((count, 2 + 3 * H))
    latent = np.zeros((count, H + 1), dtype=np.int64)
    obs = np.zeros((count, H + 1), dtype=np.int64)
    acts = np.zeros((count, H), dtype=np.int64)
    kernels.sample_paths(
        H,
        pad["init_cdf"],
        policy_cdf_table(pomdp, policy),
        pad["trans_cdf"],
        pad["emis_cdf"],
        np.asarray(pomdp.index.offsets, dtype=np.int64),
        np.asarray(pomdp.obs_sizes, dtype=np.int64),
        u,
        latent,
        obs,
        acts,
        backend=backend,
    )
    rewards = pad["reward"][np.arange(1, H + 1)[None, :], obs[:, 1:]]
    return TrajectoryBatch(latent, obs, acts, rewards)


def exact_belief(pomdp: Pomdp, history: History) -> Distribution:
    """Posterior over ``S_t`` given ``history`` by forward filtering along the history."""
    pomdp.index.validate(history)
    b = pomdp.init * pomdp.emission[0][:, history.obs[0]]
    z = b.sum()
    if z < UNREACHABLE_TOL:
        raise UnreachableHistoryError(f"history {history} is unreachable at step 0")
    b = b / z
    for k, a in enumerate(history.acts):
        b = (b @ pomdp.transition[k][:, a, :]) * pomdp.emission[k + 1][:, history.obs[k + 1]]
        z = b.sum()
        if z < UNREACHABLE_TOL:
            raise UnreachableHistoryError(f"history {history} is unreachable at step {k + 1}")
        b = b / z
    return Distribution(f"S{history.t}", b)


@dataclass(frozen=True, eq=False)
class ObservableLaw:
    """Next-observation law ``M(. | tau_t, a_t)``: exact vector or a sampling closure."""

    domain: str
    exact: np.ndarray | None = None
    sampler: object = None

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    def sample(self, rng, size=1):
        if self.sampler is not None:
            return self.sampler(rng, size)
        return kernels.draw(kernels.make_cdf(self.exact), rng.random(size))


def propagate_states(pomdp: Pomdp, t: int, states, action, u_trans, u_emis):
    """Push latent samples one step: ``s_{t+1} ~ P(.|s_t, a)``, ``o_{t+1} ~ E(.|s_{t+1})``."""
    states = np.asarray(states, dtype=np.int64)
    action = np.broadcast_to(np.asarray(action, dtype=np.int64), states.shape)
    nxt = kernels.draw_rows(pomdp.trans_cdf_rows[t], states * pomdp.num_actions + action, u_trans)
    obs = kernels.draw_rows(pomdp.emis_cdf_rows[t + 1], nxt, u_emis)
    return nxt, obs


def observable_next_obs(pomdp: Pomdp, belief, history: History, action: int) -> ObservableLaw:
    """``M_{Gamma,b}(. | history, action)``.

    ``belief`` may be a :class:`Distribution`/vector over ``S_t`` (exact result) or
    any object with a ``sample(history, rng, size)`` method (sampling closure).
    """
    t = history.t
    if t >= pomdp.horizon:
        raise LayerMismatchError(f"no observation follows step {t} (horizon {pomdp.horizon})")
    if not 0 <= action < pomdp.num_actions:
        raise LayerMismatchError(f"action {action} is outside the action set")
    domain = f"O{t + 1}"
    if hasattr(belief, "sample"):

        def sampler(rng, size=1):
            states = np.atleast_1d(belief.sample(history, rng, size))
            u = rng.random((2, len(states)))
            return propagate_states(pomdp, t, states, action, u[0], u[1])[1]

        return ObservableLaw(domain, sampler=sampler)
    if isinstance(belief, Distribution):
        if belief.domain != f"S{t}":
            raise LayerMismatchError(f"belief lives on {belief.domain}, history on S{t}")
    b = np.asarray(belief, dtype=float)
    if b.shape != (pomdp.state_sizes[t],):
        raise LayerMismatchError(f"belief has {b.shape} entries, S_{t} has {pomdp.state_sizes[t]}")
    return ObservableLaw(domain, exact=b @ pomdp.obs_kernel[t][:, action, :])


def occupancies(pomdp: Pomdp, policy: Policy, upto: int | None = None) -> list[np.ndarray]:
    """``P^pi[tau_t]`` for every node of layers ``0..upto``."""
    upto = pomdp.horizon if upto is None else upto
    filt = pomdp.filtered
    w = [filt.lik[0].copy()]
    for t in range(upto):
        pi = policy.layer_table(pomdp.index, t)
        M = np.nan_to_num(filt.pred[t], nan=0.0)
        w.append((w[t][:, None, None] * pi[:, :, None] * M).reshape(-1))
    return w


def enumerate_histories(pomdp: Pomdp, policy: Policy, t: int) -> list[tuple[History, float]]:
    """Every history with positive probability under ``policy`` at step ``t``, with that probability."""
    if not 0 <= t <= pomdp.horizon:
        raise LayerMismatchError(f"step {t} outside 0..{pomdp.horizon}")
    pomdp.index.check(t)
    w = occupancies(pomdp, policy, t)[t]
    return [(pomdp.index.history(t, i), float(w[i])) for i in np.flatnonzero(w > 0)]


@dataclass(frozen=True, eq=False)
class QTable:
    """Q-values on the history index: ``values[t]`` has shape ``(n_t, A)`` for ``t < H``.

    Entries at histories the defining process cannot reach are NaN.
    """

    index: HistoryIndex
    values: tuple
    provenance: str

    def value(self, history: History, action: int) -> float:
        if history.t >= len(self.values):
            return 0.0
        return float(self.values[history.t][self.index.index(history), action])

    def layer(self, t: int) -> np.ndarray:
        return self.values[t]

    def rows(self, weights: Sequence[np.ndarray] | None = None) -> Iterator[tuple[str, int, int, float]]:
        """``(history, t, action, value)`` for finite entries (optionally with positive weight)."""
        for t, q in enumerate(self.values):
            keep = np.isfinite(q)
            if weights is not None:
                keep &= weights[t] > 0
            for i, a in zip(*np.nonzero(keep)):
                yield self.index.history(t, i).render(), t, int(a), float(q[i, a])

    def to_csv(self, fh, weights=None) -> None:
        fh.write("history,t,action,value\n")
        for h, t, a, v in self.rows(weights):
            fh.write(f"{h},{t},{a},{v!r}\n")


def history_mdp_q(pomdp: Pomdp, trans: Sequence[np.ndarray], policy: Policy, provenance: str) -> QTable:
    """Backward induction on the history MDP with per-layer next-observation laws ``trans[t]``.

    Zero-probability branches are skipped; a NaN law row marks an undefined node.
    """
    index = pomdp.index
    H, A = pomdp.horizon, pomdp.num_actions
    values = [None] * H
    v_next = np.zeros(index.sizes[H])
    for t in reversed(range(H)):
        M = trans[t]
        n, O = M.shape[0], M.shape[2]
        undefined = np.isnan(M).any(axis=(1, 2))
        cont = pomdp.reward[t + 1][None, None, :] + v_next.reshape(n, A, O)
        with np.errstate(invalid="ignore"):
            q = np.where(M > 0, M * cont, 0.0).sum(axis=2)
        q[undefined] = np.nan
        values[t] = q
        pi = policy.layer_table(index, t)
        with np.errstate(invalid="ignore"):
            v_next = np.where(pi > 0, pi * q, 0.0).sum(axis=1)
        v_next[undefined] = np.nan
    return QTable(index, tuple(values), provenance)


def exact_q(pomdp: Pomdp, policy: Policy) -> QTable:
    """``Q_Gamma^pi`` on every reachable history (NaN elsewhere); zero at ``t = H``."""
    return history_mdp_q(pomdp, pomdp.filtered.pred, policy, "exact_q")


# --- random instances ---------------------------------------------------------

GENERATOR_LIMITS = {"states": 6, "obs": 5, "actions": 3, "horizon": 5}


def _sizes(value, lo, hi, count, rng, limit, name):
    if value is None:
        return [int(x) for x in rng.integers(lo, hi + 1, size=count)]
    vals = [int(value)] * count if np.isscalar(value) else [int(v) for v in value]
    if len(vals) != count or min(vals) < 1 or max(vals) > limit:
        raise InvalidModelError(f"{name} sizes must be {count} values in 1..{limit}")
    return vals


def random_pomdp(
    seed,
    *,
    horizon: int | None = None,
    states=None,
    obs=None,
    actions: int | None = None,
    r_max: float = 1.0,
) -> Pomdp:
    """Random layered POMDP with Dirichlet(1,...,1) rows.

    Unspecified sizes are drawn from small defaults (H in 1..3, |S_t| in 2..4,
    |O_t| in 2..3, |A| in 1..2); explicit sizes may go up to the generator limits
    (|S_t| <= 6, |O_t| <= 5, |A| <= 3, H <= 5).
    """
    rng = np.random.default_rng(seed)
    H = int(rng.integers(1, 4)) if horizon is None else int(horizon)
    if not 1 <= H <= GENERATOR_LIMITS["horizon"]:
        raise InvalidModelError(f"horizon must be in 1..{GENERATOR_LIMITS['horizon']}")
    A = int(rng.integers(1, 3)) if actions is None else int(actions)
    if not 1 <= A <= GENERATOR_LIMITS["actions"]:
        raise InvalidModelError(f"actions must be in 1..{GENERATOR_LIMITS['actions']}")
    S = _sizes(states, 2, 4, H + 1, rng, GENERATOR_LIMITS["states"], "state")
    O = _sizes(obs, 2, 3, H + 1, rng, GENERATOR_LIMITS["obs"], "observation")
    init = rng.dirichlet(np.ones(S[0]))
    trans = [rng.dirichlet(np.ones(S[t + 1]), size=(S[t], A)) for t in range(H)]
    emis = [rng.dirichlet(np.ones(O[t]), size=S[t]) for t in range(H + 1)]
    reward = [rng.uniform(0, r_max, size=O[t]) for t in range(1, H + 1)]
    return Pomdp(init, tuple(trans), tuple(emis), tuple(reward), r_max, name=f"random-{seed}")


def random_policy(pomdp: Pomdp, seed, kind: str = "observation-markov") -> Policy:
    """Random policy with Dirichlet rows (``history-tabular`` lists every non-final history)."""
    rng = np.random.default_rng(seed)
    A = pomdp.num_actions
    if kind == "uniform":
        return Policy.uniform(A)
    if kind == "observation-markov":
        return Policy.observation_markov(
            [rng.dirichlet(np.ones(A), size=pomdp.obs_sizes[t]) for t in range(pomdp.horizon)]
        )
    if kind == "history-tabular":
        entries = {}
        for t in range(pomdp.horizon):
            rows = rng.dirichlet(np.ones(A), size=pomdp.index.sizes[t])
            for i, row in enumerate(rows):
                entries[pomdp.index.history(t, i)] = row
        return Policy.history_tabular(entries, np.full(A, 1.0 / A))
    raise InvalidModelError(f"unknown policy kind {kind!r}")
