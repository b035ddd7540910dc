"""Single-Reset and Repeated-Reset roll-outs with their exact-expectation oracles.

Single-Reset samples the latent state from the candidate once, at the root
history, and simulates natively afterwards.  Repeated-Reset resamples the
latent state from the candidate at every step, which realizes the observable
model ``M_{Gamma,b}`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .belief import BeliefSampler, TableBelief, belief_tables
from .errors import EnumerationCapError, InvalidModelError, LayerMismatchError, UnreachableHistoryError
from .pomdp import History, Policy, Pomdp, QTable, history_mdp_q, policy_cdf_table

SINGLE = "single-reset"
REPEATED = "repeated-reset"
MODES = (SINGLE, REPEATED)


@dataclass(frozen=True)
class RolloutEstimate:
    mean: float
    stderr: float
    count: int
    mode: str

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "count": self.count, "mode": self.mode}


def _check_root(pomdp: Pomdp, history: History, action: int):
    pomdp.index.validate(history)
    if history.t >= pomdp.horizon:
        raise LayerMismatchError(f"roll-outs start before the horizon, got t={history.t}")
    if not 0 <= action < pomdp.num_actions:
        raise LayerMismatchError(f"action {action} is outside the action set")


def _draw_one(cdf_row, rng) -> int:
    return int(kernels.draw(cdf_row, rng.random())[0])


def _rollout(pomdp, b, history, action, policy, rng, repeated):
    _check_root(pomdp, history, action)
    s = b.sample(history, rng)
    a = action
    total = 0.0
    A = pomdp.num_actions
    t_root = history.t
    for t in range(t_root, pomdp.horizon):
        if t > t_root:
            a = _draw_one(kernels.make_cdf(policy.probs(history)), rng)
        s = _draw_one(pomdp.trans_cdf_rows[t][s * A + a], rng)
        o = _draw_one(pomdp.emis_cdf_rows[t + 1][s], rng)
        total += pomdp.reward[t + 1][o]
        history = history.extend(a, o)
        if repeated and t + 1 < pomdp.horizon:
            s = b.sample(history, rng)
    return total


def single_reset_rollout(pomdp, b: BeliefSampler, history: History, action: int, policy: Policy, rng) -> float:
    """One Single-Reset return ``sum_{t'>t} R(o_{t'})``; ``b`` is queried once."""
    return _rollout(pomdp, b, history, action, policy, rng, repeated=False)


def repeated_reset_rollout(pomdp, b: BeliefSampler, history: History, action: int, policy: Policy, rng) -> float:
    """One Repeated-Reset return; ``b`` is queried at every step before the horizon."""
    return _rollout(pomdp, b, history, action, policy, rng, repeated=True)


def _kernel_ready(pomdp, b):
    if not isinstance(b, TableBelief) or b.pomdp is not pomdp:
        return False
    try:
        pomdp.index.check()
    except EnumerationCapError:
        return False
    return True


def mc_returns(pomdp, b, history, action, policy, mode, count, rng, backend=None) -> np.ndarray:
    """``count`` independent returns; table beliefs run through the sampling kernel."""
    if mode not in MODES:
        raise InvalidModelError(f"unknown roll-out mode {mode!r}", "mode")
    if count < 1:
        raise InvalidModelError("count must be at least 1", "count")
    _check_root(pomdp, history, action)
    repeated = mode == REPEATED
    if not _kernel_ready(pomdp, b):
        fn = repeated_reset_rollout if repeated else single_reset_rollout
        return np.array([fn(pomdp, b, history, action, policy, rng) for _ in range(count)])
    t = history.t
    bel_cdf, bel_ok = b.kernel_tables()
    pad = pomdp.padded
    u = rng.random((count, 1 + 4 * (pomdp.horizon - t)))
    out = np.empty(count)
    bad = kernels.rollout_returns(
        pomdp.horizon,
        t,
        pomdp.index.index(history),
        int(action),
        repeated,
        bel_cdf,
        bel_ok,
        policy_cdf_table(pomdp, policy),
        pad["trans_cdf"],
        pad["emis_cdf"],
        pad["reward"],
        np.asarray(pomdp.index.offsets, dtype=np.int64),
        np.asarray(pomdp.obs_sizes, dtype=np.int64),
        u,
        out,
        backend=backend,
    )
    if bad >= 0:
        layer = int(np.searchsorted(pomdp.index.offsets, bad, side="right") - 1)
        h = pomdp.index.history(layer, bad - pomdp.index.offsets[layer])
        raise UnreachableHistoryError(f"{b.label}: no belief at history {h}")
    return out


def mc_q(pomdp, b, history, action, policy, mode, count, rng, backend=None) -> RolloutEstimate:
    """Mean and standard error of ``count`` roll-outs (stderr is 0 for a single sample)."""
    ret = mc_returns(pomdp, b, history, action, policy, mode, count, rng, backend)
    stderr = float(ret.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    return RolloutEstimate(float(ret.mean()), stderr, int(count), mode)


# --- exact oracles --------------------------------------------------------------


def joint_values(pomdp: Pomdp, policy: Policy) -> list[np.ndarray]:
    """``W[t][h, s, a]``: expected return of the native chain from ``(tau_t, s_t)`` taking ``a``.

    The joint (history, latent state) chain is the sufficient statistic of a
    Single-Reset roll-out once the root state has been drawn.
    """
    index = pomdp.index
    index.check()
    H, A = pomdp.horizon, pomdp.num_actions
    W = [None] * H
    U = np.zeros((index.sizes[H], pomdp.state_sizes[H]))
    for t in reversed(range(H)):
        n = index.sizes[t]
        P, E, R = pomdp.transition[t], pomdp.emission[t + 1], pomdp.reward[t + 1]
        O, S_next = E.shape[1], E.shape[0]
        U4 = U.reshape(n, A, O, S_next)
        cont = np.einsum("po,haop->hap", E, R[None, None, :, None] + U4)
        W[t] = np.einsum("sap,hap->hsa", P, cont)
        pi = policy.layer_table(index, t)
        U = np.einsum("ha,hsa->hs", pi, W[t])
    return W


def exact_single_reset_q(pomdp: Pomdp, b: BeliefSampler, policy: Policy) -> QTable:
    """``Q_{1-Reset(Gamma,b)}^pi = sum_s b(s|tau) W(tau, s, a)`` (NaN where ``b`` is undefined)."""
    tables = belief_tables(b)
    W = joint_values(pomdp, policy)
    values = tuple(np.einsum("hs,hsa->ha", tables[t], W[t]) for t in range(pomdp.horizon))
    return QTable(pomdp.index, values, "exact_single_reset")


def observable_model(pomdp: Pomdp, b: BeliefSampler) -> tuple[np.ndarray, ...]:
    """``M_{Gamma,b}[t][h, a, o]`` for every layer-``t`` history (NaN rows where ``b`` is undefined)."""
    tables = belief_tables(b)
    return tuple(
        np.einsum("hs,sao->hao", tables[t], pomdp.obs_kernel[t]) for t in range(pomdp.horizon)
    )


def exact_repeated_reset_q(pomdp: Pomdp, b: BeliefSampler, policy: Policy) -> QTable:
    """``Q_{M_{Gamma,b}}^pi`` by backward induction on the history MDP with transition ``M_{Gamma,b}``.

    Raises if the candidate's own dynamics reach a history where it is undefined
    from a root that ``pomdp`` can produce.
    """
    pomdp.index.check()
    q = history_mdp_q(pomdp, observable_model(pomdp, b), policy, "exact_repeated_reset")
    filt = pomdp.filtered
    for t, layer in enumerate(q.values):
        bad = filt.reachable(t) & np.isnan(layer).any(axis=1)
        if np.any(bad):
            h = pomdp.index.history(t, int(np.argmax(bad)))
            raise UnreachableHistoryError(
                f"{b.label}: repeated-reset from {h} reaches a history without a belief"
            )
    return q


# --- continuation laws -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContinuationLaw:
    """Law of the layer-``t'`` descendants of a root ``(tau_t, a_t)`` for ``t' = t+1..H``.

    ``layers[k]`` covers layer ``t+1+k`` on the contiguous node range ``ranges[k]``.
    """

    root: History
    action: int
    mode: str
    ranges: tuple
    layers: tuple

    def final(self) -> np.ndarray:
        return self.layers[-1]

    def suffixes(self, index, tol: float = 0.0):
        """``{(observation suffix, action suffix): probability}`` over full continuations."""
        out = {}
        t = self.root.t
        rng_ = self.ranges[-1]
        for off in np.flatnonzero(self.layers[-1] > tol):
            h = index.history(index.horizon, rng_.start + off)
            out[(h.obs[t + 1 :], h.acts[t:])] = float(self.layers[-1][off])
        return out


def _joint_forward(pomdp, policy, t, root_idx, action, start):
    """Propagate mass over (node, latent state) from a root layer through the native chain."""
    A = pomdp.num_actions
    joint = start[None, :]
    lo = root_idx
    for k in range(t, pomdp.horizon):
        P, E = pomdp.transition[k], pomdp.emission[k + 1]
        if k == t:
            pa = np.zeros((1, A))
            pa[0, action] = 1.0
        else:
            pa = policy.layer_table(pomdp.index, k)[lo : lo + joint.shape[0]]
        nxt = np.einsum("hs,ha,sap,po->haop", joint, pa, P, E)
        joint = nxt.reshape(-1, E.shape[0])
        lo = lo * A * E.shape[1]
        yield k + 1, lo, joint


def continuation_law(pomdp: Pomdp, b, history: History, action: int, policy: Policy, mode: str) -> ContinuationLaw:
    """Exact law of the future observable trajectory from ``(history, action)``.

    ``mode`` is ``single-reset`` (latent state drawn once from ``b``),
    ``repeated-reset`` (transition ``M_{Gamma,b}``) or ``true`` (``M_Gamma``; ``b`` ignored).
    """
    _check_root(pomdp, history, action)
    pomdp.index.check()
    t = history.t
    root = pomdp.index.index(history)
    ranges, layers = [], []
    if mode == SINGLE:
        start = belief_tables(b)[t][root]
        if np.isnan(start[0]):
            raise UnreachableHistoryError(f"{b.label}: no belief at history {history}")
        for k, lo, joint in _joint_forward(pomdp, policy, t, root, action, start):
            layers.append(joint.sum(axis=1))
            ranges.append(range(lo, lo + joint.shape[0]))
    elif mode in (REPEATED, "true"):
        M = pomdp.filtered.pred if mode == "true" else observable_model(pomdp, b)
        A = pomdp.num_actions
        w = np.ones(1)
        lo = root
        for k in range(t, pomdp.horizon):
            if k == t:
                pa = np.zeros((1, A))
                pa[0, action] = 1.0
            else:
                pa = policy.layer_table(pomdp.index, k)[lo : lo + len(w)]
            Mk = M[k][lo : lo + len(w)]
            live = w > 0
            step = np.zeros_like(Mk)
            step[live] = w[live, None, None] * pa[live, :, None] * Mk[live]
            if np.isnan(step).any():
                raise UnreachableHistoryError("continuation reaches a history without a belief")
            w = step.reshape(-1)
            lo = lo * A * Mk.shape[2]
            layers.append(w)
            ranges.append(range(lo, lo + len(w)))
    else:
        raise InvalidModelError(f"unknown continuation mode {mode!r}", "mode")
    return ContinuationLaw(history, int(action), mode, tuple(ranges), tuple(layers))


def single_reset_conditionals(pomdp: Pomdp, b, history: History, action: int, policy: Policy):
    """Next-observation conditionals induced by a Single-Reset roll-out from ``(history, action)``.

    Yields ``(t', node_range, mass, cond)`` for ``t' = t+1..H-1`` where ``mass[h]``
    is the roll-out probability of node ``h`` and ``cond[h, a, o]`` the law of
    ``o_{t'+1}`` given ``(tau_{t'}, a)`` under the roll-out (NaN where mass is 0).
    """
    _check_root(pomdp, history, action)
    t = history.t
    root = pomdp.index.index(history)
    start = belief_tables(b)[t][root]
    for k, lo, joint in _joint_forward(pomdp, policy, t, root, action, start):
        if k >= pomdp.horizon:
            break
        mass = joint.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = joint / mass[:, None]
        cond = np.einsum("hs,sao->hao", post, pomdp.obs_kernel[k])
        yield k, range(lo, lo + joint.shape[0]), mass, cond
