"""Independent brute-force references used by the tests.

Everything here works by explicit enumeration over latent paths or gap
sequences with plain Python loops; nothing touches the package's history
index, filter or dynamic programs.
"""
from __future__ import annotations

import itertools

import numpy as np


def path_weight(pomdp, states, history) -> float:
    """Joint probability of a latent path and the observations of ``history`` (actions given)."""
    w = pomdp.init[states[0]] * pomdp.emission[0][states[0], history.obs[0]]
    for k, a in enumerate(history.acts):
        w *= pomdp.transition[k][states[k], a, states[k + 1]]
        w *= pomdp.emission[k + 1][states[k + 1], history.obs[k + 1]]
    return float(w)


def brute_posterior(pomdp, history):
    """``P(s_t | history)`` by summing over every latent path; None when unreachable."""
    t = history.t
    out = np.zeros(pomdp.state_sizes[t])
    for states in itertools.product(*(range(pomdp.state_sizes[k]) for k in range(t + 1))):
        out[states[-1]] += path_weight(pomdp, states, history)
    z = out.sum()
    return None if z <= 0 else out / z


def brute_next_obs(pomdp, history, action, belief=None):
    """``M(o_{t+1} | history, action)`` under ``belief`` (default: brute posterior)."""
    t = history.t
    b = brute_posterior(pomdp, history) if belief is None else np.asarray(belief)
    out = np.zeros(pomdp.obs_sizes[t + 1])
    for s in range(len(b)):
        for s2 in range(pomdp.state_sizes[t + 1]):
            out += b[s] * pomdp.transition[t][s, action, s2] * pomdp.emission[t + 1][s2]
    return out


def histories(pomdp, t):
    """Every history of length ``t`` (reachable or not), in index order."""
    if t == 0:
        for o in range(pomdp.obs_sizes[0]):
            yield _H((o,), ())
        return
    for h in histories(pomdp, t - 1):
        for a in range(pomdp.num_actions):
            for o in range(pomdp.obs_sizes[t]):
                yield h.extend(a, o)


def _H(obs, acts):
    from belief_bench.pomdp import History

    return History(tuple(obs), tuple(acts))


def brute_q(pomdp, policy, history, action, belief_fn=None) -> float:
    """Q of the history MDP whose transition uses ``belief_fn(history)`` (default: true posterior)."""
    t = history.t
    b = brute_posterior(pomdp, history) if belief_fn is None else belief_fn(history)
    law = brute_next_obs(pomdp, history, action, b)
    total = 0.0
    for o, p in enumerate(law):
        if p <= 0:
            continue
        h2 = history.extend(action, o)
        v = pomdp.reward[t + 1][o]
        if t + 1 < pomdp.horizon:
            pi = policy.probs(h2)
            v += sum(pi[a] * brute_q(pomdp, policy, h2, a, belief_fn) for a in range(pomdp.num_actions) if pi[a] > 0)
        total += p * v
    return float(total)


def brute_native_value(pomdp, policy, history, state, action) -> float:
    """Expected remaining reward from latent ``state`` at ``history`` running the native chain."""
    t = history.t
    total = 0.0
    for s2 in range(pomdp.state_sizes[t + 1]):
        ps = pomdp.transition[t][state, action, s2]
        if ps <= 0:
            continue
        for o in range(pomdp.obs_sizes[t + 1]):
            po = pomdp.emission[t + 1][s2, o]
            if po <= 0:
                continue
            h2 = history.extend(action, o)
            v = pomdp.reward[t + 1][o]
            if t + 1 < pomdp.horizon:
                pi = policy.probs(h2)
                v += sum(pi[a] * brute_native_value(pomdp, policy, h2, s2, a) for a in range(pomdp.num_actions) if pi[a] > 0)
            total += ps * po * v
    return float(total)


def brute_single_reset_q(pomdp, policy, history, action, belief) -> float:
    return float(sum(belief[s] * brute_native_value(pomdp, policy, history, s, action) for s in range(len(belief)) if belief[s] > 0))


def trajectory_probability(pomdp, policy, obs, acts) -> float:
    """Probability of an observable trajectory: product of policy and next-observation factors."""
    h = _H(obs[:1], ())
    p = float(sum(pomdp.init[s] * pomdp.emission[0][s, obs[0]] for s in range(pomdp.state_sizes[0])))
    for k, a in enumerate(acts):
        if p == 0:
            return 0.0
        p *= policy.probs(h)[a] * brute_next_obs(pomdp, h, a)[obs[k + 1]]
        h = h.extend(a, obs[k + 1])
    return p


def queue_renewal_oracle(D, prefix, length):
    """Law of the next ``length`` indicators (1 = event) given an observed indicator ``prefix``.

    Enumerates gap sequences of the renewal process whose first event is at
    step 0 (the generator's initial layer) and conditions by Bayes' rule.
    """
    D = np.asarray(D, dtype=float)
    total = len(prefix) + length
    joint: dict = {}

    def walk(seq, prob):
        if len(seq) >= total:
            seq = tuple(seq[:total])
            joint[seq] = joint.get(seq, 0.0) + prob
            return
        for g in range(1, len(D) + 1):
            if D[g - 1] > 0:
                walk(seq + [0] * (g - 1) + [1], prob * D[g - 1])

    walk([1], 1.0)  # every initial state emits X
    prefix = tuple(prefix)
    cond: dict = {}
    for seq, p in joint.items():
        if seq[: len(prefix)] == prefix:
            cond[seq[len(prefix) :]] = cond.get(seq[len(prefix) :], 0.0) + p
    z = sum(cond.values())
    return {k: v / z for k, v in cond.items()}


def brute_posterior_layer(pomdp, t):
    """``(histories, posteriors, evidence)`` for every layer-``t`` history, one latent path at a time."""
    hs = list(histories(pomdp, t))
    obs = np.array([h.obs for h in hs], dtype=np.int64)
    acts = np.array([h.acts for h in hs], dtype=np.int64).reshape(len(hs), t)
    post = np.zeros((len(hs), pomdp.state_sizes[t]))
    for states in itertools.product(*(range(pomdp.state_sizes[k]) for k in range(t + 1))):
        w = pomdp.init[states[0]] * pomdp.emission[0][states[0], obs[:, 0]]
        for k in range(t):
            w = w * pomdp.transition[k][states[k], acts[:, k], states[k + 1]]
            w = w * pomdp.emission[k + 1][states[k + 1], obs[:, k + 1]]
        post[:, states[-1]] += w
    z = post.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return hs, post / z[:, None], z
