"""Numpy implementations of the compiled loops in ``_core.pyx``.

Vectorized across the batch instead of looping per sample; the categorical
rule (first index whose cumulative mass exceeds the uniform) is the same, so
results match the compiled path bit for bit.
"""
import numpy as np


def _cat(rows, u):
    return np.argmax(rows > u[:, None], axis=1)


def draw_rows(cdf, rows, u):
    return _cat(cdf[rows], u).astype(np.int64)


def rollout_returns(
    horizon,
    start_layer,
    start_index,
    action,
    repeated,
    bel_cdf,
    bel_ok,
    pol_cdf,
    trans_cdf,
    emis_cdf,
    reward,
    offsets,
    obs_sizes,
    u,
    out,
):
    count = u.shape[0]
    n_act = pol_cdf.shape[1]
    idx = np.full(count, start_index, dtype=np.int64)
    node = offsets[start_layer] + idx
    if count and not bel_ok[node[0]]:
        return int(node[0])
    s = _cat(bel_cdf[node], u[:, 0])
    a = np.full(count, action, dtype=np.int64)
    ret = np.zeros(count)
    for k in range(horizon - start_layer):
        layer = start_layer + k
        base = 1 + 4 * k
        if k > 0:
            a = _cat(pol_cdf[node], u[:, base])
        s = _cat(trans_cdf[layer, s, a], u[:, base + 1])
        o = _cat(emis_cdf[layer + 1, s], u[:, base + 2])
        ret = ret + reward[layer + 1, o]
        idx = (idx * n_act + a) * obs_sizes[layer + 1] + o
        node = offsets[layer + 1] + idx
        if repeated and layer + 1 < horizon:
            bad = np.flatnonzero(bel_ok[node] == 0)
            if bad.size:
                return int(node[bad[0]])
            s = _cat(bel_cdf[node], u[:, base + 3])
    out[:] = ret
    return -1


def sample_paths(
    horizon, init_cdf, pol_cdf, trans_cdf, emis_cdf, offsets, obs_sizes, u, latent, obs, acts
):
    count = u.shape[0]
    n_act = pol_cdf.shape[1]
    s = _cat(np.broadcast_to(init_cdf, (count, init_cdf.shape[0])), u[:, 0])
    o = _cat(emis_cdf[0, s], u[:, 1])
    latent[:, 0] = s
    obs[:, 0] = o
    idx = o.astype(np.int64)
    for t in range(horizon):
        a = _cat(pol_cdf[offsets[t] + idx], u[:, 2 + 3 * t])
        s = _cat(trans_cdf[t, s, a], u[:, 3 + 3 * t])
        o = _cat(emis_cdf[t + 1, s], u[:, 4 + 3 * t])
        acts[:, t] = a
        latent[:, t + 1] = s
        obs[:, t + 1] = o
        idx = (idx * n_act + a) * obs_sizes[t + 1] + o
