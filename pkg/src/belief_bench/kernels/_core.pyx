# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling loops.

Every routine consumes pre-drawn uniforms and cumulative tables whose last
positive entry is exactly 1.0, so the numpy fallback in ``_fallback.py``
produces bit-identical output from the same inputs.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _cat(const double* row, Py_ssize_t n, double u) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        if u < row[i]:
            return i
    return n - 1


def draw_rows(const double[:, ::1] cdf, const cnp.int64_t[::1] rows, const double[::1] u):
    """Categorical draw per uniform from the selected rows of ``cdf``."""
    cdef Py_ssize_t count = u.shape[0]
    cdef Py_ssize_t width = cdf.shape[1]
    out_arr = np.empty(count, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t r
    with nogil:
        for r in range(count):
            out[r] = _cat(&cdf[rows[r], 0], width, u[r])
    return out_arr


def rollout_returns(
    int horizon,
    int start_layer,
    cnp.int64_t start_index,
    int action,
    bint repeated,
    const double[:, ::1] bel_cdf,
    const cnp.uint8_t[::1] bel_ok,
    const double[:, ::1] pol_cdf,
    const double[:, :, :, ::1] trans_cdf,
    const double[:, :, ::1] emis_cdf,
    const double[:, ::1] reward,
    const cnp.int64_t[::1] offsets,
    const cnp.int64_t[::1] obs_sizes,
    const double[:, ::1] u,
    double[::1] out,
):
    """Fill ``out`` with Monte-Carlo returns; return -1 or the first node lacking a belief."""
    cdef Py_ssize_t count = u.shape[0]
    cdef Py_ssize_t s_max = bel_cdf.shape[1]
    cdef Py_ssize_t n_act = pol_cdf.shape[1]
    cdef Py_ssize_t o_max = emis_cdf.shape[2]
    cdef Py_ssize_t steps = horizon - start_layer
    cdef Py_ssize_t r, k, layer, base, s, a, o
    cdef cnp.int64_t idx, node
    cdef double ret
    cdef cnp.int64_t bad = -1
    with nogil:
        for r in range(count):
            idx = start_index
            node = offsets[start_layer] + idx
            if not bel_ok[node]:
                bad = node
                break
            s = _cat(&bel_cdf[node, 0], s_max, u[r, 0])
            a = action
            ret = 0.0
            for k in range(steps):
                layer = start_layer + k
                base = 1 + 4 * k
                if k > 0:
                    a = _cat(&pol_cdf[node, 0], n_act, u[r, base])
                s = _cat(&trans_cdf[layer, s, a, 0], s_max, u[r, base + 1])
                o = _cat(&emis_cdf[layer + 1, s, 0], o_max, u[r, base + 2])
                ret = ret + reward[layer + 1, o]
                idx = (idx * n_act + a) * obs_sizes[layer + 1] + o
                node = offsets[layer + 1] + idx
                if repeated and layer + 1 < horizon:
                    if not bel_ok[node]:
                        bad = node
                        break
                    s = _cat(&bel_cdf[node, 0], s_max, u[r, base + 3])
            if bad >= 0:
                break
            out[r] = ret
    return bad


def sample_paths(
    int horizon,
    const double[::1] init_cdf,
    const double[:, ::1] pol_cdf,
    const double[:, :, :, ::1] trans_cdf,
    const double[:, :, ::1] emis_cdf,
    const cnp.int64_t[::1] offsets,
    const cnp.int64_t[::1] obs_sizes,
    const double[:, ::1] u,
    cnp.int64_t[:, ::1] latent,
    cnp.int64_t[:, ::1] obs,
    cnp.int64_t[:, ::1] acts,
):
    """Simulate full episodes from the initial distribution."""
    cdef Py_ssize_t count = u.shape[0]
    cdef Py_ssize_t s_max = init_cdf.shape[0]
    cdef Py_ssize_t n_act = pol_cdf.shape[1]
    cdef Py_ssize_t o_max = emis_cdf.shape[2]
    cdef Py_ssize_t r, t, s, a, o
    cdef cnp.int64_t idx
    with nogil:
        for r in range(count):
            s = _cat(&init_cdf[0], s_max, u[r, 0])
            o = _cat(&emis_cdf[0, s, 0], o_max, u[r, 1])
            latent[r, 0] = s
            obs[r, 0] = o
            idx = o
            for t in range(horizon):
                a = _cat(&pol_cdf[offsets[t] + idx, 0], n_act, u[r, 2 + 3 * t])
                s = _cat(&trans_cdf[t, s, a, 0], s_max, u[r, 3 + 3 * t])
                o = _cat(&emis_cdf[t + 1, s, 0], o_max, u[r, 4 + 3 * t])
                acts[r, t] = a
                latent[r, t + 1] = s
                obs[r, t + 1] = o
                idx = (idx * n_act + a) * obs_sizes[t + 1] + o
