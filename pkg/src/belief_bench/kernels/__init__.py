"""Sampling kernels: compiled extension when available, numpy otherwise.

Set ``BELIEF_BENCH_PURE=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

if os.environ.get("BELIEF_BENCH_PURE", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"


def backend_module(name=None):
    """Return the kernel module for ``name`` ("compiled"/"python"), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown kernel backend {name!r}")


def make_cdf(p, axis=-1):
    """Cumulative table whose last positive entry (and everything after it) is exactly 1.0."""
    p = np.asarray(p, dtype=float)
    c = np.cumsum(p, axis=axis)
    c = np.moveaxis(c, axis, -1)
    pos = np.moveaxis(p, axis, -1) > 0
    # index of last positive entry per row; rows without mass (padding) get 0
    last = pos.shape[-1] - 1 - np.argmax(pos[..., ::-1], axis=-1)
    cols = np.arange(pos.shape[-1])
    c = np.where(cols >= last[..., None], 1.0, c)
    return np.ascontiguousarray(np.moveaxis(c, -1, axis))


def draw(cdf_row, u):
    """Categorical draws from a single cumulative row for each uniform in ``u``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    table = np.ascontiguousarray(np.asarray(cdf_row, dtype=float)[None, :])
    rows = np.zeros(u.shape[0], dtype=np.int64)
    return _impl.draw_rows(table, rows, np.ascontiguousarray(u))


def draw_rows(cdf, rows, u, backend=None):
    mod = backend_module(backend)
    return mod.draw_rows(
        np.ascontiguousarray(cdf, dtype=float),
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(u, dtype=float),
    )


def rollout_returns(*args, backend=None):
    return backend_module(backend).rollout_returns(*args)


def sample_paths(*args, backend=None):
    return backend_module(backend).sample_paths(*args)
