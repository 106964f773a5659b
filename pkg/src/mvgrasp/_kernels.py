"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is chosen once from the ``MVGRASP_BACKEND`` environment variable
(``numba`` or ``numpy``); numba is the default when it can be imported.
Both paths accumulate in the same order, so their results are bit-identical.
"""

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")


def _initial_backend():
    name = os.environ.get("MVGRASP_BACKEND", "numba" if HAVE_NUMBA else "numpy").lower()
    if name not in BACKENDS:
        raise ValueError(f"MVGRASP_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        warnings.warn("numba is not importable, falling back to numpy kernels")
        name = "numpy"
    return name


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    """Switch kernel backend at runtime (tests and benchmarks use this)."""
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    _backend = name


# ---------------------------------------------------------------- numpy path


def _im2col_np(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols


def _col2im_np(cols, hp, wp, stride):
    n, c, kh, kw, ho, wo = cols.shape
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return out


def _zbuffer_np(flat_idx, depth, npix):
    buf = np.full(npix, np.inf, dtype=np.float64)
    np.minimum.at(buf, flat_idx, depth)
    return buf


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _im2col_nb(xp, kh, kw, stride, ho, wo):
        n, c = xp.shape[0], xp.shape[1]
        cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        for y in range(ho):
                            sy = i + stride * y
                            for x in range(wo):
                                cols[b, ch, i, j, y, x] = xp[b, ch, sy, j + stride * x]
        return cols

    @njit(cache=True)
    def _col2im_nb(cols, hp, wp, stride):
        n, c, kh, kw, ho, wo = cols.shape
        out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    for j in range(kw):
                        for y in range(ho):
                            sy = i + stride * y
                            for x in range(wo):
                                out[b, ch, sy, j + stride * x] += cols[b, ch, i, j, y, x]
        return out

    @njit(cache=True)
    def _zbuffer_nb(flat_idx, depth, npix):
        buf = np.full(npix, np.inf)
        for k in range(flat_idx.shape[0]):
            p = flat_idx[k]
            if depth[k] < buf[p]:
                buf[p] = depth[k]
        return buf


# ---------------------------------------------------------------- dispatch


def im2col(xp, kh, kw, stride, ho, wo):
    """Gather (N, C, H, W) padded input into (N, C, kh, kw, ho, wo) patches."""
    xp = np.ascontiguousarray(xp)
    if _backend == "numba":
        return _im2col_nb(xp, kh, kw, stride, ho, wo)
    return _im2col_np(xp, kh, kw, stride, ho, wo)


def col2im(cols, hp, wp, stride):
    """Scatter-add patches back onto an (N, C, hp, wp) grid; adjoint of im2col."""
    cols = np.ascontiguousarray(cols)
    if _backend == "numba":
        return _col2im_nb(cols, hp, wp, stride)
    return _col2im_np(cols, hp, wp, stride)


def zbuffer(flat_idx, depth, npix):
    """Per-bin minimum of ``depth`` keyed by ``flat_idx``; empty bins are +inf."""
    flat_idx = np.ascontiguousarray(flat_idx, dtype=np.int64)
    depth = np.ascontiguousarray(depth, dtype=np.float64)
    if _backend == "numba":
        return _zbuffer_nb(flat_idx, depth, npix)
    return _zbuffer_np(flat_idx, depth, npix)
