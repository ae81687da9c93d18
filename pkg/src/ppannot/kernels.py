"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``PPANNOT_DISABLE_NUMBA`` is unset (or "0"). Both paths are always
importable as ``numpy_impl`` / ``numba_impl`` so tests and the benchmark can
compare them directly.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


# ---------------------------------------------------------------------------
# pure numpy
# ---------------------------------------------------------------------------

def _np_levenshtein(a, b) -> int:
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.arange(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        # substitution/deletion in one vector op; insertions need the running min
        diag = prev[:-1] + (b != a[i - 1])
        up = prev[1:] + 1
        cur = np.empty(m + 1, dtype=np.int64)
        cur[0] = i
        cur[1:] = np.minimum(diag, up)
        for j in range(1, m + 1):
            if cur[j - 1] + 1 < cur[j]:
                cur[j] = cur[j - 1] + 1
        prev = cur
    return int(prev[m])


def _np_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def _np_softmax_backward(y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    return y * (dy - (dy * y).sum(axis=-1, keepdims=True))


def _np_layernorm(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * g + b, xhat, rstd


def _np_layernorm_backward(dy, xhat, rstd, g):
    d = xhat.shape[-1]
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxhat = dy * g
    dx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
          - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d) * rstd
    return dx, dg, db


def _np_gelu(x):
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + t)


def _np_gelu_backward(x, dy):
    x2 = x * x
    t = np.tanh(_GELU_C * (x + _GELU_A * x2 * x))
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


numpy_impl = SimpleNamespace(
    name="numpy",
    levenshtein=_np_levenshtein,
    softmax=_np_softmax,
    softmax_backward=_np_softmax_backward,
    layernorm=_np_layernorm,
    layernorm_backward=_np_layernorm_backward,
    gelu=_np_gelu,
    gelu_backward=_np_gelu_backward,
)


# ---------------------------------------------------------------------------
# numba
# ---------------------------------------------------------------------------

def _build_numba():
    import numba

    njit = numba.njit(cache=True, fastmath=False)

    @njit
    def levenshtein(a, b):
        n = a.shape[0]
        m = b.shape[0]
        if n == 0:
            return m
        if m == 0:
            return n
        prev = np.empty(m + 1, np.int64)
        cur = np.empty(m + 1, np.int64)
        for j in range(m + 1):
            prev[j] = j
        for i in range(1, n + 1):
            cur[0] = i
            ai = a[i - 1]
            for j in range(1, m + 1):
                best = prev[j - 1] + (0 if ai == b[j - 1] else 1)
                if prev[j] + 1 < best:
                    best = prev[j] + 1
                if cur[j - 1] + 1 < best:
                    best = cur[j - 1] + 1
                cur[j] = best
            for j in range(m + 1):
                prev[j] = cur[j]
        return prev[m]

    @njit
    def _softmax2d(x, out):
        rows, cols = x.shape
        for r in range(rows):
            mx = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > mx:
                    mx = x[r, c]
            s = 0.0
            for c in range(cols):
                e = math.exp(x[r, c] - mx)
                out[r, c] = e
                s += e
            inv = 1.0 / s
            for c in range(cols):
                out[r, c] *= inv

    @njit
    def _softmax_bwd2d(y, dy, out):
        rows, cols = y.shape
        for r in range(rows):
            s = 0.0
            for c in range(cols):
                s += dy[r, c] * y[r, c]
            for c in range(cols):
                out[r, c] = y[r, c] * (dy[r, c] - s)

    @njit
    def _layernorm2d(x, g, b, eps, y, xhat, rstd):
        rows, d = x.shape
        for r in range(rows):
            mu = 0.0
            for c in range(d):
                mu += x[r, c]
            mu /= d
            var = 0.0
            for c in range(d):
                t = x[r, c] - mu
                var += t * t
            var /= d
            rs = 1.0 / math.sqrt(var + eps)
            rstd[r, 0] = rs
            for c in range(d):
                h = (x[r, c] - mu) * rs
                xhat[r, c] = h
                y[r, c] = h * g[c] + b[c]

    @njit
    def _layernorm_bwd2d(dy, xhat, rstd, g, dx, dg, db):
        rows, d = dy.shape
        for c in range(d):
            dg[c] = 0.0
            db[c] = 0.0
        for r in range(rows):
            s1 = 0.0
            s2 = 0.0
            for c in range(d):
                dh = dy[r, c] * g[c]
                s1 += dh
                s2 += dh * xhat[r, c]
                dg[c] += dy[r, c] * xhat[r, c]
                db[c] += dy[r, c]
            s1 /= d
            s2 /= d
            rs = rstd[r, 0]
            for c in range(d):
                dh = dy[r, c] * g[c]
                dx[r, c] = (dh - s1 - xhat[r, c] * s2) * rs

    @njit
    def _gelu1d(x, out):
        for i in range(x.shape[0]):
            v = x[i]
            t = math.tanh(_GELU_C * (v + _GELU_A * v * v * v))
            out[i] = 0.5 * v * (1.0 + t)

    @njit
    def _gelu_bwd1d(x, dy, out):
        for i in range(x.shape[0]):
            v = x[i]
            v2 = v * v
            t = math.tanh(_GELU_C * (v + _GELU_A * v2 * v))
            dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * v2)
            out[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * dt)

    def softmax(x):
        x2 = np.ascontiguousarray(x).reshape(-1, x.shape[-1])
        out = np.empty_like(x2)
        _softmax2d(x2, out)
        return out.reshape(x.shape)

    def softmax_backward(y, dy):
        y2 = np.ascontiguousarray(y).reshape(-1, y.shape[-1])
        dy2 = np.ascontiguousarray(dy, dtype=y.dtype).reshape(-1, y.shape[-1])
        out = np.empty_like(y2)
        _softmax_bwd2d(y2, dy2, out)
        return out.reshape(y.shape)

    def layernorm(x, g, b, eps):
        d = x.shape[-1]
        x2 = np.ascontiguousarray(x).reshape(-1, d)
        y = np.empty_like(x2)
        xhat = np.empty_like(x2)
        rstd = np.empty((x2.shape[0], 1), dtype=x2.dtype)
        _layernorm2d(x2, g.astype(x2.dtype, copy=False), b.astype(x2.dtype, copy=False), eps, y, xhat, rstd)
        lead = x.shape[:-1]
        return y.reshape(x.shape), xhat.reshape(x.shape), rstd.reshape(lead + (1,))

    def layernorm_backward(dy, xhat, rstd, g):
        d = dy.shape[-1]
        dy2 = np.ascontiguousarray(dy).reshape(-1, d)
        xh2 = np.ascontiguousarray(xhat).reshape(-1, d)
        rs2 = np.ascontiguousarray(rstd).reshape(-1, 1)
        dx = np.empty_like(dy2)
        dg = np.empty(d, dtype=dy2.dtype)
        db = np.empty(d, dtype=dy2.dtype)
        _layernorm_bwd2d(dy2, xh2, rs2, g.astype(dy2.dtype, copy=False), dx, dg, db)
        return dx.reshape(dy.shape), dg, db

    def gelu(x):
        x1 = np.ascontiguousarray(x).reshape(-1)
        out = np.empty_like(x1)
        _gelu1d(x1, out)
        return out.reshape(x.shape)

    def gelu_backward(x, dy):
        x1 = np.ascontiguousarray(x).reshape(-1)
        dy1 = np.ascontiguousarray(dy, dtype=x.dtype).reshape(-1)
        out = np.empty_like(x1)
        _gelu_bwd1d(x1, dy1, out)
        return out.reshape(x.shape)

    def lev(a, b):
        return int(levenshtein(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))

    # Without SVML numba evaluates exp/tanh one scalar at a time, which loses
    # to numpy's vectorized ufuncs; the jitted versions stay reachable as *_jit.
    vector_math = bool(getattr(numba.config, "USING_SVML", False))
    return SimpleNamespace(
        name="numba",
        levenshtein=lev,
        softmax=softmax if vector_math else _np_softmax,
        softmax_backward=softmax_backward,
        layernorm=layernorm,
        layernorm_backward=layernorm_backward,
        gelu=gelu if vector_math else _np_gelu,
        gelu_backward=gelu_backward if vector_math else _np_gelu_backward,
        softmax_jit=softmax,
        gelu_jit=gelu,
        gelu_backward_jit=gelu_backward,
    )


def _numba_requested() -> bool:
    return os.environ.get("PPANNOT_DISABLE_NUMBA", "0").strip().lower() in ("", "0", "false", "no")


try:
    numba_impl = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

active = numba_impl if (numba_impl is not None and _numba_requested()) else numpy_impl
BACKEND = active.name

levenshtein_ids = active.levenshtein
softmax = active.softmax
softmax_backward = active.softmax_backward
layernorm = active.layernorm
layernorm_backward = active.layernorm_backward
gelu = active.gelu
gelu_backward = active.gelu_backward
