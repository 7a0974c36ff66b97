"""Numeric hot kernels: numba-jitted loops with a pure-numpy fallback.

The backend is chosen once at import time. Numba is used when it is
importable unless the environment variable ``ISSUETRIAGE_NUMBA`` is set to
``0``/``false``/``off``/``no``, in which case numba is never imported and the
vectorized numpy implementations run everywhere. ``BACKEND`` names the choice.

Matrix multiplies are deliberately left to numpy's BLAS; these kernels cover
the fused row-wise and elementwise loops around them (layer norm, GELU,
softmax, the AdamW update, embedding-gradient scatter, CSR products for the
bag-of-words baseline, and softmax cross-entropy).

Both complete implementation sets exist and ``benchmarks/bench_kernels.py``
compares them, but the active numba backend jits only the kernels where
explicit loops actually win (multi-pass fusion, scatter writes, sparse
accumulation: ``_NUMBA_PREFERRED``). Pure elementwise transcendentals stay on
numpy's SIMD ufuncs, which beat scalar libm loops on every box we measured.

All kernels expect C-contiguous arrays; 2-d inputs are (rows, features).
"""

from __future__ import annotations

import math
import os

import numpy as np

_SQRT_2_OVER_PI = 0.7978845608028654
_GELU_C = 0.044715


def _numba_wanted() -> bool:
    flag = os.environ.get("ISSUETRIAGE_NUMBA", "").strip().lower()
    return flag not in ("0", "false", "off", "no")


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _layer_norm_np(x, gamma, beta, eps):
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean[:, None]) * rstd[:, None] * gamma + beta
    return y.astype(x.dtype, copy=False), mean.astype(x.dtype, copy=False), rstd.astype(x.dtype, copy=False)


def _layer_norm_grad_np(dy, x, gamma, mean, rstd):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dxhat = dy * gamma
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dxhat - m1 - xhat * m2)
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    return dx.astype(x.dtype, copy=False), dgamma, dbeta


def _gelu_np(x):
    u = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def _gelu_grad_np(x, dy):
    x2 = x * x
    u = _SQRT_2_OVER_PI * (x + _GELU_C * x * x2)
    t = np.tanh(u)
    du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def _softmax_rows_np(x):
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_rows_grad_np(dy, y):
    inner = (dy * y).sum(axis=-1, keepdims=True)
    return y * (dy - inner)


def _adamw_step_np(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * param)


def _scatter_add_rows_np(out, idx, src):
    np.add.at(out, idx, src)


def _csr_matvec_np(indptr, indices, data, w):
    vals = data * w[indices]
    cs = np.concatenate(([0.0], np.cumsum(vals)))
    return (cs[indptr[1:]] - cs[indptr[:-1]]).astype(w.dtype, copy=False)


def _csr_rmatvec_np(indptr, indices, data, r, dim):
    rows = np.repeat(np.arange(indptr.size - 1), np.diff(indptr))
    out = np.bincount(indices, weights=data * r[rows], minlength=dim)
    return out.astype(r.dtype, copy=False)


def _ce_rows_np(logits, targets):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    probs = e / z
    n = logits.shape[0]
    picked = logits[np.arange(n), targets]
    loss_sum = float(np.sum(np.log(z[:, 0]) + m[:, 0] - picked))
    dlogits = probs
    dlogits[np.arange(n), targets] -= 1.0
    return loss_sum, dlogits


_NUMPY_IMPLS = {
    "layer_norm": _layer_norm_np,
    "layer_norm_grad": _layer_norm_grad_np,
    "gelu": _gelu_np,
    "gelu_grad": _gelu_grad_np,
    "softmax_rows": _softmax_rows_np,
    "softmax_rows_grad": _softmax_rows_grad_np,
    "adamw_step": _adamw_step_np,
    "scatter_add_rows": _scatter_add_rows_np,
    "csr_matvec": _csr_matvec_np,
    "csr_rmatvec": _csr_rmatvec_np,
    "ce_rows": _ce_rows_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------


def _build_numba_impls():
    from numba import njit

    @njit(cache=True)
    def layer_norm(x, gamma, beta, eps):
        n, d = x.shape
        y = np.empty_like(x)
        mean = np.empty(n, dtype=x.dtype)
        rstd = np.empty(n, dtype=x.dtype)
        for i in range(n):
            s = 0.0
            for j in range(d):
                s += x[i, j]
            mu = s / d
            q = 0.0
            for j in range(d):
                t = x[i, j] - mu
                q += t * t
            r = 1.0 / math.sqrt(q / d + eps)
            mean[i] = mu
            rstd[i] = r
            for j in range(d):
                y[i, j] = (x[i, j] - mu) * r * gamma[j] + beta[j]
        return y, mean, rstd

    @njit(cache=True)
    def layer_norm_grad(dy, x, gamma, mean, rstd):
        n, d = x.shape
        dx = np.empty_like(x)
        dgamma = np.zeros(d, dtype=x.dtype)
        dbeta = np.zeros(d, dtype=x.dtype)
        for i in range(n):
            mu = mean[i]
            r = rstd[i]
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                xh = (x[i, j] - mu) * r
                dxh = dy[i, j] * gamma[j]
                s1 += dxh
                s2 += dxh * xh
                dgamma[j] += dy[i, j] * xh
                dbeta[j] += dy[i, j]
            m1 = s1 / d
            m2 = s2 / d
            for j in range(d):
                xh = (x[i, j] - mu) * r
                dx[i, j] = r * (dy[i, j] * gamma[j] - m1 - xh * m2)
        return dx, dgamma, dbeta

    @njit(cache=True)
    def gelu(x):
        out = np.empty_like(x)
        xf = x.reshape(x.size)
        of = out.reshape(out.size)
        for i in range(xf.size):
            v = xf[i]
            u = _SQRT_2_OVER_PI * (v + _GELU_C * v * v * v)
            of[i] = 0.5 * v * (1.0 + math.tanh(u))
        return out

    @njit(cache=True)
    def gelu_grad(x, dy):
        out = np.empty_like(x)
        xf = x.reshape(x.size)
        df = dy.reshape(dy.size)
        of = out.reshape(out.size)
        for i in range(xf.size):
            v = xf[i]
            v2 = v * v
            u = _SQRT_2_OVER_PI * (v + _GELU_C * v * v2)
            t = math.tanh(u)
            du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * v2)
            of[i] = df[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
        return out

    @njit(cache=True)
    def softmax_rows(x):
        shape = x.shape
        d = shape[-1]
        x2 = x.reshape(x.size // d, d)
        y = np.empty_like(x2)
        for i in range(x2.shape[0]):
            m = x2[i, 0]
            for j in range(1, d):
                if x2[i, j] > m:
                    m = x2[i, j]
            s = 0.0
            for j in range(d):
                e = math.exp(x2[i, j] - m)
                y[i, j] = e
                s += e
            inv = 1.0 / s
            for j in range(d):
                y[i, j] *= inv
        return y.reshape(shape)

    @njit(cache=True)
    def softmax_rows_grad(dy, y):
        shape = y.shape
        d = shape[-1]
        y2 = y.reshape(y.size // d, d)
        dy2 = dy.reshape(dy.size // d, d)
        dx = np.empty_like(y2)
        for i in range(y2.shape[0]):
            inner = 0.0
            for j in range(d):
                inner += dy2[i, j] * y2[i, j]
            for j in range(d):
                dx[i, j] = y2[i, j] * (dy2[i, j] - inner)
        return dx.reshape(shape)

    @njit(cache=True)
    def adamw_step(param, grad, m, v, step, lr, beta1, beta2, eps, weight_decay):
        bc1 = 1.0 - beta1**step
        bc2 = 1.0 - beta2**step
        for i in range(param.size):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            mhat = m[i] / bc1
            vhat = v[i] / bc2
            param[i] -= lr * (mhat / (math.sqrt(vhat) + eps) + weight_decay * param[i])

    @njit(cache=True)
    def scatter_add_rows(out, idx, src):
        n, d = src.shape
        for i in range(n):
            row = idx[i]
            for j in range(d):
                out[row, j] += src[i, j]

    @njit(cache=True)
    def csr_matvec(indptr, indices, data, w):
        n = indptr.size - 1
        out = np.zeros(n, dtype=w.dtype)
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * w[indices[k]]
            out[i] = s
        return out

    @njit(cache=True)
    def csr_rmatvec(indptr, indices, data, r, dim):
        out = np.zeros(dim, dtype=r.dtype)
        n = indptr.size - 1
        for i in range(n):
            ri = r[i]
            for k in range(indptr[i], indptr[i + 1]):
                out[indices[k]] += data[k] * ri
        return out

    @njit(cache=True)
    def ce_rows(logits, targets):
        n, d = logits.shape
        dlogits = np.empty_like(logits)
        loss_sum = 0.0
        for i in range(n):
            m = logits[i, 0]
            for j in range(1, d):
                if logits[i, j] > m:
                    m = logits[i, j]
            z = 0.0
            for j in range(d):
                e = math.exp(logits[i, j] - m)
                dlogits[i, j] = e
                z += e
            inv = 1.0 / z
            for j in range(d):
                dlogits[i, j] *= inv
            t = targets[i]
            loss_sum += math.log(z) + m - logits[i, t]
            dlogits[i, t] -= 1.0
        return loss_sum, dlogits

    return {
        "layer_norm": layer_norm,
        "layer_norm_grad": layer_norm_grad,
        "gelu": gelu,
        "gelu_grad": gelu_grad,
        "softmax_rows": softmax_rows,
        "softmax_rows_grad": softmax_rows_grad,
        "adamw_step": adamw_step,
        "scatter_add_rows": scatter_add_rows,
        "csr_matvec": csr_matvec,
        "csr_rmatvec": csr_rmatvec,
        "ce_rows": ce_rows,
    }


IMPLEMENTATIONS: dict[str, dict | None] = {"numpy": _NUMPY_IMPLS, "numba": None}

if _numba_wanted():
    try:
        IMPLEMENTATIONS["numba"] = _build_numba_impls()
    except ImportError:
        IMPLEMENTATIONS["numba"] = None

BACKEND: str = "numba" if IMPLEMENTATIONS["numba"] is not None else "numpy"

# Kernels where jitted loops beat vectorized numpy (see the benchmark):
# fused multi-pass row statistics, indexed scatter writes, CSR accumulation.
_NUMBA_PREFERRED = frozenset(
    {"layer_norm", "layer_norm_grad", "scatter_add_rows", "csr_matvec", "csr_rmatvec"}
)


def _select(name: str):
    numba_impls = IMPLEMENTATIONS["numba"]
    if numba_impls is not None and name in _NUMBA_PREFERRED:
        return numba_impls[name]
    return _NUMPY_IMPLS[name]


layer_norm = _select("layer_norm")
layer_norm_grad = _select("layer_norm_grad")
gelu = _select("gelu")
gelu_grad = _select("gelu_grad")
softmax_rows = _select("softmax_rows")
softmax_rows_grad = _select("softmax_rows_grad")
adamw_step = _select("adamw_step")
scatter_add_rows = _select("scatter_add_rows")
csr_matvec = _select("csr_matvec")
csr_rmatvec = _select("csr_rmatvec")
ce_rows = _select("ce_rows")
