#!/usr/bin/env python3
"""Benchmark the hot kernels: numba backend vs the pure-numpy fallback.

Times each kernel over shapes representative of desk-scale training
(batch 8, sequence 128, model dim 64) and of the sparse baseline, and prints
per-kernel timings with the speedup factor. Requires the numba backend
(do not set ISSUETRIAGE_NUMBA=0 when running this).

Usage: python benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

REPO_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO_ROOT / "src"))

from issuetriage import kernels  # noqa: E402

B, L, D, FF, V = 8, 128, 64, 128, 1024
rng = np.random.default_rng(0)


def _f32(*shape):
    return rng.standard_normal(shape).astype(np.float32)


def _make_csr(rows, dim, nnz_per_row):
    indptr = np.arange(0, rows * nnz_per_row + 1, nnz_per_row, dtype=np.int64)
    indices = rng.integers(0, dim, size=rows * nnz_per_row).astype(np.int64)
    data = rng.standard_normal(rows * nnz_per_row)
    return indptr, indices, data


def build_cases():
    x2d = _f32(B * L, D)
    gamma, beta = _f32(D), _f32(D)
    dy = _f32(B * L, D)
    _, mean, rstd = kernels.IMPLEMENTATIONS["numpy"]["layer_norm"](x2d, gamma, beta, 1e-5)
    act = _f32(B * L, FF)
    dact = _f32(B * L, FF)
    scores = _f32(B * 2 * L, L)
    probs = kernels.IMPLEMENTATIONS["numpy"]["softmax_rows"](scores)
    dprobs = _f32(B * 2 * L, L)
    param = _f32(V * D)
    grad = _f32(V * D)
    m = np.zeros(V * D, dtype=np.float32)
    v = np.zeros(V * D, dtype=np.float32)
    ids = rng.integers(0, V, size=B * L).astype(np.int64)
    emb_grad_src = _f32(B * L, D)
    indptr, indices, data = _make_csr(rows=500, dim=4000, nnz_per_row=30)
    w = rng.standard_normal(4000)
    residual = rng.standard_normal(500)
    logits = _f32(64, V)
    targets = rng.integers(0, V, size=64)

    return {
        "layer_norm (1024x64)": ("layer_norm", lambda f: f(x2d, gamma, beta, 1e-5)),
        "layer_norm_grad": ("layer_norm_grad", lambda f: f(dy, x2d, gamma, mean, rstd)),
        "gelu (1024x128)": ("gelu", lambda f: f(act)),
        "gelu_grad": ("gelu_grad", lambda f: f(act, dact)),
        "softmax_rows (2048x128)": ("softmax_rows", lambda f: f(scores)),
        "softmax_rows_grad": ("softmax_rows_grad", lambda f: f(dprobs, probs)),
        "adamw_step (65k params)": (
            "adamw_step",
            lambda f: f(param, grad, m, v, 5, 1e-3, 0.9, 0.999, 1e-8, 0.01),
        ),
        "scatter_add_rows (1024x64)": (
            "scatter_add_rows",
            lambda f: f(np.zeros((V, D), dtype=np.float32), ids, emb_grad_src),
        ),
        "csr_matvec (500x4000, nnz 15k)": (
            "csr_matvec",
            lambda f: f(indptr, indices, data, w),
        ),
        "csr_rmatvec": ("csr_rmatvec", lambda f: f(indptr, indices, data, residual, 4000)),
        "ce_rows (64x1024)": ("ce_rows", lambda f: f(logits.copy(), targets)),
    }


def bench(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    numba_impls = kernels.IMPLEMENTATIONS["numba"]
    if numba_impls is None:
        print("numba backend unavailable (disabled or not installed); nothing to compare")
        return 1
    numpy_impls = kernels.IMPLEMENTATIONS["numpy"]

    cases = build_cases()
    # warm the JIT before timing
    for label, (name, call) in cases.items():
        call(numba_impls[name])

    width = max(len(label) for label in cases)
    print(f"{'kernel':<{width}} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for label, (name, call) in cases.items():
        t_np = bench(lambda: call(numpy_impls[name]), args.repeats)
        t_nb = bench(lambda: call(numba_impls[name]), args.repeats)
        print(
            f"{label:<{width}} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
            f"{t_np / t_nb:>8.2f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
