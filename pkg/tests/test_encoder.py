"""Encoder math, checked against finite differences (the independent oracle
for every hand-derived gradient) and padding-inertness properties."""

import numpy as np
import pytest

from issuetriage.encoder import (
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    init_params,
    load_weights,
    save_weights,
)
from issuetriage.training import bce_with_logits, mlm_step

CFG = EncoderConfig(vocab_size=13, dim=8, n_layers=2, n_heads=2, ff_dim=12, max_positions=9)


def _setup(seed=0):
    params = init_params(CFG, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    params["cls.w"] = rng.standard_normal((CFG.dim, 3)) * 0.1
    params["cls.b"] = np.zeros(3)
    ids = rng.integers(3, CFG.vocab_size, size=(3, 7))
    mask = np.ones((3, 7))
    mask[0, 5:] = 0.0
    mask[2, 3:] = 0.0
    targets = rng.integers(0, 2, size=(3, 3)).astype(np.float64)
    return params, ids, mask, targets, rng


def _classifier_loss(params, ids, mask, targets):
    pooled, _, cache = encoder_forward(params, CFG, ids, mask)
    logits = pooled @ params["cls.w"] + params["cls.b"]
    loss, dlogits = bce_with_logits(logits, targets)
    return loss, dlogits, pooled, cache


def _finite_difference_check(params, loss_only, grads, rng, skip=(), rel_tol=2e-4):
    """Compare analytic grads against central differences on sampled entries.

    Central differences carry ~1e-10 absolute cancellation noise at this loss
    scale, so tiny gradients are compared with an absolute floor instead.
    """
    eps = 1e-6
    for name, param in params.items():
        if name in skip:
            continue
        flat = param.reshape(-1)
        grad_flat = grads[name].reshape(-1)
        picks = rng.choice(flat.size, size=min(8, flat.size), replace=False)
        for i in picks:
            original = flat[i]
            flat[i] = original + eps
            loss_plus = loss_only()
            flat[i] = original - eps
            loss_minus = loss_only()
            flat[i] = original
            fd = (loss_plus - loss_minus) / (2 * eps)
            scale = max(abs(fd), abs(grad_flat[i]))
            tolerance = max(rel_tol * scale, 1e-8)
            assert abs(fd - grad_flat[i]) < tolerance, (name, int(i), fd, float(grad_flat[i]))


def test_classifier_gradients_match_finite_differences():
    params, ids, mask, targets, rng = _setup()
    loss, dlogits, pooled, cache = _classifier_loss(params, ids, mask, targets)
    grads = encoder_backward(params, CFG, cache, dpooled=dlogits @ params["cls.w"].T)
    grads["cls.w"] = pooled.T @ dlogits
    grads["cls.b"] = dlogits.sum(axis=0)
    _finite_difference_check(
        params,
        lambda: _classifier_loss(params, ids, mask, targets)[0],
        grads,
        rng,
        skip={"mlm_bias"},
    )


def test_mlm_gradients_match_finite_differences():
    params, ids, mask, _, rng = _setup(seed=2)
    positions = np.array([0, 2, 8, 15], dtype=np.int64)
    targets = rng.integers(3, CFG.vocab_size, size=positions.size)
    _, grads = mlm_step(params, CFG, ids, mask, positions, targets)
    _finite_difference_check(
        params,
        lambda: mlm_step(params, CFG, ids, mask, positions, targets)[0],
        grads,
        rng,
        skip={"cls.w", "cls.b"},
    )


def test_padding_is_inert():
    """Extending sequences with padded positions must not change outputs."""
    params, ids, mask, _, _ = _setup(seed=3)
    pooled_short, _, _ = encoder_forward(params, CFG, ids[:, :5], mask[:, :5] * 0 + 1)
    wide_ids = np.zeros((3, 9), dtype=ids.dtype)
    wide_ids[:, :5] = ids[:, :5]
    wide_mask = np.zeros((3, 9))
    wide_mask[:, :5] = 1.0
    pooled_wide, _, _ = encoder_forward(params, CFG, wide_ids, wide_mask)
    np.testing.assert_allclose(pooled_wide, pooled_short, rtol=1e-12, atol=1e-13)


def test_forward_deterministic():
    params, ids, mask, _, _ = _setup(seed=4)
    a, _, _ = encoder_forward(params, CFG, ids, mask)
    b, _, _ = encoder_forward(params, CFG, ids, mask)
    assert np.array_equal(a, b)


def test_sequence_length_guard():
    params, _, _, _, rng = _setup(seed=5)
    too_long = rng.integers(3, CFG.vocab_size, size=(1, CFG.max_positions + 1))
    with pytest.raises(ValueError, match="max_positions"):
        encoder_forward(params, CFG, too_long, np.ones_like(too_long, dtype=np.float64))


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=10, dim=7, n_layers=1, n_heads=2, ff_dim=8, max_positions=8)
    with pytest.raises(ValueError):
        EncoderConfig(vocab_size=0, dim=8, n_layers=1, n_heads=2, ff_dim=8, max_positions=8)


def test_weights_roundtrip_bitexact(tmp_path):
    params = init_params(CFG, seed=9, dtype=np.float32)
    save_weights(params, tmp_path / "w.npz")
    loaded = load_weights(tmp_path / "w.npz")
    assert set(loaded) == set(params)
    for name in params:
        assert params[name].dtype == loaded[name].dtype
        assert np.array_equal(params[name], loaded[name])
