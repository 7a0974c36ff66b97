"""Training primitives shared by fine-tuning and encoder pretraining:
batch encoding, the AdamW optimizer, and the two loss heads (element-wise
binary cross-entropy for classification, softmax cross-entropy over the
vocabulary for masked-token pretraining).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import kernels
from .encoder import EncoderConfig, encoder_backward, encoder_forward
from .tokenizer import BpeTokenizer, MASK_ID, UNK_ID


def encode_batch(
    tokenizer: BpeTokenizer,
    texts: Sequence[str],
    max_len: int,
    dtype=np.float32,
) -> tuple[np.ndarray, np.ndarray]:
    """Token ids padded to a fixed length plus the matching 0/1 mask.

    Every row is padded to exactly `max_len` so that predictions cannot
    depend on what else shares the batch.
    """
    n = len(texts)
    ids = np.zeros((n, max_len), dtype=np.int64)
    mask = np.zeros((n, max_len), dtype=dtype)
    for i, text in enumerate(texts):
        token_ids = tokenizer.encode(text)[:max_len]
        if not token_ids:
            token_ids = [UNK_ID]
        ids[i, : len(token_ids)] = token_ids
        mask[i, : len(token_ids)] = 1.0
    return ids, mask


class AdamW:
    """Adam with decoupled weight decay; decay applies only to matrices and
    embeddings (ndim >= 2), never to biases or layer-norm gains."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        names: Sequence[str] | None = None,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.names = list(names) if names is not None else list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = {name: np.zeros_like(params[name]) for name in self.names}
        self._v = {name: np.zeros_like(params[name]) for name in self.names}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        for name in self.names:
            param = params[name]
            decay = self.weight_decay if param.ndim >= 2 else 0.0
            kernels.adamw_step(
                param.reshape(-1),
                grads[name].reshape(-1),
                self._m[name].reshape(-1),
                self._v[name].reshape(-1),
                self.step_count,
                self.lr,
                self.beta1,
                self.beta2,
                self.eps,
                decay,
            )


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean element-wise binary cross-entropy and its gradient w.r.t. logits."""
    z, y = logits, targets
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    dlogits = (sigmoid(z) - y) / z.size
    return float(loss.mean()), dlogits.astype(z.dtype, copy=False)


# ---------------------------------------------------------------------------
# Masked-token pretraining
# ---------------------------------------------------------------------------


def corrupt_for_mlm(
    rng: np.random.Generator,
    ids: np.ndarray,
    mask: np.ndarray,
    vocab_size: int,
    mask_rate: float = 0.15,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """BERT-style corruption: pick `mask_rate` of the real positions; replace
    80% with <mask>, 10% with a random token, keep 10%.

    Returns (corrupted ids, flat selected positions, original token ids).
    """
    flat_real = np.flatnonzero(mask.reshape(-1) > 0)
    n_pick = max(1, int(round(flat_real.size * mask_rate)))
    picked = rng.choice(flat_real, size=n_pick, replace=False)
    picked.sort()
    corrupted = ids.copy().reshape(-1)
    targets = corrupted[picked].copy()
    roll = rng.random(n_pick)
    corrupted[picked[roll < 0.8]] = MASK_ID
    random_slots = picked[(roll >= 0.8) & (roll < 0.9)]
    if random_slots.size:
        # draw replacements from the non-special id range
        corrupted[random_slots] = rng.integers(
            MASK_ID + 1, vocab_size, size=random_slots.size
        )
    return corrupted.reshape(ids.shape), picked, targets


def mlm_step(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    ids: np.ndarray,
    mask: np.ndarray,
    positions: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and full gradients for one masked-token batch.

    The output projection is tied to the token embedding.
    """
    _, hidden, cache = encoder_forward(params, config, ids, mask)
    dim = config.dim
    hidden_flat = hidden.reshape(-1, dim)
    selected = np.ascontiguousarray(hidden_flat[positions])
    logits = selected @ params["tok_emb"].T + params["mlm_bias"]
    loss_sum, dlogits = kernels.ce_rows(np.ascontiguousarray(logits), targets)
    n = positions.size
    loss = loss_sum / n
    dlogits = dlogits / n
    dselected = dlogits @ params["tok_emb"]
    dhidden_flat = np.zeros_like(hidden_flat)
    dhidden_flat[positions] = dselected
    grads = encoder_backward(
        params, config, cache, dhidden=dhidden_flat.reshape(hidden.shape)
    )
    grads["tok_emb"] += dlogits.T @ selected
    grads["mlm_bias"] += dlogits.sum(axis=0)
    return loss, grads


def pretrain_mlm(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    tokenizer: BpeTokenizer,
    texts: Sequence[str],
    *,
    epochs: int,
    batch_size: int,
    max_len: int,
    lr: float,
    seed: int,
    mask_rate: float = 0.15,
    progress: Callable[[int, float], None] | None = None,
) -> list[float]:
    """Masked-token pretraining in place over `params`; returns the per-epoch
    mean loss curve."""
    dtype = params["tok_emb"].dtype
    ids_all, mask_all = encode_batch(tokenizer, texts, max_len, dtype=dtype)
    optimizer = AdamW(params, lr=lr)
    rng = np.random.default_rng(seed)
    curve: list[float] = []
    for epoch in range(epochs):
        order = rng.permutation(len(texts))
        losses: list[float] = []
        for start in range(0, len(texts), batch_size):
            pick = order[start : start + batch_size]
            ids = np.ascontiguousarray(ids_all[pick])
            mask = np.ascontiguousarray(mask_all[pick])
            corrupted, positions, targets = corrupt_for_mlm(
                rng, ids, mask, config.vocab_size, mask_rate
            )
            loss, grads = mlm_step(params, config, corrupted, mask, positions, targets)
            optimizer.step(params, grads)
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        curve.append(mean_loss)
        if progress is not None:
            progress(epoch, mean_loss)
    return curve
