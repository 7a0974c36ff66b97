"""Bidirectional transformer encoder in numpy: forward pass, hand-derived
backward pass, and parameter initialization.

Pre-norm residual blocks (self-attention then GELU MLP), learned positional
embeddings, a final layer norm, and masked mean pooling over token positions.
Matmuls run on BLAS; the row-wise/elementwise pieces go through
``issuetriage.kernels`` so they pick up the numba backend when active.

Padding is inert by construction: pad positions are excluded from attention
keys and from pooling, so their activations never influence real positions.
That is what makes truncation invariance and batch-size-independent
predictions hold bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ArtifactError, VersionError

ENCODER_FORMAT_VERSION = 1

_NEG_BIG = -1e30


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    dim: int
    n_layers: int
    n_heads: int
    ff_dim: int
    max_positions: int
    layer_norm_eps: float = 1e-5

    def __post_init__(self) -> None:
        for name in ("vocab_size", "dim", "n_layers", "n_heads", "ff_dim", "max_positions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.dim % self.n_heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by n_heads {self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.dim // self.n_heads

    def to_dict(self) -> dict:
        return {"format_version": ENCODER_FORMAT_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        version = data.get("format_version", 0)
        if version > ENCODER_FORMAT_VERSION:
            raise VersionError(
                f"encoder format version {version} is newer than supported "
                f"version {ENCODER_FORMAT_VERSION}"
            )
        fields = {k: v for k, v in data.items() if k != "format_version"}
        return cls(**fields)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EncoderConfig":
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"encoder config not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


def init_params(
    config: EncoderConfig, seed: int, dtype=np.float32
) -> dict[str, np.ndarray]:
    """Fresh encoder parameters: N(0, 0.02) weights, zero biases, unit gains."""
    rng = np.random.default_rng(seed)
    scale = 0.02

    def normal(*shape):
        return (rng.standard_normal(shape) * scale).astype(dtype)

    def zeros(*shape):
        return np.zeros(shape, dtype=dtype)

    def ones(*shape):
        return np.ones(shape, dtype=dtype)

    d, f = config.dim, config.ff_dim
    params: dict[str, np.ndarray] = {
        "tok_emb": normal(config.vocab_size, d),
        "pos_emb": normal(config.max_positions, d),
        "final_ln.gamma": ones(d),
        "final_ln.beta": zeros(d),
        "mlm_bias": zeros(config.vocab_size),
    }
    for i in range(config.n_layers):
        p = f"layers.{i}."
        params[p + "ln1.gamma"] = ones(d)
        params[p + "ln1.beta"] = zeros(d)
        params[p + "attn.wq"] = normal(d, d)
        params[p + "attn.bq"] = zeros(d)
        params[p + "attn.wk"] = normal(d, d)
        params[p + "attn.bk"] = zeros(d)
        params[p + "attn.wv"] = normal(d, d)
        params[p + "attn.bv"] = zeros(d)
        params[p + "attn.wo"] = normal(d, d)
        params[p + "attn.bo"] = zeros(d)
        params[p + "ln2.gamma"] = ones(d)
        params[p + "ln2.beta"] = zeros(d)
        params[p + "mlp.w1"] = normal(d, f)
        params[p + "mlp.b1"] = zeros(f)
        params[p + "mlp.w2"] = normal(f, d)
        params[p + "mlp.b2"] = zeros(d)
    return params


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, l, d = x.shape
    return x.reshape(b, l, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, l, hd = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, l, h * hd)


def encoder_forward(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    ids: np.ndarray,
    mask: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Run the encoder over (B, L) token ids with a (B, L) 0/1 mask.

    Returns (pooled (B, D), hidden (B, L, D), cache-for-backward).
    """
    b, l = ids.shape
    if l > config.max_positions:
        raise ValueError(f"sequence length {l} exceeds max_positions {config.max_positions}")
    dtype = params["tok_emb"].dtype
    eps = config.layer_norm_eps
    scale = 1.0 / math.sqrt(config.head_dim)
    mask = mask.astype(dtype, copy=False)
    key_bias = ((1.0 - mask) * _NEG_BIG)[:, None, None, :]  # (B,1,1,L)

    x = params["tok_emb"][ids] + params["pos_emb"][:l]
    layer_caches = []
    for i in range(config.n_layers):
        p = f"layers.{i}."
        # Attention block (pre-norm)
        h_flat, mean1, rstd1 = kernels.layer_norm(
            x.reshape(b * l, config.dim), params[p + "ln1.gamma"], params[p + "ln1.beta"], eps
        )
        h = h_flat.reshape(b, l, config.dim)
        q = h @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = h @ params[p + "attn.wk"] + params[p + "attn.bk"]
        v = h @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh = _split_heads(q, config.n_heads)
        kh = _split_heads(k, config.n_heads)
        vh = _split_heads(v, config.n_heads)
        scores = qh @ kh.swapaxes(-1, -2) * scale + key_bias
        probs = kernels.softmax_rows(scores)
        ctx = _merge_heads(probs @ vh)
        attn_out = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        x1 = x + attn_out

        # MLP block (pre-norm)
        h2_flat, mean2, rstd2 = kernels.layer_norm(
            x1.reshape(b * l, config.dim), params[p + "ln2.gamma"], params[p + "ln2.beta"], eps
        )
        h2 = h2_flat.reshape(b, l, config.dim)
        a = h2 @ params[p + "mlp.w1"] + params[p + "mlp.b1"]
        g = kernels.gelu(a)
        x2 = x1 + g @ params[p + "mlp.w2"] + params[p + "mlp.b2"]

        layer_caches.append(
            {
                "x": x, "h": h, "mean1": mean1, "rstd1": rstd1,
                "qh": qh, "kh": kh, "vh": vh, "probs": probs, "ctx": ctx,
                "x1": x1, "h2": h2, "mean2": mean2, "rstd2": rstd2, "a": a, "g": g,
            }
        )
        x = x2

    hidden_flat, mean_f, rstd_f = kernels.layer_norm(
        x.reshape(b * l, config.dim), params["final_ln.gamma"], params["final_ln.beta"], eps
    )
    hidden = hidden_flat.reshape(b, l, config.dim)
    denom = mask.sum(axis=1)
    pooled = (hidden * mask[:, :, None]).sum(axis=1) / denom[:, None]

    cache = {
        "ids": ids, "mask": mask, "denom": denom, "x_top": x,
        "mean_f": mean_f, "rstd_f": rstd_f, "layers": layer_caches,
        "b": b, "l": l, "scale": scale,
    }
    return pooled, hidden, cache


def encoder_backward(
    params: dict[str, np.ndarray],
    config: EncoderConfig,
    cache: dict,
    dpooled: np.ndarray | None = None,
    dhidden: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every encoder parameter.

    Either or both of dpooled (B, D) and dhidden (B, L, D) may be given;
    their contributions are summed.
    """
    b, l, d = cache["b"], cache["l"], config.dim
    mask, denom = cache["mask"], cache["denom"]
    grads = {name: np.zeros_like(value) for name, value in params.items()}

    dhid = np.zeros((b, l, d), dtype=params["tok_emb"].dtype)
    if dpooled is not None:
        dhid += dpooled[:, None, :] * (mask / denom[:, None])[:, :, None]
    if dhidden is not None:
        dhid += dhidden

    dx_flat, dgf, dbf = kernels.layer_norm_grad(
        dhid.reshape(b * l, d),
        cache["x_top"].reshape(b * l, d),
        params["final_ln.gamma"],
        cache["mean_f"],
        cache["rstd_f"],
    )
    grads["final_ln.gamma"] += dgf
    grads["final_ln.beta"] += dbf
    dx = dx_flat.reshape(b, l, d)

    for i in reversed(range(config.n_layers)):
        p = f"layers.{i}."
        c = cache["layers"][i]

        # MLP block: x2 = x1 + gelu(ln2(x1) @ w1 + b1) @ w2 + b2
        do = dx
        do_flat = do.reshape(b * l, d)
        g_flat = c["g"].reshape(b * l, config.ff_dim)
        grads[p + "mlp.w2"] += g_flat.T @ do_flat
        grads[p + "mlp.b2"] += do_flat.sum(axis=0)
        dg = do @ params[p + "mlp.w2"].T
        da = kernels.gelu_grad(c["a"], np.ascontiguousarray(dg))
        da_flat = da.reshape(b * l, config.ff_dim)
        h2_flat = c["h2"].reshape(b * l, d)
        grads[p + "mlp.w1"] += h2_flat.T @ da_flat
        grads[p + "mlp.b1"] += da_flat.sum(axis=0)
        dh2 = (da @ params[p + "mlp.w1"].T).reshape(b * l, d)
        dx1_ln, dg2, db2 = kernels.layer_norm_grad(
            dh2, c["x1"].reshape(b * l, d), params[p + "ln2.gamma"], c["mean2"], c["rstd2"]
        )
        grads[p + "ln2.gamma"] += dg2
        grads[p + "ln2.beta"] += db2
        dx1 = dx + dx1_ln.reshape(b, l, d)

        # Attention block: x1 = x + (softmax(qk^T/sqrt(hd) + bias) v) @ wo + bo
        dattn = dx1
        dattn_flat = dattn.reshape(b * l, d)
        ctx_flat = c["ctx"].reshape(b * l, d)
        grads[p + "attn.wo"] += ctx_flat.T @ dattn_flat
        grads[p + "attn.bo"] += dattn_flat.sum(axis=0)
        dctx = _split_heads(dattn @ params[p + "attn.wo"].T, config.n_heads)
        dprobs = dctx @ c["vh"].swapaxes(-1, -2)
        dvh = c["probs"].swapaxes(-1, -2) @ dctx
        dscores = kernels.softmax_rows_grad(dprobs, c["probs"]) * cache["scale"]
        dqh = dscores @ c["kh"]
        dkh = dscores.swapaxes(-1, -2) @ c["qh"]
        dq = _merge_heads(dqh)
        dk = _merge_heads(dkh)
        dv = _merge_heads(dvh)
        h_flat = c["h"].reshape(b * l, d)
        grads[p + "attn.wq"] += h_flat.T @ dq.reshape(b * l, d)
        grads[p + "attn.bq"] += dq.reshape(b * l, d).sum(axis=0)
        grads[p + "attn.wk"] += h_flat.T @ dk.reshape(b * l, d)
        grads[p + "attn.bk"] += dk.reshape(b * l, d).sum(axis=0)
        grads[p + "attn.wv"] += h_flat.T @ dv.reshape(b * l, d)
        grads[p + "attn.bv"] += dv.reshape(b * l, d).sum(axis=0)
        dh = dq @ params[p + "attn.wq"].T + dk @ params[p + "attn.wk"].T + dv @ params[p + "attn.wv"].T
        dx_ln, dg1, db1 = kernels.layer_norm_grad(
            dh.reshape(b * l, d), c["x"].reshape(b * l, d), params[p + "ln1.gamma"], c["mean1"], c["rstd1"]
        )
        grads[p + "ln1.gamma"] += dg1
        grads[p + "ln1.beta"] += db1
        dx = dx1 + dx_ln.reshape(b, l, d)

    kernels.scatter_add_rows(
        grads["tok_emb"], np.ascontiguousarray(cache["ids"].reshape(-1)), dx.reshape(b * l, d)
    )
    grads["pos_emb"][:l] += dx.sum(axis=0)
    return grads


# ---------------------------------------------------------------------------
# Weight persistence
# ---------------------------------------------------------------------------


def save_weights(params: dict[str, np.ndarray], path: str | Path) -> None:
    np.savez(Path(path), **params)


def load_weights(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"weights file not found: {path}")
    with np.load(path) as data:
        return {name: data[name] for name in data.files}
