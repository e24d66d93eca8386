"""Parameter containers and shared layers built on the autodiff core."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Base class; registers Tensor/Module attributes in definition order."""

    def named_params(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_params(f"{name}."))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_params(f"{name}.{i}."))
        return out

    def trainable_params(self, prefix: str = "") -> dict[str, Tensor]:
        return {n: p for n, p in self.named_params(prefix).items() if p.requires_grad}

    def zero_grad(self) -> None:
        for p in self.named_params().values():
            p.grad = None

    def set_trainable(self, flag: bool) -> None:
        for key, val in vars(self).items():
            if isinstance(val, Tensor):
                val.requires_grad = flag
            elif isinstance(val, Module):
                val.set_trainable(flag)
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        item.set_trainable(flag)


def checksum(params: dict[str, Tensor]) -> str:
    """Order-insensitive digest of parameter bytes; detects any drift."""
    import hashlib

    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name].data).tobytes())
    return h.hexdigest()


def init_linear(rng: np.random.Generator, d_in: int, d_out: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(d_in)
    return rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int,
                 dtype=np.float64, bias: bool = True):
        self.weight = ad.parameter(init_linear(rng, d_in, d_out, dtype))
        self.bias = ad.parameter(np.zeros(d_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float64, eps: float = 1e-5):
        self.gain = ad.parameter(np.ones(dim, dtype=dtype))
        self.shift = ad.parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.gain, self.shift, self.eps)


class MLP(Module):
    """Two-layer GELU MLP."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int,
                 d_out: int, dtype=np.float64):
        self.fc1 = Linear(rng, d_in, d_hidden, dtype)
        self.fc2 = Linear(rng, d_hidden, d_out, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.gelu(self.fc1(x)))


def l2_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    norm = ((x * x).sum(axis=-1, keepdims=True) + eps).sqrt()
    return x / norm


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    """(..., L, H*dh) -> (..., H, L, dh)"""
    *lead, L, d = x.shape
    dh = d // n_heads
    return x.reshape(*lead, L, n_heads, dh).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """(..., H, L, dh) -> (..., L, H*dh)"""
    y = x.swapaxes(-2, -3)
    *lead, L, H, dh = y.shape
    return y.reshape(*lead, L, H * dh)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor,
                         mask: np.ndarray | None = None) -> Tensor:
    """Dense attention over matching head layouts (..., H, L, dh).

    ``mask`` is additive (0 where allowed, -inf where blocked) and must
    broadcast against the score shape (..., H, Lq, Lk).
    """
    dh = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    if mask is not None:
        scores = scores + Tensor(mask)
    return ad.softmax(scores, axis=-1) @ v


class SelfAttention(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int,
                 dtype=np.float64):
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.qkv = Linear(rng, d_model, 3 * d_model, dtype)
        self.out = Linear(rng, d_model, d_model, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        d = x.shape[-1]
        qkv = self.qkv(x)
        q = split_heads(qkv[..., :d], self.n_heads)
        k = split_heads(qkv[..., d:2 * d], self.n_heads)
        v = split_heads(qkv[..., 2 * d:], self.n_heads)
        return self.out(merge_heads(scaled_dot_attention(q, k, v, mask)))


class TransformerBlock(Module):
    """Pre-norm residual block: LN -> self-attention, LN -> MLP."""

    def __init__(self, rng: np.random.Generator, d_model: int, n_heads: int,
                 mlp_expansion: int = 4, dtype=np.float64, eps: float = 1e-5):
        self.norm_attn = LayerNorm(d_model, dtype, eps)
        self.attn = SelfAttention(rng, d_model, n_heads, dtype)
        self.norm_mlp = LayerNorm(d_model, dtype, eps)
        self.mlp = MLP(rng, d_model, mlp_expansion * d_model, d_model, dtype)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm_attn(x), mask)
        return x + self.mlp(self.norm_mlp(x))
