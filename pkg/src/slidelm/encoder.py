"""Perceiver slide encoder: GQA cross-attention from latent queries onto
packed tile sequences, latent self-attention blocks, attention pooling
into the unit-norm base embedding, a separate survival pooling head, and
attention-heatmap extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .packer import PackedBatch


@dataclass
class EncoderConfig:
    d_in: int = 64
    d_model: int = 64
    n_latents: int = 32        # paper-scale: 256
    n_self_layers: int = 2     # paper-scale: 6
    q_heads: int = 8
    kv_groups: int = 2
    mlp_expansion: int = 4
    d_embed: int = 64
    eps: float = 1e-5

    def validate(self) -> None:
        if self.q_heads % self.kv_groups:
            raise ValueError("q_heads must be divisible by kv_groups")
        if self.d_model % self.q_heads:
            raise ValueError("d_model must be divisible by q_heads")
        if self.n_self_layers < 0:
            raise ValueError("n_self_layers must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.q_heads


def segment_cross_attention(q: Tensor, k: Tensor, v: Tensor,
                            offsets: np.ndarray, scale: float) -> Tensor:
    """Autodiff wrapper over the packed-attention kernel.

    q (H, K, dh); k, v (G, T, dh); returns (M, H, K, dh).
    """
    out, attn = kernels.segment_attention_forward(q.data, k.data, v.data, offsets, scale)

    def vjp(g: np.ndarray):
        return kernels.segment_attention_backward(
            np.ascontiguousarray(g), q.data, k.data, v.data, attn, offsets, scale)

    return ad.custom_op(out, (q, k, v), vjp)


class GQACrossAttention(nn.Module):
    """Latent queries attend over each member's tiles; key/value
    projections are shared across each group of query heads."""

    def __init__(self, rng: np.random.Generator, cfg: EncoderConfig, dtype=np.float64):
        dh = cfg.head_dim
        self.q_heads = cfg.q_heads
        self.kv_groups = cfg.kv_groups
        self.proj_q = nn.Linear(rng, cfg.d_model, cfg.d_model, dtype)
        self.proj_k = nn.Linear(rng, cfg.d_in, cfg.kv_groups * dh, dtype)
        self.proj_v = nn.Linear(rng, cfg.d_in, cfg.kv_groups * dh, dtype)
        self.proj_out = nn.Linear(rng, cfg.d_model, cfg.d_model, dtype)

    def _heads(self, latents: Tensor, context: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        K = latents.shape[0]
        T = context.shape[0]
        dh = latents.shape[-1] // self.q_heads
        q = self.proj_q(latents).reshape(K, self.q_heads, dh).swapaxes(0, 1)
        k = self.proj_k(context).reshape(T, self.kv_groups, dh).swapaxes(0, 1)
        v = self.proj_v(context).reshape(T, self.kv_groups, dh).swapaxes(0, 1)
        return q, k, v

    def __call__(self, latents: Tensor, context: Tensor,
                 offsets: np.ndarray) -> Tensor:
        if np.any(np.diff(offsets) <= 0):
            raise ValueError("zero-length member in packed batch")
        K = latents.shape[0]
        dh = latents.shape[-1] // self.q_heads
        q, k, v = self._heads(latents, context)
        out = segment_cross_attention(q, k, v, offsets, 1.0 / np.sqrt(dh))
        merged = out.swapaxes(1, 2).reshape(len(offsets) - 1, K, self.q_heads * dh)
        return self.proj_out(merged)


class AttentionPooler(nn.Module):
    """Single learnable query over the K latents, projected to d_embed."""

    def __init__(self, rng: np.random.Generator, d_model: int, d_embed: int,
                 dtype=np.float64):
        self.query = ad.parameter(rng.standard_normal(d_model).astype(dtype)
                                  / np.sqrt(d_model))
        self.proj = nn.Linear(rng, d_model, d_embed, dtype)

    def attend(self, latents: Tensor) -> Tensor:
        scale = 1.0 / np.sqrt(latents.shape[-1])
        scores = (latents @ self.query) * scale          # (M, K)
        weights = ad.softmax(scores, axis=-1)
        pooled = (weights.reshape(*weights.shape, 1) * latents).sum(axis=-2)
        return self.proj(pooled)                          # (M, d_embed)


class SlideEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        cfg.validate()
        self.cfg = cfg
        self.latents = ad.parameter(
            rng.standard_normal((cfg.n_latents, cfg.d_model)).astype(dtype)
            / np.sqrt(cfg.d_model))
        self.norm_latents = nn.LayerNorm(cfg.d_model, dtype, cfg.eps)
        self.norm_context = nn.LayerNorm(cfg.d_in, dtype, cfg.eps)
        self.cross = GQACrossAttention(rng, cfg, dtype)
        self.blocks = [nn.TransformerBlock(rng, cfg.d_model, cfg.q_heads,
                                           cfg.mlp_expansion, dtype, cfg.eps)
                       for _ in range(cfg.n_self_layers)]
        self.final_norm = nn.LayerNorm(cfg.d_model, dtype, cfg.eps)

    def _as_packed(self, tiles) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(tiles, PackedBatch):
            return tiles.data, tiles.offsets
        data = np.asarray(tiles)
        return data, np.asarray([0, data.shape[0]], dtype=np.int64)

    def cross_block(self, tiles) -> Tensor:
        data, offsets = self._as_packed(tiles)
        if data.shape[-1] != self.cfg.d_in:
            raise ValueError(f"tile dim {data.shape[-1]} != configured d_in {self.cfg.d_in}")
        context = self.norm_context(Tensor(data.astype(self.latents.dtype)))
        attended = self.cross(self.norm_latents(self.latents), context, offsets)
        return self.latents + attended                    # (M, K, d_model)

    def encode(self, tiles) -> Tensor:
        """LatentState (M, K, d_model) per packed member."""
        h = self.cross_block(tiles)
        for block in self.blocks:
            h = block(h)
        return self.final_norm(h)

    def attention_scores(self, tiles) -> tuple[np.ndarray, np.ndarray]:
        """(attn (H, K, T), value heads (G, T, dh)) without building a graph."""
        data, offsets = self._as_packed(tiles)
        with ad.no_grad():
            context = self.norm_context(Tensor(data.astype(self.latents.dtype)))
            q, k, v = self.cross._heads(self.norm_latents(self.latents), context)
            _, attn = kernels.segment_attention_forward(
                q.data, k.data, v.data, offsets, 1.0 / np.sqrt(q.shape[-1]))
        return attn, v.data


def pool_base(latents: Tensor, pooler: AttentionPooler) -> Tensor:
    """Unit-norm base embedding (M, d_embed)."""
    return nn.l2_normalize(pooler.attend(latents))


class SurvivalHead(nn.Module):
    """Separate pooling query plus a linear log-relative-hazard head."""

    def __init__(self, rng: np.random.Generator, d_model: int, d_embed: int,
                 dtype=np.float64):
        self.pooler = AttentionPooler(rng, d_model, d_embed, dtype)
        self.head = nn.Linear(rng, d_embed, 1, dtype)

    def __call__(self, latents: Tensor) -> tuple[Tensor, Tensor]:
        emb = self.pooler.attend(latents)                 # (M, d_embed)
        hazard = self.head(emb).reshape(emb.shape[0])     # (M,)
        return emb, hazard


def attention_heatmap(encoder: SlideEncoder, tiles) -> np.ndarray:
    """Per-tile relevance: attention mass summed over heads and queries,
    weighted by the l2 norm of the corresponding value vectors."""
    attn, v = encoder.attention_scores(tiles)
    H = attn.shape[0]
    G = v.shape[0]
    gsize = H // G
    vnorm = np.linalg.norm(v, axis=-1)                    # (G, T)
    per_head = attn.sum(axis=1)                           # (H, T)
    groups = np.arange(H) // gsize
    return (per_head * vnorm[groups]).sum(axis=0)         # (T,)
