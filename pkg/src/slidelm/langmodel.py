"""Toy text tower: contrastive text encoder with a summary token, an
adapter MLP projecting image latents into decoder space, and a small
causal decoder with chat templating, diagnostic-embedding extraction and
greedy generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .corpus.tokenizer import TokenSeq, Vocabulary, expand_image_span, strip_image
from .encoder import EncoderConfig, SlideEncoder, AttentionPooler, SurvivalHead

NEG = -1e30  # additive mask value; keeps exp() exactly zero without inf-arithmetic


def causal_mask(L: int, dtype) -> np.ndarray:
    m = np.zeros((L, L), dtype=dtype)
    m[np.triu_indices(L, k=1)] = NEG
    return m


def key_padding_mask(lengths: np.ndarray, L: int, dtype) -> np.ndarray:
    """(B, 1, 1, L) additive mask blocking padded key positions."""
    cols = np.arange(L)[None, :] >= np.asarray(lengths)[:, None]
    mask = np.zeros((len(lengths), 1, 1, L), dtype=dtype)
    mask[:, 0, 0, :][cols] = NEG
    return mask


def pad_batch(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.asarray([len(s) for s in seqs], dtype=np.int64)
    out = np.zeros((len(seqs), int(lengths.max())), dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, lengths


@dataclass
class TextEncoderConfig:
    vocab_size: int = 0
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_embed: int = 64
    max_len: int = 128


class TextEncoder(nn.Module):
    """Bidirectional encoder; a learnable summary token is prepended and
    its final hidden state is projected and l2-normalized."""

    def __init__(self, cfg: TextEncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        scale = 1.0 / np.sqrt(cfg.d_model)
        self.tok_emb = ad.parameter(
            rng.standard_normal((cfg.vocab_size, cfg.d_model)).astype(dtype) * scale)
        self.pos_emb = ad.parameter(
            rng.standard_normal((cfg.max_len + 1, cfg.d_model)).astype(dtype) * scale)
        self.summary = ad.parameter(rng.standard_normal(cfg.d_model).astype(dtype) * scale)
        self.blocks = [nn.TransformerBlock(rng, cfg.d_model, cfg.n_heads, dtype=dtype)
                       for _ in range(cfg.n_layers)]
        self.final_norm = nn.LayerNorm(cfg.d_model, dtype)
        self.proj = nn.Linear(rng, cfg.d_model, cfg.d_embed, dtype)

    def encode_batch(self, token_ids: list[np.ndarray]) -> Tensor:
        """(B, d_embed), unit rows."""
        if any(len(t) == 0 for t in token_ids):
            raise ValueError("cannot encode an empty token sequence")
        dtype = self.summary.dtype
        ids, lengths = pad_batch([np.asarray(t) for t in token_ids])
        B, L = ids.shape
        emb = ad.take_rows(self.tok_emb, ids)                       # (B, L, d)
        summary = self.summary.reshape(1, 1, -1) + Tensor(
            np.zeros((B, 1, self.cfg.d_model), dtype=dtype))
        x = ad.concat([summary, emb], axis=1) + self.pos_emb[:L + 1]
        mask = key_padding_mask(lengths + 1, L + 1, dtype)
        for block in self.blocks:
            x = block(x, mask)
        return nn.l2_normalize(self.proj(self.final_norm(x)[:, 0]))

    def encode(self, token_ids: np.ndarray) -> Tensor:
        return self.encode_batch([token_ids])[0]


@dataclass
class DecoderConfig:
    vocab_size: int = 0
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 256


class Decoder(nn.Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        scale = 1.0 / np.sqrt(cfg.d_model)
        self.tok_emb = ad.parameter(
            rng.standard_normal((cfg.vocab_size, cfg.d_model)).astype(dtype) * scale)
        self.pos_emb = ad.parameter(
            rng.standard_normal((cfg.max_len, cfg.d_model)).astype(dtype) * scale)
        self.blocks = [nn.TransformerBlock(rng, cfg.d_model, cfg.n_heads, dtype=dtype)
                       for _ in range(cfg.n_layers)]
        self.final_norm = nn.LayerNorm(cfg.d_model, dtype)
        self.head = nn.Linear(rng, cfg.d_model, cfg.vocab_size, dtype)

    def forward_batch(self, ids: np.ndarray, lengths: np.ndarray,
                      prefix: Tensor | None = None,
                      image_start: int = 1) -> tuple[Tensor, Tensor]:
        """Causal forward over padded (B, L) ids.

        When ``prefix`` (B, K, d_model) is given, token embeddings at
        positions [image_start, image_start+K) are replaced by it.
        Returns (logits (B, L, V), hidden (B, L, d) after the final norm).
        """
        dtype = self.tok_emb.dtype
        B, L = ids.shape
        if L > self.cfg.max_len:
            raise ValueError(f"sequence length {L} exceeds max_len {self.cfg.max_len}")
        emb = ad.take_rows(self.tok_emb, ids)
        if prefix is not None:
            K = prefix.shape[1]
            emb = ad.concat([emb[:, :image_start], prefix,
                             emb[:, image_start + K:]], axis=1)
        x = emb + self.pos_emb[:L]
        mask = causal_mask(L, dtype)[None, None] + key_padding_mask(lengths, L, dtype)
        for block in self.blocks:
            x = block(x, mask)
        hidden = self.final_norm(x)
        return self.head(hidden), hidden


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    vocab_size: int = 0
    d_text: int = 64
    text_layers: int = 2
    text_heads: int = 4
    d_dec: int = 64
    dec_layers: int = 2
    dec_heads: int = 4
    adapter_hidden: int = 128
    max_text_len: int = 128
    max_dec_len: int = 256
    tau_init: float = 0.1
    tau_min: float = 0.01
    tau_max: float = 1.0
    dtype: str = "float64"

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


class SlideLanguageModel(nn.Module):
    """Full wiring: slide encoder -> {base pooler, adapter -> decoder},
    text encoder for the contrastive side, learnable temperature."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, seed: int = 0):
        if cfg.vocab_size == 0:
            cfg.vocab_size = len(vocab)
        dtype = cfg.np_dtype
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocab = vocab
        self.encoder = SlideEncoder(cfg.encoder, rng, dtype)
        self.pooler = AttentionPooler(rng, cfg.encoder.d_model, cfg.encoder.d_embed, dtype)
        self.text = TextEncoder(TextEncoderConfig(
            cfg.vocab_size, cfg.d_text, cfg.text_layers, cfg.text_heads,
            cfg.encoder.d_embed, cfg.max_text_len), rng, dtype)
        self.adapter = nn.MLP(rng, cfg.encoder.d_model, cfg.adapter_hidden,
                              cfg.d_dec, dtype)
        self.decoder = Decoder(DecoderConfig(
            cfg.vocab_size, cfg.d_dec, cfg.dec_layers, cfg.dec_heads,
            cfg.max_dec_len), rng, dtype)
        self.survival = SurvivalHead(rng, cfg.encoder.d_model,
                                     cfg.encoder.d_embed, dtype)
        self.log_tau = ad.parameter(np.asarray(np.log(cfg.tau_init), dtype=dtype))

    def tau(self) -> Tensor:
        return self.log_tau.exp()

    def clamp_tau(self) -> None:
        self.log_tau.data = np.clip(self.log_tau.data,
                                    np.log(self.cfg.tau_min), np.log(self.cfg.tau_max))

    # ---- image side -------------------------------------------------------

    def adapt_latents(self, latents: Tensor) -> Tensor:
        """(M, K, d_model) -> (M, K, d_dec) decoder prefix tokens."""
        return self.adapter(latents)

    # ---- chat plumbing ----------------------------------------------------

    def prepare_chat(self, seq: TokenSeq, with_image: bool = True) -> TokenSeq:
        if with_image:
            return expand_image_span(seq, self.cfg.encoder.n_latents, self.vocab)
        return strip_image(seq, self.vocab)

    def decode(self, latents: Tensor | None, seqs: list[TokenSeq]) -> tuple[Tensor, Tensor, np.ndarray, np.ndarray]:
        """Forward expanded chat sequences; latents rows map 1:1 to seqs.

        Returns (logits, hidden, padded ids, lengths).
        """
        K = self.cfg.encoder.n_latents
        prefix = None
        if latents is not None:
            for seq in seqs:
                if seq.image_span is None or seq.image_span[1] != K:
                    raise ValueError("image placeholder count does not match latent count")
                if seq.image_span[0] != seqs[0].image_span[0]:
                    raise ValueError("image spans must align across the batch")
            prefix = self.adapt_latents(latents)
        ids, lengths = pad_batch([s.ids for s in seqs])
        start = seqs[0].image_span[0] if prefix is not None else 1
        logits, hidden = self.decoder.forward_batch(ids, lengths, prefix, start)
        return logits, hidden, ids, lengths

    def diagnostic_embedding(self, latents: Tensor, prompt: TokenSeq) -> np.ndarray:
        """Final-layer hidden state at the assistant-tag position."""
        tags = [i for i, t in enumerate(prompt.ids) if int(t) == self.vocab.assistant_id]
        if len(tags) != 1:
            raise ValueError(f"prompt must contain exactly one assistant tag, found {len(tags)}")
        seq = self.prepare_chat(prompt)
        pos = [i for i, t in enumerate(seq.ids) if int(t) == self.vocab.assistant_id][0]
        with ad.no_grad():
            _, hidden, _, _ = self.decode(latents, [seq])
        return hidden.data[0, pos].copy()

    def generate(self, latents: Tensor | None, prompt: TokenSeq, max_len: int = 64) -> str:
        """Greedy decoding until <|end|> or ``max_len`` new tokens."""
        seq = self.prepare_chat(prompt) if latents is not None else prompt
        ids = list(int(t) for t in seq.ids)
        generated: list[int] = []
        with ad.no_grad():
            for _ in range(max_len):
                arr = np.asarray(ids + generated, dtype=np.int64)[None, :]
                lengths = np.asarray([arr.shape[1]], dtype=np.int64)
                start = seq.image_span[0] if latents is not None else 1
                logits, _ = self.decoder.forward_batch(
                    arr, lengths, None if latents is None else self.adapt_latents(latents),
                    start)
                nxt = int(np.argmax(logits.data[0, -1]))
                if nxt == self.vocab.end_id:
                    break
                generated.append(nxt)
        return self.vocab.detokenize(generated)


def build_model(cfg: ModelConfig, vocab: Vocabulary, seed: int = 0) -> SlideLanguageModel:
    return SlideLanguageModel(cfg, vocab, seed)
