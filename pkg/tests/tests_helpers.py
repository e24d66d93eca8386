"""Shared brute-force oracles used across test modules."""

from __future__ import annotations

import numpy as np


def naive_cross_attention(enc, tiles: np.ndarray) -> np.ndarray:
    """Repeat-kv reference path through the encoder's own parameters."""
    lat = enc.norm_latents(enc.latents).data
    ctx = enc.norm_context.__call__
    from slidelm.autodiff import Tensor

    context = ctx(Tensor(tiles.astype(enc.latents.dtype))).data
    H = enc.cross.q_heads
    G = enc.cross.kv_groups
    K, d_model = lat.shape
    dh = d_model // H
    q = (lat @ enc.cross.proj_q.weight.data + enc.cross.proj_q.bias.data)
    k = context @ enc.cross.proj_k.weight.data + enc.cross.proj_k.bias.data
    v = context @ enc.cross.proj_v.weight.data + enc.cross.proj_v.bias.data
    qh = q.reshape(K, H, dh).transpose(1, 0, 2)
    kh = np.repeat(k.reshape(-1, G, dh).transpose(1, 0, 2), H // G, axis=0)
    vh = np.repeat(v.reshape(-1, G, dh).transpose(1, 0, 2), H // G, axis=0)
    scores = qh @ kh.swapaxes(-1, -2) / np.sqrt(dh)
    a = np.exp(scores - scores.max(-1, keepdims=True))
    a /= a.sum(-1, keepdims=True)
    out = (a @ vh).transpose(1, 0, 2).reshape(K, d_model)
    out = out @ enc.cross.proj_out.weight.data + enc.cross.proj_out.bias.data
    return enc.latents.data + out[None]


def brute_force_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(n^2) pairwise count; ties 0.5."""
    labels = np.asarray(labels).astype(bool)
    pos = np.asarray(scores, float)[labels]
    neg = np.asarray(scores, float)[~labels]
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def brute_force_c_index(risk, time, event) -> float:
    risk = np.asarray(risk, float)
    time = np.asarray(time, float)
    event = np.asarray(event, bool)
    conc, num = 0.0, 0
    n = len(risk)
    for i in range(n):
        for j in range(n):
            if time[i] < time[j] and event[i]:
                num += 1
                if risk[i] > risk[j]:
                    conc += 1.0
                elif risk[i] == risk[j]:
                    conc += 0.5
    return conc / num
