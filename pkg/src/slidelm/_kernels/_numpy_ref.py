"""Pure-numpy backend for packed grouped-query cross-attention.

Shapes:
    q       (H, K, dh)   query heads; the latent queries are shared by
                         every packed member
    k, v    (G, T, dh)   grouped key/value heads over the packed tile axis
    offsets (M+1,)       member boundaries along T
    out     (M, H, K, dh)
    attn    (H, K, T)    per-member softmax weights, laid out along T

Query heads h map to kv group h // (H // G).
"""

from __future__ import annotations

import numpy as np


def segment_attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                              offsets: np.ndarray, scale: float):
    H, K, dh = q.shape
    G = k.shape[0]
    T = k.shape[1]
    M = len(offsets) - 1
    gsize = H // G
    qg = q.reshape(G, gsize, K, dh)
    out = np.empty((M, H, K, dh), dtype=q.dtype)
    attn = np.empty((H, K, T), dtype=q.dtype)
    for m in range(M):
        s, e = offsets[m], offsets[m + 1]
        scores = np.matmul(qg, k[:, None, s:e].swapaxes(-1, -2)) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=-1, keepdims=True)
        attn[:, :, s:e] = scores.reshape(H, K, e - s)
        out[m] = np.matmul(scores, v[:, None, s:e]).reshape(H, K, dh)
    return out, attn


def segment_attention_backward(g_out: np.ndarray, q: np.ndarray, k: np.ndarray,
                               v: np.ndarray, attn: np.ndarray,
                               offsets: np.ndarray, scale: float):
    H, K, dh = q.shape
    G = k.shape[0]
    M = len(offsets) - 1
    gsize = H // G
    qg = q.reshape(G, gsize, K, dh)
    gq = np.zeros_like(q)
    gk = np.zeros_like(k)
    gv = np.zeros_like(v)
    gqg = gq.reshape(G, gsize, K, dh)
    for m in range(M):
        s, e = offsets[m], offsets[m + 1]
        a = attn[:, :, s:e].reshape(G, gsize, K, e - s)
        go = g_out[m].reshape(G, gsize, K, dh)
        da = np.matmul(go, v[:, None, s:e].swapaxes(-1, -2))
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True))
        gqg += np.matmul(ds, k[:, None, s:e]) * scale
        gk[:, s:e] += np.matmul(ds.swapaxes(-1, -2), qg).sum(axis=1) * scale
        gv[:, s:e] += np.matmul(a.swapaxes(-1, -2), go).sum(axis=1)
    return gq, gk, gv
