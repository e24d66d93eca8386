"""Training objectives: symmetric contrastive loss, assistant-masked chat
loss, their weighted combination, and the Cox partial likelihood."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def contrastive_loss(v: Tensor, t: Tensor, tau: Tensor) -> Tensor:
    """Symmetric cross-entropy over image/text similarity logits.

    Both directions are summed and the total divided by the batch size;
    rows of ``v`` and ``t`` are unit-norm embeddings, ``tau`` a positive
    learned temperature.
    """
    if float(tau.data) <= 0:
        raise ValueError("temperature must be positive")
    n = v.shape[0]
    if n < 1 or t.shape != v.shape:
        raise ValueError("need matching non-empty embedding batches")
    logits = (v @ t.T) / tau
    diag = (np.arange(n), np.arange(n))
    image_to_text = ad.log_softmax(logits, axis=1)[diag]
    text_to_image = ad.log_softmax(logits, axis=0)[diag]
    return -(image_to_text.sum() + text_to_image.sum()) * (1.0 / n)


def chat_loss(logits: Tensor, targets: np.ndarray, assistant_mask: np.ndarray,
              reduction: str = "sum") -> Tensor:
    """Negative log-likelihood over the assistant-masked target positions.

    ``reduction="sum"`` is the canonical form; ``"mean"`` divides by the
    number of masked tokens.
    """
    mask = np.asarray(assistant_mask)
    n_masked = int(mask.sum())
    if n_masked == 0:
        raise ValueError("assistant mask selects no positions")
    lsm = ad.log_softmax(logits, axis=-1)
    picked = ad.take_along(lsm, np.asarray(targets)[..., None], axis=-1)
    picked = picked.reshape(targets.shape)
    total = -(picked * mask.astype(logits.dtype)).sum()
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total * (1.0 / n_masked)
    raise ValueError(f"unknown reduction {reduction!r}")


def total_loss(l_con: Tensor | float, l_chat: Tensor | float,
               lambda_con: float = 0.25, lambda_chat: float = 1.0) -> Tensor:
    return ad.as_tensor(l_con) * lambda_con + ad.as_tensor(l_chat) * lambda_chat


def cox_partial_nll(log_hazards: Tensor, times: np.ndarray,
                    events: np.ndarray) -> Tensor:
    """Negative Cox partial log-likelihood with Breslow tie handling.

    Risk set for an event at time t is every sample with t_j >= t; tied
    event times share the same risk-set denominator.
    """
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    n = log_hazards.shape[0]
    if times.shape != (n,) or events.shape != (n,):
        raise ValueError("log_hazards, times and events must have equal length")
    if not events.any():
        raise ValueError("Cox partial likelihood needs at least one event")
    order = np.argsort(-times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    h_sorted = log_hazards[order]
    shift = float(h_sorted.data.max())
    cum = (h_sorted - shift).exp().cumsum(0)
    # index of the last entry of each tie group: risk set includes all ties
    last_idx = np.empty(n, dtype=np.int64)
    last = n - 1
    for i in range(n - 1, -1, -1):
        if i < n - 1 and t_sorted[i] != t_sorted[i + 1]:
            last = i
        last_idx[i] = last
    log_denom = cum[last_idx].log() + shift
    contrib = (h_sorted - log_denom)[np.where(e_sorted)[0]]
    return -contrib.sum()
