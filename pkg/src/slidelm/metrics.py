"""Evaluation metrics and statistics: AUC, balanced accuracy, adjusted
mean recall, C-index, bootstrap confidence intervals and paired
permutation tests. All stochastic procedures are deterministic under a
fixed seed via counter-based per-iteration seed derivation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata


def _binary_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney statistic; score ties count 0.5 via average ranks."""
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(np.asarray(scores, dtype=float))
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Binary AUC for 1-D scores; one-vs-one average (Hand & Till) for an
    (N, C) score matrix with integer labels."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.ndim == 1:
        return _binary_auc(scores, labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("AUC needs at least two classes present")
    pair_aucs = []
    for a_i, cls_a in enumerate(classes):
        for cls_b in classes[a_i + 1:]:
            sel = (labels == cls_a) | (labels == cls_b)
            y = labels[sel] == cls_a
            a_given_b = _binary_auc(scores[sel, int(cls_a)], y)
            b_given_a = _binary_auc(scores[sel, int(cls_b)], ~y)
            pair_aucs.append(0.5 * (a_given_b + b_given_a))
    return float(np.mean(pair_aucs))


def per_class_recall(pred: np.ndarray, labels: np.ndarray) -> dict[int, tuple[float, int]]:
    """class -> (recall, support) over classes present in labels."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    out = {}
    for cls in np.unique(labels):
        sel = labels == cls
        out[int(cls)] = (float((pred[sel] == cls).mean()), int(sel.sum()))
    return out


def balanced_accuracy(pred: np.ndarray, labels: np.ndarray) -> float:
    """Unweighted mean recall across the classes present in labels."""
    recalls = per_class_recall(pred, labels)
    return float(np.mean([r for r, _ in recalls.values()]))


def amr_from_recalls(recalls: Sequence[float], chance: float) -> float:
    if not len(recalls):
        raise ValueError("no options meet the support threshold")
    return float((np.mean(recalls) - chance) / (1.0 - chance))


def adjusted_mean_recall(pred: np.ndarray, labels: np.ndarray, chance: float,
                         min_support: int = 10) -> float:
    """Mean per-class recall rescaled so random chance scores 0; classes
    below ``min_support`` are excluded from the average."""
    recalls = [r for r, support in per_class_recall(pred, labels).values()
               if support >= min_support]
    return amr_from_recalls(recalls, chance)


def option_balanced_recall(p_yes: np.ndarray, truth: np.ndarray,
                           threshold: float = 0.5) -> float:
    """Balanced accuracy of one yes-no option at a probability threshold."""
    truth = np.asarray(truth, dtype=bool)
    if truth.all() or not truth.any():
        raise ValueError("option needs both labels present")
    pred = np.asarray(p_yes) >= threshold
    r_yes = float(pred[truth].mean())
    r_no = float((~pred[~truth]).mean())
    return 0.5 * (r_yes + r_no)


def c_index(risk: np.ndarray, time: np.ndarray, event: np.ndarray) -> float:
    """Concordance over comparable pairs (t_i < t_j, event_i); risk ties
    count 0.5."""
    risk = np.asarray(risk, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    comparable = (time[:, None] < time[None, :]) & event[:, None]
    n = int(comparable.sum())
    if n == 0:
        raise ValueError("no comparable pairs")
    diff = risk[:, None] - risk[None, :]
    concordant = (diff > 0) * 1.0 + (diff == 0) * 0.5
    return float((concordant * comparable).sum() / n)


def _iteration_rng(seed: int, iteration: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration, attempt)))


def bootstrap_ci(metric_fn: Callable[..., float], data: Sequence[np.ndarray],
                 n_iter: int = 1000, level: float = 0.95,
                 seed: int = 0, max_redraws: int = 10) -> tuple[float, float]:
    """Percentile interval from resampling specimens with replacement.

    Resamples on which the metric is undefined are redrawn, up to
    ``max_redraws`` per iteration.
    """
    arrays = [np.asarray(a) for a in data]
    n = arrays[0].shape[0]
    if n == 0:
        raise ValueError("cannot bootstrap empty data")
    values = np.empty(n_iter)
    for it in range(n_iter):
        for attempt in range(max_redraws + 1):
            idx = _iteration_rng(seed, it, attempt).integers(0, n, size=n)
            try:
                values[it] = metric_fn(*(a[idx] for a in arrays))
                break
            except ValueError:
                if attempt == max_redraws:
                    raise ValueError(
                        f"metric undefined after {max_redraws} redraws at iteration {it}")
    alpha = (1.0 - level) / 2.0
    return (float(np.percentile(values, 100 * alpha)),
            float(np.percentile(values, 100 * (1 - alpha))))


def permutation_test(metric_fn: Callable[[np.ndarray, np.ndarray], float],
                     preds_a: np.ndarray, preds_b: np.ndarray,
                     labels: np.ndarray, n_iter: int = 1000,
                     seed: int = 0) -> float:
    """Two-sided paired permutation test with add-one smoothing: each
    specimen's predictions are swapped with probability 0.5 per iteration."""
    a = np.asarray(preds_a)
    b = np.asarray(preds_b)
    labels = np.asarray(labels)
    if a.shape != b.shape or a.shape[0] != labels.shape[0]:
        raise ValueError("prediction vectors must be aligned")
    observed = abs(metric_fn(a, labels) - metric_fn(b, labels))
    hits = 0
    for it in range(n_iter):
        swap = _iteration_rng(seed, it).random(a.shape[0]) < 0.5
        mask = swap.reshape(swap.shape + (1,) * (a.ndim - 1))
        a_p = np.where(mask, b, a)
        b_p = np.where(mask, a, b)
        delta = abs(metric_fn(a_p, labels) - metric_fn(b_p, labels))
        if delta >= observed - 1e-15:
            hits += 1
    return (hits + 1) / (n_iter + 1)


def pooled_metric(metric_fn: Callable[..., float],
                  folds: Sequence[Sequence[np.ndarray]],
                  pooling: str = "micro") -> float:
    """micro: concatenate folds then score; macro: mean of per-fold scores."""
    if pooling == "micro":
        joined = [np.concatenate([np.asarray(f[i]) for f in folds])
                  for i in range(len(folds[0]))]
        return metric_fn(*joined)
    if pooling == "macro":
        return float(np.mean([metric_fn(*f) for f in folds]))
    raise ValueError(f"unknown pooling {pooling!r}")


@dataclass
class EvalReport:
    metric: str
    point: float
    ci_lo: float
    ci_hi: float
    level: float
    n: int
    p_values: dict[str, float] = field(default_factory=dict)

    def validate(self) -> None:
        if not (self.ci_lo <= self.point <= self.ci_hi):
            raise ValueError("point estimate outside its percentile interval")

    def to_dict(self) -> dict:
        return {"metric": self.metric, "point": self.point,
                "ci": [self.ci_lo, self.ci_hi], "level": self.level,
                "n": self.n, "p_values": self.p_values}


def write_reports_json(reports: dict[str, EvalReport], path: str | Path) -> None:
    payload = {task: r.to_dict() for task, r in reports.items()}
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def write_reports_csv(reports: dict[str, EvalReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "metric", "point", "lo", "hi", "n"])
        for task, r in sorted(reports.items()):
            writer.writerow([task, r.metric, f"{r.point:.6f}",
                             f"{r.ci_lo:.6f}", f"{r.ci_hi:.6f}", r.n])
