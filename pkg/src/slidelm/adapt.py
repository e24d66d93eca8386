"""Downstream adaptation: multinomial linear probes over a 24-point L2
sweep with validation selection, elastic-net Cox regression via proximal
gradient, and probability calibration (per-option thresholds, per-class
weights)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import metrics
from .autodiff import Tensor
from .losses import cox_partial_nll

PROBE_GRID = tuple(np.logspace(-6, 3, 24))
COX_GRID = tuple(np.logspace(-5, 1, 24))
COX_L1_RATIO = 1e-4


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ProbeModel:
    weights: np.ndarray          # (d, C)
    bias: np.ndarray             # (C,)
    chosen_l2: float
    grid: tuple[float, ...] = PROBE_GRID
    val_scores: dict[float, float] = field(default_factory=dict)
    grad_norm: float = float("nan")

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(X @ self.weights + self.bias)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_json(self) -> str:
        return json.dumps({
            "kind": "linear_probe", "chosen_l2": self.chosen_l2,
            "grid": list(self.grid), "grad_norm": self.grad_norm,
            "val_scores": {f"{k:.8g}": v for k, v in self.val_scores.items()},
            "weights": self.weights.tolist(), "bias": self.bias.tolist(),
        }, sort_keys=True)


def _probe_loss_grad(theta: np.ndarray, X: np.ndarray, Y: np.ndarray,
                     l2: float, d: int, C: int) -> tuple[float, np.ndarray]:
    W = theta[:d * C].reshape(d, C)
    b = theta[d * C:]
    logits = X @ W + b
    P = _softmax(logits)
    n = X.shape[0]
    loss = -np.log(P[np.arange(n), Y] + 1e-300).mean() + 0.5 * l2 * (W * W).sum()
    G = (P - np.eye(C)[Y]) / n
    gW = X.T @ G + l2 * W
    gb = G.sum(axis=0)
    return float(loss), np.concatenate([gW.reshape(-1), gb])


def fit_linear_probe(X_train: np.ndarray, y_train: np.ndarray,
                     X_val: np.ndarray, y_val: np.ndarray,
                     grid: tuple[float, ...] = PROBE_GRID,
                     gtol: float = 1e-6, max_iter: int = 10_000) -> ProbeModel:
    """Multinomial logistic regression per grid point, best model chosen
    by validation one-vs-one AUC."""
    X_train = np.asarray(X_train, dtype=float)
    y_train = np.asarray(y_train, dtype=int)
    classes = np.unique(y_train)
    if classes.size < 2:
        raise ValueError("training set contains a single class")
    C = int(classes.max()) + 1
    d = X_train.shape[1]
    best = None
    val_scores: dict[float, float] = {}
    for l2 in grid:
        res = minimize(_probe_loss_grad, np.zeros(d * C + C), jac=True,
                       args=(X_train, y_train, float(l2), d, C), method="L-BFGS-B",
                       options={"gtol": gtol, "maxiter": max_iter, "maxfun": 4 * max_iter})
        W = res.x[:d * C].reshape(d, C)
        b = res.x[d * C:]
        probs = _softmax(X_val @ W + b)
        score = metrics.auc(probs if C > 2 else probs[:, 1], y_val)
        val_scores[float(l2)] = score
        gnorm = float(np.abs(res.jac).max())
        if best is None or score > best[0]:
            best = (score, W.copy(), b.copy(), float(l2), gnorm)
    _, W, b, l2, gnorm = best
    return ProbeModel(weights=W, bias=b, chosen_l2=l2, grid=tuple(grid),
                      val_scores=val_scores, grad_norm=gnorm)


@dataclass
class CoxModel:
    coef: np.ndarray
    chosen_lambda: float
    l1_ratio: float = COX_L1_RATIO
    grid: tuple[float, ...] = COX_GRID
    val_scores: dict[float, float] = field(default_factory=dict)

    def risk(self, X: np.ndarray) -> np.ndarray:
        return X @ self.coef

    def to_json(self) -> str:
        return json.dumps({
            "kind": "cox_elastic_net", "chosen_lambda": self.chosen_lambda,
            "l1_ratio": self.l1_ratio, "grid": list(self.grid),
            "val_scores": {f"{k:.8g}": v for k, v in self.val_scores.items()},
            "coef": self.coef.tolist(),
        }, sort_keys=True)


def _cox_smooth_grad(beta: np.ndarray, X: np.ndarray, t: np.ndarray,
                     e: np.ndarray, l2: float) -> tuple[float, np.ndarray]:
    """Normalized negative partial log-likelihood plus the L2 part."""
    bt = Tensor(beta, requires_grad=True)
    h = Tensor(X) @ bt
    n_ev = max(int(e.sum()), 1)
    loss = cox_partial_nll(h, t, e) * (1.0 / n_ev)
    loss.backward()
    f = float(loss.data) + 0.5 * l2 * float(beta @ beta)
    g = bt.grad + l2 * beta
    return f, g


def _soft_threshold(x: np.ndarray, thr: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def fit_cox(X_train: np.ndarray, t_train: np.ndarray, e_train: np.ndarray,
            X_val: np.ndarray, t_val: np.ndarray, e_val: np.ndarray,
            grid: tuple[float, ...] = COX_GRID, l1_ratio: float = COX_L1_RATIO,
            max_iter: int = 2000, tol: float = 1e-7) -> CoxModel:
    """Elastic-net Cox regression: proximal gradient with backtracking on
    the smooth part; selection by validation C-index."""
    e_train = np.asarray(e_train, dtype=bool)
    e_val = np.asarray(e_val, dtype=bool)
    if not e_train.any() or not e_val.any():
        raise ValueError("Cox fitting needs events in both train and val")
    X_train = np.asarray(X_train, dtype=float)
    best = None
    val_scores: dict[float, float] = {}
    for lam in grid:
        l1 = float(lam) * l1_ratio
        l2 = float(lam) * (1.0 - l1_ratio)
        beta = np.zeros(X_train.shape[1])
        step = 1.0
        f, g = _cox_smooth_grad(beta, X_train, t_train, e_train, l2)
        for _ in range(max_iter):
            while True:  # backtracking line search on the smooth part
                cand = _soft_threshold(beta - step * g, step * l1)
                delta = cand - beta
                f_new, g_new = _cox_smooth_grad(cand, X_train, t_train, e_train, l2)
                quad = f + g @ delta + (delta @ delta) / (2 * step)
                if f_new <= quad + 1e-12 or step < 1e-12:
                    break
                step *= 0.5
            moved = np.linalg.norm(cand - beta)
            beta, f, g = cand, f_new, g_new
            if moved < tol * max(1.0, np.linalg.norm(beta)):
                break
        score = metrics.c_index(X_val @ beta, t_val, e_val)
        val_scores[float(lam)] = score
        if best is None or score > best[0]:
            best = (score, beta.copy(), float(lam))
    _, beta, lam = best
    return CoxModel(coef=beta, chosen_lambda=lam, l1_ratio=l1_ratio,
                    grid=tuple(grid), val_scores=val_scores)


@dataclass
class Calibration:
    thresholds: Optional[dict[str, float]] = None
    weights: Optional[np.ndarray] = None
    skipped: list[str] = field(default_factory=list)

    def validate(self) -> None:
        if self.thresholds is not None:
            for name, thr in self.thresholds.items():
                if not 0.0 < thr < 1.0:
                    raise ValueError(f"threshold for {name!r} outside (0, 1)")
        if self.weights is not None and not (np.asarray(self.weights) > 0).all():
            raise ValueError("class weights must be positive")

    def to_json(self) -> str:
        return json.dumps({
            "kind": "calibration",
            "thresholds": self.thresholds,
            "weights": None if self.weights is None else list(map(float, self.weights)),
            "skipped": self.skipped,
        }, sort_keys=True)


def _threshold_candidates(p: np.ndarray) -> np.ndarray:
    u = np.unique(np.concatenate([[0.0], np.asarray(p, dtype=float), [1.0]]))
    mids = (u[:-1] + u[1:]) / 2.0
    return np.unique(np.concatenate([mids, [0.5]]))


def sweep_threshold(p_yes: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """(best threshold, best balanced recall) by exhaustive midpoint sweep."""
    best_thr, best_val = 0.5, -np.inf
    for thr in _threshold_candidates(p_yes):
        val = metrics.option_balanced_recall(p_yes, truth, thr)
        if val > best_val + 1e-15:
            best_thr, best_val = float(thr), float(val)
    return best_thr, best_val


def calibrate_thresholds(probs: dict[str, np.ndarray],
                         labels: dict[str, np.ndarray]) -> Calibration:
    """Per option, the threshold maximizing its balanced recall (its
    contribution to AMR); single-label options are skipped with a notice."""
    thresholds: dict[str, float] = {}
    skipped: list[str] = []
    for name, p in probs.items():
        truth = np.asarray(labels[name], dtype=bool)
        if truth.all() or not truth.any():
            skipped.append(name)
            continue
        thresholds[name], _ = sweep_threshold(p, truth)
    cal = Calibration(thresholds=thresholds, skipped=skipped)
    cal.validate()
    return cal


def _weight_objective(log_w: np.ndarray, P: np.ndarray, labels: np.ndarray) -> float:
    pred = np.argmax(P * np.exp(log_w), axis=1)
    return metrics.balanced_accuracy(pred, labels)


def _coordinate_candidates(P: np.ndarray, log_w: np.ndarray, c: int) -> np.ndarray:
    """Exact decision breakpoints for coordinate c (objective is piecewise
    constant in log w_c), plus a golden-section shrink of the bracket."""
    w = np.exp(log_w)
    other = P * w
    other[:, c] = -np.inf
    best_other = other.max(axis=1)
    pc = P[:, c]
    ok = (pc > 0) & (best_other > 0)
    breaks = np.log(best_other[ok] / pc[ok])
    breaks = np.unique(np.clip(breaks, -12.0, 12.0))
    cands = [log_w[c]]
    if breaks.size:
        mids = (breaks[:-1] + breaks[1:]) / 2.0 if breaks.size > 1 else np.empty(0)
        cands += [breaks[0] - 0.5, breaks[-1] + 0.5] + list(mids)
    # golden-section bracket shrink over the same range
    lo, hi = -12.0, 12.0
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    for _ in range(20):
        a = hi - phi * (hi - lo)
        b = lo + phi * (hi - lo)
        cands += [a, b]
        lo, hi = (lo, b) if abs(a - log_w[c]) < abs(b - log_w[c]) else (a, hi)
    return np.unique(np.asarray(cands))


def calibrate_weights(P: np.ndarray, labels: np.ndarray,
                      max_passes: int = 8) -> Calibration:
    """Positive per-class weights maximizing balanced accuracy of
    argmax(w * p), found by derivative-free coordinate passes over
    log-weights; normalized so the first weight is 1."""
    P = np.asarray(P, dtype=float)
    labels = np.asarray(labels)
    C = P.shape[1]
    if C < 2:
        raise ValueError("need at least two classes")
    log_w = np.zeros(C)
    best = _weight_objective(log_w, P, labels)
    for _ in range(max_passes):
        improved = False
        for c in range(C):
            for cand in _coordinate_candidates(P, log_w, c):
                trial = log_w.copy()
                trial[c] = cand
                val = _weight_objective(trial, P, labels)
                if val > best + 1e-12:
                    best, log_w, improved = val, trial, True
        if not improved:
            break
    w = np.exp(log_w - log_w[0])
    cal = Calibration(weights=w)
    cal.validate()
    return cal
