"""Loss oracles: contrastive double-loop reference, analytic chat-loss
cases, Cox risk-set enumerator with ties."""

import numpy as np
import pytest

from slidelm import autodiff as ad
from slidelm import losses as L
from slidelm import nn
from slidelm.autodiff import Tensor
from slidelm.optim import grad_check

rng = np.random.default_rng(2)


def unit_rows(n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def contrastive_oracle(V, T, tau):
    n = V.shape[0]
    total = 0.0
    for i in range(n):
        num = np.exp(V[i] @ T[i] / tau)
        den = sum(np.exp(V[i] @ T[j] / tau) for j in range(n))
        total += np.log(num / den)
        num2 = np.exp(T[i] @ V[i] / tau)
        den2 = sum(np.exp(T[i] @ V[j] / tau) for j in range(n))
        total += np.log(num2 / den2)
    return -total / n


def test_contrastive_single_pair_zero():
    v = Tensor(unit_rows(1, 8))
    loss = L.contrastive_loss(v, Tensor(v.data.copy()), Tensor(0.1))
    assert abs(loss.item()) < 1e-12


def test_contrastive_perfect_alignment_limit():
    # orthonormal rows with V == T: the loss vanishes as tau -> 0+
    V = np.eye(6)[:, :6]
    loss = L.contrastive_loss(Tensor(V), Tensor(V.copy()), Tensor(0.01))
    assert loss.item() < 1e-12


@pytest.mark.parametrize("n,d,tau", [(4, 8, 0.3), (7, 5, 0.08), (16, 12, 1.0)])
def test_contrastive_double_loop_oracle(n, d, tau):
    V, T = unit_rows(n, d), unit_rows(n, d)
    loss = L.contrastive_loss(Tensor(V), Tensor(T), Tensor(tau))
    assert abs(loss.item() - contrastive_oracle(V, T, tau)) < 1e-12


def test_contrastive_rejects_nonpositive_tau():
    v = Tensor(unit_rows(2, 4))
    with pytest.raises(ValueError):
        L.contrastive_loss(v, v, Tensor(0.0))
    with pytest.raises(ValueError):
        L.contrastive_loss(v, v, Tensor(-1.0))


def test_contrastive_gradients():
    v = Tensor(rng.standard_normal((5, 6)), requires_grad=True)
    t = Tensor(rng.standard_normal((5, 6)), requires_grad=True)
    s = Tensor(np.asarray(np.log(0.2)), requires_grad=True)
    err = grad_check(lambda: L.contrastive_loss(
        nn.l2_normalize(v), nn.l2_normalize(t), s.exp()), {"v": v, "t": t, "s": s}, 1e-6)
    assert err < 1e-7


def test_chat_loss_one_hot_is_zero():
    V = 11
    targets = np.array([[3, 5, 7]])
    logits = np.full((1, 3, V), -1e4)
    for i, t in enumerate(targets[0]):
        logits[0, i, t] = 1e4 * 0  # zero logit for target, -1e4 elsewhere
    loss = L.chat_loss(Tensor(logits), targets, np.ones_like(targets))
    assert loss.item() < 1e-9


def test_chat_loss_uniform_analytic():
    V, m = 13, 4
    logits = Tensor(np.zeros((1, m, V)))
    targets = np.zeros((1, m), dtype=int)
    loss = L.chat_loss(logits, targets, np.ones((1, m)))
    assert abs(loss.item() - m * np.log(V)) < 1e-12


def test_chat_loss_oracle_and_mask():
    B, Ln, V = 2, 5, 9
    logits = rng.standard_normal((B, Ln, V))
    targets = rng.integers(V, size=(B, Ln))
    mask = rng.integers(2, size=(B, Ln))
    if mask.sum() == 0:
        mask[0, 0] = 1
    loss = L.chat_loss(Tensor(logits), targets, mask)
    oracle = 0.0
    for b in range(B):
        for i in range(Ln):
            if mask[b, i]:
                p = np.exp(logits[b, i] - logits[b, i].max())
                p /= p.sum()
                oracle -= np.log(p[targets[b, i]])
    assert abs(loss.item() - oracle) < 1e-12
    mean_loss = L.chat_loss(Tensor(logits), targets, mask, "mean")
    assert abs(mean_loss.item() - oracle / mask.sum()) < 1e-12


def test_chat_loss_ignores_user_positions():
    """Zeroing logits at unmasked positions leaves the loss unchanged."""
    B, Ln, V = 1, 6, 7
    logits = rng.standard_normal((B, Ln, V))
    targets = rng.integers(V, size=(B, Ln))
    mask = np.array([[0, 0, 1, 1, 0, 1]])
    a = L.chat_loss(Tensor(logits), targets, mask)
    logits2 = logits.copy()
    logits2[0, np.asarray(mask[0]) == 0] = 0.0
    b = L.chat_loss(Tensor(logits2), targets, mask)
    assert abs(a.item() - b.item()) < 1e-12


def test_chat_loss_empty_mask_rejected():
    with pytest.raises(ValueError):
        L.chat_loss(Tensor(np.zeros((1, 2, 3))), np.zeros((1, 2), int),
                    np.zeros((1, 2)))


def test_total_loss_combination():
    lc, lch = Tensor(2.0), Tensor(3.0)
    assert L.total_loss(lc, lch, 0.0, 1.0).item() == pytest.approx(3.0)
    assert L.total_loss(lc, lch).item() == pytest.approx(0.25 * 2 + 3)  # defaults
    doubled = L.total_loss(lc, lch, 0.5, 2.0)
    assert doubled.item() == pytest.approx(2 * L.total_loss(lc, lch).item())


def cox_enumerator(h, times, events):
    """Brute-force risk-set enumeration with Breslow ties."""
    total = 0.0
    for i in range(len(h)):
        if events[i]:
            denom = sum(np.exp(h[j]) for j in range(len(h)) if times[j] >= times[i])
            total += h[i] - np.log(denom)
    return -total


def test_cox_equal_hazards_analytic():
    # all hazards equal: loss = sum over events of ln(risk-set size)
    times = np.array([1, 2, 3, 4, 5])
    events = np.array([1, 0, 1, 1, 0], bool)
    h = Tensor(np.zeros(5))
    expected = np.log(5) + np.log(3) + np.log(2)
    assert L.cox_partial_nll(h, times, events).item() == pytest.approx(expected)


def test_cox_hand_case():
    h = np.array([2.0, 1.0, 0.0, -1.0])
    times = np.array([1, 2, 3, 4])
    events = np.ones(4, bool)
    loss = L.cox_partial_nll(Tensor(h), times, events)
    assert loss.item() == pytest.approx(cox_enumerator(h, times, events), abs=1e-12)


def test_cox_shift_invariance():
    h = Tensor(rng.standard_normal(8))
    times = rng.integers(0, 40, size=8)
    events = np.array([1, 0, 1, 1, 0, 1, 0, 1], bool)
    a = L.cox_partial_nll(h, times, events).item()
    b = L.cox_partial_nll(h + 7.3, times, events).item()
    assert a == pytest.approx(b, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_cox_breslow_ties_vs_enumerator(seed):
    r = np.random.default_rng(seed)
    n = r.integers(3, 20)
    h = r.standard_normal(n)
    times = r.integers(0, 6, size=n)  # heavy ties
    events = r.integers(0, 2, size=n).astype(bool)
    if not events.any():
        events[0] = True
    ours = L.cox_partial_nll(Tensor(h), times, events).item()
    assert ours == pytest.approx(cox_enumerator(h, times, events), abs=1e-10)


def test_cox_no_events_rejected():
    with pytest.raises(ValueError):
        L.cox_partial_nll(Tensor(np.zeros(3)), np.arange(3), np.zeros(3, bool))


def test_cox_gradient():
    h = Tensor(rng.standard_normal(10), requires_grad=True)
    times = rng.integers(0, 5, size=10)
    events = rng.integers(0, 2, size=10).astype(bool)
    events[0] = True
    err = grad_check(lambda: L.cox_partial_nll(h, times, events), {"h": h}, 1e-6)
    assert err < 1e-6
