import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from camchex.config import ASLConfig
from camchex.data import PrevalenceTable
from camchex.gradcheck import grad_check
from camchex.losses import asl_loss, class_weights
from camchex.nn import QueryDecoderHead, init_parameters
from camchex.seeding import torch_rng

# Hand evaluation of the negative branch at y=0, p=0.9, margin=0.05, gamma-=4:
# p_m = 0.85; 0.85^4 * (-log 0.15) = 0.52200625 * 1.8971199849 = 0.9903084891
HAND_NEGATIVE_BRANCH = 0.9903084891103353


def _bce_reference(logits, targets, mask):
    """Independent masked BCE via the log-sigmoid identity."""
    per = targets * F.softplus(-logits) + (1.0 - targets) * F.softplus(logits)
    mask = mask.to(logits.dtype)
    return (per * mask).sum() / mask.sum()


def test_asl_reduces_to_bce_when_degenerate():
    g = torch.Generator().manual_seed(0)
    for _ in range(10):
        logits = torch.randn(6, 9, generator=g, dtype=torch.float64) * 3
        targets = torch.rand(6, 9, generator=g, dtype=torch.float64)
        mask = torch.rand(6, 9, generator=g) < 0.7
        mask[0, 0] = True
        loss = asl_loss(logits, targets, mask, ASLConfig(0.0, 0.0, 0.0))
        assert abs(loss.item() - _bce_reference(logits, targets, mask).item()) < 1e-12


def test_asl_bce_value_at_even_odds():
    loss = asl_loss(
        torch.zeros(1, 1, dtype=torch.float64),
        torch.ones(1, 1, dtype=torch.float64),
        torch.ones(1, 1, dtype=torch.bool),
        ASLConfig(0.0, 0.0, 0.0),
    )
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)


def test_asl_margin_clamps_easy_negative_to_zero():
    logits = torch.tensor([[math.log(0.04 / 0.96)]], dtype=torch.float64)
    loss = asl_loss(
        logits,
        torch.zeros(1, 1, dtype=torch.float64),
        torch.ones(1, 1, dtype=torch.bool),
        ASLConfig(0.0, 4.0, 0.05),
    )
    assert loss.item() == 0.0


def test_asl_hand_value_negative_branch():
    logits = torch.tensor([[math.log(0.9 / 0.1)]], dtype=torch.float64)
    loss = asl_loss(
        logits,
        torch.zeros(1, 1, dtype=torch.float64),
        torch.ones(1, 1, dtype=torch.bool),
        ASLConfig(0.0, 4.0, 0.05),
    )
    assert loss.item() == pytest.approx(HAND_NEGATIVE_BRANCH, abs=0.5e-4)


def test_asl_masked_entries_contribute_nothing():
    g = torch.Generator().manual_seed(1)
    logits = torch.randn(4, 6, generator=g, dtype=torch.float64)
    targets = (torch.rand(4, 6, generator=g) < 0.5).double()
    mask = torch.zeros(4, 6, dtype=torch.bool)
    mask[:, :3] = True
    base = asl_loss(logits[:, :3], targets[:, :3], mask[:, :3])
    with_masked = asl_loss(logits, targets, mask)
    assert with_masked.item() == pytest.approx(base.item(), abs=1e-12)


def test_asl_mean_reduction_over_masked_entries():
    logits = torch.tensor([[0.0, 5.0], [0.0, -5.0]], dtype=torch.float64)
    targets = torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=torch.float64)
    mask = torch.tensor([[True, False], [True, True]])
    cfg = ASLConfig(0.0, 0.0, 0.0)
    expected = (math.log(2.0) + math.log(2.0) + F.softplus(torch.tensor(-5.0)).item()) / 3.0
    assert asl_loss(logits, targets, mask, cfg).item() == pytest.approx(expected, abs=1e-9)


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_asl_nonnegative(seed):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(3, 5, generator=g, dtype=torch.float64) * 4
    targets = torch.rand(3, 5, generator=g, dtype=torch.float64)
    mask = torch.rand(3, 5, generator=g) < 0.8
    loss = asl_loss(logits, targets, mask, ASLConfig(1.0, 4.0, 0.05))
    assert loss.item() >= 0.0


def test_asl_gradient_signs():
    logits = torch.linspace(-4, 4, 21, dtype=torch.float64).reshape(-1, 1).requires_grad_()
    mask = torch.ones_like(logits, dtype=torch.bool)
    cfg = ASLConfig(2.0, 4.0, 0.05)

    loss = asl_loss(logits, torch.ones_like(logits), mask, cfg)
    (grad,) = torch.autograd.grad(loss, logits)
    assert (grad < 0).all(), "positive targets must push probabilities up"

    logits2 = logits.detach().clone().requires_grad_()
    loss = asl_loss(logits2, torch.zeros_like(logits2), mask, cfg)
    (grad,) = torch.autograd.grad(loss, logits2)
    p = torch.sigmoid(logits2.detach())
    assert (grad >= 0).all()
    below_margin = p < cfg.margin
    assert (grad[below_margin] == 0).all()
    assert (grad[p > cfg.margin + 1e-3] > 0).all()


def test_asl_rejects_nonfinite_logits():
    logits = torch.tensor([[float("nan")]], dtype=torch.float64)
    with pytest.raises(ValueError, match="finite"):
        asl_loss(logits, torch.zeros(1, 1), torch.ones(1, 1, dtype=torch.bool))


def test_asl_weights_scale_per_class():
    logits = torch.zeros(1, 2, dtype=torch.float64)
    targets = torch.ones(1, 2, dtype=torch.float64)
    mask = torch.ones(1, 2, dtype=torch.bool)
    weights = torch.tensor([2.0, 0.5], dtype=torch.float64)
    loss = asl_loss(logits, targets, mask, ASLConfig(0.0, 0.0, 0.0), weights)
    assert loss.item() == pytest.approx(math.log(2.0) * 1.25, abs=1e-12)


# --------------------------------------------------------------- class weights

def _table(prevs):
    return PrevalenceTable(
        label_names=tuple(f"c{i}" for i in range(len(prevs))), prevalence=np.asarray(prevs)
    )


def test_class_weights_uniform():
    np.testing.assert_array_equal(class_weights(_table([0.5, 0.2, 0.1]), "uniform"), [1, 1, 1])


def test_class_weights_inverse_prevalence():
    w = class_weights(_table([0.5, 0.25]), "inverse_prevalence")
    np.testing.assert_allclose(w, [2.0 / 3.0, 4.0 / 3.0], atol=1e-12)
    assert w.mean() == pytest.approx(1.0, abs=1e-12)


def test_class_weights_equal_prevalence_is_unit():
    np.testing.assert_allclose(
        class_weights(_table([0.3, 0.3, 0.3]), "inverse_prevalence"), [1, 1, 1], atol=1e-12
    )


def test_class_weights_zero_prevalence_errors():
    with pytest.raises(ValueError, match="c1"):
        class_weights(_table([0.5, 0.0]), "inverse_prevalence")


# ----------------------------------------------------------------- decode head

def _head(q=26, channels=32, dtype=torch.float64):
    head = QueryDecoderHead(channels, q, heads=4)
    init_parameters(head, torch_rng(7, "head"))
    return head.to(dtype)


def test_decode_emits_q_logits():
    head = _head(q=26)
    tokens = torch.randn(80, 32, dtype=torch.float64)
    logits = head(tokens)
    assert logits.shape == (26,)
    assert torch.isfinite(logits).all()


def test_decode_permutation_invariant_over_tokens():
    head = _head(q=8)
    g = torch.Generator().manual_seed(2)
    tokens = torch.randn(48, 32, generator=g, dtype=torch.float64)
    perm = torch.randperm(48, generator=g)
    a = head(tokens)
    b = head(tokens[perm])
    assert (a - b).abs().max().item() < 1e-12


def test_decode_duplicating_tokens_preserves_logits():
    head = _head(q=5)
    tokens = torch.randn(16, 32, dtype=torch.float64)
    a = head(tokens)
    b = head(torch.cat([tokens, tokens]))
    assert (a - b).abs().max().item() < 1e-10

    one = torch.randn(1, 32, dtype=torch.float64)
    a = head(one.repeat(7, 1))
    b = head(one)
    assert (a - b).abs().max().item() < 1e-10


def test_decode_requires_tokens():
    head = _head(q=3)
    with pytest.raises(ValueError, match="token"):
        head(torch.zeros(0, 32, dtype=torch.float64))


def test_decode_gradients_match_finite_differences():
    head = _head(q=4, channels=16)
    g = torch.Generator().manual_seed(3)
    tokens = torch.randn(10, 16, generator=g, dtype=torch.float64)
    targets = (torch.rand(4, generator=g) < 0.5).double()
    mask = torch.ones(4, dtype=torch.bool)

    def loss_fn():
        return asl_loss(head(tokens), targets, mask)

    result = grad_check(loss_fn, head.named_parameters(), n_samples=80)
    assert result.max_relative_error < 1e-4
