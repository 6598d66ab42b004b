import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nesattack.loss import cw_loss, is_adversarial, neg_prob_loss, true_prob_loss


def test_cw_positive_margin():
    assert cw_loss([0.7, 0.2, 0.1], 0) == pytest.approx(np.log(0.7 / 0.2), abs=1e-12)
    assert cw_loss([0.7, 0.2, 0.1], 0) == pytest.approx(1.25276, abs=1e-5)


def test_cw_zero_when_already_misclassified():
    assert cw_loss([0.7, 0.2, 0.1], 1) == 0.0
    assert cw_loss([0.5, 0.5], 0) == 0.0


def test_cw_survives_zero_probabilities():
    assert np.isfinite(cw_loss([1.0, 0.0, 0.0], 0))


def test_cw_rejects_bad_label():
    with pytest.raises(IndexError):
        cw_loss([0.5, 0.5], 2)
    with pytest.raises(IndexError):
        cw_loss([0.5, 0.5], -1)


def test_prob_losses():
    assert neg_prob_loss([0.7, 0.2, 0.1], 0) == -0.7
    assert true_prob_loss([0.7, 0.2, 0.1], 0) == 0.7


def test_batched_shapes():
    P = np.array([[0.7, 0.2, 0.1], [0.1, 0.8, 0.1]])
    assert cw_loss(P, 0).shape == (2,)
    assert list(is_adversarial(P, 0)) == [False, True]


def test_ties_go_to_lowest_index():
    assert is_adversarial([0.5, 0.5], 1)
    assert not is_adversarial([0.5, 0.5], 0)


simplex = arrays(float, 4, elements=st.floats(0.01, 1.0)).map(lambda v: v / v.sum())


@given(simplex, st.integers(0, 3))
def test_cw_nonnegative_and_zero_iff_not_top(p, y):
    loss = cw_loss(p, y)
    assert loss >= 0
    others = np.delete(p, y)
    if p[y] <= others.max():
        assert loss == 0


@given(simplex, st.integers(0, 3), st.floats(0.1, 10))
def test_cw_invariant_to_logit_shift(p, y, shift):
    logits = np.log(p)
    shifted = np.exp(logits + shift)
    shifted /= shifted.sum()
    assert cw_loss(shifted, y) == pytest.approx(cw_loss(p, y), abs=1e-9)


@given(simplex, st.integers(0, 3), st.permutations(range(4)))
def test_cw_permutation_equivariant(p, y, perm):
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    assume(len(set(np.round(p, 12))) == 4)
    assert cw_loss(p[perm], int(inv[y])) == pytest.approx(cw_loss(p, y), abs=1e-12)
