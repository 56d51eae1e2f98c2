import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose, assert_array_equal

from evogan.autodiff import DomainError, ShapeError, Tensor, backward
from evogan.losses import (
    LabeledBatch,
    PsiKind,
    Setting,
    SettingParams,
    UnlabeledBatch,
    contradiction_residual,
    cs_hinge,
    expand_scores,
    pseudo_labels,
    semisup_hinge,
    transform_unlabeled,
    unified_hinge,
    unified_hinge_from_scores,
    universum_hinge,
)

from _gradcheck import max_grad_error


def unified(scores, eps):
    """unified_hinge on an expanded copy of ``scores`` (one row per sample)."""
    L = np.asarray(scores).shape[1]
    ub = transform_unlabeled(UnlabeledBatch(Tensor(scores)), L, eps)
    return unified_hinge(expand_scores(Tensor(scores), L), ub).item()


class TestExamples:
    @pytest.mark.parametrize("scores, y, expected", [
        ([[2, 0]], [1], 0.0),
        ([[0, 0]], [1], 1.0),
        ([[0, 2]], [1], 3.0),
    ])
    def test_cs_hinge(self, scores, y, expected):
        assert cs_hinge(Tensor(scores), y).item() == expected

    @pytest.mark.parametrize("scores, expected", [
        ([[1, 1]], 0.0),
        ([[2, 0]], 1.95),
        ([[1.03, 1.0]], 0.0),
    ])
    def test_universum_hinge(self, scores, expected):
        assert_allclose(universum_hinge(Tensor(scores), 0.05).item(), expected, rtol=1e-15)

    @pytest.mark.parametrize("scores, expected", [
        ([[2, 0]], 0.0),
        ([[0.4, 0.6]], 0.8),
        ([[0, 0]], 1.0),
    ])
    def test_semisup_hinge(self, scores, expected):
        assert_allclose(semisup_hinge(Tensor(scores)).item(), expected, rtol=1e-15)

    def test_unified_universum_regime(self):
        assert_allclose(unified([[2.0, 0.0]], -0.05), 1.95, rtol=1e-15)
        assert unified([[1.0, 1.0]], -0.05) == 0.0

    def test_unified_semisupervised_regime(self):
        # copy 1 contributes 0, copy 2 contributes min(3, 1)
        assert unified([[2.0, 0.0]], 1.0) == 1.0

    @pytest.mark.parametrize("scores, expected", [
        ([[1, 1, 1]], [0.0]),
        ([[2, 0]], [2.0]),
        ([[1.0, 0.9, 1.0]], [0.1]),
    ])
    def test_contradiction_residual(self, scores, expected):
        assert_allclose(contradiction_residual(Tensor(scores)), expected, rtol=1e-12)


class TestTransform:
    def test_single_row(self):
        ub = transform_unlabeled(UnlabeledBatch(Tensor([[0.5, 1.0]])), 3, -0.05)
        assert ub.Z.shape == (3, 2)
        assert_array_equal(ub.y, [1, 2, 3])
        assert ub.psi_kind is PsiKind.IDENTITY
        assert ub.m == 1

    def test_semisupervised_kind(self):
        ub = transform_unlabeled(UnlabeledBatch(Tensor(np.ones((2, 4)))), 2, 1.0)
        assert ub.Z.shape == (4, 4)
        assert ub.psi_kind is PsiKind.MIN_WITH_EPS
        assert_array_equal(ub.origin, [0, 0, 1, 1])

    def test_empty(self):
        ub = transform_unlabeled(UnlabeledBatch(Tensor(np.zeros((0, 2)))), 3, -0.05)
        assert ub.m == 0
        assert unified_hinge(ub.Z, ub).item() == 0.0

    def test_invalid_eps(self):
        with pytest.raises(DomainError):
            transform_unlabeled(UnlabeledBatch(Tensor([[1.0, 2.0]])), 2, 0.5)

    def test_shape_mismatch(self):
        ub = transform_unlabeled(UnlabeledBatch(Tensor([[1.0, 2.0]])), 2, 1.0)
        with pytest.raises(ShapeError):
            unified_hinge(Tensor(np.zeros((3, 2))), ub)


class TestValidation:
    def test_label_out_of_range(self):
        with pytest.raises(DomainError):
            cs_hinge(Tensor([[1.0, 2.0]]), [3])
        with pytest.raises(DomainError):
            LabeledBatch(Tensor([[1.0]]), [0], 2)

    def test_negative_delta(self):
        with pytest.raises(DomainError):
            universum_hinge(Tensor([[1.0, 2.0]]), -0.1)

    def test_setting_params_couple_eps(self):
        assert SettingParams(Setting.UNIVERSUM, delta=0.01).eps == -0.01
        assert SettingParams("semisupervised").eps == 1.0
        assert SettingParams("inductive").eps is None
        with pytest.raises(DomainError):
            SettingParams(Setting.UNIVERSUM, delta=0.05, eps=-0.1)

    def test_pseudo_label_ties_lowest(self):
        assert_array_equal(pseudo_labels(Tensor([[1.0, 1.0], [0.0, 2.0]])), [1, 2])


score_rows = st.integers(1, 6).flatmap(lambda m: st.integers(2, 6).flatmap(
    lambda L: arrays(np.float64, (m, L), elements=st.floats(-5, 5, allow_nan=False))))


@settings(max_examples=100, deadline=None)
@given(score_rows, st.data())
def test_cs_hinge_nonnegative_and_zero_iff_margin(scores, data):
    y = data.draw(arrays(np.int64, scores.shape[0], elements=st.integers(1, scores.shape[1])))
    value = cs_hinge(Tensor(scores), y).item()
    assert value >= 0
    true = scores[np.arange(len(y)), y - 1]
    others = scores.copy()
    others[np.arange(len(y)), y - 1] = -np.inf
    separated = np.all(true - others.max(axis=1) >= 1)
    assert (value == 0) == separated


@settings(max_examples=100, deadline=None)
@given(score_rows, st.sampled_from([0.05, 0.01, 0.001]))
def test_universum_zero_iff_residual_inside_tube(scores, delta):
    value = universum_hinge(Tensor(scores), delta).item()
    assert (value == 0) == bool(np.all(contradiction_residual(Tensor(scores)) <= delta))


@settings(max_examples=100, deadline=None)
@given(score_rows, st.floats(-100, 100))
def test_row_shift_invariance(scores, c):
    shifted = scores + c
    # rows with near ties can change argmax under rounding; skip those
    top = np.sort(scores, axis=1)
    assume(np.all(top[:, -1] - top[:, -2] > 1e-6))
    y = np.ones(scores.shape[0], dtype=np.int64)
    pairs = [
        (cs_hinge(Tensor(scores), y).item(), cs_hinge(Tensor(shifted), y).item()),
        (universum_hinge(Tensor(scores)).item(), universum_hinge(Tensor(shifted)).item()),
        (semisup_hinge(Tensor(scores)).item(), semisup_hinge(Tensor(shifted)).item()),
        (unified(scores, -0.05), unified(shifted, -0.05)),
        (unified(scores, 1.0), unified(shifted, 1.0)),
    ]
    for a, b in pairs:
        assert_allclose(a, b, rtol=1e-12, atol=1e-12 * (1 + abs(c)) * scores.size)


@settings(max_examples=100, deadline=None)
@given(score_rows, st.sampled_from([0.05, 0.01, 0.001]))
def test_universum_equivalence_property(scores, delta):
    assert_allclose(unified(scores, -delta), universum_hinge(Tensor(scores), delta).item(),
                    rtol=1e-12, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
def test_semisupervised_offset_property(m, L, seed):
    # integer scores: every sum is exact, so equality must hold bitwise
    rng = np.random.default_rng(seed)
    scores = rng.permuted(np.tile(np.arange(L, dtype=np.float64), (m, 1)), axis=1) * 3.0
    scores += rng.integers(-5, 5, size=(m, 1))
    assert unified(scores, 1.0) == semisup_hinge(Tensor(scores)).item() + m * (L - 1)


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_all_losses_against_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        s = rng.normal(size=(4, 3)) * 2
        y = rng.integers(1, 4, size=4)
        assert max_grad_error(lambda t: cs_hinge(t, y), [s]) < 1e-4
        assert max_grad_error(lambda t: universum_hinge(t, 0.05), [s]) < 1e-4
        assert max_grad_error(semisup_hinge, [s]) < 1e-4
        assert max_grad_error(lambda t: unified_hinge_from_scores(t, -0.05), [s]) < 1e-4
        assert max_grad_error(lambda t: unified_hinge_from_scores(t, 1.0), [s]) < 1e-4

    def test_pseudo_label_is_detached(self):
        # gradient of the semi-supervised hinge only flows through s_k - s_{y*}
        s = Tensor([[0.4, 0.6]], requires_grad=True)
        backward(semisup_hinge(s))
        assert_array_equal(s.grad, [[1.0, -1.0]])
