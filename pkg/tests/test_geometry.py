import mpmath
import numpy as np
import pytest
import scipy.ndimage
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nesattack.geometry import (
    NormBudget,
    SeedMap,
    ShapeError,
    clip_l2,
    clip_linf,
    downsample,
    perturbation_norm,
    project_to_S,
    squash,
    unsquash,
    upsample,
)

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)
unit = st.floats(0, 1, allow_nan=False)


# --- upsample ---------------------------------------------------------------

def test_upsample_identity_when_dims_equal():
    z = np.arange(12.0)
    assert np.array_equal(upsample(z), z)
    assert np.array_equal(upsample(z, (2, 2, 3), (2, 2, 3)), z)


def test_upsample_constant_seed():
    assert np.allclose(upsample([0.3], (1, 1, 1), (2, 2, 1)), [0.3] * 4)


def test_upsample_two_to_three():
    assert np.allclose(upsample([0.0, 1.0], (2, 1, 1), (3, 1, 1)), [0.0, 0.5, 1.0])


@pytest.mark.parametrize("seed_shape,target_shape", [
    ((2, 2, 1), (5, 5, 1)),
    ((4, 4, 1), (8, 8, 1)),
    ((3, 2, 3), (7, 9, 3)),
    ((2, 3, 2), (2, 6, 2)),
])
def test_upsample_matches_scipy_zoom(seed_shape, target_shape):
    rng = np.random.default_rng(0)
    h, w, c = seed_shape
    H, W, _ = target_shape
    for _ in range(10):
        grid = rng.normal(size=seed_shape)
        expected = scipy.ndimage.zoom(grid, (H / h, W / w, 1), order=1, grid_mode=False)
        assert expected.shape == target_shape
        got = upsample(grid.ravel(), seed_shape, target_shape).reshape(target_shape)
        assert np.allclose(got, expected, atol=1e-12)


def test_upsample_batch_matches_rows():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(5, 16))
    batch = upsample(Z, (4, 4, 1), (8, 8, 1))
    rows = np.stack([upsample(z, (4, 4, 1), (8, 8, 1)) for z in Z])
    assert np.allclose(batch, rows)


@pytest.mark.parametrize("seed_shape,target_shape,length", [
    ((4, 4, 1), (3, 8, 1), 16),   # target smaller than seed
    ((4, 4, 1), (8, 8, 3), 16),   # channel mismatch
    ((4, 4, 1), (8, 8, 1), 15),   # wrong seed length
])
def test_upsample_rejects_bad_shapes(seed_shape, target_shape, length):
    with pytest.raises(ShapeError):
        upsample(np.zeros(length), seed_shape, target_shape)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 16, elements=finite), arrays(float, 16, elements=finite), finite, finite)
def test_upsample_is_linear(z1, z2, a, b):
    lhs = upsample(a * z1 + b * z2, (4, 4, 1), (8, 8, 1))
    rhs = a * upsample(z1, (4, 4, 1), (8, 8, 1)) + b * upsample(z2, (4, 4, 1), (8, 8, 1))
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_downsample_is_left_inverse():
    z = np.random.default_rng(2).normal(size=(3, 16))
    assert np.allclose(downsample(upsample(z, (4, 4, 1), (8, 8, 1)), (4, 4, 1), (8, 8, 1)), z, atol=1e-10)


def test_seed_map_pair_validation():
    with pytest.raises(ShapeError):
        SeedMap((4, 4, 1), None)
    assert SeedMap().seed_dim(64) == 64
    assert SeedMap((4, 4, 1), (8, 8, 1)).seed_dim(64) == 16


# --- squash / unsquash ------------------------------------------------------

def test_squash_zero_is_half():
    assert np.array_equal(squash(np.zeros(4)), np.full(4, 0.5))


def test_squash_saturates():
    assert abs(squash([20.0])[0] - 1.0) < 1e-9


def test_squash_one_matches_high_precision():
    mpmath.mp.dps = 30
    expected = float((mpmath.tanh(1) + 1) / 2)
    assert squash([1.0])[0] == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.88079707, abs=1e-8)


def test_unsquash_examples():
    assert np.allclose(unsquash(np.full(3, 0.5)), 0.0)
    assert unsquash([0.880797])[0] == pytest.approx(1.0, abs=1e-5)
    assert np.isfinite(unsquash([1.0, 0.0])).all()


@settings(max_examples=200)
@given(arrays(float, 8, elements=st.floats(1e-6, 1 - 1e-6)))
def test_squash_unsquash_roundtrip(x):
    assert np.allclose(squash(unsquash(x)), x, atol=1e-5)


@given(finite, finite)
def test_squash_monotone(a, b):
    if a < b:
        assert squash([a])[0] <= squash([b])[0]


# --- clipping ---------------------------------------------------------------

def test_clip_l2_examples():
    assert np.allclose(clip_l2([3.0, 4.0], 1.0), [0.6, 0.8])
    assert np.array_equal(clip_l2([0.1, 0.0], 1.0), [0.1, 0.0])
    assert np.array_equal(clip_l2(np.zeros(3), 0.5), np.zeros(3))


def test_clip_linf_examples():
    assert np.allclose(clip_linf([0.05, -0.02], 0.031), [0.031, -0.02])
    assert np.allclose(clip_linf([-0.05], 0.031), [-0.031])
    d = np.array([0.01, -0.02, 0.0])
    assert np.array_equal(clip_linf(d, 0.031), d)


@settings(max_examples=200)
@given(arrays(float, 6, elements=finite), st.floats(1e-3, 1.0))
def test_clip_l2_bound_and_idempotent(delta, tau):
    once = clip_l2(delta, tau)
    assert np.linalg.norm(once) <= tau + 1e-9
    assert np.allclose(clip_l2(once, tau), once, atol=1e-12)


@settings(max_examples=200)
@given(arrays(float, 6, elements=finite), st.floats(1e-3, 1.0))
def test_clip_linf_bound_and_idempotent(delta, tau):
    once = clip_linf(delta, tau)
    assert np.all(np.abs(once) <= tau)
    assert np.array_equal(clip_linf(once, tau), once)


def test_clip_batches_rowwise():
    D = np.array([[3.0, 4.0], [0.1, 0.0]])
    assert np.allclose(clip_l2(D, 1.0), [[0.6, 0.8], [0.1, 0.0]])


# --- projection ---------------------------------------------------------------

def test_project_examples():
    x = np.array([0.2, 0.7])
    assert np.array_equal(project_to_S(x, x, NormBudget("linf", 0.1)), x)
    assert np.allclose(project_to_S([0.5], [0.9], NormBudget("linf", 0.1)), [0.6])
    assert project_to_S([0.99], [1.0], NormBudget("linf", 0.1))[0] <= 1.0
    assert project_to_S([0.99], [1.5], NormBudget("linf", 0.1))[0] == 1.0


def test_project_budget_holds_as_computed():
    rng = np.random.default_rng(0)
    X = rng.random((20_000, 8))
    C = rng.uniform(-1, 2, size=X.shape)
    for p in ("l2", "linf"):
        for tau in (1e-3, 0.15, 0.8):
            out = project_to_S(X, C, NormBudget(p, tau))
            assert np.all(perturbation_norm(X, out, p) <= tau)


def test_clip_l2_accepts_per_row_budgets():
    D = np.array([[3.0, 4.0], [3.0, 4.0]])
    assert np.allclose(clip_l2(D, np.array([[1.0], [10.0]])), [[0.6, 0.8], [3.0, 4.0]])


def test_project_rejects_dim_mismatch():
    with pytest.raises(ShapeError):
        project_to_S(np.zeros(3), np.zeros(4), NormBudget("l2", 0.1))


@settings(max_examples=200)
@given(arrays(float, 5, elements=unit), arrays(float, 5, elements=st.floats(-1, 2)),
       st.sampled_from(["l2", "linf"]), st.floats(1e-3, 1.0))
def test_project_feasible_and_fixed_point(x, c, p, tau):
    budget = NormBudget(p, tau)
    out = project_to_S(x, c, budget)
    assert np.all((out >= 0) & (out <= 1))
    norm = np.linalg.norm(out - x) if p == "l2" else np.max(np.abs(out - x))
    assert norm <= tau
    assert np.allclose(project_to_S(x, out, budget), out, atol=1e-12)


def test_budget_validation():
    with pytest.raises(ValueError):
        NormBudget("l1", 0.1)
    with pytest.raises(ValueError):
        NormBudget("l2", -0.1)
