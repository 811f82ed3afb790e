import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eprcs.errors import AllZero, ShapeMismatch
from eprcs.entropy_analysis import (
    conditional_entropy,
    marginal_entropies,
    mse,
    mutual_information,
    shannon_entropy,
    steering_bound,
    steering_witness,
    threshold_normalize,
)
from eprcs.spdc_model import MOMENTUM, momentum_joint, position_joint

DIAG = np.eye(16) / 16
FLAT = np.full((16, 16), 1 / 256)


def scipy_conditional_entropy(p):
    # independent route: average over columns of the entropy of P(A | B=b)
    from scipy.stats import entropy

    pb = p.sum(axis=0)
    return sum(pb[b] * entropy(p[:, b] / pb[b], base=2) for b in range(p.shape[1]) if pb[b] > 0)


# -- threshold_normalize -------------------------------------------------------

def test_zero_threshold_is_identity(rng):
    p = rng.random((8, 8))
    p /= p.sum()
    np.testing.assert_allclose(threshold_normalize(p, 0.0).values, p, atol=1e-15)


def test_floor_removed():
    signal = np.full((16, 16), 0.03)
    signal[np.arange(16), np.arange(16)] = 1.0
    out = threshold_normalize(signal, 0.05).values
    np.testing.assert_allclose(out, DIAG, atol=1e-15)


def test_high_threshold_keeps_argmax():
    signal = np.zeros((6, 6))
    signal[1, 2], signal[4, 4] = 0.7, 0.9
    out = threshold_normalize(signal, 0.999).values
    assert out[4, 4] == 1.0 and out.sum() == 1.0


def test_negatives_clamped():
    signal = np.array([[1.0, -0.5], [0.2, 0.3]])
    out = threshold_normalize(signal, 0.0).values
    assert out.min() == 0.0 and out.sum() == pytest.approx(1.0)


def test_all_zero():
    with pytest.raises(AllZero):
        threshold_normalize(np.zeros((4, 4)), 0.1)
    with pytest.raises(AllZero):
        threshold_normalize(-np.ones((4, 4)), 0.0)
    with pytest.raises(ValueError):
        threshold_normalize(np.ones((4, 4)), 1.0)


@settings(max_examples=50, deadline=None)
@given(arrays(float, (6, 6), elements=st.floats(-1, 1)), st.floats(0, 0.99))
def test_threshold_output_is_distribution(x, fraction):
    if not x.max() > 0:
        return
    out = threshold_normalize(x, fraction).values
    assert out.min() >= 0 and out.sum() == pytest.approx(1.0)


# -- entropies -----------------------------------------------------------------

def test_conditional_entropy_examples():
    assert conditional_entropy(DIAG) == pytest.approx(0.0, abs=1e-12)
    assert conditional_entropy(FLAT) == pytest.approx(4.0)
    blocks = np.kron(np.eye(8), np.ones((2, 2))) / 32
    assert conditional_entropy(blocks) == pytest.approx(1.0)


def test_conditioning_axis(rng):
    p = rng.dirichlet(np.ones(20)).reshape(4, 5)
    assert conditional_entropy(p, conditioned_on=0) == pytest.approx(conditional_entropy(p.T))


def test_matches_scipy_route(rng):
    for _ in range(20):
        p = rng.dirichlet(np.full(64, 0.3)).reshape(8, 8)
        assert conditional_entropy(p) == pytest.approx(scipy_conditional_entropy(p), abs=1e-12)


def test_mutual_information_examples():
    assert mutual_information(FLAT) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information(DIAG) == pytest.approx(4.0)


def test_mutual_information_nonnegative(rng):
    for _ in range(1000):
        p = rng.dirichlet(np.full(36, rng.uniform(0.05, 2))).reshape(6, 6)
        assert mutual_information(p) >= 0


def test_conditioning_reduces_entropy(rng):
    for _ in range(200):
        p = rng.dirichlet(np.full(49, 0.5)).reshape(7, 7)
        assert conditional_entropy(p) <= marginal_entropies(p)[0] + 1e-12


def test_shannon_zero_convention():
    assert shannon_entropy([0.5, 0.5, 0.0]) == pytest.approx(1.0)


def test_two_dimensional_input_required():
    with pytest.raises(ShapeMismatch):
        conditional_entropy(np.ones(4) / 4)


# -- steering ------------------------------------------------------------------

def test_bound_fourier_grid():
    dx = 1.0
    dk = 2 * math.pi / 16
    assert steering_bound(dx, dk) == pytest.approx(math.log2(16 * math.e / 2))
    assert steering_bound(dx, dk) == pytest.approx(4.4427, abs=1e-4)
    assert steering_bound(dx, dk, dims=2) == 2 * steering_bound(dx, dk)


def test_bound_vacuous_warns():
    with pytest.warns(RuntimeWarning, match="vacuous"):
        assert steering_bound(math.pi * math.e, 1.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        steering_bound(0.0, 1.0)


def test_exact_joints_entangled(state16):
    r = steering_witness(position_joint(state16), momentum_joint(state16))
    assert r.entangled and r.violation > 4.0


def test_uniform_not_entangled():
    r = steering_witness(FLAT, FLAT, dx=1.0, dk=2 * math.pi / 16)
    assert not r.entangled
    assert r.violation == pytest.approx(math.log2(8 * math.e) - 8)


def test_diagonal_and_antidiagonal():
    r = steering_witness(DIAG, DIAG[::-1], dx=1.0, dk=2 * math.pi / 16)
    assert r.h_x_cond + r.h_k_cond == pytest.approx(0.0, abs=1e-12)
    assert r.violation == pytest.approx(4.4427, abs=1e-4) and r.entangled


def test_separable_marginals_not_entangled(state16):
    X, K = position_joint(state16).values, momentum_joint(state16).values
    px, pk = X.sum(axis=1), K.sum(axis=1)
    g = state16.grid
    r = steering_witness(np.outer(px, px), np.outer(pk, pk), dx=g.dx, dk=g.dk)
    assert r.bound > 0 and not r.entangled
    assert r.h_x_cond == pytest.approx(shannon_entropy(px))


def test_noise_never_helps(state16):
    rng = np.random.default_rng(8)
    X, K = position_joint(state16), momentum_joint(state16)
    g = state16.grid
    for fraction in (0.0, 0.05):
        exact = steering_witness(threshold_normalize(X, fraction), threshold_normalize(K, fraction)).violation
        for _ in range(50):
            nx = X.values + 0.05 * X.values.max() * rng.normal(size=X.values.shape)
            nk = K.values + 0.05 * K.values.max() * rng.normal(size=K.values.shape)
            noisy = steering_witness(threshold_normalize(nx, fraction, g), threshold_normalize(nk, fraction, g, MOMENTUM))
            assert noisy.violation <= exact + 0.1


def test_witness_needs_widths():
    with pytest.raises(ValueError):
        steering_witness(DIAG, DIAG)


def test_report_text(state16):
    r = steering_witness(position_joint(state16), momentum_joint(state16))
    d = json.loads(r.to_text(run_id="abc", M=64, flux=250.0, threshold=0.05))
    assert d["provenance"] == {"run_id": "abc", "M": 64, "flux": 250.0, "threshold": 0.05}
    assert d["entangled"] is True and d["dims"] == 1 and d["violation"] == pytest.approx(r.violation)


# -- mse -----------------------------------------------------------------------

def test_mse_examples(rng):
    a, b = rng.random((5, 5)), rng.random((5, 5))
    assert mse(a, a) == 0.0
    assert mse(a, a + 0.3) == pytest.approx(0.09)
    assert mse(a, b) == mse(b, a)
    with pytest.raises(ShapeMismatch):
        mse(a, np.ones((4, 4)))
