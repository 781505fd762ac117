import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ars import metrics
from ars.metrics import MetricError


def ssim_loops(a, b, window=8, L=1.0):
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    vals = []
    for i in range(a.shape[0] - window + 1):
        for j in range(a.shape[1] - window + 1):
            pa = a[i:i + window, j:j + window].ravel()
            pb = b[i:i + window, j:j + window].ravel()
            ma, mb = pa.mean(), pb.mean()
            va, vb = pa.var(), pb.var()
            cov = np.mean((pa - ma) * (pb - mb))
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_ssim_matches_patch_loop(rng):
    for _ in range(5):
        a = rng.uniform(size=(12, 10))
        b = np.clip(a + rng.normal(scale=0.2, size=a.shape), 0, 1)
        assert metrics.ssim(a, b) == pytest.approx(ssim_loops(a, b), rel=1e-10)


def test_ssim_identical_and_flat_vector():
    a = np.linspace(0, 1, 784)
    assert metrics.ssim(a, a, (28, 28)) == 1.0
    assert metrics.ssim(a, 1 - a, (28, 28)) < 0.5
    with pytest.raises(MetricError):
        metrics.ssim(a, a)
    with pytest.raises(MetricError):
        metrics.ssim(np.zeros((4, 4)), np.zeros((4, 4)))


def test_mse_and_psnr_known_values():
    x = np.zeros(4)
    y = np.full(4, 0.1)
    assert metrics.mse(x, y) == pytest.approx(0.01)
    assert metrics.psnr(x, y) == pytest.approx(20.0)
    assert metrics.psnr(x, x) == metrics.PSNR_CAP_DB
    with pytest.raises(MetricError):
        metrics.mse(np.zeros(3), np.zeros(4))
    with pytest.raises(MetricError):
        metrics.mse([], [])


def test_reconstruction_loss_sign_convention(rng):
    X = rng.uniform(size=(5, 6))
    Xb = rng.uniform(size=(5, 6))
    rl = metrics.reconstruction_loss(X, Xb)
    assert rl.raw == pytest.approx(np.mean((X - Xb) ** 2))
    assert rl.signed == -rl.raw
    assert rl.sample_count == 5


def test_feature_loss_is_distance_to_r():
    P = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert metrics.feature_loss(P, [1.0, 0.0]) == pytest.approx(1.0)
    assert metrics.equal_to_r_rate(P, [1.0, 0.0]) == 0.5
    with pytest.raises(MetricError):
        metrics.feature_loss(P, [1.0, 0.0, 0.0])


def test_overall_privacy_loss_weights():
    assert metrics.overall_privacy_loss(2.0, [4.0, 8.0], [0.5, 0.25, 0.25]) == pytest.approx(4.0)
    with pytest.raises(MetricError):
        metrics.overall_privacy_loss(1.0, [1.0], [0.6, 0.6])
    with pytest.raises(MetricError):
        metrics.overall_privacy_loss(1.0, [1.0], [1.0])
    with pytest.raises(MetricError):
        metrics.check_lambdas([1.5, -0.5])


def test_accuracy_and_f1():
    preds = np.array([1, 1, 0, 0, 1])
    labels = np.array([1, 0, 0, 1, 1])
    assert metrics.accuracy(preds, labels) == pytest.approx(0.6)
    # tp=2 fp=1 fn=1
    assert metrics.f1(preds, labels) == pytest.approx(4 / 6)
    assert metrics.f1(np.zeros(3), np.zeros(3)) == 0.0
    one_hot = np.eye(2)[preds]
    assert metrics.accuracy(one_hot, labels) == metrics.accuracy(preds, labels)


def test_macro_f1_averages_classes():
    preds = np.array([0, 1, 2, 2])
    labels = np.array([0, 1, 1, 2])
    expect = np.mean([metrics.f1(preds, labels, c) for c in range(3)])
    assert metrics.macro_f1(preds, labels, 3) == pytest.approx(expect)


def test_tabular_reconstruction_accuracy_groups():
    # numeric col 0, categorical cols 1..3
    X = np.array([[0.5, 0, 1, 0], [0.2, 1, 0, 0]])
    Xb = np.array([[0.52, 0.1, 0.7, 0.2], [0.5, 0.2, 0.9, 0.0]])
    acc = metrics.tabular_reconstruction_accuracy(X, Xb, [("numeric", 0, 1), ("categorical", 1, 4)])
    np.testing.assert_array_equal(acc, [1.0, 0.0])


def test_tabular_cold_span_counts_when_reconstruction_stays_cold():
    X = np.array([[0.0, 0.0], [0.0, 0.0]])
    Xb = np.array([[0.1, 0.2], [0.9, 0.0]])
    np.testing.assert_array_equal(metrics.tabular_reconstruction_accuracy(X, Xb, [("categorical", 0, 2)]), [1.0, 0.0])


def test_overlap_rate():
    assert metrics.overlap_rate([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5
    with pytest.raises(MetricError):
        metrics.overlap_rate([1, 0], [1, 0, 1])


def enumerate_overlap(n, t):
    hits = 0
    for bits in itertools.product((0, 1), repeat=n):
        # agreement with a fixed mask; by symmetry any fixed mask works
        if Fraction(sum(bits), n) >= Fraction(t).limit_denominator(1000):
            hits += 1
    return Fraction(hits, 2**n)


def test_overlap_probability_n4_by_enumeration():
    assert enumerate_overlap(4, 0.75) == Fraction(5, 16)
    assert metrics.overlap_probability(4, 0.75) == 5 / 16


@pytest.mark.parametrize("n,t", [(3, 0.6), (5, 0.8), (8, 0.75), (10, 1.0), (11, 0.55)])
def test_overlap_probability_small_n_by_enumeration(n, t):
    assert metrics.overlap_probability(n, t) == pytest.approx(float(enumerate_overlap(n, t)), rel=1e-12)


def test_overlap_probability_n256_bound():
    p = metrics.overlap_probability(256, 0.75)
    assert p <= 2.449e-16
    assert p == pytest.approx(stats.binom.sf(191, 256, 0.5), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 400), st.floats(0.51, 1.0))
def test_overlap_probability_matches_scipy(n, t):
    k = math.ceil(t * n - 1e-12)
    ref = stats.binom.sf(k - 1, n, 0.5)
    assert metrics.overlap_probability(n, t) == pytest.approx(ref, rel=1e-9, abs=1e-300)


def test_normal_approximation_converges():
    exact = metrics.overlap_probability(10000, 0.51)
    approx = metrics.overlap_probability(10000, 0.51, "normal_approx")
    assert approx == pytest.approx(exact, rel=0.1)


@pytest.mark.parametrize("n,t,method", [(0, 0.75, "exact"), (8, 0.5, "exact"), (8, 1.2, "exact"), (8, 0.75, "poisson")])
def test_overlap_probability_rejects_bad_input(n, t, method):
    with pytest.raises(MetricError):
        metrics.overlap_probability(n, t, method)


@pytest.mark.parametrize("n", [4096, 4097, 20000])
def test_overlap_probability_large_n_both_paths(n):
    k = math.ceil(0.52 * n - 1e-12)
    assert metrics.overlap_probability(n, 0.52) == pytest.approx(stats.binom.sf(k - 1, n, 0.5), rel=1e-9)
