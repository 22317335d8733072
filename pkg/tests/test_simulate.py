import math

import numpy as np
import pytest

from mdri.exceptions import MatrixError, UsageError
from mdri.simulate import (dominance_report, empirical_field_sup, empirical_tail_multi,
                           gaussian_chunk, gaussian_field_sampler, psd_factor, sample_gaussian,
                           sample_named, sample_normed_sums, simulate_exceedance, simulate_tail,
                           wilson_interval)

R2 = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_thread_count_does_not_change_samples():
    a = sample_gaussian(R2, 200000, seed=11, threads=1).values
    b = sample_gaussian(R2, 200000, seed=11, threads=8).values
    assert np.array_equal(a, b)
    c = sample_gaussian(R2, 200000, seed=11, stream=1).values
    assert not np.array_equal(a, c)


def test_prefix_stable():
    a = sample_gaussian(R2, 1000, seed=3).values
    b = sample_gaussian(R2, 500, seed=3).values
    assert np.array_equal(a[:500], b)


def test_zero_covariance():
    X = sample_gaussian(np.zeros((3, 3)), 100, seed=0).values
    assert np.all(X == 0)


def test_identity_covariance_recovered():
    X = sample_gaussian(np.eye(3), 10 ** 6, seed=4, threads=4).values
    assert np.max(np.abs(np.cov(X.T) - np.eye(3))) < 0.005


def test_psd_factor_rejects_indefinite():
    with pytest.raises(MatrixError):
        psd_factor([[1.0, 2.0], [2.0, 1.0]])
    L = psd_factor([[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(L @ L.T, [[1, 1], [1, 1]])


def test_uniform_second_moment():
    x = sample_named("uniform", 1, 10 ** 6, seed=1).values[:, 0]
    assert math.sqrt(np.mean(x ** 2)) == pytest.approx(1 / math.sqrt(3), abs=2e-3)
    with pytest.raises(UsageError):
        sample_named("cauchy", 1, 10, seed=1)


def test_normed_sums_variance():
    for desc in ("rademacher", "uniform"):
        S = sample_normed_sums(desc, 2, 16, 100000, seed=2).values
        var = 1.0 if desc == "rademacher" else 1 / 3
        assert np.allclose(S.var(axis=0), var, rtol=0.02)


def test_wilson_zero_hits_and_coverage():
    lo, hi = wilson_interval(0, 1000)
    assert lo == 0 and hi == pytest.approx(6.6349 / (1000 + 6.6349), rel=1e-3)
    rng = np.random.default_rng(0)
    p, n = 0.03, 2000
    k = rng.binomial(n, p, size=1000)
    lo, hi = wilson_interval(k, n)
    assert np.sum((lo <= p) & (p <= hi)) >= 985


def test_gaussian_tail_at_one():
    t = simulate_tail(gaussian_chunk([[1.0]]), 10 ** 6, [[1.0]], seed=5, signs="positive")
    assert abs(t.frequency[0] - 0.158655) <= 3 * t.half_width[0]


def test_orthant_symmetry():
    X = sample_gaussian(R2, 400000, seed=6).values
    t = empirical_tail_multi(X, [[0.5, 0.5], [1.0, 0.2]], signs="all")
    assert t.orthant_asymmetry() < 3.0


def test_streaming_matches_stored():
    X = sample_gaussian(R2, 150000, seed=9).values
    a = empirical_tail_multi(X, [[1.0, 1.0]], signs="all")
    b = simulate_tail(gaussian_chunk(R2), 150000, [[1.0, 1.0]], seed=9, signs="all", threads=3)
    assert np.array_equal(a.counts, b.counts)


def test_exceedance_euclidean():
    t = simulate_exceedance(gaussian_chunk(np.eye(2)), lambda X: np.linalg.norm(X, axis=1),
                            [1.0, 2.0], 400000, seed=1)
    exact = np.exp(-np.array([1.0, 2.0]) ** 2 / 2)
    assert np.all(np.abs(t.frequency - exact) <= 3 * t.half_width)


def test_dominance_trivial():
    t = simulate_tail(gaussian_chunk([[1.0]]), 10000, [[1.0], [2.0]], seed=1, signs="positive")
    assert dominance_report(np.ones(2), t).violations == 0
    assert dominance_report(np.zeros(2), t).violations == 2
    d = dominance_report(np.ones(2), t).as_dict()
    assert d["points"] == 2


def test_single_point_field_reduces_to_vector():
    sampler = gaussian_field_sampler(R2, 1, 2)
    joint, mm = empirical_field_sup(sampler, [[1.0, 1.0]], 200000, seed=3)
    plain = simulate_tail(lambda rng, rows: sampler(rng, rows)[:, 0, :], 200000, [[1.0, 1.0]],
                          seed=3, signs="positive")
    assert abs(joint.frequency[0] - plain.frequency[0]) <= 3 * plain.half_width[0]
    assert mm.points.shape == (1, 1)


def test_field_guard():
    with pytest.raises(UsageError):
        gaussian_field_sampler(np.eye(2), 5000, 2)
