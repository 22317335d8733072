import math

import numpy as np
import pytest
from scipy.stats import ortho_group

from mdri.exceptions import DomainError, InvalidDirectionSetError, MatrixError, UsageError
from mdri.norm import (DirectionSet, Lp, RandomVectorModel, fundamental_function,
                       gaussian_lp_constant, mdri_norm, sandwich_check, sphere_points)
from mdri.simulate import sample_gaussian


def random_pd(d, rng):
    Q = ortho_group.rvs(d, random_state=rng)
    return Q @ np.diag(rng.uniform(0.2, 5.0, d)) @ Q.T


def test_gaussian_lp_constant_values():
    assert gaussian_lp_constant(2) == pytest.approx(1.0, abs=1e-12)
    assert gaussian_lp_constant(4) == pytest.approx(3 ** 0.25, rel=1e-12)
    assert gaussian_lp_constant(1) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)
    with pytest.raises(DomainError):
        gaussian_lp_constant(0.5)


def test_identity_and_diag():
    for d in (1, 2, 5):
        rep = mdri_norm(RandomVectorModel.gaussian(np.eye(d)), DirectionSet.sphere(d), Lp(2))
        assert rep.norm == pytest.approx(1.0)
    rep = mdri_norm(RandomVectorModel.gaussian(np.diag([1.0, 4.0])), DirectionSet.sphere(2), Lp(2))
    assert rep.norm == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(np.abs(rep.direction), [0, 1])
    d = rep.as_dict()
    assert set(d) >= {"norm", "direction", "lower", "upper", "base_space", "grid_size"}


@pytest.mark.parametrize("p", [1, 3, 4])
def test_gaussian_lp_closed_form_vs_sphere(p, rng):
    R = random_pd(3, rng)
    model = RandomVectorModel.gaussian(R)
    exact = math.sqrt(np.linalg.eigvalsh(R)[-1]) * gaussian_lp_constant(p)
    rep = mdri_norm(model, DirectionSet.sphere(3), Lp(p), method="sphere")
    assert rep.norm == pytest.approx(exact, rel=1e-8)


def test_sphere_discretization_converges(rng):
    R = random_pd(4, rng)
    m = RandomVectorModel.gaussian(R)
    a = mdri_norm(m, DirectionSet.sphere(4), Lp(2), method="sphere", n_points=2 ** 12).norm
    b = mdri_norm(m, DirectionSet.sphere(4), Lp(2), method="sphere", n_points=2 ** 13).norm
    assert abs(a - b) < 1e-4


def test_sphere_points_unit_and_deterministic():
    P = sphere_points(3, 512)
    assert np.allclose(np.linalg.norm(P, axis=1), 1.0)
    assert np.array_equal(P, sphere_points(3, 512))


def test_homogeneity_and_triangle(rng):
    R1, R2 = random_pd(3, rng), random_pd(3, rng)
    B = DirectionSet.sphere(3)
    m1 = RandomVectorModel.gaussian(R1)
    n1 = mdri_norm(m1, B, Lp(2)).norm
    assert mdri_norm(m1.scaled(-2.5), B, Lp(2)).norm == pytest.approx(2.5 * n1, rel=1e-12)
    n2 = mdri_norm(RandomVectorModel.gaussian(R2), B, Lp(2)).norm
    n12 = mdri_norm(RandomVectorModel.gaussian(R1 + R2), B, Lp(2)).norm  # independent sum
    assert n12 <= n1 + n2 + 1e-9


def test_permutation_invariance_empirical():
    X = sample_gaussian(np.diag([1.0, 2.0]), 5000, seed=1).values
    B = DirectionSet.sphere(2)
    a = mdri_norm(RandomVectorModel.empirical(X), B, Lp(3), n_points=512)
    perm = np.random.default_rng(0).permutation(5000)
    b = mdri_norm(RandomVectorModel.empirical(X[perm]), B, Lp(3), n_points=512)
    assert a.norm == pytest.approx(b.norm, rel=1e-12)


def test_bootstrap_interval():
    X = sample_gaussian(np.eye(2), 4000, seed=2).values
    rep = mdri_norm(RandomVectorModel.empirical(X), DirectionSet.sphere(2), Lp(2), n_points=256,
                    bootstrap=200, seed=3)
    lo, hi = rep.ci
    assert lo < rep.norm < hi


def test_finite_directions_and_extremes(rng):
    R = random_pd(2, rng)
    m = RandomVectorModel.gaussian(R)
    V = np.array([[1, 0], [0, 1], [-1, 0], [0, -1], [0.2, 0.1], [0, 0]], float)
    full = mdri_norm(m, DirectionSet.finite(V), Lp(2)).norm
    ext = DirectionSet.finite(V).extreme_subset()
    assert ext.vectors.shape[0] == 4
    assert mdri_norm(m, ext, Lp(2)).norm == full


def test_direction_set_validation():
    with pytest.raises(InvalidDirectionSetError):
        DirectionSet.finite([[1.0, 0.0]])
    with pytest.raises(InvalidDirectionSetError):
        DirectionSet.finite([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(InvalidDirectionSetError):
        DirectionSet.finite(np.zeros((0, 2)))


def test_model_validation():
    with pytest.raises(MatrixError):
        RandomVectorModel.gaussian([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(UsageError):
        RandomVectorModel.empirical([[1.0, np.nan], [0.0, 0.0]])
    with pytest.raises(UsageError):
        RandomVectorModel.empirical([[1.0, 2.0]])


def test_sandwich_examples():
    r = sandwich_check(RandomVectorModel.gaussian(np.eye(2)), DirectionSet.sphere(2), Lp(2))
    assert (r.lower, r.norm, r.upper, r.passed) == (pytest.approx(1), pytest.approx(1),
                                                    pytest.approx(2), True)
    r = sandwich_check(RandomVectorModel.gaussian(np.diag([1., 4.])), DirectionSet.sphere(2), Lp(2))
    assert (r.lower, r.norm, r.upper, r.passed) == (pytest.approx(2), pytest.approx(2),
                                                    pytest.approx(3), True)
    fin = sandwich_check(RandomVectorModel.gaussian(np.eye(2)),
                         DirectionSet.finite([[1, 0], [0, 1], [0, 0]]), Lp(2))
    assert fin.passed and fin.c1 == pytest.approx(1.0)


def test_fundamental_function_examples():
    assert fundamental_function([0.25], 2).value == pytest.approx(0.5)
    d = 0.3
    v = fundamental_function([d, d], 2, "disjoint")
    assert v.value == pytest.approx(math.sqrt(d), rel=1e-9)
    v = fundamental_function([d, d], 2, "identical")
    assert v.value == pytest.approx(math.sqrt(2 * d), rel=1e-9)
    assert np.allclose(np.abs(v.direction), [2 ** -0.5] * 2, atol=1e-6)
    v = fundamental_function([0.1, 0.4, 0.2], 3, "nested")
    assert v.lower <= v.value <= v.upper
    with pytest.raises(DomainError):
        fundamental_function([1.5], 2)


def test_fundamental_disjoint_small_p():
    delta = np.array([0.2, 0.3])
    p = 1.5
    v = fundamental_function(delta, p, "disjoint")
    exact = np.sum(delta ** (2 / (2 - p))) ** ((2 - p) / (2 * p))
    assert v.value == pytest.approx(exact, rel=1e-6)
