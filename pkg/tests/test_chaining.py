import math

import numpy as np
import pytest

from mdri.chaining import (FieldModel, calibrate_polynomial_constant, chaining_tail_bound,
                           correlation_matrix, gaussian_polynomial_bound, matrix_order_check,
                           pi_heuristic, w_closed_form, w_series)
from mdri.exceptions import DegenerateDirectionError, DomainError
from mdri.fenchel import quadratic_conjugate
from mdri.geometry import CoveringProfile, covering_profile


def grid_points(n):
    g = np.linspace(0, 1, n)
    return np.array(np.meshgrid(g, g, indexing="ij")).reshape(2, -1).T


def test_w_constant_profile():
    prof = CoveringProfile.constant(9, np.geomspace(1, 1e-3, 10))
    for p in (0.05, 0.2, 0.45):
        assert w_series(prof, p).value == pytest.approx(math.log(9), rel=1e-12)


@pytest.mark.parametrize("p", np.arange(1, 10) * 0.05)
def test_w_closed_form(p):
    prof = CoveringProfile.logarithmic(0.7, 1.8, np.geomspace(1, 1e-6, 30))
    assert abs(w_series(prof, p).value - w_closed_form(0.7, 1.8, p)) < 1e-10


def test_w_domain():
    prof = CoveringProfile.constant(2, [1.0, 0.5])
    with pytest.raises(DomainError):
        w_series(prof, 0.6)


def test_w_finite_set_capped(rng):
    X = rng.uniform(size=(30, 2))
    prof = covering_profile(X, np.geomspace(1, 0.01, 12))
    for p in (0.05, 0.25, 0.45):
        assert w_series(prof, p).value <= math.log(30) + 1e-12


def test_single_point_reduces_to_chernoff():
    f = FieldModel.gaussian(np.zeros((1, 2)), [[1.0]])
    rep = chaining_tail_bound(f.profile(), quadratic_conjugate([[1.0]]), [[2.0]])
    assert rep.bound[0] == pytest.approx(math.exp(-2), rel=1e-3)
    assert rep.bound[0] >= math.exp(-2)


def test_field_validation_and_distance():
    f = FieldModel.gaussian(grid_points(8), correlation_matrix(0.5), length=1.0)
    assert f.size == 64 and f.validate()
    D = f.distance
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    bad = FieldModel(f.points, 2, f.nu, D * 3, f.center)
    with pytest.raises(DomainError):
        bad.validate()


def test_gaussian_distance_scaling():
    # larger increment variance means larger natural distance
    f = FieldModel.gaussian(np.array([[0.0], [0.3], [1.0]]), np.eye(2))
    assert 0 < f.distance[0, 1] < f.distance[0, 2]


def test_matrix_order():
    A = np.eye(2)
    assert matrix_order_check(A, A)
    assert not matrix_order_check(np.eye(2), correlation_matrix(0.5))
    assert matrix_order_check(np.zeros((2, 2)), correlation_matrix(0.5))


def test_pi_heuristic():
    ns = lambda X: 0.5 * np.sum(np.atleast_2d(X) ** 2, axis=1)
    ch = pi_heuristic([2.0, 0.0], gradient=lambda v: v, C=1.0)
    assert ch.p == pytest.approx(0.25) and not ch.fallback
    fd = pi_heuristic([2.0, 0.0], nu_star=ns, C=1.0)
    assert fd.pi == pytest.approx(0.25, rel=1e-6)
    pis = [pi_heuristic([t, t], gradient=lambda v: v).pi for t in (1, 10, 100)]
    assert pis[0] > pis[1] > pis[2] and pis[2] < 1e-3
    with pytest.raises(DegenerateDirectionError):
        pi_heuristic([0.0, 0.0], gradient=lambda v: v)


@pytest.fixture(scope="module")
def field8():
    f = FieldModel.gaussian(grid_points(8), correlation_matrix(0.5), length=1.0)
    return f, f.profile()


def test_bound_monotone(field8):
    f, prof = field8
    ns = quadratic_conjugate(correlation_matrix(0.5))
    t = np.linspace(1.0, 4.0, 12)
    b = chaining_tail_bound(prof, ns, np.column_stack([t, t])).log_bound
    assert np.all(np.diff(b) <= 1e-12)
    b2 = chaining_tail_bound(prof, ns, np.column_stack([np.full(12, 2.0), t])).log_bound
    assert np.all(np.diff(b2) <= 1e-12)


def test_t_scaling(field8):
    _, prof = field8
    R = correlation_matrix(0.5)
    ns = quadratic_conjugate(R)
    v = np.array([2.0, 2.5])
    for t in (1.0, 1.5, 2.0):
        rep = chaining_tail_bound(prof, ns, [t * v])
        p = rep.p_star[0]
        w = w_series(prof, p).value
        expected = w - float(ns((1 - p) * t * v))
        assert rep.log_bound[0] == pytest.approx(expected, abs=1e-9)


def test_net_refinement_monotone():
    ns = quadratic_conjugate(correlation_matrix(0.5))
    v = [[2.0, 2.0], [3.0, 2.5]]
    coarse = FieldModel.gaussian(grid_points(4), correlation_matrix(0.5), length=1.0)
    fine = FieldModel.gaussian(grid_points(7), correlation_matrix(0.5), length=1.0)
    eps = np.geomspace(1.0, 0.05, 12)
    bc = chaining_tail_bound(coarse.profile(eps), ns, v).log_bound
    bf = chaining_tail_bound(fine.profile(eps), ns, v).log_bound
    assert np.all(bf >= bc - 1e-12)


def test_polynomial_form():
    v = np.array([[1.5, 2.0], [3.0, 3.0]])
    C = calibrate_polynomial_constant(v, [1e-3, 1e-5], 0.5, 1.0)
    b = gaussian_polynomial_bound(v, 0.5, 1.0, C)
    assert np.all(b >= np.array([1e-3, 1e-5]) * (1 - 1e-12))
    assert np.any(np.isclose(b, [1e-3, 1e-5]))
    with pytest.raises(DomainError):
        gaussian_polynomial_bound([[0.5, 2.0]], 0.5, 1.0, 1.0)
