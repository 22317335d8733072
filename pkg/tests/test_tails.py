import io
import math

import numpy as np
import pytest

from mdri.exceptions import DomainError, EntropyDivergenceError, MatrixError
from mdri.fenchel import quadratic_conjugate
from mdri.geometry import CoveringProfile, entropy_integral
from mdri.space_functions import NuFunction
from mdri.tails import (calibrate_c0, chernoff_tail_bound, ellipsoid_tail_bound,
                        exponent_ratio, gaussian_orthant_exponent, optimize_tail_over_p,
                        polar_tail_bound, sum_tail_bound, weighted_norm)


def half_square(r):
    return 0.5 * np.asarray(r, float) ** 2


def test_chernoff_scalar_gaussian():
    rep = chernoff_tail_bound(quadratic_conjugate([[1.0]]), [[2.0]])
    assert rep.bound[0] == pytest.approx(math.exp(-2))


@pytest.mark.parametrize("rho", [-0.5, 0.0, 0.5])
def test_chernoff_bivariate(rho):
    R = np.array([[1, rho], [rho, 1]])
    x = np.array([[1.0, 1.5], [2.0, 0.5]])
    rep = chernoff_tail_bound(quadratic_conjugate(R), x)
    assert np.allclose(rep.bound, np.minimum(1, np.exp(-gaussian_orthant_exponent(x, rho))))
    if rho == 0:
        assert chernoff_tail_bound(quadratic_conjugate(R), [[1, 1]]).bound[0] == \
            pytest.approx(math.exp(-1))


def test_chernoff_signs_all_dominates_positive():
    R = np.array([[1, -0.5], [-0.5, 1]])
    x = [[1.0, 1.0]]
    pos = chernoff_tail_bound(quadratic_conjugate(R), x).bound[0]
    allb = chernoff_tail_bound(quadratic_conjugate(R), x, signs="all").bound[0]
    assert allb >= pos


def test_chernoff_requires_positive_points():
    with pytest.raises(DomainError):
        chernoff_tail_bound(quadratic_conjugate(np.eye(2)), [[1.0, -1.0]])


def test_ellipsoid_examples():
    x = np.array([[2.0, 0.0], [0.0, 2.0], [math.sqrt(2), math.sqrt(2)]])
    assert np.allclose(ellipsoid_tail_bound(half_square, np.eye(2), 1.0, x).bound, math.exp(-2))
    rep = ellipsoid_tail_bound(half_square, np.diag([4.0, 1.0]), 1.0, [[2.0, 0.0]])
    assert rep.bound[0] == pytest.approx(math.exp(-0.5))
    y = np.array([[1.3, 0.7]])
    a = ellipsoid_tail_bound(half_square, np.eye(2), 2.0, y).bound
    b = ellipsoid_tail_bound(half_square, np.eye(2), 1.0, y / 2).bound
    assert np.allclose(a, b)
    with pytest.raises(MatrixError):
        weighted_norm(y, [[1.0, 0.0], [0.0, 0.0]])


def test_polar_power_law():
    u = np.array([1.0, 2.0, 4.0, 8.0])
    rep = polar_tail_bound(0.1, 2.0, 2, u, 3.0)
    assert np.allclose(rep.raw[1:] / rep.raw[:-1], 2.0 ** -3)
    K = 7
    I = entropy_integral(CoveringProfile.constant(K, np.geomspace(1, 1e-3, 8)), 2.0, 1e-3)
    rep = polar_tail_bound(1.0, I, 2, [3.0], 2.0)
    assert rep.raw[0] == pytest.approx(K / 9.0, rel=1e-6)


def test_polar_divergence_and_domain():
    prof = CoveringProfile.power_model(1.0, 1.0, np.geomspace(1, 1e-3, 20))
    with pytest.raises(EntropyDivergenceError):
        polar_tail_bound(1.0, entropy_integral(prof, 0.9, 1e-3), 2, [2.0], 0.9)
    with pytest.raises(DomainError):
        polar_tail_bound(1.0, 1.0, 2, [0.5], 2.0)


def test_calibrate_c0_reproduces_target():
    c0 = calibrate_c0(1.2, 3.0, 3.0, 4.0, 1e-3)
    assert polar_tail_bound(1.2, 3.0, 2, [4.0], 3.0, c0).bound[0] == pytest.approx(1e-3)


def test_optimize_over_p():
    f = lambda p, u: (2.0 * p) ** p * u ** (-p)
    single = optimize_tail_over_p(f, [3.0], [10.0])
    assert single.raw[0] == pytest.approx(f(3.0, 10.0))
    dom = optimize_tail_over_p(lambda p, u: (1.0 if p == 2 else 0.5) * u ** -2.0, [2.0, 5.0],
                               [1.0, 5.0], refine=False)
    assert np.allclose(dom.params["p_star"], 5.0)
    grow = optimize_tail_over_p(f, np.linspace(2.1, 20, 40), [10.0, 30.0, 100.0])
    assert np.all(np.diff(grow.params["p_star"]) > 0)
    # interior optimum p* = u / (2e) for this family
    assert grow.params["p_star"][1] == pytest.approx(30 / (2 * math.e), rel=1e-3)


def test_optimize_all_divergent():
    def bad(p, u):
        raise EntropyDivergenceError("x")
    with pytest.raises(EntropyDivergenceError):
        optimize_tail_over_p(bad, [1.0, 2.0], [2.0])


def test_sum_tail_bound_gaussian_equals_chernoff():
    ns = quadratic_conjugate(np.eye(2))
    x = [[0.5, 1.0], [2.0, 2.0]]
    assert np.allclose(sum_tail_bound(ns, 1.0, x).bound, chernoff_tail_bound(ns, x).bound)
    tiny = sum_tail_bound(ns, 1.0, [[1e-9, 1e-9]])
    assert tiny.bound[0] == pytest.approx(1.0)


def test_monotone_and_capped():
    ns = quadratic_conjugate([[1, 0.3], [0.3, 1]])
    t = np.linspace(0.01, 4, 50)
    b = chernoff_tail_bound(ns, np.column_stack([t, t])).bound
    assert np.all(np.diff(b) <= 0) and np.all(b <= 1)
    rep = polar_tail_bound(1.0, 5.0, 2, [1.0, 100.0], 2.0)
    assert rep.capped[0] and not rep.capped[1]


def test_report_csv_and_ratio():
    rep = chernoff_tail_bound(quadratic_conjugate(np.eye(2)), [[1.0, 1.0], [2.0, 2.0]])
    buf = io.StringIO()
    rep.write_csv(buf)
    assert len(buf.getvalue().splitlines()) == 3
    assert exponent_ratio([math.exp(-2.0)], [2.0])[0] == pytest.approx(1.0)
    assert math.isinf(exponent_ratio([0.0], [2.0])[0])
