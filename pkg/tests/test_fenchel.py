import io
import math
import warnings

import numpy as np
import pytest

from mdri.exceptions import GridExtentError, TruncationWarning, UsageError
from mdri.fenchel import (GridFunction, conjugate_1d, conjugate_nd, conjugate_points,
                          convex_envelope_bruteforce, double_conjugate_check, grid_tolerance,
                          nu_bar, nu_bar_values, quadratic_conjugate)
from mdri.space_functions import NuFunction

LAM = np.linspace(-10, 10, 4001)


def test_quadratic_self_conjugate():
    g = conjugate_1d(lambda l: l * l / 2, LAM, np.linspace(-5, 5, 201))
    assert np.max(np.abs(g.values - g.axes[0] ** 2 / 2)) <= 2.5e-3
    assert g.is_convex()


def test_abs_conjugate_is_indicator_like():
    x = np.linspace(-3, 3, 61)
    g = conjugate_1d(np.abs, LAM, x)
    inside = np.abs(g.axes[0]) <= 1
    assert np.allclose(g.values[inside], 0.0, atol=1e-12)
    outside = ~inside
    assert np.allclose(g.values[outside], 10 * (np.abs(g.axes[0][outside]) - 1))
    assert np.all(g.boundary[outside])


def test_exp_conjugate_against_fine_grid():
    lam = np.linspace(-5, 5, 2001)
    x = np.linspace(0.05, 100, 300)
    g = conjugate_1d(np.expm1, lam, x)
    fine = np.linspace(-5, 5, 20001)
    brute = np.max(x[:, None] * fine[None, :] - np.expm1(fine)[None, :], axis=1)
    assert np.max(np.abs(g.values - brute)) < 1e-2
    exact = x * np.log(x) - x + 1
    assert np.max(np.abs(g.values - exact) / np.maximum(1, exact)) < 1e-3


def test_empty_grid():
    with pytest.raises(UsageError):
        conjugate_1d(np.abs, [], [1.0])


@pytest.mark.parametrize("f", [lambda l: l * l / 2, lambda l: l ** 4, np.expm1])
def test_double_conjugate_within_tolerance(f):
    chk = double_conjugate_check(GridFunction.sample(f, LAM, convex=True))
    assert chk.tolerance == pytest.approx(2.5e-3)
    assert chk.deviation <= chk.tolerance


def test_double_conjugate_nonconvex_envelope():
    lam = np.linspace(-4, 4, 161)
    f = np.minimum(lam ** 2, (np.abs(lam) - 2) ** 2 + 1)
    chk = double_conjugate_check(GridFunction((lam,), f))
    env = convex_envelope_bruteforce(lam, f)
    assert np.max(np.abs(chk.envelope - env)) < 1e-9
    assert chk.deviation > 0.5 and chk.expected_nonzero


def test_order_reversing_and_scaling():
    x = np.linspace(-2, 2, 41)
    f = conjugate_1d(lambda l: l * l, LAM, x).values
    g = conjugate_1d(lambda l: l * l / 2, LAM, x).values
    assert np.all(f <= g + 1e-12)
    for c in (0.5, 2.0):
        lhs = conjugate_1d(lambda l: (c * l) ** 2 / 2, LAM, x).values
        rhs = conjugate_1d(lambda l: l * l / 2, LAM, x / c).values
        assert np.max(np.abs(lhs - rhs)) < 5e-3
    g0 = conjugate_1d(lambda l: l * l / 2 + 1.5, LAM, [0.0])
    assert g0.values[0] == pytest.approx(-1.5)


def test_grid_extent_error():
    g = conjugate_1d(lambda l: l * l / 2, LAM, np.linspace(-1, 1, 11))
    with pytest.raises(GridExtentError) as exc:
        g(2.0)
    assert exc.value.required_box[0][1] == 2.0


def test_conjugate_nd_identity_and_correlated():
    nu = NuFunction.gaussian(np.eye(2))
    axes = [np.linspace(-2, 2, 9)] * 2
    g = conjugate_nd(nu, [[-5, 5], [-5, 5]], 401, axes)
    X, Y = np.meshgrid(*axes, indexing="ij")
    assert np.max(np.abs(g.values - 0.5 * (X ** 2 + Y ** 2))) < 1e-3
    rho = 0.5
    nu = NuFunction.gaussian([[1, rho], [rho, 1]])
    v, _, _ = conjugate_points(nu, [[-5, 5], [-5, 5]], 401, [[1.0, 1.0], [0.0, 0.0]])
    assert v[0] == pytest.approx(2.0 / 3.0, abs=1e-3)
    assert v[1] == pytest.approx(0.0, abs=1e-12)
    assert quadratic_conjugate([[1, rho], [rho, 1]])(np.array([1.0, 1.0])) == pytest.approx(2 / 3)


def test_conjugate_nd_guards_and_warning():
    nu = NuFunction.gaussian(np.eye(2))
    with pytest.raises(UsageError):
        conjugate_points(nu, [[-1, 1], [-1, 1]], 20000, [[0.0, 0.0]])
    with pytest.warns(TruncationWarning):
        conjugate_points(nu, [[-1, 1], [-1, 1]], 21, [[5.0, 0.0]])


def test_nu_bar_examples():
    mu = np.random.default_rng(3).normal(size=(30, 2))
    gq = NuFunction.gaussian([[2, 0.3], [0.3, 1]])
    nb = nu_bar_values(gq, mu, n_max=200, stability_check=False)
    assert np.allclose(nb.values, gq(mu), rtol=1e-12)
    quart = NuFunction(lambda m: 0.25 * np.sum(m * m, axis=-1) ** 2, 2)
    nb = nu_bar_values(quart, mu, n_max=200)
    assert np.allclose(nb.values, quart(mu)) and np.all(nb.best_n == 1)
    assert np.all(nu_bar(quart, 50)(mu) >= quart(mu))


def test_nu_bar_cosh_stability():
    ch = NuFunction(lambda m: np.cosh(np.linalg.norm(m, axis=-1)) - 1, 1, covariance=np.eye(1))
    mu = np.linspace(-3, 3, 13)[:, None]
    a = nu_bar_values(ch, mu, n_max=10 ** 4, covariance=np.eye(1), stability_check=False).values
    b = nu_bar_values(ch, mu, n_max=10 ** 5, covariance=np.eye(1), stability_check=False).values
    assert np.max(np.abs(a - b)) < 1e-9
    # for cosh - 1 the envelope is the n = 1 term: n(cosh(m/sqrt n) - 1) decreases in n
    assert np.allclose(a, np.cosh(mu[:, 0]) - 1)


def test_grid_function_csv():
    g = conjugate_1d(lambda l: l * l / 2, LAM, [0.0, 1.0])
    buf = io.StringIO()
    g.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x1,value" and lines[2] == "1.0,0.5"


def test_grid_tolerance():
    assert grid_tolerance(LAM) == pytest.approx(2.5e-3)
