import math

import numpy as np
import pytest

from mdri.exceptions import DomainError, UsageError
from mdri.norm import DirectionSet, Lp, RandomVectorModel, mdri_norm
from mdri.simulate import sample_named, sample_martingale_sums
from mdri.space_functions import PsiFunction
from mdri.sums import (analytic_abs_moment, coordinate_sum_bound, empirical_abs_moment,
                       k_independent, k_martingale, normed_sum_gls_bound, rosenthal_constant,
                       rosenthal_verification)


def test_constants():
    assert k_martingale(2) == pytest.approx(2.8284, abs=1e-4)
    assert k_independent(2) == pytest.approx(2.5103, abs=1e-4)
    assert k_independent(math.e ** 2) == pytest.approx(3.2142, abs=1e-4)
    for p in (2, 3, 4.5, 8, 20):
        assert k_independent(p) <= k_martingale(p)
    with pytest.raises(DomainError):
        k_independent(1.5)
    with pytest.raises(UsageError):
        rosenthal_constant("other", 3)


def test_coordinate_sum_bound():
    assert coordinate_sum_bound(0.0, "independent", 4) == 0.0
    assert coordinate_sum_bound(1.0, "martingale", 4) >= coordinate_sum_bound(1.0, "independent", 4)
    with pytest.raises(DomainError):
        coordinate_sum_bound(-1.0, "independent", 4)


def test_coordinate_bound_rademacher_d16():
    X = sample_named("rademacher", 16, 20000, seed=5).values
    emp = mdri_norm(RandomVectorModel.empirical(X), DirectionSet.sphere(16), Lp(4),
                    n_points=2048).norm
    assert emp <= coordinate_sum_bound(1.0, "independent", 4)


def test_normed_sum_gls_bound():
    psi = PsiFunction.power_blowup(10.0, 0.5)
    b = normed_sum_gls_bound(2.0, psi, "independent")
    assert b.bound == 2.0 and b.psi.support[0] >= 2.0
    assert b.psi(4.0) == pytest.approx(k_independent(4.0) * psi(4.0))
    assert normed_sum_gls_bound(0.0, psi).bound == 0.0


def test_abs_moments():
    assert analytic_abs_moment("uniform", 2) == pytest.approx(1 / math.sqrt(3))
    assert analytic_abs_moment("gaussian", 4) == pytest.approx(3 ** 0.25)
    y = sample_named("gaussian", 1, 200000, seed=1).values[:, 0]
    v, hw = empirical_abs_moment(y, 4)
    assert abs(v - 3 ** 0.25) <= 3 * hw
    assert empirical_abs_moment(np.zeros(5), 2) == (0.0, 0.0)


def test_martingale_increments_centered():
    S = sample_martingale_sums(8, 100000, seed=3).values[:, 0]
    assert abs(S.mean()) < 5 * S.std() / math.sqrt(S.size)


@pytest.mark.parametrize("sampler", ["rademacher", "uniform", "gaussian"])
def test_rosenthal_small(sampler):
    recs = rosenthal_verification(sampler, [2, 4, 6], [1, 4, 64], 20000, seed=7)
    assert all(r.passed for r in recs)
    # at p=2 the normalized sum keeps the second moment exactly
    for r in recs:
        if r.p == 2:
            assert r.empirical == pytest.approx(analytic_abs_moment(sampler, 2), rel=0.03)


def test_rosenthal_martingale():
    recs = rosenthal_verification("bounded-martingale", [2, 4], [4, 16], 20000, seed=8,
                                  kind="martingale")
    assert all(r.passed for r in recs)
