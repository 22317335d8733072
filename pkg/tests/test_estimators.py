import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from mdri.estimators import EntropyDimension, GreedyCover, MDRINorm, NaturalPhi, PolarTailBound
from mdri.simulate import sample_gaussian


def test_mdri_norm_estimator():
    X = sample_gaussian(np.diag([1.0, 4.0]), 50000, seed=1).values
    est = MDRINorm(p=2.0, n_points=512).fit(X)
    assert est.norm_ == pytest.approx(2.0, rel=0.02)
    assert abs(est.direction_[1]) > 0.99
    assert est.transform(X).shape == (50000, 1)
    assert est.lower_ <= est.norm_ <= est.upper_
    assert clone(est).get_params() == {"p": 2.0, "n_points": 512}
    with pytest.raises(NotFittedError):
        MDRINorm().transform(X)


def test_natural_phi_estimator():
    x = sample_gaussian([[1.0]], 200000, seed=2).values[:, 0]
    est = NaturalPhi(lambda_grid=np.linspace(-1, 1, 21)).fit(x)
    assert est.predict(0.5) == pytest.approx(0.125, abs=0.01)


def test_greedy_cover_estimator(rng):
    X = rng.uniform(size=(500, 2))
    est = GreedyCover(epsilon=0.2).fit(X)
    assert est.covering_radius_ <= 0.2
    lab = est.predict(X)
    d = np.linalg.norm(X - est.centers_[lab], axis=1)
    assert d.max() <= 0.2


def test_entropy_dimension_estimator():
    g = np.linspace(0, 1, 150)
    X = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    assert abs(EntropyDimension().fit(X).kappa_ - 2.0) <= 0.3


def test_polar_tail_bound_estimator():
    est = PolarTailBound(norm_p=1.0, integral=2.0, p=3.0).fit([4.0], [1e-3])
    assert est.predict([4.0])[0] == pytest.approx(1e-3)
    assert est.predict([8.0])[0] == pytest.approx(1e-3 / 8)
