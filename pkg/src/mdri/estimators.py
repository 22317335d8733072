"""scikit-learn style wrappers around the functional API.

Only the operations that learn something from a sample matrix are wrapped:
the m.d.r.i. norm of an empirical vector, the natural ``phi`` of a sample,
greedy covers, entropy dimension and the calibrated polynomial tail bound.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import covering_profile, entropy_dimension, greedy_net
from .norm import DirectionSet, Lp, RandomVectorModel, mdri_norm
from .space_functions import natural_phi
from .tails import calibrate_c0, polar_tail_bound


class MDRINorm(TransformerMixin, BaseEstimator):
    """Empirical m.d.r.i. norm over the unit sphere.

    Parameters
    ----------
    p : float, default=2.0
        Exponent of the ``L_p`` base space.
    n_points : int or None
        Size of the sphere discretization; ``None`` uses the library default.

    Attributes
    ----------
    norm_ : float
    direction_ : ndarray of shape (n_features,)
        Maximizing direction; :meth:`transform` projects onto it.
    """

    def __init__(self, p=2.0, n_points=None):
        self.p = p
        self.n_points = n_points

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        rep = mdri_norm(RandomVectorModel.empirical(X), DirectionSet.sphere(X.shape[1]),
                        Lp(self.p), method="sphere", n_points=self.n_points)
        self.norm_ = rep.norm
        self.direction_ = rep.direction
        self.lower_, self.upper_ = rep.lower, rep.upper
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "direction_")
        X = check_array(X)
        return (X @ self.direction_)[:, None]


class NaturalPhi(BaseEstimator):
    """Empirical log-MGF of a centered scalar sample on a lambda grid."""

    def __init__(self, lambda_grid=None, threshold=0.5):
        self.lambda_grid = lambda_grid
        self.threshold = threshold

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=False)
        grid = np.linspace(-2.0, 2.0, 81) if self.lambda_grid is None else self.lambda_grid
        self.phi_ = natural_phi(np.ravel(X), grid, self.threshold)
        self.grid_ = self.phi_.params["grid"]
        return self

    def predict(self, lam):
        check_is_fitted(self, "phi_")
        return self.phi_(np.asarray(lam, float))


class GreedyCover(BaseEstimator):
    """Farthest-point epsilon-net; ``predict`` maps points to their center index."""

    def __init__(self, epsilon=0.1):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X)
        net = greedy_net(X, self.epsilon)
        self.centers_ = X[net.centers]
        self.center_indices_ = net.centers
        self.covering_radius_ = net.covering_radius
        return self

    def predict(self, X):
        check_is_fitted(self, "centers_")
        X = check_array(X)
        d = np.linalg.norm(X[:, None, :] - self.centers_[None, :, :], axis=2)
        return np.argmin(d, axis=1)


class EntropyDimension(BaseEstimator):
    """Slope ``kappa`` of ``H(eps)`` against ``|log eps|`` from greedy covers."""

    def __init__(self, epsilon=None):
        self.epsilon = epsilon

    def fit(self, X, y=None):
        X = check_array(X)
        eps = 2.0 ** -np.arange(2, 8) if self.epsilon is None else self.epsilon
        self.profile_ = covering_profile(X, eps)
        fit = entropy_dimension(self.profile_)
        self.kappa_, self.residual_ = fit.kappa, fit.residual
        return self


class PolarTailBound(BaseEstimator):
    """Polynomial tail bound ``(c0 I ||xi||_p)^p u^{-p}`` with ``c0`` fitted to one level.

    ``fit(u, y)`` takes a single calibration level and its empirical tail
    probability (an upper confidence limit in practice).
    """

    def __init__(self, norm_p=1.0, integral=1.0, p=3.0, dim=2):
        self.norm_p = norm_p
        self.integral = integral
        self.p = p
        self.dim = dim

    def fit(self, u, y):
        u = np.ravel(np.asarray(u, float))
        y = np.ravel(np.asarray(y, float))
        self.c0_ = calibrate_c0(self.norm_p, self.integral, self.p, u[0], y[0])
        return self

    def predict(self, u):
        check_is_fitted(self, "c0_")
        return polar_tail_bound(self.norm_p, self.integral, self.dim, np.ravel(u), self.p,
                                self.c0_).bound
