"""Chaining bounds for the coordinate-wise maxima of vector random fields.

For a field normalized so that every ``xi(y)`` has unit ``Phi^{(d)}(nu)``
norm, with natural distance ``d(y1, y2) = ||xi(y1) - xi(y2)||``, the joint
tail ``U(v) = P(max_y xi(1, y) > v_1, ..., max_y xi(d, y) > v_d)`` obeys

    U(v) <= inf_{0 < p < p0} exp(w(p) - nu*((1 - p) v)),
    w(p) = (1 - p) sum_{n >= 1} p^{n-1} H(p^n).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._grid import golden_max
from .exceptions import (ChainingUnavailableError, DegenerateDirectionError, DomainError,
                         EntropyConditionError, MatrixError, UsageError)
from .geometry import covering_profile, entropy_dimension, greedy_net
from .simulate import MAX_FIELD_VARIABLES, gaussian_field_sampler
from .space_functions import NuFunction, gaussian_phi_nu_norm, phi_nu_norm

DEFAULT_P0 = 0.45
SERIES_TOL = 1e-12
MAX_CACHED_POINTS = 4096
METRIC_TOL = 1e-9


# ---------------------------------------------------------------- fields

def squared_exponential(points, length=1.0):
    """Kernel ``exp(-|y1 - y2|^2 / length^2)``."""
    P = np.asarray(points, float)
    if P.ndim == 1:
        P = P[:, None]
    sq = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=2)
    return np.exp(-sq / (length * length))


def correlation_matrix(rho, d=2):
    """``E^(rho)``: unit diagonal, constant off-diagonal ``rho``."""
    E = np.full((d, d), float(rho))
    np.fill_diagonal(E, 1.0)
    return E


@dataclass(frozen=True)
class FieldModel:
    """A vector field on a finite index set with its natural distance matrix."""

    points: np.ndarray
    dim: int
    nu: NuFunction
    distance: np.ndarray
    center: int
    joint_covariance: np.ndarray = None
    samples: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return int(self.distance.shape[0])

    @classmethod
    def gaussian(cls, points, cross, kernel=None, length=1.0):
        """Separable Gaussian field: ``cov(xi(i, y1), xi(j, y2)) = k(y1, y2) E_ij``.

        The per-point covariance is ``E`` itself, so with ``nu(mu) = (E mu, mu) / 2``
        every ``xi(y)`` has unit norm and the natural distance is
        ``sqrt(2 (1 - k(y1, y2)))``.
        """
        P = np.asarray(points, float)
        P = P[:, None] if P.ndim == 1 else P
        E = np.atleast_2d(np.asarray(cross, float))
        d = E.shape[0]
        if P.shape[0] * d > MAX_FIELD_VARIABLES:
            raise UsageError(f"|Y| * d exceeds {MAX_FIELD_VARIABLES}")
        K = squared_exponential(P, length) if kernel is None else np.asarray(kernel(P), float)
        joint = np.kron(K, E)
        D = np.empty_like(K)
        for i in range(K.shape[0]):
            for j in range(i, K.shape[0]):
                inc = (K[i, i] + K[j, j] - 2.0 * K[i, j]) * E
                D[i, j] = D[j, i] = 0.0 if i == j else gaussian_phi_nu_norm(inc, E)
        nu = NuFunction.gaussian(E)
        return cls(P, d, nu, D, _find_center(D), joint, None,
                   {"kind": "gaussian", "length": float(length), "cross": E.tolist()})

    @classmethod
    def from_samples(cls, points, samples, nu, mu_points):
        """Natural distances estimated from field realizations ``(trials, |Y|, d)``.

        Each distance is the ``Phi^{(d)}(nu)`` norm of the empirical increment,
        maximized over ``mu_points``.
        """
        P = np.asarray(points, float)
        P = P[:, None] if P.ndim == 1 else P
        X = np.asarray(samples, float)
        if X.ndim != 3 or X.shape[1] != P.shape[0]:
            raise UsageError("samples must have shape (trials, |Y|, d)")
        if P.shape[0] > MAX_CACHED_POINTS:
            raise UsageError(f"at most {MAX_CACHED_POINTS} points")
        mu = np.atleast_2d(np.asarray(mu_points, float))
        n = P.shape[0]
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                inc = X[:, i, :] - X[:, j, :]
                D[i, j] = D[j, i] = phi_nu_norm(lambda m: _empirical_log_mgf(inc, m), nu, mu).value
        return cls(P, X.shape[2], nu, D, _find_center(D), None, X, {"kind": "empirical"})

    def natural_distance(self, i, j):
        return float(self.distance[int(i), int(j)])

    def sampler(self):
        if self.joint_covariance is None:
            raise UsageError("only Gaussian fields can be resampled")
        return gaussian_field_sampler(self.joint_covariance, self.size, self.dim)

    def validate(self, n_triples=2000, seed=0):
        """Semi-metric axioms, ``d <= 2`` and the center condition; raises on failure."""
        D = self.distance
        if not np.allclose(D, D.T, atol=METRIC_TOL) or np.any(np.abs(np.diag(D)) > METRIC_TOL):
            raise DomainError("distance matrix is not symmetric with zero diagonal")
        if np.any(D > 2 + METRIC_TOL):
            raise DomainError("natural distance exceeds 2")
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, self.size, size=(n_triples, 3))
        a, b, c = idx.T
        if np.any(D[a, c] > D[a, b] + D[b, c] + METRIC_TOL):
            raise DomainError("triangle inequality fails")
        if np.max(D[self.center]) > 1 + METRIC_TOL:
            raise DomainError("no center within distance 1 of every point")
        return True

    def profile(self, epsilon=None):
        """Greedy covering profile under the natural distance."""
        if epsilon is None:
            epsilon = resolvable_epsilon(self.distance)
        return covering_profile(self.distance, epsilon, metric="precomputed", start=self.center)

    def net(self, epsilon):
        return greedy_net(self.distance, epsilon, metric="precomputed", start=self.center)


def _empirical_log_mgf(inc, mu):
    mu = np.atleast_2d(mu)
    a = inc @ mu.T
    m = a.max(axis=0)
    return m + np.log(np.mean(np.exp(a - m), axis=0))


def _find_center(D):
    return int(np.argmin(np.max(D, axis=1)))


def resolvable_epsilon(D, num=12):
    """Log-spaced epsilon grid from 1 down to the smallest nonzero distance."""
    off = D[D > 0]
    if off.size == 0:
        return np.geomspace(1.0, 0.5, num)
    lo = min(float(off.min()), 0.5)
    return np.geomspace(1.0, lo, num)


# ---------------------------------------------------------------- entropy series

@dataclass(frozen=True)
class WSeries:
    value: float
    terms: int
    extrapolated: bool
    stability_gap: float


def _log_model(profile):
    fit = entropy_dimension(profile)
    return fit.intercept, fit.kappa


def w_series(profile, p, tol=SERIES_TOL, max_terms=10000):
    """``w(p) = (1 - p) sum_{n >= 1} p^{n-1} H(p^n)`` with a doubling-depth check.

    Below the profile's resolvable floor ``H`` comes from the logarithmic
    model ``C + kappa |log eps|`` fitted by :func:`entropy_dimension`.
    """
    p = float(p)
    if not 0 < p < 0.5:
        raise DomainError(f"p must lie in (0, 1/2), got {p}")
    floor = profile.floor
    model = None
    extrapolated = False

    def H(eps):
        nonlocal model, extrapolated
        if eps >= floor:
            return float(profile.entropy_at(eps)[0])
        if model is None:
            try:
                model = _log_model(profile)
            except UsageError as exc:
                raise EntropyConditionError(f"cannot extrapolate the entropy profile: {exc}") from None
        extrapolated = True
        return model[0] + model[1] * abs(math.log(eps))

    total, n = 0.0, 0
    while n < max_terms:
        n += 1
        eps = p ** n
        if eps == 0.0:
            break
        h = H(eps)
        term = p ** (n - 1) * h
        total += term
        if p ** (n - 1) * max(abs(h), 1.0) < tol:
            break
    else:
        raise EntropyConditionError(f"entropy series did not converge at p = {p}")
    tail = 0.0
    for k in range(n + 1, 2 * n + 1):
        eps = p ** k
        if eps == 0.0:
            break
        tail += p ** (k - 1) * H(eps)
    value = (1.0 - p) * total
    if not math.isfinite(value):
        raise EntropyConditionError(f"entropy series diverges at p = {p}")
    return WSeries(value, n, extrapolated, (1.0 - p) * abs(tail))


def w_closed_form(C, kappa, p):
    """``C + kappa |log p| / (1 - p)``, the series value for the logarithmic profile."""
    return C + kappa * abs(math.log(p)) / (1.0 - p)


# ---------------------------------------------------------------- bounds

@dataclass(frozen=True)
class ChainingReport:
    v: np.ndarray
    bound: np.ndarray
    log_bound: np.ndarray
    p_star: np.ndarray
    w_table: np.ndarray
    net_sizes: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def capped(self):
        return self.log_bound >= 0.0

    def as_dict(self):
        return {"v": self.v.tolist(), "bound": [float(b) for b in self.bound],
                "log_bound": [float(b) for b in self.log_bound],
                "p_star": [float(p) for p in self.p_star],
                "w_table": [[float(p), float(w)] for p, w in self.w_table],
                "net_sizes": [[int(s) for s in row] for row in self.net_sizes],
                "diagnostics": self.diagnostics}


def _eval_nu_star(nu_star, X):
    return np.asarray(nu_star(np.atleast_2d(X)), float).reshape(-1)


def default_p_grid(p0=DEFAULT_P0):
    """Log-spaced near 0 (where finite index sets put the optimum) and linear above."""
    return np.unique(np.concatenate([np.geomspace(1e-4, 0.05, 16),
                                     np.linspace(0.05, p0 - 1e-9, 30)]))


def chaining_tail_bound(profile, nu_star, v, p_grid=None, p0=DEFAULT_P0, refine=True,
                        net_levels=6):
    """``min(1, inf_p exp(w(p) - nu*((1 - p) v)))`` for each row of ``v``."""
    if not 0 < p0 <= 0.5:
        raise DomainError("p0 must lie in (0, 1/2]")
    if p_grid is None:
        p_grid = default_p_grid(p0)
    grid = np.sort(np.asarray(p_grid, float).ravel())
    grid = grid[(grid > 0) & (grid < p0)]
    if grid.size == 0:
        raise DomainError("no grid value of p lies in (0, p0)")
    V = np.atleast_2d(np.asarray(v, float))
    w_vals = np.empty(grid.size)
    for k, p in enumerate(grid):
        try:
            w_vals[k] = w_series(profile, p).value
        except EntropyConditionError:
            w_vals[k] = math.inf
    if not np.any(np.isfinite(w_vals)):
        raise ChainingUnavailableError("entropy condition fails for every p in the grid")
    ok = np.isfinite(w_vals)

    def logb(p, vv):
        return w_series(profile, p).value - float(_eval_nu_star(nu_star, (1.0 - p) * vv)[0])

    log_bound = np.empty(V.shape[0])
    p_star = np.empty(V.shape[0])
    per_p = np.full((V.shape[0], grid.size), math.inf)
    for i, vv in enumerate(V):
        nus = _eval_nu_star(nu_star, (1.0 - grid[ok])[:, None] * vv[None, :])
        per_p[i, ok] = w_vals[ok] - nus
        k = int(np.argmin(per_p[i]))
        bp, bv = float(grid[k]), float(per_p[i, k])
        if refine and grid.size > 1:
            lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
            if hi > lo:
                x, nv = golden_max(lambda p: -logb(p, vv), lo, hi)
                if -nv < bv:
                    bp, bv = float(x), -nv
        log_bound[i], p_star[i] = bv, bp
    sizes = [[int(round(math.exp(float(profile.entropy_at(max(p ** n, profile.floor))[0]))))
              for n in range(1, net_levels + 1)] for p in p_star]
    return ChainingReport(V, np.minimum(1.0, np.exp(log_bound)), log_bound, p_star,
                          np.column_stack([grid, w_vals]), sizes,
                          {"p0": float(p0), "per_p_log_bound": per_p.tolist()})


def gaussian_polynomial_bound(v, rho, kappa, C):
    """``min(1, C Q^kappa exp(-Q / (2 (1 - rho^2))))`` with ``Q = v1^2 - 2 rho v1 v2 + v2^2``."""
    V = np.atleast_2d(np.asarray(v, float))
    if np.any(V.min(axis=1) < 1):
        raise DomainError("the polynomial form is stated for min_i v_i >= 1")
    Q = V[:, 0] ** 2 - 2.0 * rho * V[:, 0] * V[:, 1] + V[:, 1] ** 2
    return np.minimum(1.0, C * Q ** kappa * np.exp(-0.5 * Q / (1.0 - rho * rho)))


def calibrate_polynomial_constant(v, target, rho, kappa):
    """Smallest ``C`` making :func:`gaussian_polynomial_bound` reach ``target`` at every ``v``."""
    base = gaussian_polynomial_bound(v, rho, kappa, 1.0)
    if np.any(base >= 1.0):
        raise UsageError("calibration points must lie where the unit-constant form is below 1")
    return float(np.max(np.asarray(target, float) / base))


# ---------------------------------------------------------------- heuristics

@dataclass(frozen=True)
class PiChoice:
    p: float
    pi: float
    fallback: bool


def _fd_gradient(f, v, h=1e-6):
    v = np.asarray(v, float)
    g = np.empty_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h * max(1.0, abs(v[k]))
        g[k] = (float(f(v + e)) - float(f(v - e))) / (2.0 * e[k])
    return g


def pi_heuristic(v, gradient=None, nu_star=None, C=1.0, p0=DEFAULT_P0, fallback=None):
    """``pi(v) = C / (grad nu*(v), v)``; above ``p0`` the ``fallback`` choice is used."""
    v = np.asarray(v, float).ravel()
    if gradient is not None:
        g = np.asarray(gradient(v), float).ravel()
    elif nu_star is not None:
        g = _fd_gradient(lambda x: _eval_nu_star(nu_star, x)[0], v)
    else:
        raise UsageError("need a gradient oracle or nu_star")
    ip = float(g @ v)
    if ip == 0.0:
        raise DegenerateDirectionError("(grad nu*(v), v) = 0")
    pi = C / ip
    if 0 < pi <= p0:
        return PiChoice(pi, pi, False)
    if fallback is None:
        return PiChoice(math.nan, pi, True)
    return PiChoice(float(fallback(v)), pi, True)


def matrix_order_check(A, B, tol=1e-10):
    """``A << B``, i.e. ``B - A`` is positive semidefinite."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    if A.shape != B.shape:
        raise MatrixError("matrices must have equal size")
    for M in (A, B):
        if not np.allclose(M, M.T, atol=1e-12):
            raise DomainError("matrices must be symmetric")
    return bool(np.linalg.eigvalsh(B - A)[0] >= -tol)
