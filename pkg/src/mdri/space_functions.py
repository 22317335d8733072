"""Generating functions psi, phi, nu and the norms they induce on random variables.

Grand Lebesgue norms are ``sup_p |eta|_p / psi(p)``; Phi(phi) norms are the
least ``tau`` with ``log E exp(lambda eta) <= phi(lambda tau)`` for every
lambda, i.e. the supremum of ``phi^{-1}(log-mgf(lambda)) / |lambda|``. All
suprema over a continuous parameter are taken on a caller-supplied grid and
polished by one golden-section pass around the best node.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from ._grid import as_grid, golden_max, grid_argmax
from .exceptions import (DomainError, KramerError, KramerWarning, NoFiniteNormError,
                         OracleError, UsageError)

BISECTION_RTOL = 1e-12
BISECTION_MAX_ITER = 200


# ---------------------------------------------------------------- psi

@dataclass(frozen=True)
class PsiFunction:
    """Positive weight ``psi(p)`` on an interval of exponents."""

    func: Callable
    support: tuple = (1.0, math.inf)
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, p):
        return self.func(np.asarray(p, dtype=float))

    def contains(self, p):
        lo, hi = self.support
        p = np.asarray(p, dtype=float)
        return (p >= lo) & (p < hi)

    @classmethod
    def power_blowup(cls, a, beta):
        """``(a - p)^(-beta)`` on ``[1, a)``; blows up as ``p -> a-``."""
        a, beta = float(a), float(beta)
        return cls(lambda p: (a - p) ** (-beta), (1.0, a), "power-blowup", {"a": a, "beta": beta})

    @classmethod
    def polynomial(cls, m):
        m = float(m)
        return cls(lambda p: p ** m, (1.0, math.inf), "polynomial", {"m": m})

    @classmethod
    def regular_varying(cls, m, slowly_varying):
        m = float(m)
        return cls(lambda p: p ** m * slowly_varying(p), (1.0, math.inf), "regular-varying", {"m": m})

    @classmethod
    def constant(cls, c=1.0):
        c = float(c)
        return cls(lambda p: np.full(np.shape(p), c), (1.0, math.inf), "polynomial", {"m": 0.0, "c": c})

    @classmethod
    def natural(cls, oracle):
        """The variable's own moment function, ``psi(p) = |eta|_p``."""
        return cls(oracle.__call__, oracle.support, "natural")

    def check(self, grid):
        """Positivity and a positive infimum on ``grid``."""
        vals = self(as_grid(grid))
        return bool(np.all(vals > 0) and np.min(vals) > 0)


# ---------------------------------------------------------------- phi

@dataclass(frozen=True)
class PhiFunction:
    """Even convex ``phi`` with ``phi(0) = 0`` on ``(-lambda0, lambda0)``."""

    func: Callable
    lambda0: float = math.inf
    second_derivative_at_zero: float = 1.0
    family: str = "custom"
    inverse: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.func(np.asarray(lam, dtype=float))

    def inv(self, y):
        """Inverse on ``[0, lambda0)``; closed form when known, else bisection."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("phi^{-1} is only defined for non-negative arguments")
        if self.inverse is not None:
            return self.inverse(y)
        return _bisect_inverse(self.__call__, y, self.lambda0)

    @classmethod
    def quadratic(cls, scale=1.0):
        """``phi(lambda) = scale * lambda^2 / 2``."""
        s = float(scale)
        return cls(lambda l: 0.5 * s * l * l, math.inf, s, "quadratic",
                   lambda y: np.sqrt(2.0 * y / s), {"scale": s})

    @classmethod
    def power(cls, m):
        """``|lambda|^m``; ``m = 2`` has ``phi''(0) = 2``, larger ``m`` has 0."""
        m = float(m)
        d2 = 2.0 if m == 2 else 0.0
        return cls(lambda l: np.abs(l) ** m, math.inf, d2, "power", None, {"m": m})

    @classmethod
    def exponential(cls):
        """``exp(|lambda|) - 1``."""
        return cls(lambda l: np.expm1(np.abs(l)), math.inf, 1.0, "exponential", None)

    @classmethod
    def from_grid(cls, grid, values, family="natural"):
        """Piecewise-linear ``phi`` through tabulated values (used for natural functions)."""
        g = np.asarray(grid, float)
        v = np.asarray(values, float)
        order = np.argsort(g)
        g, v = g[order], v[order]
        lam0 = float(min(abs(g[0]), abs(g[-1]))) if g.size else 0.0

        def f(l):
            l = np.asarray(l, float)
            if np.any((l < g[0]) | (l > g[-1])):
                raise DomainError(f"phi evaluated outside its tabulated range [{g[0]}, {g[-1]}]")
            return np.interp(l, g, v)

        return cls(f, lam0, float("nan"), family, None, {"grid": g, "values": v})

    def check(self, grid, rtol=1e-9):
        """Evenness, midpoint convexity and super-linear growth on a positive grid."""
        g = np.sort(np.abs(as_grid(grid)))
        g = g[g > 0]
        v = self(g)
        zero = abs(float(self(0.0))) <= 1e-12
        even = np.allclose(self(-g), v, rtol=rtol, atol=1e-12)
        full = np.concatenate([-g[::-1], g])
        fv = self(full)
        mids = self(0.5 * (full[:-1] + full[1:]))
        convex = bool(np.all(mids <= 0.5 * (fv[:-1] + fv[1:]) + rtol * (1 + np.abs(fv[1:]))))
        growth = g.size < 2 or bool(v[-1] / g[-1] > v[-2] / g[-2])
        return {"zero": zero, "even": bool(even), "convex": convex, "superlinear": growth}


def _bisect_inverse(f, y, upper=math.inf):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.zeros_like(y)
    cap = upper if math.isfinite(upper) else math.inf
    hi = np.ones_like(y)
    for _ in range(2000):
        need = f(hi) < y
        if not np.any(need):
            break
        grow = np.where(need, hi * 2.0, hi)
        if math.isfinite(cap):
            grow = np.minimum(grow, cap * (1 - 1e-15))
            if np.any(need & (grow == hi)):
                raise DomainError("value lies outside the range of phi on [0, lambda0)")
        hi = grow
    else:
        raise DomainError("could not bracket phi^{-1}")
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        below = f(mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= BISECTION_RTOL * np.maximum(hi, 1e-300)):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- nu

@dataclass(frozen=True)
class NuFunction:
    """Multidimensional generating function ``nu(mu)``, vectorized over leading axes."""

    func: Callable
    dim: int
    gradient: Optional[Callable] = None
    family: str = "custom"
    covariance: Optional[np.ndarray] = None

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        if mu.shape[-1] != self.dim:
            raise UsageError(f"nu expects vectors of length {self.dim}")
        return self.func(mu)

    @classmethod
    def gaussian(cls, R):
        """``0.5 (R mu, mu)`` for a symmetric positive definite ``R``."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        return cls(lambda mu: 0.5 * np.einsum("...i,ij,...j->...", mu, R, mu), R.shape[0],
                   lambda mu: mu @ R.T, "gaussian-quadratic", R)

    @classmethod
    def rademacher(cls, d):
        """Log-MGF of a vector of independent Rademacher signs, ``sum_k log cosh mu_k``."""
        def f(mu):
            a = np.abs(mu)
            return np.sum(a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0), axis=-1)
        return cls(f, int(d), lambda mu: np.tanh(mu), "custom", np.eye(int(d)))

    @classmethod
    def radial(cls, profile, d, name="custom"):
        """``nu(mu) = profile(|mu|_2)``."""
        return cls(lambda mu: profile(np.linalg.norm(mu, axis=-1)), int(d), None, name)

    def along_axis(self, k):
        """``nu_k(z) = nu(z e_k)`` as a scalar function."""
        def f(z):
            z = np.asarray(z, float)
            mu = np.zeros(z.shape + (self.dim,))
            mu[..., k] = z
            return self(mu)
        return f

    def check_conditions(self, points, h=1e-4, tol=1e-9):
        """Sampled checks of evenness (A), positive FD Hessian (B) and axis domination (C)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self(pts)
        zero = abs(float(self(np.zeros(self.dim)))) <= tol
        even = bool(np.allclose(self(-pts), v, rtol=1e-9, atol=tol))
        min_eig = math.inf
        eye = np.eye(self.dim) * h
        for mu in pts:
            H = np.empty((self.dim, self.dim))
            for i in range(self.dim):
                for j in range(self.dim):
                    H[i, j] = (self(mu + eye[i] + eye[j]) - self(mu + eye[i] - eye[j])
                               - self(mu - eye[i] + eye[j]) + self(mu - eye[i] - eye[j])) / (4 * h * h)
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (H + H.T))[0]))
        axis_ok = True
        for k in range(self.dim):
            proj = np.zeros_like(pts)
            proj[:, k] = pts[:, k]
            axis_ok &= bool(np.all(self(proj) <= v + tol))
        return {"A": zero and even, "B": min_eig > 0, "C": axis_ok, "min_hessian_eig": min_eig}


# ---------------------------------------------------------------- moments

def _std_gaussian_abs_moment_root(p):
    """``(E|tau|^p)^{1/p}`` for a standard Gaussian ``tau``, via log-Gamma."""
    p = np.asarray(p, dtype=float)
    logm = 0.5 * p * math.log(2.0) - 0.5 * math.log(math.pi) + gammaln((p + 1.0) / 2.0)
    return np.exp(logm / p)


@dataclass(frozen=True)
class MomentOracle:
    """Maps ``p`` to ``|eta|_p``, optionally with a confidence half-width."""

    func: Callable
    source: str = "analytic"
    halfwidth: Optional[Callable] = None
    support: tuple = (1.0, math.inf)
    name: str = ""

    def __call__(self, p):
        return self.func(np.asarray(p, dtype=float))

    def scaled(self, c):
        c = abs(float(c))
        hw = None if self.halfwidth is None else (lambda p, h=self.halfwidth: c * h(p))
        return MomentOracle(lambda p, f=self.func: c * f(p), self.source, hw, self.support, self.name)

    @classmethod
    def gaussian(cls, sigma=1.0):
        s = float(sigma)
        return cls(lambda p: s * _std_gaussian_abs_moment_root(p), name=f"gaussian(sigma={s})")

    @classmethod
    def uniform(cls, half_width=1.0):
        """Uniform on ``[-a, a]``: ``|eta|_p = a (p + 1)^{-1/p}``."""
        a = float(half_width)
        return cls(lambda p: a * (p + 1.0) ** (-1.0 / p), name=f"uniform(a={a})")

    @classmethod
    def constant(cls, c):
        c = abs(float(c))
        return cls(lambda p: np.full(np.shape(p), c), name=f"constant({c})")

    @classmethod
    def rademacher(cls):
        return cls(lambda p: np.ones(np.shape(p)), name="rademacher")

    @classmethod
    def empirical(cls, samples, confidence=0.99):
        """Plug-in moments with a delta-method confidence half-width."""
        x = np.abs(np.asarray(samples, dtype=float).ravel())
        if x.size < 2 or not np.all(np.isfinite(x)):
            raise UsageError("empirical moments need at least two finite samples")
        top = float(x.max())
        n = x.size
        from scipy.stats import norm
        z = norm.ppf(0.5 + confidence / 2.0)

        def _moments(p):
            p = np.atleast_1d(p)
            if top == 0.0:
                return np.zeros_like(p), np.zeros_like(p)
            r = x / top
            means = np.empty_like(p)
            sds = np.empty_like(p)
            for i, pi in enumerate(p):
                t = r ** pi
                means[i] = t.mean()
                sds[i] = t.std(ddof=1)
            return means, sds

        def value(p):
            shape = np.shape(p)
            m, _ = _moments(p)
            return (top * m ** (1.0 / np.atleast_1d(p))).reshape(shape)

        def half(p):
            shape = np.shape(p)
            pp = np.atleast_1d(p)
            m, s = _moments(pp)
            with np.errstate(divide="ignore", invalid="ignore"):
                hw = top * z * s / math.sqrt(n) / (pp * m ** ((pp - 1.0) / pp))
            return np.nan_to_num(hw).reshape(shape)

        return cls(value, "empirical", half, name="empirical")

    def lyapunov_ok(self, grid, slack=0.0):
        """Monotonicity of ``|eta|_p`` in ``p`` on a grid (within ``slack``)."""
        g = np.sort(as_grid(grid))
        v = self(g)
        w = np.zeros_like(v) if self.halfwidth is None else self.halfwidth(g)
        return bool(np.all(np.diff(v) >= -(w[1:] + w[:-1]) - slack))


@dataclass(frozen=True)
class SupResult:
    """A supremum over a parameter grid and where it was attained."""

    value: float
    argmax: float
    grid_size: int


# ---------------------------------------------------------------- norms

def gls_norm(oracle, psi, p_grid, refine=True):
    """Grand Lebesgue norm ``max_p |eta|_p / psi(p)`` over ``p_grid``."""
    grid = np.sort(as_grid(p_grid, "p_grid"))
    if not np.all(psi.contains(grid)):
        raise DomainError(f"p_grid leaves the support {psi.support} of psi")

    def ratio(p):
        try:
            m = float(oracle(np.array([p]))[0])
        except Exception as exc:  # noqa: BLE001 -- re-raised with the exponent attached
            raise OracleError(f"moment oracle failed at p={p}: {exc}", p) from exc
        return m / float(psi(np.array([p]))[0])

    try:
        moments = oracle(grid)
    except Exception:
        moments = None
    if moments is None or not np.all(np.isfinite(moments)):
        vals = np.array([ratio(p) for p in grid])
    else:
        vals = moments / psi(grid)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        p_bad = float(grid[np.argmax(bad)])
        raise OracleError(f"moment oracle is not finite at p={p_bad}", p_bad)
    x, v = grid_argmax(ratio, grid, vals, refine)
    return SupResult(v, x, grid.size)


def phi_norm(log_mgf, phi, lambda_grid, refine=True):
    """Least ``tau`` with ``log E exp(lambda eta) <= phi(lambda tau)`` on the grid."""
    grid = as_grid(lambda_grid, "lambda_grid")
    grid = np.sort(grid[grid != 0.0])
    if grid.size == 0:
        raise UsageError("lambda_grid must contain a nonzero value")
    with np.errstate(over="ignore", invalid="ignore"):
        lm = np.asarray(log_mgf(grid), dtype=float)
    finite = np.isfinite(lm)
    if not np.any(finite):
        raise NoFiniteNormError("log-MGF is infinite at every nonzero lambda on the grid")
    if not np.all(finite):
        bound = float(np.min(np.abs(grid[~finite])))
        keep = np.abs(grid) < bound
        if not np.any(keep):
            raise NoFiniteNormError("log-MGF is infinite next to lambda = 0")
        warnings.warn(f"Kramer condition fails for |lambda| >= {bound}; grid shrunk",
                      KramerWarning, stacklevel=2)
        grid, lm = grid[keep], lm[keep]

    def ratio_at(lam):
        val = float(np.asarray(log_mgf(np.array([lam])), float)[0])
        if not np.isfinite(val):
            return -math.inf
        return float(phi.inv(np.array([max(val, 0.0)]))[0]) / abs(lam)

    vals = phi.inv(np.maximum(lm, 0.0)) / np.abs(grid)
    x, v = grid_argmax(ratio_at, grid, vals, refine=False)
    if refine and grid.size > 1:
        # polish on the same side of zero and never closer to it than the grid,
        # where cancellation in log-mgf(lambda) / lambda inflates the ratio
        side = grid[np.sign(grid) == np.sign(x)]
        j = int(np.flatnonzero(side == x)[0])
        lo, hi = side[max(j - 1, 0)], side[min(j + 1, side.size - 1)]
        if hi > lo:
            xr, vr = golden_max(ratio_at, lo, hi)
            if np.isfinite(vr) and vr > v:
                x, v = float(xr), float(vr)
    return SupResult(v, x, grid.size)


def phi_nu_norm(log_mgf, nu, mu_points):
    """Least ``tau`` with ``log E exp((mu, eta)) <= nu(tau mu)`` over the given ``mu`` points.

    ``t -> nu(t mu)`` is increasing for convex ``nu`` with ``nu(0) = 0``,
    so each ratio is found by bisection.
    """
    mu = np.atleast_2d(np.asarray(mu_points, dtype=float))
    mu = mu[np.linalg.norm(mu, axis=1) > 0]
    if mu.size == 0:
        raise UsageError("need at least one nonzero mu")
    lm = np.asarray(log_mgf(mu), dtype=float)
    if not np.any(np.isfinite(lm)):
        raise NoFiniteNormError("log-MGF is infinite at every mu")
    keep = np.isfinite(lm)
    mu, lm = mu[keep], np.maximum(lm[keep], 0.0)
    taus = np.empty(len(mu))
    for i, (m, target) in enumerate(zip(mu, lm)):
        taus[i] = float(_bisect_inverse(lambda t, m=m: nu(np.multiply.outer(t, m)),
                                        np.array([target]))[0])
    k = int(np.argmax(taus))
    return SupResult(float(taus[k]), mu[k], len(mu))


def gaussian_phi_nu_norm(increment_cov, nu_cov):
    """Closed form of :func:`phi_nu_norm` for a Gaussian vector and quadratic ``nu``.

    ``tau^2 = lambda_max(nu_cov^{-1/2} increment_cov nu_cov^{-1/2})``.
    """
    from scipy.linalg import eigh
    S = np.atleast_2d(np.asarray(increment_cov, float))
    E = np.atleast_2d(np.asarray(nu_cov, float))
    w = eigh(S, E, eigvals_only=True)
    return math.sqrt(max(float(w[-1]), 0.0))


def natural_phi(samples, lambda_grid, threshold=0.5, center_tol=3.0):
    """Empirical log-MGF of a centered sample, restricted to its stable lambda range.

    A node is rejected when the single largest ``exp(lambda x_i)`` term makes
    up more than ``threshold`` of the sum; the retained domain is the
    symmetric interval below the smallest rejected ``|lambda|``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2 or not np.all(np.isfinite(x)):
        raise UsageError("natural_phi needs at least two finite samples")
    se = x.std(ddof=1) / math.sqrt(x.size)
    if abs(x.mean()) > center_tol * se:
        raise DomainError(f"sample mean {x.mean():.3g} is not within {center_tol} standard "
                          f"errors ({se:.3g}) of zero")
    grid = np.sort(as_grid(lambda_grid, "lambda_grid"))
    values, stable = empirical_log_mgf(x, grid, threshold)
    if not np.any(stable):
        raise KramerError("empirical log-MGF is unstable at every lambda on the grid")
    if not np.all(stable):
        bound = float(np.min(np.abs(grid[~stable])))
        keep = np.abs(grid) < bound
        if not np.any(keep):
            raise KramerError("empirical log-MGF is unstable next to lambda = 0")
        grid, values = grid[keep], values[keep]
    return PhiFunction.from_grid(grid, values, "natural")


def empirical_log_mgf(x, grid, threshold=0.5):
    """``log((1/n) sum exp(lambda x_i))`` and a per-node stability mask."""
    x = np.asarray(x, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float).ravel()
    vals = np.empty(grid.size)
    stable = np.empty(grid.size, dtype=bool)
    for i, lam in enumerate(grid):
        a = lam * x
        lse = logsumexp(a)
        vals[i] = lse - math.log(x.size)
        stable[i] = math.exp(float(a.max()) - lse) <= threshold
    return vals, stable


def moment_psi_from_phi(phi):
    """``psi(p) = p / phi^{-1}(p)``.

    The moment norm uses ``p >= 2`` (recorded as the support), but the
    function itself is evaluated wherever ``p`` lies in the range of ``phi``.
    """
    def f(p):
        p = np.asarray(p, float)
        if np.any(p <= 0):
            raise DomainError("p must lie in the range (0, sup phi) of phi")
        return p / phi.inv(p)
    return PsiFunction(f, (2.0, math.inf), "natural", {"phi": phi.family})


def gnorm_tail_bound(g_norm, c3=1.0, u=0.0):
    """``min(1, 2 exp(-u / (c3 ||eta||_G)))``."""
    if not g_norm > 0:
        raise DomainError("G(psi) norm must be positive")
    if not c3 > 0:
        raise DomainError("c3 must be positive")
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise DomainError("u must be non-negative")
    return np.minimum(1.0, 2.0 * np.exp(-u / (c3 * g_norm)))
