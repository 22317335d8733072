"""Norms of random vectors in multidimensional rearrangement-invariant spaces.

The norm of a vector ``xi`` over a direction set ``B`` is the supremum over
``b`` in ``B`` of a scalar base-space norm of the projection ``(xi, b)``.
Base spaces are ``L_p``, Grand Lebesgue ``G(psi)`` and ``Phi(phi)``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln
from scipy.stats import chi2
from scipy.stats import norm as _normal
from scipy.stats import qmc

from .exceptions import DomainError, InvalidDirectionSetError, InvariantViolation, UsageError
from .simulate import SampleMatrix, psd_factor
from .space_functions import (MomentOracle, PhiFunction, PsiFunction, gls_norm, natural_phi,
                              phi_norm)

MAX_SPHERE_DIM = 32
UNIT_BALL_TOL = 1e-12


# ---------------------------------------------------------------- constants

def gaussian_lp_constant(p):
    """``|tau|_p`` for a standard Gaussian ``tau``: ``sqrt(2) pi^(-1/(2p)) Gamma((p+1)/2)^(1/p)``."""
    p = float(p)
    if not p >= 1:
        raise DomainError(f"the Gaussian L_p constant needs p >= 1, got {p}")
    return math.exp(0.5 * math.log(2.0) - math.log(math.pi) / (2.0 * p) + gammaln((p + 1.0) / 2.0) / p)


# ---------------------------------------------------------------- base spaces

@dataclass(frozen=True)
class Lp:
    """Lebesgue space ``L_p``."""

    p: float

    def __post_init__(self):
        if not self.p >= 1:
            raise DomainError("L_p needs p >= 1")

    def gaussian_unit(self):
        return gaussian_lp_constant(self.p)

    def sample_norms(self, Y):
        Y = np.abs(np.asarray(Y, float))
        scale = Y.max(axis=0)
        scale[scale == 0] = 1.0
        return scale * np.mean((Y / scale) ** self.p, axis=0) ** (1.0 / self.p)

    def oracle_norm(self, oracle):
        return float(np.asarray(oracle(np.array([self.p])), float).ravel()[0])

    def describe(self):
        return {"space": "Lp", "p": float(self.p)}


@dataclass(frozen=True)
class Gpsi:
    """Grand Lebesgue space with weight ``psi`` evaluated on ``p_grid``."""

    psi: PsiFunction
    p_grid: tuple

    def _grid(self):
        g = np.asarray(self.p_grid, float)
        if g.size == 0:
            raise UsageError("p_grid is empty")
        return g

    def gaussian_unit(self):
        return gls_norm(MomentOracle.gaussian(1.0), self.psi, self._grid()).value

    def sample_norms(self, Y):
        Y = np.abs(np.asarray(Y, float))
        scale = Y.max(axis=0)
        scale[scale == 0] = 1.0
        Z = Y / scale
        g = self._grid()
        weights = self.psi(g)
        best = np.zeros(Y.shape[1])
        for p, w in zip(g, weights):
            best = np.maximum(best, np.mean(Z ** p, axis=0) ** (1.0 / p) / w)
        return scale * best

    def oracle_norm(self, oracle):
        return gls_norm(oracle, self.psi, self._grid()).value

    def describe(self):
        return {"space": "Gpsi", "psi": self.psi.family, "params": dict(self.psi.params),
                "p_grid": [float(p) for p in self._grid()]}


@dataclass(frozen=True)
class Phi:
    """Exponential Orlicz-type space ``Phi(phi)`` with suprema over ``lambda_grid``."""

    phi: PhiFunction
    lambda_grid: tuple

    def _grid(self):
        return np.asarray(self.lambda_grid, float)

    def gaussian_unit(self):
        return phi_norm(lambda lam: 0.5 * lam * lam, self.phi, self._grid()).value

    def sample_norms(self, Y):
        Y = np.asarray(Y, float)
        out = np.empty(Y.shape[1])
        for j in range(Y.shape[1]):
            # centering is checked once for the whole vector, see _check_centered
            nat = natural_phi(Y[:, j], self._grid(), center_tol=math.inf)
            grid = nat.params["grid"]
            if np.all(nat.params["values"] == 0):
                out[j] = 0.0
                continue
            out[j] = phi_norm(nat, self.phi, grid[grid != 0]).value
        return out

    def oracle_norm(self, oracle):
        raise UsageError("a Phi(phi) norm is not determined by absolute moments")

    def describe(self):
        g = self._grid()
        return {"space": "Phi", "phi": self.phi.family, "params": _jsonable(self.phi.params),
                "lambda_grid": [float(g.min()), float(g.max()), int(g.size)]}


def _jsonable(params):
    return {k: v for k, v in params.items() if isinstance(v, (int, float, str))}


def base_space(spec):
    """Build a base space from a small dict, as found in CLI configs."""
    kind = spec.get("space", "Lp")
    if kind == "Lp":
        return Lp(float(spec.get("p", 2.0)))
    raise UsageError(f"cannot build base space {kind!r} from a plain dict")


# ---------------------------------------------------------------- models

@dataclass(frozen=True)
class RandomVectorModel:
    """A random vector given by its Gaussian covariance, samples or coordinate oracles."""

    kind: str
    dim: int
    covariance: np.ndarray = None
    samples: np.ndarray = None
    oracles: tuple = ()
    dependence: str = "unknown"

    @classmethod
    def gaussian(cls, R):
        R = np.atleast_2d(np.asarray(R, float))
        psd_factor(R)
        return cls("gaussian", R.shape[0], covariance=0.5 * (R + R.T))

    @classmethod
    def empirical(cls, samples):
        X = samples.values if isinstance(samples, SampleMatrix) else np.asarray(samples, float)
        X = np.atleast_2d(X)
        if X.shape[0] < 2:
            raise UsageError("an empirical model needs at least two rows")
        if not np.all(np.isfinite(X)):
            raise UsageError("samples contain non-finite entries")
        X = np.array(X, copy=True)
        X.flags.writeable = False
        return cls("empirical", X.shape[1], samples=X)

    @classmethod
    def coordinates(cls, oracles, dependence="unknown"):
        oracles = tuple(oracles)
        if not oracles:
            raise UsageError("need at least one coordinate oracle")
        return cls("coordinates", len(oracles), oracles=oracles, dependence=dependence)

    def scaled(self, c):
        c = float(c)
        if self.kind == "gaussian":
            return RandomVectorModel.gaussian(c * c * self.covariance)
        if self.kind == "empirical":
            return RandomVectorModel.empirical(c * self.samples)
        return RandomVectorModel.coordinates([o.scaled(abs(c)) for o in self.oracles], self.dependence)

    def projection_norms(self, base, directions):
        """Base-space norms of ``(xi, b)`` for each row ``b`` of ``directions``."""
        Bm = np.atleast_2d(np.asarray(directions, float))
        if Bm.shape[1] != self.dim:
            raise UsageError(f"directions have length {Bm.shape[1]}, model dimension is {self.dim}")
        if self.kind == "gaussian":
            var = np.einsum("ki,ij,kj->k", Bm, self.covariance, Bm)
            return np.sqrt(np.clip(var, 0.0, None)) * base.gaussian_unit()
        if self.kind == "empirical":
            return base.sample_norms(self.samples @ Bm.T)
        out = np.empty(Bm.shape[0])
        for k, b in enumerate(Bm):
            nz = np.flatnonzero(b)
            if nz.size != 1:
                raise UsageError("coordinate models only determine norms along coordinate axes")
            out[k] = abs(b[nz[0]]) * base.oracle_norm(self.oracles[nz[0]])
        return out

    def coordinate_norms(self, base):
        return self.projection_norms(base, np.eye(self.dim))


# ---------------------------------------------------------------- directions

@dataclass(frozen=True)
class DirectionSet:
    """Either the full unit sphere ``S(d)`` or a finite list of vectors in the unit ball."""

    dim: int
    vectors: np.ndarray = None

    @classmethod
    def sphere(cls, d):
        d = int(d)
        if d < 1:
            raise UsageError("dimension must be positive")
        return cls(d)

    @classmethod
    def finite(cls, vectors):
        V = np.atleast_2d(np.asarray(vectors, float))
        if V.size == 0:
            raise InvalidDirectionSetError("empty direction set")
        if np.any(np.linalg.norm(V, axis=1) > 1.0 + UNIT_BALL_TOL):
            raise InvalidDirectionSetError("direction vectors must lie in the unit ball")
        diffs = V[1:] - V[0] if V.shape[0] > 1 else np.zeros((1, V.shape[1]))
        if np.linalg.matrix_rank(diffs) < V.shape[1]:
            raise InvalidDirectionSetError(
                "direction set is not separating: pairwise differences do not span R^d")
        V = np.array(V, copy=True)
        V.flags.writeable = False
        return cls(V.shape[1], V)

    @property
    def is_sphere(self):
        return self.vectors is None

    def extreme_subset(self):
        """The vertices of the convex hull of a finite set."""
        if self.is_sphere:
            return self
        from .geometry import extremal_points
        return DirectionSet.finite(extremal_points(self.vectors))


def sphere_points(d, n=None, seed=0, with_axes=True):
    """Deterministic near-uniform points on ``S(d)``, by default plus the signed basis vectors.

    Circle for ``d = 2``, a Fibonacci lattice for ``d = 3`` and scrambled
    Sobol points pushed through the normal quantile for ``d >= 4``. Above
    ``d = 8`` the point set no longer resolves the sphere finely and the
    result relies on local refinement; treat it as a lower estimate.
    """
    d = int(d)
    if d > MAX_SPHERE_DIM:
        raise UsageError(f"sphere optimization is limited to d <= {MAX_SPHERE_DIM}")
    if n is None:
        n = 1 << 12 if d <= 4 else 1 << 15
    if d == 1:
        pts = np.array([[1.0], [-1.0]])
    elif d == 2:
        t = 2.0 * np.pi * np.arange(n) / n
        pts = np.column_stack([np.cos(t), np.sin(t)])
    elif d == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(1.0 - z * z)
        t = np.pi * (1.0 + 5 ** 0.5) * i
        pts = np.column_stack([r * np.cos(t), r * np.sin(t), z])
    else:
        m = int(math.ceil(math.log2(n)))
        u = qmc.Sobol(d, scramble=True, seed=seed).random_base2(m)
        g = _normal.ppf(np.clip(u, 1e-12, 1 - 1e-12))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    if not with_axes:
        return pts
    eye = np.eye(d)
    return np.vstack([pts, eye, -eye])


def _lexmin_argmax(values, points):
    best = np.max(values)
    idx = np.flatnonzero(values == best)
    if idx.size == 1:
        return int(idx[0])
    order = np.lexsort(points[idx].T[::-1])
    return int(idx[order[0]])


def sphere_maximize(f_batch, d, n_points=None, top_k=3, refine=True):
    """Maximize ``f_batch`` (rows of unit vectors -> values) over the unit sphere.

    Returns ``(value, direction, grid_size)``.
    """
    pts = sphere_points(d, n_points)
    vals = np.asarray(f_batch(pts), float)
    k = _lexmin_argmax(vals, pts)
    best_v, best_b = float(vals[k]), pts[k].copy()
    if refine and d > 1:
        starts = [k] + [int(i) for i in np.argsort(-vals, kind="stable")[:top_k] if i != k]
        for s in starts[:top_k]:
            res = minimize(lambda z: -float(f_batch((z / np.linalg.norm(z))[None, :])[0]),
                           pts[s], method="BFGS", options={"gtol": 1e-10})
            b = res.x / np.linalg.norm(res.x)
            v = float(f_batch(b[None, :])[0])
            if v > best_v:
                best_v, best_b = v, b
    return best_v, best_b, int(pts.shape[0])


# ---------------------------------------------------------------- norm

@dataclass(frozen=True)
class NormReport:
    """Value of an m.d.r.i. norm with its maximizing direction and coordinate sandwich."""

    norm: float
    direction: np.ndarray
    lower: float
    upper: float
    base_space: dict
    grid_size: int
    method: str = "sphere"
    ci: tuple = None
    extras: dict = field(default_factory=dict)

    def as_dict(self):
        out = {"norm": float(self.norm), "direction": [float(x) for x in self.direction],
               "lower": float(self.lower), "upper": float(self.upper),
               "base_space": self.base_space, "grid_size": int(self.grid_size),
               "method": self.method}
        if self.ci is not None:
            out["ci"] = [float(self.ci[0]), float(self.ci[1])]
        return out


def _coordinate_bounds(model, base):
    c = model.coordinate_norms(base)
    return float(np.max(c)), float(np.sum(c))


def mdri_norm(model, B, base, method="auto", n_points=None, bootstrap=0, seed=0):
    """``sup_{b in B} ||(xi, b)||_X``.

    ``method="auto"`` uses the eigenvalue closed form for Gaussian models on
    the full sphere (valid for every base space because ``(xi, b)`` is
    Gaussian with variance ``(R b, b)``) and sphere optimization otherwise.
    ``bootstrap > 0`` attaches a percentile 95% interval for empirical
    models, computed at the maximizing direction.
    """
    if B.dim != model.dim:
        raise UsageError(f"direction set has dimension {B.dim}, model has {model.dim}")
    if isinstance(base, Phi) and model.kind == "empirical":
        _check_centered(model.samples)
    lower, upper = _coordinate_bounds(model, base)
    if not B.is_sphere:
        vals = model.projection_norms(base, B.vectors)
        k = _lexmin_argmax(vals, B.vectors)
        value, direction, size, used = float(vals[k]), B.vectors[k].copy(), B.vectors.shape[0], "finite"
    elif model.kind == "gaussian" and method in ("auto", "closed-form"):
        w, V = np.linalg.eigh(model.covariance)
        direction = V[:, -1] * (1.0 if V[np.argmax(np.abs(V[:, -1])), -1] >= 0 else -1.0)
        value = math.sqrt(max(w[-1], 0.0)) * base.gaussian_unit()
        size, used = 0, "closed-form"
    elif method == "closed-form":
        raise UsageError("the closed form only applies to Gaussian models on the full sphere")
    else:
        if model.kind == "coordinates":
            raise UsageError("coordinate models only determine norms along coordinate axes")
        value, direction, size = sphere_maximize(
            lambda P: model.projection_norms(base, P), model.dim, n_points)
        used = "sphere"
    ci = None
    if bootstrap and model.kind == "empirical":
        ci = _bootstrap_ci(model.samples @ direction, base, int(bootstrap), seed)
    return NormReport(float(value), np.asarray(direction, float), lower, upper,
                      base.describe(), size, used, ci)


def _check_centered(X, level=0.9973):
    """Hotelling-type test that the sample mean vector is zero."""
    n = X.shape[0]
    m = X.mean(axis=0)
    S = np.atleast_2d(np.cov(X, rowvar=False))
    stat = n * float(m @ np.linalg.pinv(S) @ m)
    limit = chi2.ppf(level, np.linalg.matrix_rank(S) or 1)
    if stat > limit:
        raise DomainError(f"samples are not centered (statistic {stat:.3g} > {limit:.3g})")


def _bootstrap_ci(y, base, resamples, seed, level=0.95):
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, y.size, size=(resamples, y.size))
    stats = np.array([base.sample_norms(y[i][:, None])[0] for i in idx])
    a = (1.0 - level) / 2.0
    return float(np.quantile(stats, a)), float(np.quantile(stats, 1.0 - a))


@dataclass(frozen=True)
class SandwichReport:
    lower: float
    norm: float
    upper: float
    passed: bool
    c1: float = None
    c2: float = None

    def as_dict(self):
        return {"lower": self.lower, "norm": self.norm, "upper": self.upper, "pass": self.passed,
                "c1": self.c1, "c2": self.c2}


def sandwich_check(model, B, base, rtol=1e-9, **kwargs):
    """Check ``max_i ||xi_i|| <= ||xi|| <= sum_i ||xi_i||``.

    On the full sphere both constants are 1. For a finite ``B`` the ratios
    ``C1 = norm / max`` and ``C2 = norm / sum`` are recorded instead and the
    check always passes.
    """
    rep = mdri_norm(model, B, base, **kwargs)
    lo, hi, v = rep.lower, rep.upper, rep.norm
    c1 = v / lo if lo > 0 else math.inf
    c2 = v / hi if hi > 0 else math.inf
    if B.is_sphere:
        ok = lo <= v * (1 + rtol) + 1e-300 and v <= hi * (1 + rtol) + 1e-300
    else:
        ok = True
    return SandwichReport(lo, v, hi, bool(ok), c1, c2)


# ---------------------------------------------------------------- fundamental function

@dataclass(frozen=True)
class FundamentalValue:
    value: float
    lower: float
    upper: float
    direction: np.ndarray

    def as_dict(self):
        return {"value": self.value, "lower": self.lower, "upper": self.upper,
                "direction": [float(x) for x in self.direction]}


def _nested_layers(delta):
    order = np.argsort(delta, kind="stable")
    ds = delta[order]
    widths = np.diff(np.concatenate([[0.0], ds]))
    return order, widths


def fundamental_function(delta, p, configuration="disjoint", n_points=None):
    """``sup_b ||sum_i b_i 1_{A_i}||_{L_p}`` for disjoint or nested sets ``A_i``.

    ``"identical"`` (equal ``delta``) and ``"nested"`` both place the sets in
    a chain ``A_(1) subset A_(2) subset ...`` ordered by measure.
    """
    delta = np.atleast_1d(np.asarray(delta, float))
    p = float(p)
    if np.any((delta < 0) | (delta > 1)):
        raise DomainError("every delta must lie in [0, 1]")
    if not p >= 1:
        raise DomainError("p must be >= 1")
    chi = delta ** (1.0 / p)
    lower, upper = float(np.max(chi)), float(np.sum(chi))
    d = delta.size
    if configuration == "disjoint":
        if np.sum(delta) > 1 + 1e-12:
            raise DomainError("disjoint sets need sum(delta) <= 1")
        if p >= 2 or d == 1:
            k = int(np.argmax(delta))
            value, b = lower, np.eye(d)[k]
        else:
            # maximize sum delta_i c_i^(p/2) over the simplex sum c_i = 1
            r = 2.0 / (2.0 - p)
            c = delta ** r / np.sum(delta ** r) if np.any(delta > 0) else np.eye(d)[0]
            value = float(np.sum(delta * c ** (p / 2.0)) ** (1.0 / p))
            b = np.sqrt(c)
    elif configuration in ("identical", "nested"):
        order, widths = _nested_layers(delta)

        def f_batch(P):
            Pb = P[:, order]
            tails = np.cumsum(Pb[:, ::-1], axis=1)[:, ::-1]
            return np.sum(widths * np.abs(tails) ** p, axis=1) ** (1.0 / p)

        if d == 1:
            value, b = float(f_batch(np.ones((1, 1)))[0]), np.ones(1)
        else:
            value, b, _ = sphere_maximize(f_batch, d, n_points)
            if b[np.argmax(np.abs(b))] < 0:
                b = -b
    else:
        raise UsageError(f"unknown set configuration {configuration!r}")
    if not lower * (1 - 1e-9) <= value <= upper * (1 + 1e-9) + 1e-15:
        raise InvariantViolation(f"fundamental function {value} outside [{lower}, {upper}]")
    return FundamentalValue(float(value), lower, upper, np.asarray(b, float))
