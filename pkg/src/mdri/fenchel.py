"""Numerical Young-Fenchel conjugates on grids."""
import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._grid import as_grid
from .exceptions import GridExtentError, TruncationWarning, UsageError
from .space_functions import NuFunction

MAX_TENSOR_POINTS = 10 ** 8
MAX_TENSOR_DIM = 4
NU_BAR_STABILITY = 1e-9


@dataclass(frozen=True)
class GridFunction:
    """Values of a function on a tensor grid, with linear interpolation between nodes."""

    axes: tuple
    values: np.ndarray
    convex: bool = False
    argmax: Optional[np.ndarray] = None
    boundary: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        object.__setattr__(self, "axes", axes)
        for a in axes:
            if a.ndim != 1 or a.size == 0:
                raise UsageError("grid axes must be non-empty 1-d arrays")
            if a.size > 1 and not np.all(np.diff(a) > 0):
                raise UsageError("grid axes must be strictly increasing")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != tuple(a.size for a in axes):
            raise UsageError(f"values shape {vals.shape} does not match axes")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.axes)

    @classmethod
    def sample(cls, func, axis, convex=False):
        axis = np.asarray(axis, dtype=float)
        return cls((axis,), np.asarray(func(axis), dtype=float), convex)

    def box(self):
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            a = self.axes[0]
            if np.any(x < a[0] - 1e-12) or np.any(x > a[-1] + 1e-12):
                raise GridExtentError(
                    f"query outside grid [{a[0]}, {a[-1]}]",
                    required_box=[(min(float(np.min(x)), a[0]), max(float(np.max(x)), a[-1]))])
            return np.interp(x, a, self.values)
        pts = np.atleast_2d(x)
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        if np.any(pts < lo - 1e-12) or np.any(pts > hi + 1e-12):
            need = [(min(float(pts[:, k].min()), lo[k]), max(float(pts[:, k].max()), hi[k]))
                    for k in range(self.dim)]
            raise GridExtentError("query outside the conjugate grid; extend it", need)
        interp = RegularGridInterpolator(self.axes, self.values, method="linear")
        out = interp(np.clip(pts, lo, hi))
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0]

    def is_convex(self, rtol=1e-9):
        """Discrete convexity along every axis line (non-decreasing slopes)."""
        for k, a in enumerate(self.axes):
            if a.size < 3:
                continue
            v = np.moveaxis(self.values, k, -1)
            slopes = np.diff(v, axis=-1) / np.diff(a)
            tol = rtol * (1.0 + np.abs(slopes[..., 1:]))
            if np.any(np.diff(slopes, axis=-1) < -tol):
                return False
        return True

    def write_csv(self, handle):
        """One row per grid point: coordinates then value."""
        w = csv.writer(handle, lineterminator="\n")
        w.writerow([f"x{k + 1}" for k in range(self.dim)] + ["value"])
        mesh = np.meshgrid(*self.axes, indexing="ij")
        flat = [m.ravel() for m in mesh]
        for i, val in enumerate(self.values.ravel()):
            w.writerow([repr(float(c[i])) for c in flat] + [repr(float(val))])


# ---------------------------------------------------------------- 1-d

def _lower_hull(x, y):
    """Indices of the lower convex hull of points sorted by ``x`` (monotone chain)."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            # drop k if it lies on or above the chord j -> i
            if (y[k] - y[j]) * (x[i] - x[j]) >= (y[i] - y[j]) * (x[k] - x[j]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def conjugate_1d(f, lam_grid, x_grid):
    """``f*(x) = max_lambda (lambda x - f(lambda))`` over a sorted lambda grid.

    Linear-time Legendre transform: only vertices of the lower convex hull
    of the samples can be maximizers, and the optimal vertex for ``x`` is the
    one whose incoming and outgoing hull slopes bracket ``x``.
    """
    lam = as_grid(lam_grid, "lambda grid")
    xs = np.unique(as_grid(x_grid, "x grid"))
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    if lam.size > 1 and not np.all(np.diff(lam) > 0):
        raise UsageError("lambda grid must not contain duplicates")
    fv = np.asarray(f(lam) if callable(f) else np.asarray(f, float)[order], dtype=float)
    if not np.all(np.isfinite(fv)):
        raise UsageError("f must be finite on its grid")
    hull = _lower_hull(lam, fv)
    hx, hy = lam[hull], fv[hull]
    slopes = np.diff(hy) / np.diff(hx)
    k = np.searchsorted(slopes, xs, side="left")
    vals = xs * hx[k] - hy[k]
    arg = hx[k]
    boundary = (arg == lam[0]) | (arg == lam[-1])
    return GridFunction((xs,), vals, True, arg, boundary,
                        {"lambda_range": (float(lam[0]), float(lam[-1]))})


def grid_tolerance(axis):
    """Half the largest grid spacing (2.5e-3 for 4001 nodes on [-10, 10])."""
    a = np.asarray(axis, float)
    return 0.5 * float(np.max(np.diff(a))) if a.size > 1 else 0.0


@dataclass(frozen=True)
class DoubleConjugateResult:
    deviation: float
    tolerance: float
    within_tolerance: bool
    envelope: np.ndarray
    expected_nonzero: bool


def double_conjugate_check(f):
    """Max ``|f** - f|`` on the grid of a 1-d :class:`GridFunction`.

    The dual grid holds the slopes of consecutive chords and of the lower
    hull edges, so ``f**`` on the original nodes reproduces the discrete
    lower convex envelope. For non-convex input the deviation is reported
    and flagged as expected.
    """
    if f.dim != 1:
        raise UsageError("double_conjugate_check handles 1-d grid functions")
    lam = f.axes[0]
    hull = _lower_hull(lam, f.values)
    slopes = np.unique(np.concatenate([
        np.diff(f.values) / np.diff(lam),
        np.diff(f.values[hull]) / np.diff(lam[hull])]))
    star = conjugate_1d(f.values, lam, slopes)
    env = conjugate_1d(star.values, star.axes[0], lam).values
    dev = float(np.max(np.abs(env - f.values)))
    tol = grid_tolerance(lam)
    return DoubleConjugateResult(dev, tol, dev <= tol, env, not f.convex)


def convex_envelope_bruteforce(x, y):
    """Lower convex envelope on the nodes by checking every chord (O(n^3)); test oracle."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    env = y.copy()
    for i in range(n):
        for j in range(i):
            for k in range(i + 1, n):
                t = (x[i] - x[j]) / (x[k] - x[j])
                env[i] = min(env[i], (1 - t) * y[j] + t * y[k])
    return env


# ---------------------------------------------------------------- n-d

def _tensor_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def conjugate_points(nu, mu_box, resolution, points, threads=1, warn=True):
    """``nu*(x) = max over a tensor mu-grid of ((x, mu) - nu(mu))`` at arbitrary points.

    Returns ``(values, argmax, on_boundary)``.
    """
    d = nu.dim
    if d > MAX_TENSOR_DIM:
        raise UsageError(f"tensor-grid conjugation is limited to d <= {MAX_TENSOR_DIM}")
    box = np.asarray(mu_box, dtype=float).reshape(-1, 2)
    if box.shape[0] != d:
        raise UsageError("mu_box must give one (lo, hi) pair per dimension")
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (d,))
    total = float(np.prod(res.astype(float)))
    if total > MAX_TENSOR_POINTS:
        raise UsageError(f"tensor grid with {total:.0f} points exceeds {MAX_TENSOR_POINTS}")
    axes = [np.linspace(lo, hi, int(r)) for (lo, hi), r in zip(box, res)]
    M = _tensor_points(axes)
    nv = np.asarray(nu(M), dtype=float)
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != d:
        raise UsageError("query points do not match nu's dimension")
    step = max(1, int(4_000_000 // M.shape[0]))
    blocks = [(s, X[s:s + step]) for s in range(0, X.shape[0], step)]

    def work(block):
        S = block[1] @ M.T - nv
        k = np.argmax(S, axis=1)
        return S[np.arange(len(k)), k], k

    if threads and threads > 1 and len(blocks) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    vals = np.concatenate([p[0] for p in parts])
    idx = np.concatenate([p[1] for p in parts])
    arg = M[idx]
    on_edge = np.any(np.isclose(arg, box[:, 0]) | np.isclose(arg, box[:, 1]), axis=1)
    if warn and np.any(on_edge):
        warnings.warn(f"{int(on_edge.sum())} conjugate maxima lie on the mu-box boundary; "
                      "values there are truncated", TruncationWarning, stacklevel=2)
    return vals, arg, on_edge


def conjugate_nd(nu, mu_box, resolution, x_grid, threads=1):
    """Conjugate of ``nu`` on a tensor grid of ``x`` values (a list of axes)."""
    axes = tuple(as_grid(a, "x axis") for a in x_grid)
    if len(axes) != nu.dim:
        raise UsageError("x_grid needs one axis per dimension")
    pts = _tensor_points(axes)
    vals, arg, edge = conjugate_points(nu, mu_box, resolution, pts, threads)
    shape = tuple(a.size for a in axes)
    return GridFunction(axes, vals.reshape(shape), True, arg.reshape(shape + (nu.dim,)),
                        edge.reshape(shape), {"mu_box": np.asarray(mu_box, float).tolist(),
                                              "resolution": np.asarray(resolution).tolist()})


def quadratic_conjugate(R):
    """Closed form ``0.5 (R^{-1} x, x)`` of the conjugate of ``0.5 (R mu, mu)``."""
    Rinv = np.linalg.inv(np.atleast_2d(np.asarray(R, float)))
    return lambda x: 0.5 * np.einsum("...i,ij,...j->...", np.asarray(x, float), Rinv,
                                     np.asarray(x, float))


# ---------------------------------------------------------------- nu-bar

@dataclass(frozen=True)
class NuBarValues:
    values: np.ndarray
    best_n: np.ndarray
    truncated: np.ndarray
    stability_gap: float


def _nu_bar_raw(nu, mu, n_max, block=2048):
    best = np.full(mu.shape[0], -np.inf)
    best_n = np.zeros(mu.shape[0], dtype=np.int64)
    for start in range(1, n_max + 1, block):
        ns = np.arange(start, min(start + block, n_max + 1), dtype=float)
        scaled = mu[:, None, :] / np.sqrt(ns)[None, :, None]
        vals = ns[None, :] * nu(scaled)
        k = np.argmax(vals, axis=1)
        v = vals[np.arange(mu.shape[0]), k]
        better = v > best
        best = np.where(better, v, best)
        best_n = np.where(better, ns[k].astype(np.int64), best_n)
    return best, best_n


def nu_bar_values(nu, mu, n_max=10 ** 4, covariance=None, stability_check=True):
    """``max_{1 <= n <= n_max} n nu(mu / sqrt(n))``, optionally joined with the n -> inf limit.

    When ``covariance`` is given the limit ``0.5 (R mu, mu)`` is a member of the
    supremum and is included as a candidate. ``truncated`` marks points whose
    finite maximum sits at ``n_max`` and is not dominated by the limit.
    """
    if int(n_max) < 1:
        raise UsageError("n_max must be >= 1")
    n_max = int(n_max)
    mu = np.asarray(mu, dtype=float)
    flat = mu.reshape(-1, nu.dim)
    best, best_n = _nu_bar_raw(nu, flat, n_max)
    gap = 0.0
    limit = None
    if covariance is not None:
        R = np.atleast_2d(np.asarray(covariance, float))
        limit = 0.5 * np.einsum("...i,ij,...j->...", flat, R, flat)
    truncated = best_n == n_max
    if stability_check and np.any(truncated):
        doubled, _ = _nu_bar_raw(nu, flat[truncated], 2 * n_max)
        ref = best[truncated] if limit is None else np.maximum(best[truncated], limit[truncated])
        ref2 = doubled if limit is None else np.maximum(doubled, limit[truncated])
        gap = float(np.max(np.abs(ref2 - ref)))
    if limit is not None:
        truncated = truncated & (limit <= best)
        best = np.maximum(best, limit)
    if gap >= NU_BAR_STABILITY:
        warnings.warn(f"nu-bar moved by {gap:.3g} when n_max doubled to {2 * n_max}",
                      TruncationWarning, stacklevel=2)
    shape = mu.shape[:-1]
    return NuBarValues(best.reshape(shape), best_n.reshape(shape), truncated.reshape(shape), gap)


def nu_bar(nu, n_max=10 ** 4, covariance=None):
    """The envelope ``sup_n n nu(mu / sqrt(n))`` as a :class:`NuFunction`."""
    def f(mu):
        return nu_bar_values(nu, mu, n_max, covariance, stability_check=False).values
    return NuFunction(f, nu.dim, None, "nu-bar", covariance)
