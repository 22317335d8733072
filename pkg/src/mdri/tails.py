"""Tail bounds for random vectors: polynomial entropy-integral bounds and
exponential Chernoff-type bounds built from Young-Fenchel conjugates.

Constants that the underlying theory leaves unspecified enter as explicit
arguments (``c0``, ``c``) and are echoed in every :class:`BoundReport`.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._grid import golden_max
from .exceptions import DomainError, EntropyDivergenceError, MatrixError, UsageError
from .simulate import sign_patterns


@dataclass(frozen=True)
class BoundReport:
    """Tail bound values at query points, capped at 1, with the constants used."""

    points: np.ndarray
    bound: np.ndarray
    raw: np.ndarray
    kind: str
    constants: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def capped(self):
        return self.raw >= 1.0

    def __len__(self):
        return len(self.bound)

    def as_dict(self):
        return {"kind": self.kind, "constants": self.constants,
                "params": {k: _plain(v) for k, v in self.params.items()},
                "points": np.asarray(self.points).tolist(),
                "bound": [float(b) for b in self.bound],
                "capped": [bool(c) for c in self.capped]}

    def write_csv(self, handle, empirical=None, ci_multiplier=1.0):
        """One row per query point; empirical columns are filled when given."""
        pts = np.atleast_2d(np.asarray(self.points, float))
        if pts.shape[0] != len(self.bound):
            pts = pts.T
        w = csv.writer(handle, lineterminator="\n")
        coord = [f"x{i + 1}" for i in range(pts.shape[1])]
        w.writerow(coord + ["bound", "capped", "empirical", "ci_low", "ci_high", "constants",
                            "dominated"])
        const = json.dumps(self.constants, sort_keys=True)
        if empirical is not None:
            lo, hi = empirical.interval
            freq = empirical.frequency
            half = empirical.half_width
        for i in range(len(self.bound)):
            row = [repr(float(v)) for v in pts[i]] + [repr(float(self.bound[i])),
                                                        int(self.capped[i])]
            if empirical is None:
                row += ["", "", "", const, ""]
            else:
                dom = self.bound[i] >= freq[i] - ci_multiplier * half[i]
                row += [repr(float(freq[i])), repr(float(lo[i])), repr(float(hi[i])), const,
                        int(dom)]
            w.writerow(row)


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _report(points, raw, kind, constants, **params):
    raw = np.asarray(raw, float)
    return BoundReport(np.asarray(points, float), np.minimum(1.0, raw), raw, kind, constants, params)


# ---------------------------------------------------------------- polynomial bounds

def _integral_value(I):
    if hasattr(I, "diverged"):
        if I.diverged or not math.isfinite(I.value):
            raise EntropyDivergenceError(f"entropy integral diverges at p = {I.p}")
        return float(I.value)
    I = float(I)
    if not math.isfinite(I):
        raise EntropyDivergenceError("entropy integral is infinite")
    return I


def polar_tail_bound(norm_p, I, d, u, p, c0=1.0):
    """``min(1, (c0 I ||xi||_p)^p u^{-p})`` for ``P(xi not in D(u))``, ``u >= 1``."""
    I = _integral_value(I)
    p = float(p)
    if not p > 0:
        raise DomainError("p must be positive")
    if norm_p < 0 or c0 <= 0:
        raise DomainError("norm must be non-negative and c0 positive")
    u = np.atleast_1d(np.asarray(u, float))
    if np.any(u < 1):
        raise DomainError("the polynomial bound is stated for u >= 1")
    raw = (c0 * I * norm_p) ** p * u ** (-p)
    return _report(u[:, None], raw, "polar", {"c0": float(c0)}, p=p, I=I, norm_p=float(norm_p),
                   d=int(d))


def calibrate_c0(norm_p, I, p, u, target):
    """The ``c0`` for which the polar bound at ``u`` equals ``target``.

    ``target`` is normally the upper confidence limit of a Monte Carlo tail
    estimate at a single calibration level.
    """
    I = _integral_value(I)
    if not target > 0:
        raise DomainError("calibration target must be positive")
    return float(u) * float(target) ** (1.0 / float(p)) / (I * float(norm_p))


def optimize_tail_over_p(bound_at, p_grid, u, refine=True):
    """``inf_p bound_at(p, u)`` over a grid of ``p`` with golden-section polishing.

    ``bound_at(p, u)`` returns the uncapped bound and may raise
    :class:`EntropyDivergenceError` for inadmissible ``p``.
    """
    grid = np.sort(np.asarray(p_grid, float).ravel())
    if grid.size == 0:
        raise UsageError("p grid is empty")
    u = np.atleast_1d(np.asarray(u, float))

    def logb(p, uu):
        try:
            v = float(bound_at(p, uu))
        except EntropyDivergenceError:
            return math.inf
        return math.log(v) if v > 0 else -math.inf

    best_p = np.empty(u.size)
    best_v = np.empty(u.size)
    for j, uu in enumerate(u):
        vals = np.array([logb(p, uu) for p in grid])
        if not np.any(np.isfinite(vals)):
            raise EntropyDivergenceError("the bound is unavailable at every p in the grid")
        k = int(np.argmin(vals))
        bp, bv = float(grid[k]), float(vals[k])
        if refine and grid.size > 1:
            lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
            if hi > lo:
                x, v = golden_max(lambda p: -logb(p, uu), lo, hi)
                if -v < bv:
                    bp, bv = float(x), -v
        best_p[j], best_v[j] = bp, bv
    return _report(u[:, None], np.exp(best_v), "optimized-over-p", {}, p_star=best_p,
                   p_grid=[float(grid[0]), float(grid[-1]), int(grid.size)])


# ---------------------------------------------------------------- exponential bounds

def _positive_points(x):
    x = np.atleast_2d(np.asarray(x, float))
    if np.any(x <= 0):
        raise DomainError("orthant query points must be strictly positive")
    return x


def _evaluate(fn, X):
    return np.asarray(fn(X), float).reshape(X.shape[0])


def chernoff_tail_bound(nu_star, x, c=1.0, xi_norm=1.0, signs="positive"):
    """``min(1, exp(-nu*(c x / ||xi||)))`` for ``P(xi_1 >= x_1, ..., xi_d >= x_d)``.

    ``signs="all"`` returns ``max_s exp(-nu*(c s x / ||xi||))`` over sign
    patterns ``s``, which bounds the tail function taken as a maximum over
    all orthants.
    """
    x = _positive_points(x)
    if not xi_norm > 0 or not c > 0:
        raise DomainError("xi_norm and c must be positive")
    arg = c * x / xi_norm
    pats = sign_patterns(x.shape[1], signs)
    expo = np.min([_evaluate(nu_star, arg * s) for s in pats], axis=0)
    return _report(x, np.exp(-expo), "chernoff", {"c": float(c)}, xi_norm=float(xi_norm),
                   signs=signs if isinstance(signs, str) else "custom", exponent=expo)


def weighted_norm(x, D):
    """``sqrt((D^{-1} x, x))`` row-wise."""
    D = np.atleast_2d(np.asarray(D, float))
    if not np.allclose(D, D.T):
        raise MatrixError("D must be symmetric")
    w = np.linalg.eigvalsh(D)
    if w[0] <= 1e-12 * max(1.0, abs(w[-1])):
        raise MatrixError("D must be positive definite")
    x = np.atleast_2d(np.asarray(x, float))
    return np.sqrt(np.einsum("ki,ij,kj->k", x, np.linalg.inv(D), x))


def ellipsoid_tail_bound(phi_star, D, tau, x):
    """``min(1, exp(-phi*(||x||_{D^{-1}} / tau)))``."""
    if not tau > 0:
        raise DomainError("tau must be positive")
    r = weighted_norm(x, D) / float(tau)
    expo = np.asarray(phi_star(r), float).ravel()
    return _report(np.atleast_2d(np.asarray(x, float)), np.exp(-expo), "ellipsoid",
                   {"tau": float(tau)}, weighted_norm=r * tau, exponent=expo)


def sum_tail_bound(nu_bar_star, xi_norm, x, signs="positive"):
    """``min(1, exp(-nu_bar*(x / ||xi||)))``, uniform in the number of summands."""
    rep = chernoff_tail_bound(nu_bar_star, x, 1.0, xi_norm, signs)
    return BoundReport(rep.points, rep.bound, rep.raw, "normed-sum", {}, rep.params)


def gaussian_orthant_exponent(x, rho):
    """``0.5 (1 - rho^2)^{-1} (x1^2 - 2 rho x1 x2 + x2^2)`` for a correlated pair."""
    x = np.atleast_2d(np.asarray(x, float))
    q = x[:, 0] ** 2 - 2.0 * rho * x[:, 0] * x[:, 1] + x[:, 1] ** 2
    return 0.5 * q / (1.0 - rho * rho)


def exponent_ratio(empirical_frequency, exponent):
    """``-log T_hat / exponent``; 1 means the exponential rate is matched."""
    f = np.asarray(empirical_frequency, float)
    with np.errstate(divide="ignore"):
        return np.where(f > 0, -np.log(f) / np.asarray(exponent, float), np.inf)
