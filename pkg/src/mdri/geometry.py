"""Convex bodies, polars, epsilon-nets and covering-number profiles.

Covering numbers come from the farthest-point (greedy) permutation: the
``k``-th inserted point sits at distance ``r_k`` from the earlier centers, the
first ``k`` centers cover the set at radius ``r_k``, and so a single
permutation yields ``N(eps) = 1 + #{k >= 1 : r_k > eps}`` for every ``eps``.
This count is within the usual factor-two slack of the minimal cover.
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from .exceptions import PolarityError, UsageError

POLAR_VERTEX_MAX_DIM = 3
INTERIOR_MARGIN = 1e-9


# ---------------------------------------------------------------- bodies

@dataclass(frozen=True)
class ConvexBody:
    """Polytope (vertices), dual polytope (``{y : V y <= 1}``), ellipsoid or Euclidean ball.

    An ellipsoid with matrix ``A`` is the set ``{x : (A^{-1} x, x) <= 1}``,
    so its support function is ``sqrt((A u, u))``.
    """

    kind: str
    dim: int
    vertices: np.ndarray = None
    halfspaces: np.ndarray = None
    matrix: np.ndarray = None
    radius: float = None
    symmetric: bool = False

    @classmethod
    def ball(cls, d, radius=1.0):
        if not radius > 0:
            raise UsageError("radius must be positive")
        return cls("ball", int(d), radius=float(radius), symmetric=True)

    @classmethod
    def ellipsoid(cls, A):
        A = np.atleast_2d(np.asarray(A, float))
        if not np.allclose(A, A.T) or np.linalg.eigvalsh(A)[0] <= 0:
            raise UsageError("ellipsoid matrix must be symmetric positive definite")
        return cls("ellipsoid", A.shape[0], matrix=0.5 * (A + A.T), symmetric=True)

    @classmethod
    def polytope(cls, vertices, symmetric=None):
        V = np.atleast_2d(np.asarray(vertices, float))
        if V.size == 0:
            raise UsageError("polytope needs vertices")
        if symmetric is None:
            symmetric = _closed_under_negation(V)
        elif symmetric and not _closed_under_negation(V):
            raise UsageError("vertex set flagged symmetric is not closed under negation")
        return cls("polytope", V.shape[1], vertices=V, symmetric=bool(symmetric))

    @classmethod
    def cube(cls, d, half_width=1.0):
        grids = np.meshgrid(*[[-half_width, half_width]] * d, indexing="ij")
        return cls.polytope(np.stack([g.ravel() for g in grids], axis=1), True)

    @classmethod
    def dual(cls, normals, vertices=None, symmetric=False):
        N = np.atleast_2d(np.asarray(normals, float))
        return cls("dual", N.shape[1], vertices=vertices, halfspaces=N, symmetric=symmetric)

    def support(self, U):
        """Support function ``h(u) = max_{x in body} (x, u)`` for each row of ``U``."""
        U = np.atleast_2d(np.asarray(U, float))
        if U.shape[1] != self.dim:
            raise UsageError("direction dimension mismatch")
        if self.kind == "ball":
            return self.radius * np.linalg.norm(U, axis=1)
        if self.kind == "ellipsoid":
            return np.sqrt(np.einsum("ki,ij,kj->k", U, self.matrix, U))
        if self.vertices is not None:
            return np.max(U @ self.vertices.T, axis=1)
        return np.array([_lp_support(self.halfspaces, u) for u in U])

    def contains_origin_interior(self, margin=INTERIOR_MARGIN):
        if self.kind in ("ball", "ellipsoid"):
            return True
        if self.kind == "dual":
            # 0 satisfies V y <= 1 strictly; the body is bounded iff the normals surround 0
            return _origin_interior(self.halfspaces, margin)
        return _origin_interior(self.vertices, margin)

    def contains(self, X, tol=1e-12):
        X = np.atleast_2d(np.asarray(X, float))
        if self.kind == "ball":
            return np.linalg.norm(X, axis=1) <= self.radius + tol
        if self.kind == "ellipsoid":
            return np.einsum("ki,ij,kj->k", X, np.linalg.inv(self.matrix), X) <= 1 + tol
        if self.kind == "dual":
            return np.all(X @ self.halfspaces.T <= 1 + tol, axis=1)
        hull = ConvexHull(self.vertices)
        return np.all(X @ hull.equations[:, :-1].T + hull.equations[:, -1] <= tol, axis=1)

    def gauge(self, X):
        """Minkowski functional: ``x`` lies in ``D(u)`` iff ``gauge(x) <= u``."""
        X = np.atleast_2d(np.asarray(X, float))
        if self.kind == "ball":
            return np.linalg.norm(X, axis=1) / self.radius
        if self.kind == "ellipsoid":
            return np.sqrt(np.einsum("ki,ij,kj->k", X, np.linalg.inv(self.matrix), X))
        if self.kind == "dual":
            return np.maximum(np.max(X @ self.halfspaces.T, axis=1), 0.0)
        return self.polar().support(X)

    def polar(self):
        """Polar body ``{y : (x, y) <= 1 for all x in body}``."""
        if not self.contains_origin_interior():
            raise PolarityError("the origin is not an interior point; the polar is unbounded")
        if self.kind == "ball":
            return ConvexBody.ball(self.dim, 1.0 / self.radius)
        if self.kind == "ellipsoid":
            return ConvexBody.ellipsoid(np.linalg.inv(self.matrix))
        if self.kind == "dual":
            return ConvexBody.polytope(extremal_points(self.halfspaces), self.symmetric)
        V = extremal_points(self.vertices)
        verts = _dual_vertices(V) if self.dim <= POLAR_VERTEX_MAX_DIM else None
        return ConvexBody.dual(V, verts, self.symmetric)

    def as_dict(self):
        out = {"kind": self.kind, "dim": self.dim, "symmetric": self.symmetric}
        if self.vertices is not None:
            out["vertices"] = self.vertices.tolist()
        if self.halfspaces is not None:
            out["halfspaces"] = self.halfspaces.tolist()
        if self.matrix is not None:
            out["matrix"] = self.matrix.tolist()
        if self.radius is not None:
            out["radius"] = self.radius
        return out


def _closed_under_negation(V, tol=1e-12):
    for v in V:
        if not np.any(np.all(np.abs(V + v) <= tol, axis=1)):
            return False
    return True


def _origin_interior(V, margin):
    """0 lies in the interior of ``conv(V)`` iff ``V`` spans R^d and some
    strictly positive convex combination of the rows vanishes."""
    n, d = V.shape
    if np.linalg.matrix_rank(V) < d:
        return False
    # variables (lambda_1..lambda_n, t); maximize t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_eq = np.zeros((d + 1, n + 1))
    A_eq[:d, :n] = V.T
    A_eq[d, :n] = 1.0
    b_eq = np.zeros(d + 1)
    b_eq[d] = 1.0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n + [(None, 1.0)], method="highs")
    return bool(res.status == 0 and -res.fun > margin)


def _lp_support(N, u):
    res = linprog(-u, A_ub=N, b_ub=np.ones(N.shape[0]), bounds=[(None, None)] * N.shape[1],
                  method="highs")
    if res.status != 0:
        raise PolarityError("support LP is unbounded or infeasible")
    return -res.fun


def _dual_vertices(V):
    d = V.shape[1]
    if d == 1:
        return np.array([[1.0 / V.max()], [1.0 / V.min()]])
    hs = np.hstack([V, -np.ones((V.shape[0], 1))])
    verts = HalfspaceIntersection(hs, np.zeros(d)).intersections
    return extremal_points(verts)


def extremal_points(points):
    """Vertices of the convex hull of a finite point set (input order kept)."""
    P = np.atleast_2d(np.asarray(points, float))
    if P.shape[1] == 1:
        idx = sorted({int(np.argmin(P[:, 0])), int(np.argmax(P[:, 0]))})
        return P[idx]
    if P.shape[0] <= P.shape[1]:
        return P
    try:
        hull = ConvexHull(P)
    except QhullError as exc:
        raise UsageError(f"points do not span a full-dimensional hull: {exc}") from None
    keep = np.sort(hull.vertices)
    return P[keep]


@dataclass(frozen=True)
class BoundaryDescriptor:
    """Boundary of a smooth body, available through deterministic sampling."""

    body: ConvexBody

    continuum: bool = True

    def sample(self, n):
        from .norm import sphere_points
        U = sphere_points(self.body.dim, n, with_axes=False)
        if self.body.kind == "ball":
            return self.body.radius * U
        w, Q = np.linalg.eigh(self.body.matrix)
        return U @ (Q * np.sqrt(w)).T


def body_extremal_points(body):
    """Vertex list for polytopes, a :class:`BoundaryDescriptor` for smooth bodies."""
    if body.kind == "polytope":
        return extremal_points(body.vertices)
    if body.kind == "dual":
        if body.vertices is None:
            raise UsageError("dual body has no materialized vertices (d > 3)")
        return extremal_points(body.vertices)
    return BoundaryDescriptor(body)


# ---------------------------------------------------------------- nets

def _distance_oracle(points, metric):
    """Return ``(n, dist_from(i))`` for a Euclidean, precomputed or callable metric."""
    if metric == "precomputed":
        D = np.asarray(points, float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise UsageError("precomputed metric needs a square distance matrix")
        return D.shape[0], lambda i: D[i]
    X = np.asarray(points, float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise UsageError("empty point set")
    if metric == "euclidean":
        return X.shape[0], lambda i: np.sqrt(np.sum((X - X[i]) ** 2, axis=1))
    if callable(metric):
        return X.shape[0], lambda i: np.asarray(metric(X, X[i]), float)
    raise UsageError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class GreedyPermutation:
    """Farthest-point order with insertion radii; ``radii[0]`` is ``inf``."""

    order: np.ndarray
    radii: np.ndarray
    complete: bool
    stop_radius: float

    def count(self, eps):
        """Greedy covering number at each ``eps``."""
        eps = np.atleast_1d(np.asarray(eps, float))
        if not self.complete and np.any(eps < self.stop_radius):
            raise UsageError(f"greedy order was stopped at radius {self.stop_radius}")
        r = self.radii[1:]
        # radii are non-increasing; count how many exceed eps
        return 1 + np.searchsorted(-r, -eps, side="left")


def greedy_permutation(points, metric="euclidean", stop_radius=0.0, start=0):
    """Farthest-point traversal starting from point ``start`` (deterministic).

    Stops once the covering radius drops to ``stop_radius`` or below.
    """
    n, dist_from = _distance_oracle(points, metric)
    nearest = np.asarray(dist_from(start), float).copy()
    order = [int(start)]
    radii = [math.inf]
    while len(order) < n:
        k = int(np.argmax(nearest))
        r = float(nearest[k])
        if r <= stop_radius:
            break
        order.append(k)
        radii.append(r)
        nearest = np.minimum(nearest, dist_from(k))
    complete = len(order) == n or float(np.max(nearest)) == 0.0
    return GreedyPermutation(np.array(order), np.array(radii), complete, float(stop_radius))


@dataclass(frozen=True)
class EpsilonNet:
    centers: np.ndarray
    assignment: np.ndarray
    epsilon: float
    covering_radius: float

    @property
    def size(self):
        return int(self.centers.size)


def greedy_net(points, epsilon, metric="euclidean", start=0):
    """Greedy epsilon-net; ``assignment[i]`` is the position in ``centers`` of
    the nearest center to point ``i`` (lowest position on ties)."""
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    n, dist_from = _distance_oracle(points, metric)
    best = np.asarray(dist_from(start), float).copy()
    assign = np.zeros(n, dtype=np.int64)
    centers = [int(start)]
    while True:
        k = int(np.argmax(best))
        if best[k] <= epsilon:
            break
        centers.append(k)
        dk = dist_from(k)
        closer = dk < best
        assign[closer] = len(centers) - 1
        best = np.where(closer, dk, best)
    return EpsilonNet(np.array(centers), assign, float(epsilon), float(best.max()))


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class CoveringProfile:
    """Covering numbers ``N(eps)`` on a decreasing epsilon grid."""

    epsilon: np.ndarray
    counts: np.ndarray
    provenance: str
    model: dict = field(default_factory=dict)
    permutation: GreedyPermutation = None

    def __post_init__(self):
        e = np.asarray(self.epsilon, float)
        c = np.asarray(self.counts, float)
        if e.shape != c.shape or e.size == 0:
            raise UsageError("epsilon and counts must be non-empty and of equal length")
        if np.any(np.diff(e) >= 0):
            raise UsageError("epsilon grid must be strictly decreasing")
        if np.any(c < 1):
            raise UsageError("covering numbers must be >= 1")
        if np.any(np.diff(c) < -1e-9 * np.abs(c[1:])):
            raise UsageError("covering numbers must not increase with epsilon")

    @property
    def entropy(self):
        return np.log(self.counts)

    @classmethod
    def constant(cls, K, epsilon):
        e = np.sort(np.asarray(epsilon, float))[::-1]
        return cls(e, np.full(e.size, float(K)), "constant", {"K": float(K)})

    @classmethod
    def power_model(cls, C, kappa, epsilon):
        """``N(eps) = max(1, C eps^{-kappa})``, the smooth-boundary model."""
        e = np.sort(np.asarray(epsilon, float))[::-1]
        return cls(e, np.maximum(1.0, C * e ** (-kappa)), "analytic-model",
                   {"C": float(C), "kappa": float(kappa)})

    @classmethod
    def logarithmic(cls, C, kappa, epsilon):
        """``H(eps) = C + kappa |log eps|``."""
        e = np.sort(np.asarray(epsilon, float))[::-1]
        return cls(e, np.exp(C + kappa * np.abs(np.log(e))), "logarithmic-model",
                   {"C": float(C), "kappa": float(kappa)})

    def entropy_at(self, eps):
        """``H(eps)`` off the grid.

        Greedy profiles answer exactly down to the stop radius; models use
        their formula; otherwise the step function ``N`` is read at the
        nearest grid node at or below ``eps`` (an upper estimate).
        """
        eps = np.atleast_1d(np.asarray(eps, float))
        if self.permutation is not None:
            return np.log(self.permutation.count(eps).astype(float))
        if self.provenance == "logarithmic-model":
            return self.model["C"] + self.model["kappa"] * np.abs(np.log(eps))
        if self.provenance == "analytic-model":
            return np.log(np.maximum(1.0, self.model["C"] * eps ** (-self.model["kappa"])))
        if self.provenance == "constant":
            return np.full(eps.shape, math.log(self.model["K"]))
        e = self.epsilon[::-1]
        H = self.entropy[::-1]
        if np.any(eps < e[0]):
            raise UsageError(f"profile is not resolved below eps = {e[0]}")
        idx = np.searchsorted(e, eps, side="right") - 1
        return H[idx]

    @property
    def floor(self):
        """Smallest epsilon at which ``entropy_at`` is exact (0 for closed forms)."""
        if self.permutation is not None:
            return 0.0 if self.permutation.complete else self.permutation.stop_radius
        if self.provenance in ("logarithmic-model", "analytic-model", "constant"):
            return 0.0
        return float(self.epsilon[-1])

    def rows(self):
        for e, c, h in zip(self.epsilon, self.counts, self.entropy):
            yield float(e), float(c), float(h), self.provenance

    def write_csv(self, handle):
        w = csv.writer(handle, lineterminator="\n")
        w.writerow(["epsilon", "N", "H", "provenance"])
        for e, c, h, prov in self.rows():
            w.writerow([repr(e), repr(c), repr(h), prov])


def covering_profile(points, epsilon, metric="euclidean", start=0):
    """Greedy covering profile on the given epsilon grid."""
    e = np.sort(np.asarray(epsilon, float))[::-1]
    if np.any(e <= 0):
        raise UsageError("epsilon values must be positive")
    perm = greedy_permutation(points, metric, stop_radius=float(e[-1]) * (1 - 1e-12), start=start)
    counts = perm.count(e).astype(float)
    return CoveringProfile(e, counts, "computed-greedy", {"metric": _metric_name(metric)}, perm)


def _metric_name(metric):
    return metric if isinstance(metric, str) else getattr(metric, "__name__", "callable")


# ---------------------------------------------------------------- integrals

@dataclass(frozen=True)
class EntropyIntegral:
    value: float
    partial: float
    tail: float
    kappa_tail: float
    converged: bool
    diverged: bool
    inconclusive: bool
    p: float
    eps_min: float

    def as_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def _tail_fit(eps, counts, eps_min):
    """Fit ``log N = log C - kappa log eps`` on the last decade above ``eps_min``."""
    sel = (eps >= eps_min) & (eps <= 10.0 * eps_min)
    if np.sum(sel) < 2 or np.ptp(np.log(eps[sel])) == 0:
        return None
    slope, intercept = np.polyfit(np.log(eps[sel]), np.log(counts[sel]), 1)
    return max(-slope, 0.0), math.exp(intercept)


def entropy_integral(profile, p, eps_min=None, n_nodes=2001):
    """``I(p) = int_0^1 N(eps)^{1/p} d eps``.

    The integrand is evaluated on a log-spaced grid on ``[eps_min, 1]`` and
    integrated by the trapezoid rule; below ``eps_min`` a power law fitted on
    the last decade supplies a closed-form tail. The integral is declared
    divergent when the fitted exponent satisfies ``kappa / p >= 1``.
    """
    p = float(p)
    if not p > 0:
        raise UsageError("p must be positive")
    if eps_min is None:
        eps_min = max(profile.floor, float(profile.epsilon[-1]))
    eps_min = float(eps_min)
    if not 0 < eps_min < 1:
        raise UsageError("eps_min must lie in (0, 1)")
    nodes = np.geomspace(eps_min, 1.0, n_nodes)
    top = float(profile.epsilon[0])
    # above the largest profile epsilon, N is bounded by its value there
    H = profile.entropy_at(np.minimum(nodes, top))
    f = np.exp(H / p)
    partial = float(trapezoid(f, nodes))
    fine = np.geomspace(eps_min, min(10.0 * eps_min, 1.0), 41)
    fit = _tail_fit(fine, np.exp(profile.entropy_at(fine)), eps_min)
    if fit is None:
        return EntropyIntegral(partial, partial, math.nan, math.nan, False, False, True, p, eps_min)
    kappa, C = fit
    if kappa / p >= 1.0:
        return EntropyIntegral(math.inf, partial, math.inf, kappa, False, True, False, p, eps_min)
    a = 1.0 - kappa / p
    tail = C ** (1.0 / p) * eps_min ** a / a
    return EntropyIntegral(partial + tail, partial, tail, kappa, True, False, False, p, eps_min)


@dataclass(frozen=True)
class EntropyDimension:
    kappa: float
    intercept: float
    residual: float
    n_points: int

    def as_dict(self):
        return dict(self.__dict__)


def entropy_dimension(profile):
    """Least-squares slope of ``H(eps)`` against ``|log eps|`` on the smallest-eps half."""
    e = np.asarray(profile.epsilon, float)
    if e.size < 5:
        raise UsageError("entropy dimension needs at least 5 profile points")
    half = e.size // 2
    x = np.abs(np.log(e[-max(half, 2):]))
    y = profile.entropy[-max(half, 2):]
    if np.ptp(x) == 0:
        raise UsageError("degenerate fit: |log eps| has no spread")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return EntropyDimension(float(coef[0]), float(coef[1]), resid, int(x.size))
