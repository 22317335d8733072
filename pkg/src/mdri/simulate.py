"""Monte Carlo oracle.

Every sampler draws fixed-size chunks, and chunk ``k`` of stream ``s`` under
seed ``seed`` always comes from a Philox generator keyed by ``(seed, s, k)``.
Chunks are independent of scheduling, so a run on eight threads reproduces a
serial run bit for bit. Counting routines accumulate integer exceedance
counters per chunk and merge them in chunk order.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _normal

from .exceptions import MatrixError, UsageError

CHUNK_ROWS = 1 << 16
MAX_FIELD_VARIABLES = 8192
_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF

NAMED_SAMPLERS = ("rademacher", "uniform", "gaussian", "gaussian-mixture", "bounded-martingale")


def chunk_generator(seed, stream, chunk):
    """Counter-based generator for one chunk of one stream."""
    key = np.array([int(seed) & _MASK64,
                    ((int(stream) & _MASK32) << 32) | (int(chunk) & _MASK32)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _chunk_sizes(n, chunk_rows=CHUNK_ROWS):
    full, rest = divmod(int(n), chunk_rows)
    return [chunk_rows] * full + ([rest] if rest else [])


def map_chunks(fn, n, seed, stream=0, threads=1, chunk_rows=CHUNK_ROWS):
    """Apply ``fn(rng, rows)`` to every chunk and return results in chunk order."""
    sizes = _chunk_sizes(n, chunk_rows)

    def job(k):
        return fn(chunk_generator(seed, stream, k), sizes[k])

    if threads is None or threads <= 1 or len(sizes) <= 1:
        return [job(k) for k in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(job, range(len(sizes))))


# ---------------------------------------------------------------- matrices

def psd_factor(R, tol=1e-10):
    """Return ``L`` with ``L @ L.T == R`` for a symmetric PSD ``R``.

    Uses the symmetric eigendecomposition so rank-deficient covariances
    (for instance smooth-kernel field covariances) factor without pivoting
    failures. Eigenvalues down to ``-tol * max(1, |lambda_max|)`` are clipped.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise MatrixError(f"covariance must be square, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise MatrixError("covariance has non-finite entries")
    if not np.allclose(R, R.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(R).max())):
        raise MatrixError("covariance is not symmetric")
    R = 0.5 * (R + R.T)
    w, V = np.linalg.eigh(R)
    scale = max(1.0, abs(w[-1]))
    if w[0] < -tol * scale:
        raise MatrixError(f"covariance is not PSD (smallest eigenvalue {w[0]:.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


# ---------------------------------------------------------------- samples

@dataclass(frozen=True)
class SampleMatrix:
    """``n x d`` realizations together with the recipe that produced them."""

    values: np.ndarray
    seed: int
    stream: int
    descriptor: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values.flags.writeable = False

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]

    def column(self, j):
        return self.values[:, j]


def _gaussian_chunk(L):
    d = L.shape[0]

    def draw(rng, rows):
        return rng.standard_normal((rows, d)) @ L.T

    return draw


def gaussian_chunk(R):
    """Chunk sampler for mean-zero Gaussian rows with covariance ``R``."""
    return _gaussian_chunk(psd_factor(R))


def sample_gaussian(R, n, seed, stream=0, threads=1):
    """Mean-zero Gaussian rows with covariance ``R``."""
    L = psd_factor(R)
    n = _check_n(n)
    parts = map_chunks(_gaussian_chunk(L), n, seed, stream, threads)
    values = np.concatenate(parts) if parts else np.zeros((0, L.shape[0]))
    return SampleMatrix(values, int(seed), int(stream),
                        {"sampler": "gaussian", "covariance": np.asarray(R, float).tolist()})


def named_chunk(descriptor, d):
    """Chunk sampler ``(rng, rows) -> (rows, d)`` for a named distribution."""
    if descriptor == "rademacher":
        return lambda rng, rows: rng.integers(0, 2, size=(rows, d)).astype(float) * 2.0 - 1.0
    if descriptor == "uniform":
        return lambda rng, rows: rng.uniform(-1.0, 1.0, size=(rows, d))
    if descriptor == "gaussian":
        return lambda rng, rows: rng.standard_normal((rows, d))
    if descriptor == "gaussian-mixture":
        # equal-weight mixture of N(-1, 0.25) and N(1, 0.25): centered, variance 1.25
        def mixture(rng, rows):
            signs = rng.integers(0, 2, size=(rows, d)) * 2.0 - 1.0
            return signs + 0.5 * rng.standard_normal((rows, d))
        return mixture
    if descriptor == "bounded-martingale":
        # columns are successive increments: eps_j * (1 + 0.5 sign(S_{j-1})), a
        # predictable scale times a fresh Rademacher sign
        def martingale(rng, rows):
            eps = rng.integers(0, 2, size=(rows, d)).astype(float) * 2.0 - 1.0
            out = np.empty((rows, d))
            partial = np.zeros(rows)
            for j in range(d):
                out[:, j] = eps[:, j] * (1.0 + 0.5 * np.sign(partial))
                partial += out[:, j]
            return out
        return martingale
    raise UsageError(f"unknown sampler {descriptor!r}; expected one of {NAMED_SAMPLERS}")


def sample_named(descriptor, d, n, seed, stream=0, threads=1):
    draw = named_chunk(descriptor, int(d))
    n = _check_n(n)
    parts = map_chunks(draw, n, seed, stream, threads)
    values = np.concatenate(parts) if parts else np.zeros((0, int(d)))
    return SampleMatrix(values, int(seed), int(stream), {"sampler": descriptor, "dim": int(d)})


def sample_normed_sums(descriptor, d, n_terms, trials, seed, stream=0, threads=1):
    """Rows of ``S(n) = n^{-1/2} sum_j xi_j`` for i.i.d. vectors drawn from ``descriptor``.

    The summation is carried out term by term inside each chunk, except for
    Rademacher terms, whose sums are drawn directly from the binomial law.
    """
    draw = named_chunk(descriptor, int(d))
    n_terms = int(n_terms)
    if n_terms < 1:
        raise UsageError("n_terms must be >= 1")

    def rademacher_chunk(rng, rows):
        # a sum of n signs is 2 Binomial(n, 1/2) - n in law
        return (2.0 * rng.binomial(n_terms, 0.5, size=(rows, int(d))) - n_terms) / np.sqrt(n_terms)

    def chunk(rng, rows):
        acc = np.zeros((rows, int(d)))
        block = max(1, CHUNK_ROWS // max(rows, 1))
        done = 0
        while done < n_terms:
            m = min(block, n_terms - done)
            acc += draw(rng, rows * m).reshape(rows, m, int(d)).sum(axis=1)
            done += m
        return acc / np.sqrt(n_terms)

    fn = rademacher_chunk if descriptor == "rademacher" else chunk
    parts = map_chunks(fn, _check_n(trials), seed, stream, threads, chunk_rows=1 << 12)
    return SampleMatrix(np.concatenate(parts), int(seed), int(stream),
                        {"sampler": descriptor, "dim": int(d), "n_terms": n_terms})


def sample_martingale_sums(n_terms, trials, seed, stream=0, threads=1):
    """``n^{-1/2} sum_j theta_j`` for the bounded martingale of ``named_chunk``.

    ``theta_j = eps_j (1 + 0.5 sign(S_{j-1}))`` with fresh Rademacher signs
    ``eps_j``; the scale is predictable, so the increments are martingale
    differences with ``|theta_j| <= 1.5``.
    """
    n_terms = int(n_terms)
    if n_terms < 1:
        raise UsageError("n_terms must be >= 1")

    def chunk(rng, rows):
        eps = rng.integers(0, 2, size=(rows, n_terms)).astype(float) * 2.0 - 1.0
        partial = np.zeros(rows)
        for j in range(n_terms):
            partial += eps[:, j] * (1.0 + 0.5 * np.sign(partial))
        return (partial / np.sqrt(n_terms))[:, None]

    parts = map_chunks(chunk, _check_n(trials), seed, stream, threads, chunk_rows=1 << 12)
    return SampleMatrix(np.concatenate(parts), int(seed), int(stream),
                        {"sampler": "bounded-martingale-sum", "n_terms": n_terms})


def _check_n(n):
    n = int(n)
    if n < 0:
        raise UsageError("sample size must be non-negative")
    return n


# ---------------------------------------------------------------- tails

def wilson_interval(k, n, confidence=0.99):
    """Wilson score interval for a binomial proportion (vectorized)."""
    k = np.asarray(k, dtype=float)
    n = float(n)
    if n <= 0:
        raise UsageError("trial count must be positive")
    z = _normal.ppf(0.5 + confidence / 2.0)
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    spread = z * np.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    # the endpoints are exact at k = 0 and k = n; rounding would leave them off by ~1e-18
    lo = np.where(k <= 0, 0.0, np.clip(center - spread, 0.0, 1.0))
    hi = np.where(k >= n, 1.0, np.clip(center + spread, 0.0, 1.0))
    return lo, hi


@dataclass(frozen=True)
class EmpiricalTail:
    """Exceedance frequencies at query points with 99% Wilson intervals."""

    points: np.ndarray
    counts: np.ndarray
    trials: int
    confidence: float = 0.99
    pattern_counts: np.ndarray = None
    patterns: np.ndarray = None

    @property
    def frequency(self):
        return self.counts / float(self.trials)

    @property
    def interval(self):
        return wilson_interval(self.counts, self.trials, self.confidence)

    @property
    def lower(self):
        return self.interval[0]

    @property
    def upper(self):
        return self.interval[1]

    @property
    def half_width(self):
        lo, hi = self.interval
        return 0.5 * (hi - lo)

    def orthant_asymmetry(self):
        """Largest gap between a sign pattern and its negation, in half-widths."""
        if self.pattern_counts is None:
            raise UsageError("sign-pattern counts were not recorded")
        pats = [tuple(p) for p in self.patterns]
        worst = 0.0
        for i, p in enumerate(pats):
            j = pats.index(tuple(-np.asarray(p)))
            f_i = self.pattern_counts[:, i] / self.trials
            f_j = self.pattern_counts[:, j] / self.trials
            lo, hi = wilson_interval(self.pattern_counts[:, i], self.trials, self.confidence)
            hw = np.maximum(0.5 * (hi - lo), 1.0 / self.trials)
            worst = max(worst, float(np.max(np.abs(f_i - f_j) / hw)))
        return worst

    def rows(self):
        lo, hi = self.interval
        for i in range(len(self.counts)):
            yield (self.points[i], float(self.frequency[i]), float(lo[i]), float(hi[i]))


def sign_patterns(d, signs="all"):
    """Sign patterns to test: ``"positive"``, ``"all"`` (2^d) or an explicit array."""
    if isinstance(signs, str):
        if signs == "positive":
            return np.ones((1, d))
        if signs == "all":
            grids = np.meshgrid(*[[1.0, -1.0]] * d, indexing="ij")
            return np.stack([g.ravel() for g in grids], axis=1)
        raise UsageError(f"unknown sign specification {signs!r}")
    pats = np.atleast_2d(np.asarray(signs, dtype=float))
    if pats.shape[1] != d or not np.all(np.abs(pats) == 1.0):
        raise UsageError("sign patterns must be +-1 rows of length d")
    return pats


def _orthant_counts(block, x, pats, strict=False):
    out = np.empty((x.shape[0], pats.shape[0]), dtype=np.int64)
    for j, s in enumerate(pats):
        signed = block * s
        hit = signed[:, None, :] > x[None, :, :] if strict else signed[:, None, :] >= x[None, :, :]
        out[:, j] = hit.all(axis=2).sum(axis=0)
    return out


def _query_points(x_points, d):
    x = np.atleast_2d(np.asarray(x_points, dtype=float))
    if x.shape[1] != d:
        raise UsageError(f"query points have dimension {x.shape[1]}, samples have {d}")
    return x


def empirical_tail_multi(samples, x_points, signs="all", confidence=0.99, block_rows=CHUNK_ROWS):
    """Empirical multidimensional tail ``max_s P(s_1 xi_1 >= x_1, ..., s_d xi_d >= x_d)``."""
    X = samples.values if isinstance(samples, SampleMatrix) else np.atleast_2d(np.asarray(samples, float))
    x = _query_points(x_points, X.shape[1])
    if np.any(x <= 0):
        raise UsageError("tail query points must be strictly positive")
    pats = sign_patterns(X.shape[1], signs)
    counts = np.zeros((x.shape[0], pats.shape[0]), dtype=np.int64)
    for start in range(0, X.shape[0], block_rows):
        counts += _orthant_counts(X[start:start + block_rows], x, pats)
    return EmpiricalTail(x, counts.max(axis=1), X.shape[0], confidence, counts, pats)


def simulate_tail(chunk_sampler, trials, x_points, seed, stream=0, signs="all", threads=1,
                  confidence=0.99):
    """Streaming version of :func:`empirical_tail_multi` that never stores the samples."""
    first = chunk_sampler(chunk_generator(seed, stream, 0), 1)
    d = first.shape[1]
    x = _query_points(x_points, d)
    if np.any(x <= 0):
        raise UsageError("tail query points must be strictly positive")
    pats = sign_patterns(d, signs)
    parts = map_chunks(lambda rng, rows: _orthant_counts(chunk_sampler(rng, rows), x, pats),
                       trials, seed, stream, threads)
    counts = np.zeros((x.shape[0], pats.shape[0]), dtype=np.int64)
    for c in parts:
        counts += c
    return EmpiricalTail(x, counts.max(axis=1), int(trials), confidence, counts, pats)


def simulate_exceedance(chunk_sampler, statistic, levels, trials, seed, stream=0, threads=1,
                        confidence=0.99):
    """Tail of a scalar statistic, ``P(statistic(xi) > u)``, at each level ``u``.

    With ``statistic`` the gauge of a body ``D`` this is ``P(xi not in D(u))``.
    """
    u = np.asarray(levels, dtype=float).ravel()

    def chunk(rng, rows):
        s = np.asarray(statistic(chunk_sampler(rng, rows)), float)
        return (s[:, None] > u[None, :]).sum(axis=0)

    counts = np.zeros(u.size, dtype=np.int64)
    for c in map_chunks(chunk, trials, seed, stream, threads):
        counts += c
    return EmpiricalTail(u[:, None], counts, int(trials), confidence)


def gaussian_field_sampler(joint_covariance, n_points, d):
    """Chunk sampler returning ``(rows, |Y|, d)`` draws of a Gaussian vector field."""
    N = n_points * d
    if N > MAX_FIELD_VARIABLES:
        raise UsageError(f"|Y|*d = {N} exceeds the desk-scale limit {MAX_FIELD_VARIABLES}")
    L = psd_factor(joint_covariance)
    if L.shape[0] != N:
        raise UsageError("joint covariance size does not match |Y|*d")

    def draw(rng, rows):
        return (rng.standard_normal((rows, N)) @ L.T).reshape(rows, n_points, d)

    return draw


def empirical_field_sup(field_sampler, v_points, trials, seed, stream=0, threads=1,
                        minimax_levels=None, confidence=0.99):
    """Joint tail of coordinate-wise suprema, ``P(max_y xi(j, y) > v_j for all j)``.

    Returns ``(joint, minimax)``: the joint tail at ``v_points`` and the tail
    of ``min_j max_y xi(j, y)`` at ``minimax_levels`` (defaults to the common
    values of the diagonal query points).
    """
    probe = field_sampler(chunk_generator(seed, stream, 0), 1)
    d = probe.shape[2]
    v = np.atleast_2d(np.asarray(v_points, dtype=float))
    if v.shape[1] != d:
        raise UsageError("v points do not match the field dimension")
    if minimax_levels is None:
        diag = v[np.all(v == v[:, :1], axis=1), 0]
        minimax_levels = np.unique(diag)
    levels = np.asarray(minimax_levels, dtype=float).ravel()
    pos = np.ones((1, d))

    def chunk(rng, rows):
        sup = field_sampler(rng, rows).max(axis=1)
        joint = _orthant_counts(sup, v, pos, strict=True)[:, 0]
        mm = sup.min(axis=1)
        return joint, (mm[:, None] > levels[None, :]).sum(axis=0)

    parts = map_chunks(chunk, trials, seed, stream, threads, chunk_rows=1 << 12)
    joint = np.zeros(v.shape[0], dtype=np.int64)
    mini = np.zeros(levels.size, dtype=np.int64)
    for a, b in parts:
        joint += a
        mini += b
    return (EmpiricalTail(v, joint, int(trials), confidence),
            EmpiricalTail(levels[:, None], mini, int(trials), confidence))


# ---------------------------------------------------------------- dominance

@dataclass(frozen=True)
class DominanceSummary:
    dominated: np.ndarray
    margins: np.ndarray
    violations: int
    worst_margin: float
    log_ratio_mean: float
    log_ratio_min: float
    log_ratio_max: float
    ci_multiplier: float

    def as_dict(self):
        return {
            "violations": int(self.violations),
            "worst_margin": float(self.worst_margin),
            "log_ratio_mean": _finite_or_none(self.log_ratio_mean),
            "log_ratio_min": _finite_or_none(self.log_ratio_min),
            "log_ratio_max": _finite_or_none(self.log_ratio_max),
            "ci_multiplier": float(self.ci_multiplier),
            "points": int(len(self.dominated)),
        }


def _finite_or_none(x):
    return float(x) if np.isfinite(x) else None


def dominance_report(bounds, empirical, ci_multiplier=1.0, capped=None):
    """Flag each point where ``bound >= frequency - ci_multiplier * half_width``.

    ``bounds`` may be an array or an object with ``.bound`` and ``.capped``
    (a :class:`~mdri.tails.BoundReport`). Capped points are excluded from the
    tightness statistics but still count toward violations.
    """
    if hasattr(bounds, "bound"):
        capped = bounds.capped if capped is None else capped
        bounds = bounds.bound
    b = np.asarray(bounds, dtype=float).ravel()
    if b.shape[0] != len(empirical.counts):
        raise UsageError(f"{b.shape[0]} bounds vs {len(empirical.counts)} empirical points")
    capped = np.zeros(b.shape, bool) if capped is None else np.asarray(capped, bool).ravel()
    freq = empirical.frequency
    margins = b - (freq - ci_multiplier * empirical.half_width)
    dominated = margins >= 0.0
    use = (~capped) & (freq > 0) & (b > 0)
    lr = np.log(b[use] / freq[use]) if np.any(use) else np.array([np.nan])
    return DominanceSummary(dominated, margins, int(np.sum(~dominated)), float(np.min(margins)),
                            float(np.mean(lr)), float(np.min(lr)), float(np.max(lr)),
                            float(ci_multiplier))
