"""Rosenthal-type constants and moment bounds for sums of random vectors.

For centered independent terms (or martingale differences) the normalized
sum ``n^{-1/2} sum_j nu_j`` has ``L_p`` norm at most ``K(p) |nu|_p`` with
``K_I(p) = 0.87 p / log p`` and ``K_M(p) = p sqrt(2)``, ``p >= 2``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm as _normal

from .exceptions import DomainError, UsageError
from .norm import gaussian_lp_constant
from .simulate import sample_martingale_sums, sample_normed_sums
from .space_functions import PsiFunction

KINDS = ("martingale", "independent")


def k_martingale(p):
    p = _check_p(p)
    return p * math.sqrt(2.0)


def k_independent(p):
    p = _check_p(p)
    return 0.87 * p / math.log(p)


def _check_p(p):
    p = float(p)
    if not p >= 2:
        raise DomainError(f"Rosenthal constants are used for p >= 2, got {p}")
    return p


def rosenthal_constant(kind, p):
    if kind == "martingale":
        return k_martingale(p)
    if kind == "independent":
        return k_independent(p)
    raise UsageError(f"kind must be one of {KINDS}")


@dataclass(frozen=True)
class RosenthalConstants:
    """Both constants as callables plus the ``psi`` rescaling they induce."""

    def k_martingale(self, p):
        return k_martingale(p)

    def k_independent(self, p):
        return k_independent(p)

    def scaled_psi(self, psi, kind):
        """``psi_K(p) = K(p) psi(p)`` on the part of the support with ``p >= 2``."""
        K = np.vectorize(lambda p: rosenthal_constant(kind, p))
        lo, hi = psi.support
        return PsiFunction(lambda p: K(p) * psi(p), (max(lo, 2.0), hi), psi.family,
                           {**psi.params, "rosenthal": kind})


def coordinate_sum_bound(max_coord_norm, kind, p):
    """``K(p) max_i |xi(i)|_p``, a bound on the ``L_p`` m.d.r.i. norm of ``xi``."""
    if max_coord_norm < 0:
        raise DomainError("coordinate norms must be non-negative")
    return rosenthal_constant(kind, p) * float(max_coord_norm)


@dataclass(frozen=True)
class NormedSumBound:
    """Right-hand side of the uniform-in-n bound and the rescaled weight."""

    bound: float
    psi: PsiFunction
    kind: str


def normed_sum_gls_bound(eta_norm, psi, kind="independent"):
    """``sup_n ||zeta(n)||_{G(psi_K)} <= ||eta||_{G(psi)}``, with ``zeta(n) = n^{-1/2} sum eta(j)``."""
    if eta_norm < 0:
        raise DomainError("norm must be non-negative")
    return NormedSumBound(float(eta_norm), RosenthalConstants().scaled_psi(psi, kind), kind)


# ---------------------------------------------------------------- Monte Carlo checks

def empirical_abs_moment(y, p, confidence=0.99):
    """Plug-in ``|y|_p`` and a delta-method confidence half-width."""
    y = np.abs(np.asarray(y, float).ravel())
    if y.size < 2:
        raise UsageError("need at least two samples")
    s = y.max() or 1.0
    z = (y / s) ** p
    m = z.mean()
    if m == 0:
        return 0.0, 0.0
    se = z.std(ddof=1) / math.sqrt(y.size)
    q = _normal.ppf(0.5 + confidence / 2.0)
    value = s * m ** (1.0 / p)
    return float(value), float(q * se * s * m ** (1.0 / p - 1.0) / p)


def analytic_abs_moment(descriptor, p):
    """``|nu|_p`` for one coordinate of a named sampler."""
    if descriptor == "rademacher":
        return 1.0
    if descriptor == "uniform":
        return (p + 1.0) ** (-1.0 / p)
    if descriptor == "gaussian":
        return gaussian_lp_constant(p)
    if descriptor == "bounded-martingale":
        # |theta_j| is 1.5 or 0.5 with equal probability once S_{j-1} != 0
        return (0.5 * (1.5 ** p + 0.5 ** p)) ** (1.0 / p)
    raise UsageError(f"no closed-form moment for {descriptor!r}")


@dataclass(frozen=True)
class RosenthalRecord:
    sampler: str
    kind: str
    p: float
    n: int
    empirical: float
    half_width: float
    bound: float
    ci_multiplier: float

    @property
    def passed(self):
        return self.empirical <= self.bound + self.ci_multiplier * self.half_width

    def as_dict(self):
        out = dict(self.__dict__)
        out["passed"] = bool(self.passed)
        return out


def rosenthal_verification(descriptor, p_values, n_values, trials, seed, kind="independent",
                           ci_multiplier=3.0, threads=1, stream=0):
    """Compare ``|n^{-1/2} sum_j nu_j|_p`` with ``K(p) |nu|_p`` for every ``(p, n)``.

    ``descriptor="bounded-martingale"`` runs the martingale construction and
    is compared with ``K_M``.
    """
    records = []
    for i, n in enumerate(n_values):
        if descriptor == "bounded-martingale":
            S = sample_martingale_sums(n, trials, seed, stream + i, threads).values[:, 0]
        else:
            S = sample_normed_sums(descriptor, 1, n, trials, seed, stream + i, threads).values[:, 0]
        for p in p_values:
            emp, hw = empirical_abs_moment(S, p)
            bound = rosenthal_constant(kind, p) * analytic_abs_moment(descriptor, p)
            records.append(RosenthalRecord(descriptor, kind, float(p), int(n), emp, hw, bound,
                                           float(ci_multiplier)))
    return records
