"""Norms, tail bounds and Monte Carlo certification for random vectors in
multidimensional rearrangement-invariant spaces."""
from .exceptions import MdriError
from .norm import (DirectionSet, Lp, Phi, Gpsi, RandomVectorModel, fundamental_function,
                   gaussian_lp_constant, mdri_norm, sandwich_check)
from .fenchel import conjugate_1d, conjugate_nd, double_conjugate_check, nu_bar
from .geometry import (ConvexBody, CoveringProfile, covering_profile, entropy_dimension,
                       entropy_integral, greedy_net, greedy_permutation)
from .tails import (chernoff_tail_bound, ellipsoid_tail_bound, polar_tail_bound,
                    sum_tail_bound)
from .chaining import FieldModel, chaining_tail_bound, w_series
from .simulate import dominance_report, empirical_tail_multi, sample_gaussian, sample_named

__version__ = "0.1.0"
