"""Monotone contention resolution for matching constraints.

Library layout:

- ``graph``: multigraph container, matchings, polytope membership, JSON I/O
- ``randomness``: seeded streams and inversion sampling for the needed laws
- ``schemes``: the marginal-producing rounding procedures
- ``sampler``: exact decomposition and matching samplers realizing marginals
- ``oracle``: enumeration-based exact expectations, balancedness, monotonicity
- ``analytics``: analytic constants, instances, Monte Carlo estimation
- ``csfm``: toy submodular-maximization pipeline consuming the schemes
- ``cli``: batch experiment front end
"""

from .errors import CapabilityError, InputError
from .graph import (
    Multigraph,
    bipartite_components,
    degree_load,
    edges_between,
    in_degree_polytope,
    in_matching_polytope_exact,
    is_matching,
    load_instance,
    support,
)
from .randomness import RngStream, draw, independent_round, subsample
from .schemes import CLI_SCHEMES, SchemeKind, SchemeSpec, parse_scheme
from .sampler import ConvexCombination, birkhoff_decompose, exp_clock_matching, resolve
from .oracle import BalancednessReport, exact_balancedness, verify_monotonicity
from .analytics import (
    bipartite_constant,
    estimate_balancedness,
    general_constant,
    generate_instance,
    optimality_limit,
    parse_instance,
)

__all__ = [
    "CapabilityError",
    "InputError",
    "Multigraph",
    "RngStream",
    "SchemeKind",
    "SchemeSpec",
    "CLI_SCHEMES",
    "ConvexCombination",
    "BalancednessReport",
    "bipartite_components",
    "bipartite_constant",
    "birkhoff_decompose",
    "degree_load",
    "draw",
    "edges_between",
    "estimate_balancedness",
    "exact_balancedness",
    "exp_clock_matching",
    "general_constant",
    "generate_instance",
    "in_degree_polytope",
    "in_matching_polytope_exact",
    "independent_round",
    "is_matching",
    "load_instance",
    "optimality_limit",
    "parse_instance",
    "parse_scheme",
    "resolve",
    "subsample",
    "support",
    "verify_monotonicity",
]

__version__ = "0.1.0"
