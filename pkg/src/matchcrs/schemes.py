"""Marginal-producing rounding procedures for matching constraints.

Every scheme maps (graph, fractional point x, sampled edge set A, randomness)
to a per-edge marginal vector y with supp(y) inside A and y inside the
relevant matching polytope.  The Poisson-based kinds first thin A (keeping
edge e with probability (1-e^{-x_e})/x_e), then attach an independent
Poisson(x_e)-conditioned-on->=1 intensity q_e to each survivor and divide it
by a neighborhood sum:

  max formula   y_e = q_e / max(sum over delta(u), sum over delta(v))
  sum formula   y_e = q_e / sum over delta(u) united with delta(v)

with q_e = 0 forcing y_e = 0 even when the denominator vanishes.  The mixed
kind applies the max formula inside 2-colorable components of the survivor
graph and the sum formula elsewhere.  Count-based kinds skip intensities and
divide 1 by neighborhood counts within A.

"Merged" variants fold the independent rounding step into the scheme: q_e is a
plain Poisson(x_e) draw for every edge and no input set is taken.  They
produce the same marginal distribution as feeding R(x) into the two-stage
procedure, which makes them the natural objects for balancedness experiments,
but they are not themselves usable inside scheme intersections.

Intensity vectors are plain integer tuples; formula outputs are Fractions so
downstream decomposition stays exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .errors import CapabilityError, InputError
from .graph import Multigraph, bipartite_components, support, two_coloring
from .randomness import PoissonGeq1, Poisson, RngStream, draw, subsample

ZERO = Fraction(0)


class SchemeKind(enum.Enum):
    BIP_COUNT = "bip-count"              # 1/max of per-endpoint counts in A
    BIP_POISSON = "bip-poisson"          # subsample + intensities, max formula
    RANDOM_ORDER = "random-order"        # 1/|adjacent edges in A|, greedy order
    GEN_POISSON = "gen-poisson"          # subsample + intensities, sum formula
    MIXED = "mixed"                      # max on bipartite survivor components
    ISOLATED = "isolated"                # halve A, keep isolated survivors
    BIPARTITION = "ref-bipartition"      # random side split, then BIP_POISSON
    SCALED_TWO_THIRDS = "ref-2of3"       # max formula anywhere, scaled by 2/3


@dataclass(frozen=True)
class SchemeSpec:
    kind: SchemeKind
    merged: bool = False

    def __post_init__(self):
        if self.merged and self.kind not in _MERGEABLE:
            raise InputError(f"{self.kind.value} has no merged variant")

    @property
    def cli_name(self) -> str:
        for name, spec in CLI_SCHEMES.items():
            if spec == self:
                return name
        return self.kind.value


_MERGEABLE = {SchemeKind.BIP_POISSON, SchemeKind.GEN_POISSON, SchemeKind.MIXED}

# CLI tokens; the algN/exN aliases are the interface names the tooling expects.
CLI_SCHEMES: dict[str, SchemeSpec] = {
    "ex1.4": SchemeSpec(SchemeKind.ISOLATED),
    "ex2.2": SchemeSpec(SchemeKind.BIP_COUNT),
    "alg1": SchemeSpec(SchemeKind.BIP_POISSON),
    "alg2": SchemeSpec(SchemeKind.BIP_POISSON, merged=True),
    "ex4.1": SchemeSpec(SchemeKind.RANDOM_ORDER),
    "alg3": SchemeSpec(SchemeKind.GEN_POISSON),
    "alg4": SchemeSpec(SchemeKind.GEN_POISSON, merged=True),
    "alg5": SchemeSpec(SchemeKind.MIXED),
    "alg6": SchemeSpec(SchemeKind.MIXED, merged=True),
    "ref-bipartition": SchemeSpec(SchemeKind.BIPARTITION),
    "ref-2of3": SchemeSpec(SchemeKind.SCALED_TWO_THIRDS),
}


def parse_scheme(token: str) -> SchemeSpec:
    try:
        return CLI_SCHEMES[token.strip().lower()]
    except KeyError:
        raise InputError(
            f"unknown scheme {token!r}; choose from {', '.join(sorted(CLI_SCHEMES))}"
        ) from None


def _require_bipartite(g: Multigraph, what: str) -> list[int]:
    coloring = two_coloring(g)
    if coloring is None:
        raise CapabilityError(f"{what} requires a bipartite graph")
    return coloring


def _check_sampled_set(g: Multigraph, x: Sequence, a: Iterable[int]) -> frozenset[int]:
    aset = frozenset(a)
    supp = support(x)
    for e in aset:
        g.check_edge_id(e)
    if not aset <= supp:
        raise InputError("sampled set contains edges outside supp(x)")
    return aset


def _assert_support(y: Sequence, allowed: frozenset[int]) -> None:
    # The support-containment contract is asserted on every invocation.
    assert all(y[e] == 0 for e in range(len(y)) if e not in allowed), "supp(y) escaped A"


# ---------------------------------------------------------------------------
# intensity draws


def draw_intensities(g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream) -> tuple[int, ...]:
    """Two-stage intensities: thin a, then conditioned-Poisson counts on survivors."""
    aset = _check_sampled_set(g, x, a)
    survivors = subsample(aset, x, stream)
    q = [0] * g.edge_count
    for e in sorted(survivors):
        q[e] = draw(PoissonGeq1(float(x[e])), stream)
    return tuple(q)


def direct_intensities(g: Multigraph, x: Sequence, stream: RngStream) -> tuple[int, ...]:
    """Merged intensities: independent Poisson(x_e) count for every edge."""
    return tuple(
        draw(Poisson(float(x[e])), stream) if x[e] > 0 else 0 for e in range(g.edge_count)
    )


# ---------------------------------------------------------------------------
# formulas on a fixed intensity vector (coupled-randomness entry points)


def max_formula_marginals(g: Multigraph, q: Sequence[int]) -> tuple[Fraction, ...]:
    """q_e over the larger of the two per-endpoint intensity sums; 0/0 is 0."""
    vertex_sum = [0] * g.vertex_count
    for e, qe in enumerate(q):
        if qe:
            u, v = g.edges[e]
            vertex_sum[u] += qe
            vertex_sum[v] += qe
    out = []
    for e, qe in enumerate(q):
        if qe == 0:
            out.append(ZERO)
        else:
            u, v = g.edges[e]
            out.append(Fraction(qe, max(vertex_sum[u], vertex_sum[v])))
    return tuple(out)


def sum_formula_marginals(g: Multigraph, q: Sequence[int]) -> tuple[Fraction, ...]:
    """q_e over the intensity sum of the whole edge neighborhood; 0/0 is 0."""
    vertex_sum = [0] * g.vertex_count
    for e, qe in enumerate(q):
        if qe:
            u, v = g.edges[e]
            vertex_sum[u] += qe
            vertex_sum[v] += qe
    out = []
    for e, qe in enumerate(q):
        if qe == 0:
            out.append(ZERO)
        else:
            u, v = g.edges[e]
            pair = sum(q[h] for h in g.pair_group[e])
            out.append(Fraction(qe, vertex_sum[u] + vertex_sum[v] - pair))
    return tuple(out)


def mixed_formula_marginals(g: Multigraph, q: Sequence[int]) -> tuple[Fraction, ...]:
    """Max formula on bipartite survivor components, sum formula on the rest."""
    survivors = [e for e, qe in enumerate(q) if qe]
    bip_edges: set[int] = set()
    for _, comp_edges, is_bip in bipartite_components(g, survivors):
        if is_bip:
            bip_edges |= comp_edges
    max_form = max_formula_marginals(g, q)
    sum_form = sum_formula_marginals(g, q)
    return tuple(max_form[e] if e in bip_edges else sum_form[e] for e in range(g.edge_count))


# ---------------------------------------------------------------------------
# deterministic count-based schemes


def bipartite_count_marginals(g: Multigraph, x: Sequence, a: Iterable[int]) -> tuple[Fraction, ...]:
    """y_e = 1 / max(|A-edges at u|, |A-edges at v|) for e = {u, v} in A."""
    _require_bipartite(g, "the bipartite count scheme")
    aset = _check_sampled_set(g, x, a)
    count = [0] * g.vertex_count
    for e in aset:
        u, v = g.edges[e]
        count[u] += 1
        count[v] += 1
    y = [ZERO] * g.edge_count
    for e in aset:
        u, v = g.edges[e]
        y[e] = Fraction(1, max(count[u], count[v]))
    _assert_support(y, aset)
    return tuple(y)


def random_order_marginals(g: Multigraph, x: Sequence, a: Iterable[int]) -> tuple[Fraction, ...]:
    """Exact marginals of greedy selection along a uniform order of A."""
    aset = _check_sampled_set(g, x, a)
    count = [0] * g.vertex_count
    for e in aset:
        u, v = g.edges[e]
        count[u] += 1
        count[v] += 1
    y = [ZERO] * g.edge_count
    for e in aset:
        u, v = g.edges[e]
        pair = sum(1 for h in g.pair_group[e] if h in aset)
        y[e] = Fraction(1, count[u] + count[v] - pair)
    _assert_support(y, aset)
    return tuple(y)


# ---------------------------------------------------------------------------
# randomized schemes


def bipartite_poisson_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    _require_bipartite(g, "the bipartite intensity scheme")
    aset = _check_sampled_set(g, x, a)
    q = tuple(intensities) if intensities is not None else draw_intensities(g, x, aset, stream)
    y = max_formula_marginals(g, q)
    _assert_support(y, aset)
    return y


def general_poisson_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    aset = _check_sampled_set(g, x, a)
    q = tuple(intensities) if intensities is not None else draw_intensities(g, x, aset, stream)
    y = sum_formula_marginals(g, q)
    _assert_support(y, aset)
    return y


def mixed_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    aset = _check_sampled_set(g, x, a)
    q = tuple(intensities) if intensities is not None else draw_intensities(g, x, aset, stream)
    y = mixed_formula_marginals(g, q)
    _assert_support(y, aset)
    return y


def isolated_edge_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream
) -> tuple[Fraction, ...]:
    """Keep each A-edge with probability 1/2; indicate the isolated survivors.

    The realization is itself a matching indicator; its marginal reading is
    over repeated draws.
    """
    aset = _check_sampled_set(g, x, a)
    kept = {e for e in sorted(aset) if stream.uniform() < 0.5}
    count = [0] * g.vertex_count
    for e in kept:
        u, v = g.edges[e]
        count[u] += 1
        count[v] += 1
    y = [ZERO] * g.edge_count
    for e in kept:
        u, v = g.edges[e]
        if count[u] == 1 and count[v] == 1:
            y[e] = Fraction(1)
    _assert_support(y, aset)
    return tuple(y)


def sample_bipartition(g: Multigraph, stream: RngStream) -> tuple[frozenset[int], frozenset[int]]:
    """Uniform vertex side split; returns (left vertices, crossing edge ids)."""
    u = stream.uniform(g.vertex_count) if g.vertex_count else []
    left = frozenset(v for v in range(g.vertex_count) if u[v] < 0.5)
    crossing = frozenset(
        e for e, (a, b) in enumerate(g.edges) if (a in left) != (b in left)
    )
    return left, crossing


def bipartition_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream
) -> tuple[Fraction, ...]:
    """Random side split, then the bipartite intensity scheme on crossing edges."""
    aset = _check_sampled_set(g, x, a)
    _, crossing = sample_bipartition(g, stream)
    q = draw_intensities(g, x, aset & crossing, stream)
    y = max_formula_marginals(g, q)
    _assert_support(y, aset)
    return y


def scaled_max_marginals(
    g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    """Max formula on the full graph scaled by 2/3, landing in the matching polytope."""
    aset = _check_sampled_set(g, x, a)
    q = tuple(intensities) if intensities is not None else draw_intensities(g, x, aset, stream)
    y = tuple(Fraction(2, 3) * val for val in max_formula_marginals(g, q))
    _assert_support(y, aset)
    return y


def conditional_marginals(
    spec: SchemeSpec, g: Multigraph, x: Sequence, a: Iterable[int], stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    """Dispatch one two-stage scheme invocation on the sampled set a."""
    if spec.merged:
        raise InputError("merged variants take no sampled set; use direct_marginals")
    kind = spec.kind
    if kind is SchemeKind.BIP_COUNT:
        return bipartite_count_marginals(g, x, a)
    if kind is SchemeKind.RANDOM_ORDER:
        return random_order_marginals(g, x, a)
    if kind is SchemeKind.BIP_POISSON:
        return bipartite_poisson_marginals(g, x, a, stream, intensities)
    if kind is SchemeKind.GEN_POISSON:
        return general_poisson_marginals(g, x, a, stream, intensities)
    if kind is SchemeKind.MIXED:
        return mixed_marginals(g, x, a, stream, intensities)
    if kind is SchemeKind.ISOLATED:
        return isolated_edge_marginals(g, x, a, stream)
    if kind is SchemeKind.BIPARTITION:
        return bipartition_marginals(g, x, a, stream)
    if kind is SchemeKind.SCALED_TWO_THIRDS:
        return scaled_max_marginals(g, x, a, stream, intensities)
    raise InputError(f"unhandled scheme kind {kind}")


def direct_marginals(
    spec: SchemeSpec, g: Multigraph, x: Sequence, stream: RngStream,
    intensities: Optional[Sequence[int]] = None,
) -> tuple[Fraction, ...]:
    """Merged invocation: plain Poisson intensities, then the kind's formula.

    Distributionally identical to drawing R(x) and running the two-stage
    scheme on it.
    """
    if spec.kind not in _MERGEABLE:
        raise InputError(f"{spec.kind.value} has no merged variant")
    q = tuple(intensities) if intensities is not None else direct_intensities(g, x, stream)
    if spec.kind is SchemeKind.BIP_POISSON:
        _require_bipartite(g, "the bipartite intensity scheme")
        return max_formula_marginals(g, q)
    if spec.kind is SchemeKind.GEN_POISSON:
        return sum_formula_marginals(g, q)
    return mixed_formula_marginals(g, q)
