"""Exact, enumeration-based ground truth for the schemes.

Expected marginals of the intensity-driven schemes are computed without any
sampling: for a fixed input set the pair (thinning, conditioned Poisson count)
of an edge collapses to one independent integer law with P(k) = pois(k; x_e)/x_e
for k >= 1, so each edge's expected marginal is a two-dimensional sum over its
own law and the convolved law of its neighborhood, grouped into the three
independent blocks "other edges at u", "other edges at v", and "parallel
copies".  Poisson tails are truncated below 1e-13 per edge, so every reported
expectation carries a certified absolute error below |E| * 1e-12.

Balancedness enumerates the independently rounded set over supp(x) with
product weights; monotonicity enumerates subset pairs.  Deterministic schemes
combined with rational x run entirely in exact rational arithmetic.

The splitting reduction (parallel siblings sharing an edge's value), the
stochastic-dominance check behind the bipartite analysis, the greedy
two-sided vertex partition, and the rare-event probability that an edge lands
in a clean 3-path component complete the desk-scale verification toolkit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import CapabilityError, InputError
from .graph import (
    Multigraph,
    bipartite_components,
    edges_between,
    support,
    two_coloring,
)
from .randomness import RngStream, keep_probability, poisson_pmf
from .schemes import (
    SchemeKind,
    SchemeSpec,
    bipartite_count_marginals,
    random_order_marginals,
)

EDGE_TAIL = 1e-13
EXPECTATION_EDGE_CAP = 12
BALANCEDNESS_EDGE_CAP = 12
MONOTONICITY_SUPPORT_CAP = 10


# ---------------------------------------------------------------------------
# truncated integer distributions


@dataclass(frozen=True)
class TruncatedDistribution:
    """Nonnegative-integer law carried as a pmf array with a declared tail."""

    probs: tuple[float, ...]
    tail: float

    def __post_init__(self):
        if any(p < 0 for p in self.probs):
            raise InputError("negative probability in truncated distribution")
        gap = abs(1.0 - sum(self.probs) - self.tail)
        if gap > 1e-9:
            raise InputError(f"declared tail inconsistent with pmf (gap {gap:.2e})")

    @staticmethod
    def from_pmf(pmf: np.ndarray) -> "TruncatedDistribution":
        arr = np.asarray(pmf, dtype=float)
        return TruncatedDistribution(tuple(arr.tolist()), max(0.0, 1.0 - float(arr.sum())))

    @staticmethod
    def poisson(lam: float, length: Optional[int] = None) -> "TruncatedDistribution":
        pmf = poisson_pmf(lam, EDGE_TAIL)
        if length is not None:
            if length + 1 < len(pmf):
                pmf = pmf[: length + 1]
            elif length + 1 > len(pmf):
                pmf = np.concatenate([pmf, np.zeros(length + 1 - len(pmf))])
        return TruncatedDistribution.from_pmf(pmf)

    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


def convolve_pmfs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)


def max_pmf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """pmf of max(A, B) for independent A, B given by pmf arrays."""
    n = max(len(a), len(b))
    fa = np.cumsum(np.concatenate([a, np.zeros(n - len(a))]))
    fb = np.cumsum(np.concatenate([b, np.zeros(n - len(b))]))
    joint = fa * fb
    return np.diff(np.concatenate([[0.0], joint]))


def ccdf(pmf: np.ndarray) -> np.ndarray:
    return pmf[::-1].cumsum()[::-1]


def stochastically_dominates(
    upper: TruncatedDistribution, lower: TruncatedDistribution, slack: float = 0.0
) -> bool:
    """True iff Pr[upper >= k] >= Pr[lower >= k] - slack for every k."""
    ua, la = upper.array(), lower.array()
    n = max(len(ua), len(la))
    uc = ccdf(np.concatenate([ua, np.zeros(n - len(ua))]))
    lc = ccdf(np.concatenate([la, np.zeros(n - len(la))]))
    tol = slack + upper.tail + lower.tail + 1e-12
    return bool(np.all(uc >= lc - tol))


def check_stochastic_dominance(
    p: TruncatedDistribution, q: TruncatedDistribution, xyz: TruncatedDistribution
) -> bool:
    """Exact check that X + max(P, Q) is dominated by max(Y+P, Z+Q), X,Y,Z iid."""
    x = xyz.array()
    left = TruncatedDistribution.from_pmf(convolve_pmfs(x, max_pmf(p.array(), q.array())))
    right = TruncatedDistribution.from_pmf(
        max_pmf(convolve_pmfs(x, p.array()), convolve_pmfs(x, q.array()))
    )
    return stochastically_dominates(right, left)


# ---------------------------------------------------------------------------
# exact expected marginals


def _zero_inflated_law(x_e: float) -> np.ndarray:
    """Law of one edge's intensity given the edge sits in the fixed input set.

    Thinning keeps it with probability (1-e^-x)/x and then draws a conditioned
    Poisson count, which collapses to P(k) = pois(k; x)/x for k >= 1.
    """
    base = poisson_pmf(x_e, EDGE_TAIL * x_e)
    law = base / x_e
    law[0] = 1.0 - keep_probability(x_e)
    return law


def _conditioned_law(x_e: float) -> np.ndarray:
    base = poisson_pmf(x_e, EDGE_TAIL * min(1.0, -math.expm1(-x_e)))
    law = base / -math.expm1(-x_e)
    law[0] = 0.0
    return law


class _ExactContext:
    """Per-(graph, x) cache of edge laws and convolved neighborhood laws."""

    def __init__(self, g: Multigraph, x: Sequence):
        self.g = g
        self.x = x
        self._laws: dict[tuple[int, str], np.ndarray] = {}
        self._sums: dict[tuple[tuple[int, ...], str], np.ndarray] = {}
        self._ratio: dict[tuple, float] = {}

    def law(self, e: int, mode: str) -> np.ndarray:
        key = (e, mode)
        if key not in self._laws:
            xe = float(self.x[e])
            if mode == "fixed":
                self._laws[key] = _zero_inflated_law(xe)
            elif mode == "cond":
                self._laws[key] = _conditioned_law(xe)
            elif mode == "merged":
                self._laws[key] = poisson_pmf(xe, EDGE_TAIL)
            else:
                raise InputError(f"unknown law mode {mode}")
        return self._laws[key]

    def sum_law(self, edges: tuple[int, ...], mode: str) -> np.ndarray:
        if not edges:
            return np.array([1.0])
        key = (edges, mode)
        if key not in self._sums:
            head = self.sum_law(edges[:-1], mode)
            self._sums[key] = convolve_pmfs(head, self.law(edges[-1], mode))
        return self._sums[key]

    def _groups(self, e: int, pool: frozenset[int]) -> tuple[tuple[int, ...], ...]:
        u, v = self.g.edges[e]
        pair = set(self.g.pair_group[e])
        t_u = tuple(sorted(h for h in self.g.incident[u] if h in pool and h not in pair))
        t_v = tuple(sorted(h for h in self.g.incident[v] if h in pool and h not in pair))
        w = tuple(sorted(h for h in pair if h in pool and h != e))
        return t_u, t_v, w

    def ratio_expectation(self, own: np.ndarray, other: np.ndarray) -> float:
        """E[K / (K + M)] for independent K ~ own, M ~ other, K = 0 giving 0."""
        k = np.arange(len(own), dtype=float)
        m = np.arange(len(other), dtype=float)
        denom = k[:, None] + m[None, :]
        denom[0, 0] = 1.0  # K = 0 contributes 0 regardless
        vals = k[:, None] / denom
        return float(own @ vals @ other)

    def edge_expectation(self, e: int, pool: frozenset[int], mode: str, formula: str) -> float:
        """Expected formula value of e when every pool edge carries a mode-law count."""
        key = (e, tuple(sorted(pool)), mode, formula)
        if key in self._ratio:
            return self._ratio[key]
        t_u, t_v, w = self._groups(e, pool)
        own = self.law(e, mode)
        if formula == "max":
            other = convolve_pmfs(
                self.sum_law(w, mode),
                max_pmf(self.sum_law(t_u, mode), self.sum_law(t_v, mode)),
            )
        elif formula == "sum":
            other = convolve_pmfs(
                self.sum_law(w, mode),
                convolve_pmfs(self.sum_law(t_u, mode), self.sum_law(t_v, mode)),
            )
        else:
            raise InputError(f"unknown formula {formula}")
        val = self.ratio_expectation(own, other)
        self._ratio[key] = val
        return val


def _deterministic_expected(spec: SchemeSpec, g: Multigraph, x, aset: frozenset[int]):
    if spec.kind is SchemeKind.BIP_COUNT:
        return bipartite_count_marginals(g, x, aset)
    if spec.kind is SchemeKind.RANDOM_ORDER:
        return random_order_marginals(g, x, aset)
    if spec.kind is SchemeKind.ISOLATED:
        y = [Fraction(0)] * g.edge_count
        for e in aset:
            others = sum(1 for h in g.adjacent_edges(e) if h in aset)
            y[e] = Fraction(1, 2 ** (1 + others))
        return tuple(y)
    raise InputError(f"{spec.kind} is not deterministic")


def _mixed_expected(
    ctx: _ExactContext, pool: frozenset[int], present: dict[int, float]
) -> dict[int, float]:
    """E[y_e] for the mixed formula: enumerate which pool edges carry a count.

    ``present[e]`` is the probability that edge e ends up with a nonzero
    intensity; conditioned on the pattern, counts are independent
    Poisson-at-least-1 laws.
    """
    g = ctx.g
    edges = sorted(pool)
    out = {e: 0.0 for e in edges}
    for mask in range(1 << len(edges)):
        pattern = frozenset(edges[i] for i in range(len(edges)) if mask >> i & 1)
        weight = 1.0
        for i, e in enumerate(edges):
            weight *= present[e] if mask >> i & 1 else 1.0 - present[e]
        if weight == 0.0 or not pattern:
            continue
        bip_edges: set[int] = set()
        for _, comp_edges, is_bip in bipartite_components(g, pattern):
            if is_bip:
                bip_edges |= comp_edges
        for e in pattern:
            formula = "max" if e in bip_edges else "sum"
            out[e] += weight * ctx.edge_expectation(e, pattern, "cond", formula)
    return out


def exact_direct_marginals(spec: SchemeSpec, g: Multigraph, x: Sequence) -> tuple[float, ...]:
    """Exact E[y] of a merged-variant invocation (plain Poisson intensities)."""
    if spec.kind not in (SchemeKind.BIP_POISSON, SchemeKind.GEN_POISSON, SchemeKind.MIXED):
        raise InputError(f"{spec.kind.value} has no merged variant")
    supp = frozenset(support(x))
    if len(supp) > EXPECTATION_EDGE_CAP:
        raise CapabilityError(f"exact expectation capped at {EXPECTATION_EDGE_CAP} edges")
    ctx = _ExactContext(g, x)
    out = [0.0] * g.edge_count
    if spec.kind is SchemeKind.MIXED:
        present = {e: -math.expm1(-float(x[e])) for e in supp}
        vals = _mixed_expected(ctx, supp, present)
        for e, v in vals.items():
            out[e] = v
        return tuple(out)
    if spec.kind is SchemeKind.BIP_POISSON and two_coloring(g) is None:
        raise CapabilityError("the bipartite intensity scheme requires a bipartite graph")
    formula = "max" if spec.kind is SchemeKind.BIP_POISSON else "sum"
    for e in supp:
        out[e] = ctx.edge_expectation(e, supp, "merged", formula)
    return tuple(out)


def exact_expected_marginals(
    spec: SchemeSpec, g: Multigraph, x: Sequence, a: Iterable[int],
    _ctx: Optional[_ExactContext] = None,
) -> tuple:
    """Exact E[y^A] of one scheme invocation on the fixed set A.

    Deterministic schemes return Fractions; intensity-driven schemes return
    floats with a certified truncation error below |E| * 1e-12.
    """
    aset = frozenset(a)
    for e in aset:
        g.check_edge_id(e)
    if not aset <= support(x):
        raise InputError("fixed set contains edges outside supp(x)")
    if len(aset) > EXPECTATION_EDGE_CAP:
        raise CapabilityError(f"exact expectation capped at {EXPECTATION_EDGE_CAP} edges")
    if spec.merged:
        if aset != frozenset(support(x)):
            raise InputError("merged variants have no fixed-set marginals")
        return exact_direct_marginals(spec, g, x)

    kind = spec.kind
    if kind in (SchemeKind.BIP_COUNT, SchemeKind.RANDOM_ORDER, SchemeKind.ISOLATED):
        return _deterministic_expected(spec, g, x, aset)

    ctx = _ctx if _ctx is not None else _ExactContext(g, x)
    out = [0.0] * g.edge_count
    if kind is SchemeKind.BIP_POISSON:
        if two_coloring(g) is None:
            raise CapabilityError("the bipartite intensity scheme requires a bipartite graph")
        for e in aset:
            out[e] = ctx.edge_expectation(e, aset, "fixed", "max")
    elif kind is SchemeKind.GEN_POISSON:
        for e in aset:
            out[e] = ctx.edge_expectation(e, aset, "fixed", "sum")
    elif kind is SchemeKind.SCALED_TWO_THIRDS:
        for e in aset:
            out[e] = 2.0 / 3.0 * ctx.edge_expectation(e, aset, "fixed", "max")
    elif kind is SchemeKind.MIXED:
        present = {e: keep_probability(x[e]) for e in aset}
        for e, v in _mixed_expected(ctx, aset, present).items():
            out[e] = v
    elif kind is SchemeKind.BIPARTITION:
        if g.vertex_count > 16:
            raise CapabilityError("side-split enumeration capped at 16 vertices")
        half = 1 << (g.vertex_count - 1) if g.vertex_count else 1
        for side_mask in range(half):  # vertex 0 pinned to one side

            def side(w: int) -> int:
                return 0 if w == 0 else side_mask >> (w - 1) & 1

            crossing = frozenset(
                e for e in aset if side(g.edges[e][0]) != side(g.edges[e][1])
            )
            for e in crossing:
                out[e] += ctx.edge_expectation(e, crossing, "fixed", "max") / half
    else:
        raise InputError(f"unhandled scheme kind {kind}")
    return tuple(out)


# ---------------------------------------------------------------------------
# balancedness


@dataclass(frozen=True)
class BalancednessReport:
    """Per-edge retention-over-x ratios with their minimum over the support."""

    scheme: str
    edges: tuple[int, ...]
    ratios: tuple
    mode: str  # "exact" | "monte-carlo"
    ci_half_widths: Optional[tuple] = None
    trials: Optional[int] = None

    @property
    def minimum(self):
        return min(self.ratios)

    @property
    def min_edge(self) -> int:
        i = min(range(len(self.edges)), key=lambda j: self.ratios[j])
        return self.edges[i]

    def ratio_of(self, e: int):
        return self.ratios[self.edges.index(e)]

    def to_records(self) -> list[dict]:
        recs = []
        for i, e in enumerate(self.edges):
            rec = {"edge": e, "ratio": float(self.ratios[i])}
            if self.ci_half_widths is not None:
                rec["ci99"] = float(self.ci_half_widths[i])
            recs.append(rec)
        return recs


def _rounding_weight(x, subset: frozenset[int], supp: Sequence[int], exact: bool):
    one = Fraction(1) if exact else 1.0
    w = one
    for e in supp:
        w = w * (x[e] if e in subset else (1 - x[e]))
    return w


def exact_balancedness(spec: SchemeSpec, g: Multigraph, x: Sequence) -> BalancednessReport:
    """Per-edge E[y over the rounded set] / x_e by full enumeration.

    Deterministic schemes with rational x stay in exact rational arithmetic;
    intensity-driven schemes are float with certified truncation error.
    """
    supp = sorted(support(x))
    if len(supp) > BALANCEDNESS_EDGE_CAP:
        raise CapabilityError(f"exact balancedness capped at {BALANCEDNESS_EDGE_CAP} edges")
    if not supp:
        raise InputError("x has empty support")

    if spec.merged:
        vals = exact_direct_marginals(spec, g, x)
        ratios = tuple(float(vals[e]) / float(x[e]) for e in supp)
        return BalancednessReport(spec.cli_name, tuple(supp), ratios, "exact")

    deterministic = spec.kind in (
        SchemeKind.BIP_COUNT, SchemeKind.RANDOM_ORDER, SchemeKind.ISOLATED
    )
    exact_mode = deterministic and all(
        isinstance(x[e], (Fraction, int)) for e in supp
    )
    ctx = None if deterministic else _ExactContext(g, x)
    zero = Fraction(0) if exact_mode else 0.0
    acc = {e: zero for e in supp}
    for mask in range(1 << len(supp)):
        subset = frozenset(supp[i] for i in range(len(supp)) if mask >> i & 1)
        if not subset:
            continue
        w = _rounding_weight(x, subset, supp, exact_mode)
        if w == 0:
            continue
        vals = exact_expected_marginals(spec, g, x, subset, _ctx=ctx)
        for e in subset:
            acc[e] = acc[e] + w * vals[e]
    ratios = tuple(acc[e] / x[e] if exact_mode else float(acc[e]) / float(x[e]) for e in supp)
    return BalancednessReport(spec.cli_name, tuple(supp), ratios, "exact")


# ---------------------------------------------------------------------------
# monotonicity


@dataclass(frozen=True)
class MonotonicityResult:
    passed: bool
    pairs_checked: int
    witness: Optional[tuple] = None  # (edge, set A, set B, value on A, value on B)


MarginalFn = Callable[[frozenset[int]], Sequence]


def verify_monotonicity(
    scheme: Union[SchemeSpec, MarginalFn],
    g: Multigraph,
    x: Sequence,
    mode: str = "exhaustive",
    tol: float = 1e-9,
    sample_pairs: int = 200,
    stream: Optional[RngStream] = None,
) -> MonotonicityResult:
    """Check E[y^A_e] >= E[y^B_e] for e in A, A inside B inside supp(x).

    ``scheme`` may be a SchemeSpec or any callable mapping a frozen edge set to
    an expected marginal vector (used to exhibit counterexamples).
    """
    supp = sorted(support(x))
    if mode == "exhaustive" and len(supp) > MONOTONICITY_SUPPORT_CAP:
        raise CapabilityError(
            f"exhaustive monotonicity capped at support {MONOTONICITY_SUPPORT_CAP}"
        )
    ctx = _ExactContext(g, x)
    if callable(scheme) and not isinstance(scheme, SchemeSpec):
        fn: MarginalFn = scheme
    else:
        spec: SchemeSpec = scheme

        def fn(subset: frozenset[int]):
            return exact_expected_marginals(spec, g, x, subset, _ctx=ctx)

    idx = {e: i for i, e in enumerate(supp)}

    def mask_of(subset):
        m = 0
        for e in subset:
            m |= 1 << idx[e]
        return m

    table: dict[int, Sequence] = {}

    def values(mask: int):
        if mask not in table:
            subset = frozenset(supp[i] for i in range(len(supp)) if mask >> i & 1)
            table[mask] = fn(subset)
        return table[mask]

    checked = 0

    def compare(amask: int, bmask: int) -> Optional[tuple]:
        va, vb = values(amask), values(bmask)
        for i in range(len(supp)):
            if amask >> i & 1:
                e = supp[i]
                if va[e] + tol < vb[e]:
                    a_set = frozenset(supp[j] for j in range(len(supp)) if amask >> j & 1)
                    b_set = frozenset(supp[j] for j in range(len(supp)) if bmask >> j & 1)
                    return (e, a_set, b_set, va[e], vb[e])
        return None

    if mode == "exhaustive":
        full = (1 << len(supp)) - 1
        for bmask in range(1, full + 1):
            amask = bmask
            while amask:
                witness = compare(amask, bmask)
                checked += 1
                if witness is not None:
                    return MonotonicityResult(False, checked, witness)
                amask = (amask - 1) & bmask
        return MonotonicityResult(True, checked)

    if mode != "sampled":
        raise InputError(f"unknown monotonicity mode {mode}")
    if stream is None:
        raise InputError("sampled monotonicity needs a random stream")
    full = (1 << len(supp)) - 1
    for _ in range(sample_pairs):
        bmask = int(stream.uniform() * (full + 1)) & full
        amask = int(stream.uniform() * (full + 1)) & bmask
        if not amask:
            continue
        witness = compare(amask, bmask)
        checked += 1
        if witness is not None:
            return MonotonicityResult(False, checked, witness)
    return MonotonicityResult(True, checked)


# ---------------------------------------------------------------------------
# splitting into siblings


def split_edge(
    g: Multigraph, x: Sequence, e: int, k: int
) -> tuple[Multigraph, tuple, tuple[int, ...]]:
    """Add k-1 parallel copies of e and spread x_e uniformly over the k siblings."""
    g.check_edge_id(e)
    if k < 1:
        raise InputError("sibling count must be at least 1")
    u, v = g.edges[e]
    new_edges = g.edges + tuple((u, v) for _ in range(k - 1))
    g2 = Multigraph(g.vertex_count, new_edges)
    share = (x[e] if isinstance(x[e], Fraction) else Fraction(x[e])) / k
    if not isinstance(x[e], (Fraction, int)):
        share = float(x[e]) / k
    x2 = list(x) + [share] * (k - 1)
    x2[e] = share
    siblings = (e,) + tuple(range(g.edge_count, g.edge_count + k - 1))
    return g2, tuple(x2), siblings


def sibling_distribution(x_e, k: int) -> dict[frozenset[int], Union[Fraction, float]]:
    """Law of the sibling set replacing a present edge, empty set included.

    Nonempty subsets J of {0..k-1} carry mass (1/x)(x/k)^|J|(1-x/k)^(k-|J|);
    the empty set takes the remainder, which is exactly the calibration making
    presence-of-e composed with this lift an independent Bernoulli(x/k) per
    sibling.  Exact when x_e is rational.
    """
    if k < 1:
        raise InputError("sibling count must be at least 1")
    if x_e == 0:
        raise InputError("sibling lift undefined at x_e = 0")
    exact = isinstance(x_e, (Fraction, int))
    x = Fraction(x_e) if exact else float(x_e)
    per = x / k
    out: dict[frozenset[int], Union[Fraction, float]] = {}
    total = Fraction(0) if exact else 0.0
    for mask in range(1, 1 << k):
        j = mask.bit_count()
        mass = (per ** j) * ((1 - per) ** (k - j)) / x
        out[frozenset(i for i in range(k) if mask >> i & 1)] = mass
        total += mass
    out[frozenset()] = 1 - total
    if out[frozenset()] < 0:
        raise InputError("sibling law infeasible; x_e must lie in (0, 1]")
    return out


def sibling_lift(
    a: Iterable[int], e: int, siblings: Sequence[int], x_e, stream: RngStream
) -> frozenset[int]:
    """Replace e in the set a by a random subset of its siblings.

    Sampling is by inversion on the sibling-count law followed by a uniform
    subset of that size, so it is rejection-free.
    """
    aset = set(a)
    if e not in aset:
        raise InputError("sibling lift needs the split edge present in the set")
    if x_e == 0:
        raise InputError("sibling lift undefined at x_e = 0")
    k = len(siblings)
    x = float(x_e)
    per = x / k
    # size law: empty takes the calibration remainder, size j >= 1 is
    # binomial(k, x/k) scaled by 1/x.
    masses = [0.0] * (k + 1)
    binom = [math.comb(k, j) * per ** j * (1 - per) ** (k - j) for j in range(k + 1)]
    for j in range(1, k + 1):
        masses[j] = binom[j] / x
    masses[0] = max(0.0, 1.0 - sum(masses[1:]))
    u = stream.uniform()
    acc = 0.0
    size = k
    for j, mass in enumerate(masses):
        acc += mass
        if u < acc:
            size = j
            break
    chosen: list[int] = []
    pool = list(range(k))
    for _ in range(size):
        i = int(stream.uniform() * len(pool))
        i = min(i, len(pool) - 1)
        chosen.append(pool.pop(i))
    aset.discard(e)
    aset.update(siblings[i] for i in chosen)
    return frozenset(aset)


# ---------------------------------------------------------------------------
# two-sided greedy partition and the clean-path event


def _pair_load(g: Multigraph, x, w: int, endpoint: int) -> float:
    return float(sum(x[h] for h in g.incident[w] if endpoint in g.edges[h]))


def greedy_partition(
    g: Multigraph, x: Sequence, e: int
) -> tuple[frozenset[int], frozenset[int]]:
    """Split V minus {u, v} so both sides see x-load at least 0.33 from u resp. v.

    Vertices are taken in decreasing order of their combined x-load towards
    {u, v} and assigned to the endpoint they load more; once one side reaches
    0.33, everything remaining goes to the other side.  Requires the loads
    x(delta(u) minus parallels) and x(delta(v) minus parallels) to be at least
    0.99 and the parallel load between u and v to be at most 0.01.
    """
    g.check_edge_id(e)
    u, v = g.edges[e]
    e_uv = edges_between(g, u, v)
    load_u = float(sum(x[h] for h in g.incident[u] if h not in e_uv))
    load_v = float(sum(x[h] for h in g.incident[v] if h not in e_uv))
    load_uv = float(sum(x[h] for h in e_uv))
    eps = 1e-9
    if load_u < 0.99 - eps:
        raise InputError(f"hypothesis x(delta(u) \\ E_uv) >= 0.99 failed ({load_u:.4f})")
    if load_v < 0.99 - eps:
        raise InputError(f"hypothesis x(delta(v) \\ E_uv) >= 0.99 failed ({load_v:.4f})")
    if load_uv > 0.01 + eps:
        raise InputError(f"hypothesis x(E_uv) <= 0.01 failed ({load_uv:.4f})")

    others = [w for w in range(g.vertex_count) if w not in (u, v)]
    others.sort(key=lambda w: (-(_pair_load(g, x, w, u) + _pair_load(g, x, w, v)), w))
    side_u: list[int] = []
    side_v: list[int] = []
    got_u = got_v = 0.0
    rest_to = None
    for w in others:
        if rest_to is not None:
            (side_u if rest_to == "u" else side_v).append(w)
            continue
        au = _pair_load(g, x, w, u)
        av = _pair_load(g, x, w, v)
        if au >= av:
            side_u.append(w)
            got_u += au
        else:
            side_v.append(w)
            got_v += av
        if got_u >= 0.33:
            rest_to = "v"
        elif got_v >= 0.33:
            rest_to = "u"
    final_u = float(sum(x[h] for w in side_u for h in g.incident[u] if w in g.edges[h]))
    final_v = float(sum(x[h] for w in side_v for h in g.incident[v] if w in g.edges[h]))
    assert final_u >= 0.33 - 1e-12 and final_v >= 0.33 - 1e-12, "greedy split missed 0.33"
    return frozenset(side_u), frozenset(side_v)


def path_event_floor(g: Multigraph, x: Sequence, e: int) -> float:
    """Analytic product lower bound on the clean-3-path event probability."""
    u, v = g.edges[e]
    e_uv = edges_between(g, u, v)
    side_u, side_v = greedy_partition(g, x, e)
    x_u_side = float(sum(x[h] for w in side_u for h in g.incident[u] if w in g.edges[h]))
    x_v_side = float(sum(x[h] for w in side_v for h in g.incident[v] if w in g.edges[h]))
    union_load = (
        float(sum(x[h] for h in g.incident[u]))
        + float(sum(x[h] for h in g.incident[v]))
        - float(sum(x[h] for h in e_uv))
    )
    return x_u_side * x_v_side * math.exp(-(union_load - float(x[e]))) * math.exp(-2.0)


@dataclass(frozen=True)
class PathEventEstimate:
    clean_path_probability: float   # event: component of e is a 3-path, counts all 1
    witnessed_probability: float    # stricter partition-respecting event
    trials: int


def path_event_probability(
    g: Multigraph, x: Sequence, e: int, trials: int, stream: RngStream,
    chunk: int = 1 << 15,
) -> PathEventEstimate:
    """Monte Carlo frequency, conditioned on e being rounded in, of e landing in
    a clean 3-path component (all intensity counts equal to 1).

    Returns both the path-component event C and the stricter partition-
    respecting event D (one flank into each greedy side), whose frequency is a
    certified lower bound on C's.
    """
    side_u, side_v = greedy_partition(g, x, e)
    u, v = g.edges[e]
    e_uv = sorted(edges_between(g, u, v) - {e})
    flank_u = sorted(h for h in g.incident[u] if h not in edges_between(g, u, v))
    flank_v = sorted(h for h in g.incident[v] if h not in edges_between(g, u, v))
    in_u_side = [h for h in flank_u if (set(g.edges[h]) - {u}).issubset(side_u)]
    in_v_side = [h for h in flank_v if (set(g.edges[h]) - {v}).issubset(side_v)]
    cross = sorted(set(flank_u + flank_v) - set(in_u_side) - set(in_v_side))

    def far_others(h: int, near: int) -> list[int]:
        far = g.edges[h][0] if g.edges[h][1] == near else g.edges[h][1]
        return [t for t in g.incident[far] if t != h]

    m = g.edge_count
    tables = []
    for h in range(m):
        if h == e:
            tables.append(np.cumsum(_zero_inflated_law(float(x[e]))))
        elif x[h] > 0:
            tables.append(np.cumsum(poisson_pmf(float(x[h]), EDGE_TAIL)))
        else:
            tables.append(np.array([1.0]))

    c_hits = 0
    d_hits = 0
    done = 0
    block = 0
    while done < trials:
        size = min(chunk, trials - done)
        sub = stream.derive(block)
        q = np.empty((size, m), dtype=np.int64)
        for h in range(m):
            q[:, h] = np.searchsorted(tables[h], sub.uniform(size), side="right")
        base = q[:, e] == 1
        if e_uv:
            base &= q[:, e_uv].sum(axis=1) == 0

        def one_clean(flanks: list[int], near: int) -> np.ndarray:
            if not flanks:
                return np.zeros(size, dtype=bool)
            total = q[:, flanks].sum(axis=1) == 1
            ok = np.zeros(size, dtype=bool)
            for h in flanks:
                far = far_others(h, near)
                clean = q[:, far].sum(axis=1) == 0 if far else np.ones(size, dtype=bool)
                ok |= (q[:, h] == 1) & total & clean
            return ok

        c_mask = base & one_clean(flank_u, u) & one_clean(flank_v, v)
        d_mask = base & one_clean(in_u_side, u) & one_clean(in_v_side, v)
        if cross:
            d_mask &= q[:, cross].sum(axis=1) == 0
        c_hits += int(c_mask.sum())
        d_hits += int(d_mask.sum())
        done += size
        block += 1
    return PathEventEstimate(c_hits / trials, d_hits / trials, trials)
