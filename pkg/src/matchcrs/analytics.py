"""Analytic constants, instance generators, and Monte Carlo balancedness.

The two target constants are

    bipartite_constant(b) = E[ 1 / (1 + max(P1, P2)) ],  P1, P2 iid Poisson(b)
    general_constant(b)   = E[ 1 / (1 + Poisson(2b)) ] = (1 - e^{-2b}) / (2b)

evaluated by truncated series with absolute error below 1e-10.

Monte Carlo balancedness estimates the per-edge ratio E[y_e over the rounded
set]/x_e in its conditional form Pr-weighted at e present: two-stage schemes
force e into the rounded set and redraw only e's own intensity from its
conditioned law, merged schemes use the Poisson size-bias identity
E[q f(q)] = lambda E[f(q+1)], which turns the ratio into E[1/(1 + denominator)]
with the denominator read off the shared draws.  Both forms have the exact
same expectation as the plain ratio but keep every sample inside [0, 1], so
tight tolerances are reachable at 1e6 trials, including on edges with tiny
x_e.

Everything is vectorized in fixed-size trial blocks with one derived stream
per block, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import CapabilityError, InputError
from .graph import (
    Multigraph,
    in_degree_polytope,
    load_instance,
    support,
    two_coloring,
)
from .oracle import BalancednessReport
from .randomness import (
    RngStream,
    binomial_pmf,
    keep_probability,
    poisson_pmf,
)
from .schemes import SchemeKind, SchemeSpec

SERIES_TAIL = 1e-13
CI99 = 2.5758293035489004  # two-sided 99% normal quantile


# ---------------------------------------------------------------------------
# analytic constants


def bipartite_constant(b: float) -> float:
    """E[1/(1 + max of two independent Poisson(b))], truncated series."""
    if not 0 <= b <= 1:
        raise InputError(f"parameter {b} outside [0, 1]")
    if b == 0:
        return 1.0
    pmf = poisson_pmf(b, SERIES_TAIL)
    cdf = np.cumsum(pmf)
    prev = 0.0
    total = 0.0
    for k in range(len(pmf)):
        fk2 = cdf[k] ** 2
        total += (fk2 - prev) / (1 + k)
        prev = fk2
    return float(total)


def general_constant(b: float) -> float:
    """(1 - e^{-2b}) / (2b), the closed form of E[1/(1 + Poisson(2b))]."""
    if not 0 <= b <= 1:
        raise InputError(f"parameter {b} outside [0, 1]")
    if b == 0:
        return 1.0
    return float(-math.expm1(-2.0 * b) / (2.0 * b))


def general_constant_series(b: float) -> float:
    """E[1/(1 + Poisson(2b))] summed directly; must match the closed form."""
    if b == 0:
        return 1.0
    pmf = poisson_pmf(2.0 * b, SERIES_TAIL)
    return float(sum(p / (1 + k) for k, p in enumerate(pmf)))


# Short aliases matching how the constants are usually written.
beta = bipartite_constant
gamma = general_constant


def scheme_balancedness_bound(spec: SchemeSpec, b: float = 1.0) -> float:
    """Proven balancedness lower bound of one scheme kind at parameter b."""
    kind = spec.kind
    if kind is SchemeKind.BIP_POISSON:
        return bipartite_constant(b)
    if kind in (SchemeKind.GEN_POISSON, SchemeKind.MIXED):
        return general_constant(b)
    if kind is SchemeKind.BIP_COUNT:
        return 0.4481 if b >= 1.0 else 1.0 / (1.0 + 2.0 * b)
    if kind is SchemeKind.RANDOM_ORDER:
        return 1.0 / (1.0 + 2.0 * b)
    if kind is SchemeKind.ISOLATED:
        return (1.0 - b / 2.0) ** 2 / 2.0
    if kind is SchemeKind.BIPARTITION:
        return bipartite_constant(b) / 2.0
    if kind is SchemeKind.SCALED_TWO_THIRDS:
        return 2.0 / 3.0 * bipartite_constant(b)
    raise InputError(f"no bound recorded for {kind}")


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class CompleteBipartite:
    """K_{n,n} with x = b/n on every edge; every vertex load is exactly b."""

    n: int
    b: float = 1.0


@dataclass(frozen=True)
class PendantStar:
    """Edge e = {u, v} with x_e = eps, one heavy pendant at u, k light at v."""

    eps: Union[float, Fraction]
    k: int


@dataclass(frozen=True)
class ThreePath:
    """Path on 4 vertices with x = (1-eps, eps, 1-eps)."""

    eps: Union[float, Fraction]


@dataclass(frozen=True)
class RandomBipartite:
    n: int
    density: float
    b: float
    seed: int


@dataclass(frozen=True)
class RandomGeneral:
    n: int
    density: float
    b: float
    seed: int


@dataclass(frozen=True)
class FromFile:
    path: str


InstanceSpec = Union[CompleteBipartite, PendantStar, ThreePath, RandomBipartite,
                     RandomGeneral, FromFile]


def describe_instance(spec: InstanceSpec) -> str:
    if isinstance(spec, CompleteBipartite):
        return f"knn:{spec.n},{spec.b}"
    if isinstance(spec, PendantStar):
        return f"fig5:{spec.eps},{spec.k}"
    if isinstance(spec, ThreePath):
        return f"path3:{spec.eps}"
    if isinstance(spec, RandomBipartite):
        return f"rbip:{spec.n},{spec.density},{spec.b},{spec.seed}"
    if isinstance(spec, RandomGeneral):
        return f"rgen:{spec.n},{spec.density},{spec.b},{spec.seed}"
    return f"file:{spec.path}"


def _num(token: str):
    token = token.strip()
    if "/" in token:
        return Fraction(token)
    if token.lstrip("+-").isdigit():
        return int(token)
    return float(token)


def parse_instance(token: str) -> InstanceSpec:
    """Parse the CLI mini-grammar kind:params, e.g. knn:20,1 or path3:0.001."""
    head, _, rest = token.partition(":")
    head = head.strip().lower()
    parts = [p for p in rest.split(",") if p.strip()] if rest else []
    try:
        if head == "knn":
            return CompleteBipartite(int(parts[0]), float(_num(parts[1])) if len(parts) > 1 else 1.0)
        if head == "fig5":
            return PendantStar(_num(parts[0]), int(parts[1]))
        if head == "path3":
            return ThreePath(_num(parts[0]))
        if head == "rbip":
            return RandomBipartite(int(parts[0]), float(_num(parts[1])), float(_num(parts[2])),
                                   int(parts[3]) if len(parts) > 3 else 0)
        if head == "rgen":
            return RandomGeneral(int(parts[0]), float(_num(parts[1])), float(_num(parts[2])),
                                 int(parts[3]) if len(parts) > 3 else 0)
        if head == "file":
            return FromFile(rest)
    except (IndexError, ValueError) as exc:
        raise InputError(f"bad instance token {token!r}: {exc}") from exc
    raise InputError(f"unknown instance kind {head!r} in {token!r}")


def generate_instance(spec: InstanceSpec) -> tuple[Multigraph, tuple]:
    """Build the graph and fractional point described by an instance spec."""
    if isinstance(spec, CompleteBipartite):
        n, b = spec.n, spec.b
        if n < 1 or not 0 <= b <= 1:
            raise InputError(f"bad complete-bipartite parameters ({n}, {b})")
        edges = [(i, n + j) for i in range(n) for j in range(n)]
        return Multigraph.from_edges(2 * n, edges), tuple(b / n for _ in edges)
    if isinstance(spec, PendantStar):
        eps, k = spec.eps, spec.k
        if not (0 < eps < 1) or k < 1:
            raise InputError(f"bad pendant-star parameters ({eps}, {k})")
        one = Fraction(1) if isinstance(eps, (Fraction, int)) else 1.0
        edges = [(0, 1), (0, 2)] + [(1, 3 + i) for i in range(k)]
        x = [eps, one - eps] + [(one - eps) / k] * k
        return Multigraph.from_edges(3 + k, edges), tuple(x)
    if isinstance(spec, ThreePath):
        eps = spec.eps
        if not 0 < eps < 1:
            raise InputError(f"bad path parameter {eps}")
        one = Fraction(1) if isinstance(eps, (Fraction, int)) else 1.0
        g = Multigraph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        return g, (one - eps, eps, one - eps)
    if isinstance(spec, RandomBipartite):
        stream = RngStream(spec.seed, 771)
        edges = []
        for i in range(spec.n):
            for j in range(spec.n):
                if stream.uniform() < spec.density:
                    edges.append((i, spec.n + j))
        if not edges:
            edges.append((0, spec.n))
        g = Multigraph.from_edges(2 * spec.n, edges)
        raw = [0.05 + 0.95 * stream.uniform() for _ in edges]
        loads = [sum(raw[e] for e in g.incident[v]) for v in range(g.vertex_count)]
        scale = spec.b / max(max(loads), 1e-12)
        return g, tuple(min(1.0, r * scale) for r in raw)
    if isinstance(spec, RandomGeneral):
        if spec.n > 16:
            raise CapabilityError("random general instances capped at 16 vertices")
        stream = RngStream(spec.seed, 772)
        edges = []
        for i in range(spec.n):
            for j in range(i + 1, spec.n):
                if stream.uniform() < spec.density:
                    edges.append((i, j))
        if not edges:
            edges.append((0, 1 % max(spec.n, 2)))
        g = Multigraph.from_edges(spec.n, edges)
        raw = [0.05 + 0.95 * stream.uniform() for _ in edges]
        scale = spec.b / _matching_polytope_ratio(g, raw)
        return g, tuple(min(1.0, r * scale) for r in raw)
    if isinstance(spec, FromFile):
        g, x, _ = load_instance(spec.path)
        return g, x
    raise InputError(f"unknown instance spec {spec!r}")


def _matching_polytope_ratio(g: Multigraph, x: Sequence[float]) -> float:
    """Largest constraint ratio of x against the unit matching polytope."""
    worst = 1e-12
    for v in range(g.vertex_count):
        worst = max(worst, sum(x[e] for e in g.incident[v]))
    masks = [(1 << u) | (1 << v) for (u, v) in g.edges]
    for s in range(1, 1 << g.vertex_count):
        size = s.bit_count()
        if size < 3 or size % 2 == 0:
            continue
        inside = sum(x[e] for e in range(g.edge_count) if masks[e] & s == masks[e])
        worst = max(worst, inside / ((size - 1) / 2))
    return worst


def double_star_instance(
    pendants: int = 10, pendant_x: float = 0.099, middle_x: float = 0.01,
    cross_x: float = 0.0,
) -> tuple[Multigraph, tuple, int]:
    """The canonical rare-event instance: edge e = {u, v} with tiny x, plus
    ``pendants`` pendant edges on each side carrying almost all the load.

    With cross_x > 0 each u-pendant is also joined to the matching v-pendant,
    which makes the far-endpoint condition of the clean-path event nontrivial.
    Returns (graph, x, id of the middle edge).
    """
    edges = [(0, 1)]
    x = [middle_x]
    for i in range(pendants):
        edges.append((0, 2 + i))
        x.append(pendant_x)
    for i in range(pendants):
        edges.append((1, 2 + pendants + i))
        x.append(pendant_x)
    if cross_x > 0:
        for i in range(pendants):
            edges.append((2 + i, 2 + pendants + i))
            x.append(cross_x)
    return Multigraph.from_edges(2 + 2 * pendants, edges), tuple(x), 0


# ---------------------------------------------------------------------------
# vectorized Monte Carlo kernels


@lru_cache(maxsize=128)
def _edge_arrays(g: Multigraph):
    m = g.edge_count
    us = np.array([u for (u, _) in g.edges], dtype=np.int64)
    vs = np.array([v for (_, v) in g.edges], dtype=np.int64)
    rows = np.repeat(np.arange(m), 2)
    cols = np.empty(2 * m, dtype=np.int64)
    cols[0::2] = us
    cols[1::2] = vs
    inc = sp.csr_matrix(
        (np.ones(2 * m), (rows, cols)), shape=(m, max(g.vertex_count, 1))
    )
    group_of: dict[tuple[int, int], int] = {}
    gid = np.empty(m, dtype=np.int64)
    for e, (u, v) in enumerate(g.edges):
        key = (min(u, v), max(u, v))
        gid[e] = group_of.setdefault(key, len(group_of))
    grp = sp.csr_matrix(
        (np.ones(m), (np.arange(m), gid)), shape=(m, max(len(group_of), 1))
    )
    return us, vs, inc, grp, gid


@lru_cache(maxsize=32)
def _mixed_bipartite_table(g: Multigraph) -> np.ndarray:
    """table[pattern, e]: is e's component in (V, pattern) 2-colorable."""
    from .graph import bipartite_components

    m = g.edge_count
    if m > 16:
        raise CapabilityError("mixed Monte Carlo needs |E| <= 16 on non-bipartite graphs")
    table = np.zeros((1 << m, m), dtype=bool)
    for pattern in range(1 << m):
        edges = [e for e in range(m) if pattern >> e & 1]
        if not edges:
            continue
        for _, comp_edges, is_bip in bipartite_components(g, edges):
            if is_bip:
                for e in comp_edges:
                    table[pattern, e] = True
    return table


def _grouped_tables(xs: np.ndarray, law: str) -> list[tuple[np.ndarray, np.ndarray]]:
    """(edge index array, cdf) per distinct rate, for vectorized inversion."""
    out = []
    for val in sorted(set(xs.tolist())):
        idx = np.nonzero(xs == val)[0]
        if val == 0:
            out.append((idx, np.array([1.0])))
            continue
        if law == "poisson":
            pmf = poisson_pmf(val, SERIES_TAIL)
        elif law == "zero-inflated":
            pmf = poisson_pmf(val, SERIES_TAIL * val) / val
            pmf[0] = 1.0 - keep_probability(val)
        else:
            raise InputError(f"unknown law {law}")
        out.append((idx, np.cumsum(pmf)))
    return out


def _sample_counts(tables, stream: RngStream, size: int, m: int) -> np.ndarray:
    q = np.zeros((size, m), dtype=np.int64)
    for idx, cdf in tables:
        if len(cdf) == 1:
            continue
        u = stream.uniform((size, len(idx)))
        q[:, idx] = np.searchsorted(cdf, u, side="right")
    return q


def _make_kernel(spec: SchemeSpec, g: Multigraph, x: Sequence):
    """Build kernel(stream, size) -> (size, |supp|) conditional ratio samples."""
    us, vs, inc, grp, gid = _edge_arrays(g)
    m = g.edge_count
    xf = np.array([float(v) for v in x])
    supp = np.array(sorted(support(x)), dtype=np.int64)
    if len(supp) == 0:
        raise InputError("x has empty support")
    bipartite = two_coloring(g) is not None
    kind = spec.kind
    if kind in (SchemeKind.BIP_COUNT, SchemeKind.BIP_POISSON) and not bipartite:
        raise CapabilityError(f"{kind.value} requires a bipartite graph")

    pois_tables = _grouped_tables(xf, "poisson")
    own_tables = _grouped_tables(xf, "zero-inflated")
    pow2 = (1 << np.arange(m, dtype=np.int64)) if m <= 62 else None

    def vertex_sums(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = q @ inc
        return s[:, us], s[:, vs]

    def pair_sums(q: np.ndarray) -> np.ndarray:
        return (q @ grp)[:, gid]

    def count_kernel(stream, size):
        a = (stream.uniform((size, m)) < xf[None, :]).astype(np.float64)
        cnt = a @ inc
        cu = cnt[:, us] - a + 1.0
        cv = cnt[:, vs] - a + 1.0
        if kind is SchemeKind.BIP_COUNT:
            vals = 1.0 / np.maximum(cu, cv)
        else:
            gcnt = (a @ grp)[:, gid]
            vals = 1.0 / (cnt[:, us] + cnt[:, vs] - gcnt - a + 1.0)
        return vals[:, supp]

    def isolated_kernel(stream, size):
        a = stream.uniform((size, m)) < xf[None, :]
        coins = stream.uniform((size, m)) < 0.5
        kept = (a & coins).astype(np.float64)
        kcnt = kept @ inc
        kpair = (kept @ grp)[:, gid]
        others = kcnt[:, us] + kcnt[:, vs] - kpair - kept
        vals = (coins & (others == 0)).astype(np.float64)
        return vals[:, supp]

    def two_stage_kernel(stream, size):
        q = _sample_counts(pois_tables, stream, size, m).astype(np.float64)
        q_own = _sample_counts(own_tables, stream, size, m).astype(np.float64)
        if kind is SchemeKind.BIPARTITION:
            sides = stream.uniform((size, g.vertex_count)) < 0.5
            cross = sides[:, us] != sides[:, vs]
            q = q * cross
            q_own = q_own * cross
        su, sv = vertex_sums(q)
        if kind in (SchemeKind.BIP_POISSON, SchemeKind.SCALED_TWO_THIRDS,
                    SchemeKind.BIPARTITION) or (kind is SchemeKind.MIXED and bipartite):
            denom = np.maximum(su - q, sv - q) + q_own
            vals = np.divide(q_own, denom, out=np.zeros_like(denom), where=q_own > 0)
            if kind is SchemeKind.SCALED_TWO_THIRDS:
                vals = vals * (2.0 / 3.0)
            return vals[:, supp]
        if kind is SchemeKind.GEN_POISSON:
            d = su + sv - pair_sums(q)
            denom = d - q + q_own
            vals = np.divide(q_own, denom, out=np.zeros_like(denom), where=q_own > 0)
            return vals[:, supp]
        # mixed on a non-bipartite graph: pattern-table lookup per edge
        table = _mixed_bipartite_table(g)
        p0 = (q > 0).astype(np.int64) @ pow2
        d = su + sv - pair_sums(q)
        denom_max = np.maximum(su - q, sv - q) + q_own
        denom_sum = d - q + q_own
        vals = np.zeros((size, m))
        for e in range(m):
            if xf[e] == 0:
                continue
            idx = (p0 & ~np.int64(1 << e)) | np.int64(1 << e)
            use_max = table[idx, e]
            denom = np.where(use_max, denom_max[:, e], denom_sum[:, e])
            vals[:, e] = np.divide(
                q_own[:, e], denom, out=np.zeros(size), where=q_own[:, e] > 0
            )
        return vals[:, supp]

    def merged_kernel(stream, size):
        q = _sample_counts(pois_tables, stream, size, m).astype(np.float64)
        su, sv = vertex_sums(q)
        if kind is SchemeKind.BIP_POISSON or (kind is SchemeKind.MIXED and bipartite):
            return (1.0 / (1.0 + np.maximum(su, sv)))[:, supp]
        if kind is SchemeKind.GEN_POISSON:
            d = su + sv - pair_sums(q)
            return (1.0 / (1.0 + d))[:, supp]
        table = _mixed_bipartite_table(g)
        p0 = (q > 0).astype(np.int64) @ pow2
        d = su + sv - pair_sums(q)
        vals = np.zeros((size, m))
        for e in range(m):
            if xf[e] == 0:
                continue
            idx = p0 | np.int64(1 << e)
            use_max = table[idx, e]
            denom = np.where(use_max, np.maximum(su[:, e], sv[:, e]), d[:, e])
            vals[:, e] = 1.0 / (1.0 + denom)
        return vals[:, supp]

    if spec.merged:
        return merged_kernel, supp
    if kind in (SchemeKind.BIP_COUNT, SchemeKind.RANDOM_ORDER):
        return count_kernel, supp
    if kind is SchemeKind.ISOLATED:
        return isolated_kernel, supp
    return two_stage_kernel, supp


def _default_chunk(m: int) -> int:
    return max(1024, min(16384, 4_000_000 // max(m, 1)))


def mc_balancedness(
    spec: SchemeSpec,
    g: Multigraph,
    x: Sequence,
    trials: int,
    stream: RngStream,
    chunk: Optional[int] = None,
    jobs: int = 1,
) -> BalancednessReport:
    """Monte Carlo per-edge balancedness with 99% normal confidence intervals."""
    if trials < 1:
        raise InputError("need at least one trial")
    kernel, supp = _make_kernel(spec, g, x)
    chunk = chunk or _default_chunk(g.edge_count)
    blocks = []
    done = 0
    bi = 0
    while done < trials:
        size = min(chunk, trials - done)
        blocks.append((bi, size))
        done += size
        bi += 1

    def run_block(args):
        index, size = args
        vals = kernel(stream.derive(index), size)
        return index, vals.sum(axis=0), (vals * vals).sum(axis=0)

    sums = np.zeros(len(supp))
    sumsq = np.zeros(len(supp))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = sorted(pool.map(run_block, blocks), key=lambda r: r[0])
    else:
        results = [run_block(b) for b in blocks]
    for _, s1, s2 in results:
        sums += s1
        sumsq += s2
    mean = sums / trials
    var = np.maximum(sumsq / trials - mean**2, 0.0)
    if trials > 1:
        var = var * trials / (trials - 1)
    half = CI99 * np.sqrt(var / trials)
    return BalancednessReport(
        scheme=spec.cli_name,
        edges=tuple(int(e) for e in supp),
        ratios=tuple(float(v) for v in mean),
        mode="monte-carlo",
        ci_half_widths=tuple(float(h) for h in half),
        trials=trials,
    )


def estimate_balancedness(
    spec: SchemeSpec,
    instance: InstanceSpec,
    trials: int,
    stream: RngStream,
    jobs: int = 1,
) -> BalancednessReport:
    """Generate the instance and run the Monte Carlo balancedness estimator."""
    g, x = generate_instance(instance)
    if not in_degree_polytope(g, x, b=1 + 1e-12):
        raise InputError("generated point violates the degree relaxation")
    return mc_balancedness(spec, g, x, trials, stream, jobs=jobs)


# ---------------------------------------------------------------------------
# the hard-instance upper-bound expression


def optimality_limit(
    n: int, b: float, trials: int = 0, stream: Optional[RngStream] = None,
    chunk: int = 1 << 16,
) -> float:
    """E[1/(1 + max of two Binomial(n-1, b/n))]: the ceiling any monotone scheme
    faces on the complete bipartite instance; tends to bipartite_constant(b).

    Exact (tabulated pmf) for n <= 12, Monte Carlo otherwise.
    """
    if n < 2:
        raise InputError("need n >= 2")
    if not 0 <= b <= 1:
        raise InputError(f"parameter {b} outside [0, 1]")
    if b == 0:
        return 1.0
    if n <= 12:
        pmf = binomial_pmf(n - 1, b / n, tail=0.0)
        total = 0.0
        for i, pi in enumerate(pmf):
            for j, pj in enumerate(pmf):
                total += pi * pj / (1 + max(i, j))
        return float(total)
    if trials < 1 or stream is None:
        raise InputError("Monte Carlo mode needs trials and a stream")
    cdf = np.cumsum(binomial_pmf(n - 1, b / n))
    acc = 0.0
    done = 0
    block = 0
    while done < trials:
        size = min(chunk, trials - done)
        sub = stream.derive(block)
        draws = np.searchsorted(cdf, sub.uniform((size, 2)), side="right")
        acc += float((1.0 / (1.0 + draws.max(axis=1))).sum())
        done += size
        block += 1
    return acc / trials
