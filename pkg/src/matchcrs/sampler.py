"""Turning marginal vectors into actual random matchings.

A vector y in the bipartite matching polytope is decomposed exactly (in
rational arithmetic) into a convex combination of matchings by padding it to a
fractional perfect matching on an auxiliary balanced bipartite graph whose
dummy vertices absorb the slack, peeling perfect matchings off the support
with the smallest remaining weight, and then pruning affine dependencies so at
most |supp(y)| + 1 terms remain.  Sampling a matching with marginal y is then
a single weighted pick.

Sum-formula marginals never need a decomposition: keeping every edge whose
independent Exponential(w_e) clock rings strictly first in its neighborhood is
a matching with exactly the marginals w_e / sum over delta(u) united delta(v).
Clock ties are a measure-zero event; the implementation breaks them by edge id
and the tie branch is unit-tested explicitly.

A desk-scale exact decomposition over the full (odd-set constrained) matching
polytope is also provided; only the 2/3-scaled reference scheme needs it, on
non-2-colorable survivor components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence

from .errors import CapabilityError, InputError
from . import schemes as _schemes
from .graph import (
    Multigraph,
    bipartite_components,
    in_matching_polytope_exact,
    is_matching,
    support,
    two_coloring,
)
from .randomness import Exponential, RngStream, draw
from .schemes import (
    SchemeKind,
    SchemeSpec,
    direct_intensities,
    draw_intensities,
    max_formula_marginals,
)

_DECOMPOSE_SUPPORT_CAP = 14


@dataclass(frozen=True)
class ConvexCombination:
    """Weighted matchings reconstructing a marginal vector exactly."""

    terms: tuple[tuple[Fraction, frozenset[int]], ...]

    def total_weight(self) -> Fraction:
        return sum((w for w, _ in self.terms), start=Fraction(0))

    def reconstruct(self, edge_count: int) -> tuple[Fraction, ...]:
        acc = [Fraction(0)] * edge_count
        for w, m in self.terms:
            for e in m:
                acc[e] += w
        return tuple(acc)

    def sample(self, stream: RngStream) -> frozenset[int]:
        u = stream.uniform()
        acc = 0.0
        for w, m in self.terms:
            acc += float(w)
            if u < acc:
                return m
        return self.terms[-1][1]


def _to_fraction(val) -> Fraction:
    if isinstance(val, Fraction):
        return val
    if isinstance(val, int):
        return Fraction(val)
    return Fraction(float(val))


def _null_vector(rows: list[list[Fraction]], ncols: int) -> Optional[list[Fraction]]:
    """A nonzero rational solution of rows . x = 0, or None if only trivial."""
    mat = [row[:] for row in rows]
    pivots: dict[int, int] = {}
    r = 0
    for c in range(ncols):
        pivot_row = None
        for i in range(r, len(mat)):
            if mat[i][c] != 0:
                pivot_row = i
                break
        if pivot_row is None:
            continue
        mat[r], mat[pivot_row] = mat[pivot_row], mat[r]
        pv = mat[r][c]
        mat[r] = [val / pv for val in mat[r]]
        for i in range(len(mat)):
            if i != r and mat[i][c] != 0:
                f = mat[i][c]
                mat[i] = [a - f * b for a, b in zip(mat[i], mat[r])]
        pivots[c] = r
        r += 1
        if r == len(mat):
            break
    free = [c for c in range(ncols) if c not in pivots]
    if not free:
        return None
    fc = free[0]
    x = [Fraction(0)] * ncols
    x[fc] = Fraction(1)
    for c, rr in pivots.items():
        x[c] = -mat[rr][fc]
    return x


def _caratheodory_prune(
    terms: list[tuple[Fraction, frozenset[int]]], coords: tuple[int, ...]
) -> list[tuple[Fraction, frozenset[int]]]:
    """Shrink to at most len(coords)+1 terms, preserving the exact combination."""
    target = len(coords) + 1
    terms = list(terms)
    while len(terms) > target:
        k = len(terms)
        rows = [[Fraction(1)] * k]
        for c in coords:
            rows.append([Fraction(1 if c in m else 0) for _, m in terms])
        mu = _null_vector(rows, k)
        assert mu is not None, "affine dependence must exist beyond dim+1 terms"
        if all(v <= 0 for v in mu):
            mu = [-v for v in mu]
        step = min(w / v for (w, _), v in zip(terms, mu) if v > 0)
        new_terms = []
        for (w, m), v in zip(terms, mu):
            nw = w - step * v
            assert nw >= 0
            if nw > 0:
                new_terms.append((nw, m))
        assert len(new_terms) < len(terms)
        terms = new_terms
    return terms


def _merge_terms(raw: list[tuple[Fraction, frozenset[int]]]):
    acc: dict[frozenset[int], Fraction] = {}
    for w, m in raw:
        if w > 0:
            acc[m] = acc.get(m, Fraction(0)) + w
    return [(w, m) for m, w in sorted(acc.items(), key=lambda it: sorted(it[0]))]


def _kuhn_perfect_matching(n: int, adj: list[list[tuple[int, int]]]) -> list[tuple[int, int]]:
    """Perfect matching on a balanced bipartite support; adj[l] = [(r, tag)]."""
    match_r: list[Optional[tuple[int, int]]] = [None] * n  # (left, tag)

    def augment(l: int, seen: set[int]) -> bool:
        for r, tag in adj[l]:
            if r in seen:
                continue
            seen.add(r)
            if match_r[r] is None or augment(match_r[r][0], seen):
                match_r[r] = (l, tag)
                return True
        return False

    for l in range(n):
        if not augment(l, set()):
            raise AssertionError("padded support lost its perfect matching")
    return [(lt[0], lt[1]) for lt in match_r if lt is not None]


def birkhoff_decompose(g: Multigraph, y: Sequence) -> ConvexCombination:
    """Exact convex decomposition of y over matchings of a bipartite support.

    y must lie in the bipartite matching polytope (vertex loads at most 1 and
    the support 2-colorable); float inputs are converted to exact rationals
    first, and loads exceeding 1 by more than 1e-9 are rejected.
    """
    if len(y) != g.edge_count:
        raise InputError(f"marginal vector has {len(y)} entries for {g.edge_count} edges")
    yf = [_to_fraction(v) for v in y]
    if any(v < 0 for v in yf):
        raise InputError("marginal vector has a negative entry")
    supp = sorted(e for e in range(g.edge_count) if yf[e] > 0)
    if not supp:
        return ConvexCombination(((Fraction(1), frozenset()),))

    coloring = two_coloring(g, supp)
    if coloring is None:
        raise InputError("marginal support contains an odd cycle; not bipartite")
    load: dict[int, Fraction] = {}
    for e in supp:
        u, v = g.edges[e]
        load[u] = load.get(u, Fraction(0)) + yf[e]
        load[v] = load.get(v, Fraction(0)) + yf[e]
    max_load = max(load.values())
    if max_load > 1:
        if float(max_load) > 1 + 1e-9:
            raise InputError(f"vertex load {float(max_load)} outside the matching polytope")
        yf = [v / max_load for v in yf]
        load = {w: l / max_load for w, l in load.items()}

    left_real = sorted(w for w in load if coloring[w] == 0)
    right_real = sorted(w for w in load if coloring[w] == 1)
    # Balanced padding: one right dummy per real left vertex and vice versa,
    # so every auxiliary vertex carries total weight exactly 1.
    n = len(left_real) + len(right_real)
    lidx = {w: i for i, w in enumerate(left_real)}
    ridx = {w: i for i, w in enumerate(right_real)}
    dl_base = len(left_real)   # left dummies mirror right_real
    dr_base = len(right_real)  # right dummies mirror left_real

    aux_edges: list[tuple[int, int, Optional[int]]] = []  # (left, right, edge id or None)
    weights: list[Fraction] = []
    for e in supp:
        u, v = g.edges[e]
        if coloring[u] == 1:
            u, v = v, u
        aux_edges.append((lidx[u], ridx[v], e))
        weights.append(yf[e])
    for u in left_real:
        slack = 1 - load[u]
        if slack > 0:
            aux_edges.append((lidx[u], dr_base + lidx[u], None))
            weights.append(slack)
    for v in right_real:
        slack = 1 - load[v]
        if slack > 0:
            aux_edges.append((dl_base + ridx[v], ridx[v], None))
            weights.append(slack)
    # Northwest-corner transportation between the dummies: left dummy for v
    # still needs load[v], right dummy for u still needs load[u].
    row_need = [load[v] for v in right_real]
    col_need = [load[u] for u in left_real]
    ri, ci = 0, 0
    while ri < len(row_need) and ci < len(col_need):
        if row_need[ri] == 0:
            ri += 1
            continue
        if col_need[ci] == 0:
            ci += 1
            continue
        fill = min(row_need[ri], col_need[ci])
        aux_edges.append((dl_base + ri, dr_base + ci, None))
        weights.append(fill)
        row_need[ri] -= fill
        col_need[ci] -= fill

    raw_terms: list[tuple[Fraction, frozenset[int]]] = []
    remaining = Fraction(1)
    while remaining > 0:
        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for idx, (l, r, _) in enumerate(aux_edges):
            if weights[idx] > 0:
                adj[l].append((r, idx))
        matched = _kuhn_perfect_matching(n, adj)
        lam = min(weights[idx] for _, idx in matched)
        real = frozenset(
            aux_edges[idx][2] for _, idx in matched if aux_edges[idx][2] is not None
        )
        raw_terms.append((lam, real))
        for _, idx in matched:
            weights[idx] -= lam
        remaining -= lam

    terms = _caratheodory_prune(_merge_terms(raw_terms), tuple(supp))
    combo = ConvexCombination(tuple(terms))
    assert combo.total_weight() == 1
    assert combo.reconstruct(g.edge_count) == tuple(yf)
    return combo


def _enumerate_matchings(g: Multigraph, pool: tuple[int, ...]):
    """All matchings within the edge pool, the empty one included."""
    pool = tuple(sorted(pool))

    def rec(i: int, used: frozenset[int], current: tuple[int, ...]):
        if i == len(pool):
            yield frozenset(current)
            return
        e = pool[i]
        u, v = g.edges[e]
        yield from rec(i + 1, used, current)
        if u not in used and v not in used:
            yield from rec(i + 1, used | {u, v}, current + (e,))

    yield from rec(0, frozenset(), ())


def decompose_in_matching_polytope(g: Multigraph, y: Sequence) -> ConvexCombination:
    """Exact decomposition over the full matching polytope, desk scale only.

    Peels matchings that cover every tight degree constraint and fill every
    tight odd-set constraint (such a matching always exists while the residual
    stays in the scaled polytope), taking the largest step that keeps the
    residual feasible.  Odd sets are enumerated, so the support must stay
    small.
    """
    yf = [_to_fraction(v) for v in y]
    supp = tuple(sorted(e for e in range(g.edge_count) if yf[e] > 0))
    if not supp:
        return ConvexCombination(((Fraction(1), frozenset()),))
    verts = sorted({w for e in supp for w in g.edges[e]})
    if len(supp) > _DECOMPOSE_SUPPORT_CAP or len(verts) > _DECOMPOSE_SUPPORT_CAP:
        raise CapabilityError("matching-polytope decomposition is desk scale only")
    if any(v < 0 for v in yf) or not in_matching_polytope_exact(g, yf, tol=0):
        raise InputError("vector outside the matching polytope")

    odd_sets = []
    for mask in range(1, 1 << len(verts)):
        size = mask.bit_count()
        if size >= 3 and size % 2 == 1:
            members = {verts[i] for i in range(len(verts)) if mask >> i & 1}
            inside = tuple(e for e in supp if set(g.edges[e]) <= members)
            if inside:
                odd_sets.append((Fraction(size - 1, 2), inside))

    w = list(yf)
    scale = Fraction(1)
    terms: list[tuple[Fraction, frozenset[int]]] = []
    while scale > 0:
        active = tuple(e for e in supp if w[e] > 0)
        if not active:
            terms.append((scale, frozenset()))
            break
        loads = {v: sum((w[e] for e in g.incident[v] if w[e] > 0), start=Fraction(0)) for v in verts}
        tight_verts = {v for v in verts if loads[v] == scale}
        tight_odds = [
            (cap, inside)
            for cap, inside in odd_sets
            if sum((w[e] for e in inside), start=Fraction(0)) == scale * cap
        ]
        chosen = None
        for m in _enumerate_matchings(g, active):
            covered = {v for e in m for v in g.edges[e]}
            if not tight_verts <= covered:
                continue
            if any(len(m & set(inside)) != cap for cap, inside in tight_odds):
                continue
            chosen = m
            break
        assert chosen is not None, "tight-covering matching must exist inside the polytope"
        lam = min(w[e] for e in chosen) if chosen else scale
        lam = min(lam, scale)
        covered = {v for e in chosen for v in g.edges[e]}
        for v in verts:
            if v not in covered and loads[v] > 0:
                lam = min(lam, scale - loads[v])
        for cap, inside in odd_sets:
            gap = cap - len(chosen & set(inside))
            if gap > 0:
                lam = min(lam, (scale * cap - sum((w[e] for e in inside), start=Fraction(0))) / gap)
        assert lam > 0
        terms.append((lam, frozenset(chosen)))
        for e in chosen:
            w[e] -= lam
        scale -= lam

    terms = _caratheodory_prune(_merge_terms(terms), supp)
    combo = ConvexCombination(tuple(terms))
    assert combo.total_weight() == 1
    assert combo.reconstruct(g.edge_count) == tuple(yf)
    return combo


# ---------------------------------------------------------------------------
# direct matching samplers


def locally_first_edges(g: Multigraph, clocks: Sequence[float]) -> frozenset[int]:
    """Edges whose clock beats every adjacent clock, ties broken by edge id."""
    kept = []
    for e in range(g.edge_count):
        if math.isinf(clocks[e]):
            continue
        key = (clocks[e], e)
        if all(key < (clocks[h], h) for h in g.adjacent_edges(e) if not math.isinf(clocks[h])):
            kept.append(e)
    result = frozenset(kept)
    assert is_matching(g, result)
    return result


def exp_clock_matching(g: Multigraph, w: Sequence, stream: RngStream) -> frozenset[int]:
    """Matching with marginals w_e / (neighborhood sum of w) via exponential clocks."""
    if len(w) != g.edge_count:
        raise InputError("weight vector length mismatch")
    if any(v < 0 for v in w):
        raise InputError("clock weights must be nonnegative")
    clocks = [draw(Exponential(float(v)), stream) for v in w]
    return locally_first_edges(g, clocks)


def random_order_matching(g: Multigraph, a: Iterable[int], stream: RngStream) -> frozenset[int]:
    """Keep each a-edge that comes first in a uniform order of its neighborhood.

    Only edges preceding every adjacent a-edge are selected (adjacent edges
    cannot both be locally first, so the output is a matching), giving each
    edge selection probability exactly 1 over its closed neighborhood count.
    """
    aset = sorted(set(a))
    for e in aset:
        g.check_edge_id(e)
    keys = stream.uniform(len(aset)) if aset else []
    clocks = [math.inf] * g.edge_count
    for i, e in enumerate(aset):
        clocks[e] = float(keys[i])
    return locally_first_edges(g, clocks)


# ---------------------------------------------------------------------------
# resolving schemes into matchings


@lru_cache(maxsize=65536)
def _cached_birkhoff(g: Multigraph, y: tuple) -> ConvexCombination:
    return birkhoff_decompose(g, y)


@lru_cache(maxsize=65536)
def _cached_matchpoly(g: Multigraph, y: tuple) -> ConvexCombination:
    return decompose_in_matching_polytope(g, y)


def _pick_from_marginal(g: Multigraph, y: tuple, stream: RngStream) -> frozenset[int]:
    return _cached_birkhoff(g, y).sample(stream)


def _restrict(y: Sequence, keep: frozenset[int]) -> tuple:
    return tuple(v if e in keep else Fraction(0) for e, v in enumerate(y))


def _resolve_intensities(
    kind: SchemeKind, g: Multigraph, q: tuple[int, ...], stream: RngStream
) -> frozenset[int]:
    if kind is SchemeKind.BIP_POISSON:
        y = max_formula_marginals(g, q)
        return _pick_from_marginal(g, y, stream)
    if kind is SchemeKind.GEN_POISSON:
        return exp_clock_matching(g, q, stream)
    if kind is SchemeKind.MIXED:
        survivors = [e for e, qe in enumerate(q) if qe]
        y = max_formula_marginals(g, q)
        clock_q = list(q)
        picked: set[int] = set()
        for _, comp_edges, is_bip in bipartite_components(g, survivors):
            if not comp_edges:
                continue
            if is_bip:
                for e in comp_edges:
                    clock_q[e] = 0
                picked |= _pick_from_marginal(g, _restrict(y, comp_edges), stream)
        picked |= exp_clock_matching(g, clock_q, stream)
        result = frozenset(picked)
        assert is_matching(g, result)
        return result
    if kind is SchemeKind.SCALED_TWO_THIRDS:
        y = max_formula_marginals(g, q)
        survivors = [e for e, qe in enumerate(q) if qe]
        picked: set[int] = set()
        for _, comp_edges, is_bip in bipartite_components(g, survivors):
            if not comp_edges:
                continue
            if is_bip:
                combo = _cached_birkhoff(g, _restrict(y, comp_edges))
                u = stream.uniform()
                if u < 2.0 / 3.0:
                    acc = 0.0
                    for wgt, m in combo.terms:
                        acc += float(wgt) * (2.0 / 3.0)
                        if u < acc:
                            picked |= m
                            break
                    else:
                        picked |= combo.terms[-1][1]
            else:
                scaled = tuple(
                    Fraction(2, 3) * v if e in comp_edges else Fraction(0)
                    for e, v in enumerate(y)
                )
                picked |= _cached_matchpoly(g, scaled).sample(stream)
        result = frozenset(picked)
        assert is_matching(g, result)
        return result
    raise InputError(f"{kind} is not intensity-driven")


def resolve(
    spec: SchemeSpec,
    g: Multigraph,
    x: Sequence,
    a: Optional[Iterable[int]],
    stream: RngStream,
) -> frozenset[int]:
    """One random matching whose conditional marginals are the scheme's output.

    Sum-formula components are realized through exponential clocks on the
    intensities, max-formula components through exact decomposition plus a
    weighted pick, and the greedy kinds directly.  Merged variants ignore the
    sampled set (pass a = None).
    """
    if spec.merged:
        if a is not None and frozenset(a) != support(x):
            raise InputError("merged variants take no sampled set")
        q = direct_intensities(g, x, stream)
        if spec.kind is SchemeKind.BIP_POISSON and two_coloring(g) is None:
            raise CapabilityError("the bipartite intensity scheme requires a bipartite graph")
        return _resolve_intensities(spec.kind, g, q, stream)

    if a is None:
        raise InputError("two-stage schemes need the sampled set A")
    aset = _schemes._check_sampled_set(g, x, a)
    kind = spec.kind
    if kind in (SchemeKind.BIP_POISSON, SchemeKind.GEN_POISSON, SchemeKind.MIXED,
                SchemeKind.SCALED_TWO_THIRDS):
        if kind is SchemeKind.BIP_POISSON and two_coloring(g) is None:
            raise CapabilityError("the bipartite intensity scheme requires a bipartite graph")
        q = draw_intensities(g, x, aset, stream)
        out = _resolve_intensities(kind, g, q, stream)
    elif kind is SchemeKind.BIP_COUNT:
        y = _schemes.bipartite_count_marginals(g, x, aset)
        out = _pick_from_marginal(g, y, stream)
    elif kind is SchemeKind.RANDOM_ORDER:
        out = random_order_matching(g, aset, stream)
    elif kind is SchemeKind.ISOLATED:
        y = _schemes.isolated_edge_marginals(g, x, aset, stream)
        out = frozenset(e for e in aset if y[e] == 1)
    elif kind is SchemeKind.BIPARTITION:
        _, crossing = _schemes.sample_bipartition(g, stream)
        q = draw_intensities(g, x, aset & crossing, stream)
        out = _pick_from_marginal(g, max_formula_marginals(g, q), stream)
    else:
        raise InputError(f"unhandled scheme kind {kind}")
    assert out <= aset and is_matching(g, out)
    return out


def intersect_schemes(
    specs: Sequence[SchemeSpec],
    g: Multigraph,
    x: Sequence,
    a: Iterable[int],
    stream: RngStream,
    coupled: bool = False,
) -> frozenset[int]:
    """Resolve every scheme on the same sampled set and intersect the outputs.

    With coupled=True all schemes consume identical randomness (useful to show
    two copies of one scheme collapse to a single application).
    """
    if not specs:
        raise InputError("intersect_schemes needs at least one scheme")
    aset = frozenset(a)
    out: Optional[frozenset[int]] = None
    for i, spec in enumerate(specs):
        sub = stream.derive(0) if coupled else stream.derive(i)
        m = resolve(spec, g, x, aset, sub)
        out = m if out is None else out & m
    assert out is not None
    return out
