"""Multigraph container, matchings, and matching-polytope membership tests.

Edges are undirected, self-loops are rejected, and parallel edges are allowed
and distinguished by their dense integer ids 0..m-1.  Fractional points and
marginal vectors are plain per-edge sequences (floats or ``fractions.Fraction``
for exact work); helpers below treat them generically.

Polytope conventions: the degree relaxation is x >= 0 with x(delta(v)) <= b at
every vertex; the exact matching polytope additionally enforces
x(E[S]) <= b*(|S|-1)/2 over odd vertex sets S, enumerated for |V| <= 20.
Inequalities use a 1e-9 float tolerance unless the point is all-rational, in
which case comparisons are exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Sequence

from .errors import CapabilityError, InputError

FLOAT_TOL = 1e-9
ODD_SET_VERTEX_CAP = 20


@dataclass(frozen=True)
class Multigraph:
    """Undirected multigraph; edge id i has endpoints ``edges[i]``."""

    vertex_count: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for eid, (u, v) in enumerate(self.edges):
            if u == v:
                raise InputError(f"edge {eid} is a self-loop at vertex {u}")
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise InputError(f"edge {eid} has endpoint outside 0..{self.vertex_count - 1}")

    @staticmethod
    def from_edges(vertex_count: int, edges: Iterable[tuple[int, int]]) -> "Multigraph":
        return Multigraph(vertex_count, tuple((int(u), int(v)) for u, v in edges))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        """incident[v]: ids of edges touching v, in id order."""
        inc: list[list[int]] = [[] for _ in range(self.vertex_count)]
        for eid, (u, v) in enumerate(self.edges):
            inc[u].append(eid)
            inc[v].append(eid)
        return tuple(tuple(lst) for lst in inc)

    @cached_property
    def pair_group(self) -> tuple[tuple[int, ...], ...]:
        """pair_group[e]: ids of all edges with the same endpoint pair as e."""
        by_pair: dict[tuple[int, int], list[int]] = {}
        for eid, (u, v) in enumerate(self.edges):
            by_pair.setdefault((min(u, v), max(u, v)), []).append(eid)
        return tuple(tuple(by_pair[(min(u, v), max(u, v))]) for (u, v) in self.edges)

    def adjacent_edges(self, e: int) -> tuple[int, ...]:
        """All edges sharing an endpoint with e (parallels included), e excluded."""
        u, v = self.edges[e]
        seen = []
        for g in self.incident[u]:
            if g != e:
                seen.append(g)
        for g in self.incident[v]:
            if g != e and g not in seen:
                seen.append(g)
        return tuple(sorted(seen))

    def check_edge_id(self, e: int) -> None:
        if not (0 <= e < self.edge_count):
            raise InputError(f"unknown edge id {e}")

    def check_vertex_id(self, v: int) -> None:
        if not (0 <= v < self.vertex_count):
            raise InputError(f"unknown vertex id {v}")


def support(x: Sequence) -> frozenset[int]:
    return frozenset(e for e, val in enumerate(x) if val > 0)


def is_rational_point(x: Sequence) -> bool:
    return all(isinstance(val, (Fraction, int)) for val in x)


def validate_point(g: Multigraph, x: Sequence) -> None:
    if len(x) != g.edge_count:
        raise InputError(f"point has {len(x)} entries for {g.edge_count} edges")
    for e, val in enumerate(x):
        if val < 0 or val > 1:
            raise InputError(f"x[{e}] = {val} outside [0, 1]")


def is_matching(g: Multigraph, s: Iterable[int]) -> bool:
    """True iff no two edges of s share an endpoint."""
    used: set[int] = set()
    for e in s:
        g.check_edge_id(e)
        u, v = g.edges[e]
        if u in used or v in used:
            return False
        used.add(u)
        used.add(v)
    return True


def degree_load(g: Multigraph, x: Sequence, v: int):
    """Total x-value over the edges incident to v."""
    g.check_vertex_id(v)
    return sum((x[e] for e in g.incident[v]), start=0)


def edges_between(g: Multigraph, u: int, v: int) -> frozenset[int]:
    """All edges whose endpoint pair is {u, v} (parallel copies included)."""
    g.check_vertex_id(u)
    g.check_vertex_id(v)
    if u == v:
        raise InputError("edges_between requires two distinct vertices")
    pair = (min(u, v), max(u, v))
    return frozenset(e for e, (a, b) in enumerate(g.edges) if (min(a, b), max(a, b)) == pair)


def _tolerance(x: Sequence, tol: Optional[float]):
    if tol is not None:
        return tol
    return 0 if is_rational_point(x) else FLOAT_TOL


def in_degree_polytope(g: Multigraph, x: Sequence, b=1, tol: Optional[float] = None) -> bool:
    """x >= 0 and every vertex load at most b (the degree relaxation, scaled by b)."""
    validate_len = len(x) == g.edge_count
    if not validate_len:
        raise InputError(f"point has {len(x)} entries for {g.edge_count} edges")
    eps = _tolerance(x, tol)
    if any(val < -eps for val in x):
        return False
    for v in range(g.vertex_count):
        if degree_load(g, x, v) > b + eps:
            return False
    return True


def in_matching_polytope_exact(g: Multigraph, x: Sequence, b=1, tol: Optional[float] = None) -> bool:
    """Membership in b times the matching polytope, odd-set constraints included.

    Enumerates all odd vertex sets, so the graph must have at most 20 vertices;
    beyond that a CapabilityError points the caller at the degree-only check
    combined with 2/3-scaling, which always lands inside the matching polytope.
    """
    if g.vertex_count > ODD_SET_VERTEX_CAP:
        raise CapabilityError(
            f"odd-set enumeration capped at {ODD_SET_VERTEX_CAP} vertices; "
            "use in_degree_polytope and scale the point by 2/3 instead"
        )
    if not in_degree_polytope(g, x, b, tol):
        return False
    eps = _tolerance(x, tol)
    n = g.vertex_count
    edge_masks = [(1 << u) | (1 << v) for (u, v) in g.edges]
    interesting = [e for e in range(g.edge_count) if x[e] > 0]
    for s_mask in range(1, 1 << n):
        size = s_mask.bit_count()
        if size < 3 or size % 2 == 0:
            continue
        inside = sum(
            (x[e] for e in interesting if edge_masks[e] & s_mask == edge_masks[e]), start=0
        )
        bound = b * (size - 1) / 2 if eps else Fraction(b) * (size - 1) / 2
        if inside > bound + eps:
            return False
    return True


def two_coloring(g: Multigraph, active: Optional[Iterable[int]] = None) -> Optional[list[int]]:
    """2-coloring of (V, active); None if some active component has an odd cycle.

    Vertices untouched by active edges get color 0.
    """
    act = set(range(g.edge_count)) if active is None else set(active)
    color = [-1] * g.vertex_count
    adj: list[list[int]] = [[] for _ in range(g.vertex_count)]
    for e in act:
        g.check_edge_id(e)
        u, v = g.edges[e]
        adj[u].append(v)
        adj[v].append(u)
    for start in range(g.vertex_count):
        if color[start] != -1:
            continue
        color[start] = 0
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if color[w] == -1:
                    color[w] = 1 - color[u]
                    stack.append(w)
                elif color[w] == color[u]:
                    return None
    return color


def bipartite_components(
    g: Multigraph, active: Iterable[int]
) -> list[tuple[frozenset[int], frozenset[int], bool]]:
    """Connected components of (V, active) with a 2-colorability flag each.

    Isolated vertices come back as singleton components, flagged bipartite;
    they carry no edges so downstream schemes are unaffected by them.
    """
    act = sorted(set(active))
    for e in act:
        g.check_edge_id(e)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.vertex_count)]
    for e in act:
        u, v = g.edges[e]
        adj[u].append((v, e))
        adj[v].append((u, e))
    seen = [False] * g.vertex_count
    out = []
    for start in range(g.vertex_count):
        if seen[start]:
            continue
        seen[start] = True
        color = {start: 0}
        verts = {start}
        comp_edges: set[int] = set()
        ok = True
        stack = [start]
        while stack:
            u = stack.pop()
            for w, e in adj[u]:
                comp_edges.add(e)
                if w not in color:
                    color[w] = 1 - color[u]
                    seen[w] = True
                    verts.add(w)
                    stack.append(w)
                elif color[w] == color[u]:
                    ok = False
        out.append((frozenset(verts), frozenset(comp_edges), ok))
    return out


def _parse_value(raw):
    if isinstance(raw, str):
        return Fraction(raw)
    return raw


def load_instance(path: str) -> tuple[Multigraph, tuple, Optional[list[int]]]:
    """Read an instance JSON file: graph, fractional point, optional bipartition.

    Format: {"vertices": n, "edges": [{"id": i, "u": .., "v": .., "x": ..}, ...],
    "bipartition": [left-side vertex ids]} where "x" may be a float or a
    rational string like "1/3".
    """
    with open(path) as fh:
        data = json.load(fh)
    try:
        n = int(data["vertices"])
        raw_edges = data["edges"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed instance file {path}: {exc}") from exc
    ids = sorted(int(rec["id"]) for rec in raw_edges)
    if ids != list(range(len(raw_edges))):
        raise InputError("edge ids must be dense 0..|E|-1")
    ordered = sorted(raw_edges, key=lambda rec: int(rec["id"]))
    g = Multigraph.from_edges(n, ((rec["u"], rec["v"]) for rec in ordered))
    x = tuple(_parse_value(rec.get("x", 0.0)) for rec in ordered)
    validate_point(g, x)
    bipartition = data.get("bipartition")
    if bipartition is not None:
        left = set(int(v) for v in bipartition)
        for v in left:
            g.check_vertex_id(v)
        for eid, (u, v) in enumerate(g.edges):
            if (u in left) == (v in left):
                raise InputError(f"edge {eid} does not cross the declared bipartition")
        bipartition = sorted(left)
    return g, x, bipartition


def dump_instance(path: str, g: Multigraph, x: Sequence, bipartition=None) -> None:
    recs = [
        {"id": e, "u": u, "v": v, "x": str(x[e]) if isinstance(x[e], Fraction) else float(x[e])}
        for e, (u, v) in enumerate(g.edges)
    ]
    data = {"vertices": g.vertex_count, "edges": recs}
    if bipartition is not None:
        data["bipartition"] = sorted(int(v) for v in bipartition)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
        fh.write("\n")
