"""Toy constrained-submodular-maximization pipeline over matching constraints.

The pipeline is: estimate the multilinear extension F(x) = E[f(R(x))] by
sampling, push x into b times the matching polytope with a Frank-Wolfe style
greedy whose linear oracle is a maximum-weight matching, then round x with one
of the contention resolution schemes and compare the rounded value against the
scheme's balancedness guarantee times F(x).

Function oracles cover three shapes: modular (weights), coverage (union of
item sets, monotone), and graph-cut style on an auxiliary adjacency between
ground elements (non-monotone; only used to exercise the guards).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import CapabilityError, InputError
from .graph import Multigraph, in_degree_polytope, is_matching, two_coloring
from .randomness import RngStream, independent_round
from .sampler import resolve
from .schemes import SchemeSpec

BRUTE_FORCE_EDGE_CAP = 16


@dataclass(frozen=True)
class SubmodularOracle:
    """Value oracle on subsets of the edge ground set."""

    kind: str  # "modular" | "coverage" | "cut"
    ground_size: int
    evaluate: Callable[[frozenset[int]], float]
    monotone: bool

    def __call__(self, subset: Iterable[int]) -> float:
        return self.evaluate(frozenset(subset))


def modular_oracle(weights: Sequence[float]) -> SubmodularOracle:
    w = tuple(float(v) for v in weights)
    if any(v < 0 for v in w):
        raise InputError("modular oracle weights must be nonnegative")

    def ev(s: frozenset[int]) -> float:
        return sum(w[e] for e in s)

    return SubmodularOracle("modular", len(w), ev, monotone=True)


def coverage_oracle(
    covers: Sequence[frozenset[int]], item_weights: Optional[Mapping[int, float]] = None
) -> SubmodularOracle:
    """f(S) = total weight of the items covered by the sets of S."""
    covers = tuple(frozenset(c) for c in covers)

    def weight(item: int) -> float:
        return 1.0 if item_weights is None else float(item_weights.get(item, 0.0))

    def ev(s: frozenset[int]) -> float:
        hit: set[int] = set()
        for e in s:
            hit |= covers[e]
        return sum(weight(i) for i in hit)

    return SubmodularOracle("coverage", len(covers), ev, monotone=True)


def cut_oracle(ground_size: int, adjacency: Mapping[tuple[int, int], float]) -> SubmodularOracle:
    """Undirected cut function of a weighted auxiliary graph on the ground set."""
    pairs = {(min(i, j), max(i, j)): float(w) for (i, j), w in adjacency.items()}
    if any(w < 0 for w in pairs.values()):
        raise InputError("cut adjacency weights must be nonnegative")

    def ev(s: frozenset[int]) -> float:
        return sum(w for (i, j), w in pairs.items() if (i in s) != (j in s))

    return SubmodularOracle("cut", ground_size, ev, monotone=False)


def cut_oracle_from_graph(g: Multigraph) -> SubmodularOracle:
    """Cut oracle whose auxiliary adjacency joins edges sharing an endpoint."""
    adj: dict[tuple[int, int], float] = {}
    for e in range(g.edge_count):
        for h in g.adjacent_edges(e):
            if e < h:
                adj[(e, h)] = 1.0
    return cut_oracle(g.edge_count, adj)


def is_submodular(f: SubmodularOracle, tol: float = 1e-9) -> bool:
    """Exhaustive diminishing-returns check; ground sets up to 10 elements."""
    m = f.ground_size
    if m > 10:
        raise CapabilityError("exhaustive submodularity check capped at 10 elements")
    universe = list(range(m))
    for s_mask in range(1 << m):
        s = frozenset(e for e in universe if s_mask >> e & 1)
        rest = [e for e in universe if e not in s]
        for extra_mask in range(1, 1 << len(rest)):
            t = s | {rest[i] for i in range(len(rest)) if extra_mask >> i & 1}
            for e in universe:
                if e in t:
                    continue
                gain_s = f(s | {e}) - f(s)
                gain_t = f(t | {e}) - f(t)
                if gain_s + tol < gain_t:
                    return False
    return True


def is_monotone_oracle(f: SubmodularOracle, tol: float = 1e-9) -> bool:
    m = f.ground_size
    if m > 10:
        raise CapabilityError("exhaustive monotonicity check capped at 10 elements")
    for s_mask in range(1 << m):
        s = frozenset(e for e in range(m) if s_mask >> e & 1)
        base = f(s)
        for e in range(m):
            if e not in s and f(s | {e}) + tol < base:
                return False
    return True


def synthetic_oracle(kind: str, g: Multigraph, seed: int = 0) -> SubmodularOracle:
    """Reproducible toy oracle on a graph's edge set for CLI experiments."""
    stream = RngStream(seed, 555)
    m = g.edge_count
    if kind == "modular":
        return modular_oracle([0.5 + stream.uniform() for _ in range(m)])
    if kind == "coverage":
        n_items = max(2 * m, 4)
        covers = []
        for _ in range(m):
            size = 1 + int(stream.uniform() * 3)
            covers.append(frozenset(
                int(stream.uniform() * n_items) for _ in range(size)
            ))
        return coverage_oracle(covers)
    if kind == "cut":
        return cut_oracle_from_graph(g)
    raise InputError(f"unknown oracle kind {kind!r}")


@dataclass(frozen=True)
class MultilinearEstimate:
    value: float
    stderr: float
    samples: int


def multilinear_estimate(
    f: SubmodularOracle, x: Sequence, samples: int, stream: RngStream
) -> MultilinearEstimate:
    """Sample mean of f over independent roundings of x."""
    if samples < 1:
        raise InputError("need at least one sample")
    vals = np.empty(samples)
    for i in range(samples):
        vals[i] = f(independent_round(x, stream.derive(i)))
    sd = float(vals.std(ddof=1)) if samples > 1 else 0.0
    return MultilinearEstimate(float(vals.mean()), sd / math.sqrt(samples), samples)


def multilinear_exact(f: SubmodularOracle, x: Sequence) -> float:
    """Exact multilinear extension by enumerating all subsets (desk scale)."""
    m = len(x)
    if m > 16:
        raise CapabilityError("exact multilinear extension capped at 16 elements")
    total = 0.0
    for mask in range(1 << m):
        w = 1.0
        for e in range(m):
            w *= float(x[e]) if mask >> e & 1 else 1.0 - float(x[e])
        if w:
            total += w * f(frozenset(e for e in range(m) if mask >> e & 1))
    return total


def brute_force_max_weight(g: Multigraph, weights: Sequence[float]) -> frozenset[int]:
    """Reference maximizer by enumerating matchings; the independent oracle."""
    if g.edge_count > BRUTE_FORCE_EDGE_CAP:
        raise CapabilityError(f"brute force capped at {BRUTE_FORCE_EDGE_CAP} edges")
    best: frozenset[int] = frozenset()
    best_val = 0.0
    pool = [e for e in range(g.edge_count) if weights[e] > 0]
    for r in range(len(pool) + 1):
        for combo in itertools.combinations(pool, r):
            if is_matching(g, combo):
                val = sum(weights[e] for e in combo)
                if val > best_val:
                    best_val = val
                    best = frozenset(combo)
    return best


def max_weight_matching(g: Multigraph, weights: Sequence[float]) -> frozenset[int]:
    """Maximum-weight matching; empty is allowed, negative edges never help.

    Bipartite graphs of any size go through the assignment solver; general
    graphs fall back to brute force and are capped at 16 edges.
    """
    if len(weights) != g.edge_count:
        raise InputError("weight vector length mismatch")
    coloring = two_coloring(g)
    if coloring is None:
        if g.edge_count > BRUTE_FORCE_EDGE_CAP:
            raise CapabilityError(
                f"general max-weight matching capped at {BRUTE_FORCE_EDGE_CAP} edges"
            )
        return brute_force_max_weight(g, weights)
    left = [v for v in range(g.vertex_count) if coloring[v] == 0]
    right = [v for v in range(g.vertex_count) if coloring[v] == 1]
    if not left or not right:
        return frozenset()
    lpos = {v: i for i, v in enumerate(left)}
    rpos = {v: i for i, v in enumerate(right)}
    cost = np.zeros((len(left), len(right)))
    best_edge: dict[tuple[int, int], int] = {}
    for e, (u, v) in enumerate(g.edges):
        if weights[e] <= 0:
            continue
        if coloring[u] == 1:
            u, v = v, u
        key = (lpos[u], rpos[v])
        if weights[e] > cost[key]:
            cost[key] = weights[e]
            best_edge[key] = e
    rows, cols = linear_sum_assignment(cost, maximize=True)
    return frozenset(
        best_edge[(r, c)] for r, c in zip(rows, cols) if cost[r, c] > 0
    )


def estimate_gradient(
    f: SubmodularOracle, x: Sequence, samples: int, stream: RngStream
) -> np.ndarray:
    """Per-element marginal gains E[f(R + e) - f(R - e)] on shared samples."""
    m = len(x)
    grad = np.zeros(m)
    for i in range(samples):
        r = independent_round(x, stream.derive(i))
        for e in range(m):
            grad[e] += f(r | {e}) - f(r - {e})
    return grad / samples


def continuous_greedy(
    f: SubmodularOracle,
    g: Multigraph,
    b: float,
    steps: int,
    samples: int,
    stream: RngStream,
) -> tuple[float, ...]:
    """Frank-Wolfe ascent of the multilinear extension into b times the polytope.

    Each step moves b/steps along the max-weight matching for the sampled
    gradient, so the output is a convex combination of matchings scaled by b
    and lands inside the polytope by construction.  Monotone oracles only.
    """
    if not f.monotone:
        raise CapabilityError("continuous greedy handles monotone oracles only")
    if steps < 10:
        raise InputError("need at least 10 steps")
    if not 0 <= b <= 1:
        raise InputError(f"parameter {b} outside [0, 1]")
    x = np.zeros(g.edge_count)
    for t in range(steps):
        grad = estimate_gradient(f, tuple(x), samples, stream.derive(t))
        move = max_weight_matching(g, np.maximum(grad, 0.0))
        for e in move:
            x[e] += b / steps
    x = np.minimum(x, 1.0)
    assert in_degree_polytope(g, tuple(x), b=b + 1e-9)
    return tuple(float(v) for v in x)


def round_and_evaluate(
    f: SubmodularOracle,
    g: Multigraph,
    x: Sequence,
    spec: SchemeSpec,
    trials: int,
    stream: RngStream,
) -> tuple[float, float]:
    """Mean and standard error of f over scheme-rounded independent roundings."""
    if trials < 1:
        raise InputError("need at least one trial")
    vals = np.empty(trials)
    for t in range(trials):
        sub = stream.derive(t)
        if spec.merged:
            matched = resolve(spec, g, x, None, sub)
        else:
            a = independent_round(x, sub)
            matched = resolve(spec, g, x, a, sub)
        vals[t] = f(matched)
    sd = float(vals.std(ddof=1)) if trials > 1 else 0.0
    return float(vals.mean()), sd / math.sqrt(trials)
