"""Invariant battery behind the ``verify`` CLI subcommand.

Each row of the emitted table is one named check on one instance (and scheme,
where applicable): support containment and polytope membership of sampled
marginals, exact-oracle versus Monte Carlo agreement within three standard
errors, exhaustive monotonicity on small supports, the coupled domination of
the mixed formula over the sum formula, polytope predicate consistency, and
exact decomposition round-trips.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .analytics import mc_balancedness
from .errors import CapabilityError
from .graph import (
    Multigraph,
    in_degree_polytope,
    in_matching_polytope_exact,
    is_matching,
    support,
    two_coloring,
)
from .oracle import exact_balancedness, verify_monotonicity
from .randomness import RngStream, independent_round
from .sampler import birkhoff_decompose, resolve
from .schemes import (
    CLI_SCHEMES,
    SchemeKind,
    conditional_marginals,
    direct_intensities,
    direct_marginals,
    mixed_formula_marginals,
    sum_formula_marginals,
)


@dataclass(frozen=True)
class NamedInstance:
    name: str
    g: Multigraph
    x: tuple


def builtin_battery(max_edges: int = 8) -> list[NamedInstance]:
    """Small named instances covering bipartite and odd-cycle structure."""
    out = [
        NamedInstance("path4", Multigraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)]),
                      (0.6, 0.35, 0.5, 0.45)),
        NamedInstance("triangle-pendant",
                      Multigraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)]),
                      (0.3, 0.3, 0.3, 0.35)),
        NamedInstance("parallel-pair",
                      Multigraph.from_edges(3, [(0, 1), (0, 1), (1, 2)]),
                      (0.25, 0.2, 0.5)),
        NamedInstance("k23", Multigraph.from_edges(5,
                      [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]),
                      (0.35, 0.3, 0.3, 0.25, 0.3, 0.2)),
        NamedInstance("five-cycle", Multigraph.from_edges(5,
                      [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]),
                      (0.4, 0.4, 0.35, 0.4, 0.4)),
        NamedInstance("cube-cycle", Multigraph.from_edges(8,
                      [(0, 4), (0, 5), (1, 4), (1, 6), (2, 5), (2, 7), (3, 6), (3, 7)]),
                      (0.5, 0.4, 0.45, 0.35, 0.4, 0.5, 0.45, 0.4)),
        NamedInstance("two-triangles-bridge", Multigraph.from_edges(6,
                      [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 4)]),
                      (0.3, 0.3, 0.3, 0.2, 0.3, 0.3, 0.3, 0.25)),
        NamedInstance("triangle-parallel", Multigraph.from_edges(4,
                      [(0, 1), (0, 1), (1, 2), (0, 2), (2, 3)]),
                      (0.2, 0.2, 0.25, 0.3, 0.3)),
    ]
    return [ni for ni in out if ni.g.edge_count <= max_edges]


def _applicable(spec: SchemeSpec, g: Multigraph) -> bool:
    if spec.kind in (SchemeKind.BIP_COUNT, SchemeKind.BIP_POISSON):
        return two_coloring(g) is not None
    return True


def run_battery(
    instances: Sequence[NamedInstance],
    stream: RngStream,
    trials: int = 20000,
    max_edges: int = 8,
    schemes: Optional[Sequence[str]] = None,
) -> list[dict]:
    rows: list[dict] = []
    tokens = list(schemes) if schemes else sorted(CLI_SCHEMES)

    def add(check: str, instance: str, scheme: str, passed: bool, detail: str = ""):
        rows.append({
            "check": check, "instance": instance, "scheme": scheme,
            "passed": bool(passed), "detail": detail,
        })

    for ii, ni in enumerate(instances):
        if ni.g.edge_count > max_edges:
            continue
        g, x = ni.g, ni.x
        bipartite = two_coloring(g) is not None

        ok = in_matching_polytope_exact(g, x) and in_degree_polytope(g, x)
        add("polytope-membership", ni.name, "-", ok)
        scaled = tuple(2 * Fraction(v) / 3 for v in x)
        add("two-thirds-scaling", ni.name, "-",
            in_matching_polytope_exact(g, scaled))

        for jj, token in enumerate(tokens):
            spec = CLI_SCHEMES[token]
            if not _applicable(spec, g):
                continue
            sub = stream.derive(ii, jj)

            # support containment + polytope membership of sampled marginals
            good = True
            detail = ""
            for t in range(50):
                st = sub.derive(t)
                if spec.merged:
                    a = frozenset(support(x))
                    y = direct_marginals(spec, g, x, st)
                else:
                    a = independent_round(x, st)
                    y = conditional_marginals(spec, g, x, a, st)
                if any(y[e] > 0 and e not in a for e in range(g.edge_count)):
                    good, detail = False, f"support escaped at draw {t}"
                    break
                feasible = (
                    in_degree_polytope(g, y)
                    if spec.kind in (SchemeKind.BIP_COUNT, SchemeKind.BIP_POISSON)
                    else in_matching_polytope_exact(g, y)
                )
                if not feasible:
                    good, detail = False, f"marginal left polytope at draw {t}"
                    break
            add("marginal-feasibility", ni.name, token, good, detail)

            # resolve returns matchings inside A
            good = True
            for t in range(50):
                st = sub.derive(10_000 + t)
                a = None if spec.merged else independent_round(x, st)
                m = resolve(spec, g, x, a, st)
                if not is_matching(g, m) or (a is not None and not m <= a):
                    good = False
                    break
            add("resolve-feasibility", ni.name, token, good)

            # oracle vs Monte Carlo within 3 standard errors; a single edge
            # past 3 sigma among many comparisons is re-measured once with
            # fresh randomness at 4x trials before it counts as a failure
            try:
                exact = exact_balancedness(spec, g, x)

                def deviation(run: int, n: int) -> float:
                    mc = mc_balancedness(spec, g, x, n, sub.derive(999, run))
                    worst = 0.0
                    for ratio, est, half in zip(exact.ratios, mc.ratios, mc.ci_half_widths):
                        sigma = max(half / 2.5758, 1e-12)
                        worst = max(worst, abs(float(ratio) - est) / sigma)
                    return worst

                worst = deviation(0, trials)
                note = ""
                if worst > 3.0:
                    worst = deviation(1, 4 * trials)
                    note = " (after retry)"
                add("oracle-mc-agreement", ni.name, token, worst <= 3.0,
                    f"worst |dev|/sigma = {worst:.2f}{note}")
            except CapabilityError as exc:
                add("oracle-mc-agreement", ni.name, token, True, f"skipped: {exc}")

            # exhaustive monotonicity on small supports (two-stage schemes
            # only; merged variants take no input set)
            if not spec.merged and len(support(x)) <= 8:
                res = verify_monotonicity(spec, g, x, mode="exhaustive")
                add("monotonicity", ni.name, token, res.passed,
                    "" if res.passed else str(res.witness))

        # coupled domination: mixed formula never below the sum formula
        good = True
        for t in range(200):
            q = direct_intensities(g, x, stream.derive(31, ii, t))
            ym = mixed_formula_marginals(g, q)
            ys = sum_formula_marginals(g, q)
            if any(a < b for a, b in zip(ym, ys)):
                good = False
                break
        add("mixed-dominates-sum", ni.name, "-", good)

        if bipartite:
            y = conditional_marginals(
                CLI_SCHEMES["ex2.2"], g, x, frozenset(support(x)), stream.derive(77)
            )
            combo = birkhoff_decompose(g, y)
            ok = (
                combo.reconstruct(g.edge_count) == tuple(Fraction(v) for v in y)
                and len(combo.terms) <= len(support(y)) + 1
            )
            add("decomposition-roundtrip", ni.name, "ex2.2", ok,
                f"{len(combo.terms)} terms")
    return rows
