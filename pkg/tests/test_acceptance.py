"""Acceptance criteria, one test per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  Tolerances are pinned here and nowhere else.
"""

import math
import time
from fractions import Fraction
from itertools import product

import numpy as np

from matchcrs.analytics import (
    CompleteBipartite,
    PendantStar,
    RandomBipartite,
    RandomGeneral,
    ThreePath,
    bipartite_constant,
    double_star_instance,
    estimate_balancedness,
    general_constant,
    general_constant_series,
    generate_instance,
    mc_balancedness,
    optimality_limit,
)
from matchcrs.csfm import (
    continuous_greedy,
    multilinear_estimate,
    round_and_evaluate,
    synthetic_oracle,
)
from matchcrs.graph import Multigraph, support, two_coloring
from matchcrs.oracle import (
    TruncatedDistribution,
    check_stochastic_dominance,
    exact_balancedness,
    exact_direct_marginals,
    path_event_floor,
    path_event_probability,
    sibling_distribution,
    split_edge,
    verify_monotonicity,
)
from matchcrs.randomness import RngStream, independent_round, poisson_pmf, sample_from_pmf
from matchcrs.sampler import birkhoff_decompose, resolve
from matchcrs.schemes import (
    CLI_SCHEMES,
    SchemeKind,
    direct_intensities,
    max_formula_marginals,
    mixed_formula_marginals,
    sum_formula_marginals,
    parse_scheme,
)
from matchcrs.verify import builtin_battery

F = Fraction
CI_TO_SIGMA = 2.5758293035489004


def _report(name: str, ok: bool, detail: str):
    line = f"ACCEPT {name}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def test_criterion_01_bipartite_constant():
    t0 = time.time()
    val = bipartite_constant(1.0)
    elapsed = time.time() - t0
    ok = abs(val - 0.4762) <= 1e-4 and elapsed < 1.0
    _report("01 beta(1)", ok, f"value {val:.6f}, {elapsed * 1000:.1f} ms")


def test_criterion_02_general_constant_identity():
    t0 = time.time()
    closed = general_constant(1.0)
    target = (1 - math.exp(-2)) / 2
    ok = abs(closed - target) <= 1e-9
    worst = 0.0
    for i in range(1, 11):
        b = i / 10
        worst = max(worst, abs(general_constant(b) - general_constant_series(b)))
    elapsed = time.time() - t0
    ok = ok and worst <= 1e-10 and elapsed < 1.0
    _report("02 gamma(1) + series identity", ok,
            f"gamma(1)={closed:.9f}, worst series gap {worst:.2e}, {elapsed * 1000:.0f} ms")


def test_criterion_03_hard_instance_limit():
    t0 = time.time()
    val = optimality_limit(1000, 1.0, trials=10**7, stream=RngStream(2024))
    elapsed = time.time() - t0
    ok = abs(val - 0.4762) <= 3e-3
    _report("03 limit(1000, 1) at 1e7", ok, f"value {val:.6f}, {elapsed:.1f} s")


def test_criterion_04_bipartite_scheme_on_complete_instance():
    t0 = time.time()
    report = estimate_balancedness(
        parse_scheme("alg2"), CompleteBipartite(20, 1.0), 10**6, RngStream(2025)
    )
    elapsed = time.time() - t0
    floor = bipartite_constant(1.0) - 0.005
    ok = report.minimum >= floor
    _report("04 alg2 on knn:20,1 at 1e6", ok,
            f"min ratio {report.minimum:.6f} >= {floor:.6f}, {elapsed:.1f} s")


def test_criterion_05_count_scheme_on_pendant_star():
    t0 = time.time()
    report = estimate_balancedness(
        parse_scheme("ex2.2"), PendantStar(0.001, 1000), 10**6, RngStream(2026)
    )
    elapsed = time.time() - t0
    ratio = report.ratio_of(0)  # the tiny middle edge
    ok = abs(ratio - 0.4481) <= 2e-3
    _report("05 ex2.2 on fig5:0.001,1000 at 1e6", ok,
            f"edge ratio {ratio:.6f} vs 0.4481, {elapsed:.1f} s")


def test_criterion_06_random_order_exact_values():
    g1, x1 = generate_instance(ThreePath(F(1, 10)))
    rep1 = exact_balancedness(parse_scheme("ex4.1"), g1, x1)
    g2, x2 = generate_instance(ThreePath(F(1, 1000)))
    rep2 = exact_balancedness(parse_scheme("ex4.1"), g2, x2)
    ok = rep1.ratio_of(1) == F(37, 100) and rep2.ratio_of(1) == F(333667, 10**6)
    _report("06 ex4.1 exact on path3", ok,
            f"eps=0.1 -> {rep1.ratio_of(1)}, eps=0.001 -> {rep2.ratio_of(1)} "
            f"(~{float(rep2.ratio_of(1)):.6f})")


def test_criterion_07_sum_scheme_tightness():
    t0 = time.time()
    report = estimate_balancedness(
        parse_scheme("alg4"), ThreePath(0.001), 10**6, RngStream(2027)
    )
    elapsed = time.time() - t0
    target = -math.expm1(-1.999) / 1.999
    ratio = report.ratio_of(1)
    ok = abs(ratio - target) <= 2e-3
    _report("07 alg4 on path3:0.001 at 1e6", ok,
            f"middle ratio {ratio:.6f} vs {target:.6f}, {elapsed:.1f} s")


def test_criterion_08_coupled_domination_and_gain():
    stream = RngStream(2028)
    violations = 0
    checked = 0
    for seed in range(100):
        if seed % 2:
            g, x = generate_instance(RandomGeneral(4 + seed % 5, 0.6, 1.0, seed))
        else:
            g, x = generate_instance(RandomBipartite(3 + seed % 3, 0.6, 1.0, seed))
        for t in range(5):
            q = direct_intensities(g, x, stream.derive(seed, t))
            ym = mixed_formula_marginals(g, q)
            ys = sum_formula_marginals(g, q)
            checked += 1
            if any(a < b for a, b in zip(ym, ys)):
                violations += 1

    # three-path-derived gain: the mixed formula beats the sum formula by at
    # least 0.01 conditional on the middle edge carrying a count (its
    # component is always 2-colorable there, the 1/2-versus-1/3 situation)
    gains = []
    for eps in (0.001, 0.1):
        g, x = generate_instance(ThreePath(eps))
        n = 200000
        draws = np.column_stack([
            sample_from_pmf(poisson_pmf(float(x[e])), stream.derive(1000 + int(eps * 1000), e), size=n)
            for e in range(3)
        ]).astype(float)
        present = draws[:, 1] >= 1
        d_sum = draws.sum(axis=1)
        d_max = np.maximum(draws[:, 0] + draws[:, 1], draws[:, 1] + draws[:, 2])
        y_sum = np.where(present, draws[:, 1] / np.where(d_sum, d_sum, 1), 0.0)
        y_max = np.where(present, draws[:, 1] / np.where(d_max, d_max, 1), 0.0)
        gains.append(float((y_max[present] - y_sum[present]).mean()))
    ok = violations == 0 and all(gain >= 0.01 for gain in gains)
    _report("08 mixed dominates sum + gains", ok,
            f"{checked} coupled draws, {violations} violations; "
            f"path gains {gains[0]:.4f}/{gains[1]:.4f} >= 0.01")


def test_criterion_09_clean_path_event():
    t0 = time.time()
    g, x, e = double_star_instance()
    est = path_event_probability(g, x, e, 10**7, RngStream(2029))
    elapsed = time.time() - t0
    floor = 0.33 * 0.33 * math.exp(-4.0)
    ok = (
        est.witnessed_probability >= 0.0018
        and est.clean_path_probability >= est.witnessed_probability
        and abs(floor - 0.001994) <= 1e-5
        and path_event_floor(g, x, e) >= floor
    )
    _report("09 clean-path event at 1e7", ok,
            f"witnessed {est.witnessed_probability:.5f} <= clean {est.clean_path_probability:.5f}, "
            f"analytic floor {floor:.6f}, {elapsed:.1f} s")


def _max_sigma_deviation(exact, mc) -> float:
    worst = 0.0
    for r_exact, r_mc, half in zip(exact.ratios, mc.ratios, mc.ci_half_widths):
        worst = max(worst, abs(float(r_exact) - r_mc) / max(half / CI_TO_SIGMA, 1e-12))
    return worst


def test_criterion_10_oracle_battery():
    # an edge exceeding 3 sigma among hundreds of simultaneous comparisons is
    # expected under perfect agreement; such pairs are re-measured once with
    # fresh randomness at 4x trials, where real bias grows and noise does not
    t0 = time.time()
    battery = builtin_battery(max_edges=8)
    worst_dev = 0.0
    worst_at = ""
    retried = []
    failures = []
    mono_failures = []
    stream = RngStream(2030)
    for ii, ni in enumerate(battery):
        bipartite = two_coloring(ni.g) is not None
        for jj, token in enumerate(sorted(CLI_SCHEMES)):
            spec = CLI_SCHEMES[token]
            if spec.kind in (SchemeKind.BIP_COUNT, SchemeKind.BIP_POISSON) and not bipartite:
                continue
            exact = exact_balancedness(spec, ni.g, ni.x)
            mc = mc_balancedness(spec, ni.g, ni.x, 10**6, stream.derive(ii, jj))
            dev = _max_sigma_deviation(exact, mc)
            if dev > 3.0:
                retried.append(f"{token}@{ni.name}:{dev:.2f}")
                mc = mc_balancedness(
                    spec, ni.g, ni.x, 4 * 10**6, stream.derive(ii, jj, 1)
                )
                dev = _max_sigma_deviation(exact, mc)
                if dev > 3.0:
                    failures.append(f"{token}@{ni.name}:{dev:.2f}")
            if dev > worst_dev:
                worst_dev = dev
                worst_at = f"{token}@{ni.name}"
            if not spec.merged and len(support(ni.x)) <= 8:
                res = verify_monotonicity(spec, ni.g, ni.x, mode="exhaustive")
                if not res.passed:
                    mono_failures.append((token, ni.name, res.witness))
        if bipartite:
            jensen = exact_balancedness(parse_scheme("ex2.2"), ni.g, ni.x)
            assert jensen.minimum >= F(1, 3)
    elapsed = time.time() - t0
    ok = not failures and not mono_failures
    _report("10 oracle battery", ok,
            f"worst |exact-mc|/sigma {worst_dev:.2f} ({worst_at}), "
            f"retried {len(retried)}, failures {failures}, "
            f"{len(mono_failures)} monotonicity failures, {elapsed:.0f} s")


def test_criterion_11_decomposition_and_fidelity():
    t0 = time.time()
    stream = RngStream(2031)
    # 1000 random bipartite marginal vectors decompose exactly
    count = 0
    for i in range(1000):
        g, x = generate_instance(RandomBipartite(2 + i % 4, 0.7, 1.0, i))
        q = direct_intensities(g, x, stream.derive(i))
        y = max_formula_marginals(g, q)
        combo = birkhoff_decompose(g, y)
        assert combo.total_weight() == 1
        assert combo.reconstruct(g.edge_count) == tuple(F(v) for v in y)
        assert len(combo.terms) <= len(support(y)) + 1
        count += 1

    # resolve fidelity: per-edge selection frequency within 3 sigma of exact;
    # a pair past 3 sigma among ~90 comparisons is re-measured once at 4x
    fid_instances = [
        Multigraph.from_edges(5, [(0, 2), (0, 3), (1, 2), (1, 4)]),
        Multigraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)]),
    ]
    fid_x = [(0.45, 0.3, 0.5, 0.35), (0.3, 0.3, 0.3, 0.35)]
    trials = 20000
    worst = 0.0
    retried = 0
    failures = []
    for gi, (g, x) in enumerate(zip(fid_instances, fid_x)):
        bipartite = two_coloring(g) is not None
        for jj, token in enumerate(sorted(CLI_SCHEMES)):
            spec = CLI_SCHEMES[token]
            if spec.kind in (SchemeKind.BIP_COUNT, SchemeKind.BIP_POISSON) and not bipartite:
                continue
            exact = exact_balancedness(spec, g, x)

            def fidelity_deviation(run: int, n: int) -> float:
                counts = [0] * g.edge_count
                for t in range(n):
                    sub = stream.derive(5000 + gi, jj, run, t)
                    a = None if spec.merged else independent_round(x, sub)
                    for e in resolve(spec, g, x, a, sub):
                        counts[e] += 1
                dev = 0.0
                for e in range(g.edge_count):
                    target = float(exact.ratio_of(e)) * float(x[e])
                    sigma = math.sqrt(max(target * (1 - target), 1e-9) / n)
                    dev = max(dev, abs(counts[e] / n - target) / sigma)
                return dev

            dev = fidelity_deviation(0, trials)
            if dev > 3.0:
                retried += 1
                dev = fidelity_deviation(1, 4 * trials)
                if dev > 3.0:
                    failures.append(f"{token}@{gi}:{dev:.2f}")
            worst = max(worst, dev)
    elapsed = time.time() - t0
    ok = count == 1000 and not failures
    _report("11 decomposition + resolve fidelity", ok,
            f"1000 exact roundtrips, worst fidelity deviation {worst:.2f} sigma "
            f"(retried {retried}, failures {failures}), {elapsed:.0f} s")


def test_criterion_12_stochastic_dominance_grid():
    results = []
    for lp, lq, lx in product((0.25, 0.5, 1.0), repeat=3):
        p = TruncatedDistribution.poisson(lp, length=20)
        q = TruncatedDistribution.poisson(lq, length=20)
        xyz = TruncatedDistribution.poisson(lx, length=20)
        results.append(check_stochastic_dominance(p, q, xyz))
    ok = all(results)
    _report("12 stochastic dominance grid", ok,
            f"{sum(results)}/{len(results)} parameter triples pass")


def test_criterion_13_splitting_reduction():
    # sibling law: total mass 1, superset masses, exact product independence
    mass_ok = True
    for k in (1, 2, 3, 4):
        law = sibling_distribution(F(4, 5), k)
        mass_ok = mass_ok and sum(law.values()) == 1
        per = F(4, 5) / k
        for mask in range(1 << k):
            target = frozenset(i for i in range(k) if mask >> i & 1)
            if target:
                prob = F(4, 5) * law.get(target, F(0))
            else:
                prob = 1 - F(4, 5) + F(4, 5) * law[frozenset()]
            mass_ok = mass_ok and prob == per ** len(target) * (1 - per) ** (k - len(target))

    # the 2-edge witness: path with x_e = 0.8 and a neighbor at 0.6
    g = Multigraph.from_edges(3, [(0, 1), (1, 2)])
    x_float = (0.8, 0.6)
    unsplit = exact_direct_marginals(parse_scheme("alg4"), g, x_float)
    g_split, x_split, siblings = split_edge(g, x_float, 0, 8)
    split_vals = exact_direct_marginals(parse_scheme("alg4"), g_split, x_split)
    sibling_sum = sum(split_vals[s] for s in siblings)
    poisson_invariant = abs(sibling_sum - unsplit[0]) <= 1e-9

    # random-order scheme: the lifted pipeline equals the split-instance
    # reconstruction, in exact rational arithmetic
    x_rat = (F(4, 5), F(3, 5))
    law = sibling_distribution(x_rat[0], 8)
    lifted = F(0)
    for d_set, mass in law.items():
        if not d_set:
            continue
        for g_in in (False, True):
            w = mass * (x_rat[1] if g_in else 1 - x_rat[1])
            lifted += w * F(len(d_set), len(d_set) + (1 if g_in else 0))
    g_split_r, x_split_r, siblings_r = split_edge(g, x_rat, 0, 8)
    rep = exact_balancedness(parse_scheme("ex4.1"), g_split_r, x_split_r)
    reconstruction = sum(
        rep.ratio_of(s) * x_split_r[s] for s in siblings_r
    ) / x_rat[0]
    lift_ok = lifted == reconstruction

    ok = mass_ok and poisson_invariant and lift_ok
    _report("13 splitting reduction", ok,
            f"mass+independence exact, sum-formula sibling sum {sibling_sum:.9f} vs "
            f"{unsplit[0]:.9f}, lifted random-order balancedness {lifted} == "
            f"reconstruction {reconstruction}")


def test_criterion_14_pipeline_inequality():
    t0 = time.time()
    g = Multigraph.from_edges(8, [(0, 4), (0, 5), (1, 4), (1, 6),
                                  (2, 5), (2, 7), (3, 6), (3, 7)])
    f = synthetic_oracle("coverage", g, seed=14)
    stream = RngStream(2032)
    x = continuous_greedy(f, g, 1.0, steps=20, samples=25, stream=stream.derive(0))
    ml = multilinear_estimate(f, x, 100000, stream.derive(1))
    mean, stderr = round_and_evaluate(f, g, x, parse_scheme("alg1"), 10**5, stream.derive(2))
    bound = bipartite_constant(1.0)
    sigma = math.sqrt(stderr**2 + (bound * ml.stderr) ** 2)
    elapsed = time.time() - t0
    ok = mean >= bound * ml.value - 3 * sigma
    _report("14 pipeline inequality", ok,
            f"rounded {mean:.4f} >= {bound:.4f} x {ml.value:.4f} - 3 sigma "
            f"({bound * ml.value - 3 * sigma:.4f}), {elapsed:.0f} s")
