"""Acceptance criteria 1-10, each run at its stated tolerance.

Every test records one ``criterion N: PASS|FAIL`` line; the lines are printed
in the pytest terminal summary (see ``conftest.py``) and when this file is run
directly with ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

sys.path.insert(0, str(Path(__file__).resolve().parent))

from ggmselect import graph as gr  # noqa: E402
from ggmselect import multitest as mt  # noqa: E402
from ggmselect import stats as st  # noqa: E402
from ggmselect.graph import Graph, NoSeparatorError  # noqa: E402
from ggmselect.io import read_dataset  # noqa: E402
from ggmselect.selection import (GraphClass, PriorKnowledge, build_hypotheses,  # noqa: E402
                                 faithful_graph, reduce_conditioning, run_selection)
from ggmselect.simulation import estimate_error_rates, fig2_config  # noqa: E402

from oracles import (UPPER_UND7, UPPER_DAG5, REF_SIGMA, REF_SIGMA_INV,  # noqa: E402
                     brute_d_sep, brute_min_separator, brute_sep_bidirected,
                     brute_sep_undirected, mc_correlation_covariance, random_disjoint_sets,
                     random_graph, random_pd)

DATA = Path(__file__).resolve().parent.parent / "data" / "chain4_n2000.csv"
RESULTS: dict[int, str] = {}


def record(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


# --- 1 ---------------------------------------------------------------------------


def test_criterion_01_reference_inverse():
    inv_err = float(np.abs(np.linalg.inv(REF_SIGMA) - REF_SIGMA_INV).max())
    und = faithful_graph(REF_SIGMA, GraphClass("undirected"))
    bid = faithful_graph(REF_SIGMA, GraphClass("bidirected"))
    ok = inv_err <= 1e-10 and und == Graph.complete(3) and bid.edges == {(1, 2), (2, 3)}
    record(1, ok, f"inverse max error {inv_err:.1e}; undirected {und.sorted_edges()}; "
                  f"bidirected {bid.sorted_edges()}")


# --- 2 ---------------------------------------------------------------------------


def test_criterion_02_augmentation():
    labels = list(range(40))
    adj = mt.AdjustedPValues(np.linspace(1e-4, 0.5, 40), "holm", labels)
    base = frozenset(range(19))
    gfwer = len(mt.augment_gfwer(base, adj, 5))
    tppfp = len(mt.augment_tppfp(base, adj, 0.22))
    record(2, gfwer == 24 and tppfp == 24, f"19 + gfwer(k=5) -> {gfwer}; 19 + tppfp(0.22) -> {tppfp}")


# --- 3 and 8 ---------------------------------------------------------------------


@lru_cache(maxsize=1)
def fig2_table():
    start = time.perf_counter()
    table = estimate_error_rates(fig2_config(replicates=2000, alpha=0.1, seed=0, model_seed=0))
    return table, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_03_fig2_error_control():
    table, secs = fig2_table()
    alpha = 0.1
    over = [(r.method, r.n, round(r.rate, 4)) for r in table.rows if r.rate > alpha + 3 * r.stderr]
    row = table.get("maxt-step", 500)
    se = row.stderr
    exact = abs(row.rate - alpha) <= 3 * se
    failures = sum(r.failures for r in table.rows)
    ok = not over and exact and failures == 0
    record(3, ok, f"violations {over or 'none'}; maxt-step n=500 FWER {row.rate:.4f} "
                  f"(band {alpha - 3 * se:.4f}..{alpha + 3 * se:.4f}); {secs:.0f}s")


@pytest.mark.slow
def test_criterion_08_consistency():
    table, _ = fig2_table()
    alpha = 0.1
    parts, ok = [], True
    for method in ("sidak-step", "maxt-step"):
        row = table.get(method, 500)
        se = math.sqrt(row.exact_recovery * (1 - row.exact_recovery) / row.replicates)
        bound = 1 - alpha - 3 * se
        ok &= row.exact_recovery >= bound
        parts.append(f"{method} exact recovery {row.exact_recovery:.4f} (need >= {bound:.4f})")
    record(8, ok, "; ".join(parts))


# --- 4 ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_04_covariance_triangle():
    rng = np.random.default_rng(2024)
    worst_engine, worst_mc = 0.0, 0.0
    for k in range(20):
        p = 4 if k < 10 else 5
        Sigma = random_pd(rng, p)
        for mode in ("marginal", "saturated"):
            closed = st.asym_cov_closed(Sigma, mode).matrix
            cond = st.conditioning_sets(p, mode)
            delta = st.asym_cov_delta(Sigma, cond).matrix
            worst_engine = max(worst_engine, float(np.abs(closed - delta).max()))
            if mode == "marginal" or k % 2 == 0:
                emp = mc_correlation_covariance(Sigma, cond, n=1000, datasets=200_000, seed=k)
                rel = np.abs(np.diag(emp) - np.diag(delta)) / np.diag(emp)
                rel_c = np.abs(np.diag(emp) - np.diag(closed)) / np.diag(emp)
                worst_mc = max(worst_mc, float(rel.max()), float(rel_c.max()))
    ok = worst_engine <= 1e-6 and worst_mc <= 0.05
    record(4, ok, f"closed vs delta max |diff| {worst_engine:.2e}; "
                  f"max relative diagonal error vs 200,000 simulated datasets {worst_mc:.4f}")


# --- 5 ---------------------------------------------------------------------------


def _separator_mismatches(rng) -> tuple[int, int]:
    sep = {"undirected": (gr.separates_undirected, brute_sep_undirected),
           "bidirected": (gr.separates_bidirected, brute_sep_bidirected),
           "directed": (gr.d_separates, brute_d_sep)}
    checks = mismatches = 0
    for kind, (fast, slow) in sep.items():
        for _ in range(200):
            p = int(rng.integers(3, 8))
            g = random_graph(rng, p, kind, rng.uniform(0.15, 0.7))
            for _ in range(3):
                A, B, C = random_disjoint_sets(rng, p)
                checks += 1
                mismatches += fast(g, A, B, C) != slow(g, A, B, C)
            i, j = (int(v) for v in rng.choice(np.arange(1, p + 1), 2, replace=False))
            if kind == "undirected":
                g_ij = g.without_edge(i, j)
                want = brute_min_separator(brute_sep_undirected, g_ij, i, j, set(g.vertices) - {i, j})
                checks += 1
                mismatches += gr.min_vertex_separator(g_ij, i, j) != want
            elif kind == "directed":
                order = gr.topological_extension(g)
                i, j = sorted((i, j), key=order.index)
                g_ij = g.without_edge(i, j) if g.has_edge(i, j) else g
                allowed = set(order[:order.index(j)]) - {i}
                want = brute_min_separator(brute_d_sep, g_ij, i, j, allowed)
                checks += 1
                try:
                    got = gr.min_d_separator(g_ij, i, j, allowed)
                except NoSeparatorError:
                    mismatches += want is not None
                    continue
                anc = gr.ancestors(g_ij, {i, j})
                mismatches += (want is None or len(got) != len(want)
                               or not brute_d_sep(g_ij, {i}, {j}, got)
                               or got != brute_min_separator(brute_d_sep, g_ij, i, j, allowed & anc))
    return checks, mismatches


def test_criterion_05_separation_oracles():
    checks, mismatches = _separator_mismatches(np.random.default_rng(55))
    record(5, mismatches == 0, f"{mismatches} mismatches in {checks} brute-force comparisons")


# --- 6 ---------------------------------------------------------------------------


def test_criterion_06_adjustment_suite():
    rng = np.random.default_rng(66)
    tol = 1e-12
    dominance_fail = 0
    for _ in range(1000):
        m = int(rng.integers(1, 30))
        p = rng.uniform(0, 1, m) ** rng.uniform(1, 6)
        b, h = mt.bonferroni(p).values, mt.holm(p).values
        s, ss = mt.sidak(p).values, mt.sidak_step(p).values
        dominance_fail += not (np.all(b >= s - tol) and np.all(s >= ss - tol) and np.all(b >= h - tol))

    B = 100_000
    p = np.array([0.0005, 0.003, 0.01, 0.02, 0.05, 0.1, 0.3, 0.7])
    maxt = mt.maxt(norm.isf(p / 2), 4, np.eye(len(p)), draws=B, seed=6).values
    ref = mt.sidak(p).values
    se = np.sqrt(ref * (1 - ref) / B)
    maxt_ok = bool(np.all(np.abs(maxt - ref) <= 3 * se + tol))

    single_fail = []
    for method in mt.METHODS:
        v = mt.adjust(method, [0.04], z=norm.isf([0.02]), n_eff=4, corr=np.eye(1), draws=B, seed=1).values[0]
        limit = 3 * math.sqrt(0.04 * 0.96 / B) if method.startswith("maxt") else tol
        if abs(v - 0.04) > limit:
            single_fail.append(method)
    ok = dominance_fail == 0 and maxt_ok and not single_fail
    record(6, ok, f"dominance failures {dominance_fail}/1000; max-T vs Sidak max |diff| / se "
                  f"{float(np.max(np.abs(maxt - ref) / np.maximum(se, 1e-300))):.2f}; "
                  f"m=1 mismatches {single_fail or 'none'}")


# --- 7 ---------------------------------------------------------------------------


def _random_undirected_instance(rng, p):
    while True:
        truth = random_graph(rng, p, "undirected", rng.uniform(0.15, 0.5))
        K = np.eye(p)
        for i, j in truth.edges:
            K[i - 1, j - 1] = K[j - 1, i - 1] = rng.choice([-1, 1]) * rng.uniform(0.1, 0.4)
        if np.linalg.eigvalsh(K).min() > 0.05:
            extra = [e for e in st.upper_pairs(p) if not truth.has_edge(*e) and rng.random() < 0.4]
            return np.linalg.inv(K), Graph(p, "undirected", truth.edges | frozenset(extra))


def _random_dag_instance(rng, p):
    truth = random_graph(rng, p, "directed", rng.uniform(0.15, 0.5))
    # relabel so that the natural order is a well-numbering
    order = gr.topological_extension(truth)
    pos = {v: k + 1 for k, v in enumerate(order)}
    truth = Graph.from_edges(p, "directed", [(pos[a], pos[b]) for a, b in truth.edges])
    Bm = np.zeros((p, p))
    for a, b in truth.edges:
        Bm[a - 1, b - 1] = rng.choice([-1, 1]) * rng.uniform(0.3, 0.9)
    A = np.linalg.inv(np.eye(p) - Bm.T)
    extra = [(a, b) for a in range(1, p + 1) for b in range(a + 1, p + 1)
             if not truth.has_edge(a, b) and rng.random() < 0.4]
    return A @ A.T, Graph(p, "directed", truth.edges | frozenset(extra))


def _equivalence_mismatches(Sigma, upper, cls_, minimal=True):
    p = upper.p
    prior = PriorKnowledge(absent=frozenset(e for e in cls_.pairs(p) if not upper.adjacent(*e)))
    full = build_hypotheses(cls_, p, prior)
    red = reduce_conditioning(full, prior, minimal=minimal)
    bad = 0
    for h, r in zip(full, red):
        a = abs(st.partial_correlation(Sigma, h.i, h.j, h.conditioning)) <= 1e-8
        b = abs(st.partial_correlation(Sigma, r.i, r.j, r.conditioning)) <= 1e-8
        bad += a != b
    return bad, len(full)


def test_criterion_07_population_equivalence():
    rng = np.random.default_rng(77)
    und, dag = GraphClass("undirected"), None
    bad = total = 0
    for _ in range(50):
        p = int(rng.integers(3, 8))
        Sigma, upper = _random_undirected_instance(rng, p)
        b, t = _equivalence_mismatches(Sigma, upper, und)
        bad, total = bad + b, total + t
    for _ in range(50):
        p = int(rng.integers(3, 8))
        Sigma, upper = _random_dag_instance(rng, p)
        dag = GraphClass("dag", tuple(range(1, p + 1)))
        for minimal in (True, False):
            b, t = _equivalence_mismatches(Sigma, upper, dag, minimal)
            bad, total = bad + b, total + t

    # upper-graph fixtures, with the dotted edge both absent and present in the truth
    fixture_bad = 0
    for keep in (False, True):
        t5 = UPPER_UND7 if keep else UPPER_UND7.without_edge(3, 6)
        K = np.eye(7)
        for i, j in t5.edges:
            K[i - 1, j - 1] = K[j - 1, i - 1] = -0.25
        S5 = np.linalg.inv(K)
        full = abs(st.partial_correlation(S5, 3, 6, set(range(1, 8)) - {3, 6})) <= 1e-8
        for C in ({4, 5}, {5, 7}):
            fixture_bad += full != (abs(st.partial_correlation(S5, 3, 6, C)) <= 1e-8)
        t6 = UPPER_DAG5 if keep else UPPER_DAG5.without_edge(1, 5)
        Bm = np.zeros((5, 5))
        for a, b in t6.edges:
            Bm[a - 1, b - 1] = 0.6
        A = np.linalg.inv(np.eye(5) - Bm.T)
        S6 = A @ A.T
        full = abs(st.partial_correlation(S6, 1, 5, {2, 3, 4})) <= 1e-8
        for C in ({3, 4}, {2}):
            fixture_bad += full != (abs(st.partial_correlation(S6, 1, 5, C)) <= 1e-8)
    ok = bad == 0 and fixture_bad == 0
    record(7, ok, f"{bad} mismatches over {total} uncertain edges (100 instances); "
                  f"upper-graph fixtures {fixture_bad} mismatches")


# --- 9 ---------------------------------------------------------------------------


def test_criterion_09_end_to_end_fixture():
    res = run_selection(read_dataset(DATA), GraphClass("undirected"), method="holm",
                        spec=mt.ErrorRateSpec("fwer", 0.1), seed=7)
    ok = res.graph.edges == {(1, 2), (2, 4), (3, 4)}
    record(9, ok, f"selected {res.graph.sorted_edges()}")


# --- 10 --------------------------------------------------------------------------


def test_criterion_10_t_versus_z():
    worst = 0.0
    for n_eff in (200, 250, 500, 1000, 5000):
        for r in np.linspace(-0.2, 0.2, 81):
            worst = max(worst, abs(st.t_pvalue(r, n_eff) - st.z_pvalue(st.fisher_z(r), n_eff)))
    record(10, worst <= 0.01, f"max |t p - z p| = {worst:.5f}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
