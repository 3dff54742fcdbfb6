"""Multivariate normal sampling, random ground-truth models and the error-rate harness."""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import graph as gr
from . import multitest as mt
from . import stats as st
from .selection import GraphClass, SelectionError, faithful_graph, population_partials, select_from_summary

log = logging.getLogger(__name__)

#: rows per independently seeded block in :func:`sample_mvn`
ROW_BLOCK = 1024
BENCHMARK_SAMPLE_SIZES = (25, 50, 100, 200, 300, 500)


class SimulationError(ValueError):
    pass


def _factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise SimulationError("covariance must be square")
    try:
        return mt.null_factor(cov)
    except mt.AdjustmentError as exc:
        raise SimulationError(str(exc)) from None


def sample_mvn(cov, count: int, seed: int) -> np.ndarray:
    """``count`` zero-mean normal rows with covariance ``cov``.

    Row ``r`` depends only on ``(seed, r)``: rows come in blocks of
    :data:`ROW_BLOCK`, block ``k`` drawn from a generator seeded ``(seed, k)``.
    """
    L = _factor(cov)
    p = L.shape[0]
    blocks = []
    for k in range(math.ceil(count / ROW_BLOCK)):
        rng = np.random.default_rng([seed, k])
        blocks.append(rng.standard_normal((ROW_BLOCK, p)))
    if not blocks:
        return np.zeros((0, p))
    return np.vstack(blocks)[:count] @ L.T


@dataclass(frozen=True)
class ModelSpec:
    p: int
    graph_class: GraphClass
    edges: int
    lo: float = 0.2
    hi: float = 0.55
    seed: int = 0
    max_tries: int = 10_000

    def __post_init__(self):
        if not 0 <= self.edges <= self.p * (self.p - 1) // 2:
            raise SimulationError(f"edge count {self.edges} impossible for p={self.p}")
        if not 0 < self.lo <= self.hi < 1:
            raise SimulationError("need 0 < lo <= hi < 1")


def _random_pairs(rng, pairs, count):
    idx = rng.choice(len(pairs), size=count, replace=False)
    return [pairs[k] for k in sorted(idx)]


def _signed_magnitudes(rng, count, lo, hi):
    return rng.uniform(lo, hi, size=count) * rng.choice([-1.0, 1.0], size=count)


def _attempt(spec: ModelSpec, rng) -> np.ndarray | None:
    p, kind = spec.p, spec.graph_class.kind
    if kind == "dag":
        order = spec.graph_class.order
        pairs = [(order[a], order[b]) for b in range(p) for a in range(b)]
    else:
        pairs = list(combinations(range(1, p + 1), 2))
    chosen = _random_pairs(rng, pairs, spec.edges)
    vals = _signed_magnitudes(rng, len(chosen), spec.lo, spec.hi)
    if kind in ("undirected", "bidirected"):
        # unit-diagonal concentration (undirected) or covariance (bidirected):
        # the drawn values are then exactly the partial correlations, resp.
        # correlations; indefinite draws are rejected
        M = np.eye(p)
        for (i, j), v in zip(chosen, vals):
            M[i - 1, j - 1] = M[j - 1, i - 1] = -v if kind == "undirected" else v
        if np.linalg.eigvalsh(M).min() <= 0:
            return None
        return np.linalg.inv(M) if kind == "undirected" else M
    # DAG: X_j = sum_k beta_kj X_k + eps_j along the order, unit error variances;
    # shrink coefficients until no achieved partial correlation exceeds hi
    B = np.zeros((p, p))
    for (i, j), v in zip(chosen, vals):
        B[i - 1, j - 1] = v
    for _ in range(200):
        A = np.linalg.inv(np.eye(p) - B.T)
        Sigma = A @ A.T
        rho = population_partials(Sigma, spec.graph_class)
        top = max((abs(rho[e]) for e in chosen), default=0.0)
        if top <= spec.hi:
            return Sigma
        B *= 0.95
    return None


def generate_model(spec: ModelSpec) -> tuple[np.ndarray, gr.Graph]:
    """Random covariance with exactly ``spec.edges`` nonzero class partial correlations.

    Magnitudes are drawn uniformly from ``[lo, hi]`` with random signs.  The
    achieved partial correlations on the chosen edges must lie in
    ``[0.9 lo, hi]``; draws failing that, positive definiteness, or the
    pairwise faithfulness check are retried from the next seed offset.
    """
    cls_ = spec.graph_class
    for attempt in range(spec.max_tries):
        rng = np.random.default_rng([spec.seed, attempt])
        Sigma = _attempt(spec, rng)
        if Sigma is None:
            continue
        Sigma = (Sigma + Sigma.T) / 2
        truth = faithful_graph(Sigma, cls_)
        if len(truth) != spec.edges:
            continue
        rho = population_partials(Sigma, cls_)
        mags = [abs(rho[e]) for e in truth.edges]
        if all(0.9 * spec.lo <= m <= spec.hi for m in mags):
            return Sigma, truth
    raise SimulationError(f"no admissible model after {spec.max_tries} attempts")


def fig2_model(seed: int = 0) -> tuple[np.ndarray, gr.Graph]:
    """Benchmark scenario behind ``simulate --fig2``: 7 variables, 9 edges, partials in [0.2, 0.55]."""
    return generate_model(ModelSpec(7, GraphClass("undirected"), 9, 0.2, 0.55, seed))


# --- harness --------------------------------------------------------------------


@dataclass(frozen=True)
class HarnessConfig:
    Sigma: np.ndarray
    truth: gr.Graph
    graph_class: GraphClass
    sample_sizes: tuple[int, ...] = BENCHMARK_SAMPLE_SIZES
    replicates: int = 2000
    methods: tuple[str, ...] = mt.METHODS
    error_rate: mt.ErrorRateSpec = field(default_factory=lambda: mt.ErrorRateSpec("fwer", 0.1))
    seed: int = 0
    draws: int = 10_000

    def __post_init__(self):
        if self.replicates < 1:
            raise SimulationError("need at least one replicate")
        p = np.asarray(self.Sigma).shape[0]
        for n in self.sample_sizes:
            if n < p + 1:
                raise SimulationError(f"sample size {n} below p + 1 = {p + 1}")
        for m in self.methods:
            if m not in mt.METHODS:
                raise SimulationError(f"unknown method {m!r}")


@dataclass
class ErrorRateRow:
    method: str
    n: int
    rate: float
    stderr: float
    replicates: int
    exact_recovery: float
    mean_false_edges: float
    failures: int = 0


@dataclass
class ErrorRateTable:
    error_rate: mt.ErrorRateSpec
    rows: list[ErrorRateRow]

    def get(self, method: str, n: int) -> ErrorRateRow:
        for row in self.rows:
            if row.method == method and row.n == n:
                return row
        raise KeyError((method, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "n", "rate", "stderr", "R", "exact_recovery", "mean_false_edges", "failures"])
        for r in self.rows:
            w.writerow([r.method, r.n, f"{r.rate:.6f}", f"{r.stderr:.6f}", r.replicates,
                        f"{r.exact_recovery:.6f}", f"{r.mean_false_edges:.6f}", r.failures])
        return buf.getvalue()


def replicate_seed(master: int, n_index: int, rep: int) -> int:
    return int(np.random.SeedSequence([master, n_index, rep]).generate_state(1)[0])


def error_event(selected: frozenset, truth: gr.Graph, spec: mt.ErrorRateSpec) -> float:
    """Per-replicate contribution: 0/1 event, or the false proportion for FDR."""
    false = sum(1 for e in selected if not truth.adjacent(*e))
    if spec.kind == "fdr":
        return false / len(selected) if selected else 0.0
    if spec.kind == "gfwer":
        return float(false >= spec.k + 1)
    if spec.kind == "tppfp":
        return float(selected and false / len(selected) > spec.lam)
    return float(false >= 1)


def _run_replicate(cfg: HarnessConfig, n_index: int, rep: int):
    n = cfg.sample_sizes[n_index]
    seed = replicate_seed(cfg.seed, n_index, rep)
    out = {}
    try:
        summary = st.summarize(sample_mvn(cfg.Sigma, n, seed))
    except st.StatsError:
        return {m: None for m in cfg.methods}
    for method in cfg.methods:
        try:
            res = select_from_summary(summary, cfg.graph_class, method=method, spec=cfg.error_rate,
                                      draws=cfg.draws, seed=seed)
        except SelectionError:
            out[method] = None
            continue
        sel = res.graph.edges
        false = sum(1 for e in sel if not cfg.truth.adjacent(*e))
        exact = float(len(sel) == len(cfg.truth) and false == 0)
        out[method] = (error_event(sel, cfg.truth, cfg.error_rate), exact, false)
    return out


def _run_chunk(args):
    cfg, n_index, reps = args
    return n_index, [_run_replicate(cfg, n_index, r) for r in reps]


def estimate_error_rates(cfg: HarnessConfig, workers: int = 1, progress=None) -> ErrorRateTable:
    """Empirical error rates per (method, n); deterministic in ``cfg.seed``.

    Results do not depend on ``workers``: each replicate's randomness is
    derived from ``(seed, n index, replicate)`` only.
    """
    chunk = 50
    jobs = [(cfg, k, range(s, min(s + chunk, cfg.replicates)))
            for k in range(len(cfg.sample_sizes)) for s in range(0, cfg.replicates, chunk)]
    results: dict[int, list] = {k: [] for k in range(len(cfg.sample_sizes))}
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            done = pool.map(_run_chunk, jobs)
            for n_index, reps in done:
                results[n_index].extend(reps)
                if progress:
                    progress(n_index, len(results[n_index]))
    else:
        for job in jobs:
            n_index, reps = _run_chunk(job)
            results[n_index].extend(reps)
            if progress:
                progress(n_index, len(results[n_index]))

    rows = []
    for method in cfg.methods:
        for k, n in enumerate(cfg.sample_sizes):
            vals = [r[method] for r in results[k] if r[method] is not None]
            failures = len(results[k]) - len(vals)
            R = len(vals)
            if R == 0:
                rows.append(ErrorRateRow(method, n, float("nan"), float("nan"), 0, float("nan"),
                                         float("nan"), failures))
                continue
            ev = np.array([v[0] for v in vals])
            rate = float(ev.mean())
            if cfg.error_rate.kind == "fdr":
                se = float(ev.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
            else:
                se = math.sqrt(rate * (1 - rate) / R)
            rows.append(ErrorRateRow(method, n, rate, se, R,
                                     float(np.mean([v[1] for v in vals])),
                                     float(np.mean([v[2] for v in vals])), failures))
    return ErrorRateTable(cfg.error_rate, rows)


def fig2_config(replicates: int = 2000, alpha: float = 0.1, seed: int = 0, model_seed: int = 0,
                methods=mt.METHODS, sample_sizes=BENCHMARK_SAMPLE_SIZES, draws: int = 10_000) -> HarnessConfig:
    Sigma, truth = fig2_model(model_seed)
    return HarnessConfig(Sigma, truth, GraphClass("undirected"), tuple(sample_sizes), replicates,
                         tuple(methods), mt.ErrorRateSpec("fwer", alpha), seed, draws)
