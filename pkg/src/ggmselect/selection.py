"""Graph selection by testing vanishing (partial) correlations.

The pipeline: summarize the data, build one hypothesis per uncertain vertex
pair, optionally shrink conditioning sets using prior knowledge, compute
Fisher-z p-values, adjust them, apply the error-rate rule and assemble the
selected graph.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import graph as gr
from . import multitest as mt
from . import stats as st

log = logging.getLogger(__name__)

CLASSES = ("undirected", "bidirected", "dag")
_GRAPH_KIND = {"undirected": gr.UNDIRECTED, "bidirected": gr.BIDIRECTED, "dag": gr.DIRECTED}


class SelectionError(RuntimeError):
    """Failure inside the selection pipeline, tagged with the stage that failed."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class GraphClass:
    """Model class; a DAG class carries the assumed well-numbering as vertex labels."""

    kind: str
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in CLASSES:
            raise ValueError(f"unknown graph class {self.kind!r}")
        if self.kind == "dag" and self.order is None:
            raise ValueError("a DAG class needs a well-numbering (ordering)")
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(v) for v in self.order))

    @property
    def graph_kind(self) -> str:
        return _GRAPH_KIND[self.kind]

    def rank(self, p: int) -> dict[int, int]:
        order = self.order if self.order is not None else tuple(range(1, p + 1))
        if sorted(order) != list(range(1, p + 1)):
            raise ValueError(f"ordering {order} is not a permutation of 1..{p}")
        return {v: k for k, v in enumerate(order)}

    def pair(self, i: int, j: int, p: int) -> tuple[int, int]:
        """Canonical label of the pair: (low, high) label, or (earlier, later) for a DAG."""
        if self.kind == "dag":
            rk = self.rank(p)
            return (i, j) if rk[i] < rk[j] else (j, i)
        return (min(i, j), max(i, j))

    def pairs(self, p: int) -> list[tuple[int, int]]:
        if self.kind == "dag":
            order = self.order
            return [(order[a], order[b]) for b in range(p) for a in range(b)]
        return st.upper_pairs(p)


@dataclass(frozen=True)
class PriorKnowledge:
    """Edges known absent (``absent``) and known present (``present``)."""

    absent: frozenset = frozenset()
    present: frozenset = frozenset()

    @classmethod
    def empty(cls) -> "PriorKnowledge":
        return cls()

    def normalized(self, cls_: GraphClass, p: int) -> "PriorKnowledge":
        def norm(edges):
            out = set()
            for i, j in edges:
                i, j = int(i), int(j)
                if not (1 <= i <= p and 1 <= j <= p) or i == j:
                    raise ValueError(f"prior edge ({i}, {j}) invalid for p={p}")
                e = cls_.pair(i, j, p)
                if cls_.kind == "dag" and e != (i, j):
                    raise ValueError(f"prior edge {i} -> {j} contradicts the well-numbering")
                out.add(e)
            return frozenset(out)

        absent, present = norm(self.absent), norm(self.present)
        if absent & present:
            raise ValueError(f"edges both known absent and present: {sorted(absent & present)}")
        return PriorKnowledge(absent, present)

    def uncertain(self, cls_: GraphClass, p: int) -> list[tuple[int, int]]:
        known = self.absent | self.present
        return [e for e in cls_.pairs(p) if e not in known]

    def upper_graph(self, cls_: GraphClass, p: int) -> gr.Graph:
        return gr.Graph.from_edges(p, cls_.graph_kind,
                                   [e for e in cls_.pairs(p) if e not in self.absent])


@dataclass(frozen=True)
class Hypothesis:
    i: int
    j: int
    conditioning: frozenset
    n_eff: int | None = None

    @property
    def label(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class HypothesisSet:
    graph_class: GraphClass
    p: int
    hypotheses: tuple[Hypothesis, ...]
    reduced: bool = False

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self):
        return iter(self.hypotheses)

    @property
    def labels(self) -> list[tuple[int, int]]:
        return [h.label for h in self.hypotheses]

    def conditioning(self) -> dict[tuple[int, int], frozenset]:
        return {h.label: h.conditioning for h in self.hypotheses}

    def with_sample_size(self, n: int) -> "HypothesisSet":
        hyps = tuple(Hypothesis(h.i, h.j, h.conditioning, st.effective_sample_size(n, h.conditioning))
                     for h in self.hypotheses)
        return HypothesisSet(self.graph_class, self.p, hyps, self.reduced)


@dataclass
class SelectionResult:
    graph: gr.Graph
    graph_class: GraphClass
    alpha: float
    method: str
    error_rate: mt.ErrorRateSpec
    table: list[dict]
    names: tuple[str, ...]
    n: int
    prior: PriorKnowledge = field(default_factory=PriorKnowledge)
    draws: int | None = None
    seed: int | None = None
    reduced: bool = False
    decision_basis: str = "adjusted"
    notes: list[str] = field(default_factory=list)

    @property
    def edges(self) -> frozenset:
        return self.graph.edges


# --- hypotheses ---------------------------------------------------------------


def build_hypotheses(cls_: GraphClass, p: int, prior: PriorKnowledge | None = None) -> HypothesisSet:
    """One hypothesis per uncertain pair with the class's default conditioning set."""
    prior = (prior or PriorKnowledge()).normalized(cls_, p)
    rank = cls_.rank(p)
    everything = frozenset(range(1, p + 1))
    hyps = []
    for i, j in prior.uncertain(cls_, p):
        if cls_.kind == "undirected":
            C = everything - {i, j}
        elif cls_.kind == "bidirected":
            C = frozenset()
        else:
            C = frozenset(v for v in everything if rank[v] < rank[j]) - {i}
        hyps.append(Hypothesis(i, j, C))
    return HypothesisSet(cls_, p, tuple(hyps))


def reduce_conditioning(hyps: HypothesisSet, prior: PriorKnowledge | None = None,
                        minimal: bool = True) -> HypothesisSet:
    """Replace each conditioning set by a smaller one valid under the upper graph.

    Undirected: minimum separator of ``i`` and ``j`` in the upper graph with
    the edge removed.  DAG: minimum d-separator among vertices up to ``j`` in
    the ordering, or the parents of ``j`` when ``minimal`` is false.
    Bidirected sets are already empty and are returned unchanged.
    """
    cls_ = hyps.graph_class
    if cls_.kind == "bidirected":
        return hyps
    prior = (prior or PriorKnowledge()).normalized(cls_, hyps.p)
    upper = prior.upper_graph(cls_, hyps.p)
    rank = cls_.rank(hyps.p)
    out = []
    for h in hyps:
        g_ij = upper.without_edge(h.i, h.j)
        if cls_.kind == "undirected":
            C = gr.min_vertex_separator(g_ij, h.i, h.j)
        elif minimal:
            allowed = frozenset(v for v in g_ij.vertices if rank[v] < rank[h.j]) - {h.i}
            C = gr.min_d_separator(g_ij, h.i, h.j, allowed)
        else:
            C = gr.parents(g_ij, h.j)
        if len(C) > len(h.conditioning):
            C = h.conditioning
        out.append(Hypothesis(h.i, h.j, frozenset(C)))
    return HypothesisSet(cls_, hyps.p, tuple(out), reduced=True)


# --- statistics ----------------------------------------------------------------


@dataclass(frozen=True)
class TestStatistics:
    labels: tuple[tuple[int, int], ...]
    r: np.ndarray
    z: np.ndarray
    n_eff: np.ndarray
    pvalues: np.ndarray


def compute_statistics(summary: st.CovarianceSummary, hyps: HypothesisSet) -> TestStatistics:
    hyps = hyps.with_sample_size(summary.n)
    kind = hyps.graph_class.kind
    if kind == "undirected" and not hyps.reduced:
        P = st.saturated_partial_matrix(summary.S)
        r = np.array([P[h.i - 1, h.j - 1] for h in hyps])
    elif kind == "bidirected":
        R = st.correlation_matrix(summary.S)
        r = np.array([R[h.i - 1, h.j - 1] for h in hyps])
    else:
        r = np.array([st.partial_correlation(summary.S, h.i, h.j, h.conditioning) for h in hyps])
    n_eff = np.array([h.n_eff for h in hyps], dtype=float)
    z = st.fisher_z(r) if len(r) else np.zeros(0)
    p = st.z_pvalue(z, n_eff) if len(r) else np.zeros(0)
    return TestStatistics(tuple(hyps.labels), r, np.atleast_1d(z), n_eff, np.atleast_1d(p))


def null_correlation(summary: st.CovarianceSummary, hyps: HypothesisSet) -> tuple[np.ndarray, str]:
    """Plug-in z-scale null correlation of the test statistics and its provenance."""
    kind = hyps.graph_class.kind
    if not hyps.reduced and kind in ("undirected", "bidirected"):
        mode = "saturated" if kind == "undirected" else "marginal"
        R = st.correlation_matrix(np.linalg.inv(summary.S) if mode == "saturated" else summary.S)
        omega = st.omega_from_correlations(R, hyps.labels)
        return st.z_scale(omega), st.CLOSED_FORM
    omega = st.asym_cov_delta(summary.S, hyps.conditioning())
    return st.z_scale(omega).matrix, st.DELTA_METHOD


def default_method(cls_: GraphClass) -> str:
    return "sidak-step" if cls_.kind == "dag" else "maxt-step"


def decide(stats_: TestStatistics, adj: mt.AdjustedPValues, spec: mt.ErrorRateSpec) -> frozenset:
    """Rejected hypothesis labels under the requested error rate."""
    if spec.kind == "fdr":
        return mt.fdr_by(stats_.pvalues, spec.alpha, stats_.labels)
    base = mt.reject_set(adj, spec.alpha)
    if spec.kind == "gfwer":
        return mt.augment_gfwer(base, adj, spec.k)
    if spec.kind == "tppfp":
        return mt.augment_tppfp(base, adj, spec.lam)
    return base


def adjust_statistics(summary: st.CovarianceSummary, hyps: HypothesisSet, stats_: TestStatistics,
                      method: str, draws: int, seed: int, workers: int = 1) -> tuple[mt.AdjustedPValues, str | None]:
    if method in ("maxt", "maxt-step"):
        if not len(stats_.labels):
            return mt.AdjustedPValues(np.zeros(0), method, (), draws, seed), None
        corr, provenance = null_correlation(summary, hyps)
        adj = mt.adjust(method, stats_.pvalues, stats_.labels, z=stats_.z, n_eff=stats_.n_eff,
                        corr=corr, draws=draws, seed=seed, workers=workers)
        return adj, provenance
    return mt.adjust(method, stats_.pvalues, stats_.labels), None


def select_from_summary(summary: st.CovarianceSummary, cls_: GraphClass,
                        prior: PriorKnowledge | None = None, method: str | None = None,
                        spec: mt.ErrorRateSpec | None = None, draws: int = 10_000, seed: int = 0,
                        reduce: bool = False, minimal: bool = True,
                        names: Sequence[str] = (), workers: int = 1) -> SelectionResult:
    p = summary.p
    spec = spec or mt.ErrorRateSpec()
    method = method or default_method(cls_)
    if method not in mt.METHODS:
        raise SelectionError("config", f"unknown method {method!r}")
    notes = []
    try:
        prior = (prior or PriorKnowledge()).normalized(cls_, p)
        hyps = build_hypotheses(cls_, p, prior)
    except ValueError as exc:
        raise SelectionError("hypotheses", str(exc)) from exc
    if reduce:
        try:
            hyps = reduce_conditioning(hyps, prior, minimal=minimal)
        except gr.GraphError as exc:
            raise SelectionError("reduction", str(exc)) from exc
    try:
        stats_ = compute_statistics(summary, hyps)
    except st.StatsError as exc:
        raise SelectionError("statistics", str(exc)) from exc
    try:
        adj, provenance = adjust_statistics(summary, hyps, stats_, method, draws, seed, workers)
    except (mt.AdjustmentError, st.StatsError) as exc:
        raise SelectionError("adjustment", str(exc)) from exc
    if provenance == st.DELTA_METHOD and cls_.kind == "dag":
        notes.append("max-T for DAG selection uses a delta-method null covariance (extension)")
    if provenance:
        notes.append(f"null covariance: {provenance}")
    rejected = decide(stats_, adj, spec)
    fdr_adj = mt.by_adjusted(stats_.pvalues, stats_.labels) if spec.kind == "fdr" else None

    table = []
    for k, h in enumerate(hyps.with_sample_size(summary.n)):
        row = {
            "i": h.i, "j": h.j,
            "conditioning": sorted(h.conditioning),
            "n_eff": int(h.n_eff),
            "r": float(stats_.r[k]), "z": float(stats_.z[k]),
            "p": float(stats_.pvalues[k]),
            "p_adjusted": float(adj.values[k]),
            "selected": h.label in rejected,
        }
        if fdr_adj is not None:
            row["p_by"] = float(fdr_adj.values[k])
        table.append(row)
    graph = gr.Graph.from_edges(p, cls_.graph_kind, rejected | prior.present)
    return SelectionResult(
        graph=graph, graph_class=cls_, alpha=spec.alpha, method=method, error_rate=spec,
        table=table, names=tuple(names) or tuple(f"Y{k}" for k in range(1, p + 1)), n=summary.n,
        prior=prior, draws=adj.draws, seed=adj.seed, reduced=hyps.reduced,
        decision_basis="unadjusted (step-up)" if spec.kind == "fdr" else "adjusted", notes=notes)


def run_selection(data: st.Dataset | np.ndarray, cls_: GraphClass, prior: PriorKnowledge | None = None,
                  method: str | None = None, spec: mt.ErrorRateSpec | None = None,
                  draws: int = 10_000, seed: int = 0, reduce: bool = False, minimal: bool = True,
                  workers: int = 1) -> SelectionResult:
    """Select a graph from data; see :func:`select_from_summary` for the options."""
    try:
        if not isinstance(data, st.Dataset):
            data = st.Dataset(np.asarray(data, dtype=float), ())
        summary = st.summarize(data)
    except st.StatsError as exc:
        raise SelectionError("summary", str(exc)) from exc
    return select_from_summary(summary, cls_, prior, method, spec, draws, seed, reduce, minimal,
                               data.names, workers)


def population_partials(Sigma, cls_: GraphClass) -> dict[tuple[int, int], float]:
    Sigma = np.asarray(Sigma, dtype=float)
    hyps = build_hypotheses(cls_, Sigma.shape[0])
    return {h.label: st.partial_correlation(Sigma, h.i, h.j, h.conditioning) for h in hyps}


def faithful_graph(Sigma, cls_: GraphClass, tol: float = 1e-8) -> gr.Graph:
    """Graph with an edge wherever the class's pairwise partial correlation is nonzero.

    "Nonzero" means larger than ``tol`` times the largest magnitude among them.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    Sigma = np.asarray(Sigma, dtype=float)
    st.check_pd(Sigma, "covariance")
    rho = population_partials(Sigma, cls_)
    scale = max((abs(v) for v in rho.values()), default=0.0)
    edges = [e for e, v in rho.items() if scale > 0 and abs(v) > tol * scale]
    return gr.Graph.from_edges(Sigma.shape[0], cls_.graph_kind, edges)


def false_edges(selected: Iterable, truth: gr.Graph) -> int:
    return sum(1 for e in selected if not truth.adjacent(*e))
