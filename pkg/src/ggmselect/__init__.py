"""Gaussian graphical model selection by multiple testing of (partial) correlations.

Undirected, bidirected and well-numbered DAG models are selected by testing
one vanishing (partial) correlation per vertex pair and adjusting the p-values
for family-wise error rate, k-GFWER, TPPFP or FDR control.
"""
from .graph import Graph, GraphError, NoSeparatorError
from .multitest import AdjustedPValues, ErrorRateSpec
from .selection import (GraphClass, PriorKnowledge, SelectionError, SelectionResult,
                        build_hypotheses, faithful_graph, reduce_conditioning, run_selection)
from .stats import CovarianceSummary, Dataset, StatsError, summarize

__version__ = "0.1.0"

__all__ = [
    "AdjustedPValues", "CovarianceSummary", "Dataset", "ErrorRateSpec", "Graph", "GraphClass",
    "GraphError", "NoSeparatorError", "PriorKnowledge", "SelectionError", "SelectionResult",
    "StatsError", "build_hypotheses", "faithful_graph", "reduce_conditioning", "run_selection",
    "summarize",
]
