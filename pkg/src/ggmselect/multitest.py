"""P-value adjustments and rejection rules for FWER, k-GFWER, TPPFP and FDR.

Every adjustment takes a vector of unadjusted p-values (or test statistics for
the max-T family) and returns an :class:`AdjustedPValues` aligned with the
input order.  Step-down adjustments sort internally and map back.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import norm

METHODS = ("bonferroni", "holm", "sidak", "sidak-step", "maxt", "maxt-step")
STEP_DOWN = ("holm", "sidak-step", "maxt-step")

#: draws per independently seeded block of the max-T null simulation
BLOCK_SIZE = 4096
MIN_DRAWS = 1000
EIG_FLOOR = 1e-10


class AdjustmentError(ValueError):
    pass


@dataclass(frozen=True)
class AdjustedPValues:
    values: np.ndarray
    method: str
    labels: tuple = ()
    draws: int | None = None
    seed: int | None = None
    unadjusted: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = tuple(self.labels) if len(self.labels) else tuple(range(len(values)))
        if len(labels) != len(values):
            raise AdjustmentError("labels and values differ in length")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.values.tolist()))


@dataclass(frozen=True)
class ErrorRateSpec:
    """Target error rate: ``fwer``, ``gfwer`` (with k), ``tppfp`` (with lam) or ``fdr``."""

    kind: str = "fwer"
    alpha: float = 0.05
    k: int = 0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("fwer", "gfwer", "tppfp", "fdr"):
            raise AdjustmentError(f"unknown error rate {self.kind!r}")
        if not 0 < self.alpha < 1:
            raise AdjustmentError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k < 0 or int(self.k) != self.k:
            raise AdjustmentError(f"k must be a nonnegative integer, got {self.k}")
        if not 0 <= self.lam < 1:
            raise AdjustmentError(f"lambda must lie in [0, 1), got {self.lam}")

    @classmethod
    def parse(cls, text: str, alpha: float) -> "ErrorRateSpec":
        """Parse ``fwer``, ``gfwer:K``, ``tppfp:L`` or ``fdr``."""
        name, _, arg = text.strip().lower().partition(":")
        try:
            if name == "gfwer":
                return cls("gfwer", alpha, k=int(arg))
            if name == "tppfp":
                return cls("tppfp", alpha, lam=float(arg))
        except ValueError:
            raise AdjustmentError(f"bad error-rate parameter in {text!r}") from None
        if arg:
            raise AdjustmentError(f"{name} takes no parameter")
        return cls(name, alpha)

    def __str__(self):
        if self.kind == "gfwer":
            return f"gfwer:{self.k}"
        if self.kind == "tppfp":
            return f"tppfp:{self.lam:g}"
        return self.kind


def _pvec(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise AdjustmentError("p-values must lie in [0, 1]")
    return p


def _step_down(p: np.ndarray, step_value) -> np.ndarray:
    """Apply ``step_value(sorted_p, remaining_counts)`` then a running max, unsorted back."""
    m = len(p)
    order = np.argsort(p, kind="stable")
    remaining = m - np.arange(m)
    adj = np.maximum.accumulate(step_value(p[order], remaining))
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


def bonferroni(p, labels: Sequence = ()) -> AdjustedPValues:
    p = _pvec(p)
    return AdjustedPValues(np.minimum(len(p) * p, 1.0), "bonferroni", labels, unadjusted=p)


def holm(p, labels: Sequence = ()) -> AdjustedPValues:
    p = _pvec(p)
    return AdjustedPValues(_step_down(p, lambda s, r: r * s), "holm", labels, unadjusted=p)


def _sidak_value(p, m):
    # 1 - (1 - p)^m without cancellation for tiny p
    with np.errstate(divide="ignore"):
        return -np.expm1(m * np.log1p(-p))


def sidak(p, labels: Sequence = ()) -> AdjustedPValues:
    p = _pvec(p)
    return AdjustedPValues(np.minimum(_sidak_value(p, len(p)), 1.0), "sidak", labels, unadjusted=p)


def sidak_step(p, labels: Sequence = ()) -> AdjustedPValues:
    p = _pvec(p)
    return AdjustedPValues(_step_down(p, _sidak_value), "sidak-step", labels, unadjusted=p)


# --- max-T ------------------------------------------------------------------


def null_factor(corr: np.ndarray) -> np.ndarray:
    """Square root ``L`` with ``L L^t`` equal to ``corr`` after eigenvalue clipping."""
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1] or not np.all(np.isfinite(corr)):
        raise AdjustmentError("null correlation must be a finite square matrix")
    corr = (corr + corr.T) / 2
    w, V = np.linalg.eigh(corr)
    if w.min() < -1e-6 * max(1.0, w.max()):
        raise AdjustmentError(f"null correlation is not positive semidefinite (min eigenvalue {w.min():.3g})")
    w = np.maximum(w, EIG_FLOOR)
    return V * np.sqrt(w)


def _block_counts(L: np.ndarray, stats_desc: np.ndarray, order: np.ndarray,
                  seed: int, block: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, block])
    Z = np.abs(rng.standard_normal((size, L.shape[0])) @ L.T)
    overall = Z.max(axis=1)
    single = (overall[:, None] >= stats_desc[None, :]).sum(axis=0)
    # tail maxima over the b-th through last most significant coordinates
    tail = np.maximum.accumulate(Z[:, order][:, ::-1], axis=1)[:, ::-1]
    step = (tail >= stats_desc[None, :]).sum(axis=0)
    return single, step


def maxt_counts(stats, corr, draws: int, seed: int, workers: int = 1):
    """Shared null draws for single-step and step-down max-T.

    ``stats`` are absolute standardized statistics.  Returns exceedance
    counts aligned with the statistics sorted in decreasing order, plus that
    order.  Block ``k`` of draws is seeded by ``(seed, k)`` so the counts do
    not depend on ``workers``.
    """
    stats = np.abs(np.asarray(stats, dtype=float).ravel())
    if draws < MIN_DRAWS:
        raise AdjustmentError(f"need at least {MIN_DRAWS} Monte-Carlo draws, got {draws}")
    L = null_factor(corr)
    if L.shape[0] != len(stats):
        raise AdjustmentError("null correlation does not match the number of statistics")
    order = np.argsort(-stats, kind="stable")
    stats_desc = stats[order]
    sizes = [BLOCK_SIZE] * (draws // BLOCK_SIZE)
    if draws % BLOCK_SIZE:
        sizes.append(draws % BLOCK_SIZE)
    jobs = [(L, stats_desc, order, seed, k, s) for k, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _block_counts(*a), jobs))
    else:
        parts = [_block_counts(*a) for a in jobs]
    single = sum(pt[0] for pt in parts)
    step = sum(pt[1] for pt in parts)
    return single, step, order


def _standardize(z, n_eff):
    z = np.asarray(z, dtype=float).ravel()
    n_eff = np.broadcast_to(np.asarray(n_eff, dtype=float), z.shape)
    return np.abs(z) * np.sqrt(n_eff - 3.0)


def _marginal_p(t: np.ndarray) -> np.ndarray:
    return 2.0 * norm.sf(t)


def maxt(z, n_eff, corr, draws: int = 10_000, seed: int = 0, labels: Sequence = (),
         workers: int = 1) -> AdjustedPValues:
    """Single-step max-T adjusted p-values.

    ``z`` are Fisher z values, ``n_eff`` their effective sample sizes and
    ``corr`` the z-scale null correlation.  Each adjusted value is the
    Monte-Carlo probability that the largest absolute null coordinate reaches
    the observed standardized statistic.
    """
    t = _standardize(z, n_eff)
    single, _, order = maxt_counts(t, corr, draws, seed, workers)
    out = np.empty(len(t))
    out[order] = single / draws
    # never below the marginal p-value; Monte-Carlo noise can otherwise dip under it
    raw = _marginal_p(t)
    return AdjustedPValues(np.maximum(out, raw), "maxt", labels, draws, seed, raw)


def maxt_step(z, n_eff, corr, draws: int = 10_000, seed: int = 0, labels: Sequence = (),
              workers: int = 1) -> AdjustedPValues:
    """Step-down max-T: successive maxima over the less significant tail, made monotone."""
    t = _standardize(z, n_eff)
    _, step, order = maxt_counts(t, corr, draws, seed, workers)
    raw = _marginal_p(t)
    out = np.empty(len(t))
    # never below the marginal p-value; Monte-Carlo noise can otherwise dip under it
    out[order] = np.maximum.accumulate(np.maximum(step / draws, raw[order]))
    return AdjustedPValues(out, "maxt-step", labels, draws, seed, raw)


def adjust(method: str, p=None, labels: Sequence = (), *, z=None, n_eff=None, corr=None,
           draws: int = 10_000, seed: int = 0, workers: int = 1) -> AdjustedPValues:
    """Dispatch on a method tag from :data:`METHODS`."""
    if method in ("maxt", "maxt-step"):
        if z is None or n_eff is None or corr is None:
            raise AdjustmentError(f"{method} needs z values, effective sizes and a null correlation")
        fn = maxt if method == "maxt" else maxt_step
        return fn(z, n_eff, corr, draws, seed, labels, workers)
    table = {"bonferroni": bonferroni, "holm": holm, "sidak": sidak, "sidak-step": sidak_step}
    if method not in table:
        raise AdjustmentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return table[method](p, labels)


# --- rejection rules ----------------------------------------------------------


def reject_set(adj: AdjustedPValues, alpha: float) -> frozenset:
    return frozenset(lab for lab, v in zip(adj.labels, adj.values) if v <= alpha)


def _sort_key(label: Hashable):
    return (0, label) if isinstance(label, (int, tuple)) else (1, str(label))


def _most_significant_remaining(rejected, adj: AdjustedPValues, count: int) -> list:
    rest = [(v, _sort_key(lab), lab) for lab, v in zip(adj.labels, adj.values) if lab not in rejected]
    rest.sort(key=lambda t: (t[0], t[1]))
    return [lab for _, _, lab in rest[:count]]


def augment_gfwer(fwer_rejections, adj: AdjustedPValues, k: int) -> frozenset:
    """Add the ``k`` most significant hypotheses not rejected under FWER control."""
    if k < 0:
        raise AdjustmentError("k must be nonnegative")
    base = frozenset(fwer_rejections)
    return base | frozenset(_most_significant_remaining(base, adj, k))


def tppfp_augmentation_count(r0: int, lam: float) -> int:
    """Largest ``a`` with ``a / (a + r0) <= lam``, i.e. ``floor(lam r0 / (1 - lam))``.

    ``lam`` is taken at its shortest decimal representation so that e.g.
    ``0.22`` means exactly 22/100.
    """
    if not 0 <= lam < 1:
        raise AdjustmentError("lambda must lie in [0, 1)")
    frac = Fraction(repr(float(lam)))
    return math.floor(frac * r0 / (1 - frac))


def augment_tppfp(fwer_rejections, adj: AdjustedPValues, lam: float) -> frozenset:
    base = frozenset(fwer_rejections)
    extra = tppfp_augmentation_count(len(base), lam)
    return base | frozenset(_most_significant_remaining(base, adj, extra))


def harmonic(m: int) -> float:
    return float(np.sum(1.0 / np.arange(1, m + 1))) if m else 0.0


def by_adjusted(p, labels: Sequence = ()) -> AdjustedPValues:
    """Benjamini-Yekutieli step-up adjusted p-values (``<= alpha`` iff rejected)."""
    p = _pvec(p)
    m = len(p)
    if m == 0:
        return AdjustedPValues(p, "by", labels)
    order = np.argsort(p, kind="stable")
    ranks = np.arange(1, m + 1)
    raw = p[order] * m * harmonic(m) / ranks
    adj = np.minimum.accumulate(raw[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return AdjustedPValues(out, "by", labels, unadjusted=p)


def fdr_by(p, alpha: float, labels: Sequence = ()) -> frozenset:
    """Step-up with thresholds ``a alpha / (m c(m))``, ``c(m) = 1 + 1/2 + ... + 1/m``."""
    p = _pvec(p)
    m = len(p)
    labels = tuple(labels) if len(labels) else tuple(range(m))
    if m == 0:
        return frozenset()
    order = np.argsort(p, kind="stable")
    thresholds = np.arange(1, m + 1) * alpha / (m * harmonic(m))
    below = np.nonzero(p[order] <= thresholds)[0]
    if below.size == 0:
        return frozenset()
    return frozenset(labels[i] for i in order[: below[-1] + 1])
