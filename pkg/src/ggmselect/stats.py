"""Sample moments, (partial) correlations, Fisher's z and asymptotic covariances.

Vertex labels are 1-based throughout to match the graph module; matrices are
ordinary 0-based numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np
from scipy import stats as sps

CLOSED_FORM = "closed-form"
DELTA_METHOD = "delta-method"


class StatsError(ValueError):
    """Invalid data or a numerically singular covariance."""


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise StatsError("data must be a two-dimensional array")
        n, p = values.shape
        names = tuple(self.names) if self.names else tuple(f"Y{k}" for k in range(1, p + 1))
        if len(names) != p:
            raise StatsError(f"{len(names)} names for {p} variables")
        if not np.all(np.isfinite(values)):
            raise StatsError("data contain non-finite entries")
        if n < p + 1:
            raise StatsError(f"need n >= p + 1 observations, got n={n}, p={p}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CovarianceSummary:
    n: int
    mean: np.ndarray
    S: np.ndarray

    @property
    def p(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True)
class AsymptoticCovariance:
    """Covariance matrix indexed by a list of vertex pairs."""

    matrix: np.ndarray
    pairs: tuple[tuple[int, int], ...]
    provenance: str


def check_pd(M: np.ndarray, what: str = "matrix") -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise StatsError(f"{what} must be square")
    if not np.allclose(M, M.T, rtol=1e-10, atol=1e-12):
        raise StatsError(f"{what} is not symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise StatsError(f"{what} is not positive definite") from None


def summarize(data: Dataset | np.ndarray) -> CovarianceSummary:
    """Sample mean and unbiased sample covariance (divisor ``n - 1``)."""
    if not isinstance(data, Dataset):
        data = Dataset(np.asarray(data, dtype=float), ())
    Y = data.values
    mean = Y.mean(axis=0)
    centered = Y - mean
    S = centered.T @ centered / (data.n - 1)
    S = (S + S.T) / 2
    check_pd(S, "sample covariance")
    return CovarianceSummary(data.n, mean, S)


def _cov(x) -> np.ndarray:
    return x.S if isinstance(x, CovarianceSummary) else np.asarray(x, dtype=float)


def correlation(cov, i: int, j: int) -> float:
    """Correlation of variables ``i`` and ``j`` (1-based) from a covariance."""
    Sigma = _cov(cov)
    a, b = i - 1, j - 1
    denom = Sigma[a, a] * Sigma[b, b]
    if denom <= 0:
        raise StatsError("zero variance on the diagonal")
    return float(Sigma[a, b] / math.sqrt(denom))


def partial_correlation(cov, i: int, j: int, C: Iterable[int] = ()) -> float:
    """Partial correlation of ``i`` and ``j`` given ``C`` (labels 1-based).

    Inverts the ``(C + {i, j})`` principal submatrix and reads the
    standardized off-diagonal concentration entry.
    """
    Sigma = _cov(cov)
    C = sorted(set(C))
    if i == j or i in C or j in C:
        raise StatsError("i, j must be distinct and outside the conditioning set")
    idx = [i - 1, j - 1] + [c - 1 for c in C]
    sub = Sigma[np.ix_(idx, idx)]
    try:
        K = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        raise StatsError(f"singular submatrix for pair ({i}, {j}) given {C}") from None
    if K[0, 0] <= 0 or K[1, 1] <= 0 or not np.all(np.isfinite(K)):
        raise StatsError(f"singular submatrix for pair ({i}, {j}) given {C}")
    return float(-K[0, 1] / math.sqrt(K[0, 0] * K[1, 1]))


def fisher_z(r):
    """Fisher's z-transform ``atanh(r)``; ``|r|`` must be below 1."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(np.abs(r_arr) >= 1):
        raise StatsError("Fisher z needs |r| < 1")
    out = np.arctanh(r_arr)
    return float(out) if out.ndim == 0 else out


def effective_sample_size(n: int, C: Iterable[int] | int = ()) -> int:
    size = C if isinstance(C, int) else len(set(C))
    n_eff = n - size
    if n_eff < 4:
        raise StatsError(f"effective sample size {n_eff} too small for z inference (need >= 4)")
    return n_eff


def z_statistic(z, n_eff):
    """Standardized statistic ``sqrt(n_eff - 3) * z``."""
    return np.sqrt(np.asarray(n_eff, dtype=float) - 3.0) * z


def z_pvalue(z, n_eff):
    """Two-sided normal p-value of a Fisher z value with effective size ``n_eff``."""
    n_eff_arr = np.asarray(n_eff)
    if np.any(n_eff_arr < 4):
        raise StatsError("effective sample size must be at least 4")
    p = 2.0 * sps.norm.sf(np.abs(z_statistic(z, n_eff)))
    return float(p) if np.ndim(p) == 0 else p


def t_pvalue(r: float, n_eff: int) -> float:
    """Exact null p-value of a sample (partial) correlation via Student's t."""
    if n_eff < 3:
        raise StatsError("t test needs effective sample size >= 3")
    if abs(r) >= 1:
        raise StatsError("t test needs |r| < 1")
    df = n_eff - 2
    t = math.sqrt(df) * r / math.sqrt(1.0 - r * r)
    return float(2.0 * sps.t.sf(abs(t), df))


# --- asymptotic covariance -------------------------------------------------


def upper_pairs(p: int) -> list[tuple[int, int]]:
    """All pairs ``(i, j)``, ``1 <= i < j <= p``, in row-major order."""
    return list(combinations(range(1, p + 1), 2))


def vech_pairs(p: int) -> list[tuple[int, int]]:
    """Index set ``1 <= i <= j <= p`` of the half-vectorization."""
    return [(i, j) for i in range(1, p + 1) for j in range(i, p + 1)]


def isserlis(Sigma) -> np.ndarray:
    """Isserlis matrix over ``vech_pairs``: ``s_iu s_jv + s_iv s_ju``."""
    Sigma = np.asarray(Sigma, dtype=float)
    if not np.allclose(Sigma, Sigma.T):
        raise StatsError("Isserlis matrix needs a symmetric input")
    idx = np.array(vech_pairs(Sigma.shape[0])) - 1
    a, b = idx[:, 0], idx[:, 1]
    return (Sigma[np.ix_(a, a)] * Sigma[np.ix_(b, b)]
            + Sigma[np.ix_(a, b)] * Sigma[np.ix_(b, a)])


def _omega_entry(R: np.ndarray, i, j, k, l) -> float:
    if {i, j} == {k, l}:
        return (1.0 - R[i, j] ** 2) ** 2
    shared = {i, j} & {k, l}
    if shared:
        c = shared.pop()
        x = ({i, j} - {c}).pop()
        y = ({k, l} - {c}).pop()
        rcx, rcy, rxy = R[c, x], R[c, y], R[x, y]
        return (-0.5 * rcx * rcy * (1 - rcx**2 - rcy**2 - rxy**2)
                + rxy * (1 - rcx**2 - rcy**2))
    return (0.5 * R[i, j] * R[k, l] * (R[i, k]**2 + R[i, l]**2 + R[j, k]**2 + R[j, l]**2)
            + R[i, k] * R[j, l] + R[i, l] * R[j, k]
            - R[i, k] * R[j, k] * R[k, l] - R[i, j] * R[i, k] * R[i, l]
            - R[i, j] * R[j, k] * R[j, l] - R[i, l] * R[j, l] * R[k, l])


def omega_from_correlations(R: np.ndarray, pairs: Sequence[tuple[int, int]] | None = None) -> np.ndarray:
    """Asymptotic covariance of ``sqrt(n) (r - rho)`` for ordinary correlations.

    ``R`` is a full correlation matrix; ``pairs`` are 1-based.
    """
    R = np.asarray(R, dtype=float)
    pairs = list(pairs) if pairs is not None else upper_pairs(R.shape[0])
    m = len(pairs)
    out = np.empty((m, m))
    for a in range(m):
        i, j = pairs[a][0] - 1, pairs[a][1] - 1
        for b in range(a, m):
            k, l = pairs[b][0] - 1, pairs[b][1] - 1
            out[a, b] = out[b, a] = _omega_entry(R, i, j, k, l)
    return out


def correlation_matrix(Sigma) -> np.ndarray:
    Sigma = np.asarray(Sigma, dtype=float)
    d = np.sqrt(np.diag(Sigma))
    return Sigma / np.outer(d, d)


def saturated_partial_matrix(Sigma) -> np.ndarray:
    """Matrix of ``rho_{ij . V minus {i,j}}`` with unit diagonal."""
    K = np.linalg.inv(np.asarray(Sigma, dtype=float))
    d = np.sqrt(np.diag(K))
    P = -K / np.outer(d, d)
    np.fill_diagonal(P, 1.0)
    return P


def asym_cov_closed(Sigma, mode: str = "marginal") -> AsymptoticCovariance:
    """Closed-form asymptotic covariance for marginal or saturated correlations.

    In saturated mode the sample partial correlations are minus the
    correlations of ``S^{-1}``, whose asymptotic law has the same Isserlis
    structure as ``S``; the marginal formulas are therefore evaluated at the
    correlation matrix of ``Sigma^{-1}``, i.e. at the negated partial
    correlations.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    check_pd(Sigma, "covariance")
    if mode == "marginal":
        R = correlation_matrix(Sigma)
    elif mode == "saturated":
        R = correlation_matrix(np.linalg.inv(Sigma))
    else:
        raise StatsError(f"unknown mode {mode!r}")
    pairs = upper_pairs(Sigma.shape[0])
    return AsymptoticCovariance(omega_from_correlations(R, pairs), tuple(pairs), CLOSED_FORM)


def conditioning_sets(p: int, mode: str) -> dict[tuple[int, int], frozenset[int]]:
    """Conditioning set per pair for ``marginal``, ``saturated`` or ``dag`` (natural order)."""
    out = {}
    for i, j in upper_pairs(p):
        if mode == "marginal":
            out[(i, j)] = frozenset()
        elif mode == "saturated":
            out[(i, j)] = frozenset(range(1, p + 1)) - {i, j}
        elif mode == "dag":
            out[(i, j)] = frozenset(range(1, j + 1)) - {i, j}
        else:
            raise StatsError(f"unknown mode {mode!r}")
    return out


def partial_correlation_vector(Sigma, conditioning: dict[tuple[int, int], Iterable[int]]) -> np.ndarray:
    return np.array([partial_correlation(Sigma, i, j, C) for (i, j), C in conditioning.items()])


def asym_cov_delta(Sigma, conditioning: dict[tuple[int, int], Iterable[int]]) -> AsymptoticCovariance:
    """Delta-method asymptotic covariance ``J Iss(Sigma) J^t`` for arbitrary conditioning sets.

    ``J`` is the central-difference Jacobian of the map from the
    half-vectorized covariance to the vector of partial correlations; each
    off-diagonal perturbation moves both symmetric entries.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    check_pd(Sigma, "covariance")
    p = Sigma.shape[0]
    conditioning = {k: frozenset(v) for k, v in conditioning.items()}
    pairs = tuple(conditioning)
    vp = vech_pairs(p)
    J = np.empty((len(pairs), len(vp)))
    eps = np.finfo(float).eps ** (1.0 / 3.0)
    for col, (u, v) in enumerate(vp):
        h = eps * max(1.0, abs(Sigma[u - 1, v - 1]))
        E = np.zeros((p, p))
        E[u - 1, v - 1] = E[v - 1, u - 1] = 1.0
        fwd = partial_correlation_vector(Sigma + h * E, conditioning)
        bwd = partial_correlation_vector(Sigma - h * E, conditioning)
        J[:, col] = (fwd - bwd) / (2.0 * h)
    if not np.all(np.isfinite(J)):
        raise StatsError("non-finite Jacobian in delta method")
    omega = J @ isserlis(Sigma) @ J.T
    return AsymptoticCovariance((omega + omega.T) / 2, pairs, DELTA_METHOD)


def z_scale(omega: AsymptoticCovariance | np.ndarray):
    """Correlation matrix of an asymptotic covariance (the Fisher-z null covariance)."""
    M = omega.matrix if isinstance(omega, AsymptoticCovariance) else np.asarray(omega, dtype=float)
    d = np.diag(M)
    if np.any(d <= 0):
        raise StatsError("asymptotic covariance has a nonpositive diagonal entry")
    s = np.sqrt(d)
    C = M / np.outer(s, s)
    np.fill_diagonal(C, 1.0)
    if isinstance(omega, AsymptoticCovariance):
        return AsymptoticCovariance(C, omega.pairs, omega.provenance)
    return C
