"""Optimal sample selection via Simultaneous Orthogonal Matching Pursuit.

Choosing m measurement locations out of n grid cells is a combinatorial
problem; this module solves its exact reformulation instead: find the m
columns of the dictionary inverse Dinv (k x n) whose span best captures the
coefficient matrix S (k x t) of the training corpus.  That is a classic
multiple-measurement-vector support recovery problem, solved greedily by
SOMP: each iteration picks the column with the largest total correlation
against the residual, then projects S onto the orthogonal complement of
everything selected so far.  The selected column indices are exactly the
rows of the training signal to measure.

The greedy loop is deterministic: correlation ties break toward the
smallest column index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetTooLargeError,
    CoherenceBoundError,
    IndexOutOfRangeError,
    RankCollapseError,
    UnmappedRowError,
    ZeroColumnError,
)
from .merl import HalfAngleDirection, RowMap, index_to_direction

# column block size for correlation scans; bounds memory at wide n
_SCAN_BLOCK = 16384

DEFAULT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class SampleBudget:
    """Stop after exactly m selections."""

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise BudgetTooLargeError(f"sample budget must be >= 1, got {self.m}")


@dataclass(frozen=True)
class ErrorThreshold:
    """Stop once the residual Frobenius norm drops to epsilon.

    The printed greedy loop has no iteration cap, so a guard defaulting to
    min(k, n) is applied.
    """

    epsilon: float
    max_iters: int | None = None

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"threshold must be >= 0, got {self.epsilon}")


StoppingRule = SampleBudget | ErrorThreshold


@dataclass
class SupportSet:
    """Ordered selected row indices with the residual after each iteration."""

    indices: list[int]
    residual_history: list[float] = field(default_factory=list)
    directions: list[HalfAngleDirection] | None = None

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("support indices must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class SubsamplingOperator:
    """Row selection of the identity: keeps the listed entries, in order."""

    rows: tuple
    ambient_dim: int

    def apply(self, signal: np.ndarray) -> np.ndarray:
        signal = np.asarray(signal)
        if signal.shape[0] != self.ambient_dim:
            raise IndexOutOfRangeError(
                f"signal has {signal.shape[0]} rows, operator expects {self.ambient_dim}"
            )
        return signal[list(self.rows)]

    def as_matrix(self) -> np.ndarray:
        phi = np.zeros((len(self.rows), self.ambient_dim))
        phi[np.arange(len(self.rows)), list(self.rows)] = 1.0
        return phi


def build_subsampling_operator(support: SupportSet, ambient_dim: int) -> SubsamplingOperator:
    if any(i < 0 or i >= ambient_dim for i in support.indices):
        raise IndexOutOfRangeError(
            f"support indices must lie in [0, {ambient_dim})"
        )
    return SubsamplingOperator(tuple(support.indices), ambient_dim)


def _correlation_scores(dinv: np.ndarray, residual: np.ndarray) -> np.ndarray:
    """l1 norm of each column's correlation row against the residual."""
    n = dinv.shape[1]
    scores = np.empty(n)
    for start in range(0, n, _SCAN_BLOCK):
        stop = min(start + _SCAN_BLOCK, n)
        scores[start:stop] = np.abs(dinv[:, start:stop].T @ residual).sum(axis=1)
    return scores


def atom_select(dinv: np.ndarray, residual: np.ndarray, exclude=()) -> int:
    """Index of the unselected column with the largest total correlation.

    Ties break toward the smallest index, which keeps the whole pursuit
    deterministic regardless of how the scan is parallelized.
    """
    scores = _correlation_scores(dinv, residual)
    for i in exclude:
        scores[i] = -np.inf
    return int(np.argmax(scores))


def residual_update(dinv: np.ndarray, support, coeffs: np.ndarray,
                    cond_limit: float = DEFAULT_COND_LIMIT) -> np.ndarray:
    """Project coeffs onto the orthogonal complement of the selected columns.

    Computed from scratch with a dense QR; this is the reference form the
    incremental update inside somp_select is checked against.
    """
    indices = list(support.indices if isinstance(support, SupportSet) else support)
    if not indices:
        return coeffs.copy()
    basis = dinv[:, indices]
    svals = np.linalg.svd(basis, compute_uv=False)
    if svals[-1] == 0.0 or svals[0] / svals[-1] > cond_limit:
        raise RankCollapseError(
            f"selected columns are numerically dependent (cond > {cond_limit:.0e})"
        )
    q, _ = np.linalg.qr(basis)
    return coeffs - q @ (q.T @ coeffs)


def somp_select(
    dinv: np.ndarray,
    coeffs: np.ndarray,
    stop: StoppingRule,
    normalize_atoms: bool = False,
    exact_update: bool = False,
    cond_limit: float = DEFAULT_COND_LIMIT,
) -> SupportSet:
    """Greedy support selection over the columns of dinv.

    Parameters
    ----------
    dinv : (k, n) dictionary inverse (or pseudo-inverse).
    coeffs : (k, t) coefficient matrix shared by all training signals.
    stop : SampleBudget(m) or ErrorThreshold(epsilon).
    normalize_atoms : scan correlations against unit-norm columns instead of
        raw ones.  Off by default; the projection step is unaffected either
        way since normalization does not change column spans.
    exact_update : recompute the orthogonal factorization from scratch every
        iteration (debug/oracle mode) instead of appending one column.

    Returns the ordered support with the residual Frobenius norm recorded
    after every iteration.
    """
    dinv = np.asarray(dinv, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    k, n = dinv.shape
    if isinstance(stop, SampleBudget):
        if stop.m > min(k, n):
            raise BudgetTooLargeError(
                f"budget {stop.m} exceeds min(k, n) = {min(k, n)}"
            )
        max_steps = stop.m
        threshold = -1.0
    else:
        max_steps = stop.max_iters if stop.max_iters is not None else min(k, n)
        threshold = stop.epsilon

    scan_dinv = dinv
    if normalize_atoms:
        norms = np.linalg.norm(dinv, axis=0)
        scan_dinv = dinv / np.where(norms > 0.0, norms, 1.0)

    selected: list[int] = []
    history: list[float] = []
    basis = np.zeros((k, 0))
    residual = coeffs.copy()

    while len(selected) < max_steps:
        if threshold >= 0.0 and np.linalg.norm(residual) <= threshold:
            break
        j = atom_select(scan_dinv, residual, exclude=selected)
        selected.append(j)
        if exact_update:
            residual = residual_update(dinv, selected, coeffs, cond_limit)
            basis, _ = np.linalg.qr(dinv[:, selected])
        else:
            col = dinv[:, j].astype(np.float64, copy=True)
            # orthogonalize twice; a second pass restores orthogonality lost
            # to cancellation in the first
            for _ in range(2):
                col -= basis @ (basis.T @ col)
            norm = np.linalg.norm(col)
            if norm <= np.linalg.norm(dinv[:, j]) / cond_limit:
                raise RankCollapseError(
                    "selected columns became numerically dependent; the "
                    "training set cannot support more samples"
                )
            basis = np.hstack([basis, (col / norm)[:, None]])
            residual = coeffs - basis @ (basis.T @ coeffs)
        history.append(float(np.linalg.norm(residual)))

    return SupportSet(indices=selected, residual_history=history)


def support_to_directions(support: SupportSet, row_map: RowMap) -> list[HalfAngleDirection]:
    """Bin-center directions of the selected dense rows."""
    grid = row_map.grid_indices
    directions = []
    for row in support.indices:
        if row < 0 or row >= grid.size:
            raise UnmappedRowError(f"dense row {row} not covered by the row map")
        directions.append(index_to_direction(int(grid[row]), row_map.resolution))
    return directions


def direction_table(directions) -> str:
    """Human-facing table of directions in integer degrees."""
    lines = ["theta_h  theta_d  phi_d"]
    for d in directions:
        th, td, pd = d.degrees()
        lines.append(f"{round(th):>7d}  {round(td):>7d}  {round(pd):>5d}")
    return "\n".join(lines)


def cumulative_coherence(dinv: np.ndarray, m: int) -> float:
    """mu_1(m): max over atoms of the summed m largest cross-correlations.

    Columns are l2-normalized before correlating.  Small values certify that
    greedy selection stays close to the combinatorial optimum.
    """
    dinv = np.asarray(dinv, dtype=np.float64)
    n = dinv.shape[1]
    if not 1 <= m < n:
        raise ValueError(f"m={m} must satisfy 1 <= m < n={n}")
    norms = np.linalg.norm(dinv, axis=0)
    if np.any(norms == 0.0):
        raise ZeroColumnError("cannot normalize a zero column")
    unit = dinv / norms
    best = 0.0
    for start in range(0, n, _SCAN_BLOCK):
        stop = min(start + _SCAN_BLOCK, n)
        corr = np.abs(unit[:, start:stop].T @ unit)
        corr[np.arange(stop - start), np.arange(start, stop)] = 0.0
        if m < n - 1:
            top = np.partition(corr, n - m, axis=1)[:, n - m:]
        else:
            top = corr
        best = max(best, float(top.sum(axis=1).max()))
    return best


def somp_residual_bound(mu1: float, m: int, t: int, optimal_err: float) -> float:
    """Worst-case ratio of the greedy residual to the combinatorial optimum.

    Valid only when mu_1(m) < 1/2; callers must treat a violated assumption
    as "bound not applicable" rather than a failure.
    """
    if mu1 >= 0.5:
        raise CoherenceBoundError(f"bound requires mu1(m) < 1/2, got {mu1}")
    factor = math.sqrt(1.0 + m * t * (1.0 - mu1) / (1.0 - 2.0 * mu1) ** 2)
    return factor * optimal_err
