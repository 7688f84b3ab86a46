"""Log-relative mapping between linear reflectance and the fitting domain.

Measured reflectance spans many orders of magnitude, which makes a direct
least-squares fit chase the specular peaks.  All training and reconstruction
therefore happens in a compressed domain:

    mapped = ln((rho + eps) / (rho_ref + eps))

where rho_ref is a per-row reference reflectance (the median over the
training corpus by default).  The offset eps keeps the map defined at
rho = 0 and the map is exactly invertible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCorpusError,
    ProvenanceMismatchError,
    ShapeMismatchError,
)
from .merl import BrdfTensor, RowMap

DEFAULT_EPSILON = 1e-3
REFERENCE_FLOOR = 1e-6


@dataclass(frozen=True)
class ReferenceBrdf:
    """Per-row reference reflectance plus the mapping offset."""

    values: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    key: str = field(init=False)

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.values.size and self.values.min() < REFERENCE_FLOOR:
            raise ValueError("reference values must be floored at 1e-6")
        self.values.setflags(write=False)
        digest = hashlib.sha256()
        digest.update(np.float64(self.epsilon).tobytes())
        digest.update(np.ascontiguousarray(self.values).tobytes())
        object.__setattr__(self, "key", digest.hexdigest()[:16])


@dataclass(frozen=True)
class MappedBrdf:
    """3 x n_valid values in the mapped domain, tagged with their reference."""

    values: np.ndarray
    provenance: str

    def __post_init__(self):
        self.values.setflags(write=False)


def compute_reference(
    training,
    row_map: RowMap,
    epsilon: float = DEFAULT_EPSILON,
    statistic: str = "median",
) -> ReferenceBrdf:
    """Reference reflectance per valid row from a training corpus.

    The statistic (median by default, mean optionally) is taken over all
    training materials and all three channels, then floored at 1e-6.
    """
    training = list(training)
    if not training:
        raise EmptyCorpusError("reference needs at least one training BRDF")
    if statistic not in ("median", "mean"):
        raise ValueError(f"unknown statistic {statistic!r}")
    rows = row_map.grid_indices
    stacked = np.concatenate([b.values[:, rows] for b in training], axis=0)
    if statistic == "mean":
        ref = stacked.mean(axis=0)
    else:
        # median via partition; np.median's nan-handling path is several
        # times slower at full measurement resolution
        q = stacked.shape[0]
        mid = (q - 1) // 2
        part = np.partition(stacked, (mid, q // 2), axis=0)
        ref = 0.5 * (part[mid] + part[q // 2])
    np.maximum(ref, REFERENCE_FLOOR, out=ref)
    return ReferenceBrdf(ref, epsilon)


def log_relative_map(brdf: BrdfTensor, ref: ReferenceBrdf, row_map: RowMap) -> MappedBrdf:
    """Map linear reflectance at the valid rows into the fitting domain."""
    if row_map.n_valid != ref.values.size:
        raise ShapeMismatchError(
            f"row map has {row_map.n_valid} rows, reference has {ref.values.size}"
        )
    rho = brdf.values[:, row_map.grid_indices]
    mapped = np.log((rho + ref.epsilon) / (ref.values + ref.epsilon))
    return MappedBrdf(mapped, ref.key)


def map_values(values: np.ndarray, ref: ReferenceBrdf) -> MappedBrdf:
    """Map already-extracted dense-row reflectance values."""
    if values.shape[-1] != ref.values.size:
        raise ShapeMismatchError(
            f"got {values.shape[-1]} rows, reference has {ref.values.size}"
        )
    mapped = np.log((values + ref.epsilon) / (ref.values + ref.epsilon))
    return MappedBrdf(np.atleast_2d(mapped), ref.key)


def log_relative_unmap(mapped: MappedBrdf, ref: ReferenceBrdf) -> np.ndarray:
    """Invert the mapping back to linear reflectance, clamped at zero.

    The clamp only activates for mapped values below the image of rho = 0.
    """
    if mapped.provenance != ref.key:
        raise ProvenanceMismatchError(
            f"mapped data carries reference {mapped.provenance}, got {ref.key}"
        )
    rho = np.exp(mapped.values) * (ref.values + ref.epsilon) - ref.epsilon
    return np.maximum(rho, 0.0)
