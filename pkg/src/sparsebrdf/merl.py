"""MERL-format BRDF I/O and half-angle grid arithmetic.

File layout (little-endian throughout):
    header   3 x int32   (n_theta_h, n_theta_d, n_phi_d)
    payload  3 * n_theta_h * n_theta_d * n_phi_d x float64, channel-major
             (all red, then all green, then all blue)

Within a channel the linear index of cell (i_th, i_td, i_pd) is
    i_pd + n_phi_d * (i_td + n_theta_d * i_th).

Stored values are linear reflectance divided by a per-channel scale
(1.0/1500, 1.15/1500, 1.66/1500 for R, G, B); negative stored values mark
invalid measurements and are kept verbatim as sentinels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyMaskError, MerlFormatError

MERL_SCALES = np.array([1.0 / 1500.0, 1.15 / 1500.0, 1.66 / 1500.0])
INVALID_SENTINEL = -1.0

_HALF_PI = np.pi / 2.0


@dataclass(frozen=True)
class BrdfResolution:
    """Grid resolution over (theta_h, theta_d, phi_d)."""

    n_theta_h: int = 90
    n_theta_d: int = 90
    n_phi_d: int = 180

    def __post_init__(self):
        if min(self.n_theta_h, self.n_theta_d, self.n_phi_d) < 1:
            raise DomainError(f"resolution counts must be >= 1, got {self}")

    @property
    def grid_size(self) -> int:
        return self.n_theta_h * self.n_theta_d * self.n_phi_d


@dataclass(frozen=True)
class HalfAngleDirection:
    """One light/view sample direction in half-angle coordinates (radians).

    theta_h, theta_d lie in [0, pi/2); phi_d is folded to [0, pi) by
    reciprocity.
    """

    theta_h: float
    theta_d: float
    phi_d: float

    def degrees(self) -> tuple[float, float, float]:
        return (
            float(np.degrees(self.theta_h)),
            float(np.degrees(self.theta_d)),
            float(np.degrees(self.phi_d)),
        )


class BrdfTensor:
    """One isotropic BRDF on the half-angle grid.

    values : (3, grid_size) float64, linear reflectance (1/sr) on valid
        cells, negative sentinels elsewhere.
    mask : (grid_size,) bool, True where the measurement is valid.  The mask
        is shared by all three channels.
    """

    def __init__(self, resolution: BrdfResolution, values, mask):
        values = np.asarray(values, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        n = resolution.grid_size
        if values.shape != (3, n):
            raise MerlFormatError(
                f"values shape {values.shape} does not match resolution {resolution}"
            )
        if mask.shape != (n,):
            raise MerlFormatError(f"mask shape {mask.shape} does not match grid {n}")
        valid = values[:, mask]
        if valid.size and (not np.all(np.isfinite(valid)) or valid.min() < 0.0):
            raise MerlFormatError("valid cells must hold finite nonnegative reflectance")
        invalid = values[:, ~mask]
        if invalid.size and invalid.max() >= 0.0:
            raise MerlFormatError("invalid cells must hold negative sentinels")
        self.resolution = resolution
        self.values = values
        self.mask = mask
        self.values.setflags(write=False)
        self.mask.setflags(write=False)

    def valid_count(self) -> int:
        return int(self.mask.sum())


def read_merl(path) -> BrdfTensor:
    """Read a MERL binary file.

    Valid (nonnegative) stored values are scaled to linear reflectance;
    negative stored values are kept verbatim and masked invalid.  A cell
    negative in any channel is masked invalid in all three.
    """
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise MerlFormatError(f"{path}: truncated header")
        dims = struct.unpack("<3i", header)
        if min(dims) <= 0:
            raise MerlFormatError(f"{path}: nonpositive header dims {dims}")
        res = BrdfResolution(*dims)
        n = res.grid_size
        payload = np.fromfile(fh, dtype="<f8", count=3 * n + 1)
    if payload.size != 3 * n:
        raise MerlFormatError(
            f"{path}: payload holds {payload.size} doubles, expected {3 * n}"
        )
    stored = payload.reshape(3, n)
    mask = np.all(stored >= 0.0, axis=0)
    values = np.where(stored >= 0.0, stored * MERL_SCALES[:, None], stored)
    # cells invalidated by a sibling channel must still carry a sentinel
    values[:, ~mask] = np.where(
        stored[:, ~mask] < 0.0, stored[:, ~mask], INVALID_SENTINEL
    )
    return BrdfTensor(res, values, mask)


def _exact_unscale(values: np.ndarray, scale: float) -> np.ndarray:
    """Stored doubles whose read-back (stored * scale) reproduces `values`.

    Plain division gives a stored value within half an ulp; when the product
    does not round back exactly, one-ulp neighbours are tried.  An exact
    preimage exists for every value produced by read_merl.
    """
    stored = values / scale
    miss = stored * scale != values
    if np.any(miss):
        up = np.nextafter(stored[miss], np.inf)
        stored[miss] = np.where(up * scale == values[miss], up, stored[miss])
        miss = stored * scale != values
    if np.any(miss):
        dn = np.nextafter(stored[miss], -np.inf)
        stored[miss] = np.where(dn * scale == values[miss], dn, stored[miss])
    return stored


def write_merl(brdf: BrdfTensor, path) -> None:
    """Write a MERL binary file; read_merl(write_merl(b)) reproduces b."""
    res = brdf.resolution
    stored = brdf.values.copy()
    for c in range(3):
        stored[c, brdf.mask] = _exact_unscale(
            brdf.values[c, brdf.mask], MERL_SCALES[c]
        )
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3i", res.n_theta_h, res.n_theta_d, res.n_phi_d))
        stored.astype("<f8").tofile(fh)


def direction_to_index(d: HalfAngleDirection, res: BrdfResolution) -> int:
    """Linear grid index of a direction.

    theta_h uses the MERL square-root warp, concentrating bins near the
    specular ridge; theta_d and phi_d bin linearly.
    """
    if not (0.0 <= d.theta_h < _HALF_PI):
        raise DomainError(f"theta_h {d.theta_h} outside [0, pi/2)")
    if not (0.0 <= d.theta_d < _HALF_PI):
        raise DomainError(f"theta_d {d.theta_d} outside [0, pi/2)")
    if not (0.0 <= d.phi_d < np.pi):
        raise DomainError(f"phi_d {d.phi_d} outside [0, pi)")
    i_th = min(int(np.sqrt(d.theta_h / _HALF_PI) * res.n_theta_h), res.n_theta_h - 1)
    i_td = min(int(d.theta_d / _HALF_PI * res.n_theta_d), res.n_theta_d - 1)
    i_pd = min(int(d.phi_d / np.pi * res.n_phi_d), res.n_phi_d - 1)
    return i_pd + res.n_phi_d * (i_td + res.n_theta_d * i_th)


def index_to_direction(idx: int, res: BrdfResolution) -> HalfAngleDirection:
    """Bin-center direction of a linear grid index (inverse on bin centers)."""
    if not (0 <= idx < res.grid_size):
        raise DomainError(f"index {idx} outside grid of size {res.grid_size}")
    i_pd = idx % res.n_phi_d
    rest = idx // res.n_phi_d
    i_td = rest % res.n_theta_d
    i_th = rest // res.n_theta_d
    return HalfAngleDirection(
        theta_h=_HALF_PI * ((i_th + 0.5) / res.n_theta_h) ** 2,
        theta_d=_HALF_PI * (i_td + 0.5) / res.n_theta_d,
        phi_d=np.pi * (i_pd + 0.5) / res.n_phi_d,
    )


def bin_center_angles(res: BrdfResolution):
    """Bin-center (theta_h, theta_d, phi_d) arrays for every grid cell."""
    i_th, i_td, i_pd = np.meshgrid(
        np.arange(res.n_theta_h),
        np.arange(res.n_theta_d),
        np.arange(res.n_phi_d),
        indexing="ij",
    )
    theta_h = _HALF_PI * ((i_th.ravel() + 0.5) / res.n_theta_h) ** 2
    theta_d = _HALF_PI * (i_td.ravel() + 0.5) / res.n_theta_d
    phi_d = np.pi * (i_pd.ravel() + 0.5) / res.n_phi_d
    return theta_h, theta_d, phi_d


@dataclass(frozen=True)
class RowMap:
    """Bijection between dense matrix rows and valid grid cells.

    grid_indices[r] is the grid index of dense row r (sorted ascending);
    row_of_grid[g] is the dense row of grid index g, or -1 when invalid.
    """

    resolution: BrdfResolution
    grid_indices: np.ndarray

    def __post_init__(self):
        self.grid_indices.setflags(write=False)

    @property
    def n_valid(self) -> int:
        return int(self.grid_indices.size)

    def row_of_grid(self) -> np.ndarray:
        inv = np.full(self.resolution.grid_size, -1, dtype=np.int64)
        inv[self.grid_indices] = np.arange(self.n_valid, dtype=np.int64)
        return inv

    def mask(self) -> np.ndarray:
        m = np.zeros(self.resolution.grid_size, dtype=bool)
        m[self.grid_indices] = True
        return m


def validity_mask(brdf: BrdfTensor) -> RowMap:
    """Row map over this tensor's own valid cells."""
    idx = np.flatnonzero(brdf.mask).astype(np.int64)
    if idx.size == 0:
        raise EmptyMaskError("tensor has no valid cells")
    return RowMap(brdf.resolution, idx)


def corpus_mask(brdfs) -> RowMap:
    """Row map over cells valid in every tensor of the corpus.

    Using the intersection gives all corpus matrices identical row
    semantics.
    """
    brdfs = list(brdfs)
    if not brdfs:
        raise EmptyMaskError("empty corpus")
    res = brdfs[0].resolution
    mask = np.ones(res.grid_size, dtype=bool)
    for b in brdfs:
        if b.resolution != res:
            raise MerlFormatError("corpus mixes resolutions")
        mask &= b.mask
    idx = np.flatnonzero(mask).astype(np.int64)
    if idx.size == 0:
        raise EmptyMaskError("no cell is valid across the whole corpus")
    return RowMap(res, idx)
