"""Voxel-value normalization and projection handling.

Two normalization schemes are provided. The lung-window scheme converts raw
stored values to Hounsfield units (slope * p + intercept), divides by the
absolute minimum HU of the volume, and clamps to [-0.505, 0.505]. The z-score
scheme standardizes raw stored values with statistics collected over a
training corpus.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateMinimum, EmptyInput, WrongUnitState, ZeroVariance
from .volumes import BinaryMask, CtVolume, ProbabilityVolume, UnitState

CLAMP_LIMIT = 0.505


class Axis(enum.Enum):
    AXIAL = "axial"
    CORONAL = "coronal"
    SAGITTAL = "sagittal"


# volume array axis orthogonal to each projection
_AXIS_INDEX = {Axis.AXIAL: 2, Axis.CORONAL: 1, Axis.SAGITTAL: 0}


@dataclass(frozen=True)
class ZScoreStats:
    """Population mean/stddev of raw stored values over a training corpus."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ZeroVariance(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class PlaneStack:
    """Ordered 2-D slabs of a volume along one projection axis.

    ``planes`` has shape (n, d0, d1). ``coords``, when present, has shape
    (n, 3, d0, d1) holding linear [0,1] ramps along d0, d1, and plane index.
    """

    axis: Axis
    planes: np.ndarray
    coords: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.planes.ndim != 3:
            raise ValueError(f"planes must be 3-D (n, d0, d1), got {self.planes.shape}")
        if self.coords is not None and self.coords.shape != (
            self.planes.shape[0],
            3,
            self.planes.shape[1],
            self.planes.shape[2],
        ):
            raise ValueError(f"coords shape {self.coords.shape} inconsistent with planes")


def _require_state(volume: CtVolume, state: UnitState, op: str) -> None:
    if volume.unit_state is not state:
        raise WrongUnitState(
            f"{op} requires {state.value} input, got {volume.unit_state.value}"
        )


def to_hounsfield(volume: CtVolume) -> CtVolume:
    """Apply the DICOM rescale: every voxel p becomes slope * p + intercept."""
    _require_state(volume, UnitState.RAW_STORED, "to_hounsfield")
    hu = (
        volume.rescale_slope * volume.voxels.astype(np.float64)
        + volume.rescale_intercept
    ).astype(np.float32)
    return volume.with_voxels(hu, UnitState.HOUNSFIELD)


def normalize_lung_window(volume: CtVolume) -> CtVolume:
    """Divide HU values by |min HU| and clamp to [-0.505, 0.505]."""
    _require_state(volume, UnitState.HOUNSFIELD, "normalize_lung_window")
    divisor = abs(float(volume.voxels.min()))
    if divisor == 0.0:
        raise DegenerateMinimum("minimum HU value is zero")
    scaled = volume.voxels.astype(np.float64) / divisor
    clamped = np.clip(scaled, -CLAMP_LIMIT, CLAMP_LIMIT)
    return volume.with_voxels(clamped, UnitState.NORMALIZED)


def compute_zscore_stats(volumes: list[CtVolume]) -> ZScoreStats:
    """Population mean and stddev over all voxels of all raw-stored volumes."""
    if not volumes:
        raise EmptyInput("need at least one volume")
    for v in volumes:
        _require_state(v, UnitState.RAW_STORED, "compute_zscore_stats")
    flat = np.concatenate([v.voxels.astype(np.float64).ravel() for v in volumes])
    if flat.size < 2:
        raise EmptyInput("need at least two voxels in total")
    mu = float(flat.mean())
    sigma = float(flat.std(ddof=0))
    if sigma == 0.0:
        raise ZeroVariance("all voxels identical")
    return ZScoreStats(mu=mu, sigma=sigma)


def normalize_zscore(volume: CtVolume, stats: ZScoreStats) -> CtVolume:
    """Standardize raw stored values: (p - mu) / sigma."""
    _require_state(volume, UnitState.RAW_STORED, "normalize_zscore")
    z = (volume.voxels.astype(np.float64) - stats.mu) / stats.sigma
    return volume.with_voxels(z, UnitState.NORMALIZED)


def _as_array(volume) -> np.ndarray:
    if isinstance(volume, CtVolume):
        return volume.voxels
    if isinstance(volume, ProbabilityVolume):
        return volume.probs
    if isinstance(volume, BinaryMask):
        return volume.bits
    return np.asarray(volume)


def extract_projection(volume, axis: Axis) -> PlaneStack:
    """Slice a volume into its 2-D slabs orthogonal to ``axis``.

    Plane k of the axial stack is the volume's z=k slab; coronal and sagittal
    stacks slice along y and x respectively. Values are copied unchanged.
    """
    array = _as_array(volume)
    planes = np.moveaxis(array, _AXIS_INDEX[axis], 0).copy()
    return PlaneStack(axis=axis, planes=planes)


def assemble_projection(stack: PlaneStack) -> np.ndarray:
    """Inverse of extract_projection: stack planes back into volume order."""
    return np.ascontiguousarray(np.moveaxis(stack.planes, 0, _AXIS_INDEX[stack.axis]))


def _linear_resample_2d(plane: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear, corner-aligned resample of one plane to ``target`` shape."""
    t0, t1 = target
    s0, s1 = plane.shape
    src0 = np.linspace(0.0, s0 - 1.0, t0) if s0 > 1 else np.zeros(t0)
    src1 = np.linspace(0.0, s1 - 1.0, t1) if s1 > 1 else np.zeros(t1)
    grid0, grid1 = np.meshgrid(src0, src1, indexing="ij")
    return ndimage.map_coordinates(
        plane.astype(np.float64), [grid0, grid1], order=1, mode="nearest"
    )


def resize_with_coords(stack: PlaneStack, target: tuple[int, int] = (128, 128)) -> PlaneStack:
    """Resample every plane to ``target`` and append 3 coordinate channels.

    The coordinate channels are linear ramps in [0,1] along the first plane
    axis, the second plane axis, and the plane index; corner values are 0
    and 1 exactly.
    """
    n = stack.planes.shape[0]
    if n == 0:
        raise EmptyInput("stack has no planes")
    t0, t1 = target
    planes = np.stack(
        [_linear_resample_2d(p, (t0, t1)) for p in stack.planes]
    )

    ramp0 = np.linspace(0.0, 1.0, t0)[:, None] * np.ones((1, t1))
    ramp1 = np.ones((t0, 1)) * np.linspace(0.0, 1.0, t1)[None, :]
    coords = np.empty((n, 3, t0, t1), dtype=np.float64)
    for k in range(n):
        coords[k, 0] = ramp0
        coords[k, 1] = ramp1
        coords[k, 2] = k / (n - 1) if n > 1 else 0.0
    return PlaneStack(axis=stack.axis, planes=planes, coords=coords)
