"""Core volume carriers: CT volumes, binary masks, probability volumes.

All carriers store voxels as numpy arrays shaped ``(nx, ny, nz)`` so that
``array[i, j, k]`` addresses voxel ``(i, j, k)``. Instances are treated as
immutable after construction and are safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimsMismatch, ProbabilityOutOfRange

Dims = tuple[int, int, int]
Spacing = tuple[float, float, float]


class UnitState(enum.Enum):
    """Voxel unit of a CT volume. Transitions only move forward:
    RAW_STORED -> HOUNSFIELD -> NORMALIZED."""

    RAW_STORED = "raw"
    HOUNSFIELD = "hounsfield"
    NORMALIZED = "normalized"


def _check_dims(dims: Dims) -> None:
    if len(dims) != 3 or any(int(d) <= 0 for d in dims):
        raise ValueError(f"dims must be three positive integers, got {dims!r}")


def _check_spacing(spacing: Spacing) -> None:
    if len(spacing) != 3 or any(float(s) <= 0 for s in spacing):
        raise ValueError(f"spacing must be three positive floats, got {spacing!r}")


@dataclass(frozen=True)
class CtVolume:
    """3-D scalar CT volume with geometry metadata and rescale parameters.

    ``voxels`` holds raw stored values (int16) in RAW_STORED state and
    floating HU / normalized values afterwards. ``rescale_slope`` and
    ``rescale_intercept`` are kept through every state for provenance.
    """

    dims: Dims
    spacing: Spacing
    voxels: np.ndarray
    rescale_slope: float = 1.0
    rescale_intercept: float = 0.0
    unit_state: UnitState = UnitState.RAW_STORED
    series_description: str = ""

    def __post_init__(self) -> None:
        _check_dims(self.dims)
        _check_spacing(self.spacing)
        if tuple(self.voxels.shape) != tuple(self.dims):
            raise ValueError(
                f"voxel array shape {self.voxels.shape} != dims {self.dims}"
            )

    @property
    def voxel_count(self) -> int:
        return int(np.prod(self.dims))

    def with_voxels(self, voxels: np.ndarray, unit_state: UnitState) -> "CtVolume":
        """Copy of this volume carrying new voxel data and unit state."""
        return CtVolume(
            dims=self.dims,
            spacing=self.spacing,
            voxels=voxels,
            rescale_slope=self.rescale_slope,
            rescale_intercept=self.rescale_intercept,
            unit_state=unit_state,
            series_description=self.series_description,
        )


@dataclass(frozen=True)
class BinaryMask:
    """Per-voxel {0,1} segmentation mask (lesion, lung, or rater annotation)."""

    dims: Dims
    bits: np.ndarray

    def __post_init__(self) -> None:
        _check_dims(self.dims)
        if tuple(self.bits.shape) != tuple(self.dims):
            raise ValueError(f"mask shape {self.bits.shape} != dims {self.dims}")
        if self.bits.dtype != np.bool_:
            object.__setattr__(self, "bits", self.bits.astype(np.bool_))

    @property
    def positive_count(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class ProbabilityVolume:
    """Per-voxel lesion probability in [0, 1] from one model or one ensemble."""

    dims: Dims
    probs: np.ndarray

    def __post_init__(self) -> None:
        _check_dims(self.dims)
        if tuple(self.probs.shape) != tuple(self.dims):
            raise ValueError(f"probability shape {self.probs.shape} != dims {self.dims}")
        if self.probs.size and (
            float(self.probs.min()) < 0.0 or float(self.probs.max()) > 1.0
        ):
            raise ProbabilityOutOfRange(
                f"probabilities outside [0,1]: min={self.probs.min()}, "
                f"max={self.probs.max()}"
            )


def require_same_dims(*objs) -> Dims:
    """Return the common dims of the given carriers, or raise DimsMismatch."""
    dims = tuple(objs[0].dims)
    for o in objs[1:]:
        if tuple(o.dims) != dims:
            raise DimsMismatch(f"dims differ: {dims} vs {tuple(o.dims)}")
    return dims  # type: ignore[return-value]
