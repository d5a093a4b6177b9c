"""Overlay PNG writer: windowed grayscale with a red lesion tint."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoFailure, SliceOutOfRange
from .volumes import BinaryMask, CtVolume, require_same_dims


def window_to_gray(values: np.ndarray, low: float, high: float) -> np.ndarray:
    """Map values linearly so low -> 0 and high -> 255, clipping outside."""
    if not low < high:
        raise ValueError(f"window low {low} must be below high {high}")
    scaled = (values.astype(np.float64) - low) * (255.0 / (high - low))
    return np.rint(np.clip(scaled, 0.0, 255.0)).astype(np.uint8)


def write_overlay_image(
    volume: CtVolume,
    mask: BinaryMask,
    slice_index: int,
    window: tuple[float, float],
    path,
) -> None:
    """Write one axial slice as a lossless PNG.

    Grayscale comes from windowing the voxel values to [0, 255]; mask-positive
    pixels are tinted by blending 50% red, which is distinguishable from every
    pure gray level.
    """
    require_same_dims(volume, mask)
    nz = volume.dims[2]
    if not 0 <= slice_index < nz:
        raise SliceOutOfRange(f"slice {slice_index} outside [0, {nz})")
    low, high = window

    gray = window_to_gray(volume.voxels[:, :, slice_index], low, high)  # (nx, ny)
    m = mask.bits[:, :, slice_index]

    g16 = gray.astype(np.uint16)
    r = np.where(m, (g16 + 255) // 2, g16).astype(np.uint8)
    g = np.where(m, g16 // 2, g16).astype(np.uint8)
    rgb = np.stack([r, g, g], axis=-1)

    # image rows are y, columns are x
    img = Image.fromarray(rgb.transpose(1, 0, 2), mode="RGB")
    try:
        img.save(Path(path), format="PNG")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
