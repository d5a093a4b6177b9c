"""Adapters that bring per-model lesion probabilities into the pipeline.

Trained networks run elsewhere; their outputs arrive as probability sidecars
listed in a manifest. The only built-in model is a deterministic dual-threshold
region grower that reproduces the semi-automated annotation seed: mark voxels
whose HU lies in [-640, -240], restricted to the lungs, with small connected
components pruned.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DimsMismatch, HeaderParseError, UnknownFamily, WrongUnitState
from .sidecar import read_raw_volume
from .volumes import (
    BinaryMask,
    CtVolume,
    ProbabilityVolume,
    UnitState,
    require_same_dims,
)

# 26-connected neighborhood for component labeling
_CONNECTIVITY = np.ones((3, 3, 3), dtype=bool)


class ModelFamily(enum.Enum):
    RESNET = "resnet"
    DPN = "dpn"
    FPN = "fpn"
    LUNG = "lung"
    REFERENCE = "reference"

    @classmethod
    def parse(cls, text: str) -> "ModelFamily":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise UnknownFamily(
                f"unknown family {text!r}; expected one of "
                f"{[f.value for f in cls]}"
            ) from None


@dataclass(frozen=True)
class ModelPrediction:
    model_id: str
    family: ModelFamily
    prob: ProbabilityVolume


@dataclass(frozen=True)
class RegionGrowConfig:
    """Dual HU thresholds with lung restriction and component pruning."""

    lower: float = -640.0
    upper: float = -240.0
    restrict_to_lungs: bool = True
    min_component_voxels: int = 1

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ValueError(f"lower {self.lower} must be below upper {self.upper}")
        if self.min_component_voxels < 1:
            raise ValueError("min_component_voxels must be >= 1")


def load_predictions(manifest_path) -> list[ModelPrediction]:
    """Read a model manifest: lines of ``model_id<TAB>family<TAB>header-path``.

    Paths are resolved relative to the manifest file. Probability sidecars are
    used as-is; mask sidecars are accepted for lung entries and promoted to
    {0,1} probabilities. All loaded volumes must share dims.
    """
    manifest_path = Path(manifest_path)
    try:
        text = manifest_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise HeaderParseError(f"cannot read manifest {manifest_path}: {exc}") from exc

    predictions: list[ModelPrediction] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise HeaderParseError(
                f"{manifest_path}:{lineno}: expected 3 tab-separated fields"
            )
        model_id, family_text, rel_path = (p.strip() for p in parts)
        if not model_id:
            raise HeaderParseError(f"{manifest_path}:{lineno}: empty model id")
        family = ModelFamily.parse(family_text)
        volume = read_raw_volume(manifest_path.parent / rel_path)
        if isinstance(volume, BinaryMask):
            prob = ProbabilityVolume(
                dims=volume.dims, probs=volume.bits.astype(np.float32)
            )
        elif isinstance(volume, ProbabilityVolume):
            prob = volume
        else:
            raise HeaderParseError(
                f"{manifest_path}:{lineno}: sidecar must be prob or mask, got ct"
            )
        predictions.append(ModelPrediction(model_id=model_id, family=family, prob=prob))

    if predictions:
        require_same_dims(*[p.prob for p in predictions])
    return predictions


def reference_region_grow(
    volume: CtVolume, lungs: BinaryMask, cfg: RegionGrowConfig | None = None
) -> ProbabilityVolume:
    """Probability 1.0 inside the HU band (within the lungs), 0.0 elsewhere.

    26-connected components smaller than ``min_component_voxels`` are removed.
    """
    cfg = cfg or RegionGrowConfig()
    if volume.unit_state is not UnitState.HOUNSFIELD:
        raise WrongUnitState("reference_region_grow needs a Hounsfield volume")
    if tuple(lungs.dims) != tuple(volume.dims):
        raise DimsMismatch(f"lungs dims {lungs.dims} != volume dims {volume.dims}")

    band = (volume.voxels >= cfg.lower) & (volume.voxels <= cfg.upper)
    if cfg.restrict_to_lungs:
        band &= lungs.bits
    if cfg.min_component_voxels > 1 and band.any():
        labels, n_labels = ndimage.label(band, structure=_CONNECTIVITY)
        counts = np.bincount(labels.ravel(), minlength=n_labels + 1)
        keep = counts >= cfg.min_component_voxels
        keep[0] = False
        band = keep[labels]
    return ProbabilityVolume(dims=volume.dims, probs=band.astype(np.float32))
