"""Lesion-share computation, severity classes, and patient dynamics.

Severity uses the five-stage scale based on the fraction of lung parenchyma
involved: class 0 for no damage, then up to 25%, 25-50%, 50-75%, and 75% or
more. Boundaries follow a fixed half-open scheme so the mapping is monotone
and total: share 0 -> CT0, (0, t2] -> CT1, (t2, t3] -> CT2, (t3, t4) -> CT3,
>= t4 -> CT4.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    DegenerateLabels,
    DimsMismatch,
    EmptyLungs,
    OverlappingLungs,
)
from .volumes import BinaryMask, Spacing


class CtClass(enum.IntEnum):
    CT0 = 0
    CT1 = 1
    CT2 = 2
    CT3 = 3
    CT4 = 4

    @classmethod
    def parse(cls, text: str) -> "CtClass":
        try:
            return cls[text.strip().upper().replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown CT class {text!r}") from None


class Dynamics(enum.Enum):
    POSITIVE_RESPONSE = "positive_response"
    PROGRESSION = "progression"
    STABLE = "stable"


@dataclass(frozen=True)
class CtThresholds:
    """Lesion-share boundaries for classes 2, 3 and 4."""

    t2: float = 0.25
    t3: float = 0.50
    t4: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 < self.t2 < self.t3 < self.t4 <= 1.0:
            raise ValueError(f"need 0 < t2 < t3 < t4 <= 1, got {self}")


@dataclass(frozen=True)
class LesionShareReport:
    """Lesion-to-lung volume ratios plus the underlying counts."""

    left_share: float
    right_share: float
    total_share: float
    lesion_voxels: int
    lung_voxels: int
    lesion_volume_ml: float
    lung_volume_ml: float

    def to_dict(self) -> dict:
        return {
            "left_share": self.left_share,
            "right_share": self.right_share,
            "total_share": self.total_share,
            "lesion_voxels": self.lesion_voxels,
            "lung_voxels": self.lung_voxels,
            "lesion_volume_ml": self.lesion_volume_ml,
            "lung_volume_ml": self.lung_volume_ml,
        }


def lesion_share(
    lesion: BinaryMask,
    left_lung: BinaryMask,
    right_lung: BinaryMask,
    spacing: Spacing,
) -> LesionShareReport:
    """Per-lung and total lesion share by voxel counting.

    Lesion voxels outside both lungs are excluded. The total share is taken
    over the union of the lungs, which makes it the lung-volume-weighted mean
    of the per-lung shares.
    """
    if not (tuple(lesion.dims) == tuple(left_lung.dims) == tuple(right_lung.dims)):
        raise DimsMismatch("lesion and lung masks must share dims")
    if (left_lung.bits & right_lung.bits).any():
        raise OverlappingLungs("left and right lung masks intersect")

    left_count = left_lung.positive_count
    right_count = right_lung.positive_count
    lung_count = left_count + right_count
    if lung_count == 0:
        raise EmptyLungs("no lung voxels")

    lesion_left = int((lesion.bits & left_lung.bits).sum())
    lesion_right = int((lesion.bits & right_lung.bits).sum())
    lesion_count = lesion_left + lesion_right

    voxel_ml = spacing[0] * spacing[1] * spacing[2] / 1000.0
    return LesionShareReport(
        left_share=lesion_left / left_count if left_count else 0.0,
        right_share=lesion_right / right_count if right_count else 0.0,
        total_share=lesion_count / lung_count,
        lesion_voxels=lesion_count,
        lung_voxels=lung_count,
        lesion_volume_ml=lesion_count * voxel_ml,
        lung_volume_ml=lung_count * voxel_ml,
    )


def ct_class(max_share: float, thr: CtThresholds | None = None) -> CtClass:
    """Map the maximum per-lung lesion share to a severity class."""
    if not 0.0 <= max_share <= 1.0:
        raise ValueError(f"share {max_share} outside [0,1]")
    thr = thr or CtThresholds()
    if max_share == 0.0:
        return CtClass.CT0
    if max_share <= thr.t2:
        return CtClass.CT1
    if max_share <= thr.t3:
        return CtClass.CT2
    if max_share < thr.t4:
        return CtClass.CT3
    return CtClass.CT4


def threshold_candidates(shares: list[float]) -> list[float]:
    """Candidate boundaries: midpoints between consecutive distinct positive
    shares, plus sentinels below the smallest and above the largest."""
    positive = sorted({s for s in shares if s > 0.0})
    if not positive:
        return []
    candidates = [positive[0] / 2.0]
    candidates += [(a + b) / 2.0 for a, b in zip(positive, positive[1:])]
    candidates.append((positive[-1] + 1.0) / 2.0 if positive[-1] < 1.0 else 1.0)
    # keep strictly increasing uniques (sentinel may coincide at share = 1)
    out: list[float] = []
    for c in candidates:
        if not out or c > out[-1]:
            out.append(c)
    return out


def classification_accuracy(
    shares: list[float], labels: list[CtClass], thr: CtThresholds
) -> float:
    hits = sum(1 for s, lab in zip(shares, labels) if ct_class(s, thr) is lab)
    return hits / len(shares)


def fit_ct_thresholds(shares: list[float], labels: list[CtClass]) -> CtThresholds:
    """Exhaustive threshold fit maximizing classification accuracy.

    Searches every ordered triple of candidate boundaries (midpoints between
    distinct observed shares plus sentinels); accuracy is piecewise constant
    between observations, so this grid is lossless. Ties resolve to the
    lexicographically smallest (t2, t3, t4).
    """
    if len(shares) != len(labels) or len(shares) < 2:
        raise ValueError("shares and labels must have equal length >= 2")
    if len(set(labels)) < 2:
        raise DegenerateLabels("need at least two distinct labels")
    candidates = threshold_candidates(shares)
    if len(candidates) < 3:
        raise DegenerateLabels(
            "need at least two distinct positive shares to place three thresholds"
        )

    best: CtThresholds | None = None
    best_acc = -1.0
    for t2, t3, t4 in combinations(candidates, 3):
        thr = CtThresholds(t2, t3, t4)
        acc = classification_accuracy(shares, labels, thr)
        if acc > best_acc:
            best, best_acc = thr, acc
    assert best is not None
    return best


def stratified_two_fold_split(
    case_ids: list, labels: list[CtClass], rng_seed: int = 0
) -> tuple[list, list]:
    """Split cases into two folds stratified by class.

    Within each class the cases are shuffled by the seed and dealt
    alternately; the starting fold carries over between classes so both the
    per-class and the overall fold sizes differ by at most one.
    """
    if len(case_ids) != len(labels):
        raise ValueError("case_ids and labels must have equal length")
    if len(case_ids) < 2:
        raise ValueError("need at least two cases to split")
    rng = np.random.default_rng(rng_seed)
    folds: tuple[list, list] = ([], [])
    toggle = 0
    for cls in sorted(set(labels), key=int):
        members = [cid for cid, lab in zip(case_ids, labels) if lab is cls]
        order = rng.permutation(len(members))
        for idx in order:
            folds[toggle].append(members[int(idx)])
            toggle ^= 1
    return folds


def dynamics(
    share_before: float, share_after: float, stability_band: float = 0.01
) -> Dynamics:
    """Classify a follow-up scan pair from the change in total lesion share.

    Changes strictly smaller than ``stability_band`` (in absolute share
    points) are stable; otherwise the sign of the change decides.
    """
    for s in (share_before, share_after):
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"share {s} outside [0,1]")
    delta = share_after - share_before
    if abs(delta) < stability_band:
        return Dynamics.STABLE
    if delta > 0:
        return Dynamics.PROGRESSION
    if delta < 0:
        return Dynamics.POSITIVE_RESPONSE
    return Dynamics.STABLE


def quantize_share(share: float, step: float = 0.05) -> float:
    """Round a share to the nearest multiple of ``step``, halves up."""
    if not 0.0 <= share <= 1.0:
        raise ValueError(f"share {share} outside [0,1]")
    k = math.floor(share / step + 0.5)
    return min(max(k * step, 0.0), 1.0)
