"""Ensemble combination rules.

Family ensembles are combined per voxel with a signed score: +1 when every
vote-family model exceeds the vote threshold, +1 per mean-family ensemble
above its positive threshold, -1 per mean-family ensemble below its negative
threshold. A voxel is predicted positive when its score is strictly positive.
All comparisons are strict; a value exactly at a threshold contributes
nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimsMismatch, EmptyEnsemble, EmptySample, HeaderParseError
from .evaluation import dice
from .models import ModelFamily, ModelPrediction
from .volumes import BinaryMask, ProbabilityVolume, require_same_dims


@dataclass(frozen=True)
class FusionConfig:
    """Voting and confidence thresholds for the final per-voxel score."""

    resnet_vote_thr: float = 0.5
    dpn_pos_thr: float = 0.7
    fpn_pos_thr: float = 0.85
    dpn_neg_thr: float = 0.3
    fpn_neg_thr: float = 0.15

    def __post_init__(self) -> None:
        if not 0.0 < self.resnet_vote_thr < 1.0:
            raise ValueError(f"resnet_vote_thr {self.resnet_vote_thr} outside (0,1)")
        for neg, pos, name in (
            (self.dpn_neg_thr, self.dpn_pos_thr, "dpn"),
            (self.fpn_neg_thr, self.fpn_pos_thr, "fpn"),
        ):
            if not 0.0 <= neg < pos <= 1.0:
                raise ValueError(f"{name} thresholds must satisfy 0 <= neg < pos <= 1")


def save_fusion_config(cfg: FusionConfig, path) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)!r}" for f in fields(FusionConfig)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_fusion_config(path) -> FusionConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise HeaderParseError(f"cannot read fusion config {path}: {exc}") from exc
    known = {f.name for f in fields(FusionConfig)}
    values: dict[str, float] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise HeaderParseError(f"{path}:{lineno}: expected key=value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise HeaderParseError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = float(raw)
        except ValueError as exc:
            raise HeaderParseError(f"{path}:{lineno}: bad float {raw!r}") from exc
    try:
        return FusionConfig(**values)
    except ValueError as exc:
        raise HeaderParseError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class ProjectionWeights:
    """Convex weights for merging axial/coronal/sagittal predictions."""

    w_axial: float
    w_coronal: float
    w_sagittal: float

    def __post_init__(self) -> None:
        w = (self.w_axial, self.w_coronal, self.w_sagittal)
        if any(x < 0 for x in w):
            raise ValueError(f"weights must be nonnegative, got {w}")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {sum(w)!r}")


@dataclass(frozen=True)
class SubsetSearchConfig:
    pool_size: int = 16
    subset_size: int = 5
    sample_count: int = 1000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.subset_size > self.pool_size or self.subset_size < 1:
            raise ValueError("need 1 <= subset_size <= pool_size")
        if self.sample_count < 1:
            raise EmptySample("sample_count must be >= 1")


def _stack(probs: Sequence[ProbabilityVolume]) -> list[np.ndarray]:
    if not probs:
        raise EmptyEnsemble("no member volumes")
    require_same_dims(*probs)
    return [p.probs for p in probs]


def mean_ensemble(probs: Sequence[ProbabilityVolume]) -> ProbabilityVolume:
    """Voxelwise arithmetic mean, accumulated in float64 in member order."""
    arrays = _stack(probs)
    acc = arrays[0].astype(np.float64)
    for a in arrays[1:]:
        acc = acc + a
    acc /= len(arrays)
    return ProbabilityVolume(dims=probs[0].dims, probs=acc.astype(np.float32))


def unanimous_vote(probs: Sequence[ProbabilityVolume], thr: float) -> BinaryMask:
    """Voxel positive iff every member value strictly exceeds ``thr``."""
    arrays = _stack(probs)
    vote = arrays[0] > thr
    for a in arrays[1:]:
        vote &= a > thr
    return BinaryMask(dims=probs[0].dims, bits=vote)


def score_fusion(
    resnet_probs: Sequence[ProbabilityVolume],
    dpn_mean: ProbabilityVolume,
    fpn_mean: ProbabilityVolume,
    cfg: FusionConfig | None = None,
) -> BinaryMask:
    """Apply the five-rule signed score and keep strictly positive voxels."""
    cfg = cfg or FusionConfig()
    if not resnet_probs:
        raise EmptyEnsemble("resnet ensemble is empty")
    require_same_dims(*resnet_probs, dpn_mean, fpn_mean)

    score = unanimous_vote(resnet_probs, cfg.resnet_vote_thr).bits.astype(np.int8)
    score += (dpn_mean.probs > cfg.dpn_pos_thr).astype(np.int8)
    score += (fpn_mean.probs > cfg.fpn_pos_thr).astype(np.int8)
    score -= (dpn_mean.probs < cfg.dpn_neg_thr).astype(np.int8)
    score -= (fpn_mean.probs < cfg.fpn_neg_thr).astype(np.int8)
    return BinaryMask(dims=dpn_mean.dims, bits=score > 0)


def fuse_families(
    by_family: dict[ModelFamily, Sequence[ProbabilityVolume]],
    cfg: FusionConfig | None = None,
) -> BinaryMask:
    """Scored fusion over whichever families are present.

    RESNET and REFERENCE members contribute a unanimous-vote term; DPN and FPN
    contribute their mean-threshold terms. Absent families simply contribute
    no score, so a run with a single family degenerates to that family's own
    rule. At least one prediction must be present.
    """
    cfg = cfg or FusionConfig()
    members = [p for family in by_family.values() for p in family]
    if not members:
        raise EmptyEnsemble("no predictions to fuse")
    dims = require_same_dims(*members)

    score = np.zeros(dims, dtype=np.int8)
    for vote_family in (ModelFamily.RESNET, ModelFamily.REFERENCE):
        group = by_family.get(vote_family)
        if group:
            score += unanimous_vote(group, cfg.resnet_vote_thr).bits.astype(np.int8)
    for mean_family, pos_thr, neg_thr in (
        (ModelFamily.DPN, cfg.dpn_pos_thr, cfg.dpn_neg_thr),
        (ModelFamily.FPN, cfg.fpn_pos_thr, cfg.fpn_neg_thr),
    ):
        group = by_family.get(mean_family)
        if group:
            mean = mean_ensemble(group)
            score += (mean.probs > pos_thr).astype(np.int8)
            score -= (mean.probs < neg_thr).astype(np.int8)
    return BinaryMask(dims=dims, bits=score > 0)


def group_by_family(
    predictions: Iterable[ModelPrediction],
) -> dict[ModelFamily, list[ProbabilityVolume]]:
    grouped: dict[ModelFamily, list[ProbabilityVolume]] = {}
    for p in predictions:
        grouped.setdefault(p.family, []).append(p.prob)
    return grouped


def select_best_subset(
    pool: Sequence[ProbabilityVolume],
    cfg: SubsetSearchConfig,
    objective: Callable[[tuple[int, ...]], float],
) -> tuple[tuple[int, ...], float]:
    """Randomized subset search: draw subsets, keep the best objective.

    Each draw picks ``subset_size`` distinct indices uniformly; the same
    subset may be drawn more than once. Ties keep the first-drawn subset, so
    the result is deterministic for a fixed seed.
    """
    if len(pool) != cfg.pool_size:
        raise ValueError(f"pool has {len(pool)} members, config says {cfg.pool_size}")
    rng = np.random.default_rng(cfg.rng_seed)
    best_indices: tuple[int, ...] | None = None
    best_value = -np.inf
    for _ in range(cfg.sample_count):
        draw = rng.choice(cfg.pool_size, size=cfg.subset_size, replace=False)
        indices = tuple(sorted(int(i) for i in draw))
        value = float(objective(indices))
        if best_indices is None or value > best_value:
            best_indices, best_value = indices, value
    assert best_indices is not None
    return best_indices, best_value


def merge_projections(
    p_ax: ProbabilityVolume,
    p_cor: ProbabilityVolume,
    p_sag: ProbabilityVolume,
    w: ProjectionWeights,
) -> ProbabilityVolume:
    """Convex combination of the three per-projection probability volumes."""
    require_same_dims(p_ax, p_cor, p_sag)
    merged = (
        w.w_axial * p_ax.probs.astype(np.float64)
        + w.w_coronal * p_cor.probs.astype(np.float64)
        + w.w_sagittal * p_sag.probs.astype(np.float64)
    )
    merged = np.clip(merged, 0.0, 1.0)
    return ProbabilityVolume(dims=p_ax.dims, probs=merged.astype(np.float32))


def fit_projection_weights(
    p_ax: ProbabilityVolume,
    p_cor: ProbabilityVolume,
    p_sag: ProbabilityVolume,
    truth: BinaryMask,
    binarize_thr: float = 0.5,
    grid_step: float = 0.05,
) -> ProjectionWeights:
    """Exhaustive simplex-grid search for the merge weights maximizing DSC.

    The grid holds all nonnegative multiples of ``grid_step`` summing to 1;
    ties resolve to the lexicographically smallest (axial, coronal, sagittal)
    triple.
    """
    if not 0.0 < grid_step <= 1.0:
        raise ValueError(f"grid_step {grid_step} outside (0, 1]")
    require_same_dims(p_ax, p_cor, p_sag, truth)
    m = round(1.0 / grid_step)

    best: tuple[float, float, float] | None = None
    best_score = -1.0
    for i in range(m + 1):
        for j in range(m + 1 - i):
            k = m - i - j
            w = ProjectionWeights(i / m, j / m, k / m)
            merged = merge_projections(p_ax, p_cor, p_sag, w)
            pred = BinaryMask(dims=truth.dims, bits=merged.probs > binarize_thr)
            score = dice(pred, truth)
            if best is None or score > best_score:
                best = (w.w_axial, w.w_coronal, w.w_sagittal)
                best_score = score
    assert best is not None
    return ProjectionWeights(*best)
