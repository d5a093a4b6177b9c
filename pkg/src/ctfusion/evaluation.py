"""Metrics and the multi-rater panel evaluation protocol.

Each rater is scored against the consensus of the remaining raters: a voxel
belongs to the panel ground truth when at least a quorum of the others marked
it. The model is scored against the same per-rater panels, which makes the
rater and model columns directly comparable. Significance uses a two-sided
sign-flip permutation test on the paired per-case differences (exact
enumeration when feasible, seeded Monte Carlo otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clinical import (
    CtClass,
    CtThresholds,
    ct_class,
    fit_ct_thresholds,
    lesion_share,
)
from .errors import (
    DimsMismatch,
    EmptyPanel,
    InsufficientRaters,
    LengthMismatch,
    PanelSizeMismatch,
)
from .volumes import BinaryMask, Spacing


@dataclass(frozen=True)
class PanelConfig:
    """Quorum rule for consensus masks: positive iff >= quorum raters agree."""

    quorum: int = 3
    panel_size: int = 5

    def __post_init__(self) -> None:
        if not 1 <= self.quorum <= self.panel_size:
            raise ValueError(f"need 1 <= quorum <= panel_size, got {self}")


@dataclass
class StudyCase:
    """One scan with model output, rater annotations, and clinical labels."""

    case_id: str
    spacing: Spacing
    left_lung: BinaryMask
    right_lung: BinaryMask
    model_mask: BinaryMask
    rater_masks: dict[str, BinaryMask]
    rater_shares: dict[str, tuple[float, float]]  # (left, right) estimates
    hospital_class: CtClass | None = None
    patient_id: str = ""
    scan_date: str = ""
    volume_path: str | None = None

    def model_shares(self) -> tuple[float, float]:
        report = lesion_share(self.model_mask, self.left_lung, self.right_lung, self.spacing)
        return report.left_share, report.right_share

    def model_total_share(self) -> float:
        report = lesion_share(self.model_mask, self.left_lung, self.right_lung, self.spacing)
        return report.total_share


@dataclass(frozen=True)
class ComparisonRow:
    """One row of a rater-vs-model table (plus the pooled 'all' row)."""

    rater_id: str
    rater_mean: float
    rater_std: float
    model_mean: float
    model_std: float
    case_count: int
    p_value: float

    def to_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "rater_mean": self.rater_mean,
            "rater_std": self.rater_std,
            "model_mean": self.model_mean,
            "model_std": self.model_std,
            "case_count": self.case_count,
            "p_value": self.p_value,
        }


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    if tuple(a.dims) != tuple(b.dims):
        raise DimsMismatch(f"dims differ: {a.dims} vs {b.dims}")
    na, nb = a.positive_count, b.positive_count
    if na + nb == 0:
        return 1.0
    inter = int((a.bits & b.bits).sum())
    return (2 * inter) / (na + nb)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    if tuple(a.dims) != tuple(b.dims):
        raise DimsMismatch(f"dims differ: {a.dims} vs {b.dims}")
    inter = int((a.bits & b.bits).sum())
    union = int((a.bits | b.bits).sum())
    if union == 0:
        return 1.0
    return inter / union


def panel_ground_truth(masks: Sequence[BinaryMask], cfg: PanelConfig) -> BinaryMask:
    """Consensus mask: voxel positive iff at least ``quorum`` raters marked it."""
    if len(masks) != cfg.panel_size:
        raise PanelSizeMismatch(f"got {len(masks)} masks, panel_size={cfg.panel_size}")
    dims = tuple(masks[0].dims)
    for m in masks[1:]:
        if tuple(m.dims) != dims:
            raise DimsMismatch("panel masks must share dims")
    votes = np.zeros(dims, dtype=np.int32)
    for m in masks:
        votes += m.bits
    return BinaryMask(dims=dims, bits=votes >= cfg.quorum)


def panel_share_truth(shares: Sequence[float]) -> float:
    """Arithmetic mean of the panel's share estimates."""
    if len(shares) == 0:
        raise EmptyPanel("no shares")
    return float(sum(shares) / len(shares))


def mae_me(pred: Sequence[float], truth: Sequence[float]) -> tuple[float, float]:
    """Mean absolute error and signed mean error (prediction minus truth)."""
    if len(pred) != len(truth) or len(pred) == 0:
        raise LengthMismatch("pred/truth must be equal-length and nonempty")
    diffs = [p - t for p, t in zip(pred, truth)]
    mae = sum(abs(d) for d in diffs) / len(diffs)
    me = sum(diffs) / len(diffs)
    return (mae, me)


def accuracy(pred: Sequence[CtClass], truth: Sequence[CtClass]) -> float:
    """Fraction of exact class matches."""
    if len(pred) != len(truth) or len(pred) == 0:
        raise LengthMismatch("pred/truth must be equal-length and nonempty")
    return sum(1 for p, t in zip(pred, truth) if p is t) / len(pred)


def paired_permutation_test(
    x: Sequence[float],
    y: Sequence[float],
    resamples: int = 10000,
    rng_seed: int = 0,
) -> float:
    """Two-sided sign-flip permutation test on paired differences.

    The statistic is the mean difference. All 2^n sign patterns are
    enumerated when 2^n <= resamples; otherwise ``resamples`` patterns are
    drawn with the given seed and the identity pattern is counted in, so the
    returned p lies in (0, 1].
    """
    n = len(x)
    if n != len(y) or n < 2:
        raise LengthMismatch("need equal-length sequences with n >= 2")
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)

    if 2**n <= resamples:
        patterns = np.arange(2**n, dtype=np.int64)
        signs = 1 - 2 * ((patterns[:, None] >> np.arange(n)) & 1)  # index 0 = identity
        stats = (signs * d).sum(axis=1) / n
        observed = stats[0]
        count = int((np.abs(stats) >= abs(observed)).sum())
        return count / 2**n

    rng = np.random.default_rng(rng_seed)
    observed = float(d.sum() / n)
    signs = rng.integers(0, 2, size=(resamples, n)) * 2 - 1
    stats = (signs * d).sum(axis=1) / n
    count = int((np.abs(stats) >= abs(observed)).sum())
    return (count + 1) / (resamples + 1)


def _rater_ids(cases: Sequence[StudyCase]) -> list[str]:
    ids = sorted(cases[0].rater_masks.keys())
    for case in cases:
        if sorted(case.rater_masks.keys()) != ids or sorted(case.rater_shares.keys()) != ids:
            raise InsufficientRaters(
                f"case {case.case_id} has a different rater set"
            )
    return ids


def _max_share(pair: tuple[float, float]) -> float:
    return max(pair)


def _paired_units(
    cases: Sequence[StudyCase],
    rater: str,
    others: list[str],
    metric: str,
    quorum: int | None,
    thresholds: CtThresholds,
) -> tuple[list[float], list[float]]:
    """Per-unit (rater_value, model_value) pairs for one left-out rater."""
    panel_cfg = PanelConfig(
        quorum=quorum if quorum is not None else len(others) // 2 + 1,
        panel_size=len(others),
    )
    rater_vals: list[float] = []
    model_vals: list[float] = []
    for case in cases:
        if metric == "dice":
            truth = panel_ground_truth([case.rater_masks[o] for o in others], panel_cfg)
            rater_vals.append(dice(case.rater_masks[rater], truth))
            model_vals.append(dice(case.model_mask, truth))
        elif metric == "share":
            model_pair = case.model_shares()
            for lung_idx in (0, 1):
                truth_share = panel_share_truth(
                    [case.rater_shares[o][lung_idx] for o in others]
                )
                rater_vals.append(abs(case.rater_shares[rater][lung_idx] - truth_share))
                model_vals.append(abs(model_pair[lung_idx] - truth_share))
        elif metric == "ctclass":
            truth_share = panel_share_truth(
                [_max_share(case.rater_shares[o]) for o in others]
            )
            truth_class = ct_class(truth_share, thresholds)
            rater_class = ct_class(_max_share(case.rater_shares[rater]), thresholds)
            model_class = ct_class(_max_share(case.model_shares()), thresholds)
            rater_vals.append(1.0 if rater_class is truth_class else 0.0)
            model_vals.append(1.0 if model_class is truth_class else 0.0)
        else:
            raise ValueError(f"unknown metric {metric!r}")
    return rater_vals, model_vals


def leave_one_out_study(
    cases: Sequence[StudyCase],
    metric: str,
    quorum: int | None = None,
    thresholds: CtThresholds | None = None,
    resamples: int = 10000,
    rng_seed: int = 0,
) -> list[ComparisonRow]:
    """Score every rater (and the model) against the panel of the others.

    ``metric`` is one of ``dice`` (consensus-mask overlap), ``share``
    (absolute error against the panel-mean share, one unit per lung), or
    ``ctclass`` (agreement with the panel-derived class). Returns one row per
    rater plus a pooled row with rater_id ``all`` that concatenates every
    (rater, unit) pair.
    """
    if not cases:
        raise LengthMismatch("no cases")
    raters = _rater_ids(cases)
    if len(raters) < 2:
        raise InsufficientRaters("need at least two raters")
    thresholds = thresholds or CtThresholds()

    rows: list[ComparisonRow] = []
    pooled_rater: list[float] = []
    pooled_model: list[float] = []
    for rater in raters:
        others = [r for r in raters if r != rater]
        rater_vals, model_vals = _paired_units(
            cases, rater, others, metric, quorum, thresholds
        )
        pooled_rater.extend(rater_vals)
        pooled_model.extend(model_vals)
        rows.append(_make_row(rater, rater_vals, model_vals, resamples, rng_seed))
    rows.append(_make_row("all", pooled_rater, pooled_model, resamples, rng_seed))
    return rows


def _make_row(
    rater_id: str,
    rater_vals: list[float],
    model_vals: list[float],
    resamples: int,
    rng_seed: int,
) -> ComparisonRow:
    rv = np.asarray(rater_vals, dtype=np.float64)
    mv = np.asarray(model_vals, dtype=np.float64)
    return ComparisonRow(
        rater_id=rater_id,
        rater_mean=float(rv.mean()),
        rater_std=float(rv.std(ddof=0)),
        model_mean=float(mv.mean()),
        model_std=float(mv.std(ddof=0)),
        case_count=len(rater_vals),
        p_value=paired_permutation_test(rater_vals, model_vals, resamples, rng_seed),
    )


@dataclass(frozen=True)
class ThresholdFitResult:
    """Per-fold fitted class boundaries for one rater (or the pooled panel)."""

    rater_id: str
    fold1: CtThresholds
    fold2: CtThresholds
    full: CtThresholds
    cross_fold_accuracy: float

    def to_dict(self) -> dict:
        return {
            "rater_id": self.rater_id,
            "fold1": [self.fold1.t2, self.fold1.t3, self.fold1.t4],
            "fold2": [self.fold2.t2, self.fold2.t3, self.fold2.t4],
            "full": [self.full.t2, self.full.t3, self.full.t4],
            "cross_fold_accuracy": self.cross_fold_accuracy,
        }


def fit_panel_bias_thresholds(
    cases: Sequence[StudyCase], split: tuple[Sequence[str], Sequence[str]]
) -> list[ThresholdFitResult]:
    """Fit class thresholds per rater and pooled, per fold and on all cases.

    ``split`` holds the two folds as case-id sequences. The reported accuracy
    applies each fold's fitted thresholds to the opposite fold's cases against
    the hospital labels. Requires hospital labels on every case.
    """
    if not cases:
        raise LengthMismatch("no cases")
    by_id = {c.case_id: c for c in cases}
    fold1 = [by_id[cid] for cid in split[0]]
    fold2 = [by_id[cid] for cid in split[1]]
    if set(split[0]) | set(split[1]) != set(by_id):
        raise ValueError("split does not cover the case set exactly")
    for case in cases:
        if case.hospital_class is None:
            raise ValueError(f"case {case.case_id} has no hospital class label")
    raters = _rater_ids(cases)

    def pairs(subset: list[StudyCase], rater_subset: list[str]):
        shares = [
            _max_share(c.rater_shares[r]) for r in rater_subset for c in subset
        ]
        labels = [c.hospital_class for r in rater_subset for c in subset]
        return shares, labels

    results: list[ThresholdFitResult] = []
    for rater_id, rater_subset in [(r, [r]) for r in raters] + [("all", raters)]:
        thr1 = fit_ct_thresholds(*pairs(fold1, rater_subset))
        thr2 = fit_ct_thresholds(*pairs(fold2, rater_subset))
        thr_full = fit_ct_thresholds(*pairs(list(cases), rater_subset))
        hits = 0
        total = 0
        for train_thr, test_fold in ((thr1, fold2), (thr2, fold1)):
            for r in rater_subset:
                for case in test_fold:
                    predicted = ct_class(_max_share(case.rater_shares[r]), train_thr)
                    hits += predicted is case.hospital_class
                    total += 1
        results.append(
            ThresholdFitResult(
                rater_id=rater_id,
                fold1=thr1,
                fold2=thr2,
                full=thr_full,
                cross_fold_accuracy=hits / total,
            )
        )
    return results
