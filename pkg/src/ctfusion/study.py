"""Study definition files and the rater-vs-model report document.

A study definition is a JSON file listing cases with sidecar paths for lung,
model, and rater masks, per-lung rater share estimates, hospital class
labels, and scan dates. The built report mirrors the clinical evaluation
protocol: leave-one-out segmentation and share tables, per-rater fitted
class thresholds with cross-fold accuracies, and a dynamics table over
follow-up pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

from .clinical import (
    CtClass,
    ct_class,
    dynamics,
    fit_ct_thresholds,
    stratified_two_fold_split,
)
from .errors import DegenerateLabels, HeaderParseError
from .evaluation import (
    StudyCase,
    fit_panel_bias_thresholds,
    leave_one_out_study,
    paired_permutation_test,
)
from .sidecar import read_raw_volume
from .volumes import BinaryMask


def _load_mask(base: Path, rel: str) -> BinaryMask:
    volume = read_raw_volume(base / rel)
    if not isinstance(volume, BinaryMask):
        raise HeaderParseError(f"{rel}: expected a mask sidecar")
    return volume


def load_study(path) -> list[StudyCase]:
    """Parse a study definition file into StudyCase objects."""
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise HeaderParseError(f"cannot read study file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise HeaderParseError(f"{path}: invalid JSON: {exc}") from exc

    entries = document.get("cases")
    if not isinstance(entries, list) or not entries:
        raise HeaderParseError(f"{path}: study must list at least one case")

    base = path.parent
    cases: list[StudyCase] = []
    for entry in entries:
        try:
            rater_masks = {}
            rater_shares = {}
            for rid, r in entry["raters"].items():
                rater_masks[rid] = _load_mask(base, r["mask"])
                rater_shares[rid] = (float(r["left_share"]), float(r["right_share"]))
            label = entry.get("hospital_class")
            cases.append(
                StudyCase(
                    case_id=str(entry["case_id"]),
                    spacing=tuple(float(s) for s in entry.get("spacing", [1, 1, 1])),
                    left_lung=_load_mask(base, entry["left_lung"]),
                    right_lung=_load_mask(base, entry["right_lung"]),
                    model_mask=_load_mask(base, entry["model_mask"]),
                    rater_masks=rater_masks,
                    rater_shares=rater_shares,
                    hospital_class=CtClass.parse(label) if label else None,
                    patient_id=str(entry.get("patient_id", "")),
                    scan_date=str(entry.get("scan_date", "")),
                    volume_path=entry.get("volume"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise HeaderParseError(f"{path}: bad case entry: {exc}") from exc
    return cases


def _dynamics_pairs(cases: list[StudyCase]) -> list[tuple[StudyCase, StudyCase]]:
    by_patient: dict[str, list[StudyCase]] = {}
    for case in cases:
        if case.patient_id:
            by_patient.setdefault(case.patient_id, []).append(case)
    pairs = []
    for patient in sorted(by_patient):
        scans = sorted(by_patient[patient], key=lambda c: (c.scan_date, c.case_id))
        if len(scans) == 2:
            pairs.append((scans[0], scans[1]))
    return pairs


def _accuracy_rows(
    cases: list[StudyCase],
    split: tuple[list[str], list[str]],
    resamples: int,
    rng_seed: int,
) -> list[dict]:
    """Cross-fold classification accuracies against hospital labels.

    The model column corrects for panel bias: for each rater row the model's
    thresholds are fitted on the *other* raters' train-fold estimations.
    """
    by_id = {c.case_id: c for c in cases}
    folds = ([by_id[cid] for cid in split[0]], [by_id[cid] for cid in split[1]])
    raters = sorted(cases[0].rater_masks.keys())

    def rater_pairs(fold_cases, rater_subset):
        shares = [max(c.rater_shares[r]) for r in rater_subset for c in fold_cases]
        labels = [c.hospital_class for r in rater_subset for c in fold_cases]
        return shares, labels

    model_share = {c.case_id: max(c.model_shares()) for c in cases}

    rows = []
    for rater in raters + ["all"]:
        subset = [rater] if rater != "all" else raters
        panel = [r for r in raters if r not in subset] or raters

        rater_correct: list[float] = []
        model_correct: list[float] = []
        per_fold = {}
        # each fold is scored with thresholds fitted on the opposite fold
        for train_idx, test_idx, tested_tag in ((1, 0, "fold1"), (0, 1, "fold2")):
            rater_thr = fit_ct_thresholds(*rater_pairs(folds[train_idx], subset))
            model_thr = fit_ct_thresholds(*rater_pairs(folds[train_idx], panel))
            r_hits, m_hits, n = 0.0, 0.0, 0
            for case in folds[test_idx]:
                truth = case.hospital_class
                model_cls = ct_class(model_share[case.case_id], model_thr)
                m_ok = 1.0 if model_cls is truth else 0.0
                for r in subset:
                    r_cls = ct_class(max(case.rater_shares[r]), rater_thr)
                    r_ok = 1.0 if r_cls is truth else 0.0
                    rater_correct.append(r_ok)
                    model_correct.append(m_ok)
                    r_hits += r_ok
                    m_hits += m_ok
                    n += 1
            per_fold[tested_tag] = {"rater": r_hits / n, "model": m_hits / n, "cases": n}
        p = paired_permutation_test(rater_correct, model_correct, resamples, rng_seed)
        rows.append(
            {
                "rater_id": rater,
                "fold1": per_fold["fold1"],
                "fold2": per_fold["fold2"],
                "combined": {
                    "rater": sum(rater_correct) / len(rater_correct),
                    "model": sum(model_correct) / len(model_correct),
                    "cases": len(rater_correct),
                },
                "p_value": p,
            }
        )
    return rows


def build_study_report(
    cases: list[StudyCase],
    quorum: int | None = None,
    stability_band: float = 0.01,
    resamples: int = 10000,
    rng_seed: int = 0,
) -> dict:
    """Assemble the full study report as a JSON-serializable document."""
    report: dict = {
        "case_count": len(cases),
        "rater_count": len(cases[0].rater_masks) if cases else 0,
    }

    report["segmentation"] = [
        row.to_dict()
        for row in leave_one_out_study(
            cases, "dice", quorum=quorum, resamples=resamples, rng_seed=rng_seed
        )
    ]
    report["lesion_share"] = [
        row.to_dict()
        for row in leave_one_out_study(
            cases, "share", quorum=quorum, resamples=resamples, rng_seed=rng_seed
        )
    ]
    report["ct_class_panel"] = [
        row.to_dict()
        for row in leave_one_out_study(
            cases, "ctclass", quorum=quorum, resamples=resamples, rng_seed=rng_seed
        )
    ]

    labeled = [c for c in cases if c.hospital_class is not None]
    if len(labeled) >= 4 and len(labeled) == len(cases):
        split = stratified_two_fold_split(
            [c.case_id for c in cases],
            [c.hospital_class for c in cases],
            rng_seed=rng_seed,
        )
        report["split"] = {"fold1": sorted(split[0]), "fold2": sorted(split[1])}
        try:
            report["thresholds"] = [
                r.to_dict() for r in fit_panel_bias_thresholds(cases, split)
            ]
            report["ct_accuracy"] = _accuracy_rows(cases, split, resamples, rng_seed)
        except DegenerateLabels as exc:
            report["thresholds_error"] = str(exc)
    else:
        report["thresholds_error"] = "hospital labels missing or too few cases"

    pairs = _dynamics_pairs(cases)
    dyn_rows = []
    for before, after in pairs:
        share_before = before.model_total_share()
        share_after = after.model_total_share()
        label = dynamics(share_before, share_after, stability_band)
        dyn_rows.append(
            {
                "patient_id": before.patient_id,
                "before_case": before.case_id,
                "after_case": after.case_id,
                "share_before": share_before,
                "share_after": share_after,
                "dynamics": label.value,
            }
        )
    report["dynamics"] = dyn_rows
    return report


def report_to_json(report: dict) -> str:
    """Canonical byte-stable serialization of a report document."""
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _format_comparison_table(title: str, rows: list[dict]) -> list[str]:
    lines = [title, "-" * len(title)]
    header = f"{'rater':>8} {'rater mean(std)':>20} {'model mean(std)':>20} {'n':>5} {'p':>8}"
    lines.append(header)
    for row in rows:
        lines.append(
            f"{row['rater_id']:>8} "
            f"{row['rater_mean']:.3f}({row['rater_std']:.3f}){'':>6} "
            f"{row['model_mean']:.3f}({row['model_std']:.3f}){'':>6} "
            f"{row['case_count']:>5d} {row['p_value']:>8.4f}"
        )
    lines.append("")
    return lines


def render_text_report(report: dict) -> str:
    """Human-readable rendering of the report document."""
    lines: list[str] = []
    lines.append(f"cases: {report['case_count']}  raters: {report['rater_count']}")
    lines.append("")
    lines += _format_comparison_table(
        "Segmentation (DSC vs panel)", report["segmentation"]
    )
    lines += _format_comparison_table(
        "Lesion share (absolute error vs panel mean)", report["lesion_share"]
    )
    lines += _format_comparison_table(
        "CT class vs panel consensus (agreement)", report["ct_class_panel"]
    )

    if "thresholds" in report:
        lines.append("Fitted class thresholds (t2/t3/t4)")
        lines.append("----------------------------------")
        for row in report["thresholds"]:
            f1, f2, full = row["fold1"], row["fold2"], row["full"]
            lines.append(
                f"{row['rater_id']:>8}  "
                f"fold1 {f1[0]:.3f}/{f1[1]:.3f}/{f1[2]:.3f}  "
                f"fold2 {f2[0]:.3f}/{f2[1]:.3f}/{f2[2]:.3f}  "
                f"full {full[0]:.3f}/{full[1]:.3f}/{full[2]:.3f}  "
                f"acc {row['cross_fold_accuracy']:.3f}"
            )
        lines.append("")
    if "ct_accuracy" in report:
        lines.append("CT classification accuracy vs hospital labels")
        lines.append("----------------------------------------------")
        for row in report["ct_accuracy"]:
            c = row["combined"]
            lines.append(
                f"{row['rater_id']:>8}  rater {c['rater']:.3f}  model {c['model']:.3f}  "
                f"n {c['cases']}  p {row['p_value']:.4f}"
            )
        lines.append("")
    if "thresholds_error" in report:
        lines.append(f"thresholds: skipped ({report['thresholds_error']})")
        lines.append("")

    lines.append("Dynamics (model total share)")
    lines.append("----------------------------")
    if report["dynamics"]:
        for row in report["dynamics"]:
            lines.append(
                f"{row['patient_id']:>6}  {row['share_before']:.3f} -> "
                f"{row['share_after']:.3f}  {row['dynamics']}"
            )
    else:
        lines.append("(no follow-up pairs)")
    lines.append("")
    return "\n".join(lines)
