"""Command-line surface: segment, evaluate, dynamics, fit-thresholds, phantom.

Every command is deterministic given its inputs and seed. Exit codes: 0
success, 2 validation error, 3 I/O failure, 4 internal error. On failure a
single machine-parsable line ``error: <Category>: <message>`` goes to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .clinical import ct_class, dynamics, lesion_share, stratified_two_fold_split
from .errors import CtFusionError, IoFailure
from .evaluation import fit_panel_bias_thresholds
from .fusion import FusionConfig, fuse_families, group_by_family, load_fusion_config
from .models import ModelFamily, RegionGrowConfig, load_predictions, reference_region_grow
from .overlay import write_overlay_image
from .preprocess import to_hounsfield
from .sidecar import read_raw_volume, write_raw_volume
from .study import build_study_report, load_study, render_text_report, report_to_json
from .synth import PhantomSpec, emit_study, make_phantom, simulate_model
from .volumes import BinaryMask, CtVolume, UnitState

DEFAULT_WINDOW = (-1000.0, 400.0)


def _parse_window(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise CtFusionError(f"window must be 'low,high', got {text!r}")
    low, high = (float(p) for p in parts)
    if not low < high:
        raise CtFusionError(f"window low {low} must be below high {high}")
    return low, high


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise CtFusionError(f"dims must be 'nx,ny,nz', got {text!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill unset flags from a key=value config file; explicit flags win."""
    if not getattr(args, "config", None):
        return
    path = Path(args.config)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CtFusionError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CtFusionError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise CtFusionError(f"{path}:{lineno}: unknown option {key!r}")
        if getattr(args, attr) is None:
            setattr(args, attr, value)


def _load_input_volume(input_path: str, series_filter: str | None) -> CtVolume:
    path = Path(input_path)
    if path.is_dir():
        from .dicom import parse_dicom_series

        volume = parse_dicom_series(path, series_filter=series_filter)
        return to_hounsfield(volume)
    volume = read_raw_volume(path)
    if not isinstance(volume, CtVolume):
        raise CtFusionError(f"{input_path}: input sidecar must be a ct volume")
    if volume.unit_state is UnitState.RAW_STORED:
        return to_hounsfield(volume)
    return volume


def _split_lungs(predictions) -> tuple[BinaryMask, BinaryMask, list]:
    """Pull the left/right lung masks out of the prediction list."""
    left = right = None
    rest = []
    for p in predictions:
        if p.family is ModelFamily.LUNG:
            name = p.model_id.lower()
            if name.startswith("left"):
                left = BinaryMask(p.prob.dims, p.prob.probs > 0.5)
            elif name.startswith("right"):
                right = BinaryMask(p.prob.dims, p.prob.probs > 0.5)
            else:
                raise CtFusionError(
                    f"lung entry {p.model_id!r} must be named left*/right*"
                )
        else:
            rest.append(p)
    if left is None or right is None:
        raise CtFusionError("manifest needs lung entries named left* and right*")
    return left, right, rest


def cmd_segment(args: argparse.Namespace) -> int:
    seed = int(args.seed) if args.seed is not None else 0
    window = _parse_window(args.window) if args.window else DEFAULT_WINDOW
    series_filter = args.series_filter if args.series_filter else "lung"

    volume = _load_input_volume(args.input, series_filter)
    predictions = load_predictions(args.models)
    if predictions and tuple(predictions[0].prob.dims) != tuple(volume.dims):
        raise CtFusionError(
            f"prediction dims {predictions[0].prob.dims} != volume dims {volume.dims}"
        )
    left, right, lesion_preds = _split_lungs(predictions)

    fusion_cfg = (
        load_fusion_config(args.fusion_config) if args.fusion_config else FusionConfig()
    )
    by_family = group_by_family(lesion_preds)
    if args.reference:
        lungs_union = BinaryMask(volume.dims, left.bits | right.bits)
        by_family.setdefault(ModelFamily.REFERENCE, []).append(
            reference_region_grow(volume, lungs_union, RegionGrowConfig())
        )
    lesion = fuse_families(by_family, fusion_cfg)

    report = lesion_share(lesion, left, right, volume.spacing)
    severity = ct_class(max(report.left_share, report.right_share))

    out_dir = Path(args.out)
    overlays = out_dir / "overlays"
    try:
        overlays.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc

    write_raw_volume(lesion, out_dir / "lesion_mask.hdr")
    for k in range(volume.dims[2]):
        write_overlay_image(
            volume, lesion, k, window, overlays / f"slice_{k:04d}.png"
        )

    document = {
        "input": str(args.input),
        "dims": list(volume.dims),
        "spacing": list(volume.spacing),
        "seed": seed,
        "window": list(window),
        "model_count": len(predictions),
        "families": {
            family.value: len(members) for family, members in sorted(
                by_family.items(), key=lambda kv: kv[0].value
            )
        },
        "lesion_share": report.to_dict(),
        "ct_class": severity.name,
    }
    (out_dir / "report.json").write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {out_dir / 'report.json'}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    seed = int(args.seed) if args.seed is not None else 0
    quorum = int(args.quorum) if args.quorum is not None else None
    band = float(args.stability_band) if args.stability_band is not None else 0.01
    resamples = int(args.resamples) if args.resamples is not None else 10000

    cases = load_study(args.input)
    report = build_study_report(
        cases,
        quorum=quorum,
        stability_band=band,
        resamples=resamples,
        rng_seed=seed,
    )
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc
    (out_dir / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(render_text_report(report), encoding="utf-8")
    print(f"wrote {out_dir / 'report.json'}")
    return 0


def cmd_dynamics(args: argparse.Namespace) -> int:
    band = float(args.stability_band) if args.stability_band is not None else 0.01
    shares = []
    for path in (args.before, args.after):
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
            shares.append(float(document["lesion_share"]["total_share"]))
        except OSError as exc:
            raise IoFailure(f"cannot read report {path}: {exc}") from exc
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise CtFusionError(f"{path}: not a segment report: {exc}") from exc
    label = dynamics(shares[0], shares[1], band)
    print(
        json.dumps(
            {
                "dynamics": label.value,
                "share_before": shares[0],
                "share_after": shares[1],
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_fit_thresholds(args: argparse.Namespace) -> int:
    seed = int(args.seed) if args.seed is not None else 0
    cases = load_study(args.input)
    if any(c.hospital_class is None for c in cases):
        raise CtFusionError("every case needs a hospital_class label")
    split = stratified_two_fold_split(
        [c.case_id for c in cases], [c.hospital_class for c in cases], rng_seed=seed
    )
    rows = [r.to_dict() for r in fit_panel_bias_thresholds(cases, split)]
    text = json.dumps(
        {"split": {"fold1": sorted(split[0]), "fold2": sorted(split[1])}, "rows": rows},
        indent=2,
        sort_keys=True,
    ) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_phantom(args: argparse.Namespace) -> int:
    seed = int(args.seed) if args.seed is not None else 0
    dims = _parse_dims(args.dims) if args.dims else (64, 64, 64)
    fraction = float(args.lesion_fraction) if args.lesion_fraction is not None else 0.5

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {out_dir}: {exc}") from exc

    if args.study:
        parts = args.study.split(",")
        if len(parts) != 2:
            raise CtFusionError(f"--study must be 'ncases,nraters', got {args.study!r}")
        study_path = emit_study(
            out_dir, n_cases=int(parts[0]), n_raters=int(parts[1]),
            dims=(24, 24, 12), rng_seed=seed,
        )
        print(f"wrote {study_path}")
        return 0

    phantom = make_phantom(
        PhantomSpec.standard(dims=dims, lesion_radius_fraction=fraction, rng_seed=seed)
    )
    write_raw_volume(phantom.volume, out_dir / "ct.hdr")
    write_raw_volume(phantom.left_lung, out_dir / "left_lung.hdr")
    write_raw_volume(phantom.right_lung, out_dir / "right_lung.hdr")
    write_raw_volume(phantom.lesion, out_dir / "lesion_truth.hdr")

    manifest_lines = [
        "left_lung\tlung\tleft_lung.hdr",
        "right_lung\tlung\tright_lung.hdr",
    ]
    if args.with_models:
        for offset, (family, count) in enumerate(
            (("resnet", 6), ("dpn", 6), ("fpn", 6))
        ):
            for i in range(count):
                model_id = f"{family}_{i}"
                prob = simulate_model(
                    phantom.lesion,
                    sharpness=8.0,
                    error_rate=0.01,
                    rng_seed=seed + 100 * offset + i,
                )
                write_raw_volume(prob, out_dir / f"{model_id}.hdr")
                manifest_lines.append(f"{model_id}\t{family}\t{model_id}.hdr")
    (out_dir / "models.manifest").write_text(
        "\n".join(manifest_lines) + "\n", encoding="utf-8"
    )

    truth = {
        "dims": list(dims),
        "left_share": phantom.left_share,
        "right_share": phantom.right_share,
        "total_share": phantom.total_share,
        "seed": seed,
    }
    (out_dir / "truth.json").write_text(
        json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {out_dir / 'truth.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctfusion",
        description="CT ensemble fusion and clinical scoring pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="run the full segmentation pipeline")
    seg.add_argument("--input", required=True, help="DICOM directory or ct sidecar header")
    seg.add_argument("--models", required=True, help="model manifest path")
    seg.add_argument("--fusion-config", help="fusion threshold config (key=value)")
    seg.add_argument("--out", required=True, help="output directory")
    seg.add_argument("--seed", help="run seed recorded in the report")
    seg.add_argument("--window", help="overlay window 'low,high' in HU")
    seg.add_argument("--series-filter", help="series description filter (default: lung)")
    seg.add_argument(
        "--reference", action="store_true",
        help="add the built-in region-grow reference model",
    )
    seg.add_argument("--config", help="key=value file with flag defaults (flags win)")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="run the multi-rater study report")
    ev.add_argument("--input", required=True, help="study definition JSON")
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--seed", help="seed for splits and permutation tests")
    ev.add_argument("--quorum", help="panel quorum (default: majority)")
    ev.add_argument("--stability-band", help="dynamics stability band (default 0.01)")
    ev.add_argument("--resamples", help="permutation resamples (default 10000)")
    ev.add_argument("--config", help="key=value file with flag defaults (flags win)")
    ev.set_defaults(func=cmd_evaluate)

    dyn = sub.add_parser("dynamics", help="classify a follow-up pair of segment reports")
    dyn.add_argument("before", help="segment report.json of the earlier scan")
    dyn.add_argument("after", help="segment report.json of the later scan")
    dyn.add_argument("--stability-band", help="stability band (default 0.01)")
    dyn.add_argument("--config", help="key=value file with flag defaults (flags win)")
    dyn.set_defaults(func=cmd_dynamics)

    fit = sub.add_parser("fit-thresholds", help="fit CT-class thresholds from a study")
    fit.add_argument("--input", required=True, help="study definition JSON")
    fit.add_argument("--out", help="output JSON path (default: stdout)")
    fit.add_argument("--seed", help="fold split seed")
    fit.add_argument("--config", help="key=value file with flag defaults (flags win)")
    fit.set_defaults(func=cmd_fit_thresholds)

    ph = sub.add_parser("phantom", help="generate synthetic phantoms and studies")
    ph.add_argument("--out", required=True, help="output directory")
    ph.add_argument("--dims", help="phantom dims 'nx,ny,nz' (default 64,64,64)")
    ph.add_argument("--seed", help="generator seed")
    ph.add_argument("--lesion-fraction", help="lesion radius fraction (default 0.5)")
    ph.add_argument(
        "--with-models", action="store_true",
        help="also simulate 6+6+6 model probability sidecars",
    )
    ph.add_argument("--study", help="emit a study tree instead: 'ncases,nraters'")
    ph.add_argument("--config", help="key=value file with flag defaults (flags win)")
    ph.set_defaults(func=cmd_phantom)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return args.func(args)
    except IoFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except CtFusionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IoFailure: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - internal invariant breach
        print(f"error: Internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
