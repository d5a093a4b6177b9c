"""Deterministic synthetic data for tests and demos.

Phantoms are voxelized ellipsoids (a voxel is inside iff its center is), so
every reported share is an exact integer ratio. All randomness comes from
numpy's seeded PCG64 generator; the same spec and seed reproduce the same
bytes on every run.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .clinical import ct_class, quantize_share
from .errors import SpecInvalid
from .sidecar import write_raw_volume
from .volumes import BinaryMask, CtVolume, Dims, ProbabilityVolume, Spacing, UnitState


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]  # voxel coordinates
    radii: tuple[float, float, float]   # voxel units


@dataclass(frozen=True)
class LesionSpec:
    ellipsoid: Ellipsoid
    lung: str  # "left" or "right"


@dataclass(frozen=True)
class PhantomSpec:
    dims: Dims
    spacing: Spacing
    left_lung: Ellipsoid
    right_lung: Ellipsoid
    lesions: tuple[LesionSpec, ...]
    background_hu: float = 20.0
    lung_hu: float = -800.0
    lesion_hu: float = -450.0
    rng_seed: int = 0

    @classmethod
    def standard(
        cls,
        dims: Dims = (64, 64, 64),
        spacing: Spacing = (1.0, 1.0, 1.0),
        lesion_radius_fraction: float = 0.5,
        rng_seed: int = 0,
    ) -> "PhantomSpec":
        """Two-lung layout with one lesion centered in the left lung."""
        nx, ny, nz = dims
        lung_radii = (0.17 * nx, 0.30 * ny, 0.36 * nz)
        left = Ellipsoid((0.28 * nx, 0.5 * ny, 0.5 * nz), lung_radii)
        right = Ellipsoid((0.72 * nx, 0.5 * ny, 0.5 * nz), lung_radii)
        lesion = Ellipsoid(
            left.center, tuple(lesion_radius_fraction * r for r in lung_radii)
        )
        return cls(
            dims=dims,
            spacing=spacing,
            left_lung=left,
            right_lung=right,
            lesions=(LesionSpec(lesion, "left"),),
            rng_seed=rng_seed,
        )


@dataclass(frozen=True)
class Phantom:
    volume: CtVolume
    left_lung: BinaryMask
    right_lung: BinaryMask
    lesion: BinaryMask
    left_share: float
    right_share: float
    total_share: float


def ellipsoid_mask(dims: Dims, ellipsoid: Ellipsoid) -> np.ndarray:
    """Voxel centers strictly inside or on the ellipsoid surface."""
    if any(r < 0 for r in ellipsoid.radii):
        raise SpecInvalid(f"negative radius in {ellipsoid}")
    if any(r == 0 for r in ellipsoid.radii):
        return np.zeros(dims, dtype=bool)
    nx, ny, nz = dims
    cx, cy, cz = ellipsoid.center
    rx, ry, rz = ellipsoid.radii
    ix = ((np.arange(nx) - cx) / rx) ** 2
    iy = ((np.arange(ny) - cy) / ry) ** 2
    iz = ((np.arange(nz) - cz) / rz) ** 2
    return (ix[:, None, None] + iy[None, :, None] + iz[None, None, :]) <= 1.0


def make_phantom(spec: PhantomSpec) -> Phantom:
    """Voxelize the spec into an HU volume, lung masks, and a lesion mask."""
    left = ellipsoid_mask(spec.dims, spec.left_lung)
    right = ellipsoid_mask(spec.dims, spec.right_lung)
    if (left & right).any():
        raise SpecInvalid("lung ellipsoids overlap")

    lesion = np.zeros(spec.dims, dtype=bool)
    for item in spec.lesions:
        if item.lung not in ("left", "right"):
            raise SpecInvalid(f"lesion lung must be left/right, got {item.lung!r}")
        piece = ellipsoid_mask(spec.dims, item.ellipsoid)
        host = left if item.lung == "left" else right
        if (piece & ~host).any():
            raise SpecInvalid("lesion ellipsoid leaves its host lung")
        lesion |= piece

    hu = np.full(spec.dims, spec.background_hu, dtype=np.float32)
    hu[left | right] = spec.lung_hu
    hu[lesion] = spec.lesion_hu

    n_left = int(left.sum())
    n_right = int(right.sum())
    if n_left + n_right == 0:
        raise SpecInvalid("lungs voxelize to nothing at these dims")
    les_left = int((lesion & left).sum())
    les_right = int((lesion & right).sum())

    volume = CtVolume(
        dims=spec.dims,
        spacing=spec.spacing,
        voxels=hu,
        rescale_slope=1.0,
        rescale_intercept=0.0,
        unit_state=UnitState.HOUNSFIELD,
        series_description="Lung phantom",
    )
    return Phantom(
        volume=volume,
        left_lung=BinaryMask(spec.dims, left),
        right_lung=BinaryMask(spec.dims, right),
        lesion=BinaryMask(spec.dims, lesion),
        left_share=les_left / n_left if n_left else 0.0,
        right_share=les_right / n_right if n_right else 0.0,
        total_share=(les_left + les_right) / (n_left + n_right),
    )


def simulate_model(
    truth: BinaryMask,
    sharpness: float = 4.0,
    error_rate: float = 0.02,
    rng_seed: int = 0,
) -> ProbabilityVolume:
    """Seeded probability volume concentrated near the truth mask.

    Positive voxels get probabilities near 1, negative near 0; a fraction
    ``error_rate`` of voxels lands on the wrong side. ``sharpness`` of
    ``math.inf`` yields exactly {0, 1}.
    """
    if not sharpness > 0:
        raise ValueError("sharpness must be positive")
    rng = np.random.default_rng(rng_seed)
    flips = rng.random(truth.dims) < error_rate
    jitter = rng.random(truth.dims) / (2.0 * sharpness)
    effective = truth.bits ^ flips
    probs = np.where(effective, 1.0 - jitter, jitter).astype(np.float32)
    return ProbabilityVolume(dims=truth.dims, probs=probs)


@dataclass(frozen=True)
class RaterSpec:
    """A simulated annotator: boundary sloppiness, share bias, random flips."""

    boundary_radius: int = 0  # dilate when positive, erode when negative
    share_bias: float = 1.0
    flip_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.flip_rate < 0.5:
            raise ValueError(f"flip_rate {self.flip_rate} outside [0, 0.5)")


def simulate_rater(
    truth: BinaryMask, spec: RaterSpec, true_share: float | None = None
) -> tuple[BinaryMask, float]:
    """Morph + flip the truth mask and produce a biased 5%-quantized estimate.

    ``true_share`` defaults to the positive fraction of the truth mask.
    """
    bits = truth.bits
    if spec.boundary_radius > 0:
        bits = ndimage.binary_dilation(bits, iterations=spec.boundary_radius)
    elif spec.boundary_radius < 0:
        bits = ndimage.binary_erosion(bits, iterations=-spec.boundary_radius)
    if spec.flip_rate > 0:
        rng = np.random.default_rng(spec.rng_seed)
        bits = bits ^ (rng.random(truth.dims) < spec.flip_rate)

    if true_share is None:
        true_share = truth.positive_count / truth.bits.size
    biased = min(max(true_share * spec.share_bias, 0.0), 1.0)
    return BinaryMask(dims=truth.dims, bits=bits), quantize_share(biased)


# --- synthetic DICOM writer ---------------------------------------------------

_TRANSFER_SYNTAX = b"1.2.840.10008.1.2.1\x00"  # Explicit VR Little Endian, padded


def _pad(value: bytes, pad_byte: bytes) -> bytes:
    return value + pad_byte if len(value) % 2 else value


def _element(group: int, element: int, vr: bytes, value: bytes) -> bytes:
    head = struct.pack("<HH", group, element) + vr
    if vr in (b"OB", b"OW", b"SQ", b"UN", b"UT"):
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    return head + struct.pack("<H", len(value)) + value


def _ds(value: float) -> bytes:
    return _pad(f"{value:.10g}".encode("ascii"), b" ")


def write_dicom_slice(
    path,
    pixels: np.ndarray,
    *,
    slope: float = 1.0,
    intercept: float = 0.0,
    thickness: float = 1.0,
    position: tuple[float, float, float] | None = (0.0, 0.0, 0.0),
    instance_number: int | None = 1,
    series_description: str | None = "Lung",
    pixel_representation: int = 1,
) -> None:
    """Emit one Explicit-VR-Little-Endian single-frame CT slice.

    ``pixels`` is (rows, cols) int16. Optional tags are omitted when None.
    """
    rows, cols = pixels.shape
    body = bytearray()
    body += b"\x00" * 128 + b"DICM"
    meta = _element(0x0002, 0x0010, b"UI", _TRANSFER_SYNTAX)
    body += _element(0x0002, 0x0000, b"UL", struct.pack("<I", len(meta)))
    body += meta
    if series_description is not None:
        body += _element(
            0x0008, 0x103E, b"LO", _pad(series_description.encode("ascii"), b" ")
        )
    body += _element(0x0018, 0x0050, b"DS", _ds(thickness))
    if instance_number is not None:
        body += _element(
            0x0020, 0x0013, b"IS", _pad(str(instance_number).encode("ascii"), b" ")
        )
    if position is not None:
        pos_text = "\\".join(f"{v:.10g}" for v in position)
        body += _element(0x0020, 0x0032, b"DS", _pad(pos_text.encode("ascii"), b" "))
    body += _element(0x0028, 0x0010, b"US", struct.pack("<H", rows))
    body += _element(0x0028, 0x0011, b"US", struct.pack("<H", cols))
    body += _element(0x0028, 0x0100, b"US", struct.pack("<H", 16))
    body += _element(0x0028, 0x0103, b"US", struct.pack("<H", pixel_representation))
    body += _element(0x0028, 0x1052, b"DS", _ds(intercept))
    body += _element(0x0028, 0x1053, b"DS", _ds(slope))
    if pixel_representation == 1:
        raw = pixels.astype("<i2").tobytes()
    else:
        raw = pixels.astype("<u2").tobytes()
    body += _element(0x7FE0, 0x0010, b"OW", raw)
    Path(path).write_bytes(bytes(body))


def write_dicom_series(
    directory,
    slices: np.ndarray,
    *,
    slope: float = 1.0,
    intercept: float = 0.0,
    thickness: float = 1.0,
    series_description: str = "Lung",
    positions: list[float] | None = None,
) -> list[Path]:
    """Write a stack of (rows, cols) slices as one series, one file each."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nz = slices.shape[0]
    if positions is None:
        positions = [i * thickness for i in range(nz)]
    paths = []
    for i in range(nz):
        path = directory / f"slice_{i:04d}.dcm"
        write_dicom_slice(
            path,
            slices[i],
            slope=slope,
            intercept=intercept,
            thickness=thickness,
            position=(0.0, 0.0, positions[i]),
            instance_number=i + 1,
            series_description=series_description,
        )
        paths.append(path)
    return paths


# --- synthetic rater studies -----------------------------------------------------

def emit_study(
    out_dir,
    n_cases: int = 6,
    n_raters: int = 6,
    dims: Dims = (24, 24, 12),
    rng_seed: int = 0,
) -> Path:
    """Write a complete synthetic study tree and return the definition path.

    Each case is a phantom with a seeded lesion size; raters differ in
    boundary sloppiness and share bias. Cases are paired per patient (two
    scan dates) so the dynamics protocol has follow-up pairs to chew on.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(rng_seed)

    rater_specs = {
        f"r{j + 1}": RaterSpec(
            boundary_radius=int(rng.integers(-1, 2)),
            share_bias=float(rng.uniform(0.8, 1.25)),
            flip_rate=float(rng.uniform(0.0, 0.02)),
            rng_seed=rng_seed * 1000 + j,
        )
        for j in range(n_raters)
    }

    cases = []
    for i in range(n_cases):
        fraction = float(rng.uniform(0.25, 0.95))
        spec = PhantomSpec.standard(
            dims=dims, lesion_radius_fraction=fraction, rng_seed=rng_seed
        )
        phantom = make_phantom(spec)
        case_dir = out_dir / f"case_{i:03d}"
        case_dir.mkdir(exist_ok=True)

        write_raw_volume(phantom.volume, case_dir / "ct.hdr")
        write_raw_volume(phantom.left_lung, case_dir / "left_lung.hdr")
        write_raw_volume(phantom.right_lung, case_dir / "right_lung.hdr")
        model_mask = BinaryMask(
            dims,
            simulate_model(
                phantom.lesion, sharpness=math.inf, error_rate=0.002,
                rng_seed=rng_seed + 7 * i,
            ).probs > 0.5,
        )
        write_raw_volume(model_mask, case_dir / "model_mask.hdr")

        raters = {}
        for rid, rspec in rater_specs.items():
            mask, _ = simulate_rater(phantom.lesion, rspec)
            write_raw_volume(mask, case_dir / f"{rid}.hdr")
            left_est = quantize_share(
                min(max(phantom.left_share * rspec.share_bias, 0.0), 1.0)
            )
            right_est = quantize_share(
                min(max(phantom.right_share * rspec.share_bias, 0.0), 1.0)
            )
            raters[rid] = {
                "mask": f"case_{i:03d}/{rid}.hdr",
                "left_share": left_est,
                "right_share": right_est,
            }

        label = ct_class(max(phantom.left_share, phantom.right_share))
        cases.append(
            {
                "case_id": f"case_{i:03d}",
                "patient_id": f"p{i // 2:02d}",
                "scan_date": "2020-05-01" if i % 2 == 0 else "2020-05-15",
                "hospital_class": label.name,
                "spacing": [1.0, 1.0, 1.0],
                "volume": f"case_{i:03d}/ct.hdr",
                "left_lung": f"case_{i:03d}/left_lung.hdr",
                "right_lung": f"case_{i:03d}/right_lung.hdr",
                "model_mask": f"case_{i:03d}/model_mask.hdr",
                "raters": raters,
            }
        )

    study_path = out_dir / "study.json"
    study_path.write_text(
        json.dumps({"cases": cases}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return study_path
