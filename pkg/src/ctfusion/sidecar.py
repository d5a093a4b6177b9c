"""Raw+header sidecar format for volumes, masks, and probability maps.

A sidecar is a text header plus a raw little-endian payload file next to it.
Header lines are ``key=value``::

    kind=ct|prob|mask
    dims=nx ny nz
    spacing=sx sy sz
    element=i16le|f32le|u8
    data=<relative payload filename>

CT headers may additionally carry ``slope=``, ``intercept=`` and ``series=``
(optional; defaults 1.0, 0.0, empty). Payload voxel order is x fastest, z
slowest: voxel (i,j,k) sits at offset ((k*ny + j)*nx + i) * element_size.

Element types map onto carriers: ``ct``+``i16le`` is a raw-stored volume,
``ct``+``f32le`` a Hounsfield volume, ``prob`` is always ``f32le``, ``mask``
always ``u8`` with bytes in {0,1}. Round-trips are bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import (
    HeaderParseError,
    IoFailure,
    MaskValueError,
    PayloadLengthMismatch,
    ProbabilityOutOfRange,
    WrongUnitState,
)
from .volumes import BinaryMask, CtVolume, ProbabilityVolume, UnitState

_KNOWN_KEYS = {"kind", "dims", "spacing", "element", "data", "slope", "intercept", "series"}
_REQUIRED_KEYS = {"kind", "dims", "spacing", "element", "data"}
_ELEMENT_SIZE = {"i16le": 2, "f32le": 4, "u8": 1}
_KIND_ELEMENTS = {"ct": {"i16le", "f32le"}, "prob": {"f32le"}, "mask": {"u8"}}

Volume = CtVolume | ProbabilityVolume | BinaryMask


def _parse_header(path: Path) -> dict[str, str]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise HeaderParseError(f"cannot read header {path}: {exc}") from exc
    fields: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise HeaderParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise HeaderParseError(f"{path}:{lineno}: unknown key {key!r}")
        if key in fields:
            raise HeaderParseError(f"{path}:{lineno}: duplicate key {key!r}")
        fields[key] = value.strip() if key != "series" else value
    missing = _REQUIRED_KEYS - fields.keys()
    if missing:
        raise HeaderParseError(f"{path}: missing keys {sorted(missing)}")
    return fields


def _parse_triple(raw: str, caster, what: str, path: Path):
    parts = raw.split()
    if len(parts) != 3:
        raise HeaderParseError(f"{path}: {what} needs 3 values, got {raw!r}")
    try:
        values = tuple(caster(p) for p in parts)
    except ValueError as exc:
        raise HeaderParseError(f"{path}: bad {what} {raw!r}") from exc
    if any(v <= 0 for v in values):
        raise HeaderParseError(f"{path}: non-positive {what} {raw!r}")
    return values


def read_raw_volume(header_path) -> Volume:
    """Load the volume described by a sidecar header."""
    header_path = Path(header_path)
    fields = _parse_header(header_path)

    kind = fields["kind"]
    if kind not in _KIND_ELEMENTS:
        raise HeaderParseError(f"{header_path}: unknown kind {kind!r}")
    element = fields["element"]
    if element not in _ELEMENT_SIZE:
        raise HeaderParseError(f"{header_path}: unknown element {element!r}")
    if element not in _KIND_ELEMENTS[kind]:
        raise HeaderParseError(
            f"{header_path}: element {element!r} not valid for kind {kind!r}"
        )
    if kind != "ct" and ("slope" in fields or "intercept" in fields or "series" in fields):
        raise HeaderParseError(f"{header_path}: slope/intercept/series only valid for ct")

    dims = _parse_triple(fields["dims"], int, "dims", header_path)
    spacing = _parse_triple(fields["spacing"], float, "spacing", header_path)

    data_name = fields["data"]
    if not data_name or Path(data_name).is_absolute():
        raise HeaderParseError(f"{header_path}: data must be a relative filename")
    payload_path = header_path.parent / data_name
    try:
        payload = payload_path.read_bytes()
    except OSError as exc:
        raise HeaderParseError(f"cannot read payload {payload_path}: {exc}") from exc

    n = dims[0] * dims[1] * dims[2]
    expected = n * _ELEMENT_SIZE[element]
    if len(payload) != expected:
        raise PayloadLengthMismatch(
            f"{payload_path}: {len(payload)} bytes, expected {expected}"
        )

    dtype = {"i16le": "<i2", "f32le": "<f4", "u8": "u1"}[element]
    flat = np.frombuffer(payload, dtype=dtype)
    array = np.ascontiguousarray(flat.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0))

    if kind == "mask":
        bad = (array > 1).any()
        if bad:
            raise MaskValueError(f"{payload_path}: mask bytes outside {{0,1}}")
        return BinaryMask(dims=dims, bits=array.astype(np.bool_))
    if kind == "prob":
        if array.size and (float(array.min()) < 0.0 or float(array.max()) > 1.0):
            raise ProbabilityOutOfRange(
                f"{payload_path}: probabilities outside [0,1]"
            )
        return ProbabilityVolume(dims=dims, probs=array)

    try:
        slope = float(fields.get("slope", "1.0"))
        intercept = float(fields.get("intercept", "0.0"))
    except ValueError as exc:
        raise HeaderParseError(f"{header_path}: bad slope/intercept") from exc
    state = UnitState.RAW_STORED if element == "i16le" else UnitState.HOUNSFIELD
    return CtVolume(
        dims=dims,
        spacing=spacing,
        voxels=array,
        rescale_slope=slope,
        rescale_intercept=intercept,
        unit_state=state,
        series_description=fields.get("series", ""),
    )


def write_raw_volume(volume: Volume, header_path) -> None:
    """Write ``volume`` as a sidecar header plus raw payload.

    The payload file is named after the header with a ``.raw`` suffix and
    referenced relatively, so the pair can be moved together.
    """
    header_path = Path(header_path)
    payload_path = header_path.with_suffix(".raw")

    if isinstance(volume, BinaryMask):
        kind, element = "mask", "u8"
        array = volume.bits.astype(np.uint8)
        spacing = (1.0, 1.0, 1.0)
        extra: list[str] = []
    elif isinstance(volume, ProbabilityVolume):
        kind, element = "prob", "f32le"
        array = volume.probs.astype("<f4")
        spacing = (1.0, 1.0, 1.0)
        extra = []
    elif isinstance(volume, CtVolume):
        kind = "ct"
        if volume.unit_state is UnitState.RAW_STORED:
            element = "i16le"
            array = volume.voxels.astype("<i2")
        elif volume.unit_state is UnitState.HOUNSFIELD:
            element = "f32le"
            array = volume.voxels.astype("<f4")
        else:
            raise WrongUnitState("normalized volumes are not serializable")
        spacing = volume.spacing
        extra = [f"slope={volume.rescale_slope!r}", f"intercept={volume.rescale_intercept!r}"]
        if volume.series_description:
            extra.append(f"series={volume.series_description}")
    else:
        raise TypeError(f"unsupported volume type {type(volume)!r}")

    nx, ny, nz = volume.dims
    lines = [
        f"kind={kind}",
        f"dims={nx} {ny} {nz}",
        f"spacing={spacing[0]!r} {spacing[1]!r} {spacing[2]!r}",
        f"element={element}",
        f"data={payload_path.name}",
        *extra,
    ]
    payload = np.ascontiguousarray(array.transpose(2, 1, 0)).tobytes()
    try:
        header_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        payload_path.write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {header_path}: {exc}") from exc
