"""Minimal DICOM reader for uncompressed CT series.

Supports exactly one encoding: Explicit VR Little Endian, single-frame,
monochrome, 16 bits allocated. Anything else (implicit VR, big endian, any
compressed transfer syntax, undefined-length elements) is rejected with a
typed error. The parser walks data elements strictly by their declared
lengths and never reads past the end of the buffer, so truncated input
always fails with :class:`DicomParseError` rather than an out-of-bounds
access.

Element layout (Explicit VR Little Endian)::

    group(u16) element(u16) VR(2 ascii) length(u16) value[length]
    group(u16) element(u16) VR(2 ascii) 0000 length(u32) value[length]   # OB,OW,...

Tags consumed: Rows, Columns, BitsAllocated, PixelRepresentation,
RescaleIntercept, RescaleSlope, SliceThickness, ImagePositionPatient,
InstanceNumber, SeriesDescription, PixelData. All other elements are skipped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DicomParseError,
    DuplicateSlicePosition,
    InconsistentSliceGeometry,
    MissingPixelData,
    UnsupportedTransferSyntax,
)
from .volumes import CtVolume, UnitState

PREAMBLE_LEN = 128
MAGIC = b"DICM"

EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"

# VRs that use the 4-byte length form (2 reserved bytes + u32 length).
_LONG_VRS = {b"OB", b"OW", b"OF", b"OD", b"OL", b"OV", b"SQ", b"UC", b"UR", b"UT", b"UN"}

TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_SERIES_DESCRIPTION = (0x0008, 0x103E)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLUMNS = (0x0028, 0x0011)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_WANTED = {
    TAG_TRANSFER_SYNTAX,
    TAG_SERIES_DESCRIPTION,
    TAG_SLICE_THICKNESS,
    TAG_INSTANCE_NUMBER,
    TAG_IMAGE_POSITION,
    TAG_ROWS,
    TAG_COLUMNS,
    TAG_BITS_ALLOCATED,
    TAG_PIXEL_REPRESENTATION,
    TAG_RESCALE_INTERCEPT,
    TAG_RESCALE_SLOPE,
    TAG_PIXEL_DATA,
}


@dataclass
class DicomSlice:
    """One parsed single-frame slice."""

    rows: int
    cols: int
    pixels: np.ndarray  # int16, shape (rows, cols)
    rescale_slope: float
    rescale_intercept: float
    slice_thickness: float | None
    position_z: float | None
    instance_number: int | None
    series_description: str


def _decode_us(value: bytes, tag: tuple[int, int]) -> int:
    if len(value) != 2:
        raise DicomParseError(f"US element {tag} has length {len(value)}, expected 2")
    return struct.unpack("<H", value)[0]


def _decode_ds(value: bytes, tag: tuple[int, int]) -> list[float]:
    text = value.decode("ascii", errors="strict") if value else ""
    parts = [p.strip() for p in text.split("\\")]
    try:
        return [float(p) for p in parts if p]
    except ValueError as exc:
        raise DicomParseError(f"bad decimal string in {tag}: {text!r}") from exc


def _decode_is(value: bytes, tag: tuple[int, int]) -> int | None:
    text = value.decode("ascii", errors="strict").strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError as exc:
        raise DicomParseError(f"bad integer string in {tag}: {text!r}") from exc


def iter_elements(data: bytes, offset: int):
    """Yield (tag, vr, value_bytes) triples, bounds-checked at every step."""
    n = len(data)
    while offset < n:
        if offset + 8 > n:
            raise DicomParseError("truncated element header")
        group, element = struct.unpack_from("<HH", data, offset)
        vr = data[offset + 4 : offset + 6]
        offset += 6
        if not (vr.isalpha() and vr.isupper()):
            raise DicomParseError(
                f"invalid VR {vr!r} at tag ({group:04X},{element:04X}); "
                "only Explicit VR Little Endian is supported"
            )
        if vr in _LONG_VRS:
            if offset + 6 > n:
                raise DicomParseError("truncated long-form length")
            length = struct.unpack_from("<I", data, offset + 2)[0]
            offset += 6
        else:
            if offset + 2 > n:
                raise DicomParseError("truncated short-form length")
            length = struct.unpack_from("<H", data, offset)[0]
            offset += 2
        if length == 0xFFFFFFFF:
            raise DicomParseError(
                f"undefined-length element ({group:04X},{element:04X}) unsupported"
            )
        if offset + length > n:
            raise DicomParseError(
                f"element ({group:04X},{element:04X}) overruns file "
                f"(need {length} bytes, have {n - offset})"
            )
        yield (group, element), vr, data[offset : offset + length]
        offset += length


def _check_transfer_syntax(found: dict[tuple[int, int], bytes]) -> None:
    ts_raw = found.get(TAG_TRANSFER_SYNTAX)
    if ts_raw is None:
        raise DicomParseError("transfer syntax UID missing")
    transfer_syntax = ts_raw.decode("ascii", errors="strict").rstrip("\x00 ")
    if transfer_syntax != EXPLICIT_VR_LITTLE_ENDIAN:
        raise UnsupportedTransferSyntax(transfer_syntax)


def parse_dicom_bytes(data: bytes) -> DicomSlice:
    """Parse one slice from an in-memory DICOM file."""
    if len(data) < PREAMBLE_LEN + 4:
        raise DicomParseError("file shorter than preamble")
    if data[PREAMBLE_LEN : PREAMBLE_LEN + 4] != MAGIC:
        raise DicomParseError("missing DICM magic")

    # Verify the declared transfer syntax the moment the file-meta group
    # (0002,xxxx) ends, before touching any dataset element: implicit-VR or
    # big-endian datasets must fail on their declared UID, not on garbage VRs.
    found: dict[tuple[int, int], bytes] = {}
    in_meta = True
    for tag, _vr, value in iter_elements(data, PREAMBLE_LEN + 4):
        if in_meta and tag[0] != 0x0002:
            _check_transfer_syntax(found)
            in_meta = False
        if tag in _WANTED:
            if tag in found:
                raise DicomParseError(f"duplicate element {tag}")
            found[tag] = value
    if in_meta:
        _check_transfer_syntax(found)

    if TAG_ROWS not in found or TAG_COLUMNS not in found:
        raise DicomParseError("rows/columns missing")
    rows = _decode_us(found[TAG_ROWS], TAG_ROWS)
    cols = _decode_us(found[TAG_COLUMNS], TAG_COLUMNS)
    if rows == 0 or cols == 0:
        raise DicomParseError("zero rows or columns")

    bits = _decode_us(found.get(TAG_BITS_ALLOCATED, b"\x10\x00"), TAG_BITS_ALLOCATED)
    if bits != 16:
        raise DicomParseError(f"bits allocated {bits} unsupported (need 16)")
    pixel_rep = _decode_us(
        found.get(TAG_PIXEL_REPRESENTATION, b"\x01\x00"), TAG_PIXEL_REPRESENTATION
    )
    if pixel_rep not in (0, 1):
        raise DicomParseError(f"pixel representation {pixel_rep} unsupported")

    if TAG_PIXEL_DATA not in found:
        raise MissingPixelData("no pixel data element")
    raw_pixels = found[TAG_PIXEL_DATA]
    expected = rows * cols * 2
    if len(raw_pixels) != expected:
        raise DicomParseError(
            f"pixel data has {len(raw_pixels)} bytes, expected {expected}"
        )
    if pixel_rep == 1:
        pixels = np.frombuffer(raw_pixels, dtype="<i2").astype(np.int16)
    else:
        upix = np.frombuffer(raw_pixels, dtype="<u2")
        if upix.size and int(upix.max()) > np.iinfo(np.int16).max:
            raise DicomParseError("unsigned pixel values exceed signed 16-bit range")
        pixels = upix.astype(np.int16)
    pixels = pixels.reshape(rows, cols)

    slope_vals = _decode_ds(found.get(TAG_RESCALE_SLOPE, b""), TAG_RESCALE_SLOPE)
    intercept_vals = _decode_ds(
        found.get(TAG_RESCALE_INTERCEPT, b""), TAG_RESCALE_INTERCEPT
    )
    thickness_vals = _decode_ds(found.get(TAG_SLICE_THICKNESS, b""), TAG_SLICE_THICKNESS)

    position_z = None
    if TAG_IMAGE_POSITION in found:
        pos = _decode_ds(found[TAG_IMAGE_POSITION], TAG_IMAGE_POSITION)
        if len(pos) != 3:
            raise DicomParseError(f"image position has {len(pos)} components, expected 3")
        position_z = pos[2]

    instance_number = None
    if TAG_INSTANCE_NUMBER in found:
        instance_number = _decode_is(found[TAG_INSTANCE_NUMBER], TAG_INSTANCE_NUMBER)

    description = ""
    if TAG_SERIES_DESCRIPTION in found:
        description = (
            found[TAG_SERIES_DESCRIPTION].decode("ascii", errors="strict").strip()
        )

    return DicomSlice(
        rows=rows,
        cols=cols,
        pixels=pixels,
        rescale_slope=slope_vals[0] if slope_vals else 1.0,
        rescale_intercept=intercept_vals[0] if intercept_vals else 0.0,
        slice_thickness=thickness_vals[0] if thickness_vals else None,
        position_z=position_z,
        instance_number=instance_number,
        series_description=description,
    )


def series_matches(description: str, pattern: str) -> bool:
    """Case-insensitive substring test used to select series like 'Lung'."""
    return pattern.lower() in description.lower()


def parse_dicom_series(directory, series_filter: str | None = None) -> CtVolume:
    """Assemble the slices found in ``directory`` into a raw-stored CtVolume.

    Slices are sorted ascending by the z component of ImagePositionPatient,
    falling back to InstanceNumber when any slice lacks a position. When
    ``series_filter`` is given, slices whose SeriesDescription does not
    contain it (case-insensitive) are dropped before assembly.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DicomParseError(f"not a directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file())
    if not files:
        raise DicomParseError(f"no files in {directory}")

    slices = []
    for path in files:
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise DicomParseError(f"cannot read {path}: {exc}") from exc
        slices.append(parse_dicom_bytes(data))

    if series_filter is not None:
        slices = [s for s in slices if series_matches(s.series_description, series_filter)]
        if not slices:
            raise DicomParseError(
                f"no slices match series filter {series_filter!r}"
            )

    first = slices[0]
    for s in slices[1:]:
        if (s.rows, s.cols) != (first.rows, first.cols):
            raise InconsistentSliceGeometry(
                f"mixed geometry: {(first.rows, first.cols)} vs {(s.rows, s.cols)}"
            )
        if (s.rescale_slope, s.rescale_intercept) != (
            first.rescale_slope,
            first.rescale_intercept,
        ):
            raise DicomParseError("slices disagree on rescale slope/intercept")

    if all(s.position_z is not None for s in slices):
        keys = [s.position_z for s in slices]
    elif all(s.instance_number is not None for s in slices):
        keys = [float(s.instance_number) for s in slices]
    else:
        raise DicomParseError("no consistent slice ordering key (position or instance)")
    if len(set(keys)) != len(keys):
        raise DuplicateSlicePosition(f"duplicate ordering keys in {directory}")

    order = sorted(range(len(slices)), key=lambda i: keys[i])
    slices = [slices[i] for i in order]
    sorted_keys = [keys[i] for i in order]

    if first.slice_thickness is not None:
        sz = float(first.slice_thickness)
    elif len(sorted_keys) >= 2:
        sz = float(sorted_keys[1] - sorted_keys[0])
    else:
        sz = 1.0
    if sz <= 0:
        raise DicomParseError(f"non-positive slice spacing {sz}")

    stack = np.stack([s.pixels for s in slices])  # (nz, rows, cols)
    voxels = np.ascontiguousarray(stack.transpose(2, 1, 0))  # (nx, ny, nz)
    nx, ny, nz = voxels.shape
    return CtVolume(
        dims=(nx, ny, nz),
        spacing=(1.0, 1.0, sz),
        voxels=voxels,
        rescale_slope=first.rescale_slope,
        rescale_intercept=first.rescale_intercept,
        unit_state=UnitState.RAW_STORED,
        series_description=first.series_description,
    )
