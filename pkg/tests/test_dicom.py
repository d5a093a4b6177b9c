"""Parser checks against byte-level generated series.

The fixtures are written by the struct-based generator; expectations come
from the arrays and tag values we planted, not from the parser itself.
"""

import struct

import numpy as np
import pytest

from ctfusion.dicom import parse_dicom_bytes, parse_dicom_series
from ctfusion.errors import (
    CtFusionError,
    DicomParseError,
    DuplicateSlicePosition,
    InconsistentSliceGeometry,
    MissingPixelData,
    UnsupportedTransferSyntax,
)
from ctfusion.preprocess import to_hounsfield
from ctfusion.synth import write_dicom_series, write_dicom_slice
from ctfusion.volumes import UnitState


def build_file(elements, transfer_syntax="1.2.840.10008.1.2.1"):
    """Hand-rolled DICOM bytes, independent of the generator in synth."""
    out = bytearray(b"\x00" * 128 + b"DICM")
    ts = transfer_syntax.encode()
    if len(ts) % 2:
        ts += b"\x00"
    meta = struct.pack("<HH", 2, 0x10) + b"UI" + struct.pack("<H", len(ts)) + ts
    out += struct.pack("<HH", 2, 0) + b"UL" + struct.pack("<H", 4)
    out += struct.pack("<I", len(meta))
    out += meta
    for group, element, vr, value in elements:
        out += struct.pack("<HH", group, element) + vr
        if vr in (b"OB", b"OW", b"SQ", b"UN", b"UT"):
            out += b"\x00\x00" + struct.pack("<I", len(value))
        else:
            out += struct.pack("<H", len(value))
        out += value
    return bytes(out)


def minimal_slice_elements(rows=2, cols=2, pixels=None):
    if pixels is None:
        pixels = np.zeros((rows, cols), np.int16)
    return [
        (0x0020, 0x0032, b"DS", b"0\\0\\0 "),
        (0x0028, 0x0010, b"US", struct.pack("<H", rows)),
        (0x0028, 0x0011, b"US", struct.pack("<H", cols)),
        (0x0028, 0x0100, b"US", struct.pack("<H", 16)),
        (0x0028, 0x0103, b"US", struct.pack("<H", 1)),
        (0x7FE0, 0x0010, b"OW", pixels.astype("<i2").tobytes()),
    ]


def test_two_slice_series_fields(tmp_path):
    # raw values planted per slice, (rows, cols) = (y, x)
    s0 = np.array([[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]], np.int16)
    s1 = (s0 + 100).astype(np.int16)
    write_dicom_series(tmp_path, np.stack([s0, s1]), slope=1.0, intercept=-1024.0)

    vol = parse_dicom_series(tmp_path)
    assert vol.dims == (4, 4, 2)
    assert vol.rescale_slope == 1.0
    assert vol.rescale_intercept == -1024.0
    assert vol.unit_state is UnitState.RAW_STORED
    # voxel (x, y, z) equals planted [z][y][x]
    for (y, x) in [(0, 0), (0, 3), (2, 1), (3, 3)]:
        assert vol.voxels[x, y, 0] == s0[y, x]
        assert vol.voxels[x, y, 1] == s1[y, x]


def test_hu_values_match_byte_level_expectation(tmp_path):
    s0 = np.array([[0, 524], [100, -100]], np.int16)
    write_dicom_series(tmp_path, s0[None], slope=1.0, intercept=-1024.0)
    hu = to_hounsfield(parse_dicom_series(tmp_path))
    assert hu.voxels[0, 0, 0] == -1024.0
    assert hu.voxels[1, 0, 0] == -500.0
    assert hu.voxels[0, 1, 0] == -924.0
    assert hu.voxels[1, 1, 0] == -1124.0


def test_single_slice_series(tmp_path):
    write_dicom_series(tmp_path, np.zeros((1, 3, 5), np.int16))
    vol = parse_dicom_series(tmp_path)
    assert vol.dims == (5, 3, 1)


def test_inconsistent_geometry(tmp_path):
    write_dicom_slice(tmp_path / "a.dcm", np.zeros((4, 4), np.int16),
                      position=(0, 0, 0.0))
    write_dicom_slice(tmp_path / "b.dcm", np.zeros((8, 8), np.int16),
                      position=(0, 0, 1.0))
    with pytest.raises(InconsistentSliceGeometry):
        parse_dicom_series(tmp_path)


def test_order_independence(tmp_path):
    # file names reversed relative to slice positions
    s = [np.full((2, 2), k, np.int16) for k in range(3)]
    write_dicom_slice(tmp_path / "z.dcm", s[0], position=(0, 0, 0.0), instance_number=1)
    write_dicom_slice(tmp_path / "m.dcm", s[1], position=(0, 0, 1.0), instance_number=2)
    write_dicom_slice(tmp_path / "a.dcm", s[2], position=(0, 0, 2.0), instance_number=3)
    vol = parse_dicom_series(tmp_path)
    assert [int(vol.voxels[0, 0, k]) for k in range(3)] == [0, 1, 2]


def test_instance_number_fallback(tmp_path):
    s = [np.full((2, 2), k, np.int16) for k in range(3)]
    for name, k, inst in [("a", 2, 3), ("b", 0, 1), ("c", 1, 2)]:
        write_dicom_slice(tmp_path / f"{name}.dcm", s[k], position=None,
                          instance_number=inst)
    vol = parse_dicom_series(tmp_path)
    assert [int(vol.voxels[0, 0, k]) for k in range(3)] == [0, 1, 2]


def test_duplicate_slice_position(tmp_path):
    write_dicom_slice(tmp_path / "a.dcm", np.zeros((2, 2), np.int16), position=(0, 0, 1.0))
    write_dicom_slice(tmp_path / "b.dcm", np.zeros((2, 2), np.int16), position=(0, 0, 1.0))
    with pytest.raises(DuplicateSlicePosition):
        parse_dicom_series(tmp_path)


def test_series_filter(tmp_path):
    write_dicom_slice(tmp_path / "a.dcm", np.zeros((2, 2), np.int16),
                      position=(0, 0, 0.0), series_description="LUNG 1.0")
    write_dicom_slice(tmp_path / "b.dcm", np.ones((2, 2), np.int16),
                      position=(0, 0, 1.0), series_description="Bone")
    vol = parse_dicom_series(tmp_path, series_filter="lung")
    assert vol.dims == (2, 2, 1)
    assert vol.voxels.max() == 0
    with pytest.raises(DicomParseError):
        parse_dicom_series(tmp_path, series_filter="head")


@pytest.mark.parametrize(
    "syntax",
    ["1.2.840.10008.1.2", "1.2.840.10008.1.2.2", "1.2.840.10008.1.2.4.70"],
)
def test_unsupported_transfer_syntaxes(syntax):
    data = build_file(minimal_slice_elements(), transfer_syntax=syntax)
    with pytest.raises(UnsupportedTransferSyntax):
        parse_dicom_bytes(data)


def test_missing_pixel_data():
    elements = [e for e in minimal_slice_elements() if e[0] != 0x7FE0]
    with pytest.raises(MissingPixelData):
        parse_dicom_bytes(build_file(elements))


def test_wrong_pixel_data_length():
    elements = minimal_slice_elements()
    group, element, vr, value = elements[-1]
    elements[-1] = (group, element, vr, value[:-2])
    with pytest.raises(DicomParseError):
        parse_dicom_bytes(build_file(elements))


def test_bits_allocated_must_be_16():
    elements = minimal_slice_elements()
    elements[3] = (0x0028, 0x0100, b"US", struct.pack("<H", 8))
    with pytest.raises(DicomParseError):
        parse_dicom_bytes(build_file(elements))


def test_unsigned_pixels_within_range(tmp_path):
    pixels = np.array([[7, 9]], np.int16)
    write_dicom_slice(tmp_path / "a.dcm", pixels, pixel_representation=0)
    vol = parse_dicom_series(tmp_path)
    assert vol.voxels[0, 0, 0] == 7 and vol.voxels[1, 0, 0] == 9


def test_not_dicom_at_all():
    with pytest.raises(DicomParseError):
        parse_dicom_bytes(b"definitely not a scan")
    with pytest.raises(DicomParseError):
        parse_dicom_bytes(b"\x00" * 128 + b"NOPE" + b"\x00" * 64)


def test_truncations_always_raise_typed_errors():
    data = build_file(minimal_slice_elements(rows=3, cols=3))
    for cut in range(len(data)):
        with pytest.raises(CtFusionError):
            parse_dicom_bytes(data[:cut])


def test_unknown_elements_are_skipped_by_declared_length(tmp_path):
    elements = minimal_slice_elements()
    # private element wedged between known tags; value length declared
    elements.insert(1, (0x0029, 0x1010, b"LO", b"private junk"))
    sl = parse_dicom_bytes(build_file(elements))
    assert sl.rows == 2 and sl.cols == 2
