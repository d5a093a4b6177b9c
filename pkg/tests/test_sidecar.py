import struct

import numpy as np
import pytest

from ctfusion.errors import (
    HeaderParseError,
    MaskValueError,
    PayloadLengthMismatch,
    ProbabilityOutOfRange,
    WrongUnitState,
)
from ctfusion.sidecar import read_raw_volume, write_raw_volume
from ctfusion.volumes import BinaryMask, CtVolume, ProbabilityVolume, UnitState


def write_header(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def test_mask_example(tmp_path):
    write_header(
        tmp_path / "m.hdr",
        ["kind=mask", "dims=2 2 1", "spacing=1 1 1", "element=u8", "data=m.raw"],
    )
    (tmp_path / "m.raw").write_bytes(bytes([1, 0, 0, 1]))
    mask = read_raw_volume(tmp_path / "m.hdr")
    assert isinstance(mask, BinaryMask)
    assert mask.positive_count == 2
    # payload is x-fastest: (0,0,0)=1, (1,0,0)=0, (0,1,0)=0, (1,1,0)=1
    assert bool(mask.bits[0, 0, 0]) and bool(mask.bits[1, 1, 0])
    assert not mask.bits[1, 0, 0] and not mask.bits[0, 1, 0]


def test_probability_out_of_range(tmp_path):
    write_header(
        tmp_path / "p.hdr",
        ["kind=prob", "dims=2 1 1", "spacing=1 1 1", "element=f32le", "data=p.raw"],
    )
    (tmp_path / "p.raw").write_bytes(struct.pack("<2f", 0.5, 1.5))
    with pytest.raises(ProbabilityOutOfRange):
        read_raw_volume(tmp_path / "p.hdr")


def test_mask_value_error(tmp_path):
    write_header(
        tmp_path / "m.hdr",
        ["kind=mask", "dims=2 1 1", "spacing=1 1 1", "element=u8", "data=m.raw"],
    )
    (tmp_path / "m.raw").write_bytes(bytes([1, 7]))
    with pytest.raises(MaskValueError):
        read_raw_volume(tmp_path / "m.hdr")


def test_single_voxel_ct_payload(tmp_path):
    v = CtVolume(dims=(1, 1, 1), spacing=(1, 1, 1), voxels=np.zeros((1, 1, 1), np.int16))
    write_raw_volume(v, tmp_path / "v.hdr")
    assert (tmp_path / "v.raw").stat().st_size == 2


def test_raw_ct_roundtrip(tmp_path, rng):
    voxels = rng.integers(-2000, 3000, size=(5, 4, 3)).astype(np.int16)
    v = CtVolume(
        dims=(5, 4, 3),
        spacing=(0.7, 0.7, 2.5),
        voxels=voxels,
        rescale_slope=1.0,
        rescale_intercept=-1024.0,
        series_description="Lung 1.0",
    )
    write_raw_volume(v, tmp_path / "v.hdr")
    back = read_raw_volume(tmp_path / "v.hdr")
    assert isinstance(back, CtVolume)
    assert back.unit_state is UnitState.RAW_STORED
    assert back.dims == v.dims and back.spacing == v.spacing
    assert back.rescale_slope == 1.0 and back.rescale_intercept == -1024.0
    assert back.series_description == "Lung 1.0"
    assert np.array_equal(back.voxels, voxels)


def test_hu_ct_roundtrip_bit_exact(tmp_path, rng):
    voxels = (rng.random((16, 16, 16), dtype=np.float32) * 2000 - 1024).astype(np.float32)
    v = CtVolume(
        dims=(16, 16, 16), spacing=(1, 1, 1), voxels=voxels,
        unit_state=UnitState.HOUNSFIELD,
    )
    write_raw_volume(v, tmp_path / "v.hdr")
    back = read_raw_volume(tmp_path / "v.hdr")
    assert back.unit_state is UnitState.HOUNSFIELD
    assert np.array_equal(back.voxels, voxels)
    # second write is byte-identical
    write_raw_volume(back, tmp_path / "w.hdr")
    assert (tmp_path / "v.raw").read_bytes() == (tmp_path / "w.raw").read_bytes()


def test_prob_roundtrip(tmp_path, rng):
    probs = rng.random((4, 5, 6), dtype=np.float32)
    p = ProbabilityVolume(dims=(4, 5, 6), probs=probs)
    write_raw_volume(p, tmp_path / "p.hdr")
    back = read_raw_volume(tmp_path / "p.hdr")
    assert isinstance(back, ProbabilityVolume)
    assert np.array_equal(back.probs, probs)


def test_mask_roundtrip(tmp_path, rng):
    bits = rng.random((7, 3, 2)) < 0.4
    m = BinaryMask(dims=(7, 3, 2), bits=bits)
    write_raw_volume(m, tmp_path / "m.hdr")
    back = read_raw_volume(tmp_path / "m.hdr")
    assert isinstance(back, BinaryMask)
    assert np.array_equal(back.bits, bits)


def test_normalized_volume_not_serializable(tmp_path):
    v = CtVolume(
        dims=(1, 1, 1), spacing=(1, 1, 1),
        voxels=np.zeros((1, 1, 1)), unit_state=UnitState.NORMALIZED,
    )
    with pytest.raises(WrongUnitState):
        write_raw_volume(v, tmp_path / "v.hdr")


@pytest.mark.parametrize(
    "lines",
    [
        ["kind=ct", "dims=1 1 1", "spacing=1 1 1", "element=i16le"],  # missing data
        ["kind=ct", "dims=1 1", "spacing=1 1 1", "element=i16le", "data=x.raw"],
        ["kind=ct", "dims=0 1 1", "spacing=1 1 1", "element=i16le", "data=x.raw"],
        ["kind=ct", "dims=1 1 1", "spacing=1 -1 1", "element=i16le", "data=x.raw"],
        ["kind=ct", "dims=1 1 1", "spacing=1 1 1", "element=i64le", "data=x.raw"],
        ["kind=blob", "dims=1 1 1", "spacing=1 1 1", "element=u8", "data=x.raw"],
        ["kind=prob", "dims=1 1 1", "spacing=1 1 1", "element=u8", "data=x.raw"],
        ["kind=ct", "dims=1 1 1", "spacing=1 1 1", "element=i16le", "data=/abs.raw"],
        ["kind=ct", "kind=ct", "dims=1 1 1", "spacing=1 1 1", "element=i16le", "data=x.raw"],
        ["mood=great", "kind=ct", "dims=1 1 1", "spacing=1 1 1", "element=i16le", "data=x.raw"],
        ["kind=mask", "dims=1 1 1", "spacing=1 1 1", "element=u8", "data=x.raw", "slope=2"],
        ["not a header line"],
    ],
)
def test_header_errors(tmp_path, lines):
    write_header(tmp_path / "h.hdr", lines)
    (tmp_path / "x.raw").write_bytes(b"\x00\x00\x00\x00\x00\x00\x00\x00")
    with pytest.raises(HeaderParseError):
        read_raw_volume(tmp_path / "h.hdr")


def test_payload_length_mismatch(tmp_path):
    write_header(
        tmp_path / "h.hdr",
        ["kind=mask", "dims=3 1 1", "spacing=1 1 1", "element=u8", "data=x.raw"],
    )
    (tmp_path / "x.raw").write_bytes(b"\x01\x00")
    with pytest.raises(PayloadLengthMismatch):
        read_raw_volume(tmp_path / "h.hdr")


def test_missing_header_file(tmp_path):
    with pytest.raises(HeaderParseError):
        read_raw_volume(tmp_path / "nope.hdr")
