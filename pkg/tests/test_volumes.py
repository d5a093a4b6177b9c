import numpy as np
import pytest

from ctfusion.errors import DimsMismatch, ProbabilityOutOfRange
from ctfusion.volumes import (
    BinaryMask,
    CtVolume,
    ProbabilityVolume,
    UnitState,
    require_same_dims,
)


def test_ct_volume_shape_must_match_dims():
    with pytest.raises(ValueError):
        CtVolume(dims=(2, 2, 2), spacing=(1, 1, 1), voxels=np.zeros((2, 2, 1), np.int16))


def test_dims_must_be_positive():
    with pytest.raises(ValueError):
        CtVolume(dims=(0, 2, 2), spacing=(1, 1, 1), voxels=np.zeros((0, 2, 2), np.int16))


def test_spacing_must_be_positive():
    with pytest.raises(ValueError):
        CtVolume(dims=(1, 1, 1), spacing=(1, 0, 1), voxels=np.zeros((1, 1, 1), np.int16))


def test_probability_range_enforced():
    with pytest.raises(ProbabilityOutOfRange):
        ProbabilityVolume(dims=(1, 1, 1), probs=np.array([[[1.5]]], np.float32))
    with pytest.raises(ProbabilityOutOfRange):
        ProbabilityVolume(dims=(1, 1, 1), probs=np.array([[[-0.1]]], np.float32))


def test_mask_casts_to_bool():
    m = BinaryMask(dims=(2, 1, 1), bits=np.array([[[1]], [[0]]], np.uint8))
    assert m.bits.dtype == np.bool_
    assert m.positive_count == 1


def test_require_same_dims():
    a = BinaryMask(dims=(2, 2, 1), bits=np.zeros((2, 2, 1), bool))
    b = BinaryMask(dims=(2, 2, 2), bits=np.zeros((2, 2, 2), bool))
    assert require_same_dims(a, a) == (2, 2, 1)
    with pytest.raises(DimsMismatch):
        require_same_dims(a, b)


def test_with_voxels_keeps_metadata():
    v = CtVolume(
        dims=(1, 1, 1),
        spacing=(1, 1, 2),
        voxels=np.zeros((1, 1, 1), np.int16),
        rescale_slope=2.0,
        rescale_intercept=-5.0,
        series_description="Lung 1.0",
    )
    w = v.with_voxels(np.ones((1, 1, 1), np.float32), UnitState.HOUNSFIELD)
    assert w.rescale_slope == 2.0
    assert w.rescale_intercept == -5.0
    assert w.series_description == "Lung 1.0"
    assert w.unit_state is UnitState.HOUNSFIELD
