import numpy as np
import pytest

from ctfusion.volumes import BinaryMask, CtVolume, ProbabilityVolume, UnitState


def mask_from_flags(flags, dims=None):
    """Build a mask from a flat x-fastest list of 0/1 flags."""
    flags = np.asarray(flags, dtype=bool)
    if dims is None:
        dims = (flags.size, 1, 1)
    bits = flags.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0)
    return BinaryMask(dims=dims, bits=np.ascontiguousarray(bits))


def prefix_mask(length, total=8):
    """1-D row mask with the first ``length`` voxels positive."""
    return mask_from_flags([1] * length + [0] * (total - length))


def random_mask(rng, dims):
    return BinaryMask(dims=dims, bits=rng.random(dims) < 0.5)


def random_prob(rng, dims):
    return ProbabilityVolume(dims=dims, probs=rng.random(dims, dtype=np.float32))


def raw_volume(values, dims, spacing=(1.0, 1.0, 1.0), slope=1.0, intercept=0.0):
    voxels = np.asarray(values, dtype=np.int16).reshape(dims)
    return CtVolume(
        dims=dims,
        spacing=spacing,
        voxels=voxels,
        rescale_slope=slope,
        rescale_intercept=intercept,
        unit_state=UnitState.RAW_STORED,
    )


def hu_volume(values, dims, spacing=(1.0, 1.0, 1.0)):
    voxels = np.asarray(values, dtype=np.float32).reshape(dims)
    return CtVolume(
        dims=dims,
        spacing=spacing,
        voxels=voxels,
        unit_state=UnitState.HOUNSFIELD,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
