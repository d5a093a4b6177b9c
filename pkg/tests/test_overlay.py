import numpy as np
import pytest
from PIL import Image

from ctfusion.errors import SliceOutOfRange
from ctfusion.overlay import window_to_gray, write_overlay_image
from ctfusion.volumes import BinaryMask, CtVolume, UnitState


def hu_volume(values):
    arr = np.asarray(values, dtype=np.float32)
    return CtVolume(
        dims=arr.shape, spacing=(1, 1, 1), voxels=arr, unit_state=UnitState.HOUNSFIELD
    )


def empty_mask(dims):
    return BinaryMask(dims=dims, bits=np.zeros(dims, bool))


def full_mask(dims):
    return BinaryMask(dims=dims, bits=np.ones(dims, bool))


def test_window_endpoints_exact():
    values = np.array([-1000.0, 400.0, -300.0, -2000.0, 900.0])
    gray = window_to_gray(values, -1000.0, 400.0)
    assert gray[0] == 0
    assert gray[1] == 255
    assert gray[3] == 0  # below low clips
    assert gray[4] == 255  # above high clips
    # midpoint maps to half scale
    assert gray[2] == round((700 / 1400) * 255)


def test_window_requires_low_below_high():
    with pytest.raises(ValueError):
        window_to_gray(np.zeros(1), 5.0, 5.0)


def test_empty_mask_is_pure_grayscale(tmp_path):
    vol = hu_volume(np.linspace(-1000, 400, 24).reshape(4, 3, 2))
    path = tmp_path / "o.png"
    write_overlay_image(vol, empty_mask(vol.dims), 1, (-1000, 400), path)
    rgb = np.asarray(Image.open(path))
    assert rgb.shape == (3, 4, 3)  # (ny, nx, channels)
    assert np.array_equal(rgb[..., 0], rgb[..., 1])
    assert np.array_equal(rgb[..., 1], rgb[..., 2])
    expected = window_to_gray(vol.voxels[:, :, 1], -1000, 400).T
    assert np.array_equal(rgb[..., 0], expected)


def test_full_mask_tints_every_pixel(tmp_path):
    vol = hu_volume(np.linspace(-1000, 400, 16).reshape(4, 2, 2))
    path = tmp_path / "o.png"
    write_overlay_image(vol, full_mask(vol.dims), 0, (-1000, 400), path)
    rgb = np.asarray(Image.open(path)).astype(int)
    # red channel strictly above green/blue everywhere: tint visible on any gray
    assert (rgb[..., 0] > rgb[..., 1]).all()
    assert np.array_equal(rgb[..., 1], rgb[..., 2])


def test_tint_formula(tmp_path):
    vol = hu_volume(np.array([[[-1000.0]], [[400.0]]]))
    path = tmp_path / "o.png"
    write_overlay_image(vol, full_mask(vol.dims), 0, (-1000, 400), path)
    rgb = np.asarray(Image.open(path))
    # gray 0 -> (127, 0, 0); gray 255 -> (255, 127, 127)
    assert tuple(rgb[0, 0]) == (127, 0, 0)
    assert tuple(rgb[0, 1]) == (255, 127, 127)


def test_slice_out_of_range(tmp_path):
    vol = hu_volume(np.zeros((2, 2, 2)))
    with pytest.raises(SliceOutOfRange):
        write_overlay_image(vol, empty_mask(vol.dims), 2, (-1000, 400), tmp_path / "o.png")


def test_png_is_lossless_roundtrip(tmp_path, rng):
    vol = hu_volume(rng.random((6, 5, 3)) * 1400 - 1000)
    mask = BinaryMask(dims=vol.dims, bits=rng.random(vol.dims) < 0.3)
    path = tmp_path / "o.png"
    write_overlay_image(vol, mask, 2, (-1000, 400), path)
    gray = window_to_gray(vol.voxels[:, :, 2], -1000, 400).astype(np.uint16)
    m = mask.bits[:, :, 2]
    expected_r = np.where(m, (gray + 255) // 2, gray).astype(np.uint8).T
    rgb = np.asarray(Image.open(path))
    assert np.array_equal(rgb[..., 0], expected_r)
