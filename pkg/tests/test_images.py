import numpy as np
import pytest
from PIL import Image

from scribbleseg.errors import InputError
from scribbleseg.images import (
    GridGeometry,
    ImagePlane,
    decode_image_bytes,
    load_image,
    normalize_plane,
    pad_amounts,
    pad_to_multiple,
)


def test_load_8bit_gray(tmp_path):
    arr = np.arange(64, dtype=np.uint8).reshape(8, 8)
    Image.fromarray(arr).save(tmp_path / "g.png")
    plane = load_image(tmp_path / "g.png", spacing_um=4.0)
    assert plane.data.shape == (8, 8)
    assert plane.spacing_um == 4.0
    assert np.array_equal(plane.data, arr.astype(np.float32))


def test_load_16bit_gray(tmp_path):
    arr = (np.arange(64, dtype=np.uint16) * 500).reshape(8, 8)
    Image.fromarray(arr).save(tmp_path / "g16.png")
    plane = load_image(tmp_path / "g16.png")
    assert plane.data.max() == pytest.approx(63 * 500)


def test_load_rgb_tiff(tmp_path):
    arr = np.random.default_rng(0).integers(0, 255, size=(10, 12, 3)).astype(np.uint8)
    Image.fromarray(arr).save(tmp_path / "c.tif")
    plane = load_image(tmp_path / "c.tif")
    assert plane.data.shape == (10, 12, 3)
    assert plane.channels == 3


def test_undecodable_bytes_raise_input_error():
    with pytest.raises(InputError):
        decode_image_bytes(b"this is not an image")


def test_empty_image_rejected():
    with pytest.raises(InputError):
        ImagePlane(data=np.zeros((0, 4), dtype=np.float32))


def test_normalize_percentile_window():
    rng = np.random.default_rng(0)
    arr = rng.uniform(100, 300, size=(64, 64)).astype(np.float32)
    arr[0, 0] = 10000.0  # outlier clipped by the 99th percentile
    plane = normalize_plane(ImagePlane(data=arr))
    assert plane.normalized
    assert plane.data.min() >= 0.0 and plane.data.max() <= 1.0
    assert plane.data[0, 0] == 1.0


def test_normalize_constant_image_is_zero():
    plane = normalize_plane(ImagePlane(data=np.full((8, 8), 42.0, dtype=np.float32)))
    assert np.all(plane.data == 0.0)


def test_normalize_is_idempotent():
    rng = np.random.default_rng(1)
    plane = normalize_plane(ImagePlane(data=rng.random((16, 16)).astype(np.float32)))
    again = normalize_plane(plane)
    assert again is plane


@pytest.mark.parametrize("size,mult,expected", [(500, 16, (6, 6)), (512, 16, (0, 0)), (17, 8, (3, 4))])
def test_pad_amounts_symmetric(size, mult, expected):
    assert pad_amounts(size, mult) == expected


def test_pad_to_multiple_reflects():
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    padded, offset = pad_to_multiple(arr, 4)
    assert padded.shape == (4, 4)
    assert offset == (0, 0)
    # bottom row reflects the second-to-last row
    assert np.array_equal(padded[3], arr[1])


def test_grid_geometry():
    geo = GridGeometry.for_image((500, 500), 16)
    assert geo.padded_shape == (512, 512)
    assert geo.grid_shape == (32, 32)
    assert geo.pad_offset == (6, 6)
