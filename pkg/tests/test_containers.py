import numpy as np
import pytest

from conedbp.containers import ProjectionSet, SliceImage, Volume3D, extract_slice
from conedbp.errors import BoundsError, ConfigError


def test_volume_defaults_centered():
    vol = Volume3D(4, 4, 4, 1.0)
    assert vol.origin == (-1.5, -1.5, -1.5)
    assert vol.data.shape == (4, 4, 4)
    assert vol.data.dtype == np.float32


def test_volume_voxel_center_oracle():
    vol = Volume3D(5, 4, 3, (1.0, 2.0, 4.0), origin=(-2.0, -3.0, -4.0))
    # center of voxel (i, j, k) = origin + (i, j, k) * spacing
    for idx in [(0, 0, 0), (4, 3, 2), (2, 1, 1)]:
        got = vol.voxel_center(*idx)
        want = np.array([-2.0, -3.0, -4.0]) + np.array(idx) * np.array([1.0, 2.0, 4.0])
        assert np.allclose(got, want, atol=0)
        assert np.isclose(vol.axis_coords(0)[idx[0]], want[0])
        assert np.isclose(vol.axis_coords(1)[idx[1]], want[1])
        assert np.isclose(vol.axis_coords(2)[idx[2]], want[2])


def test_volume_validation_errors():
    with pytest.raises(ConfigError):
        Volume3D(0, 4, 4, 1.0)
    with pytest.raises(ConfigError):
        Volume3D(4, 4, 4, -1.0)
    with pytest.raises(ConfigError):
        Volume3D(4, 4, 4, 1.0, None, np.zeros((4, 4, 5)))
    bad = np.zeros((4, 4, 4))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ConfigError):
        Volume3D(4, 4, 4, 1.0, None, bad)


def test_volume_data_read_only():
    vol = Volume3D(2, 2, 2, 1.0)
    with pytest.raises(ValueError):
        vol.data[0, 0, 0] = 1.0


def test_projection_set_validation():
    lam = np.array([0.0, 1.0, 2.0])
    ProjectionSet(3, lam, 4, 4, 1.0)
    with pytest.raises(ConfigError):
        ProjectionSet(3, lam[::-1].copy(), 4, 4, 1.0)  # decreasing
    with pytest.raises(ConfigError):
        ProjectionSet(3, np.array([0.0, 1.0, 7.0]), 4, 4, 1.0)  # >= 2*pi
    with pytest.raises(ConfigError):
        ProjectionSet(2, lam, 4, 4, 1.0)  # length mismatch
    with pytest.raises(ConfigError):
        ProjectionSet(3, lam, 4, 4, 0.0)  # pitch


def test_extract_slice_constant_volume():
    vol = Volume3D(3, 4, 5, 1.0, None, np.full((5, 4, 3), 7.0))
    s = extract_slice(vol, "axial", 2)
    assert (s.rows, s.cols) == (4, 3)
    assert np.all(s.data == 7.0)


def test_extract_slice_orientations():
    data = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4)  # (nz, ny, nx)
    vol = Volume3D(4, 3, 2, 1.0, None, data)
    axial = extract_slice(vol, "axial", 1)
    assert axial.data.shape == (3, 4)
    assert np.array_equal(axial.data, data[1])
    coronal = extract_slice(vol, "coronal", 2)
    assert coronal.data.shape == (2, 4)
    assert np.array_equal(coronal.data, data[:, 2, :])
    sagittal = extract_slice(vol, "sagittal", 3)
    assert sagittal.data.shape == (2, 3)
    assert np.array_equal(sagittal.data, data[:, :, 3])


def test_extract_slice_bounds():
    vol = Volume3D(4, 3, 5, 1.0)
    with pytest.raises(BoundsError):
        extract_slice(vol, "coronal", 3)  # ny = 3
    with pytest.raises(BoundsError):
        extract_slice(vol, "axial", -1)
    with pytest.raises(ConfigError):
        extract_slice(vol, "oblique", 0)


def test_extract_slice_is_pure_copy():
    vol = Volume3D(3, 3, 3, 1.0, None, np.zeros((3, 3, 3)))
    s = extract_slice(vol, "axial", 0)
    s.data[0, 0] = 42.0
    assert vol.data[0, 0, 0] == 0.0


def test_slice_image_validation():
    SliceImage(2, 3, 1.0, np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        SliceImage(2, 3, 1.0, np.zeros((3, 2)))
