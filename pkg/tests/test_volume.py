"""Volume container, raw/sidecar I/O, and batch validation tests."""

import json

import numpy as np
import pytest

from normdev.errors import ArtifactIOError, SchemaError, ShapeError, ValidationError
from normdev.validation import (
    check_binary_labels,
    check_feature_matrix,
    check_probability,
    check_target_vector,
    check_volume_batch,
)
from normdev.volume import (
    Volume,
    read_sidecar,
    read_volume,
    sidecar_path,
    validate_volume_files,
    write_volume,
)


class TestVolumeContainer:
    def test_basic_construction(self):
        v = Volume(data=np.zeros((2, 3, 4)), voxel_mm=(1.0, 1.0, 1.0))
        assert v.data.shape == (2, 3, 4)
        assert v.dims == (2, 3, 4)

    def test_rejects_non_3d(self):
        with pytest.raises(ShapeError):
            Volume(data=np.zeros((2, 3)), voxel_mm=(1.0, 1.0, 1.0))

    def test_rejects_nonpositive_voxel(self):
        with pytest.raises(ValidationError):
            Volume(data=np.zeros((2, 2, 2)), voxel_mm=(1.0, 0.0, 1.0))

    def test_rejects_nonfinite(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            Volume(data=data, voxel_mm=(1.0, 1.0, 1.0))


class TestVolumeIO:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(3, 4, 5)).astype(np.float32).astype(np.float64)
        vol = Volume(data=data, voxel_mm=(1.0, 1.5, 2.0))
        path = str(tmp_path / "vol.raw")
        write_volume(vol, path)
        back = read_volume(path)
        np.testing.assert_array_equal(back.data, data)
        assert back.voxel_mm == (1.0, 1.5, 2.0)

    def test_on_disk_order_is_x_fastest(self, tmp_path):
        data = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
        path = str(tmp_path / "vol.raw")
        write_volume(Volume(data=data, voxel_mm=(1.0, 1.0, 1.0)), path)
        raw = np.fromfile(path, dtype="<f4")
        # x varies fastest on disk: second stored value is data[1, 0, 0]
        assert raw[0] == data[0, 0, 0]
        assert raw[1] == data[1, 0, 0]
        assert raw[2] == data[0, 1, 0]

    def test_sidecar_contents(self, tmp_path):
        path = str(tmp_path / "vol.raw")
        write_volume(Volume(np.zeros((2, 3, 4)), (1.0, 1.0, 2.5)), path)
        side = json.load(open(sidecar_path(path)))
        assert side["dims"] == [2, 3, 4]
        assert side["voxel_mm"] == [1.0, 1.0, 2.5]
        assert side["dtype"] == "f32le"

    def test_size_mismatch_rejected(self, tmp_path):
        path = str(tmp_path / "vol.raw")
        write_volume(Volume(np.zeros((2, 3, 4)), (1.0, 1.0, 1.0)), path)
        with open(path, "ab") as fh:
            fh.write(b"\x00\x00\x00\x00")
        with pytest.raises(SchemaError):
            validate_volume_files(path)

    def test_expected_dims_enforced(self, tmp_path):
        path = str(tmp_path / "vol.raw")
        write_volume(Volume(np.zeros((2, 3, 4)), (1.0, 1.0, 1.0)), path)
        validate_volume_files(path, expected_dims=(2, 3, 4))
        with pytest.raises(ValidationError):
            validate_volume_files(path, expected_dims=(4, 3, 2))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            read_volume(str(tmp_path / "nope.raw"))

    def test_malformed_sidecar(self, tmp_path):
        path = str(tmp_path / "vol.raw")
        write_volume(Volume(np.zeros((2, 2, 2)), (1.0, 1.0, 1.0)), path)
        with open(sidecar_path(path), "w") as fh:
            json.dump({"dims": [2, 2]}, fh)
        with pytest.raises(SchemaError):
            read_sidecar(path)


class TestBatchValidation:
    def test_promotes_single_volume(self):
        x = check_volume_batch(np.zeros((4, 5, 6)), input_dims=(4, 5, 6))
        assert x.shape == (1, 4, 5, 6)
        assert x.dtype == np.float64

    def test_dims_enforced(self):
        with pytest.raises(ShapeError):
            check_volume_batch(np.zeros((2, 4, 5, 6)), input_dims=(4, 5, 7))

    def test_nonfinite_rejected(self):
        x = np.zeros((1, 2, 2, 2))
        x[0, 0, 0, 0] = np.inf
        with pytest.raises(ValidationError):
            check_volume_batch(x, input_dims=(2, 2, 2))

    def test_target_vector(self):
        y = check_target_vector([1.0, 2.0, 3.0], n_expected=3)
        assert y.dtype == np.float64
        with pytest.raises(ShapeError):
            check_target_vector([1.0, 2.0], n_expected=3)
        with pytest.raises(ValidationError):
            check_target_vector([1.0, np.nan, 3.0], n_expected=3)

    def test_feature_matrix_promotes_column(self):
        x = check_feature_matrix([1.0, 2.0])
        assert x.shape == (2, 1)

    def test_binary_labels(self):
        y = check_binary_labels([0, 1, 1, 0])
        assert y.dtype == np.int64
        with pytest.raises(ValidationError):
            check_binary_labels([0, 2, 1])

    def test_probability(self):
        assert check_probability(0.5, "p") == 0.5
        with pytest.raises(ValidationError):
            check_probability(1.5, "p")
