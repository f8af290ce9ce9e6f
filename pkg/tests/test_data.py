"""Dataset file schema, frame packing, and covariate scaling."""

import numpy as np
import pandas as pd
import pytest

from siph.data import (
    Standardizer,
    dataset_to_frame,
    frame_to_dataset,
    read_dataset,
    standardize_index_covariates,
    write_dataset,
)
from siph.exceptions import DatasetError
from siph.params import ClusterDataset


def toy_dataset(n=5, seed=0):
    rng = np.random.default_rng(seed)
    return ClusterDataset(
        y=rng.uniform(0.1, 2.0, size=(n, 2)),
        delta=rng.integers(0, 2, size=(n, 2)),
        x=rng.binomial(1, 0.5, size=(n, 2, 1)).astype(float),
        v=rng.uniform(-1, 1, size=(n, 2, 3)),
    )


def toy_frame():
    return pd.DataFrame(
        {
            "cluster_id": [1, 1, 2, 2],
            "member": [1, 2, 1, 2],
            "time": [0.5, 0.6, 0.7, 0.8],
            "status": [1, 0, 1, 1],
            "x_1": [0.0, 1.0, 1.0, 0.0],
            "v_1": [0.1, -0.2, 0.3, -0.4],
        }
    )


class TestFrameToDataset:
    def test_basic_packing(self):
        parsed = frame_to_dataset(toy_frame())
        assert parsed.dataset.n_clusters == 2
        assert parsed.cluster_ids == [1, 2]
        assert parsed.x_names == ["x_1"]
        assert parsed.v_names == ["v_1"]
        np.testing.assert_allclose(parsed.dataset.y, [[0.5, 0.6], [0.7, 0.8]])
        np.testing.assert_array_equal(parsed.dataset.delta, [[1, 0], [1, 1]])

    def test_row_order_free(self):
        frame = toy_frame().iloc[[3, 0, 2, 1]].reset_index(drop=True)
        parsed = frame_to_dataset(frame)
        # clusters come out in order of first appearance: 2 then 1
        assert parsed.cluster_ids == [2, 1]
        np.testing.assert_allclose(parsed.dataset.y[0], [0.7, 0.8])
        np.testing.assert_allclose(parsed.dataset.y[1], [0.5, 0.6])

    def test_missing_required_column(self):
        frame = toy_frame().drop(columns=["status"])
        with pytest.raises(DatasetError, match="status"):
            frame_to_dataset(frame)

    def test_missing_covariate_groups(self):
        with pytest.raises(DatasetError, match="x_"):
            frame_to_dataset(toy_frame().drop(columns=["x_1"]))
        with pytest.raises(DatasetError, match="v_"):
            frame_to_dataset(toy_frame().drop(columns=["v_1"]))

    def test_bad_member_value(self):
        frame = toy_frame()
        frame.loc[2, "member"] = 3
        with pytest.raises(DatasetError, match="row 2.*member"):
            frame_to_dataset(frame)

    def test_bad_status_value(self):
        frame = toy_frame()
        frame.loc[1, "status"] = 2
        with pytest.raises(DatasetError, match="status"):
            frame_to_dataset(frame)

    def test_negative_time(self):
        frame = toy_frame()
        frame.loc[0, "time"] = -0.5
        with pytest.raises(DatasetError, match="nonnegative"):
            frame_to_dataset(frame)

    def test_non_numeric_value(self):
        frame = toy_frame()
        frame["time"] = frame["time"].astype(object)
        frame.loc[3, "time"] = "soon"
        with pytest.raises(DatasetError, match="row 3.*time"):
            frame_to_dataset(frame)

    def test_three_member_cluster_names_id(self):
        frame = pd.concat(
            [toy_frame(), toy_frame().iloc[[0]]], ignore_index=True
        )
        with pytest.raises(DatasetError, match="cluster 1.*found 3"):
            frame_to_dataset(frame)

    def test_duplicate_member_names_id(self):
        frame = toy_frame()
        frame.loc[3, "member"] = 1
        with pytest.raises(DatasetError, match="cluster 2.*members"):
            frame_to_dataset(frame)


class TestFileRoundTrip:
    def test_round_trip_identity(self, tmp_path):
        ds = toy_dataset()
        path = tmp_path / "data.csv"
        write_dataset(path, ds, x_names=["x_age"], v_names=["v_a", "v_b", "v_c"])
        parsed = read_dataset(path)
        np.testing.assert_array_equal(parsed.dataset.y, ds.y)
        np.testing.assert_array_equal(parsed.dataset.delta, ds.delta)
        np.testing.assert_array_equal(parsed.dataset.x, ds.x)
        np.testing.assert_array_equal(parsed.dataset.v, ds.v)
        assert parsed.x_names == ["x_age"]
        assert parsed.v_names == ["v_a", "v_b", "v_c"]

    def test_string_cluster_ids_survive(self, tmp_path):
        ds = toy_dataset(n=2)
        path = tmp_path / "data.csv"
        write_dataset(path, ds, cluster_ids=["fam_b", "fam_a"])
        parsed = read_dataset(path)
        assert parsed.cluster_ids == ["fam_b", "fam_a"]

    def test_file_error_uses_line_numbers(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text(
            "cluster_id,member,time,status,x_1,v_1\n"
            "1,1,0.5,1,0,0.1\n"
            "1,2,0.6,1,1,0.2\n"
            "2,1,0.7,9,1,0.3\n"
            "2,2,0.8,1,0,0.4\n"
        )
        with pytest.raises(DatasetError, match="line 4"):
            read_dataset(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dataset(tmp_path / "absent.csv")

    def test_label_length_mismatch(self, tmp_path):
        with pytest.raises(DatasetError, match="label"):
            write_dataset(tmp_path / "x.csv", toy_dataset(), x_names=["a", "b"])


class TestDatasetToFrame:
    def test_shape_and_defaults(self):
        ds = toy_dataset(n=4)
        frame = dataset_to_frame(ds)
        assert list(frame.columns) == [
            "cluster_id", "member", "time", "status", "x_1", "v_1", "v_2", "v_3",
        ]
        assert len(frame) == 8
        assert list(frame["member"]) == [1, 2] * 4


class TestStandardizer:
    def test_centers_and_scales(self):
        rng = np.random.default_rng(3)
        values = rng.normal(5.0, 2.0, size=(400, 3))
        scaler = Standardizer.fit(values)
        z = scaler.transform(values)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(scaler.inverse(z), values, atol=1e-10)

    def test_constant_column_passes_through(self):
        values = np.column_stack([np.ones(10), np.arange(10.0)])
        scaler = Standardizer.fit(values)
        assert scaler.scale[0] == 1.0
        z = scaler.transform(values)
        np.testing.assert_allclose(z[:, 0], 0.0)

    def test_dict_round_trip(self):
        scaler = Standardizer.fit(np.random.default_rng(1).normal(size=(50, 2)))
        clone = Standardizer.from_dict(scaler.to_dict())
        np.testing.assert_allclose(clone.mean, scaler.mean)
        np.testing.assert_allclose(clone.scale, scaler.scale)

    def test_dataset_standardization(self):
        ds = toy_dataset(n=50, seed=9)
        out, scaler = standardize_index_covariates(ds)
        flat = out.v.reshape(-1, 3)
        np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(out.y, ds.y)
        np.testing.assert_array_equal(out.x, ds.x)
