"""Delimited dataset files, long-format frames, and covariate scaling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import DatasetError
from .params import ClusterDataset

REQUIRED_COLUMNS = ("cluster_id", "member", "time", "status")


@dataclass
class ParsedData:
    """A ClusterDataset together with the labels the file carried."""

    dataset: ClusterDataset
    cluster_ids: list
    x_names: list
    v_names: list


def covariate_names(columns):
    """Split a header into x_ and v_ groups, keeping file order."""
    x_names = [c for c in columns if str(c).startswith("x_")]
    v_names = [c for c in columns if str(c).startswith("v_")]
    return x_names, v_names


def _line(position, from_file):
    # header occupies line 1 of a delimited file
    return f"line {position + 2}" if from_file else f"row {position}"


def _numeric_column(frame, name, from_file):
    values = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        where = _line(int(bad[0]), from_file)
        raise DatasetError(f"{where}: column {name} has non-numeric value "
                           f"{frame[name].iloc[int(bad[0])]!r}")
    return values


def frame_to_dataset(frame, from_file=False):
    """Validate a long-format frame and pack it into a ClusterDataset.

    Expects one row per individual: cluster_id, member (1 or 2), time,
    status (0 or 1), then covariate columns prefixed x_ (linear part)
    and v_ (index part).  Row order inside the file is free; clusters
    are emitted in order of first appearance.
    """
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetError(f"missing required columns: {', '.join(missing)}")
    x_names, v_names = covariate_names(frame.columns)
    if not x_names:
        raise DatasetError("no linear covariate columns (prefix x_) found")
    if not v_names:
        raise DatasetError("no index covariate columns (prefix v_) found")

    frame = frame.reset_index(drop=True)
    member = _numeric_column(frame, "member", from_file)
    time = _numeric_column(frame, "time", from_file)
    status = _numeric_column(frame, "status", from_file)
    covs = {c: _numeric_column(frame, c, from_file) for c in x_names + v_names}

    bad = np.flatnonzero(~np.isin(member, (1.0, 2.0)))
    if bad.size:
        i = int(bad[0])
        raise DatasetError(f"{_line(i, from_file)}: member must be 1 or 2, "
                           f"got {frame['member'].iloc[i]!r}")
    bad = np.flatnonzero(~np.isin(status, (0.0, 1.0)))
    if bad.size:
        i = int(bad[0])
        raise DatasetError(f"{_line(i, from_file)}: status must be 0 or 1, "
                           f"got {frame['status'].iloc[i]!r}")
    bad = np.flatnonzero(time < 0)
    if bad.size:
        i = int(bad[0])
        raise DatasetError(f"{_line(i, from_file)}: time must be nonnegative, "
                           f"got {time[i]}")

    order = {}
    rows = {}
    for i, cid in enumerate(frame["cluster_id"]):
        order.setdefault(cid, len(order))
        rows.setdefault(cid, []).append(i)
    for cid, idx in rows.items():
        if len(idx) != 2:
            raise DatasetError(
                f"cluster {cid!r}: expected 2 members, found {len(idx)}"
            )
        if sorted(member[idx]) != [1.0, 2.0]:
            raise DatasetError(
                f"cluster {cid!r}: members must be exactly 1 and 2, "
                f"got {sorted(int(m) for m in member[idx])}"
            )

    cluster_ids = sorted(rows, key=order.get)
    n = len(cluster_ids)
    y = np.empty((n, 2))
    delta = np.empty((n, 2), dtype=np.int8)
    x = np.empty((n, 2, len(x_names)))
    v = np.empty((n, 2, len(v_names)))
    for a, cid in enumerate(cluster_ids):
        for i in rows[cid]:
            j = int(member[i]) - 1
            y[a, j] = time[i]
            delta[a, j] = int(status[i])
            x[a, j] = [covs[c][i] for c in x_names]
            v[a, j] = [covs[c][i] for c in v_names]
    dataset = ClusterDataset(y=y, delta=delta, x=x, v=v)
    return ParsedData(dataset=dataset, cluster_ids=cluster_ids,
                      x_names=x_names, v_names=v_names)


def dataset_to_frame(dataset, cluster_ids=None, x_names=None, v_names=None):
    """Long-format frame for a ClusterDataset, one row per individual."""
    n, _, p = dataset.x.shape
    q = dataset.v.shape[2]
    if cluster_ids is None:
        cluster_ids = list(range(1, n + 1))
    if x_names is None:
        x_names = [f"x_{k + 1}" for k in range(p)]
    if v_names is None:
        v_names = [f"v_{k + 1}" for k in range(q)]
    if len(cluster_ids) != n or len(x_names) != p or len(v_names) != q:
        raise DatasetError("label lengths do not match the dataset shape")
    records = {
        "cluster_id": np.repeat(cluster_ids, 2),
        "member": np.tile([1, 2], n),
        "time": dataset.y.reshape(-1),
        "status": dataset.delta.reshape(-1),
    }
    flat_x = dataset.x.reshape(-1, p)
    flat_v = dataset.v.reshape(-1, q)
    for k, name in enumerate(x_names):
        records[name] = flat_x[:, k]
    for k, name in enumerate(v_names):
        records[name] = flat_v[:, k]
    return pd.DataFrame(records)


def read_dataset(path):
    """Parse a delimited dataset file; raises DatasetError on violations."""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DatasetError(f"could not parse {path}: {exc}") from exc
    return frame_to_dataset(frame, from_file=True)


def write_dataset(path, dataset, cluster_ids=None, x_names=None, v_names=None):
    """Write a ClusterDataset in the delimited file schema."""
    frame = dataset_to_frame(dataset, cluster_ids, x_names, v_names)
    # %.17g keeps the write/read cycle bit-exact for doubles
    frame.to_csv(path, index=False, float_format="%.17g")


@dataclass
class Standardizer:
    """Column location/scale transform fitted over all individuals."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, values):
        values = np.asarray(values, dtype=float).reshape(-1, np.shape(values)[-1])
        mean = values.mean(axis=0)
        scale = values.std(axis=0)
        # constant columns pass through unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def transform(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / self.scale

    def inverse(self, values):
        return np.asarray(values, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, payload):
        return cls(
            mean=np.asarray(payload["mean"], dtype=float),
            scale=np.asarray(payload["scale"], dtype=float),
        )


def standardize_index_covariates(dataset):
    """Center and scale v columns; returns (new dataset, transform)."""
    scaler = Standardizer.fit(dataset.v)
    v = scaler.transform(dataset.v)
    return (
        ClusterDataset(y=dataset.y, delta=dataset.delta, x=dataset.x, v=v),
        scaler,
    )
