"""Trained-model artifact and its on-disk format.

File layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"SUBNNMDL"
    8       2     format version (uint16), currently 1
    10      4     header length H (uint32)
    14      H     UTF-8 JSON header
    14+H    ...   payload: arrays back to back, C order, little-endian

The header holds scalar metadata under ``"meta"`` and an ``"arrays"`` list of
``{"name", "dtype", "shape", "offset", "nbytes"}`` records whose offsets are
relative to the start of the payload. Dtypes are numpy strings such as
``"<f8"`` and ``"<i8"``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Standardizer
from .ensemble import BaggedModel, DenoisedModel, SubNNModel, _Ensemble
from .knn import CLASSIFICATION, KnnModel, LabelSet
from .neighbors import build_index

MAGIC = b"SUBNNMDL"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")


class ModelFormatError(ValueError):
    pass


def write_arrays(path, meta: dict, arrays: dict) -> None:
    records, blobs, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        blob = le.tobytes(order="C")
        records.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta, "arrays": records}, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_arrays(path):
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise ModelFormatError(f"{path}: truncated model file")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    start = _PREFIX.size + hlen
    header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    arrays = {}
    for rec in header["arrays"]:
        lo = start + rec["offset"]
        buf = raw[lo:lo + rec["nbytes"]]
        if len(buf) != rec["nbytes"]:
            raise ModelFormatError(f"{path}: payload for {rec['name']!r} is truncated")
        arrays[rec["name"]] = np.frombuffer(buf, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"]).copy()
    return header["meta"], arrays


@dataclass
class TrainedModel:
    """Everything needed to predict from raw feature rows: scaling, data, ensemble."""

    standardizer: Standardizer
    ensemble: _Ensemble
    train_points: np.ndarray
    train_labels: LabelSet
    meta: dict = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.train_labels.mode

    @property
    def label_names(self):
        return self.meta.get("label_names") or []

    def predict(self, raw_points, workers=None) -> np.ndarray:
        pts = np.asarray(raw_points, dtype=np.float64)
        if pts.size == 0:
            return np.empty(0, dtype=np.intp if self.mode == CLASSIFICATION else np.float64)
        return self.ensemble.predict_batch(self.standardizer.transform(pts), workers=workers).predictions

    def format_predictions(self, preds) -> list[str]:
        if self.mode == CLASSIFICATION:
            names = self.label_names
            return [str(names[int(p)]) if names else str(int(p)) for p in preds]
        return [repr(float(p)) for p in preds]

    def save(self, path) -> None:
        ens = self.ensemble
        meta = dict(self.meta)
        meta.update({
            "kind": ens.kind,
            "mode": self.mode,
            "n_classes": self.train_labels.n_classes,
            "aggregation": ens.aggregation,
            "n_models": ens.n_models,
            "m": ens.m,
            "k": getattr(ens, "k", None),
            "seeds": [str(s) for s in ens.seeds] if ens.seeds is not None else None,
        })
        arrays = {
            "standardizer_mean": self.standardizer.mean,
            "standardizer_std": self.standardizer.std,
            "train_points": self.train_points,
            "train_labels": self.train_labels.values,
            "subsample_indices": np.stack([sm.source_indices for sm in ens.submodels]).astype(np.int64),
            "submodel_labels": np.stack([sm.labels.values for sm in ens.submodels]),
        }
        write_arrays(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        meta, arrays = read_arrays(path)
        mode = meta["mode"]
        labels = LabelSet(arrays["train_labels"], mode, meta["n_classes"] if mode == CLASSIFICATION else 0)
        points = arrays["train_points"]
        subs = []
        for idx, lab in zip(arrays["subsample_indices"], arrays["submodel_labels"]):
            idx = idx.astype(np.intp)
            sub = points[idx]
            subs.append(DenoisedModel(sub, labels.with_values(lab), build_index(sub), idx, meta["k"]))
        seeds = [int(s) for s in meta["seeds"]] if meta.get("seeds") else None
        kind = SubNNModel if meta["kind"] == "subnn" else BaggedModel
        ens = kind(subs, meta["aggregation"], seeds)
        std = Standardizer(arrays["standardizer_mean"], arrays["standardizer_std"])
        return cls(std, ens, points, labels, meta)

    def knn_model(self, k: int | None = None) -> KnnModel:
        return KnnModel(self.train_points, self.train_labels, k or self.meta.get("k") or 1)
