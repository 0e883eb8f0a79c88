"""Binary dataset/checkpoint containers and CSV exports.

Dataset file::

    DIFFCH v1 F=<F> C=<C> N=<N>\\n
    N x (label <u2, snr_db <f8, 2F x <f8)      # Re block then Im block

Checkpoint file::

    DIFFCH-MODEL v1\\n
    <one line of JSON: model config, manifest [(name, shape, offset)], extras>\\n
    flat <f8 parameter array
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .channelgen import Dataset
from .errors import FormatError
from .model import ModelConfig, NoisePredictor, param_shapes
from .numcore import Tensor

DATASET_MAGIC = "DIFFCH v1"
MODEL_MAGIC = "DIFFCH-MODEL v1"
_HEADER_RE = re.compile(r"^DIFFCH v1 F=(\d+) C=(\d+) N=(\d+)$")


def _record_dtype(F: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("snr", "<f8"), ("h", "<f8", (2 * F,))])


def dataset_bytes(ds: Dataset) -> bytes:
    rec = np.zeros(len(ds), dtype=_record_dtype(ds.F))
    rec["label"] = ds.labels
    rec["snr"] = ds.snr_db
    rec["h"] = np.concatenate([ds.H.real, ds.H.imag], axis=1)
    header = f"{DATASET_MAGIC} F={ds.F} C={ds.num_scenarios} N={len(ds)}\n".encode("ascii")
    return header + rec.tobytes()


def save_dataset(ds: Dataset, path) -> Path:
    path = Path(path)
    path.write_bytes(dataset_bytes(ds))
    return path


def load_dataset(path, names=()) -> Dataset:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise FormatError("dataset header missing")
    m = _HEADER_RE.match(raw[:nl].decode("ascii", errors="replace"))
    if not m:
        raise FormatError(f"bad dataset header: {raw[:nl][:60]!r}")
    F, C, N = map(int, m.groups())
    dt = _record_dtype(F)
    body = raw[nl + 1:]
    if len(body) != N * dt.itemsize:
        raise FormatError(f"dataset body has {len(body)} bytes, expected {N * dt.itemsize}")
    rec = np.frombuffer(body, dtype=dt)
    h = rec["h"]
    return Dataset(h[:, :F] + 1j * h[:, F:], rec["label"].astype(np.intp), rec["snr"].copy(), C, tuple(names))


def save_checkpoint(predictor: NoisePredictor, path, extra: dict | None = None) -> Path:
    manifest, chunks, offset = [], [], 0
    for name, p in predictor.params.items():
        manifest.append([name, list(p.shape), offset])
        offset += p.data.size
        chunks.append(p.data.reshape(-1))
    meta = {"config": predictor.config.to_dict(), "manifest": manifest, "extra": extra or {}}
    head = (MODEL_MAGIC + "\n" + json.dumps(meta, sort_keys=True, allow_nan=True) + "\n").encode("utf-8")
    payload = np.concatenate(chunks).astype("<f8").tobytes()
    path = Path(path)
    path.write_bytes(head + payload)
    return path


def load_checkpoint(path) -> tuple[NoisePredictor, dict]:
    raw = Path(path).read_bytes()
    first = raw.find(b"\n")
    second = raw.find(b"\n", first + 1)
    if first < 0 or second < 0 or raw[:first].decode("ascii", errors="replace") != MODEL_MAGIC:
        raise FormatError("not a DIFFCH-MODEL v1 checkpoint")
    meta = json.loads(raw[first + 1:second])
    cfg = ModelConfig.from_dict(meta["config"])
    flat = np.frombuffer(raw[second + 1:], dtype="<f8")
    shapes = param_shapes(cfg)
    params = {}
    for name, shape, offset in meta["manifest"]:
        if tuple(shape) != shapes.get(name):
            raise FormatError(f"manifest entry {name} {shape} does not match the config")
        size = int(np.prod(shape))
        params[name] = Tensor(flat[offset:offset + size].reshape(shape).copy(), requires_grad=True)
    return NoisePredictor(cfg, params), meta["extra"]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "inf" if x == math.inf else repr(x)
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_loss_csv(path, history) -> Path:
    return write_csv(path, ["step", "loss"], ((i + 1, v) for i, v in enumerate(history)))


def write_results_csv(path, ids, truth, results) -> Path:
    C = len(results[0].eta) if results else 0
    header = (["sample_id", "true_label", "pred_label"] + [f"eta_{c}" for c in range(C)]
              + [f"posterior_{c}" for c in range(C)])
    rows = ([int(i), int(y), r.label, *r.eta, *r.posterior] for i, y, r in zip(ids, truth, results))
    return write_csv(path, header, rows)


def write_features_csv(path, ds: Dataset) -> Path:
    from .channelgen import FEATURE_NAMES
    rows = ([i, int(ds.labels[i]), *ds.features[i]] for i in range(len(ds)))
    return write_csv(path, ["sample_id", "label", *FEATURE_NAMES], rows)
