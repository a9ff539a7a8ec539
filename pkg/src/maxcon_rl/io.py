"""File formats: dataset JSON, correspondence CSV, binary checkpoints."""

import csv
import json
import struct

import numpy as np

from .errors import FormatError
from .model import MODEL_DIMS, Dataset, Planted, linearize_correspondence
from .network import NetworkParams
from .training import Checkpoint, TrainConfig

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
CHECKPOINT_MAGIC = b"MAXCONRL"


def dataset_to_dict(ds):
    points = []
    for i in range(ds.N):
        p = {"a": ds.A[i].tolist(), "b": float(ds.b[i])}
        if ds.raw is not None:
            p["raw"] = ds.raw[i].tolist()
        points.append(p)
    out = {"version": DATASET_VERSION, "model_kind": ds.model_kind, "d": ds.d,
           "epsilon": ds.epsilon, "points": points}
    if ds.planted is not None:
        out["planted"] = {"theta_hat": [float(x) for x in ds.planted.theta_hat],
                          "outlier_indices": list(ds.planted.outlier_indices)}
    return out


def dataset_from_dict(d):
    if d.get("version") != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {d.get('version')!r}")
    try:
        pts = d["points"]
        A = np.array([p["a"] for p in pts], dtype=float)
        b = np.array([p["b"] for p in pts], dtype=float)
        raw = None
        if pts and all("raw" in p for p in pts):
            raw = np.array([p["raw"] for p in pts], dtype=float)
        planted = None
        if d.get("planted") is not None:
            planted = Planted(np.array(d["planted"]["theta_hat"], dtype=float),
                              tuple(int(i) for i in d["planted"]["outlier_indices"]))
        if A.ndim != 2 or A.shape[1] != int(d["d"]):
            raise FormatError(f"points do not have d={d['d']} regressors")
        return Dataset(A, b, float(d["epsilon"]), d["model_kind"], raw=raw, planted=planted)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed dataset: {exc}") from exc


def save_dataset(ds, path):
    with open(path, "w") as f:
        json.dump(dataset_to_dict(ds), f)


def load_dataset(path):
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON ({exc})") from exc
    return dataset_from_dict(d)


def load_correspondences(path, epsilon=0.01):
    """Read ``u1,u2,v1,v2`` rows (optional header) into a linearised dataset."""
    pts = []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1 and not pts:
                    continue    # header
                raise FormatError(f"{path}:{lineno}: non-numeric field in {row}") from None
            if not np.all(np.isfinite(vals)):
                raise FormatError(f"{path}:{lineno}: non-finite coordinate")
            pts.append(linearize_correspondence(vals[:2], vals[2:]))
    need = MODEL_DIMS["fundamental_linearized"] + 1
    if len(pts) < need:
        raise FormatError(f"{path}: need at least {need} correspondences, got {len(pts)}")
    return Dataset.from_points(pts, epsilon, "fundamental_linearized")


def save_checkpoint(ckpt, path):
    params = ckpt.params
    header = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": params.manifest(),
        "train_config": ckpt.config.to_dict(),
        "episode": ckpt.episode,
        "stats": ckpt.stats,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(hbytes)))
        f.write(hbytes)
        for arr in params.arrays.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expected=None):
    """Load a checkpoint; ``expected`` (a manifest) is checked layer by layer."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != CHECKPOINT_MAGIC or len(blob) < 12:
        raise FormatError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12:12 + hlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: corrupted header") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('format_version')!r}")
    arch = header["architecture"]
    if expected is not None:
        exp_layers = dict((n, list(s)) for n, s in expected["layers"])
        got_layers = dict((n, list(s)) for n, s in arch["layers"])
        for name in list(exp_layers) + list(got_layers):
            if exp_layers.get(name) != got_layers.get(name):
                raise FormatError(
                    f"{path}: layer {name} has shape {got_layers.get(name)}, "
                    f"expected {exp_layers.get(name)}")
    offset = 12 + hlen
    arrays = {}
    for name, shape in arch["layers"]:
        n = int(np.prod(shape))
        chunk = blob[offset:offset + 8 * n]
        if len(chunk) != 8 * n:
            raise FormatError(f"{path}: truncated weights at layer {name}")
        arrays[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(float)
        offset += 8 * n
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes after weights")
    try:
        params = NetworkParams(arrays, arch["k"])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    config = TrainConfig.from_dict(header["train_config"])
    return Checkpoint(params, config, int(header["episode"]), header.get("stats", {}))


def save_trainer_state(state, path):
    """Persist the resume-only training state (replay memory, optimiser, RNG)."""
    arrays = {}
    meta = {}
    for k, v in state.items():
        if isinstance(v, np.ndarray):
            arrays[k] = v
        else:
            meta[k] = v
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_trainer_state(path):
    with np.load(path, allow_pickle=False) as z:
        out = {k: z[k] for k in z.files if k != "__meta__"}
        out.update(json.loads(bytes(z["__meta__"]).decode()))
    return out
