"""Binary checkpoint and dataset files.

Layout of both formats::

    magic      4 bytes   b"HFNO" (checkpoint) or b"HFND" (dataset)
    version    u32 LE
    header_len u64 LE
    header     UTF-8 JSON, includes a tensor manifest
    payload    little-endian tensors, back to back in manifest order

Each manifest entry carries ``name``, ``dtype`` (f32, f64, c64, c128),
``shape``, ``offset`` (relative to the payload start) and ``nbytes``.
Complex tensors are stored as interleaved (Re, Im) pairs.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encodings import StandardStats, assemble_input
from .fno import Hyperparams, ModelError, ModelParams
from .grid import Grid2D, Scenario, SoundSpeedField, SynthConfig
from .optim import Pairs

CHECKPOINT_MAGIC = b"HFNO"
DATASET_MAGIC = b"HFND"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")

DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8"), "c64": np.dtype("<c8"), "c128": np.dtype("<c16")}
_CODES = {v: k for k, v in DTYPES.items()}


class PersistError(Exception):
    """Base class for every file-format failure."""


class BadMagic(PersistError):
    pass


class VersionMismatch(PersistError):
    pass


class TruncatedFile(PersistError):
    pass


class ManifestMismatch(PersistError):
    """Header, manifest and payload disagree, or tensors do not fit the model."""


class CountMismatch(PersistError):
    pass


# --------------------------------------------------------------- container

def _dtype_code(a: np.ndarray) -> str:
    try:
        return _CODES[a.dtype.newbyteorder("<")]
    except KeyError:
        raise PersistError(f"unsupported dtype {a.dtype}") from None


def encode(magic: bytes, header: dict, tensors: list[tuple[str, np.ndarray]]) -> bytes:
    manifest, blobs, offset = [], [], 0
    for name, arr in tensors:
        arr = np.asarray(arr)
        code = _dtype_code(arr)
        blob = np.ascontiguousarray(arr, dtype=DTYPES[code]).tobytes()
        manifest.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    head = json.dumps({**header, "tensors": manifest}, sort_keys=True, separators=(",", ":")).encode()
    return _PREFIX.pack(magic, VERSION, len(head)) + head + b"".join(blobs)


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _check_entry(e, payload_len):
    try:
        name, code, shape = e["name"], e["dtype"], e["shape"]
        offset, nbytes = e["offset"], e["nbytes"]
    except (KeyError, TypeError):
        raise ManifestMismatch("malformed manifest entry") from None
    if not isinstance(name, str) or code not in DTYPES:
        raise ManifestMismatch(f"bad name or dtype in manifest entry {e!r}")
    if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise ManifestMismatch(f"{name}: bad shape {shape!r}")
    if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in (offset, nbytes)):
        raise ManifestMismatch(f"{name}: bad offset or size")
    if nbytes != math.prod(shape) * DTYPES[code].itemsize:
        raise ManifestMismatch(f"{name}: nbytes {nbytes} does not match shape {shape} of {code}")
    return name, DTYPES[code], tuple(shape), offset, nbytes


def decode(data: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < 4:
        raise TruncatedFile(f"file is {len(data)} bytes, too short for a magic number")
    if data[:4] != magic:
        raise BadMagic(f"bad magic {data[:4]!r}, expected {magic!r}")
    if len(data) < _PREFIX.size:
        raise TruncatedFile("file ends inside the fixed prefix")
    _, version, head_len = _PREFIX.unpack_from(data)
    if version != VERSION:
        raise VersionMismatch(f"format version {version} is not supported (expected {VERSION})")
    start = _PREFIX.size + head_len
    if head_len > len(data) - _PREFIX.size:
        raise TruncatedFile(f"header claims {head_len} bytes but only {len(data) - _PREFIX.size} remain")
    try:
        header = json.loads(data[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestMismatch(f"unreadable header: {exc}") from None
    if not isinstance(header, dict) or not isinstance(header.get("tensors"), list):
        raise ManifestMismatch("header has no tensor manifest")

    payload = memoryview(data)[start:]
    tensors, expected = {}, 0
    for e in header["tensors"]:
        name, dt, shape, offset, nbytes = _check_entry(e, len(payload))
        if offset != expected:
            raise ManifestMismatch(f"{name}: offset {offset}, expected {expected}")
        if name in tensors:
            raise ManifestMismatch(f"duplicate tensor {name}")
        if offset + nbytes > len(payload):
            raise TruncatedFile(f"{name}: payload ends at byte {len(payload)}, tensor needs {offset + nbytes}")
        tensors[name] = np.frombuffer(payload[offset:offset + nbytes], dtype=dt).reshape(shape).copy()
        expected += nbytes
    if expected != len(payload):
        raise ManifestMismatch(f"payload has {len(payload) - expected} unexpected trailing bytes")
    return header, tensors


def read_file(path, magic: bytes):
    with open(path, "rb") as fh:
        return decode(fh.read(), magic)


# -------------------------------------------------------------- checkpoints

def save_checkpoint(params: ModelParams, hp: Hyperparams | None, path, meta: dict | None = None) -> None:
    hp = params.hp if hp is None else hp
    if hp != params.hp:
        raise ManifestMismatch("hyperparameters do not match the parameter set")
    header = {
        "kind": "checkpoint",
        "hyperparams": hp.to_dict(),
        "stats": params.stats.to_dict() if params.stats is not None else None,
        "variant": params.variant,
        "meta": meta or {},
    }
    names = list(hp.shapes())
    atomic_write(path, encode(CHECKPOINT_MAGIC, header, [(n, params.tensors[n]) for n in names]))


def load_checkpoint(path) -> tuple[ModelParams, Hyperparams]:
    header, tensors = read_file(path, CHECKPOINT_MAGIC)
    try:
        hp = Hyperparams(**header["hyperparams"])
        stats = StandardStats.from_dict(header["stats"]) if header.get("stats") else None
        variant = header.get("variant", "bty+hf")
    except (KeyError, TypeError, ValueError, ModelError) as exc:
        raise ManifestMismatch(f"bad checkpoint header: {exc}") from None
    shapes = hp.shapes()
    if set(shapes) != set(tensors):
        raise ManifestMismatch(f"tensor set {sorted(tensors)} does not match hyperparameters")
    for name, (shape, dtype) in shapes.items():
        t = tensors[name]
        if t.shape != shape:
            raise ManifestMismatch(f"{name}: stored shape {t.shape}, model needs {shape}")
        if np.iscomplexobj(t) != np.issubdtype(dtype, np.complexfloating):
            raise ManifestMismatch(f"{name}: stored dtype {t.dtype} is the wrong kind")
        tensors[name] = t.astype(dtype, copy=False)
    try:
        params = ModelParams(hp, tensors, stats, variant)
    except ModelError as exc:
        raise ManifestMismatch(str(exc)) from None
    return params, hp


def checkpoint_meta(path) -> dict:
    header, _ = read_file(path, CHECKPOINT_MAGIC)
    return header.get("meta", {})


# ----------------------------------------------------------------- datasets

@dataclass(eq=False)
class Dataset:
    """Samples on one grid: environment, TL target and optionally encoded inputs.

    ``scalars`` holds per-sample (source_depth, source_freq, c_ref, v_sed).
    """

    grid: Grid2D
    c: np.ndarray            # [S, M, N]
    bathy: np.ndarray        # [S, N]
    scalars: np.ndarray      # [S, 4]
    targets: np.ndarray      # [S, M, N]
    inputs: np.ndarray | None = None   # [S, 4, M, N]
    variant: str | None = None
    config: dict | None = None         # generator settings
    indices: list[int] | None = None   # generator sample indices
    meta: dict | None = None

    def __post_init__(self):
        S = self.targets.shape[0]
        g = self.grid.shape
        checks = {"c": (self.c, (S, *g)), "bathy": (self.bathy, (S, g[1])),
                  "scalars": (self.scalars, (S, 4)), "targets": (self.targets, (S, *g))}
        if self.inputs is not None:
            checks["inputs"] = (self.inputs, (S, 4, *g))
        for name, (a, shape) in checks.items():
            if a.shape[1:] != shape[1:]:
                raise ManifestMismatch(f"{name}: shape {a.shape} does not fit grid {g}")
            if a.shape[0] != S:
                raise CountMismatch(f"{name} has {a.shape[0]} records, targets have {S}")
        if self.indices is not None and len(self.indices) != S:
            raise CountMismatch(f"{len(self.indices)} indices for {S} records")

    def __len__(self):
        return self.targets.shape[0]

    def scenario(self, i: int) -> Scenario:
        sd, f, cref, vsed = (float(v) for v in self.scalars[i])
        return Scenario(SoundSpeedField(self.grid, self.c[i], self.bathy[i], vsed), sd, f, cref)

    def synth_config(self) -> SynthConfig | None:
        return SynthConfig.from_dict(self.config) if self.config else None

    def encoded(self, variant: str) -> np.ndarray:
        if self.inputs is not None and self.variant == variant:
            return self.inputs
        return np.stack([assemble_input(self.scenario(i), variant).channels for i in range(len(self))])

    def pairs(self, variant: str) -> Pairs:
        return Pairs(self.encoded(variant), self.targets)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.grid, self.c[idx], self.bathy[idx], self.scalars[idx], self.targets[idx],
                       None if self.inputs is None else self.inputs[idx], self.variant, self.config,
                       None if self.indices is None else [self.indices[i] for i in idx], self.meta)


def dataset_from_scenarios(scenarios, targets, inputs=None, variant=None, config=None,
                           indices=None, meta=None) -> Dataset:
    scenarios = list(scenarios)
    if not scenarios:
        raise CountMismatch("no samples")
    grid = scenarios[0].grid
    c = np.stack([s.ssf.c for s in scenarios])
    bathy = np.stack([s.ssf.bathy for s in scenarios])
    scalars = np.array([[s.source_depth, s.source_freq, s.c_ref, s.ssf.v_sed] for s in scenarios])
    return Dataset(grid, c, bathy, scalars, np.asarray(targets, dtype=np.float64), inputs, variant,
                   config, None if indices is None else [int(i) for i in indices], meta)


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "kind": "dataset",
        "n_samples": len(ds),
        "grid": ds.grid.to_dict(),
        "variant": ds.variant,
        "config": ds.config,
        "indices": ds.indices,
        "meta": ds.meta or {},
    }
    tensors = [("c", ds.c), ("bathy", ds.bathy), ("scalars", ds.scalars), ("targets", ds.targets)]
    if ds.inputs is not None:
        tensors.append(("inputs", ds.inputs))
    atomic_write(path, encode(DATASET_MAGIC, header, tensors))


def load_dataset(path) -> Dataset:
    header, t = read_file(path, DATASET_MAGIC)
    try:
        n = header["n_samples"]
        grid = Grid2D.from_dict(header["grid"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestMismatch(f"bad dataset header: {exc}") from None
    if not isinstance(n, int) or n < 0:
        raise ManifestMismatch(f"bad sample count {n!r}")
    missing = {"c", "bathy", "scalars", "targets"} - set(t)
    if missing:
        raise ManifestMismatch(f"dataset lacks tensors {sorted(missing)}")
    for name, a in t.items():
        if a.ndim == 0 or a.shape[0] != n:
            raise CountMismatch(f"header declares {n} samples but {name} holds "
                                f"{a.shape[0] if a.ndim else 0} records")
    return Dataset(grid, t["c"], t["bathy"], t["scalars"], t["targets"], t.get("inputs"),
                   header.get("variant"), header.get("config"), header.get("indices"), header.get("meta"))
