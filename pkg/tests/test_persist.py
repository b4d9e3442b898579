import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tlfno.encodings import StandardStats
from tlfno.fno import Hyperparams, init_params
from tlfno.grid import synth_environment
from tlfno.metrics import rmse
from tlfno.persist import (CHECKPOINT_MAGIC, DATASET_MAGIC, BadMagic, CountMismatch, ManifestMismatch,
                           PersistError, TruncatedFile, VersionMismatch, dataset_from_scenarios, decode, encode,
                           load_checkpoint, load_dataset, save_checkpoint, save_dataset)


@pytest.fixture
def params():
    stats = StandardStats((1.0, 2.0, 3.0, 4.0), (0.5, 0.6, 0.7, 0.8), 70.0, 12.0)
    return init_params(Hyperparams(2, 3, 2, 2), seed=1, stats=stats, variant="bty")


@pytest.fixture
def dataset(synth_cfg, rng):
    scns = [synth_environment(synth_cfg, i) for i in range(3)]
    return dataset_from_scenarios(scns, rng.normal(60, 5, size=(3, *synth_cfg.grid.shape)),
                                  config=synth_cfg.to_dict(), indices=range(3))


def test_checkpoint_roundtrip_bit_exact(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    back, hp = load_checkpoint(path)
    assert hp == params.hp and back.stats == params.stats and back.variant == "bty"
    for k, t in params.tensors.items():
        assert back.tensors[k].dtype == t.dtype
        assert back.tensors[k].tobytes() == t.tobytes()


def test_checkpoint_layout(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    raw = path.read_bytes()
    magic, version, hlen = struct.unpack_from("<4sIQ", raw)
    assert magic == b"HFNO" and version == 1
    header = json.loads(raw[16:16 + hlen])
    offsets = [e["offset"] for e in header["tensors"]]
    assert offsets == sorted(set(offsets))
    assert len(raw) - 16 - hlen == sum(e["nbytes"] for e in header["tensors"])
    dtypes = {e["name"]: e["dtype"] for e in header["tensors"]}
    assert dtypes["layers.0.R"] == "c128" and dtypes["lift.w"] == "f64"


def test_bad_magic(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(BadMagic):
        load_checkpoint(path)


def test_version_rejected(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch, match="99"):
        load_checkpoint(path)


def test_truncated_payload(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(TruncatedFile):
        load_checkpoint(path)


def test_shape_mismatch_against_hyperparams(tmp_path, params):
    other = init_params(Hyperparams(2, 4, 2, 2))
    header = {"kind": "checkpoint", "hyperparams": params.hp.to_dict(), "stats": None, "variant": "bty+hf",
              "meta": {}}
    path = tmp_path / "m.ckpt"
    path.write_bytes(encode(CHECKPOINT_MAGIC, header, list(other.tensors.items())))
    with pytest.raises(ManifestMismatch):
        load_checkpoint(path)


def test_trailing_bytes_rejected(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ManifestMismatch):
        load_checkpoint(path)


def test_all_dtypes_roundtrip():
    tensors = [("a", np.arange(3, dtype=np.float32)), ("b", np.ones((2, 2))),
               ("c", np.array([1 + 2j], dtype=np.complex64)), ("d", np.array([[3 - 1j]]))]
    header, back = decode(encode(b"TEST", {}, tensors), b"TEST")
    assert [e["dtype"] for e in header["tensors"]] == ["f32", "f64", "c64", "c128"]
    for name, t in tensors:
        assert back[name].dtype == t.dtype and back[name].tobytes() == t.tobytes()


def test_unsupported_dtype():
    with pytest.raises(PersistError):
        encode(b"TEST", {}, [("i", np.arange(3))])


def test_dataset_roundtrip_bit_exact(tmp_path, dataset):
    path = tmp_path / "d.hfnd"
    save_dataset(dataset, path)
    back = load_dataset(path)
    for k in ("c", "bathy", "scalars", "targets"):
        assert getattr(back, k).tobytes() == getattr(dataset, k).tobytes()
    assert back.grid == dataset.grid and back.config == dataset.config and back.indices == [0, 1, 2]
    s0, s1 = back.scenario(1), dataset.scenario(1)
    assert np.array_equal(s0.ssf.c, s1.ssf.c) and s0.source_freq == s1.source_freq


def test_dataset_downstream_metrics_identical(tmp_path, dataset, rng):
    pred = rng.normal(60, 5, size=dataset.targets.shape)
    path = tmp_path / "d.hfnd"
    save_dataset(dataset, path)
    back = load_dataset(path)
    assert [rmse(p, t) for p, t in zip(pred, back.targets)] == [rmse(p, t) for p, t in zip(pred, dataset.targets)]


def test_dataset_count_mismatch(tmp_path, dataset):
    header = {"kind": "dataset", "n_samples": 5, "grid": dataset.grid.to_dict()}
    sub = dataset.subset([0, 1, 2, 0])
    tensors = [("c", sub.c), ("bathy", sub.bathy), ("scalars", sub.scalars), ("targets", sub.targets)]
    path = tmp_path / "d.hfnd"
    path.write_bytes(encode(DATASET_MAGIC, header, tensors))
    with pytest.raises(CountMismatch, match="5"):
        load_dataset(path)


def test_dataset_with_inputs(tmp_path, dataset):
    x = dataset.encoded("bty+hf")
    ds = dataset_from_scenarios([dataset.scenario(i) for i in range(3)], dataset.targets, x, "bty+hf")
    path = tmp_path / "d.hfnd"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.inputs.tobytes() == x.tobytes()
    assert back.encoded("bty+hf") is back.inputs


def test_wrong_magic_for_kind(tmp_path, dataset):
    path = tmp_path / "d.hfnd"
    save_dataset(dataset, path)
    with pytest.raises(BadMagic):
        load_checkpoint(path)


def test_failed_write_leaves_nothing(tmp_path, params):
    path = tmp_path / "m.ckpt"
    params.tensors["lift.w"] = params.tensors["lift.w"].astype(np.int64)
    with pytest.raises(PersistError):
        save_checkpoint(params, params.hp, path)
    assert list(tmp_path.iterdir()) == []


def test_truncation_fuzz(tmp_path, params, dataset):
    ck, ds = tmp_path / "m.ckpt", tmp_path / "d.hfnd"
    save_checkpoint(params, params.hp, ck)
    save_dataset(dataset, ds)
    rng = np.random.default_rng(0)
    for path, loader in ((ck, load_checkpoint), (ds, load_dataset)):
        raw = path.read_bytes()
        cut = tmp_path / "cut"
        for n in rng.integers(0, len(raw), size=200):
            cut.write_bytes(raw[:n])
            with pytest.raises(PersistError):
                loader(cut)


@settings(max_examples=60, deadline=None)
@given(pos=st.integers(0, 400), val=st.integers(0, 255))
def test_corruption_never_crashes(tmp_path_factory, pos, val):
    params = init_params(Hyperparams(1, 2, 2, 2))
    path = tmp_path_factory.mktemp("c") / "m.ckpt"
    save_checkpoint(params, params.hp, path)
    raw = bytearray(path.read_bytes())
    raw[pos % len(raw)] = val
    path.write_bytes(bytes(raw))
    try:
        load_checkpoint(path)
    except PersistError:
        pass
