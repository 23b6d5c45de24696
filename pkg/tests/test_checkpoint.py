"""Binary container: round-trips, byte stability, corruption errors."""

import numpy as np
import pytest

from pondergrid import checkpoint
from pondergrid.model import ModelConfig, init_params


def test_roundtrip_preserves_values_and_order(tmp_path, rng):
    arrays = {
        "a": rng.random((3, 4)).astype(np.float32),
        "b": rng.random(7),
        "ids": np.arange(5, dtype=np.int64),
    }
    path = tmp_path / "x.ckpt"
    checkpoint.save(path, arrays, meta={"note": "hello", "k": 3})
    loaded, meta = checkpoint.load(path)
    assert list(loaded.keys()) == ["a", "b", "ids"]
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])
        assert loaded[name].dtype == arrays[name].dtype
    assert meta == {"note": "hello", "k": 3}


def test_byte_stable_across_saves(tmp_path, rng):
    arrays = {"w": rng.random((5, 5)), "b": rng.random(5)}
    p1, p2 = tmp_path / "1.ckpt", tmp_path / "2.ckpt"
    checkpoint.save(p1, arrays)
    checkpoint.save(p2, arrays)
    assert p1.read_bytes() == p2.read_bytes()


def test_model_params_roundtrip(tmp_path):
    cfg = ModelConfig(hidden=32, heads=2, head_dim=16, vocab=6, mem_tokens=2,
                      max_ponder=3, seq_len=16)
    params = init_params(cfg, seed=5)
    path = tmp_path / "params.ckpt"
    checkpoint.save(path, params.state_dict(), meta={"k_train": 3})
    arrays, meta = checkpoint.load(path)
    fresh = init_params(cfg, seed=99)
    fresh.load_state(arrays)
    for name, t in params.items():
        np.testing.assert_array_equal(fresh[name].data, t.data)
    assert meta["k_train"] == 3


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.load(path)


def test_truncated_data_rejected(tmp_path, rng):
    path = tmp_path / "t.ckpt"
    checkpoint.save(path, {"w": rng.random(100)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-40])
    with pytest.raises(checkpoint.CheckpointError, match="truncated"):
        checkpoint.load(path)


def test_missing_param_on_load_state(tmp_path):
    cfg = ModelConfig(hidden=32, heads=2, head_dim=16, vocab=6, mem_tokens=2,
                      max_ponder=3, seq_len=16)
    params = init_params(cfg, seed=0)
    with pytest.raises(KeyError, match="missing parameter"):
        params.load_state({"tok_emb": params["tok_emb"].data})
