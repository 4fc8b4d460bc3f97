"""Model checkpoint format."""
import json
import struct

import numpy as np
import pytest

from ssvepnet.nnet.checkpoint import (
    MAGIC,
    CheckpointError,
    checkpoint_bytes,
    load_checkpoint,
    save_checkpoint,
)
from ssvepnet.nnet.model import BUFFER_ORDER, PARAM_ORDER, CompactCNN, ModelConfig

CFG = ModelConfig(n_channels=3, n_samples=64, n_classes=4, F1=4, F2=5, D=2,
                  temporal_kernel_len=16, separable_kernel_len=8)


@pytest.fixture
def model():
    m = CompactCNN(CFG, seed=11)
    m.buffers["bn2_var"] *= 1.7
    return m


class TestCheckpoint:
    def test_round_trip(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "m.ckpt", {"note": "x"})
        back, meta = load_checkpoint(tmp_path / "m.ckpt")
        assert back.config == CFG and meta == {"note": "x"}
        for k in PARAM_ORDER:
            assert back.params[k].tobytes() == model.params[k].tobytes()
        for k in BUFFER_ORDER:
            assert back.buffers[k].tobytes() == model.buffers[k].tobytes()
        x = np.random.default_rng(0).standard_normal((3, 3, 64)).astype(np.float32)
        np.testing.assert_array_equal(back.predict_proba(x), model.predict_proba(x))

    def test_layout(self, model):
        raw = checkpoint_bytes(model)
        assert raw[:8] == MAGIC == b"SSVEPNN1"
        (hlen,) = struct.unpack_from("<Q", raw, 8)
        header = json.loads(raw[16:16 + hlen])
        names = [b["name"] for b in header["blocks"]]
        assert names == list(PARAM_ORDER) + list(BUFFER_ORDER)
        payload = np.frombuffer(raw[16 + hlen:], "<f4")
        first = model.params["conv1"].ravel()
        np.testing.assert_array_equal(payload[:first.size], first)

    def test_bytes_deterministic(self, model):
        assert checkpoint_bytes(model, {"a": 1}) == checkpoint_bytes(model.copy(), {"a": 1})

    def test_bad_magic(self, model, tmp_path):
        p = tmp_path / "m.ckpt"
        p.write_bytes(b"NOTMAGIC" + checkpoint_bytes(model)[8:])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_truncated(self, model, tmp_path):
        p = tmp_path / "m.ckpt"
        p.write_bytes(checkpoint_bytes(model)[:-4])
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_corrupt_payload(self, model, tmp_path):
        raw = bytearray(checkpoint_bytes(model))
        raw[-2] ^= 0x55
        p = tmp_path / "m.ckpt"
        p.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_no_partial_file_on_success(self, model, tmp_path):
        save_checkpoint(model, tmp_path / "m.ckpt")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["m.ckpt"]
