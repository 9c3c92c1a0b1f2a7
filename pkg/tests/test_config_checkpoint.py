import json
import struct
from dataclasses import replace

import numpy as np
import pytest

from optoback.checkpoint import MAGIC, Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from optoback.config import SEED_ENV, ConfigError, ExperimentConfig, dump_toml, load_config
from optoback.tasks import TaskKind
from optoback.training import TrainConfig, train_bp
from optoback.types import Fidelity

SMALL = """
seed = 3
output_dir = "out"

[task]
kind = "vardel5"

[reservoir]
n_virtual_nodes = 6
feedback_gain = 0.9

[train]
iterations = 12
seq_length = 20
eval_every = 6
eval_length = 100
washout = 5
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


class TestConfig:
    def test_load(self, small_cfg, monkeypatch):
        monkeypatch.delenv(SEED_ENV, raising=False)
        cfg = load_config(small_cfg)
        assert cfg.task.kind is TaskKind.VARDEL5
        assert cfg.reservoir.n_virtual_nodes == 6 and cfg.reservoir.fidelity is Fidelity.IDEAL
        assert cfg.seed == 3 and cfg.train.seed == 3 and cfg.train.iterations == 12

    def test_seed_precedence(self, small_cfg, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "11")
        assert load_config(small_cfg).train.seed == 11
        assert load_config(small_cfg, seed=5).train.seed == 5
        monkeypatch.setenv(SEED_ENV, "eleven")
        with pytest.raises(ConfigError):
            load_config(small_cfg)

    @pytest.mark.parametrize(
        "text",
        [
            "typo = 1\n" + SMALL,
            SMALL.replace("washout = 5", "washout = 5\nlearning_rate = 0.1"),
            SMALL + "\n[hardware]\nnoize_std = 0.1\n",
            SMALL + "\n[rc]\nmu = [1.0]\n",
            SMALL + "\n[trainer]\niterations = 1\n",
        ],
    )
    def test_unknown_keys_rejected(self, tmp_path, text):
        p = tmp_path / "bad.toml"
        p.write_text(text)
        with pytest.raises(ConfigError, match="unknown"):
            load_config(p)

    def test_invalid_values(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text(SMALL.replace("feedback_gain = 0.9", "feedback_gain = 0.9\nfidelity = \"analog\""))
        with pytest.raises(ConfigError):
            load_config(p)
        p.write_text(SMALL.replace('kind = "vardel5"', 'kind = "unknown_task"'))
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_dict_and_toml_round_trip(self, small_cfg, tmp_path):
        cfg = load_config(small_cfg, seed=3)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        p = tmp_path / "again.toml"
        p.write_text(dump_toml(cfg.to_dict()))
        assert load_config(p, seed=3) == cfg

    @pytest.mark.parametrize("name", ["narma10", "vardel5", "vardel5_hardware", "synthclass"])
    def test_shipped_configs_load(self, name):
        from pathlib import Path

        cfg = load_config(Path(__file__).parent.parent / "configs" / f"{name}.toml", seed=0)
        assert cfg.task.kind.value == name.split("_")[0]


def trained_checkpoint(small_cfg):
    cfg = load_config(small_cfg, seed=3)
    _, _, state = train_bp(cfg.task, cfg.train, cfg.reservoir, stop_at=7)
    return cfg, Checkpoint.from_train_state(cfg, state)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, small_cfg, tmp_path):
        cfg, ckpt = trained_checkpoint(small_cfg)
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, ckpt)
        back = load_checkpoint(path)
        assert back.config == cfg and back.iteration == 7 and back.kind == "bp"
        for a, b in zip(ckpt.masks, back.masks):
            assert a.tobytes() == b.tobytes()
        for a, b in zip(ckpt.velocity, back.velocity):
            assert a.tobytes() == b.tobytes()
        assert back.rng_states == ckpt.rng_states
        assert back.error_std == ckpt.error_std and back.bias_drift == ckpt.bias_drift

    def test_resume_from_file_matches_uninterrupted(self, small_cfg, tmp_path):
        cfg, ckpt = trained_checkpoint(small_cfg)
        save_checkpoint(tmp_path / "c.ckpt", ckpt)
        state = load_checkpoint(tmp_path / "c.ckpt").train_state()
        resumed, _, _ = train_bp(cfg.task, cfg.train, cfg.reservoir, state=state)
        full, _, _ = train_bp(cfg.task, cfg.train, cfg.reservoir)
        assert resumed.flat().tobytes() == full.flat().tobytes()

    def test_deterministic_bytes(self, small_cfg, tmp_path):
        save_checkpoint(tmp_path / "a.ckpt", trained_checkpoint(small_cfg)[1])
        save_checkpoint(tmp_path / "b.ckpt", trained_checkpoint(small_cfg)[1])
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def _header(self, raw):
        (n,) = struct.unpack("<Q", raw[len(MAGIC) : len(MAGIC) + 8])
        start = len(MAGIC) + 8
        return json.loads(raw[start : start + n]), raw[start + n :]

    def _rewrite(self, path, header, payload):
        blob = json.dumps(header, sort_keys=True).encode()
        path.write_bytes(MAGIC + struct.pack("<Q", len(blob)) + blob + payload)

    def test_declares_version_and_endianness(self, small_cfg, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, trained_checkpoint(small_cfg)[1])
        header, _ = self._header(path.read_bytes())
        assert header["format_version"] == 1 and header["byte_order"] == "little"
        assert all(d["dtype"] == "<f8" for d in header["arrays"].values())

    @pytest.mark.parametrize(
        "field,value,match",
        [("format_version", 2, "version"), ("byte_order", "big", "byte order"), ("payload_sha256", "0" * 64, "checksum")],
    )
    def test_rejects_incompatible(self, small_cfg, tmp_path, field, value, match):
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, trained_checkpoint(small_cfg)[1])
        header, payload = self._header(path.read_bytes())
        header[field] = value
        self._rewrite(path, header, payload)
        with pytest.raises(CheckpointError, match=match):
            load_checkpoint(path)

    def test_rejects_garbage_and_truncation(self, small_cfg, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"hello")
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)
        path = tmp_path / "c.ckpt"
        save_checkpoint(path, trained_checkpoint(small_cfg)[1])
        bad.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(bad)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")

    def test_rc_checkpoint_cannot_resume(self, small_cfg, tmp_path):
        cfg, ckpt = trained_checkpoint(small_cfg)
        rc = Checkpoint(config=cfg, masks=ckpt.masks, kind="rc", feedback_gain=0.5)
        save_checkpoint(tmp_path / "rc.ckpt", rc)
        back = load_checkpoint(tmp_path / "rc.ckpt")
        assert back.feedback_gain == 0.5 and back.velocity is None
        with pytest.raises(CheckpointError):
            back.train_state()
