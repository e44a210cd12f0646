import csv
import json

import numpy as np
import pytest

from alphavmc.config import ModelRegistry
from alphavmc.errors import CheckpointError
from alphavmc.models.rbm import RBMModel
from alphavmc.storage import (
    CHECKPOINT_FORMAT_VERSION,
    RunStorage,
    atomic_write_text,
    default_output_dir,
    load_checkpoint,
    save_checkpoint,
)


@pytest.fixture
def model():
    return RBMModel.initialize(5, 3, np.random.default_rng(42), scale=0.7)


class TestCheckpoints:
    def test_roundtrip_is_bit_exact(self, tmp_path, model):
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, model, final_alpha=1.23)
        rebuilt = ModelRegistry.from_dict(load_checkpoint(path))
        assert rebuilt.n_hidden == 3
        np.testing.assert_array_equal(rebuilt.params, model.params)

    def test_metadata_is_kept_apart(self, tmp_path, model):
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, model, final_alpha=1.23)
        raw = json.loads(path.read_text())
        assert raw["format_version"] == CHECKPOINT_FORMAT_VERSION
        assert raw["metadata"] == {"final_alpha": 1.23}
        assert "metadata" not in load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "nope.json")

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path, model):
        path = tmp_path / "future.json"
        path.write_text(json.dumps({**model.to_dict(), "format_version": 99}))
        with pytest.raises(CheckpointError, match="format_version"):
            load_checkpoint(path)

    def test_missing_parameters(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"format_version": 1, "kind": "complex-RBM", "n_sites": 5}))
        with pytest.raises(CheckpointError, match="params"):
            load_checkpoint(path)


def read_trace(storage):
    return [json.loads(line) for line in storage.trace_file.read_text().splitlines()]


class TestRunStorage:
    def test_trace_lines(self, tmp_path):
        storage = RunStorage(tmp_path / "run")
        storage.append_trace({"step": 0, "energy": -1.0})
        storage.append_trace({"step": 1, "energy": -1.5})
        assert read_trace(storage) == [{"step": 0, "energy": -1.0}, {"step": 1, "energy": -1.5}]
        assert storage.trace_file.read_text().count("\n") == 2

    def test_trace_is_appended_in_place(self, tmp_path):
        storage = RunStorage(tmp_path)
        storage.append_trace({"step": 0})
        with storage.trace_file.open("a") as handle:
            handle.write('{"marker": true}\n')
        storage.append_trace({"step": 1})
        assert read_trace(storage) == [{"step": 0}, {"marker": True}, {"step": 1}]

    def test_new_run_replaces_old_trace(self, tmp_path):
        RunStorage(tmp_path).append_trace({"step": 0, "run": "old"})
        fresh = RunStorage(tmp_path)
        fresh.append_trace({"step": 0, "run": "new"})
        assert read_trace(fresh) == [{"run": "new", "step": 0}]

    def test_summary(self, tmp_path):
        storage = RunStorage(tmp_path)
        storage.write_summary({"task": "gs", "final_energy": -2.0})
        summary = json.loads(storage.summary_file.read_text())
        assert summary["final_energy"] == -2.0
        assert "written_at" in summary

    def test_scan_table(self, tmp_path):
        storage = RunStorage(tmp_path)
        storage.write_scan(
            [{"label": "q_alpha", "alpha": 1.0, "L_IS": 0.5}, {"label": "envelope", "alpha": None, "L_IS": 0.9}],
            ("label", "alpha", "L_IS"),
        )
        with storage.scan_file.open() as handle:
            rows = list(csv.DictReader(handle))
        assert rows[0] == {"label": "q_alpha", "alpha": "1.0", "L_IS": "0.5"}
        assert rows[1]["alpha"] == ""

    def test_checkpoint_file(self, tmp_path, model):
        storage = RunStorage(tmp_path)
        storage.save_checkpoint(model)
        assert load_checkpoint(storage.checkpoint_file)["kind"] == "complex-RBM"


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text() == "second"
    assert [p.name for p in target.parent.iterdir()] == ["out.txt"]


def test_default_output_dir():
    path = default_output_dir("gs")
    assert path.parts[-3:] == ("alphavmc", "runs", "gs")
