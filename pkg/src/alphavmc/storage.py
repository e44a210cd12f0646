#!/usr/bin/env python
import csv
import io
import json
import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from xdg import XDG_DATA_HOME

from .base import WavefunctionModel
from .errors import CheckpointError
from .logging_config import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def default_output_dir(task: str) -> Path:
    return XDG_DATA_HOME / "alphavmc" / "runs" / task


def atomic_write_text(path: Path, text: str):
    """Write through a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def checkpoint_record(model: WavefunctionModel, **metadata) -> Dict[str, Any]:
    return {"format_version": CHECKPOINT_FORMAT_VERSION, **model.to_dict(), "metadata": metadata}


def save_checkpoint(path: Path, model: WavefunctionModel, **metadata):
    # repr-exact floats: json writes the shortest round-tripping form
    atomic_write_text(Path(path), json.dumps(checkpoint_record(model, **metadata), indent=2))
    logger.debug(f"Checkpoint written to {path}")


def load_checkpoint(path) -> Dict[str, Any]:
    """Raw checkpoint record; model reconstruction lives in the model registry."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(data, dict):
        raise CheckpointError(f"checkpoint {path} is not a JSON object")
    version = data.pop("format_version", None)
    data.pop("metadata", None)
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"checkpoint {path} has unsupported format_version {version!r}")
    for key in ("kind", "n_sites", "params"):
        if key not in data:
            raise CheckpointError(f"checkpoint {path} lacks '{key}'")
    return data


class RunStorage:
    """Output directory of one run; snapshots are replaced atomically and the trace is appended."""

    def __init__(self, output_dir: Optional[Path] = None, task: str = "gs"):
        if output_dir is None:
            output_dir = default_output_dir(task)
        self.output_dir = Path(output_dir)
        self.trace_file = self.output_dir / "trace.jsonl"
        self.summary_file = self.output_dir / "summary.json"
        self.checkpoint_file = self.output_dir / "checkpoint.json"
        self.scan_file = self.output_dir / "scan.csv"
        self._trace_started = False

        self._ensure_output_dir()

    def _ensure_output_dir(self):
        if not self.output_dir.exists():
            self.output_dir.mkdir(parents=True, exist_ok=True)

    def append_trace(self, record: Dict[str, Any]):
        """Add one telemetry line; the first call of a run truncates any older trace."""
        mode = "a" if self._trace_started else "w"
        with self.trace_file.open(mode, encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._trace_started = True

    def write_summary(self, summary: Dict[str, Any]):
        payload = {**summary, "written_at": datetime.now().isoformat()}
        atomic_write_text(self.summary_file, json.dumps(payload, indent=2, sort_keys=True))

    def save_checkpoint(self, model: WavefunctionModel, **metadata):
        save_checkpoint(self.checkpoint_file, model, **metadata)

    def write_scan(self, rows: Sequence[Dict[str, Any]], fields: Sequence[str]):
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in fields})
        atomic_write_text(self.scan_file, buffer.getvalue())
