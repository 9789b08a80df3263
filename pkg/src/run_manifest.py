# src/run_manifest.py
"""
RunManifest: one JSON record per CLI invocation, written atomically to
`<out>/manifest-<command>.json` when the command finishes.

`run_id` hashes the command and the resolved config, so two runs with the
same inputs and seeds get the same id; only the timestamps differ.
"""

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .tensor_engine import atomic_write_bytes


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def input_fingerprint(path: str | Path) -> str:
    """sha256 of a file, or of every file under a directory (relative path + content)."""
    path = Path(path)
    if path.is_file():
        return file_digest(path)
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(p.relative_to(path).as_posix().encode("utf-8"))
        h.update(bytes.fromhex(file_digest(p)))
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    @property
    def run_id(self) -> str:
        payload = json.dumps({"command": self.command, "config": self.config}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(Path(path).as_posix())] = input_fingerprint(path)

    def add_outputs(self, *paths: str | Path) -> None:
        for p in paths:
            key = Path(p).as_posix()
            if key not in self.outputs:
                self.outputs.append(key)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": sorted(self.outputs),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def write(self, out_dir: str | Path) -> Path:
        self.finished_at = _now()
        path = Path(out_dir) / f"manifest-{self.command}.json"
        atomic_write_bytes(path, (json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n").encode("utf-8"))
        return path
