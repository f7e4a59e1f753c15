"""Run manifests: enough provenance to re-run a command bitwise."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""

    def record_input(self, path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def write(self, output_path) -> str:
        from . import __version__

        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "version": __version__,
            "started": self.started,
            "finished": self.finished,
        }
        path = f"{output_path}.manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()) + "Z"
