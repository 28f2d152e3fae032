"""Run manifests: the resolved config plus enough metadata to rerun bitwise."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from .config import ConfigError

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    experiment: str
    config: dict[str, str]
    seeds: list[int]
    version: str = __version__
    outputs: list[str] = field(default_factory=list)   # paths relative to out dir

    def to_json(self) -> str:
        return json.dumps({
            "experiment": self.experiment,
            "config": self.config,
            "seeds": self.seeds,
            "version": self.version,
            "outputs": self.outputs,
        }, indent=2, sort_keys=True)


def write_manifest(manifest: RunManifest, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / MANIFEST_NAME
    path.write_text(manifest.to_json() + "\n")
    return path


def load_manifest(path: str | Path) -> RunManifest:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    try:
        raw = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load manifest {p}: {exc}") from exc
    for key in ("experiment", "config", "seeds"):
        if key not in raw:
            raise ConfigError(f"manifest {p} missing field {key!r}")
    return RunManifest(raw["experiment"], dict(raw["config"]),
                       [int(s) for s in raw["seeds"]],
                       raw.get("version", "unknown"),
                       list(raw.get("outputs", [])))
