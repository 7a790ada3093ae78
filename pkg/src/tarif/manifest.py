"""Experiment manifests and byte-exact replay comparison.

Every CLI command resolves its full configuration, writes it to
``manifest.json`` in the output directory before any compute, and
finalizes the timestamps afterwards.  Re-running a command from a manifest
must reproduce every numeric output byte for byte; only timestamps, timing
columns, and rendered figures are exempt from the comparison.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConfigError

MANIFEST_NAME = "manifest.json"

# Keys/columns that legitimately differ between replays.
TIMING_KEYS = {"started_at", "finished_at", "seconds", "wall_clock_seconds",
               "softmax_seconds", "epoch_seconds"}
TIMING_CSV_COLUMNS = {"seconds", "softmax_seconds"}
SKIP_SUFFIXES = (".png",)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def new_manifest(command: str, config: dict) -> dict:
    return {
        "command": command,
        "config": dict(sorted(config.items())),
        "seed": config.get("seed"),
        "artifacts": {},
        "version": __version__,
        "started_at": _now(),
        "finished_at": None,
    }


def write_manifest(out_dir, manifest: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path

def finalize_manifest(out_dir, manifest: dict) -> None:
    manifest["finished_at"] = _now()
    write_manifest(out_dir, manifest)


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    for key in ("command", "config"):
        if key not in manifest:
            raise ConfigError(f"manifest {path} is missing the {key!r} field")
    return manifest


# ---------------------------------------------------------------------------
# Replay comparison.

def _canonical_json(value):
    if isinstance(value, dict):
        return {k: _canonical_json(v) for k, v in sorted(value.items())
                if k not in TIMING_KEYS}
    if isinstance(value, list):
        return [_canonical_json(v) for v in value]
    return value


def _canonical_csv(path: Path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return rows
    header = rows[0]
    drop = [i for i, name in enumerate(header) if name in TIMING_CSV_COLUMNS]
    if not drop:
        return rows
    keep = [i for i in range(len(header)) if i not in drop]
    return [[row[i] for i in keep] for row in rows]


def _canonical_file(path: Path):
    if path.suffix == ".json":
        return _canonical_json(json.loads(path.read_text(encoding="utf-8")))
    if path.suffix == ".jsonl":
        return [_canonical_json(json.loads(line))
                for line in path.read_text(encoding="utf-8").splitlines() if line]
    if path.suffix == ".csv":
        return _canonical_csv(path)
    return path.read_bytes()


def replay_differences(dir_a, dir_b) -> list[str]:
    """Paths whose canonical content differs between two output directories."""
    dir_a, dir_b = Path(dir_a), Path(dir_b)

    def listing(d: Path) -> dict[str, Path]:
        out = {}
        for p in sorted(d.rglob("*")):
            if p.is_file() and not p.name == MANIFEST_NAME \
                    and not any(p.name.endswith(s) for s in SKIP_SUFFIXES):
                out[str(p.relative_to(d))] = p
        return out

    files_a, files_b = listing(dir_a), listing(dir_b)
    diffs = [f"only in one run: {name}"
             for name in sorted(set(files_a) ^ set(files_b))]
    for name in sorted(set(files_a) & set(files_b)):
        if _canonical_file(files_a[name]) != _canonical_file(files_b[name]):
            diffs.append(name)
    return diffs


def replay_equal(dir_a, dir_b) -> bool:
    return not replay_differences(dir_a, dir_b)
