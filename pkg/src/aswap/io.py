"""Artifact writing: CSV tables, JSON summaries and the run manifest.

Data files are deterministic functions of the configuration.  Anything
that varies between runs (wall time, host, library versions) goes into the
separate ``.manifest.json`` file.
"""

from __future__ import annotations

import json
import math
import platform
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__


def format_cell(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.15g}"
    return str(x)


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Comma-separated table with a header row and 15-significant-digit floats."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [format_cell(x) for x in row]
            if len(cells) != len(header):
                raise ValueError(f"row has {len(cells)} cells, header has {len(header)}")
            fh.write(",".join(_quote(c) for c in cells) + "\n")


def _quote(cell: str) -> str:
    if any(ch in cell for ch in ',"\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; strings keep them readable and round-trippable
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path: Path, obj: Any) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


@dataclass(frozen=True)
class ArtifactPaths:
    csv: Path
    json: Path
    manifest: Path


def artifact_paths(out_dir: Path, subcommand: str, config_hash: str) -> ArtifactPaths:
    stem = f"{subcommand}-{config_hash}"
    return ArtifactPaths(out_dir / f"{stem}.csv", out_dir / f"{stem}.json", out_dir / f"{stem}.manifest.json")


def _version(dist: str) -> str:
    try:
        return metadata.version(dist)
    except metadata.PackageNotFoundError:
        return "unknown"


def library_versions() -> dict[str, str]:
    out = {"python": sys.version.split()[0], "platform": platform.platform(), "aswap": __version__}
    for dist in ("numpy", "scipy", "pydantic", "PyYAML"):
        out[dist] = _version(dist)
    return out


def write_manifest(path: Path, subcommand: str, config: dict, config_hash: str, seed: int, threads: int, wall_time: float, artifacts: ArtifactPaths, extra: Optional[dict] = None) -> None:
    write_json(
        path,
        {
            **(extra or {}),
            "subcommand": subcommand,
            "config": config,
            "config_hash": config_hash,
            "seed": seed,
            "threads": threads,
            "wall_time_s": wall_time,
            "versions": library_versions(),
            "artifacts": [artifacts.csv.name, artifacts.json.name],
        },
    )
