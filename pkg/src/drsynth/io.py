"""CSV tables, binary caches and run manifests.

Only the command-line layer calls the writers here; the numerical modules
never touch the filesystem.
"""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import SystemModel
from .synthesis import PolicyTable, StateGrid, ValueGrid

TABLE_VERSION = "1"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence | dict]) -> Path:
    """CSV with a leading ``# table-version`` comment and a fixed column order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# table-version {TABLE_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(c, "") for c in columns]
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def value_grid_table(vg: ValueGrid) -> tuple[list[str], list[list]]:
    nodes = vg.grid.nodes()
    coords = [f"x{d + 1}" for d in range(nodes.shape[1])]
    cols = ["node"] + coords + [f"v{t}" for t in range(vg.stages.shape[0])]
    rows = [[k, *nodes[k], *vg.stages[:, k]] for k in range(nodes.shape[0])]
    return cols, rows


def policy_table(policy: PolicyTable) -> tuple[list[str], list[list]]:
    nodes = policy.grid.nodes()
    coords = [f"x{d + 1}" for d in range(nodes.shape[1])]
    cols = ["node"] + coords + [f"u{t}" for t in range(policy.horizon)]
    rows = []
    for k in range(nodes.shape[0]):
        inputs = [" ".join(repr(float(c)) for c in policy.inputs[policy.indices[t, k]]) for t in range(policy.horizon)]
        rows.append([k, *nodes[k], *inputs])
    return cols, rows


def save_cache(path: Path, key: str, vg: ValueGrid, policy: PolicyTable) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = vg.grid
    arrays = dict(
        key=np.array(key),
        lower=np.array(g.lower),
        upper=np.array(g.upper),
        points=np.array(g.points),
        stages=vg.stages,
        spec_kind=np.array(vg.spec_kind),
        interpolation=np.array(vg.interpolation),
        inputs=policy.inputs,
        indices=policy.indices,
    )
    if vg.action_values is not None:
        arrays["action_values"] = vg.action_values
    with path.open("wb") as fh:
        np.savez_compressed(fh, **arrays)
    return path


def load_cache(path: Path, model: SystemModel, key: str | None = None) -> tuple[ValueGrid, PolicyTable] | None:
    """Cached synthesis result, or None when absent or keyed to a different config."""
    path = Path(path)
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as data:
        if key is not None and str(data["key"]) != key:
            return None
        grid = StateGrid(tuple(data["lower"]), tuple(data["upper"]), tuple(int(p) for p in data["points"]))
        vg = ValueGrid(
            grid,
            data["stages"].copy(),
            str(data["spec_kind"]),
            model,
            str(data["interpolation"]),
            data["action_values"].copy() if "action_values" in data else None,
            data["inputs"].copy(),
        )
        policy = PolicyTable(grid, data["inputs"].copy(), data["indices"].copy())
    return vg, policy


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def versions() -> dict:
    import scipy

    from . import __version__

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "drsynth": __version__}


def write_manifest(path: Path, command: str, config: dict, seed: int, outputs: Sequence[Path], extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "versions": versions(),
        "outputs": [Path(p).name for p in outputs],
        "config": config,
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
