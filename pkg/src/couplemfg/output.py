"""CSV export and run manifests.

Every run writes plain CSV tables plus one manifest.json recording the
fully resolved configuration, the package version, the seed and a
sha256 checksum per output file.  Floats are written with repr, which
round-trips exactly, so (config, seed, version) determines every byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = ["Table", "RunManifest", "export_csv", "write_manifest", "read_manifest"]


@dataclass(frozen=True)
class Table:
    """Rectangular table: a header tuple plus row tuples."""

    header: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        width = len(self.header)
        if width == 0:
            raise ValueError("table needs at least one column")
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise ValueError(f"row {i} has {len(row)} cells, header has {width}")


def _format_cell(value) -> str:
    if isinstance(value, str):
        if "," in value or "\n" in value:
            raise ValueError(f"cell text may not contain commas or newlines: {value!r}")
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    raise ValueError(f"cannot format cell of type {type(value).__name__}")


def export_csv(table: Table, path) -> str:
    """Write one table as CSV and return the sha256 of the file bytes.

    One header line, comma separators, newline-terminated lines; float
    cells use repr so reading them back reproduces the exact value.  An
    empty table produces a header-only file.
    """
    path = Path(path)
    lines = [",".join(table.header)]
    lines.extend(",".join(_format_cell(cell) for cell in row) for row in table.rows)
    data = ("\n".join(lines) + "\n").encode("utf-8")
    try:
        path.write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from None
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce one run and verify its outputs.

    config holds the fully resolved flat key=value form of the spec
    (defaults expanded), outputs maps each written file name to the
    sha256 of its bytes.
    """

    name: str
    kind: str
    version: str
    seed: int
    config: dict[str, str]
    outputs: dict[str, str]
    wall_clock_s: float


def write_manifest(manifest: RunManifest, path) -> None:
    path = Path(path)
    payload = asdict(manifest)
    try:
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write manifest {path}: {exc}") from None


def read_manifest(path) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    required = {"name", "kind", "version", "seed", "config", "outputs", "wall_clock_s"}
    missing = required - payload.keys()
    if missing:
        raise ConfigError(f"manifest {path} is missing fields: {sorted(missing)}")
    return RunManifest(
        name=payload["name"],
        kind=payload["kind"],
        version=payload["version"],
        seed=int(payload["seed"]),
        config=dict(payload["config"]),
        outputs=dict(payload["outputs"]),
        wall_clock_s=float(payload["wall_clock_s"]),
    )
