"""Deterministic output helpers: CSV tables and JSON run manifests.

Floats are written with repr (shortest round-trip form), so identical
runs produce byte-identical files.  Every output directory carries a
manifest.json with the resolved configuration and a content hash of the
package sources; directories with an existing manifest are refused
unless overwriting is forced.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

_PKG_DIR = Path(__file__).resolve().parent
_BUILD_HASH: str | None = None


def build_hash() -> str:
    """Stable hash of the package sources (first 16 hex digits)."""
    global _BUILD_HASH
    if _BUILD_HASH is None:
        digest = hashlib.sha256()
        for path in sorted(_PKG_DIR.rglob("*")):
            if path.suffix in (".py", ".pyx") and path.is_file():
                digest.update(path.relative_to(_PKG_DIR).as_posix().encode())
                digest.update(path.read_bytes())
        _BUILD_HASH = digest.hexdigest()[:16]
    return _BUILD_HASH


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, fieldnames: list[str], rows: list[dict]) -> None:
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_format(row[name]) for name in fieldnames))
    Path(path).write_text("\n".join(lines) + "\n")


def write_columns_csv(path, header: list[str], columns) -> None:
    """Write same-length 1-d arrays as CSV columns."""
    columns = [np.asarray(col) for col in columns]
    n = len(columns[0])
    if any(len(col) != n for col in columns):
        raise ValueError("columns must have equal length")
    lines = [",".join(header)]
    for i in range(n):
        lines.append(",".join(_format(col[i]) for col in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def read_columns_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = data.reshape(0, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def prepare_outdir(out_dir, force: bool = False) -> Path:
    out = Path(out_dir)
    manifest = out / "manifest.json"
    if manifest.exists() and not force:
        raise ValueError(
            f"{out} already holds results ({manifest}); pass --force to overwrite"
        )
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out_dir, command: str, config: dict) -> None:
    from . import __version__

    payload = {
        "command": command,
        "config": {k: config[k] for k in sorted(config)},
        "version": __version__,
        "build": build_hash(),
        "backend": _backend(),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_manifest(out_dir) -> dict:
    return json.loads((Path(out_dir) / "manifest.json").read_text())


def _backend() -> str:
    from . import _kernels

    return _kernels.BACKEND
