"""Plain-text column files with ``#`` metadata, JSON run summaries, config echoes."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path

from threshold_bell import __version__


class OutputError(OSError):
    pass


def fmt(value: object) -> str:
    if value is None:
        return "nan"
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"{path}: {exc.strerror or exc}") from exc
    return path


def write_table(
    path: Path,
    columns: Sequence[str],
    rows: Iterable[Sequence[object]],
    meta: Mapping[str, object],
) -> Path:
    lines = [f"# {key}: {fmt(value)}" for key, value in meta.items()]
    lines.append("\t".join(columns))
    lines.extend("\t".join(fmt(v) for v in row) for row in rows)
    return _write(path, "\n".join(lines) + "\n")


def write_json(path: Path, payload: Mapping[str, object]) -> Path:
    return _write(path, json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def provenance(command: str, seed: int, config_sha256: str) -> dict[str, object]:
    return {
        "command": command,
        "seed": seed,
        "config_sha256": config_sha256,
        "threshold_bell_version": __version__,
        "config_file": "config.resolved.ini",
    }
