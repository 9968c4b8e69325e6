from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
import typing

from .._version import __version__
from ..exceptions import ConfigError, NumericalError
from .config import RunConfig, config_from_json

log = logging.getLogger(__name__)

Cell = typing.Union[int, float, str, bool]

_CONFIG_PREFIX = "# config: "


def format_cell(value: Cell, column: str = "?") -> str:
    """Text form of one CSV cell; floats keep 17 significant digits."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NumericalError(f"non-finite value {value!r} in column {column!r}")
        return format(value, ".17g")
    return str(value)


def header_lines(command: str, config: RunConfig) -> list[str]:
    return [
        f"# jumpcontrol {__version__}",
        f"# command: {command}",
        f"{_CONFIG_PREFIX}{config.model_dump_json()}",
    ]


def atomic_write(path: str | os.PathLike[str], text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".jumpcontrol-", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    log.debug("Wrote %s", os.fspath(path))


def write_csv(
    path: str | os.PathLike[str],
    command: str,
    config: RunConfig,
    columns: typing.Sequence[str],
    rows: typing.Iterable[typing.Sequence[Cell]],
) -> None:
    buffer = io.StringIO()
    for line in header_lines(command, config):
        buffer.write(line + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
        writer.writerow([format_cell(value, column) for value, column in zip(row, columns)])
    atomic_write(path, buffer.getvalue())


def write_jsonl(
    path: str | os.PathLike[str],
    command: str,
    config: RunConfig,
    records: typing.Iterable[typing.Mapping[str, typing.Any]],
) -> None:
    """One JSON object per line; the first line carries version and config."""
    header = {
        "jumpcontrol": __version__,
        "command": command,
        "config": json.loads(config.model_dump_json()),
    }
    lines = [json.dumps(header, allow_nan=False)]
    try:
        lines.extend(json.dumps(record, allow_nan=False) for record in records)
    except ValueError as e:
        raise NumericalError(f"non-finite value in {os.fspath(path)!r}: {e}") from e
    atomic_write(path, "\n".join(lines) + "\n")


def read_config_echo(path: str | os.PathLike[str]) -> RunConfig:
    """The configuration echoed into the header of an output file."""
    with open(path, encoding="utf-8") as fp:
        first = fp.readline()
        if first.startswith("{"):
            return config_from_json(json.dumps(json.loads(first)["config"]))
        for line in [first, *fp]:
            if line.startswith(_CONFIG_PREFIX):
                return config_from_json(line[len(_CONFIG_PREFIX):].rstrip("\n"))
            if not line.startswith("#"):
                break
    raise ConfigError(f"{os.fspath(path)!r} has no configuration header")
