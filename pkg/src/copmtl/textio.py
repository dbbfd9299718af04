"""Structured-text and CSV helpers.

Every on-disk text artifact in this package (parameter documents, dataset
sidecars, experiment reports, config files) uses the same line-oriented
``key: value`` format, and every tabular artifact is plain comma-separated
text. Floats are written with ``repr`` so that read(write(x)) == x exactly.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping, Sequence

from .errors import DataFormatError


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same float64."""
    return repr(float(x))


def dumps_kv(doc: Mapping[str, object]) -> str:
    """Serialize a flat mapping as ``key: value`` lines.

    Floats use round-trip repr; sequences become comma-separated values.
    """
    lines = []
    for key, value in doc.items():
        if isinstance(value, float):
            text = format_float(value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            text = ", ".join(
                format_float(v) if isinstance(v, float) else str(v) for v in value
            )
        else:
            text = str(value)
        if "\n" in text:
            raise ValueError(f"value for key {key!r} contains a newline")
        lines.append(f"{key}: {text}")
    return "\n".join(lines) + "\n"


def loads_kv(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key: value`` lines; raises DataFormatError with byte offset."""
    doc: dict[str, str] = {}
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            if ":" not in stripped:
                raise DataFormatError(
                    f"{source}: line {lineno} (byte offset {offset}) is not 'key: value'"
                )
            key, _, value = stripped.partition(":")
            doc[key.strip()] = value.strip()
        offset += len(line.encode("utf-8"))
    return doc


def read_kv(path) -> dict[str, str]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_kv(fh.read(), source=str(path))


def write_kv(path, doc: Mapping[str, object]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_kv(doc))


def kv_floats(doc: Mapping[str, str], key: str, source: str = "<doc>") -> list[float]:
    """Parse a comma-separated float list stored under ``key``."""
    if key not in doc:
        raise DataFormatError(f"{source}: missing key {key!r}")
    try:
        return [float(tok) for tok in doc[key].split(",") if tok.strip()]
    except ValueError as exc:
        raise DataFormatError(f"{source}: key {key!r}: {exc}") from exc


def kv_float(doc: Mapping[str, str], key: str, source: str = "<doc>") -> float:
    if key not in doc:
        raise DataFormatError(f"{source}: missing key {key!r}")
    try:
        return float(doc[key])
    except ValueError as exc:
        raise DataFormatError(f"{source}: key {key!r}: {exc}") from exc


def kv_int(doc: Mapping[str, str], key: str, source: str = "<doc>") -> int:
    if key not in doc:
        raise DataFormatError(f"{source}: missing key {key!r}")
    try:
        return int(doc[key])
    except ValueError as exc:
        raise DataFormatError(f"{source}: key {key!r}: {exc}") from exc


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping[str, object]]) -> None:
    """Write dict rows under a fixed column order; floats round-trip exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            out = []
            for col in columns:
                value = row.get(col, "")
                if isinstance(value, float):
                    out.append(format_float(value))
                else:
                    out.append(str(value))
            writer.writerow(out)


def read_csv(path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a CSV written by write_csv; returns (columns, rows-as-str-dicts)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                columns = next(reader)
            except StopIteration:
                raise DataFormatError(f"{path}: empty CSV") from None
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(columns):
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected {len(columns)} fields, got {len(rec)}"
                    )
                rows.append(dict(zip(columns, rec)))
        return columns, rows
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def csv_bytes(columns: Sequence[str], rows: Iterable[Mapping[str, object]]) -> bytes:
    """In-memory variant of write_csv, for determinism checks."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow(
            [
                format_float(row[c]) if isinstance(row.get(c), float) else str(row.get(c, ""))
                for c in columns
            ]
        )
    return buf.getvalue().encode("utf-8")
