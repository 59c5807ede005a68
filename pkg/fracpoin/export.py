"""JSON and CSV writers. Every output starts with a header recording the seed."""

from __future__ import annotations

import csv
import io
import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Iterable, Iterator

from pydantic import BaseModel

from fracpoin.estimate import RoomsRow, SweepRow
from fracpoin.functional import RatioRecord

RECORD_HEADER = ("domain", "p", "s", "tau", "beta", "kernel", "field_id", "lhs", "rhs", "ratio", "constant", "pass")
SWEEP_HEADER = ("tau", "theoretical", "empirical", "slack")
ROOMS_HEADER = ("j", "width", "cells", "estimate", "growth")


def seed_line(seed: int | None, **params: Any) -> str:
    parts = [f"seed={seed}"] + [f"{k}={v}" for k, v in params.items() if v is not None]
    return "# " + " ".join(parts)


@contextmanager
def open_output(path: str | Path | None) -> Iterator[IO[str]]:
    """The file at ``path``, or stdout when ``path`` is None or '-'."""
    if path is None or str(path) == "-":
        yield sys.stdout
        return
    with open(path, "w", newline="") as handle:
        yield handle


def jsonable(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if hasattr(value, "to_json"):
        return value.to_json()
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def write_json(doc: Any, stream: IO[str], seed: int | None = None) -> None:
    payload = jsonable(doc)
    if seed is not None and isinstance(payload, dict):
        payload = {"seed": seed, **payload}
    stream.write(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True))
    stream.write("\n")


def _write_csv(header: tuple[str, ...], rows: Iterable[list[Any]], stream: IO[str], comment: str) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    stream.write(comment + "\n")
    stream.write(buffer.getvalue())


def write_records_csv(records: Iterable[RatioRecord], stream: IO[str], seed: int | None, **params: Any) -> None:
    _write_csv(RECORD_HEADER, (r.csv_row() for r in records), stream, seed_line(seed, **params))


def write_sweep_csv(rows: Iterable[SweepRow], stream: IO[str], seed: int | None, **params: Any) -> None:
    body = ([repr(r.tau), repr(r.theoretical), repr(r.empirical), repr(r.slack)] for r in rows)
    _write_csv(SWEEP_HEADER, body, stream, seed_line(seed, **params))


def write_rooms_csv(rows: Iterable[RoomsRow], stream: IO[str], seed: int | None, **params: Any) -> None:
    body = ([r.j, r.width, r.cells, repr(r.estimate), repr(r.growth)] for r in rows)
    _write_csv(ROOMS_HEADER, body, stream, seed_line(seed, **params))
