"""Parsing and canonical ordering of raw clickstream visit logs."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

REQUIRED_COLUMNS = ("household_id", "site_id", "start_time", "end_time", "pages")
OPTIONAL_COLUMNS = ("goal_id",)


class SchemaError(ValueError):
    """The input table is missing a required column."""


@dataclass(frozen=True)
class RowError:
    line: int
    reason: str

    def __str__(self) -> str:
        return f"line:{self.line} {self.reason}"


@dataclass(frozen=True)
class VisitRecord:
    household_id: str
    site_id: str
    start_time: int
    end_time: int
    pages: int
    goal_id: Optional[str] = None
    # position in the source file; used only to break timestamp ties
    seq: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        if self.end_time < self.start_time:
            raise ValueError(f"end_time {self.end_time} before start_time {self.start_time}")
        if self.pages < 0:
            raise ValueError(f"negative pages {self.pages}")


@dataclass(frozen=True)
class HouseholdPanel:
    household_id: str
    visits: tuple[VisitRecord, ...]

    def __len__(self) -> int:
        return len(self.visits)


@dataclass
class ParseResult:
    records: list[VisitRecord]
    errors: list[RowError]


def _open_text(source) -> tuple[IO[str], str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), "close"
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"), newline=""), "close"
    if isinstance(source, io.TextIOBase):
        return source, "keep"
    # binary stream; detach afterwards so the caller's stream stays open
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), "detach"


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text.strip())
    except (ValueError, AttributeError):
        raise ValueError(f"non-integer {name}: {text!r}") from None


def parse_visits(source) -> ParseResult:
    """Read a header-bearing CSV of visits.

    ``source`` may be a path, raw bytes, or a text/binary file object.
    Bad rows are collected in ``errors`` with their 1-based line number
    (the header is line 1); good rows are kept in file order.
    """
    handle, cleanup = _open_text(source)
    try:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty input: no header row") from None
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise SchemaError(f"missing required column: {col}")
        index = {name: header.index(name) for name in REQUIRED_COLUMNS + OPTIONAL_COLUMNS if name in header}

        records: list[VisitRecord] = []
        errors: list[RowError] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                errors.append(RowError(line, f"expected {len(header)} fields, got {len(row)}"))
                continue
            try:
                goal = row[index["goal_id"]].strip() if "goal_id" in index else ""
                rec = VisitRecord(
                    household_id=row[index["household_id"]].strip(),
                    site_id=row[index["site_id"]].strip(),
                    start_time=_parse_int(row[index["start_time"]], "start_time"),
                    end_time=_parse_int(row[index["end_time"]], "end_time"),
                    pages=_parse_int(row[index["pages"]], "pages"),
                    goal_id=goal or None,
                    seq=len(records),
                )
            except ValueError as exc:
                errors.append(RowError(line, str(exc)))
                continue
            if not rec.household_id or not rec.site_id:
                errors.append(RowError(line, "empty household_id or site_id"))
                continue
            records.append(rec)
        return ParseResult(records, errors)
    finally:
        if cleanup == "close":
            handle.close()
        elif cleanup == "detach":
            handle.detach()


def _visit_order(v: VisitRecord):
    return (v.start_time, v.seq, v.site_id)


def build_panels(visits: Iterable[VisitRecord]) -> list[HouseholdPanel]:
    """Partition visits by household, time-ordered within each panel."""
    ordered = sorted(visits, key=lambda v: (v.household_id,) + _visit_order(v))
    return [
        HouseholdPanel(hh, tuple(group))
        for hh, group in groupby(ordered, key=lambda v: v.household_id)
    ]


def write_visits(panels: Sequence[HouseholdPanel] | Sequence[VisitRecord], out: IO[str]) -> None:
    """Serialize panels (or a flat visit list) back to the input CSV format."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REQUIRED_COLUMNS + OPTIONAL_COLUMNS)
    for item in panels:
        visits = item.visits if isinstance(item, HouseholdPanel) else (item,)
        for v in visits:
            writer.writerow([v.household_id, v.site_id, v.start_time, v.end_time, v.pages, v.goal_id or ""])


def read_panels(source) -> tuple[list[HouseholdPanel], list[RowError]]:
    result = parse_visits(source)
    return build_panels(result.records), result.errors
