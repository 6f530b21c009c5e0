"""Log ingestion: parsing, template extraction, canonical event streams."""

from __future__ import annotations

import csv
import functools
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator


@functools.total_ordering
class Dimension(Enum):
    """Source dimension of a log record.

    Ordering follows declaration order, not alphabetical order; every
    sort key in the package relies on that.
    """

    EVENT = "event"
    STATUS = "status"
    COMM = "comm"
    RAS = "ras"

    @property
    def rank(self) -> int:
        return _DIM_RANK[self]

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, Dimension):
            return NotImplemented
        return self.rank < other.rank

    def __str__(self) -> str:
        return self.value


_DIM_RANK = {d: i for i, d in enumerate(Dimension)}


@dataclass(frozen=True)
class LogRecord:
    """One raw log line: timestamp, emitting node, optional dimension, message."""

    ts: float
    node: str
    dim: Dimension | None
    msg: str

    def __post_init__(self) -> None:
        if self.ts < 0:
            raise ValueError("ts must be >= 0")
        if not self.node:
            raise ValueError("node must be non-empty")


@dataclass(frozen=True)
class CanonicalEvent:
    """A record after template extraction; `count` tracks coalesced repeats."""

    ts: float
    node: str
    dim: Dimension
    template: int
    count: int = 1

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @property
    def sort_key(self) -> tuple[float, str, int, int]:
        return (self.ts, self.node, self.dim.rank, self.template)


@dataclass(frozen=True)
class RejectEntry:
    line_no: int
    reason: str
    raw: str


@dataclass
class ParseResult:
    records: list[LogRecord]
    rejects: list[RejectEntry]


class ParseError(Exception):
    """Raised when the input stream as a whole is unusable."""

    def __init__(self, message: str, rejects: list[RejectEntry] | None = None):
        super().__init__(message)
        self.rejects = rejects or []


# Masking rules, applied in this order. HEX runs before NUM, so any
# word-bounded token of four or more hex digits is masked <HEX> even when
# it happens to be pure decimal.
_IP_RE = re.compile(r"(?<!\d)\d{1,3}(?:\.\d{1,3}){3}(?!\d)")
_HEX_RE = re.compile(r"\b(?:0[xX][0-9a-fA-F]{4,}|[0-9a-fA-F]{4,})\b")
_PATH_RE = re.compile(r"(?<!\S)/\S*")
_NUM_RE = re.compile(r"\d+")

EMPTY_TEMPLATE = "<EMPTY>"


def mask_message(msg: str) -> str:
    """Replace volatile fields with placeholder tokens.

    Masking is idempotent: placeholders contain no digits, no slashes and
    no hex-digit runs, so a second pass leaves the string unchanged.
    """
    if msg == "":
        return EMPTY_TEMPLATE
    masked = _IP_RE.sub("<IP>", msg)
    masked = _HEX_RE.sub("<HEX>", masked)
    masked = _PATH_RE.sub("<PATH>", masked)
    masked = _NUM_RE.sub("<NUM>", masked)
    return masked


class TemplateTable:
    """Bidirectional map between masked message strings and dense integer ids.

    Ids are assigned in first-seen order and stay contiguous from 0.
    """

    def __init__(self) -> None:
        self._ids: dict[str, int] = {}
        self._masked: list[str] = []

    def __len__(self) -> int:
        return len(self._masked)

    def __iter__(self) -> Iterator[str]:
        return iter(self._masked)

    def id_for(self, masked: str) -> int:
        """Return the id for `masked`, assigning the next id if unseen."""
        tid = self._ids.get(masked)
        if tid is None:
            tid = len(self._masked)
            self._ids[masked] = tid
            self._masked.append(masked)
        return tid

    def get(self, masked: str) -> int | None:
        return self._ids.get(masked)

    def masked_for(self, template_id: int) -> str:
        if not 0 <= template_id < len(self._masked):
            raise KeyError(template_id)
        return self._masked[template_id]

    def items(self) -> Iterator[tuple[int, str]]:
        return enumerate(self._masked)

    def save(self, path: str | Path) -> None:
        lines = [f"{tid}\t{_escape(masked)}\n" for tid, masked in self.items()]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TemplateTable":
        table = cls()
        text = Path(path).read_text(encoding="utf-8")
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            tid_str, sep, payload = line.partition("\t")
            if not sep:
                raise ParseError(f"template file line {line_no}: missing tab")
            if int(tid_str) != len(table._masked):
                raise ParseError(f"template file line {line_no}: ids must be contiguous")
            table.id_for(_unescape(payload))
        return table

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, str]]) -> "TemplateTable":
        table = cls()
        for tid, masked in rows:
            if tid != len(table._masked):
                raise ValueError("template ids must be contiguous from 0")
            table.id_for(masked)
        return table


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(s: str) -> str:
    out: list[str] = []
    it = iter(s)
    for ch in it:
        if ch != "\\":
            out.append(ch)
            continue
        nxt = next(it, "")
        out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, nxt))
    return "".join(out)


def extract_template(msg: str, table: TemplateTable) -> int:
    """Mask `msg` and return its template id, registering it if new."""
    return table.id_for(mask_message(msg))


def parse_lines(
    stream: IO[str] | IO[bytes] | Iterable[str],
    fmt: str = "jsonl",
    dim_default: Dimension | None = None,
) -> ParseResult:
    """Parse a JSON Lines or CSV stream into log records.

    Malformed lines become reject entries with the line number and reason.
    If more than half of all non-blank lines are rejected the stream is
    considered unusable and ParseError is raised.
    """
    if fmt == "jsonl":
        result = _parse_jsonl(stream, dim_default)
    elif fmt == "csv":
        result = _parse_csv(stream, dim_default)
    else:
        raise ValueError(f"unknown format: {fmt!r}")
    total = len(result.records) + len(result.rejects)
    if total and len(result.rejects) * 2 > total:
        raise ParseError(
            f"rejected {len(result.rejects)} of {total} lines", result.rejects
        )
    return result


def _decode_lines(stream: IO[str] | IO[bytes] | Iterable[str]) -> Iterator[tuple[int, str | None]]:
    """Yield (line_no, text) pairs; text is None for undecodable bytes."""
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            try:
                yield line_no, line.decode("utf-8")
            except UnicodeDecodeError:
                yield line_no, None
        else:
            yield line_no, line


def _parse_jsonl(stream, dim_default: Dimension | None) -> ParseResult:
    records: list[LogRecord] = []
    rejects: list[RejectEntry] = []
    for line_no, line in _decode_lines(stream):
        if line is None:
            rejects.append(RejectEntry(line_no, "not valid UTF-8", "<binary>"))
            continue
        text = line.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            rejects.append(RejectEntry(line_no, f"invalid JSON: {exc.msg}", text))
            continue
        record, reason = _record_from_fields(obj, dim_default)
        if record is None:
            rejects.append(RejectEntry(line_no, reason, text))
        else:
            records.append(record)
    return ParseResult(records, rejects)


def _parse_csv(stream, dim_default: Dimension | None) -> ParseResult:
    lines: list[str] = []
    rejects: list[RejectEntry] = []
    for line_no, line in _decode_lines(stream):
        if line is None:
            rejects.append(RejectEntry(line_no, "not valid UTF-8", "<binary>"))
            lines.append("")
            continue
        lines.append(line.rstrip("\r\n"))
    reader = csv.DictReader(lines)
    if reader.fieldnames is not None:
        missing = {"ts", "node", "msg"} - set(reader.fieldnames)
        if missing:
            raise ParseError(f"csv header lacks required columns: {sorted(missing)}")
    records: list[LogRecord] = []
    for row in reader:
        line_no = reader.line_num
        raw = ",".join(v for v in row.values() if isinstance(v, str))
        fields = {k: v for k, v in row.items() if k is not None and v is not None}
        record, reason = _record_from_fields(fields, dim_default)
        if record is None:
            rejects.append(RejectEntry(line_no, reason, raw))
        else:
            records.append(record)
    return ParseResult(records, rejects)


def _record_from_fields(obj: object, dim_default: Dimension | None) -> tuple[LogRecord | None, str]:
    if not isinstance(obj, dict):
        return None, "record must be an object"
    for key in ("ts", "node", "msg"):
        if key not in obj:
            return None, f"missing field: {key}"
    ts = obj["ts"]
    if isinstance(ts, str):
        try:
            ts = float(ts)
        except ValueError:
            return None, "ts must be a number"
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        return None, "ts must be a number"
    if not math.isfinite(ts) or ts < 0:
        return None, "ts must be a finite number >= 0"
    node = obj["node"]
    if not isinstance(node, str) or not node:
        return None, "node must be a non-empty string"
    msg = obj["msg"]
    if not isinstance(msg, str):
        return None, "msg must be a string"
    dim: Dimension | None
    raw_dim = obj.get("dim")
    if raw_dim is None or raw_dim == "":
        dim = dim_default
    else:
        try:
            dim = Dimension(raw_dim)
        except ValueError:
            return None, f"unknown dimension: {raw_dim!r}"
    return LogRecord(float(ts), node, dim, msg), ""


def canonicalize(
    records: Iterable[LogRecord],
    table: TemplateTable,
    dim_default: Dimension | None = None,
) -> tuple[list[CanonicalEvent], list[RejectEntry]]:
    """Assign templates and produce the globally sorted canonical stream.

    Records still lacking a dimension after `dim_default` are rejected;
    rejected records do not claim template ids. The sort key
    (ts, node, dim, template) is a total order, so the output is
    independent of input order.
    """
    events: list[CanonicalEvent] = []
    rejects: list[RejectEntry] = []
    for pos, record in enumerate(records, start=1):
        dim = record.dim if record.dim is not None else dim_default
        if dim is None:
            rejects.append(RejectEntry(pos, "record has no dimension", record.msg))
            continue
        tid = extract_template(record.msg, table)
        events.append(CanonicalEvent(record.ts, record.node, dim, tid))
    events.sort(key=lambda e: e.sort_key)
    return events, rejects
