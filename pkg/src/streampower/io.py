"""Reading session logs and writing scored data and reports.

Session files are CSV (header mandatory) or JSONL with the columns in
``SESSION_FIELDS``. Bitrate is stored in kbps on disk and converted to bits/s
on ingest through ``Decimal`` so that write -> read is exact.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import (EmptyDataset, InvalidSession, MalformedHeader, ReportError, UnreadableFile,
                     UnwritablePath)
from .session import CODECS, DEVICES, Impairments, Session, VideoParams

SESSION_FIELDS = (
    "id", "device", "codec", "width", "height", "fps", "bitrate_kbps", "duration_s",
    "loading_delay_s", "stall_count", "stall_total_s", "online",
)
OPTIONAL_FIELDS = ("mos",)

_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f"}


@dataclass(frozen=True)
class Rejection:
    row: int  # 1-based data row (header excluded)
    field: str
    reason: str


@dataclass
class ParseResult:
    sessions: list[Session]
    external_mos: dict[str, float] = field(default_factory=dict)
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejections)


def _text(value) -> str:
    if isinstance(value, str):
        return value.strip()
    if isinstance(value, Decimal):
        return str(value)
    return repr(value)


def _as_int(value, name) -> int:
    if isinstance(value, bool):
        raise InvalidSession(name, "must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value.isascii() and value.isdigit():
        return int(value)
    try:
        d = Decimal(_text(value))
    except InvalidOperation:
        raise InvalidSession(name, f"not an integer: {value!r}") from None
    if not d.is_finite() or d != d.to_integral_value():
        raise InvalidSession(name, f"not an integer: {value!r}")
    return int(d)


def _as_float(value, name) -> float:
    if isinstance(value, bool):
        raise InvalidSession(name, "must be a number")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(value)  # accepts str (surrounding whitespace included) and Decimal
    except (TypeError, ValueError):
        raise InvalidSession(name, f"not a number: {value!r}") from None


def _kbps_to_bps(value) -> float:
    try:
        d = Decimal(_text(value))
    except InvalidOperation:
        raise InvalidSession("bitrate_kbps", f"not a number: {value!r}") from None
    if not d.is_finite():
        raise InvalidSession("bitrate_kbps", "must be finite")
    return float(d.scaleb(3))


def _bps_to_kbps_text(bps: float) -> str:
    d = Decimal(repr(float(bps))).scaleb(-3).normalize()
    return format(d, "f")


def _as_bool(value, name) -> bool:
    if isinstance(value, bool):
        return value
    t = _text(value).lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise InvalidSession(name, f"not a boolean: {value!r}")


def record_to_session(rec: dict) -> tuple[Session, float | None]:
    """Validate one raw record. Raises :class:`InvalidSession` naming the field."""
    for name in SESSION_FIELDS:
        v = rec.get(name)
        if v is None or (isinstance(v, str) and not v.strip()):
            raise InvalidSession(name, "missing value")
    try:
        device = DEVICES.canonical(_text(rec["device"]))
    except KeyError:
        raise InvalidSession("device", f"unknown device {rec['device']!r}") from None
    try:
        codec = CODECS.canonical(_text(rec["codec"]))
    except KeyError:
        raise InvalidSession("codec", f"unknown codec {rec['codec']!r}") from None
    params = VideoParams(
        width=_as_int(rec["width"], "width"),
        height=_as_int(rec["height"], "height"),
        fps=_as_float(rec["fps"], "fps"),
        bitrate=_kbps_to_bps(rec["bitrate_kbps"]),
    )
    imp = Impairments(
        loading_delay=_as_float(rec["loading_delay_s"], "loading_delay_s"),
        stall_count=_as_int(rec["stall_count"], "stall_count"),
        stall_total=_as_float(rec["stall_total_s"], "stall_total_s"),
    )
    s = Session(
        id=_text(rec["id"]), device=device, codec=codec, params=params, impairments=imp,
        duration=_as_float(rec["duration_s"], "duration_s"), online=_as_bool(rec["online"], "online"),
    )
    mos = rec.get("mos")
    if mos is None or (isinstance(mos, str) and not mos.strip()):
        return s, None
    return s, _as_float(mos, "mos")


_FIELD_ALIASES = {"loading_delay": "loading_delay_s", "stall_total": "stall_total_s",
                  "duration": "duration_s", "bitrate": "bitrate_kbps"}


def _field_name(name: str) -> str:
    # Session validation raises with in-memory names; report the file column instead.
    return _FIELD_ALIASES.get(name, name)


def _iter_csv(path: Path) -> Iterator[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise MalformedHeader(f"{path}: missing header row")
        header = [h.strip() for h in header]
        missing = [f for f in SESSION_FIELDS if f not in header]
        if missing:
            raise MalformedHeader(f"{path}: header lacks columns {missing}")
        for row in reader:
            if row:
                yield dict(zip(header, row))


def _iter_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line, parse_float=Decimal)
            except json.JSONDecodeError as exc:
                yield {"__error__": f"invalid JSON: {exc.msg}"}
                continue
            yield obj if isinstance(obj, dict) else {"__error__": "line is not a JSON object"}


def detect_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    return "csv"


def parse_records(records: Iterable[dict]) -> ParseResult:
    result = ParseResult([])
    seen: set[str] = set()
    for row, rec in enumerate(records, start=1):
        if "__error__" in rec:
            result.rejections.append(Rejection(row, "*", rec["__error__"]))
            continue
        try:
            s, mos = record_to_session(rec)
        except InvalidSession as exc:
            result.rejections.append(Rejection(row, _field_name(exc.field), exc.reason))
            continue
        if s.id in seen:
            result.rejections.append(Rejection(row, "id", f"duplicate id {s.id!r}"))
            continue
        seen.add(s.id)
        result.sessions.append(s)
        if mos is not None:
            result.external_mos[s.id] = mos
    return result


def parse_sessions(path, fmt: str | None = None, allow_empty: bool = False) -> ParseResult:
    path = Path(path)
    fmt = fmt or detect_format(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unsupported session format {fmt!r}")
    if not path.is_file():
        raise UnreadableFile(f"cannot read {path}: no such file")
    try:
        records = _iter_csv(path) if fmt == "csv" else _iter_jsonl(path)
        result = parse_records(records)
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableFile(f"cannot read {path}: {exc}") from exc
    if not result.sessions and not allow_empty:
        raise EmptyDataset(f"{path}: no valid sessions ({result.n_rejected} rejected)")
    return result


def session_to_record(s: Session, mos: float | None = None) -> dict:
    rec = {
        "id": s.id,
        "device": s.device,
        "codec": s.codec,
        "width": s.params.width,
        "height": s.params.height,
        "fps": s.params.fps,
        "bitrate_kbps": _bps_to_kbps_text(s.params.bitrate),
        "duration_s": s.duration,
        "loading_delay_s": s.impairments.loading_delay,
        "stall_count": s.impairments.stall_count,
        "stall_total_s": s.impairments.stall_total,
        "online": s.online,
    }
    if mos is not None:
        rec["mos"] = mos
    return rec


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ReportError(f"refusing to serialize non-finite value {v!r}")
        return repr(v)
    return str(v)


def write_sessions(sessions: Sequence[Session], path, fmt: str | None = None,
                   external_mos: dict | None = None) -> None:
    path = Path(path)
    fmt = fmt or detect_format(path)
    fields = list(SESSION_FIELDS) + (["mos"] if external_mos else [])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            if fmt == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(fields)
                for s in sessions:
                    rec = session_to_record(s, (external_mos or {}).get(s.id))
                    w.writerow([_csv_cell(rec.get(f)) for f in fields])
            elif fmt == "jsonl":
                for s in sessions:
                    rec = session_to_record(s, (external_mos or {}).get(s.id))
                    kbps = rec.pop("bitrate_kbps")
                    line = json.dumps(rec, allow_nan=False)
                    # splice the exact decimal text in; json cannot emit Decimal
                    fh.write(line[:-1] + f', "bitrate_kbps": {kbps}}}\n')
            else:
                raise ValueError(f"unsupported session format {fmt!r}")
    except OSError as exc:
        raise UnwritablePath(f"cannot write {path}: {exc.strerror}") from exc


# -- reports ------------------------------------------------------------------

def _check_finite(obj, where="document"):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ReportError(f"refusing to serialize non-finite value in {where}")
    elif isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{where}[{i}]")


def dumps_report(doc) -> str:
    _check_finite(doc)
    try:
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    except (TypeError, ValueError) as exc:
        raise ReportError(f"cannot serialize report: {exc}") from exc


def write_report(doc, path, fmt: str = "json", columns: Sequence[str] | None = None) -> None:
    """Write a JSON document, or a CSV table given as a list of row dicts.

    Floats are written with ``repr`` so every digit survives; NaN and
    infinities are refused.
    """
    path = Path(path)
    if fmt == "json":
        text = dumps_report(doc)
    elif fmt == "csv":
        rows = list(doc)
        cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        w.writerows([_csv_cell(r.get(c)) for c in cols] for r in rows)  # _csv_cell refuses non-finite
        text = buf.getvalue()
    else:
        raise ValueError(f"unsupported report format {fmt!r}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UnwritablePath(f"cannot write {path}: {exc.strerror}") from exc


def _parse_cell(text: str, kind=None):
    if kind is str:
        return text
    if text == "":
        return None
    if kind is bool or text in ("true", "false"):
        return text == "true"
    if kind is not None:
        return kind(text)
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_report(path, fmt: str = "json", types: dict | None = None):
    """Inverse of :func:`write_report`. ``types`` pins per-column CSV types."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableFile(f"cannot read {path}: {exc.strerror}") from exc
    if fmt == "json":
        return json.loads(text)
    reader = csv.DictReader(text.splitlines())
    types = types or {}
    return [{k: _parse_cell(v, types.get(k)) for k, v in row.items()} for row in reader]
