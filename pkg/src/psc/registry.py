"""Record file formats and the on-disk result registry.

Layout::

    <root>/<context>/<spec digest>/spec.json
    <root>/<context>/<spec digest>/<method>.jsonl
    <root>/<context>/<spec digest>/_archive/<method>.<timestamp>.<n>.jsonl
    <root>/<context>/<spec digest>/.lock

Entry files are JSON Lines: one header object holding the provenance,
followed by one record per line.  Writers take the per-key lock and publish
through a temporary file and ``os.replace``; readers never lock and ignore
temporary files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence
from urllib.parse import quote, unquote

from filelock import FileLock, Timeout

from .analysis import ComparisonReport, compare
from .errors import (
    ConflictArchiveFailure,
    IOFailure,
    KeyNotFound,
    ParseError,
    PscError,
    SpecMismatch,
    UnsupportedFormat,
    ValidationError,
)
from .model import AttackRecord, ComparisonSpec, MetricKind, RunContext, validate_record, validate_value

FORMATS = ("jsonl", "csv")
CONTEXT_COLUMNS = ("dataset", "model", "mode", "attack_family")
ID_COLUMNS = ("method", "param_set") + CONTEXT_COLUMNS
METRIC_ALIASES = {
    "l0_distance": MetricKind.L0,
    "l1_distance": MetricKind.L1,
    "l2_distance": MetricKind.L2,
    "linf_distance": MetricKind.LINF,
    "success_rate": MetricKind.ASR,
    "query": MetricKind.QUERIES,
}
LOCK_TIMEOUT = 30.0
_TMP_PREFIX = ".tmp-"
_HEADER_KEY = "__entry__"


def metric_from_name(name: str) -> MetricKind | None:
    key = name.strip().lower()
    try:
        return MetricKind(key)
    except ValueError:
        return METRIC_ALIASES.get(key)


# -- serialisation ---------------------------------------------------------


def record_to_dict(record: AttackRecord) -> dict[str, Any]:
    out: dict[str, Any] = {
        "method": record.method,
        "param_set": record.param_set,
        "context": record.context.to_dict(),
        "measurements": {m.value: record.measurements[m] for m in MetricKind if m in record.measurements},
    }
    if record.meta:
        out["meta"] = dict(record.meta)
    return out


def record_from_dict(data: Any) -> AttackRecord:
    if not isinstance(data, dict):
        raise ValidationError("a record must be a JSON object")
    for key in ("method", "param_set", "context", "measurements"):
        if key not in data:
            raise ValidationError(f"record is missing {key!r}", field=key)
    if not isinstance(data["context"], dict) or not isinstance(data["measurements"], dict):
        raise ValidationError("context and measurements must be objects")
    measurements = {}
    for name, value in data["measurements"].items():
        metric = metric_from_name(name)
        if metric is None:
            raise ValidationError(f"unknown metric {name!r}", field=name)
        if metric in measurements:
            raise ValidationError(f"metric {metric.value!r} given twice", field=name)
        measurements[metric] = validate_value(metric, value)
    record = AttackRecord(data["method"], data["param_set"], RunContext.from_dict(data["context"]),
                          measurements, data.get("meta") or {})
    validate_record(record)
    return record


def _number(value: float) -> str:
    # repr is the shortest string that round-trips the double.
    return str(value) if isinstance(value, int) else repr(float(value))


def serialize_records(records: Iterable[AttackRecord], fmt: str = "jsonl") -> str:
    records = list(records)
    if fmt == "jsonl":
        return "".join(json.dumps(record_to_dict(r), allow_nan=False) + "\n" for r in records)
    if fmt == "csv":
        metrics = [m for m in MetricKind if any(m in r.measurements for r in records)]
        meta_keys = sorted({k for r in records for k in r.meta})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(ID_COLUMNS) + [m.value for m in metrics] + meta_keys)
        for r in records:
            ctx = r.context.to_dict()
            row = [r.method, r.param_set] + [ctx[c] for c in CONTEXT_COLUMNS]
            row += [_number(r.measurements[m]) if m in r.measurements else "" for m in metrics]
            row += [r.meta.get(k, "") for k in meta_keys]
            writer.writerow(row)
        return buf.getvalue()
    raise UnsupportedFormat(f"unsupported format {fmt!r} (expected jsonl or csv)")


def _parse_number(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {column}: {text!r} is not a number",
                         line=line, column=column) from None
    if value.is_integer() and "." not in text and "e" not in text.lower():
        return int(value)
    return value


def _parse_csv(text: str) -> list[AttackRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    header = [h.strip() for h in rows[0]]
    missing = [c for c in ID_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"line 1: CSV header lacks column(s) {', '.join(missing)}", line=1)
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) > len(header):
            raise ParseError(f"line {lineno}: {len(row)} cells but {len(header)} header columns",
                             line=lineno)
        cells = dict(zip(header, (c.strip() for c in row)))
        measurements: dict[MetricKind, float] = {}
        meta: dict[str, str] = {}
        for column, cell in cells.items():
            if column in ID_COLUMNS:
                continue
            # Self-describing cells such as "l2_distance=0.6" name their own metric.
            name, value = column, cell
            if "=" in cell and metric_from_name(cell.split("=", 1)[0]) is not None:
                name, value = cell.split("=", 1)
            metric = metric_from_name(name)
            if metric is None:
                if cell:
                    meta[column] = cell
                continue
            if value == "":
                continue
            if metric in measurements:
                raise ParseError(f"line {lineno}: metric {metric.value!r} given twice", line=lineno)
            measurements[metric] = _parse_number(value, lineno, name)
        try:
            data = {
                "method": cells.get("method", ""),
                "param_set": cells.get("param_set", ""),
                "context": {c: cells.get(c, "") for c in CONTEXT_COLUMNS},
                "measurements": {m.value: v for m, v in measurements.items()},
                "meta": meta,
            }
            records.append(record_from_dict(data))
        except ValidationError as exc:
            raise type(exc)(f"line {lineno}: {exc.message}", **{**exc.details, "line": lineno}) from None
    return records


def _parse_jsonl(text: str) -> list[AttackRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}, column {exc.colno}: {exc.msg}",
                             line=lineno, column=exc.colno) from None
        if isinstance(data, dict) and _HEADER_KEY in data:
            continue
        try:
            records.append(record_from_dict(data))
        except ValidationError as exc:
            raise type(exc)(f"line {lineno}: {exc.message}", **{**exc.details, "line": lineno}) from None
    return records


def parse_records(data: bytes | str, fmt: str = "jsonl") -> list[AttackRecord]:
    """Parse a CSV or JSON Lines stream; every returned record is valid."""
    if fmt not in FORMATS:
        raise UnsupportedFormat(f"unsupported format {fmt!r} (expected jsonl or csv)")
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc.reason} at byte {exc.start}") from None
    if data.startswith("\ufeff"):
        data = data[1:]
    return _parse_csv(data) if fmt == "csv" else _parse_jsonl(data)


def format_for(path: str | os.PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".ndjson", ".json"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise UnsupportedFormat(f"cannot infer record format from {str(path)!r}; use .jsonl or .csv")


def read_records(path: str | os.PathLike, fmt: str | None = None) -> list[AttackRecord]:
    fmt = fmt or format_for(path)
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    return parse_records(data, fmt)


# -- keys ------------------------------------------------------------------


def canonical_spec(spec: ComparisonSpec) -> str:
    """Sorted-key JSON with every real number spelled as a float."""
    data = spec.to_dict()
    data["range"] = [float(v) for v in data["range"]]
    if data["fixed"] is not None:
        data["fixed"]["center"] = float(data["fixed"]["center"])
        data["fixed"]["tolerance"] = float(data["fixed"]["tolerance"])
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def spec_digest(spec: ComparisonSpec) -> str:
    return hashlib.sha256(canonical_spec(spec).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class RegistryKey:
    context: RunContext
    spec_digest: str

    @classmethod
    def for_spec(cls, context: RunContext, spec: ComparisonSpec) -> "RegistryKey":
        return cls(context, spec_digest(spec))

    def directory(self, root: str | os.PathLike) -> Path:
        ctx = self.context
        name = "__".join(quote(v, safe="") for v in
                         (ctx.dataset, ctx.model, ctx.mode.value, ctx.attack_family.value))
        return Path(root) / name / self.spec_digest


def _context_from_dirname(name: str) -> RunContext:
    parts = name.split("__")
    if len(parts) != 4:
        raise ValueError(name)
    return RunContext(*(unquote(p) for p in parts))


@dataclass(frozen=True)
class Provenance:
    submitter: str = ""
    timestamp: int = 0
    note: str = ""


@dataclass(frozen=True)
class RegistryEntry:
    key: RegistryKey
    method: str
    records: tuple[AttackRecord, ...]
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        for rec in self.records:
            validate_record(rec)
            if rec.context != self.key.context:
                raise SpecMismatch(
                    f"record context {rec.context} differs from registry key context {self.key.context}")
            if rec.method != self.method:
                raise SpecMismatch(f"record of method {rec.method!r} in entry for {self.method!r}")


def _entry_text(entry: RegistryEntry, spec: ComparisonSpec | None) -> str:
    header = {_HEADER_KEY: {
        "method": entry.method,
        "context": entry.key.context.to_dict(),
        "spec_digest": entry.key.spec_digest,
        "provenance": {"submitter": entry.provenance.submitter,
                       "timestamp": int(entry.provenance.timestamp),
                       "note": entry.provenance.note},
    }}
    return json.dumps(header) + "\n" + serialize_records(entry.records, "jsonl")


def content_hash(path: str | os.PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(prefix=_TMP_PREFIX, suffix=".part", dir=path.parent)
    try:
        os.fchmod(fd, 0o644)
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _method_filename(method: str) -> str:
    return quote(method, safe="") + ".jsonl"


def registry_add(root: str | os.PathLike, entry: RegistryEntry, spec: ComparisonSpec | None = None,
                 clock: Callable[[], float] = time.time, lock_timeout: float = LOCK_TIMEOUT) -> Path:
    """Store ``entry`` and return the live file path.

    Re-adding a method under the same key copies the previous file into
    ``_archive/``.  ``spec`` is saved next to the entries the first time a
    key is used, so stored baselines can be re-compared later.
    """
    if spec is not None and spec_digest(spec) != entry.key.spec_digest:
        raise SpecMismatch("spec does not match the entry's key digest")
    root = Path(root)
    if not root.is_dir():
        raise IOFailure(f"registry root {root} does not exist")
    directory = entry.key.directory(root)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        lock = FileLock(str(directory / ".lock"), timeout=lock_timeout)
        with lock:
            spec_path = directory / "spec.json"
            if spec is not None:
                if spec_path.exists():
                    stored = ComparisonSpec.from_dict(json.loads(spec_path.read_text("utf-8")))
                    if spec_digest(stored) != entry.key.spec_digest:
                        raise SpecMismatch(f"stored spec at {spec_path} does not match the key")
                else:
                    _atomic_write(spec_path, json.dumps(spec.to_dict(), indent=2) + "\n")
            live = directory / _method_filename(entry.method)
            if live.exists():
                _archive(live, directory, int(clock()))
            _atomic_write(live, _entry_text(entry, spec))
            return live
    except Timeout:
        raise IOFailure(f"timed out waiting for the registry lock on {directory}") from None
    except PscError:
        raise
    except OSError as exc:
        raise IOFailure(f"registry write failed under {directory}: {exc}") from None


def _archive(live: Path, directory: Path, stamp: int) -> None:
    archive = directory / "_archive"
    try:
        archive.mkdir(exist_ok=True)
        n = 0
        while True:
            target = archive / f"{live.stem}.{stamp}.{n}.jsonl"
            if not target.exists():
                break
            n += 1
        # Copy rather than move: the live file stays in place until the new
        # version replaces it, so a failed write never loses the entry.
        shutil.copy2(live, target)
    except OSError as exc:
        raise ConflictArchiveFailure(f"could not archive {live}: {exc}") from None


@dataclass(frozen=True)
class ListedEntry:
    key: RegistryKey
    method: str
    path: Path
    records: int
    content_hash: str
    provenance: Provenance


def _read_entry(path: Path) -> tuple[dict, list[AttackRecord]]:
    text = path.read_text("utf-8")
    first = text.split("\n", 1)[0]
    header = json.loads(first).get(_HEADER_KEY, {}) if first.strip() else {}
    return header, _parse_jsonl(text)


def registry_list(root: str | os.PathLike) -> list[ListedEntry]:
    root = Path(root)
    if not root.is_dir():
        return []
    out = []
    for ctx_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            context = _context_from_dirname(ctx_dir.name)
        except (ValueError, PscError):
            continue
        for key_dir in sorted(p for p in ctx_dir.iterdir() if p.is_dir()):
            key = RegistryKey(context, key_dir.name)
            for path in sorted(key_dir.glob("*.jsonl")):
                if path.name.startswith(_TMP_PREFIX):
                    continue
                header, records = _read_entry(path)
                prov = header.get("provenance", {})
                out.append(ListedEntry(key, header.get("method", unquote(path.stem)), path,
                                       len(records), content_hash(path),
                                       Provenance(prov.get("submitter", ""), int(prov.get("timestamp", 0)),
                                                  prov.get("note", ""))))
    return out


def load_entries(root: str | os.PathLike, key: RegistryKey) -> dict[str, list[AttackRecord]]:
    directory = key.directory(root)
    if not directory.is_dir():
        return {}
    out = {}
    for path in sorted(directory.glob("*.jsonl")):
        if path.name.startswith(_TMP_PREFIX):
            continue
        header, records = _read_entry(path)
        out[header.get("method", unquote(path.stem))] = records
    return out


def load_spec(root: str | os.PathLike, key: RegistryKey) -> ComparisonSpec | None:
    path = key.directory(root) / "spec.json"
    if not path.exists():
        return None
    return ComparisonSpec.from_dict(json.loads(path.read_text("utf-8")))


def registry_compare(root: str | os.PathLike, key: RegistryKey, uploaded: Sequence[AttackRecord],
                     uploaded_method: str, spec: ComparisonSpec | None = None,
                     grid_size: int | None = None) -> ComparisonReport:
    """Rank an uploaded method against the baselines stored under ``key``.

    An empty key degrades to a single-method report with a warning, provided
    ``spec`` is given.
    """
    own = [r for r in uploaded if r.method == uploaded_method]
    if not own:
        raise KeyNotFound(f"upload holds no records for method {uploaded_method!r}")
    for rec in own:
        if rec.context != key.context:
            raise SpecMismatch(f"uploaded context {rec.context} differs from key context {key.context}")

    stored_spec = load_spec(root, key)
    if stored_spec is not None and spec is not None and spec_digest(spec) != spec_digest(stored_spec):
        raise SpecMismatch("given spec differs from the spec stored under this key")
    spec = stored_spec or spec
    if spec is None:
        raise KeyNotFound(f"no stored spec for key {key.spec_digest} under {key.context}")
    if spec_digest(spec) != key.spec_digest:
        raise SpecMismatch("spec does not match the key digest")

    baselines = load_entries(root, key)
    baselines.pop(uploaded_method, None)
    warnings = []
    if not baselines:
        warnings.append(f"no stored baselines under {key.context} / {key.spec_digest}; "
                        "reporting the upload alone")
    merged = [r for recs in baselines.values() for r in recs] + own
    kwargs = {} if grid_size is None else {"grid_size": grid_size}
    return compare(merged, spec, sorted(set(baselines) | {uploaded_method}), advisories=warnings, **kwargs)


def write_report(report: ComparisonReport, path: str | os.PathLike) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(path, report.to_json())
    except OSError as exc:
        raise IOFailure(f"cannot write report {path}: {exc}") from None


def read_report(path: str | os.PathLike) -> ComparisonReport:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read report {path}: {exc.strerror or exc}") from None
    try:
        return ComparisonReport.from_json(text)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path} is not a valid report: {exc}") from None
