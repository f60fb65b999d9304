"""Observed survey counts, validation, file I/O and the bundled S-Night data."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence, Union

from .exceptions import (
    CensusBelowCertainCaptures,
    EmptyClassList,
    NegativeCount,
    ParseError,
    ValidationError,
)

__all__ = [
    "BasicCounts",
    "IdCounts",
    "ClassedCounts",
    "LatentState",
    "validate",
    "as_classed",
    "load_survey",
    "write_survey",
    "snight_dataset",
    "snight_city",
    "SNIGHT_CITIES",
]

COLUMNS = ("m_i", "m_yes", "m_mb", "m_no", "y", "h_i")


@dataclass(frozen=True)
class BasicCounts:
    """Plant self-assessments and census count for capture without identification."""

    m_yes: int
    m_mb: int
    m_no: int
    y: int

    @property
    def m_total(self) -> int:
        return self.m_yes + self.m_mb + self.m_no

    def to_id(self) -> "IdCounts":
        return IdCounts(0, self.m_yes, self.m_mb, self.m_no, self.y)


@dataclass(frozen=True)
class IdCounts:
    """Counts for capture with partial identification.

    ``m_yes``, ``m_mb`` and ``m_no`` refer to non-identified plants only.
    ``h_i`` is the number of identified target individuals, or None when it
    was not recorded (the likelihood then drops its binomial factor).
    """

    m_i: int
    m_yes: int
    m_mb: int
    m_no: int
    y: int
    h_i: int | None = None

    @property
    def m_total(self) -> int:
        return self.m_i + self.m_yes + self.m_mb + self.m_no

    @property
    def residual(self) -> int:
        """Census count not accounted for by certainly captured plants."""
        return self.y - self.m_i - self.m_yes

    @property
    def has_hi(self) -> bool:
        return self.h_i is not None

    def to_basic(self) -> BasicCounts:
        if self.m_i != 0 or self.h_i is not None:
            raise ValidationError("only counts with m_i=0 and no h_i reduce to BasicCounts")
        return BasicCounts(self.m_yes, self.m_mb, self.m_no, self.y)


@dataclass(frozen=True)
class ClassedCounts:
    """Ordered (label, counts) pairs, one per site class."""

    classes: tuple[tuple[str, IdCounts], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "classes",
            tuple((str(k), v.to_id() if isinstance(v, BasicCounts) else v) for k, v in self.classes),
        )

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.classes]

    @property
    def counts(self) -> list[IdCounts]:
        return [c for _, c in self.classes]

    def __iter__(self):
        return iter(self.classes)

    def __len__(self):
        return len(self.classes)


@dataclass(frozen=True)
class LatentState:
    """Captured "maybe" plants and captured targets, one entry per class."""

    m_mb_c: tuple[int, ...]
    h_c: tuple[int, ...] = field(default=())


Survey = Union[BasicCounts, IdCounts, ClassedCounts]


def _check_counts(counts: BasicCounts | IdCounts) -> None:
    for name, value in vars(counts).items():
        if value is None:
            continue
        if isinstance(value, bool) or int(value) != value:
            raise ValidationError(f"{name}={value!r} is not an integer")
        if value < 0:
            raise NegativeCount(f"{name}={value} is negative")
    certain = getattr(counts, "m_i", 0) + counts.m_yes
    if counts.y < certain:
        raise CensusBelowCertainCaptures(
            f"census y={counts.y} is below the certainly captured plants ({certain})"
        )


def validate(data: Survey) -> Survey:
    """Return ``data`` unchanged if it is internally consistent, else raise."""
    if isinstance(data, ClassedCounts):
        if data.K == 0:
            raise EmptyClassList("at least one class is required")
        labels = data.labels
        if len(set(labels)) != len(labels):
            raise ValidationError(f"class labels are not unique: {labels}")
        for _, counts in data.classes:
            _check_counts(counts)
    elif isinstance(data, (BasicCounts, IdCounts)):
        _check_counts(data)
    else:
        raise TypeError(f"cannot validate {type(data).__name__}")
    return data


def as_classed(data: Survey, label: str = "all") -> ClassedCounts:
    """Wrap any survey type into a (validated) ClassedCounts."""
    if isinstance(data, ClassedCounts):
        return validate(data)
    if isinstance(data, BasicCounts):
        data = data.to_id()
    return validate(ClassedCounts(((label, data),)))


# --------------------------------------------------------------------- I/O


def _parse_int(raw, column: str, where: str) -> int:
    if isinstance(raw, bool):
        raise ParseError(f"{where}: field {column!r}: expected an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    try:
        text = str(raw).strip()
        value = float(text) if "." in text or "e" in text.lower() else int(text)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: field {column!r}: expected an integer, got {raw!r}") from None
    if value != int(value):
        raise ParseError(f"{where}: field {column!r}: expected an integer, got {raw!r}")
    return int(value)


def _record_to_counts(record: Mapping, where: str) -> tuple[str, IdCounts]:
    missing = [c for c in ("m_yes", "m_mb", "m_no", "y") if c not in record]
    if missing:
        raise ParseError(f"{where}: missing required field(s) {missing}")
    values = {}
    for column in COLUMNS:
        raw = record.get(column)
        if raw is None or (isinstance(raw, str) and raw.strip() == ""):
            values[column] = 0 if column == "m_i" else None
            continue
        values[column] = _parse_int(raw, column, where)
    label = record.get("label")
    return (str(label) if label not in (None, "") else None), IdCounts(**values)


def _assemble(rows: list[tuple[str | None, IdCounts]]) -> ClassedCounts:
    classes = tuple(
        (label if label is not None else f"class{i + 1}", counts)
        for i, (label, counts) in enumerate(rows)
    )
    if len(classes) == 1 and rows[0][0] is None:
        classes = (("all", classes[0][1]),)
    return validate(ClassedCounts(classes))


def _read_delimited(text: str) -> ClassedCounts:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyClassList("file is empty")
    reader.fieldnames = [f.strip() for f in reader.fieldnames]
    rows = []
    for line_no, record in enumerate(reader, start=2):
        if not any((v or "").strip() for v in record.values() if isinstance(v, str)):
            continue
        rows.append(_record_to_counts(record, f"line {line_no}"))
    if not rows:
        raise EmptyClassList("no data rows")
    return _assemble(rows)


def _read_record(text: str) -> ClassedCounts:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(payload, Mapping) or "classes" not in payload:
        raise ParseError("top-level record must contain a 'classes' array")
    classes = payload["classes"]
    if not isinstance(classes, Sequence) or isinstance(classes, str):
        raise ParseError("'classes' must be an array")
    if not classes:
        raise EmptyClassList("'classes' is empty")
    rows = []
    for i, record in enumerate(classes):
        if not isinstance(record, Mapping):
            raise ParseError(f"classes[{i}]: expected an object")
        rows.append(_record_to_counts(record, f"classes[{i}]"))
    return _assemble(rows)


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("delimited-table", "structured-record"):
            raise ValueError(f"unknown format {fmt!r}")
        return fmt
    return "structured-record" if path.suffix.lower() == ".json" else "delimited-table"


def load_survey(path, format: str | None = None) -> ClassedCounts:
    """Read a survey file into validated ClassedCounts.

    ``format`` is ``"delimited-table"`` (CSV, one row per class) or
    ``"structured-record"`` (JSON with a ``classes`` array); by default it is
    inferred from the file extension. A missing ``m_i`` column means no
    identification data (m_i = 0); a missing ``h_i`` column means identified
    targets were not recorded.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if _infer_format(path, format) == "structured-record":
        return _read_record(text)
    return _read_delimited(text)


def _fields_in_use(data: ClassedCounts) -> list[str]:
    cols = ["label", "m_i", "m_yes", "m_mb", "m_no", "y"]
    if any(c.h_i is not None for c in data.counts):
        cols.append("h_i")
    return cols


def dumps_survey(data: Survey, format: str = "delimited-table") -> str:
    data = as_classed(data)
    cols = _fields_in_use(data)
    records = []
    for label, counts in data.classes:
        rec = {"label": label, **{c: getattr(counts, c) for c in cols[1:]}}
        records.append(rec)
    if format == "structured-record":
        return json.dumps({"classes": records}, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: "" if v is None else v for k, v in rec.items()})
    return buf.getvalue()


def write_survey(data: Survey, path, format: str | None = None) -> None:
    """Write ``data`` so that :func:`load_survey` reads it back unchanged."""
    path = Path(path)
    path.write_text(dumps_survey(data, _infer_format(path, format)), encoding="utf-8")


# ------------------------------------------------------------------ S-Night

SNIGHT_CITIES = ("Chicago", "New Orleans", "Phoenix", "New York", "Los Angeles")


def snight_dataset() -> dict[str, IdCounts]:
    """The 1990 S-Night counts for the five cities, without identified targets.

    The figures are approximate reconstructions from published summaries, not
    the original survey records.
    """
    text = resources.files("plantcap.resources").joinpath("snight1990.csv").read_text("utf-8")
    table = _read_delimited(text)
    return {label: counts for label, counts in table.classes}


def snight_city(name: str) -> IdCounts:
    """Look up one city by display name or slug (``"new_orleans"``)."""
    key = name.strip().lower().replace("_", " ").replace("-", " ")
    for city, counts in snight_dataset().items():
        if city.lower() == key:
            return counts
    raise KeyError(f"unknown S-Night city {name!r}; choose from {', '.join(SNIGHT_CITIES)}")


def with_counts(counts: IdCounts, **changes) -> IdCounts:
    return validate(replace(counts, **changes))
