"""Domain types, dataset ingestion, and uncertainty-normalization rules.

A Measurement is one published result x with (possibly asymmetric)
standard uncertainties; a Quantity groups repeated measurements of the
same measurand.  Reported intervals at other coverage levels are
converted to standard (68.3%) uncertainties before comparison.
"""

from __future__ import annotations

import csv
import datetime
import io
import json
import math
from dataclasses import dataclass, field

from scipy import special, stats

__all__ = [
    "Dataset",
    "Measurement",
    "ParseError",
    "Quantity",
    "ValidationError",
    "ValidationReport",
    "binomial_rate_difference",
    "clopper_pearson_interval",
    "normalize_uncertainty",
    "parse_dataset",
    "serialize_dataset",
    "validate",
    "wilson_interval",
]

# two-sided 68.27% Normal coverage
_Z68 = -special.ndtri((1.0 - 0.6827) / 2.0)
MIN_MEASUREMENTS = 5


class ParseError(ValueError):
    """Malformed input stream; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """A row or measurement violates a hard invariant."""


@dataclass(frozen=True)
class Measurement:
    """One published result: value with upper/lower standard uncertainties."""

    value: float
    u_plus: float
    u_minus: float
    date: datetime.date | None = None
    source_id: str | None = None

    def __post_init__(self):
        if not (math.isfinite(self.value) and math.isfinite(self.u_plus) and math.isfinite(self.u_minus)):
            raise ValidationError(f"non-finite measurement {self.value} +{self.u_plus} -{self.u_minus}")
        if self.u_plus < 0 or self.u_minus < 0:
            raise ValidationError(f"negative uncertainty {self.u_plus}/{self.u_minus}")
        if self.u_plus == 0 and self.u_minus == 0:
            raise ValidationError(f"measurement {self.value} has both uncertainties zero")

    @property
    def u_mean(self) -> float:
        """Symmetric-equivalent uncertainty (mean of the two sides)."""
        return 0.5 * (self.u_plus + self.u_minus)

    def u_toward(self, target: float) -> float:
        """Uncertainty on the side facing `target` (asymmetric side rule)."""
        return self.u_plus if target > self.value else self.u_minus

    @property
    def relative_uncertainty(self) -> float | None:
        """u_mean / |value|, or None for value == 0."""
        if self.value == 0:
            return None
        return self.u_mean / abs(self.value)


@dataclass(frozen=True)
class Quantity:
    """Named group of measurements of the same measurand."""

    id: str
    measurements: tuple[Measurement, ...]
    lower_bound: float | None = None
    upper_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if self.lower_bound is not None and self.upper_bound is not None and self.upper_bound < self.lower_bound:
            raise ValidationError(f"quantity {self.id}: upper bound below lower bound")

    def __len__(self) -> int:
        return len(self.measurements)


@dataclass(frozen=True)
class Dataset:
    name: str
    quantities: tuple[Quantity, ...]

    def __post_init__(self):
        object.__setattr__(self, "quantities", tuple(self.quantities))
        ids = [q.id for q in self.quantities]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate quantity ids: {dupes}")

    def __len__(self) -> int:
        return len(self.quantities)

    @property
    def n_measurements(self) -> int:
        return sum(len(q) for q in self.quantities)


# ---------------------------------------------------------------------------
# parsing / serialization

_CSV_COLUMNS = ["quantity_id", "value", "u_plus", "u_minus", "date", "source_id"]
_CSV_BOUND_COLUMNS = _CSV_COLUMNS + ["lower_bound", "upper_bound"]


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", line) from None


def _parse_date(text: str, line: int) -> datetime.date:
    try:
        return datetime.date.fromisoformat(text)
    except ValueError:
        raise ParseError(f"bad date {text!r} (expected YYYY-MM-DD)", line) from None


def parse_dataset(text: str, format: str = "csv", name: str = "dataset") -> Dataset:
    """Parse a CSV or JSON character stream into a Dataset."""
    if format == "csv":
        return _parse_csv(text, name)
    if format == "json":
        return _parse_json(text)
    raise ValueError(f"unknown format {format!r}")


def _parse_csv(text: str, name: str) -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", 1) from None
    header = [h.strip() for h in header]
    if header not in (_CSV_COLUMNS, _CSV_BOUND_COLUMNS):
        raise ParseError(f"bad header {header!r}", 1)
    has_bounds = header == _CSV_BOUND_COLUMNS

    order: list[str] = []
    rows: dict[str, list[Measurement]] = {}
    bounds: dict[str, tuple[float | None, float | None]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
        qid = row[0].strip()
        if not qid:
            raise ParseError("empty quantity_id", lineno)
        value = _parse_float(row[1], "value", lineno)
        u_plus = _parse_float(row[2], "u_plus", lineno)
        u_minus = _parse_float(row[3], "u_minus", lineno) if row[3].strip() else u_plus
        if u_plus <= 0 and u_minus <= 0:
            raise ValidationError(f"quantity {qid}, line {lineno}: non-positive uncertainty")
        date = _parse_date(row[4].strip(), lineno) if row[4].strip() else None
        source = row[5].strip() or None
        try:
            m = Measurement(value, u_plus, u_minus, date, source)
        except ValidationError as exc:
            raise ValidationError(f"quantity {qid}, line {lineno}: {exc}") from None
        if qid not in rows:
            order.append(qid)
            rows[qid] = []
            bounds[qid] = (None, None)
        rows[qid].append(m)
        if has_bounds:
            lo = _parse_float(row[6], "lower_bound", lineno) if row[6].strip() else None
            hi = _parse_float(row[7], "upper_bound", lineno) if row[7].strip() else None
            if lo is not None or hi is not None:
                bounds[qid] = (lo, hi)
    quantities = [Quantity(qid, tuple(rows[qid]), *bounds[qid]) for qid in order]
    return Dataset(name, tuple(quantities))


def _parse_json(text: str) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), exc.lineno) from None
    try:
        quantities = []
        for q in doc["quantities"]:
            ms = []
            for m in q["measurements"]:
                date = m.get("date")
                ms.append(
                    Measurement(
                        float(m["value"]),
                        float(m["u_plus"]),
                        float(m.get("u_minus", m["u_plus"])),
                        datetime.date.fromisoformat(date) if date else None,
                        m.get("source_id"),
                    )
                )
            quantities.append(Quantity(str(q["id"]), tuple(ms), q.get("lower_bound"), q.get("upper_bound")))
        return Dataset(str(doc["name"]), tuple(quantities))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"bad schema: {exc}") from None


def serialize_dataset(d: Dataset, format: str = "csv") -> str:
    """Serialize a Dataset; parse_dataset(serialize_dataset(d)) round-trips."""
    if format == "json":
        doc = {
            "name": d.name,
            "quantities": [
                {
                    "id": q.id,
                    "lower_bound": q.lower_bound,
                    "upper_bound": q.upper_bound,
                    "measurements": [
                        {
                            "value": m.value,
                            "u_plus": m.u_plus,
                            "u_minus": m.u_minus,
                            "date": m.date.isoformat() if m.date else None,
                            "source_id": m.source_id,
                        }
                        for m in q.measurements
                    ],
                }
                for q in d.quantities
            ],
        }
        return json.dumps(doc, indent=1)
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    has_bounds = any(q.lower_bound is not None or q.upper_bound is not None for q in d.quantities)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_CSV_BOUND_COLUMNS if has_bounds else _CSV_COLUMNS)
    for q in d.quantities:
        for m in q.measurements:
            row = [
                q.id,
                repr(m.value),
                repr(m.u_plus),
                repr(m.u_minus),
                m.date.isoformat() if m.date else "",
                m.source_id or "",
            ]
            if has_bounds:
                row += [
                    "" if q.lower_bound is None else repr(q.lower_bound),
                    "" if q.upper_bound is None else repr(q.upper_bound),
                ]
            writer.writerow(row)
    return out.getvalue()


# ---------------------------------------------------------------------------
# uncertainty normalization

def normalize_uncertainty(
    interval_half_width: float | None = None,
    coverage: str = "k1",
    components: list[float] | None = None,
) -> tuple[float, float]:
    """Convert a reported interval to a symmetric standard uncertainty pair.

    k1/ci683 intervals are already standard; k2/ci95 half-widths are
    divided by exactly 2.  Multiple components (e.g. statistical and
    systematic) are added in quadrature, together with the converted
    half-width when both are given.
    """
    if coverage not in ("k1", "k2", "ci683", "ci95"):
        raise ValueError(f"unknown coverage {coverage!r}")
    terms: list[float] = []
    if interval_half_width is not None:
        if interval_half_width < 0:
            raise ValueError("interval_half_width must be >= 0")
        divisor = 2.0 if coverage in ("k2", "ci95") else 1.0
        terms.append(interval_half_width / divisor)
    if components:
        for c in components:
            if c < 0:
                raise ValueError("uncertainty components must be >= 0")
        terms.extend(components)
    if not terms:
        raise ValueError("need an interval half-width or at least one component")
    u = math.sqrt(sum(t * t for t in terms)) if len(terms) > 1 else terms[0]
    return (u, u)


def wilson_interval(k: int, n: int, confidence: float = 0.6827) -> tuple[float, float]:
    """Two-sided Wilson score interval for a binomial proportion."""
    _check_counts(k, n)
    z = -special.ndtri((1.0 - confidence) / 2.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(center - half, 0.0), min(center + half, 1.0))


def clopper_pearson_interval(k: int, n: int, confidence: float = 0.6827) -> tuple[float, float]:
    """Exact (Clopper-Pearson) binomial interval from beta quantiles."""
    _check_counts(k, n)
    alpha = 1.0 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return (lo, hi)


def _check_counts(k: int, n: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, n], got k={k}, n={n}")


def binomial_rate_difference(
    k1: int, n1: int, k2: int, n2: int, method: str = "wilson"
) -> Measurement:
    """Difference of two binomial rates with 68.3% interval uncertainties.

    The per-group 68.3% confidence intervals give asymmetric per-group
    uncertainties, which are combined in quadrature side by side.
    """
    interval = {"wilson": wilson_interval, "clopper-pearson": clopper_pearson_interval}.get(method)
    if interval is None:
        raise ValueError(f"unknown interval method {method!r}")
    p1, p2 = k1 / n1, k2 / n2
    lo1, hi1 = interval(k1, n1)
    lo2, hi2 = interval(k2, n2)
    # group 1 moving up or group 2 moving down pushes the difference up
    u_plus = math.hypot(hi1 - p1, p2 - lo2)
    u_minus = math.hypot(p1 - lo1, hi2 - p2)
    return Measurement(p1 - p2, u_plus, u_minus)


# ---------------------------------------------------------------------------
# validation

@dataclass
class ValidationReport:
    """Reporting-only summary of dataset health; never raises."""

    measurement_counts: dict[str, int] = field(default_factory=dict)
    below_threshold: list[str] = field(default_factory=list)
    bound_violations: list[tuple[str, int]] = field(default_factory=list)
    zero_uncertainty: list[tuple[str, int]] = field(default_factory=list)
    suspected_duplicates: list[tuple[str, int]] = field(default_factory=list)

    @property
    def issues(self) -> list[str]:
        out = [f"quantity {q} has fewer than {MIN_MEASUREMENTS} measurements" for q in self.below_threshold]
        out += [f"quantity {q}: measurement {i} outside bounds" for q, i in self.bound_violations]
        out += [f"quantity {q}: measurement {i} has a zero one-sided uncertainty" for q, i in self.zero_uncertainty]
        out += [f"quantity {q}: measurement {i} duplicates an earlier row" for q, i in self.suspected_duplicates]
        return out


def validate(d: Dataset) -> ValidationReport:
    """Per-quantity counts, bound violations, and suspected duplicate rows."""
    report = ValidationReport()
    for q in d.quantities:
        report.measurement_counts[q.id] = len(q)
        if len(q) < MIN_MEASUREMENTS:
            report.below_threshold.append(q.id)
        seen: set[tuple] = set()
        for i, m in enumerate(q.measurements):
            if q.lower_bound is not None and m.value < q.lower_bound:
                report.bound_violations.append((q.id, i))
            elif q.upper_bound is not None and m.value > q.upper_bound:
                report.bound_violations.append((q.id, i))
            if m.u_plus == 0 or m.u_minus == 0:
                report.zero_uncertainty.append((q.id, i))
            key = (m.value, m.u_plus, m.u_minus, m.date, m.source_id)
            if key in seen:
                report.suspected_duplicates.append((q.id, i))
            seen.add(key)
    return report
