"""Metric report container and its JSON / text renderings."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import IoFailure, SchemaMismatch

REPORT_VERSION = 1
METRICS = ("map_previous", "map_current", "udr", "udp", "acc", "nmi", "purity")
_ROWS = (
    ("mAP (previous known)", "map_previous"),
    ("mAP (current known)", "map_current"),
    ("UDR", "udr"),
    ("UDP", "udp"),
    ("NMI", "nmi"),
    ("ACC", "acc"),
    ("Purity", "purity"),
    ("k_est", "k_est"),
)


@dataclass(frozen=True)
class MetricReport:
    task_id: int
    map_previous: float | None = None
    map_current: float | None = None
    udr: float | None = None
    udp: float | None = None
    acc: float | None = None
    nmi: float | None = None
    purity: float | None = None
    k_est: int | None = None
    counts: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    # kept out of the canonical rendering so reports stay byte-stable
    wall_time_seconds: float | None = None

    def __post_init__(self):
        for name in METRICS:
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


_FLOAT_TAG = "@@f:"
_FLOAT_RE = re.compile(r'"@@f:(-?\d+\.\d{6})"')


def _tag_floats(value):
    # json.dumps prints float repr; tag floats as fixed-width strings, then unquote them
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError("report values must be finite")
        return f"{_FLOAT_TAG}{value:.6f}"
    if isinstance(value, dict):
        return {str(k): _tag_floats(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_tag_floats(v) for v in value]
    return value


def report_dict(report: MetricReport, include_timing: bool = False) -> dict:
    doc = asdict(report)
    if not include_timing:
        doc.pop("wall_time_seconds")
    doc["version"] = REPORT_VERSION
    return doc


def to_json(report: MetricReport, include_timing: bool = False) -> str:
    text = json.dumps(_tag_floats(report_dict(report, include_timing)), sort_keys=True, indent=2)
    return _FLOAT_RE.sub(r"\1", text) + "\n"


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def to_text(report: MetricReport) -> str:
    width = max(len(label) for label, _ in _ROWS)
    lines = [f"Task {report.task_id}", f"{'metric':<{width}}  value", f"{'-' * width}  {'-' * 9}"]
    for label, key in _ROWS:
        lines.append(f"{label:<{width}}  {_fmt(getattr(report, key))}")
    if report.counts:
        lines.append("")
        lines.extend(f"{k:<{width}}  {v}" for k, v in sorted(report.counts.items()))
    return "\n".join(lines) + "\n"


def emit_report(report: MetricReport, path=None, fmt: str = "json", include_timing: bool = False) -> str:
    """Render ``report`` and optionally write it; returns the rendered text."""
    if fmt == "json":
        text = to_json(report, include_timing)
    elif fmt == "text":
        text = to_text(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write report {path}: {exc}") from exc
    return text


def load_report(path) -> MetricReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}: not a JSON report ({exc.msg})") from exc
    if doc.pop("version", None) != REPORT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported report version")
    names = {f.name for f in fields(MetricReport)}
    unknown = set(doc) - names
    if unknown:
        raise SchemaMismatch(f"{path}: unexpected report fields {sorted(unknown)}")
    return MetricReport(**doc)
