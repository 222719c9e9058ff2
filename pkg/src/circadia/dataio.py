"""Reading long-format measurement files and writing reports and curve data.

Input files are comma-separated with the header ``cohort,subject,time,value``
(extra columns are ignored).  Reports are written twice: as sorted-key JSON
for scripts and as a plain-text table for people.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import EmptyInputError, ParseError
from .simulate import THRESHOLD_GRID, PowerCurve, dkw_band
from .trig import CohortData, SubjectSeries

__all__ = [
    "REQUIRED_COLUMNS",
    "load_cohorts",
    "write_cohorts",
    "input_digest",
    "write_report",
    "render_text",
    "export_curves",
]

REQUIRED_COLUMNS = ("cohort", "subject", "time", "value")


def _number(text, column, line, path):
    try:
        x = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"non-numeric {column} {text!r}", line, path) from None
    if not math.isfinite(x):
        raise ParseError(f"non-finite {column} {text!r}", line, path)
    return x


def load_cohorts(path) -> dict[str, CohortData]:
    """Read a measurement file into cohorts keyed by cohort id.

    Cohorts and subjects keep the order of their first row; rows within a
    subject keep file order.
    """
    path = Path(path)
    rows: dict[str, dict[str, list]] = {}
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError("file is empty", 1, path) from None
        header = [h.strip().lower() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"missing column(s) {', '.join(missing)}", 1, path)
        idx = [header.index(c) for c in REQUIRED_COLUMNS]
        width = max(idx) + 1
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < width:
                raise ParseError(f"expected at least {width} fields, got {len(row)}", line, path)
            cohort, subject, t_text, v_text = (row[i].strip() for i in idx)
            if not cohort or not subject:
                raise ParseError("empty cohort or subject id", line, path)
            t = _number(t_text, "time", line, path)
            v = _number(v_text, "value", line, path)
            key = (cohort, subject, t)
            if key in seen:
                raise ParseError(f"duplicate time {t_text} for subject {subject!r}", line, path)
            seen.add(key)
            rows.setdefault(cohort, {}).setdefault(subject, []).append((t, v))
    if not rows:
        raise EmptyInputError("no measurement rows", None, path)
    out = {}
    for cohort, subjects in rows.items():
        series = [
            SubjectSeries(sid, [r[0] for r in obs], [r[1] for r in obs]) for sid, obs in subjects.items()
        ]
        out[cohort] = CohortData(cohort, series)
    return out


def write_cohorts(cohorts: Mapping[str, CohortData] | Sequence[CohortData], path) -> Path:
    """Write cohorts in the input format; floats use ``repr`` so they round-trip."""
    items = cohorts.values() if isinstance(cohorts, Mapping) else cohorts
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS)
        for c in items:
            for s in c.subjects:
                for t, v in zip(s.times, s.values):
                    w.writerow([c.cohort_id, s.subject_id, repr(float(t)), repr(float(v))])
    return path


def input_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


def render_text(report: dict) -> str:
    """Indented plain-text rendering of a nested report."""
    lines = []

    def walk(node, depth):
        pad = "  " * depth
        for key in sorted(node):
            val = node[key]
            if isinstance(val, dict):
                lines.append(f"{pad}{key}:")
                walk(val, depth + 1)
            elif isinstance(val, list) and val and isinstance(val[0], dict):
                lines.append(f"{pad}{key}:")
                for i, item in enumerate(val):
                    lines.append(f"{pad}  - [{i}]")
                    walk(item, depth + 2)
            else:
                lines.append(f"{pad}{key}: {_fmt(val)}")

    walk(report, 0)
    return "\n".join(lines) + "\n"


def write_report(report: dict, out_dir, stem: str = "report") -> tuple[Path, Path]:
    """Write ``<stem>.json`` and ``<stem>.txt`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _jsonable(report)
    jpath, tpath = out / f"{stem}.json", out / f"{stem}.txt"
    jpath.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
    tpath.write_text(render_text(data))
    return jpath, tpath


def _safe_name(label: str) -> str:
    keep = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
    return keep or "curve"


def export_curves(curves: Sequence[PowerCurve], out_dir, level: float = 0.95) -> list[Path]:
    """One CSV per curve on the grid ``{0, 0.001, ..., 1}`` with a DKW band."""
    if not curves:
        raise ValueError("no curves to export")
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    paths = []
    for i, c in enumerate(curves):
        band = dkw_band(c, level, THRESHOLD_GRID)
        value = c(THRESHOLD_GRID)
        path = out / f"curve_{_safe_name(c.label or str(i))}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "value", "band_lo", "band_hi"])
            for j in range(THRESHOLD_GRID.size):
                w.writerow([f"{j / 1000:.3f}", repr(float(value[j])), repr(float(band.lower[j])), repr(float(band.upper[j]))])
        paths.append(path)
    return paths
