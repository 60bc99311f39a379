"""Serialization helpers: JSON-able conversion and markdown tables."""

from __future__ import annotations

import dataclasses
import json
from enum import Enum
from pathlib import Path

import numpy as np


def to_jsonable(obj):
    """Recursively convert results (dataclasses, enums, arrays) to plain
    JSON types, preserving dataclass field order."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return {
            f.name: to_jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if f.repr
        }
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return None
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def write_json(obj, path: str | Path) -> None:
    """Write a report deterministically: fixed separators, declared key order."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False) + "\n"


def markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _fmt(value, digits=2) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and (np.isnan(value) or np.isinf(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _fmt_ci(ci) -> str:
    if ci is None:
        return ""
    return f"[{_fmt(ci[0])}, {_fmt(ci[1])}]"


def diagnostic_rows_markdown(rows) -> str:
    """Render diagnostic rows in the layout of the balance/sensitivity tables."""
    headers = [
        "Label",
        "Framework",
        "Mean Below",
        "Mean Above",
        "Estimate",
        "p-value",
        "95% CI",
        "Neighborhood",
        "N-",
        "N+",
    ]
    body = []
    for r in rows:
        if r.h is not None:
            hood = f"h={_fmt(r.h)}"
        elif r.window is not None:
            hood = f"[{_fmt(r.window[0])}, {_fmt(r.window[1])}]"
        else:
            hood = ""
        body.append(
            [
                r.label,
                r.framework.value,
                _fmt(r.mean_below),
                _fmt(r.mean_above),
                _fmt(r.estimate),
                _fmt(r.p_value),
                _fmt_ci(r.ci),
                hood,
                str(r.n_minus),
                str(r.n_plus),
            ]
        )
    return markdown_table(headers, body)


def diagnostic_report_markdown(report) -> str:
    parts = []
    for title, rows in (
        ("Covariate balance", report.balance_rows),
        ("Placebo cutoffs", report.placebo_rows),
        ("Donut hole", report.donut_rows),
        ("Neighborhood sensitivity", report.sensitivity_rows),
    ):
        if rows:
            parts.append(f"## {title}\n\n" + diagnostic_rows_markdown(rows))
    if report.first_stage_f is not None:
        parts.append(f"First-stage F: {report.first_stage_f:.2f}\n")
    if report.flags:
        parts.append("Flags: " + ", ".join(report.flags) + "\n")
    return "\n".join(parts)
