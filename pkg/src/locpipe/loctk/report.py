"""Reporting stage: aggregate recorded results into Markdown and CSV tables.

Reporting never fits models; it reads only recorded artifacts. Inputs are
classified by structure: documents with ``rows``/``aggregates`` are
cross-validation results, flat objects of scalar leaves are metrics files.
Output bytes are a pure function of the inputs.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..canonical import canonical_json, fmt_num
from ..errors import BuiltinError
from . import StageRequest
from .metrics import METRIC_KEYS

_SCALAR = (bool, int, float, str)


def _is_flat_scalars(doc: object) -> bool:
    if not isinstance(doc, dict):
        return False
    return all(
        isinstance(v, _SCALAR) or _is_flat_scalars(v)
        for v in doc.values()
    )


def classify(doc: object) -> str:
    if isinstance(doc, dict) and "rows" in doc and "aggregates" in doc:
        return "cv"
    if _is_flat_scalars(doc):
        return "metrics"
    raise BuiltinError("report: input is neither cv results nor a metrics file")


def _flatten(doc: dict, prefix: str = "") -> list[tuple[str, object]]:
    rows = []
    for key in sorted(doc):
        value = doc[key]
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            rows.extend(_flatten(value, dotted))
        else:
            rows.append((dotted, value))
    return rows


def _cell(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return fmt_num(value)
    return str(value)


def build_report(inputs: list[tuple[str, dict]]) -> tuple[str, str]:
    """Build (markdown, csv) from named input documents, sorted by source name."""
    if not inputs:
        raise BuiltinError("report: no input files")
    cv_sources = []
    metric_sources = []
    for name, doc in sorted(inputs, key=lambda pair: pair[0]):
        kind = classify(doc)
        if kind == "cv":
            cv_sources.append((name, doc))
        else:
            metric_sources.append((name, doc))

    table_rows = []
    for name, doc in cv_sources:
        selected = doc.get("selected")
        for agg in sorted(doc["aggregates"], key=lambda a: a["candidate"]):
            table_rows.append({
                "source": name,
                "candidate": agg["candidate"],
                "model": agg["model"],
                "params": canonical_json(agg["params"]),
                "metrics": agg["metrics"],
                "selected": agg["candidate"] == selected,
            })

    md = io.StringIO()
    md.write("# Experiment report\n")
    if table_rows:
        md.write("\n## Cross-validation aggregates\n\n")
        header = ["source", "candidate", "model", "params", *METRIC_KEYS, "selected"]
        md.write("| " + " | ".join(header) + " |\n")
        md.write("|" + "---|" * len(header) + "\n")
        for row in table_rows:
            cells = [
                row["source"], str(row["candidate"]), row["model"], row["params"],
                *(_cell(row["metrics"].get(key, "")) for key in METRIC_KEYS),
                "yes" if row["selected"] else "",
            ]
            md.write("| " + " | ".join(cells) + " |\n")
    if metric_sources:
        md.write("\n## Recorded metrics\n\n")
        md.write("| source | key | value |\n|---|---|---|\n")
        for name, doc in metric_sources:
            for key, value in _flatten(doc):
                md.write(f"| {name} | {key} | {_cell(value)} |\n")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "candidate", "model", "params", *METRIC_KEYS, "selected"])
    for row in table_rows:
        writer.writerow([
            row["source"], str(row["candidate"]), row["model"], row["params"],
            *(_cell(row["metrics"].get(key, "")) for key in METRIC_KEYS),
            "yes" if row["selected"] else "",
        ])
    return md.getvalue(), buf.getvalue()


def load_input(path: Path | str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BuiltinError(f"report: unparseable input {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise BuiltinError(f"report: unparseable input {path}: not a JSON object")
    return doc


def run(request: StageRequest) -> None:
    if not request.deps:
        raise BuiltinError(f"stage '{request.stage}': report needs at least one input file")
    inputs = [(dep, load_input(dep)) for dep in request.deps]
    markdown, table = build_report(inputs)
    md_out = request.out(0, "Markdown report")
    csv_out = request.out(1, "CSV table")
    md_out.parent.mkdir(parents=True, exist_ok=True)
    csv_out.parent.mkdir(parents=True, exist_ok=True)
    md_out.write_text(markdown, encoding="utf-8")
    csv_out.write_text(table, encoding="utf-8")
