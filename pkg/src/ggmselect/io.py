"""File formats: data CSV, p-value CSV, JSON selection report and DOT graphs."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import graph as gr
from .selection import SelectionResult
from .stats import Dataset


class FormatError(ValueError):
    """Malformed input file."""


def _rows(text: str) -> list[list[str]]:
    return [row for row in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in row)]


def read_dataset(path: str | Path) -> Dataset:
    """Read a CSV with a header of variable names and one numeric row per observation."""
    return parse_dataset(Path(path).read_text())


def parse_dataset(text: str) -> Dataset:
    rows = _rows(text)
    if not rows:
        raise FormatError("empty data file")
    names = [c.strip() for c in rows[0]]
    if len(set(names)) != len(names) or not all(names):
        raise FormatError("header must contain distinct, nonempty variable names")
    values = np.empty((len(rows) - 1, len(names)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise FormatError(f"row {r}: expected {len(names)} columns, found {len(row)}")
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise FormatError(f"row {r}, column {c} ({names[c - 1]}): not a number: {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise FormatError(f"row {r}, column {c} ({names[c - 1]}): non-finite value")
            values[r - 2, c - 1] = v
    return Dataset(values, tuple(names))


def write_dataset(path: str | Path, values: np.ndarray, names) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in np.asarray(values):
        w.writerow([repr(float(v)) for v in row])
    Path(path).write_text(buf.getvalue())


def parse_pvalues(text: str) -> tuple[list[str], np.ndarray]:
    """``label,p`` rows; a header row is detected when its second cell is not numeric."""
    rows = _rows(text)
    if rows:
        try:
            float(rows[0][1])
        except (ValueError, IndexError):
            rows = rows[1:]
    if not rows:
        raise FormatError("no p-values found")
    labels, ps = [], []
    for r, row in enumerate(rows, start=1):
        if len(row) < 2:
            raise FormatError(f"row {r}: expected 'label,p'")
        try:
            v = float(row[1])
        except ValueError:
            raise FormatError(f"row {r}: p-value {row[1].strip()!r} is not a number") from None
        if not 0 <= v <= 1:
            raise FormatError(f"row {r}: p-value {v} outside [0, 1]")
        labels.append(row[0].strip())
        ps.append(v)
    return labels, np.array(ps)


def format_adjusted(labels, p, adjusted) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "p", "p_adjusted"])
    for lab, a, b in zip(labels, p, adjusted):
        w.writerow([lab, repr(float(a)), repr(float(b))])
    return buf.getvalue()


def read_matrix(path: str | Path) -> np.ndarray:
    rows = _rows(Path(path).read_text())
    try:
        return np.array([[float(c) for c in row] for row in rows])
    except ValueError as exc:
        raise FormatError(f"matrix file: {exc}") from None


# --- reports ----------------------------------------------------------------------


def report_dict(res: SelectionResult) -> dict:
    names = res.names

    def name(v):
        return names[v - 1]

    edges = [{"i": a, "j": b, "from": name(a), "to": name(b),
              "source": "prior" if (a, b) in res.prior.present else "test"}
             for a, b in res.graph.sorted_edges()]
    table = [dict(row, name_i=name(row["i"]), name_j=name(row["j"]),
                  conditioning_names=[name(v) for v in row["conditioning"]]) for row in res.table]
    return {
        "graph_class": res.graph_class.kind,
        "order": [name(v) for v in res.graph_class.order] if res.graph_class.order else None,
        "variables": list(names),
        "n": res.n,
        "alpha": res.alpha,
        "method": res.method,
        "error_rate": str(res.error_rate),
        "decision_basis": res.decision_basis,
        "mc_draws": res.draws,
        "seed": res.seed,
        "reduced_conditioning": res.reduced,
        "prior": {"present": [list(e) for e in sorted(res.prior.present)],
                  "absent": [list(e) for e in sorted(res.prior.absent)]},
        "notes": res.notes,
        "edge_count": len(res.graph),
        "edges": edges,
        "tests": table,
    }


def to_json(res: SelectionResult) -> str:
    return json.dumps(report_dict(res), indent=2) + "\n"


def to_dot(g: gr.Graph, names=None) -> str:
    """DOT text: ``--`` for undirected, ``dir=both`` arrows for bidirected, arrows for directed."""
    names = list(names) if names else [str(v) for v in g.vertices]

    def q(v):
        return json.dumps(names[v - 1])

    if g.kind == gr.UNDIRECTED:
        head, tok, attr = "graph G {", "--", ""
    else:
        head, tok = "digraph G {", "->"
        attr = " [dir=both]" if g.kind == gr.BIDIRECTED else ""
    lines = [head]
    lines += [f"  {q(v)};" for v in g.vertices]
    lines += [f"  {q(a)} {tok} {q(b)}{attr};" for a, b in g.sorted_edges()]
    lines.append("}")
    return "\n".join(lines) + "\n"


def parse_dot_edges(text: str) -> set[tuple[str, str]]:
    """Edge name pairs from DOT produced by :func:`to_dot` (used by tests and tooling)."""
    out = set()
    for line in text.splitlines():
        line = line.strip().rstrip(";")
        for tok in (" -- ", " -> "):
            if tok in line:
                a, b = line.split(tok, 1)
                b = b.split(" [", 1)[0]
                out.add((json.loads(a), json.loads(b)))
    return out
