"""Report container with JSON, aligned-text and CSV renderings.

JSON keeps full float precision so that every number equals the library
result bit for bit; text and CSV round to 6 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def _plain(v):
    """Convert numpy scalars and non-finite floats to JSON-safe values."""
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6g}"
    return str(v)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError("cell count does not match the columns")
        self.rows.append(list(cells))

    def to_text(self) -> str:
        cells = [[fmt(c) for c in row] for row in self.rows]
        widths = [max([len(h)] + [len(r[i]) for r in cells]) for i, h in enumerate(self.columns)]
        lines = ["  ".join(h.rjust(w) for h, w in zip(self.columns, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([fmt(c) for c in row])
        return buf.getvalue()


@dataclass
class Report:
    command: str
    digest: str = ""
    tables: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def table(self, name: str, columns) -> Table:
        self.tables[name] = Table(list(columns))
        return self.tables[name]

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "scenario_digest": self.digest,
            "tables": {k: {"columns": t.columns, "rows": _plain(t.rows)} for k, t in self.tables.items()},
            "diagnostics": _plain(self.diagnostics),
            "failures": _plain(self.failures),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def to_text(self) -> str:
        parts = [f"# {self.command}"]
        if self.digest:
            parts.append(f"scenario digest {self.digest[:16]}")
        for name, t in self.tables.items():
            parts += ["", f"[{name}]", t.to_text()]
        if self.failures:
            parts += ["", "[failures]"]
            parts += [
                f"{f['criterion']}: expected {f['expected']} got {f['actual']} (tolerance {f['tolerance']})"
                for f in self.failures
            ]
        return "\n".join(parts) + "\n"

    def write_csv(self, directory) -> list:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, t in self.tables.items():
            p = out / f"{name}.csv"
            p.write_text(t.to_csv())
            paths.append(p)
        return paths


def load_report(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported report format {doc.get('format_version')!r}")
    for key in ("command", "tables", "diagnostics"):
        if key not in doc:
            raise ValueError(f"report is missing {key!r}")
    return doc
