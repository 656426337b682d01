"""Tabular scenario output with provenance metadata, written as CSV and JSON."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class ResultTable:
    columns: list[str]
    units: dict[str, str]
    rows: list[list] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    def __len__(self):
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.metadata):
            buf.write(f"# {key}: {json.dumps(_jsonable(self.metadata[key]), sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        buf.write("# units: " + ",".join(self.units.get(c, "") for c in self.columns) + "\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {"columns": self.columns, "units": self.units,
                   "rows": _jsonable(self.rows), "metadata": _jsonable(self.metadata)}
        return json.dumps(payload, indent=1, sort_keys=True)

    def write(self, path, json_mirror: bool = False) -> list[str]:
        """Write CSV to ``path``; with ``json_mirror`` also write ``path`` with a .json suffix."""
        path = str(path)
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())
        written = [path]
        if json_mirror:
            jpath = (path[:-4] if path.endswith(".csv") else path) + ".json"
            with open(jpath, "w") as fh:
                fh.write(self.to_json())
            written.append(jpath)
        return written


def read_csv(path) -> ResultTable:
    """Parse a file written by ResultTable.write (floats come back as floats)."""
    meta, units_line, body = {}, None, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# units: "):
                units_line = line[len("# units: "):].rstrip("\n").split(",")
            elif line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                meta[key] = json.loads(value)
            else:
                body.append(line)
    rows = list(csv.reader(body))
    columns, data = rows[0], rows[1:]

    def parse(v):
        try:
            return float(v)
        except ValueError:
            return v
    units = dict(zip(columns, units_line or [""] * len(columns)))
    return ResultTable(columns, units, [[parse(v) for v in r] for r in data], meta)
