"""Result frames: the tabular outcome of an exploration run.

A frame has one row per surviving point, with raw parameter values,
frozen params, accumulated metrics and a degradation flag, plus
per-step provenance. Machine exports (CSV, line-delimited JSON) keep
full shortest-round-trip precision; human tables render values
truncated to 2 decimals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError
from .space import DesignSpace


@dataclass(frozen=True)
class StepReport:
    """Provenance of one executed step."""

    step: str
    kind: str
    points_in: int
    points_out: int | None
    evaluator_invocations: int
    cache_hits: int
    wall_time_s: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "kind": self.kind,
            "points_in": self.points_in,
            "points_out": self.points_out,
            "evaluator_invocations": self.evaluator_invocations,
            "cache_hits": self.cache_hits,
            "wall_time_s": self.wall_time_s,
            **self.extra,
        }


@dataclass(frozen=True)
class Provenance:
    steps: tuple[StepReport, ...]
    parallelism: int
    total_wall_time_s: float
    info: dict = field(default_factory=dict)

    @property
    def total_invocations(self) -> int:
        return sum(s.evaluator_invocations for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "parallelism": self.parallelism,
            "total_wall_time_s": self.total_wall_time_s,
            "total_evaluator_invocations": self.total_invocations,
            **self.info,
            "steps": [s.to_dict() for s in self.steps],
        }


def _merge_metric_order(points) -> list[str]:
    """Merge per-point metric sequences into one column order.

    Per-point sequences follow production order; a name absent from
    earlier points is inserted right after its in-point predecessor.
    """
    order: list[str] = []
    for p in points:
        prev = -1
        for name in p.metric_names():
            if name in order:
                prev = order.index(name)
            else:
                order.insert(prev + 1, name)
                prev += 1
    return order


@dataclass(frozen=True)
class ResultFrame:
    """Ordered rows of raw values; None marks a metric absent on a row."""

    param_columns: tuple[str, ...]
    frozen_columns: tuple[str, ...]
    metric_columns: tuple[str, ...]
    rows: tuple[tuple[float | None, ...], ...]
    provenance: Provenance | None = None

    @property
    def columns(self) -> tuple[str, ...]:
        return self.param_columns + self.frozen_columns + self.metric_columns + ("degraded",)

    def __len__(self) -> int:
        return len(self.rows)

    def row_dicts(self) -> list[dict[str, float]]:
        cols = self.columns
        return [
            {c: v for c, v in zip(cols, row) if v is not None} for row in self.rows
        ]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join("" if v is None else repr(float(v)) for v in row) + "\n")

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as fh:
            for d in self.row_dicts():
                fh.write(json.dumps(d) + "\n")

    def provenance_json(self, path: str | Path) -> None:
        if self.provenance is None:
            raise ConfigError("frame has no provenance to write")
        with open(path, "w", newline="\n") as fh:
            json.dump(self.provenance.to_dict(), fh, indent=2)
            fh.write("\n")


def build_frame(space: DesignSpace, provenance: Provenance | None = None) -> ResultFrame:
    """Tabulate a design space into a result frame.

    Column order: parameters in schema order, frozen params in demotion
    order, metrics in accumulation order, then the degradation flag.
    """
    param_cols = space.schema.names
    frozen_cols: tuple[str, ...] = ()
    if space.points:
        frozen_cols = tuple(m.name for m in space.points[0].frozen_params)
        for p in space.points:
            if tuple(m.name for m in p.frozen_params) != frozen_cols:
                raise ConfigError("points disagree on frozen parameter columns")
    metric_cols = tuple(_merge_metric_order(space.points))

    rows = []
    for p in space.points:
        row: list[float | None] = [float(v) for v in space.raw_values(p)]
        row.extend(m.value for m in p.frozen_params)
        by_name = {m.name: m.value for m in p.metrics}
        row.extend(by_name.get(c) for c in metric_cols)
        row.append(1.0 if p.degraded else 0.0)
        rows.append(tuple(row))
    return ResultFrame(param_cols, frozen_cols, metric_cols, tuple(rows), provenance)


def load_rows(path: str | Path) -> tuple[list[str], list[dict[str, float]]]:
    """Read a saved frame (CSV or JSONL) back as column names plus rows."""
    path = Path(path)
    if path.suffix == ".jsonl":
        rows = []
        columns: list[str] = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                d = {k: float(v) for k, v in json.loads(line).items()}
                for k in d:
                    if k not in columns:
                        columns.append(k)
                rows.append(d)
        return columns, rows
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            return [], []
        columns = header.split(",")
        rows = []
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            values = line.split(",")
            rows.append(
                {c: float(v) for c, v in zip(columns, values) if v != ""}
            )
        return columns, rows


def render_2dp(value: float) -> str:
    """Render a value truncated (not rounded) to 2 decimals.

    Truncation keeps 247.56/0.77 at 321.50, the presentation used in
    ranked tables.
    """
    return str(Decimal(str(float(value))).quantize(Decimal("0.01"), rounding=ROUND_DOWN))


def _render_params(values: Sequence[float]) -> str:
    parts = []
    for v in values:
        parts.append(str(int(v)) if float(v).is_integer() else render_2dp(v))
    return "[" + ", ".join(parts) + "]"


def render_top_table(frame: ResultFrame, top: int = 5) -> str:
    """Ranked table of the frame's head: Rank | Parameters | metrics."""
    n_params = len(frame.param_columns) + len(frame.frozen_columns)
    headers = ["Rank", "Parameters"] + list(frame.metric_columns) + ["degraded"]
    table = [headers]
    for rank, row in enumerate(frame.rows[:top], start=1):
        cells = [str(rank), _render_params([v for v in row[:n_params]])]
        for v in row[n_params:]:
            cells.append("" if v is None else render_2dp(v))
        table.append(cells)
    return _align(table)


def render_rows_table(
    columns: Sequence[str], rows: Sequence[Mapping[str, float]], top: int | None = None
) -> str:
    """Generic table over loaded rows, 2-decimal truncated."""
    headers = ["Rank"] + list(columns)
    table = [headers]
    shown = rows if top is None else rows[:top]
    for rank, row in enumerate(shown, start=1):
        cells = [str(rank)]
        for c in columns:
            cells.append(render_2dp(row[c]) if c in row else "")
        table.append(cells)
    return _align(table)


def _align(table: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = []
    for r in table:
        lines.append(" | ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
