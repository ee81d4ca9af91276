"""Summary tables over finished runs.

Each input is either a results stream (``*.ndjson``) or its ``*.summary.json``
sidecar. Runs are grouped by tag (method, attack, distribution by default)
and the final-round metrics are reported as mean and sample std.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .harness import SCHEMA_VERSION

DEFAULT_GROUP_BY = ("method", "attack", "distribution")
METRICS = ("accuracy", "aeod", "aspd")
INVALID = "invalid"


class SummaryError(ValueError):
    pass


def read_summary(path: str | Path) -> dict:
    """The summary record of one run, schema-checked."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SummaryError(f"{path}: {exc.strerror or exc}") from exc
    summary = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SummaryError(f"{path}:{lineno}: not JSON ({exc.msg})") from exc
        if obj.get("type") == "summary":
            summary = obj
    if summary is None:
        raise SummaryError(f"{path}: no summary record (run incomplete?)")
    version = summary.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SummaryError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    return summary


@dataclass
class Cell:
    key: tuple
    values: dict[str, list[float]] = field(default_factory=lambda: {m: [] for m in METRICS})
    thresholds: list[float] = field(default_factory=list)
    sources: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.sources)

    def stats(self, metric: str) -> tuple[float, float] | None:
        vals = self.values[metric]
        if len(vals) < self.n or not vals:
            return None  # undefined in at least one run
        mean = float(np.mean(vals))
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        return mean, std

    @property
    def fairness_valid(self) -> bool:
        acc = self.stats("accuracy")
        return acc is not None and acc[0] >= max(self.thresholds)


def collect(summaries: Iterable[tuple[str, dict]], group_by: Sequence[str] = DEFAULT_GROUP_BY
            ) -> list[Cell]:
    cells: dict[tuple, Cell] = {}
    for source, summ in summaries:
        tags = summ.get("tags", {})
        missing = [k for k in group_by if k not in tags]
        if missing:
            raise SummaryError(f"{source}: no tag {missing[0]!r} to group by")
        key = tuple(str(tags[k]) for k in group_by)
        cell = cells.setdefault(key, Cell(key))
        final = summ["final"]
        for m in METRICS:
            if final.get(m) is not None and math.isfinite(final[m]):
                cell.values[m].append(float(final[m]))
        cell.thresholds.append(float(final["threshold"]))
        cell.sources.append(source)
    return [cells[k] for k in sorted(cells)]


def _fmt(stats: tuple[float, float] | None, n: int, scale: float) -> str:
    if stats is None:
        return "undefined"
    mean, std = stats
    if n > 1:
        return f"{mean * scale:.2f} ± {std * scale:.2f}"
    return f"{mean * scale:.2f}"


def rows(cells: Sequence[Cell], group_by: Sequence[str]) -> list[dict]:
    """One flat dict per cell; fairness columns carry the validity marker."""
    out = []
    for cell in cells:
        row = dict(zip(group_by, cell.key))
        row["runs"] = cell.n
        for m in METRICS:
            st = cell.stats(m)
            row[f"{m}_mean"] = None if st is None else st[0]
            row[f"{m}_std"] = None if st is None else st[1]
        row["fairness_valid"] = cell.fairness_valid
        out.append(row)
    return out


def to_csv(cells: Sequence[Cell], group_by: Sequence[str]) -> str:
    buf = io.StringIO()
    table = rows(cells, group_by)
    fields = [*group_by, "runs"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")] \
        + ["fairness_valid"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in table:
        writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return buf.getvalue()


def to_text(cells: Sequence[Cell], group_by: Sequence[str]) -> str:
    """Accuracy in percent, gaps as fractions; an invalid cell shows its gaps in brackets."""
    header = [*group_by, "n", "ACC(%)", "AEOD", "ASPD"]
    body = []
    for cell in cells:
        acc = _fmt(cell.stats("accuracy"), cell.n, 100.0)
        gaps = [_fmt(cell.stats(m), cell.n, 1.0) for m in ("aeod", "aspd")]
        if not cell.fairness_valid:
            gaps = [f"{INVALID} [{g}]" for g in gaps]
        body.append([*cell.key, str(cell.n), acc, *gaps])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _run_stem(path: Path) -> Path:
    name = path.name
    for suffix in (".summary.json", ".ndjson"):
        if name.endswith(suffix):
            return path.with_name(name[: -len(suffix)])
    return path


def _unique_runs(paths: Sequence[str | Path]) -> list[Path]:
    """Drop a ``.summary.json`` when its ``.ndjson`` stream is also listed (and repeats)."""
    seen, out = set(), []
    for p in paths:
        stem = _run_stem(Path(p)).resolve()
        if stem not in seen:
            seen.add(stem)
            out.append(Path(p))
    return out


def summarize(paths: Sequence[str | Path], group_by: Sequence[str] = DEFAULT_GROUP_BY,
              fmt: str = "text") -> str:
    if not paths:
        raise SummaryError("no results files given")
    cells = collect(((str(p), read_summary(p)) for p in _unique_runs(paths)), group_by)
    if fmt == "csv":
        return to_csv(cells, group_by)
    if fmt == "text":
        return to_text(cells, group_by)
    raise SummaryError(f"unknown format {fmt!r}")
