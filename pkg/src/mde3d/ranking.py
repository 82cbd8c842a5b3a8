"""Rank models by a metric and count disagreements between two rankings.

Two rankings drawn as columns joined by straight arrows cross once per pair of
models they order differently, so the inversion count (Kendall tau distance)
is the number of crossings in the diagram.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import AlignmentError, FormatError, MetricLookupError

LOWER = "lower"
HIGHER = "higher"
_DIRECTIONS = (LOWER, HIGHER)


@dataclass(frozen=True)
class MetricColumn:
    values: dict[str, float]
    direction: str

    def __post_init__(self):
        if self.direction not in _DIRECTIONS:
            raise FormatError(f"direction must be one of {_DIRECTIONS}, got {self.direction!r}")


@dataclass(frozen=True)
class MetricTable:
    model_ids: tuple[str, ...]
    columns: dict[str, MetricColumn]

    def __post_init__(self):
        ids = tuple(self.model_ids)
        if len(set(ids)) != len(ids):
            raise FormatError("duplicate model ids in table")
        for name, col in self.columns.items():
            if set(col.values) != set(ids):
                raise FormatError(f"column {name!r} does not cover exactly the table's models")
        object.__setattr__(self, "model_ids", ids)

    @property
    def metrics(self) -> list[str]:
        return list(self.columns)

    @classmethod
    def from_csv(cls, text: str) -> "MetricTable":
        """First row: ``model,<metric>...``; second row: ``direction,<lower|higher>...``."""
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if len(rows) < 2:
            raise FormatError("table needs a header row and a direction row")
        header, directions, body = rows[0], rows[1], rows[2:]
        if directions[0].strip() != "direction" or len(directions) != len(header):
            raise FormatError("second row must be 'direction,' followed by one entry per metric")
        names = [h.strip() for h in header[1:]]
        ids = []
        vals: dict[str, dict[str, float]] = {n: {} for n in names}
        for lineno, row in enumerate(body, start=3):
            if len(row) != len(header):
                raise FormatError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            mid = row[0].strip()
            ids.append(mid)
            for n, tok in zip(names, row[1:]):
                try:
                    vals[n][mid] = float(tok)
                except ValueError:
                    raise FormatError(f"row {lineno}: non-numeric value {tok!r}") from None
        cols = {n: MetricColumn(vals[n], d.strip()) for n, d in zip(names, directions[1:])}
        return cls(tuple(ids), cols)

    @classmethod
    def from_json(cls, text: str) -> "MetricTable":
        """``{"models": [...], "metrics": {name: {"direction": ..., "values": {id: v}}}}``."""
        doc = json.loads(text)
        try:
            cols = {
                name: MetricColumn({k: float(v) for k, v in m["values"].items()}, m["direction"])
                for name, m in doc["metrics"].items()
            }
            return cls(tuple(doc["models"]), cols)
        except (KeyError, TypeError, AttributeError) as exc:
            raise FormatError(f"malformed metric table document: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "MetricTable":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_json(text)
        return cls.from_csv(text)


@dataclass(frozen=True)
class Ranking:
    order: tuple[str, ...]
    metric: str
    direction: str
    ties: tuple[tuple[str, str], ...] = ()

    def position(self) -> dict[str, int]:
        return {m: i for i, m in enumerate(self.order)}


def rank_models(table: MetricTable, metric: str) -> Ranking:
    try:
        col = table.columns[metric]
    except KeyError:
        raise MetricLookupError(f"metric {metric!r} not in table (have {table.metrics})") from None
    sign = 1.0 if col.direction == LOWER else -1.0
    order = sorted(table.model_ids, key=lambda m: (sign * col.values[m], m))
    ties = tuple(
        (a, b) for a, b in zip(order, order[1:]) if col.values[a] == col.values[b]
    )
    return Ranking(tuple(order), metric, col.direction, ties)


def _check_aligned(a: Sequence[str], b: Sequence[str]) -> None:
    sa, sb = set(a), set(b)
    if sa != sb or len(a) != len(b):
        raise AlignmentError(
            f"model ids differ: only in first {sorted(sa - sb)}, only in second {sorted(sb - sa)}"
        )


def _merge_count(seq: list[int]) -> tuple[list[int], int]:
    if len(seq) <= 1:
        return seq, 0
    mid = len(seq) // 2
    left, x = _merge_count(seq[:mid])
    right, y = _merge_count(seq[mid:])
    merged, inv, i, j = [], x + y, 0, 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            inv += len(left) - i
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, inv


def inversion_count(a: Ranking | Sequence[str], b: Ranking | Sequence[str]) -> int:
    """Number of model pairs ordered oppositely by ``a`` and ``b``."""
    oa = a.order if isinstance(a, Ranking) else tuple(a)
    ob = b.order if isinstance(b, Ranking) else tuple(b)
    _check_aligned(oa, ob)
    pos_b = {m: i for i, m in enumerate(ob)}
    return _merge_count([pos_b[m] for m in oa])[1]


@dataclass(frozen=True)
class PairResult:
    depth_metric: str
    detector: str
    inversions: int
    normalized: float
    depth_ranking: Ranking
    det_ranking: Ranking


@dataclass(frozen=True)
class ConcordanceReport:
    det_metric: str
    pairs: tuple[PairResult, ...]
    totals: dict[str, int]
    best_metric: str
    identical_detector_rankings: tuple[tuple[str, str], ...] = field(default=())

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for p in self.pairs:
            out.setdefault(p.depth_metric, {})[p.detector] = p.inversions
        return out

    def to_dict(self) -> dict:
        def rk(r: Ranking) -> dict:
            return {"metric": r.metric, "direction": r.direction, "order": list(r.order),
                    "ties": [list(t) for t in r.ties]}

        return {
            "det_metric": self.det_metric,
            "pairs": [
                {
                    "depth_metric": p.depth_metric,
                    "detector": p.detector,
                    "inversions": p.inversions,
                    "normalized": p.normalized,
                    "depth_ranking": rk(p.depth_ranking),
                    "det_ranking": rk(p.det_ranking),
                }
                for p in self.pairs
            ],
            "counts": self.counts(),
            "totals": self.totals,
            "best_metric": self.best_metric,
            "identical_detector_rankings": [list(t) for t in self.identical_detector_rankings],
        }


def concordance_report(
    depth_table: MetricTable,
    det_tables: Mapping[str, MetricTable],
    det_metric: str = "ap_bev_mod",
    depth_metrics: Sequence[str] | None = None,
) -> ConcordanceReport:
    if not det_tables:
        raise ValueError("at least one detector table is required")
    for name, t in det_tables.items():
        try:
            _check_aligned(depth_table.model_ids, t.model_ids)
        except AlignmentError as exc:
            raise AlignmentError(f"detector {name!r}: {exc}") from None

    metrics = list(depth_metrics) if depth_metrics is not None else depth_table.metrics
    det_rankings = {name: rank_models(t, det_metric) for name, t in det_tables.items()}
    n = len(depth_table.model_ids)
    n_pairs = n * (n - 1) // 2

    pairs, totals = [], {}
    for metric in metrics:
        dr = rank_models(depth_table, metric)
        totals[metric] = 0
        for name, det_r in det_rankings.items():
            inv = inversion_count(dr, det_r)
            totals[metric] += inv
            pairs.append(PairResult(metric, name, inv, inv / n_pairs if n_pairs else 0.0, dr, det_r))

    # first metric in table order wins ties
    best = min(metrics, key=lambda m: totals[m])
    same = tuple(
        (a, b) for a, b in combinations(det_rankings, 2)
        if det_rankings[a].order == det_rankings[b].order
    )
    return ConcordanceReport(det_metric, tuple(pairs), totals, best, same)


def arrow_endpoints(a: Ranking, b: Ranking, spacing: float = 40.0, x_left: float = 200.0,
                    x_right: float = 500.0, y0: float = 60.0) -> list[tuple[str, tuple[float, float], tuple[float, float]]]:
    """Straight arrows from each model's row in ``a`` to its row in ``b``."""
    _check_aligned(a.order, b.order)
    pos_b = b.position()
    return [
        (m, (x_left, y0 + i * spacing), (x_right, y0 + pos_b[m] * spacing))
        for i, m in enumerate(a.order)
    ]


def render_diagram(a: Ranking, b: Ranking, title: str | None = None) -> str:
    """Two labelled columns joined by one arrow per model, as a standalone SVG."""
    spacing, x_left, x_right, y0 = 40.0, 200.0, 500.0, 60.0
    arrows = arrow_endpoints(a, b, spacing, x_left, x_right, y0)
    n = len(a.order)
    width, height = 720, int(y0 + max(n, 1) * spacing + 20)
    pos_b = b.position()
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="13">',
        "<defs>",
        '<marker id="head" viewBox="0 0 10 10" refX="10" refY="5" markerWidth="7" '
        'markerHeight="7" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#333"/></marker>',
        "</defs>",
    ]
    if title:
        lines.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-weight="bold">'
                     f"{escape(title)}</text>")
    lines.append(f'<text x="{x_left}" y="{y0 - 24}" text-anchor="end">{escape(a.metric)}</text>')
    lines.append(f'<text x="{x_right}" y="{y0 - 24}">{escape(b.metric)}</text>')
    for i, m in enumerate(a.order):
        y = y0 + i * spacing
        lines.append(f'<text x="{x_left - 8}" y="{y + 4}" text-anchor="end">{i + 1}. {escape(m)}</text>')
    for m in b.order:
        y = y0 + pos_b[m] * spacing
        lines.append(f'<text x="{x_right + 8}" y="{y + 4}">{pos_b[m] + 1}. {escape(m)}</text>')
    for m, (x1, y1), (x2, y2) in arrows:
        lines.append(
            f'<line class="arrow" data-model="{escape(m)}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" '
            'stroke="#333" stroke-width="1.5" marker-end="url(#head)"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

