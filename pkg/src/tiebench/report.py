"""Aggregation layer: metric-vs-human alignment reports, editing-model
leaderboards with the weighted geometric overall score, and descriptive
CSV exports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .dataset import DIMENSIONS, BenchmarkItem, task_tier
from .errors import (
    CoverageError,
    DegenerateSeries,
    MissingDimension,
    NonPositiveInput,
    ValidationFailure,
)
from .gateway import MetricRun, validate_coverage
from .mos import MosRecord, QaConsensus
from .stats import CorrelationReport, PairedSeries, correlation_report, qa_accuracy

__all__ = [
    "OverallWeights",
    "ModelAggregate",
    "SliceReport",
    "AlignmentReport",
    "overall_score",
    "build_leaderboard",
    "align_metric",
    "export_descriptives",
    "format_table",
]


@dataclass(frozen=True)
class OverallWeights:
    """Exponents of the weighted geometric overall score; must sum to 1.

    The alignment dimension carries the larger default weight. ``allow_zero``
    relaxes strict positivity (used by degeneracy tests only).
    """

    w_quality: float = 0.3
    w_alignment: float = 0.4
    w_preservation: float = 0.3
    allow_zero: bool = False

    def __post_init__(self):
        weights = (self.w_quality, self.w_alignment, self.w_preservation)
        low = min(weights)
        if (low <= 0 and not self.allow_zero) or low < 0:
            raise ValidationFailure("weights must be positive")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValidationFailure(f"weights must sum to 1, got {sum(weights)}")


def overall_score(q: float, e: float, p: float, w: OverallWeights | None = None) -> float:
    """Weighted geometric mean ``q**wq * e**we * p**wp`` of the three
    dimension scores."""
    w = w or OverallWeights()
    if min(q, e, p) <= 0:
        raise NonPositiveInput(f"overall score needs positive inputs, got {(q, e, p)}")
    return q**w.w_quality * e**w.w_alignment * p**w.w_preservation


@dataclass(frozen=True)
class ModelAggregate:
    """Per-editing-model aggregate row of the leaderboard."""

    editing_model: str
    n_items: int
    mean_mos: Mapping[str, float]
    qa_accuracy: float
    overall: float
    rank_overall: int
    rank_acc: int


def _ordinal_ranks(scores: Mapping[str, float]) -> dict[str, int]:
    # Descending ordinal ranks 1..M; exact ties break lexicographically by
    # model name so printed orders are total and reproducible.
    order = sorted(scores, key=lambda name: (-scores[name], name))
    return {name: pos for pos, name in enumerate(order, start=1)}


def build_leaderboard(
    mos_records: Sequence[MosRecord],
    qa: Sequence[QaConsensus],
    manifest: Sequence[BenchmarkItem],
    weights: OverallWeights | None = None,
    *,
    expected_answers: Optional[Mapping[str, bool]] = None,
    zero_floor: float = 0.01,
) -> list[ModelAggregate]:
    """Aggregate per-item MOSs into per-model means, overall scores, and ranks.

    QA accuracy per model is the fraction of its items whose consensus
    answer matches the intended one (yes unless ``expected_answers`` says
    otherwise). Dimension means of 0 are lifted to ``zero_floor`` before the
    geometric overall score.
    """
    weights = weights or OverallWeights()
    mos_by_key = {(r.item_id, r.dimension): r for r in mos_records}
    qa_by_item = {c.item_id: c for c in qa}

    by_model: dict[str, list[BenchmarkItem]] = {}
    for item in manifest:
        by_model.setdefault(item.editing_model, []).append(item)

    means: dict[str, dict[str, float]] = {}
    accuracy: dict[str, float] = {}
    for model in sorted(by_model):
        items = sorted(by_model[model], key=lambda it: it.item_id)
        dim_means: dict[str, float] = {}
        for dim in DIMENSIONS:
            values = []
            for item in items:
                rec = mos_by_key.get((item.item_id, dim))
                if rec is None or rec.mos is None:
                    raise MissingDimension(
                        f"item {item.item_id!r} has no MOS for dimension {dim!r}"
                    )
                values.append(rec.mos)
            dim_means[dim] = sum(values) / len(values)
        hits = 0
        for item in items:
            consensus = qa_by_item.get(item.item_id)
            if consensus is None:
                raise MissingDimension(
                    f"item {item.item_id!r} has no QA consensus"
                )
            expected = True if expected_answers is None else expected_answers.get(
                item.item_id, True
            )
            if consensus.majority == expected:
                hits += 1
        means[model] = dim_means
        accuracy[model] = hits / len(items)

    overall: dict[str, float] = {}
    for model, dim_means in means.items():
        floored = {d: max(v, zero_floor) for d, v in dim_means.items()}
        overall[model] = overall_score(
            floored["quality"], floored["alignment"], floored["preservation"], weights
        )

    rank_overall = _ordinal_ranks(overall)
    rank_acc = _ordinal_ranks(accuracy)
    rows = [
        ModelAggregate(
            editing_model=model,
            n_items=len(by_model[model]),
            mean_mos=means[model],
            qa_accuracy=accuracy[model],
            overall=overall[model],
            rank_overall=rank_overall[model],
            rank_acc=rank_acc[model],
        )
        for model in sorted(by_model)
    ]
    rows.sort(key=lambda r: r.rank_overall)
    return rows


@dataclass(frozen=True)
class SliceReport:
    """Correlation statistics for one (slice, dimension) cell; ``error``
    holds the degeneracy message when the coefficient is undefined."""

    slice_name: str
    dimension: str
    n: int
    report: Optional[CorrelationReport]
    error: Optional[str] = None


@dataclass(frozen=True)
class AlignmentReport:
    """Metric-vs-human statistics, globally and per slice."""

    metric_name: str
    slices: tuple[SliceReport, ...]
    qa_accuracy: Mapping[str, Optional[float]]
    metadata: Mapping[str, object]

    def cell(self, slice_name: str, dimension: str) -> SliceReport:
        for s in self.slices:
            if s.slice_name == slice_name and s.dimension == dimension:
                return s
        raise KeyError((slice_name, dimension))


def _finite_for_ranks(values: list[float]) -> tuple[list[float], bool]:
    # A +inf sentinel (PSNR on identical images) must order above every
    # finite value; substitute max finite + 1 so the series stays legal.
    finite = [v for v in values if math.isfinite(v)]
    if len(finite) == len(values):
        return values, False
    ceiling = (max(finite) if finite else 0.0) + 1.0
    return [v if math.isfinite(v) else ceiling for v in values], True


def align_metric(
    run: MetricRun,
    mos_records: Sequence[MosRecord],
    qa_truth: Sequence[QaConsensus],
    manifest: Sequence[BenchmarkItem],
    *,
    slicing: Sequence[str] = ("global",),
) -> AlignmentReport:
    """Correlate a metric run against human ground truth.

    ``slicing`` may include ``"global"``, ``"per-tier"``, and ``"per-task"``.
    Degenerate slices are reported in place, never fatal for the whole run.
    """
    unknown = set(slicing) - {"global", "per-tier", "per-task"}
    if unknown:
        raise ValidationFailure(f"unknown slicing {sorted(unknown)}")
    validate_coverage(run, manifest)

    truth: dict[tuple[str, str], float] = {}
    for rec in mos_records:
        if rec.mos is not None:
            truth[(rec.item_id, rec.dimension)] = rec.mos
    truth_dims = sorted({dim for (_, dim) in truth})
    dims = [d for d in run.claimed_dimensions() if d in truth_dims]
    skipped_dims = sorted(set(run.claimed_dimensions()) - set(dims))
    if not dims and not run.qa_predictions:
        raise CoverageError(
            f"run {run.metric_name!r} shares no dimension with the MOS table "
            f"(run: {run.claimed_dimensions()}, truth: {truth_dims})"
        )

    items = sorted(manifest, key=lambda it: it.item_id)
    for item in items:
        for dim in dims:
            if (item.item_id, dim) not in truth:
                raise CoverageError(
                    f"item {item.item_id!r} has no ground-truth MOS for {dim!r}"
                )

    groups: dict[str, list[BenchmarkItem]] = {"global": items}
    if "per-tier" in slicing:
        for item in items:
            groups.setdefault(f"tier:{task_tier(item.task)}", []).append(item)
    if "per-task" in slicing:
        for item in items:
            groups.setdefault(f"task:{item.task}", []).append(item)

    inf_substituted = False
    slices: list[SliceReport] = []
    for name in sorted(groups, key=lambda n: (n != "global", n)):
        members = groups[name]
        for dim in dims:
            xs = [run.predictions[(item.item_id, dim)] for item in members]
            ys = [truth[(item.item_id, dim)] for item in members]
            xs, substituted = _finite_for_ranks(xs)
            inf_substituted = inf_substituted or substituted
            try:
                series = PairedSeries(
                    x=xs, y=ys, labels=tuple(item.item_id for item in members)
                )
                report = correlation_report(series)
                slices.append(SliceReport(name, dim, len(members), report))
            except (DegenerateSeries, ValidationFailure) as exc:
                slices.append(SliceReport(name, dim, len(members), None, str(exc)))

    qa_by_item = {c.item_id: c.majority for c in qa_truth}
    qa_acc: dict[str, Optional[float]] = {}
    if run.qa_predictions:
        for name in sorted(groups, key=lambda n: (n != "global", n)):
            members = [it for it in groups[name] if it.item_id in qa_by_item]
            if not members:
                qa_acc[name] = None
                continue
            predicted = [run.qa_predictions[it.item_id] for it in members]
            actual = [qa_by_item[it.item_id] for it in members]
            qa_acc[name] = qa_accuracy(predicted, actual)

    return AlignmentReport(
        metric_name=run.metric_name,
        slices=tuple(slices),
        qa_accuracy=qa_acc,
        metadata={
            "source": run.source,
            "dimensions": dims,
            "skipped_dimensions": skipped_dims,
            "n_items": len(items),
            "psnr_inf_substituted": inf_substituted,
        },
    )


def export_descriptives(
    mos_records: Sequence[MosRecord],
    manifest: Sequence[BenchmarkItem],
    out_dir: str | Path,
    *,
    bin_width: float = 5.0,
) -> dict[str, Path]:
    """Write the aggregate CSVs behind the study's descriptive figures.

    * ``mos_histogram.csv`` — per-dimension MOS histogram, bins of
      ``bin_width`` on [0, 100], last bin closed.
    * ``task_summary.csv`` — item counts and mean MOSs per task.
    * ``model_summary.csv`` — per-model dimension means.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_key = {(r.item_id, r.dimension): r.mos for r in mos_records if r.mos is not None}
    dims = sorted({r.dimension for r in mos_records})
    items = sorted(manifest, key=lambda it: it.item_id)

    n_bins = int(round(100.0 / bin_width))
    hist_path = out_dir / "mos_histogram.csv"
    with open(hist_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dimension", "bin_lo", "bin_hi", "count"])
        for dim in dims:
            counts = [0] * n_bins
            for item in items:
                mos = by_key.get((item.item_id, dim))
                if mos is None:
                    continue
                idx = min(int(mos // bin_width), n_bins - 1)
                counts[idx] += 1
            for i, count in enumerate(counts):
                writer.writerow([dim, i * bin_width, (i + 1) * bin_width, count])

    task_path = out_dir / "task_summary.csv"
    by_task: dict[str, list[BenchmarkItem]] = {}
    for item in items:
        by_task.setdefault(item.task, []).append(item)
    with open(task_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "tier", "n_items"] + [f"mean_{d}" for d in dims])
        for task in sorted(by_task):
            members = by_task[task]
            row: list[object] = [task, task_tier(task), len(members)]
            for dim in dims:
                values = [
                    by_key[(it.item_id, dim)]
                    for it in members
                    if (it.item_id, dim) in by_key
                ]
                row.append(sum(values) / len(values) if values else "")
            writer.writerow(row)

    model_path = out_dir / "model_summary.csv"
    by_model: dict[str, list[BenchmarkItem]] = {}
    for item in items:
        by_model.setdefault(item.editing_model, []).append(item)
    with open(model_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["editing_model", "n_items"] + [f"mean_{d}" for d in dims])
        for model in sorted(by_model):
            members = by_model[model]
            row = [model, len(members)]
            for dim in dims:
                values = [
                    by_key[(it.item_id, dim)]
                    for it in members
                    if (it.item_id, dim) in by_key
                ]
                row.append(sum(values) / len(values) if values else "")
            writer.writerow(row)

    return {
        "mos_histogram": hist_path,
        "task_summary": task_path,
        "model_summary": model_path,
    }


def format_table(headers: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Render an aligned-text table."""
    str_rows = [[str(c) for c in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in str_rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for row in str_rows:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines)


def leaderboard_rows_json(rows: Sequence[ModelAggregate]) -> list[str]:
    """Leaderboard rows as line-delimited JSON strings."""
    out = []
    for row in rows:
        out.append(
            json.dumps(
                {
                    "editing_model": row.editing_model,
                    "n_items": row.n_items,
                    "mean_quality": row.mean_mos["quality"],
                    "mean_alignment": row.mean_mos["alignment"],
                    "mean_preservation": row.mean_mos["preservation"],
                    "qa_accuracy": row.qa_accuracy,
                    "overall": row.overall,
                    "rank_overall": row.rank_overall,
                    "rank_acc": row.rank_acc,
                }
            )
        )
    return out


def alignment_rows_json(report: AlignmentReport) -> list[str]:
    """Alignment report cells as line-delimited JSON strings."""
    out = []
    for cell in report.slices:
        obj: dict[str, object] = {
            "metric": report.metric_name,
            "slice": cell.slice_name,
            "dimension": cell.dimension,
            "n": cell.n,
        }
        if cell.report is not None:
            obj.update(
                srcc=cell.report.srcc,
                krcc=cell.report.krcc,
                plcc=cell.report.plcc,
                rmse=cell.report.rmse,
            )
        else:
            obj["error"] = cell.error
        out.append(json.dumps(obj))
    for slice_name, acc in report.qa_accuracy.items():
        out.append(
            json.dumps(
                {
                    "metric": report.metric_name,
                    "slice": slice_name,
                    "dimension": "qa",
                    "accuracy": acc,
                }
            )
        )
    return out
