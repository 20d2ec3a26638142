"""Raw ratings to mean opinion scores: outlier rejection, subject screening,
per-subject Z-score normalization, and linear rescaling to [0, 100].

Pipeline order: flag outliers per (item, dimension) in a single pass; screen
subjects whose pooled outlier fraction strictly exceeds the reject fraction;
drop flagged ratings and excluded subjects; recompute per-subject mean/std
over the surviving ratings; average Z-scores per item; rescale by
``100 * (z + 3) / 6`` and clamp into [0, 100].

Standard deviations use the n-1 normalization throughout; kurtosis is the
plain coefficient ``m4 / m2**2`` of population central moments (3 for a
normal distribution), so the normality band defaults to [2, 4].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .dataset import DIMENSIONS, RatingRecord
from .errors import ValidationFailure

__all__ = [
    "OutlierPolicy",
    "ItemDimStats",
    "OutlierFlags",
    "SubjectProfile",
    "MosRecord",
    "QaConsensus",
    "MosTable",
    "rescale_z",
    "flag_outliers",
    "screen_subjects",
    "compute_mos",
    "qa_consensus",
    "process_ratings",
    "write_mos_table",
    "load_mos_records",
    "write_qa_consensus",
    "load_qa_consensus",
]

FlagKey = tuple[str, str, str]  # (subject_id, item_id, dimension)


@dataclass(frozen=True)
class OutlierPolicy:
    """Thresholds for outlier flagging and subject screening."""

    normal_k: float = 2.0
    nonnormal_k: float = math.sqrt(20.0)
    subject_reject_fraction: float = 0.05
    normality_kurtosis_band: tuple[float, float] = (2.0, 4.0)

    def __post_init__(self):
        if self.normal_k <= 0 or self.nonnormal_k <= 0:
            raise ValidationFailure("outlier multipliers must be positive")
        if not (0.0 < self.subject_reject_fraction < 1.0):
            raise ValidationFailure("subject_reject_fraction must be in (0, 1)")
        lo, hi = self.normality_kurtosis_band
        if lo > hi:
            raise ValidationFailure("kurtosis band lower bound exceeds upper bound")


@dataclass(frozen=True)
class ItemDimStats:
    """Per (item, dimension) statistics used by the flagging pass."""

    item_id: str
    dimension: str
    n: int
    mean: float
    std: float
    kurtosis: Optional[float]
    normal: Optional[bool]
    k_used: Optional[float]
    n_flagged: int


@dataclass(frozen=True)
class OutlierFlags:
    """Flag set plus the per-item statistics that produced it."""

    flagged: frozenset[FlagKey]
    item_stats: Mapping[tuple[str, str], ItemDimStats]

    def is_flagged(self, subject_id: str, item_id: str, dimension: str) -> bool:
        return (subject_id, item_id, dimension) in self.flagged


@dataclass(frozen=True)
class SubjectProfile:
    """Screening outcome and normalization statistics for one subject."""

    subject_id: str
    mean: Mapping[str, Optional[float]]
    std: Mapping[str, Optional[float]]
    n_ratings: int
    n_flagged: int
    outlier_fraction: float
    excluded: bool


@dataclass(frozen=True)
class MosRecord:
    """Final MOS for one (item, dimension); ``mos`` is None when no rating
    survived (the item is reported, never silently dropped).

    ``n_removed`` counts flagged ratings from non-excluded subjects only;
    ratings lost to subject exclusion are accounted in the table summary.
    """

    item_id: str
    dimension: str
    mos: Optional[float]
    n_valid: int
    n_removed: int
    raw_mean: Optional[float]
    raw_std: Optional[float]


@dataclass(frozen=True)
class QaConsensus:
    """Majority yes/no answer for one item; exact 50/50 resolves to yes
    with the tie marker set."""

    item_id: str
    yes_fraction: float
    majority: bool
    n_answers: int
    tie: bool = False


@dataclass(frozen=True)
class MosTable:
    """Full output of the subjective pipeline."""

    records: tuple[MosRecord, ...]
    qa: tuple[QaConsensus, ...]
    profiles: tuple[SubjectProfile, ...]
    summary: Mapping[str, object]

    def by_key(self) -> dict[tuple[str, str], MosRecord]:
        return {(r.item_id, r.dimension): r for r in self.records}

    def empty_items(self) -> list[tuple[str, str]]:
        return [(r.item_id, r.dimension) for r in self.records if r.mos is None]


def rescale_z(z: float) -> float:
    """Map a mean Z-score to the MOS scale: ``100 * (z + 3) / 6`` clamped
    into [0, 100] (z = 0 is the 50-point center, z = 3 the top)."""
    return min(100.0, max(0.0, 100.0 * (z + 3.0) / 6.0))


def _canonical(ratings: Sequence[RatingRecord]) -> list[RatingRecord]:
    # Canonical processing order makes every float reduction, and therefore
    # the emitted table, independent of input record order.
    return sorted(ratings, key=lambda r: (r.subject_id, r.item_id))


def _sample_std(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def flag_outliers(ratings: Sequence[RatingRecord], policy: OutlierPolicy) -> OutlierFlags:
    """Single-pass outlier detection per (item, dimension).

    A rating is flagged iff ``|r - mean| > k * std`` where ``k`` is
    ``normal_k`` when the item's kurtosis lies inside the normality band and
    ``nonnormal_k`` otherwise. Statistics include the candidate rating
    itself; groups with fewer than 2 ratings or zero spread flag nothing.
    """
    ordered = _canonical(ratings)
    groups: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for rec in ordered:
        for dim in DIMENSIONS:
            groups.setdefault((rec.item_id, dim), []).append(
                (rec.subject_id, rec.scores[dim])
            )

    flagged: set[FlagKey] = set()
    item_stats: dict[tuple[str, str], ItemDimStats] = {}
    lo, hi = policy.normality_kurtosis_band
    for (item_id, dim), entries in sorted(groups.items()):
        values = np.array([v for _, v in entries], dtype=float)
        n = values.size
        mean = float(values.mean())
        std = _sample_std(values)
        kurtosis: Optional[float] = None
        normal: Optional[bool] = None
        k_used: Optional[float] = None
        n_flagged = 0
        if n >= 2 and std > 0.0:
            centered = values - mean
            m2 = float(np.mean(centered**2))
            m4 = float(np.mean(centered**4))
            kurtosis = m4 / (m2 * m2)
            normal = lo <= kurtosis <= hi
            k_used = policy.normal_k if normal else policy.nonnormal_k
            threshold = k_used * std
            for subject_id, value in entries:
                if abs(value - mean) > threshold:
                    flagged.add((subject_id, item_id, dim))
                    n_flagged += 1
        item_stats[(item_id, dim)] = ItemDimStats(
            item_id=item_id,
            dimension=dim,
            n=n,
            mean=mean,
            std=std,
            kurtosis=kurtosis,
            normal=normal,
            k_used=k_used,
            n_flagged=n_flagged,
        )
    return OutlierFlags(flagged=frozenset(flagged), item_stats=item_stats)


def screen_subjects(
    ratings: Sequence[RatingRecord],
    flags: OutlierFlags,
    policy: OutlierPolicy,
) -> list[SubjectProfile]:
    """Exclude subjects whose flagged fraction (pooled across dimensions)
    strictly exceeds ``subject_reject_fraction``; exactly at the bound
    survives."""
    per_subject: dict[str, list[RatingRecord]] = {}
    for rec in _canonical(ratings):
        per_subject.setdefault(rec.subject_id, []).append(rec)

    profiles: list[SubjectProfile] = []
    for subject_id in sorted(per_subject):
        recs = per_subject[subject_id]
        total = len(recs) * len(DIMENSIONS)
        n_flagged = sum(
            1
            for rec in recs
            for dim in DIMENSIONS
            if flags.is_flagged(subject_id, rec.item_id, dim)
        )
        fraction = n_flagged / total if total else 0.0
        mean: dict[str, Optional[float]] = {}
        std: dict[str, Optional[float]] = {}
        for dim in DIMENSIONS:
            surviving = np.array(
                [
                    rec.scores[dim]
                    for rec in recs
                    if not flags.is_flagged(subject_id, rec.item_id, dim)
                ],
                dtype=float,
            )
            if surviving.size == 0:
                mean[dim] = None
                std[dim] = None
            else:
                mean[dim] = float(surviving.mean())
                std[dim] = _sample_std(surviving)
        profiles.append(
            SubjectProfile(
                subject_id=subject_id,
                mean=mean,
                std=std,
                n_ratings=total,
                n_flagged=n_flagged,
                outlier_fraction=fraction,
                excluded=fraction > policy.subject_reject_fraction,
            )
        )
    return profiles


def _subject_norms(
    surviving: Sequence[RatingRecord],
    flags: OutlierFlags,
    dimension: str,
    pool_dimensions: bool,
) -> dict[str, tuple[float, float]]:
    """Per-subject (mean, std) over the subject's surviving ratings, either
    for one dimension or pooled across all three."""
    per_subject: dict[str, list[float]] = {}
    for rec in surviving:
        dims = DIMENSIONS if pool_dimensions else (dimension,)
        for dim in dims:
            if not flags.is_flagged(rec.subject_id, rec.item_id, dim):
                per_subject.setdefault(rec.subject_id, []).append(rec.scores[dim])
    norms: dict[str, tuple[float, float]] = {}
    for subject_id, values in per_subject.items():
        arr = np.array(values, dtype=float)
        norms[subject_id] = (float(arr.mean()), _sample_std(arr))
    return norms


def compute_mos(
    ratings: Sequence[RatingRecord],
    flags: OutlierFlags,
    profiles: Sequence[SubjectProfile],
    dimension: str,
    *,
    pool_dimensions: bool = False,
) -> list[MosRecord]:
    """MOS per item for one dimension.

    Z-scores are ``(r - mean_i) / std_i`` per subject over that subject's
    surviving ratings (``pool_dimensions=True`` pools the three dimensions
    into one normalization); a zero-spread subject contributes ``z = 0``.
    The item MOS is ``100 * (mean z + 3) / 6`` clamped into [0, 100].
    """
    if dimension not in DIMENSIONS:
        raise ValidationFailure(f"unknown dimension {dimension!r}")
    excluded = {p.subject_id for p in profiles if p.excluded}
    ordered = _canonical(ratings)
    surviving = [rec for rec in ordered if rec.subject_id not in excluded]
    norms = _subject_norms(surviving, flags, dimension, pool_dimensions)

    item_ids = sorted({rec.item_id for rec in ordered})
    removed: dict[str, int] = {item_id: 0 for item_id in item_ids}
    z_values: dict[str, list[float]] = {item_id: [] for item_id in item_ids}
    raw_values: dict[str, list[float]] = {item_id: [] for item_id in item_ids}
    for rec in surviving:
        if flags.is_flagged(rec.subject_id, rec.item_id, dimension):
            removed[rec.item_id] += 1
            continue
        mean_i, std_i = norms[rec.subject_id]
        value = rec.scores[dimension]
        z = 0.0 if std_i == 0.0 else (value - mean_i) / std_i
        z_values[rec.item_id].append(z)
        raw_values[rec.item_id].append(value)

    records: list[MosRecord] = []
    for item_id in item_ids:
        zs = z_values[item_id]
        raws = np.array(raw_values[item_id], dtype=float)
        if not zs:
            records.append(
                MosRecord(
                    item_id=item_id,
                    dimension=dimension,
                    mos=None,
                    n_valid=0,
                    n_removed=removed[item_id],
                    raw_mean=None,
                    raw_std=None,
                )
            )
            continue
        z_j = float(np.mean(np.array(zs, dtype=float)))
        mos_j = rescale_z(z_j)
        records.append(
            MosRecord(
                item_id=item_id,
                dimension=dimension,
                mos=mos_j,
                n_valid=len(zs),
                n_removed=removed[item_id],
                raw_mean=float(raws.mean()),
                raw_std=_sample_std(raws),
            )
        )
    return records


def qa_consensus(ratings: Sequence[RatingRecord]) -> list[QaConsensus]:
    """Yes-fraction and majority answer per item over the given (already
    screened) ratings; an exact 0.5 split resolves to yes with ``tie``."""
    per_item: dict[str, list[bool]] = {}
    for rec in _canonical(ratings):
        per_item.setdefault(rec.item_id, []).append(rec.qa_answer)
    out: list[QaConsensus] = []
    for item_id in sorted(per_item):
        answers = per_item[item_id]
        yes = sum(answers)
        fraction = yes / len(answers)
        out.append(
            QaConsensus(
                item_id=item_id,
                yes_fraction=fraction,
                majority=fraction >= 0.5,
                n_answers=len(answers),
                tie=fraction == 0.5,
            )
        )
    return out


def process_ratings(
    ratings: Sequence[RatingRecord],
    policy: OutlierPolicy | None = None,
    *,
    pool_dimensions: bool = False,
) -> MosTable:
    """Run the full pipeline and assemble the MOS table with its removal
    summary."""
    if not ratings:
        raise ValidationFailure("no ratings to process")
    policy = policy or OutlierPolicy()
    flags = flag_outliers(ratings, policy)
    profiles = screen_subjects(ratings, flags, policy)
    excluded = {p.subject_id for p in profiles if p.excluded}

    records: list[MosRecord] = []
    for dim in DIMENSIONS:
        records.extend(
            compute_mos(ratings, flags, profiles, dim, pool_dimensions=pool_dimensions)
        )
    surviving_records = [r for r in _canonical(ratings) if r.subject_id not in excluded]
    qa = qa_consensus(surviving_records)

    total_scores = len(ratings) * len(DIMENSIONS)
    flags_excluded_subjects = sum(1 for (s, _, _) in flags.flagged if s in excluded)
    removed_outliers = len(flags.flagged) - flags_excluded_subjects
    removed_by_exclusion = sum(
        len(DIMENSIONS) for r in ratings if r.subject_id in excluded
    )
    removed_total = removed_outliers + removed_by_exclusion
    summary = {
        "n_ratings": len(ratings),
        "n_score_ratings": total_scores,
        "n_items": len({r.item_id for r in ratings}),
        "n_subjects": len(profiles),
        "n_excluded_subjects": len(excluded),
        "n_flagged_scores": len(flags.flagged),
        "n_removed_outlier_scores": removed_outliers,
        "n_removed_by_subject_exclusion": removed_by_exclusion,
        "n_removed_scores": removed_total,
        "percent_removed": 100.0 * removed_total / total_scores,
    }
    return MosTable(
        records=tuple(records),
        qa=tuple(qa),
        profiles=tuple(profiles),
        summary=summary,
    )


# ── file formats ─────────────────────────────────────────────────────────────

def write_mos_table(table: MosTable, path: str | Path, *, summary_path: str | Path | None = None) -> None:
    """Write MOS rows as line-delimited JSON plus an optional sidecar summary."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in table.records:
            fh.write(
                json.dumps(
                    {
                        "item_id": rec.item_id,
                        "dimension": rec.dimension,
                        "mos": rec.mos,
                        "n_valid": rec.n_valid,
                        "n_removed": rec.n_removed,
                    }
                )
                + "\n"
            )
    if summary_path is not None:
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(dict(table.summary), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_mos_records(path: str | Path) -> list[MosRecord]:
    """Read a MOS file back. Dimension labels are open strings here so that
    externally produced tables (e.g. per-model accuracy columns) can ride the
    same format."""
    records: list[MosRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("item_id", "dimension", "mos"):
                if key not in obj:
                    raise ValidationFailure(f"line {lineno}: missing field {key!r}")
            mos = obj["mos"]
            if mos is not None and not (0.0 <= float(mos) <= 100.0):
                raise ValidationFailure(f"line {lineno}: mos {mos} outside [0, 100]")
            records.append(
                MosRecord(
                    item_id=str(obj["item_id"]),
                    dimension=str(obj["dimension"]),
                    mos=None if mos is None else float(mos),
                    n_valid=int(obj.get("n_valid", 1)),
                    n_removed=int(obj.get("n_removed", 0)),
                    raw_mean=None,
                    raw_std=None,
                )
            )
    return records


def write_qa_consensus(qa: Iterable[QaConsensus], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in qa:
            fh.write(
                json.dumps(
                    {
                        "item_id": rec.item_id,
                        "yes_fraction": rec.yes_fraction,
                        "majority": rec.majority,
                        "n_answers": rec.n_answers,
                        "tie": rec.tie,
                    }
                )
                + "\n"
            )


def load_qa_consensus(path: str | Path) -> list[QaConsensus]:
    out: list[QaConsensus] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            for key in ("item_id", "yes_fraction", "majority", "n_answers"):
                if key not in obj:
                    raise ValidationFailure(f"line {lineno}: missing field {key!r}")
            out.append(
                QaConsensus(
                    item_id=str(obj["item_id"]),
                    yes_fraction=float(obj["yes_fraction"]),
                    majority=bool(obj["majority"]),
                    n_answers=int(obj["n_answers"]),
                    tie=bool(obj.get("tie", False)),
                )
            )
    return out
