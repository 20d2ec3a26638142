"""Domain types, task taxonomy, and validated ingestion of benchmark files.

File formats are line-delimited JSON (one object per line):

* manifest rows: ``item_id, source_image, edited_image, editing_model, task,
  instruction, source_description, target_description, qa_question``
* ratings rows: ``subject_id, item_id, quality, alignment, preservation,
  qa_answer, submitted_at`` (RFC 3339 timestamp)
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from PIL import Image, UnidentifiedImageError

from .errors import (
    DuplicateItemId,
    DuplicateRating,
    MissingField,
    ScoreOutOfRange,
    UnknownItem,
    UnknownTask,
    UnreadableImage,
    ValidationFailure,
)

__all__ = [
    "HIGH_LEVEL_TASKS",
    "LOW_LEVEL_TASKS",
    "ALL_TASKS",
    "DIMENSIONS",
    "task_tier",
    "PromptBundle",
    "BenchmarkItem",
    "RatingRecord",
    "load_manifest",
    "serialize_manifest",
    "load_ratings",
    "serialize_ratings",
]

# Task labels are the canonical wire strings; the ampersand task is
# serialized with an underscore to avoid delimiter ambiguity.
HIGH_LEVEL_TASKS: tuple[str, ...] = (
    "add",
    "remove",
    "replace",
    "color",
    "texture",
    "style",
    "action",
    "expression",
    "weather_season",
    "background",
    "counting",
    "position",
    "size",
)
LOW_LEVEL_TASKS: tuple[str, ...] = (
    "deblur",
    "dehaze",
    "denoise",
    "derain",
    "desnow",
    "low-light-enhancement",
    "shadow-removal",
    "super-resolution",
)
ALL_TASKS: tuple[str, ...] = HIGH_LEVEL_TASKS + LOW_LEVEL_TASKS

_TIER_BY_TASK: dict[str, str] = {t: "high-level" for t in HIGH_LEVEL_TASKS}
_TIER_BY_TASK.update({t: "low-level" for t in LOW_LEVEL_TASKS})

# The three rated dimensions, in canonical order.
DIMENSIONS: tuple[str, ...] = ("quality", "alignment", "preservation")

SCORE_MIN = 1.0
SCORE_MAX = 5.0

_MANIFEST_FIELDS = (
    "item_id",
    "source_image",
    "edited_image",
    "editing_model",
    "task",
    "instruction",
    "source_description",
    "target_description",
    "qa_question",
)
_RATING_FIELDS = (
    "subject_id",
    "item_id",
    "quality",
    "alignment",
    "preservation",
    "qa_answer",
    "submitted_at",
)


def task_tier(task: str) -> str:
    """Return ``"high-level"`` or ``"low-level"`` for a task label."""
    try:
        return _TIER_BY_TASK[task]
    except KeyError:
        raise UnknownTask(f"unknown task {task!r}") from None


@dataclass(frozen=True)
class PromptBundle:
    """Instruction plus optional source/target description prompts."""

    instruction: str
    source_description: str = ""
    target_description: str = ""

    def __post_init__(self):
        if not self.instruction:
            raise ValidationFailure("instruction must be non-empty")


@dataclass(frozen=True)
class BenchmarkItem:
    """One (source image, prompts, task, edited image, editing model) record."""

    item_id: str
    source_image: str
    edited_image: str
    editing_model: str
    task: str
    prompts: PromptBundle
    qa_question: str

    def __post_init__(self):
        if self.task not in _TIER_BY_TASK:
            raise UnknownTask(f"unknown task {self.task!r} on item {self.item_id!r}")

    @property
    def tier(self) -> str:
        return _TIER_BY_TASK[self.task]


def _round_score(value: float) -> float:
    # Scores carry at most 3 fractional digits; finer precision is an
    # artifact of the transport and is rounded at ingest.
    return round(float(value), 3)


@dataclass(frozen=True)
class RatingRecord:
    """One rater's submission for one item: three scores plus a yes/no answer."""

    subject_id: str
    item_id: str
    scores: Mapping[str, float]
    qa_answer: bool
    submitted_at: datetime

    def __post_init__(self):
        missing = [d for d in DIMENSIONS if d not in self.scores]
        if missing:
            raise MissingField(
                f"rating ({self.subject_id!r}, {self.item_id!r}) lacks dimensions {missing}"
            )
        rounded = {d: _round_score(self.scores[d]) for d in DIMENSIONS}
        for dim, value in rounded.items():
            if not (SCORE_MIN <= value <= SCORE_MAX):
                raise ScoreOutOfRange(
                    f"{dim} score {value} outside [{SCORE_MIN}, {SCORE_MAX}] "
                    f"for ({self.subject_id!r}, {self.item_id!r})"
                )
        object.__setattr__(self, "scores", rounded)


def _check_image(path: str, *, item_id: str, role: str) -> None:
    try:
        with Image.open(path) as img:
            if img.format not in ("PNG", "JPEG"):
                raise UnreadableImage(
                    f"item {item_id!r}: {role} image {path!r} has unsupported "
                    f"format {img.format!r} (PNG/JPEG only)"
                )
            img.verify()
    except UnreadableImage:
        raise
    except (OSError, UnidentifiedImageError) as exc:
        raise UnreadableImage(
            f"item {item_id!r}: {role} image {path!r} not decodable: {exc}"
        ) from exc


def _iter_json_lines(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationFailure(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ValidationFailure(f"line {lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj: dict, fields: Sequence[str], lineno: int) -> None:
    missing = [f for f in fields if f not in obj]
    if missing:
        raise MissingField(f"line {lineno}: missing fields {missing}")


def load_manifest(path: str | Path, *, check_images: bool = True) -> list[BenchmarkItem]:
    """Load and validate a benchmark manifest.

    The whole file is rejected on any invariant violation; errors name the
    offending line and record. ``check_images=False`` skips the image
    decodability check (the images may live elsewhere when only scores are
    being analyzed).
    """
    path = Path(path)
    items: list[BenchmarkItem] = []
    seen: set[str] = set()
    base = path.parent
    for lineno, obj in _iter_json_lines(path):
        _require(obj, _MANIFEST_FIELDS, lineno)
        item_id = str(obj["item_id"])
        if item_id in seen:
            raise DuplicateItemId(f"line {lineno}: duplicate item_id {item_id!r}")
        seen.add(item_id)
        task = str(obj["task"])
        if task not in _TIER_BY_TASK:
            raise UnknownTask(f"line {lineno}: unknown task {task!r} on item {item_id!r}")
        try:
            prompts = PromptBundle(
                instruction=str(obj["instruction"]),
                source_description=str(obj["source_description"]),
                target_description=str(obj["target_description"]),
            )
        except ValidationFailure as exc:
            raise MissingField(f"line {lineno}: item {item_id!r}: {exc}") from exc
        item = BenchmarkItem(
            item_id=item_id,
            source_image=str(obj["source_image"]),
            edited_image=str(obj["edited_image"]),
            editing_model=str(obj["editing_model"]),
            task=task,
            prompts=prompts,
            qa_question=str(obj["qa_question"]),
        )
        if check_images:
            for role in ("source_image", "edited_image"):
                ref = getattr(item, role)
                resolved = ref if Path(ref).is_absolute() else str(base / ref)
                _check_image(resolved, item_id=item_id, role=role)
        items.append(item)
    return items


def serialize_manifest(items: Iterable[BenchmarkItem], path: str | Path) -> None:
    """Write items as line-delimited JSON in the manifest schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            row = {
                "item_id": item.item_id,
                "source_image": item.source_image,
                "edited_image": item.edited_image,
                "editing_model": item.editing_model,
                "task": item.task,
                "instruction": item.prompts.instruction,
                "source_description": item.prompts.source_description,
                "target_description": item.prompts.target_description,
                "qa_question": item.qa_question,
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 timestamp (``Z`` suffix accepted)."""
    text = str(value)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        return datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValidationFailure(f"bad timestamp {value!r}: {exc}") from exc


def rating_from_row(obj: dict, *, lineno: int = 0) -> RatingRecord:
    """Build a validated RatingRecord from one wire-format row."""
    _require(obj, _RATING_FIELDS, lineno)
    qa = obj["qa_answer"]
    if not isinstance(qa, bool):
        raise ValidationFailure(f"line {lineno}: qa_answer must be a JSON boolean")
    for dim in DIMENSIONS:
        if not isinstance(obj[dim], (int, float)) or isinstance(obj[dim], bool):
            raise ValidationFailure(f"line {lineno}: {dim} must be a number")
    try:
        return RatingRecord(
            subject_id=str(obj["subject_id"]),
            item_id=str(obj["item_id"]),
            scores={d: float(obj[d]) for d in DIMENSIONS},
            qa_answer=qa,
            submitted_at=parse_timestamp(obj["submitted_at"]),
        )
    except ValidationFailure as exc:
        raise type(exc)(f"line {lineno}: {exc}") from exc


def load_ratings(
    path: str | Path,
    manifest: Optional[Sequence[BenchmarkItem]] = None,
) -> list[RatingRecord]:
    """Load and validate a ratings file.

    When ``manifest`` is given, every referenced item_id must exist in it.
    Duplicate (subject, item) pairs reject the file.
    """
    known: Optional[set[str]] = None
    if manifest is not None:
        known = {item.item_id for item in manifest}
    records: list[RatingRecord] = []
    seen: set[tuple[str, str]] = set()
    for lineno, obj in _iter_json_lines(Path(path)):
        record = rating_from_row(obj, lineno=lineno)
        key = (record.subject_id, record.item_id)
        if key in seen:
            raise DuplicateRating(f"line {lineno}: duplicate rating for {key}")
        seen.add(key)
        if known is not None and record.item_id not in known:
            raise UnknownItem(f"line {lineno}: item {record.item_id!r} not in manifest")
        records.append(record)
    return records


def serialize_ratings(records: Iterable[RatingRecord], path: str | Path) -> None:
    """Write ratings as line-delimited JSON in the ratings schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rating_to_row(rec), ensure_ascii=False) + "\n")


def rating_to_row(rec: RatingRecord) -> dict:
    """Wire-format row for one rating."""
    return {
        "subject_id": rec.subject_id,
        "item_id": rec.item_id,
        "quality": rec.scores["quality"],
        "alignment": rec.scores["alignment"],
        "preservation": rec.scores["preservation"],
        "qa_answer": rec.qa_answer,
        "submitted_at": rec.submitted_at.isoformat(),
    }
