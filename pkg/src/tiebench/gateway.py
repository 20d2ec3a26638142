"""Uniform acquisition of candidate-metric predictions.

Three sources produce the same :class:`MetricRun` shape: in-process
reference metrics, pre-computed score files, and a remote scorer service
speaking the JSON protocol below.

Remote wire protocol (scores normalized to [0, 100]):

* ``POST {endpoint}/v1/score`` with ``{source_image, edited_image,
  instruction, dimension}`` (images base64) -> ``{score, latency_ms}``
* ``POST {endpoint}/v1/qa`` with ``{source_image, edited_image, instruction,
  qa_question}`` -> ``{answer, latency_ms}``

Non-200 responses are retryable; a run fails only if some (item, dimension)
remains unscored after bounded exponential-backoff retries.
"""

from __future__ import annotations

import base64
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import httpx

from .dataset import DIMENSIONS, BenchmarkItem
from .errors import (
    MalformedResponse,
    PartialCoverage,
    RemoteScoringFailed,
    ScoreOutOfRange,
    UnknownItem,
    ValidationFailure,
)
from .metrics import BUILTIN_METRICS, to_gray

__all__ = [
    "MetricRun",
    "RemoteConfig",
    "run_builtin",
    "load_score_file",
    "run_remote",
    "validate_coverage",
]

PredKey = tuple[str, str]  # (item_id, dimension)


@dataclass
class MetricRun:
    """Predictions of one candidate metric over a set of items.

    A run may cover any subset of dimensions but must cover every item for
    each dimension it claims (checked by :func:`validate_coverage` before any
    correlation is computed).
    """

    metric_name: str
    source: str  # builtin | file | remote
    predictions: dict[PredKey, float] = field(default_factory=dict)
    qa_predictions: dict[str, bool] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def claimed_dimensions(self) -> list[str]:
        return sorted({dim for (_, dim) in self.predictions})

    def items_for(self, dimension: str) -> set[str]:
        return {item for (item, dim) in self.predictions if dim == dimension}


def validate_coverage(run: MetricRun, items: Sequence[BenchmarkItem]) -> None:
    """Reject runs referencing unknown items or missing items for a claimed
    dimension."""
    known = {item.item_id for item in items}
    referenced = {item for (item, _) in run.predictions} | set(run.qa_predictions)
    unknown = sorted(referenced - known)
    if unknown:
        raise UnknownItem(f"run {run.metric_name!r} references unknown items {unknown}")
    for dim in run.claimed_dimensions():
        missing = sorted(known - run.items_for(dim))
        if missing:
            raise PartialCoverage(
                f"run {run.metric_name!r} misses {len(missing)} item(s) for "
                f"dimension {dim!r}: {missing[:10]}",
                missing=missing,
            )
    if run.qa_predictions:
        missing = sorted(known - set(run.qa_predictions))
        if missing:
            raise PartialCoverage(
                f"run {run.metric_name!r} misses {len(missing)} item(s) for qa: "
                f"{missing[:10]}",
                missing=missing,
            )


def _resolve(ref: str, base_dir: Optional[Path]) -> str:
    if base_dir is not None and not Path(ref).is_absolute():
        return str(base_dir / ref)
    return ref


def run_builtin(
    metric: str,
    items: Sequence[BenchmarkItem],
    *,
    base_dir: str | Path | None = None,
) -> MetricRun:
    """Score every item with an in-process full-reference metric.

    The single metric value is recorded under all three dimensions (the same
    number is correlated against each dimension separately). Per-item decode
    or size errors are recorded in the run metadata and the run continues.
    """
    if metric not in BUILTIN_METRICS:
        raise ValidationFailure(
            f"unknown builtin metric {metric!r}; choose from {sorted(BUILTIN_METRICS)}"
        )
    fn = BUILTIN_METRICS[metric]
    base = Path(base_dir) if base_dir is not None else None
    run = MetricRun(metric_name=metric, source="builtin")
    errors: list[dict] = []
    resolutions: dict[str, str] = {}
    for item in sorted(items, key=lambda it: it.item_id):
        try:
            source = to_gray(_resolve(item.source_image, base))
            edited = to_gray(_resolve(item.edited_image, base))
            value = fn(source, edited).value
        except ValidationFailure as exc:
            errors.append({"item_id": item.item_id, "error": str(exc)})
            continue
        resolutions[item.item_id] = f"{edited.width}x{edited.height}"
        for dim in DIMENSIONS:
            run.predictions[(item.item_id, dim)] = value
    run.metadata = {
        "metric": metric,
        "errors": errors,
        "resolutions": resolutions,
    }
    return run


def load_score_file(
    path: str | Path,
    manifest: Optional[Sequence[BenchmarkItem]] = None,
    *,
    metric_name: Optional[str] = None,
) -> MetricRun:
    """Load a pre-computed score file (rows: ``item_id`` plus ``dimension`` +
    ``score`` and/or ``qa_answer``). Duplicate rows are last-write-wins with
    a warning counter in the run metadata."""
    path = Path(path)
    run = MetricRun(metric_name=metric_name or path.stem, source="file")
    duplicates = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationFailure(f"line {lineno}: invalid JSON: {exc}") from exc
            if "item_id" not in obj:
                raise ValidationFailure(f"line {lineno}: missing field 'item_id'")
            item_id = str(obj["item_id"])
            has_score = "score" in obj and obj["score"] is not None
            has_qa = "qa_answer" in obj and obj["qa_answer"] is not None
            if not has_score and not has_qa:
                raise ValidationFailure(
                    f"line {lineno}: row needs a score or a qa_answer"
                )
            if has_score:
                if "dimension" not in obj:
                    raise ValidationFailure(
                        f"line {lineno}: score rows need a dimension"
                    )
                key = (item_id, str(obj["dimension"]))
                if key in run.predictions:
                    duplicates += 1
                run.predictions[key] = float(obj["score"])
            if has_qa:
                if not isinstance(obj["qa_answer"], bool):
                    raise ValidationFailure(f"line {lineno}: qa_answer must be boolean")
                if item_id in run.qa_predictions:
                    duplicates += 1
                run.qa_predictions[item_id] = obj["qa_answer"]
    run.metadata = {"path": str(path), "duplicate_rows": duplicates}
    if manifest is not None:
        validate_coverage(run, manifest)
    return run


@dataclass(frozen=True)
class RemoteConfig:
    """Connection policy for a remote scorer."""

    endpoint: str
    concurrency: int = 4
    timeout: float = 30.0
    retries: int = 3
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValidationFailure("concurrency must be >= 1")
        if self.retries < 0:
            raise ValidationFailure("retries must be >= 0")


def _encode_image(path: str) -> str:
    return base64.b64encode(Path(path).read_bytes()).decode("ascii")


class _RemoteSession:
    """One fan-out run against a remote scorer."""

    def __init__(self, config: RemoteConfig):
        self.config = config
        self.retry_count = 0
        self._client = httpx.Client(timeout=config.timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, url: str, body: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.config.retries + 1):
            if attempt > 0:
                self.retry_count += 1
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(url, json=body)
            except httpx.TimeoutException as exc:
                last_error = TimeoutError(f"request timed out: {exc}")
                continue
            except httpx.HTTPError as exc:
                last_error = ConnectionError(f"request failed: {exc}")
                continue
            if response.status_code != 200:
                last_error = ConnectionError(f"status {response.status_code}")
                continue
            try:
                return response.json()
            except (json.JSONDecodeError, ValueError) as exc:
                last_error = MalformedResponse(f"response is not JSON: {exc}")
                continue
        raise last_error if last_error is not None else ConnectionError("no attempt made")

    def score(self, body: dict) -> float:
        obj = self._post(self.config.endpoint.rstrip("/") + "/v1/score", body)
        if "score" not in obj or not isinstance(obj["score"], (int, float)):
            raise MalformedResponse(f"score missing or non-numeric in {obj!r}")
        value = float(obj["score"])
        if not (0.0 <= value <= 100.0):
            raise ScoreOutOfRange(f"remote score {value} outside [0, 100]")
        return value

    def qa(self, body: dict) -> bool:
        obj = self._post(self.config.endpoint.rstrip("/") + "/v1/qa", body)
        if "answer" not in obj or not isinstance(obj["answer"], bool):
            raise MalformedResponse(f"answer missing or non-boolean in {obj!r}")
        return obj["answer"]


def run_remote(
    config: RemoteConfig,
    items: Sequence[BenchmarkItem],
    dimensions: Sequence[str] = DIMENSIONS,
    *,
    include_qa: bool = False,
    base_dir: str | Path | None = None,
    metric_name: str = "remote",
) -> MetricRun:
    """Fan requests out to a remote scorer with bounded concurrency.

    One request per (item, dimension) plus one QA request per item when
    ``include_qa``. Result assembly is a keyed merge, so the predictions map
    is deterministic regardless of response arrival order. Raises
    :class:`RemoteScoringFailed` listing every (item, dimension) still
    unscored after retries.
    """
    base = Path(base_dir) if base_dir is not None else None
    ordered = sorted(items, key=lambda it: it.item_id)
    encoded = {
        item.item_id: (
            _encode_image(_resolve(item.source_image, base)),
            _encode_image(_resolve(item.edited_image, base)),
        )
        for item in ordered
    }

    session = _RemoteSession(config)
    started = time.time()

    def score_task(item: BenchmarkItem, dim: str):
        src, edt = encoded[item.item_id]
        body = {
            "source_image": src,
            "edited_image": edt,
            "instruction": item.prompts.instruction,
            "dimension": dim,
        }
        return session.score(body)

    def qa_task(item: BenchmarkItem):
        src, edt = encoded[item.item_id]
        body = {
            "source_image": src,
            "edited_image": edt,
            "instruction": item.prompts.instruction,
            "qa_question": item.qa_question,
        }
        return session.qa(body)

    tasks: list[tuple[str, str, object]] = []
    for item in ordered:
        for dim in dimensions:
            tasks.append((item.item_id, dim, item))
    if include_qa:
        for item in ordered:
            tasks.append((item.item_id, "qa", item))

    run = MetricRun(metric_name=metric_name, source="remote")
    failures: list[tuple[str, str, str]] = []
    try:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = {}
            for item_id, dim, item in tasks:
                if dim == "qa":
                    futures[(item_id, dim)] = pool.submit(qa_task, item)
                else:
                    futures[(item_id, dim)] = pool.submit(score_task, item, dim)
            for key in sorted(futures):
                item_id, dim = key
                try:
                    result = futures[key].result()
                except Exception as exc:
                    failures.append((item_id, dim, f"{type(exc).__name__}: {exc}"))
                    continue
                if dim == "qa":
                    run.qa_predictions[item_id] = bool(result)
                else:
                    run.predictions[key] = float(result)
    finally:
        session.close()

    run.metadata = {
        "endpoint": config.endpoint,
        "retries": session.retry_count,
        "elapsed_s": time.time() - started,
        "dimensions": list(dimensions),
        "include_qa": include_qa,
    }
    if failures:
        raise RemoteScoringFailed(
            f"{len(failures)} request(s) unscored after retries; first: "
            f"{failures[0]}",
            failures=failures,
        )
    return run
