"""Metric-run acquisition tests: builtin, score files, remote fan-out."""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import build_manifest, manifest_row, write_png
from tiebench.dataset import DIMENSIONS, load_manifest
from tiebench.errors import PartialCoverage, RemoteScoringFailed, UnknownItem
from tiebench.gateway import (
    RemoteConfig,
    load_score_file,
    run_builtin,
    run_remote,
    validate_coverage,
)
from tiebench.mock_scorer import MockScorerServer, score_lookup_from_files


@pytest.fixture
def three_items(tmp_path):
    rows = [manifest_row(f"it{i}") for i in range(3)]
    path = build_manifest(tmp_path / "bench", rows)
    return path, load_manifest(path)


def fast_config(url, **kw):
    return RemoteConfig(endpoint=url, backoff_base=0.01, timeout=5.0, **kw)


class TestRunBuiltin:
    def test_mse_broadcasts_across_dimensions(self, three_items):
        path, items = three_items
        run = run_builtin("mse", items, base_dir=path.parent)
        assert len(run.predictions) == 9
        for item in items:
            values = {run.predictions[(item.item_id, d)] for d in DIMENSIONS}
            assert len(values) == 1
        validate_coverage(run, items)

    def test_identical_images_ssim_one(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
        d = tmp_path / "bench"
        d.mkdir()
        write_png(d / "same_src.png", arr)
        write_png(d / "same_edit.png", arr)
        row = manifest_row("same", source="same_src.png", edited="same_edit.png")
        manifest = build_manifest(d, [row], with_images=False)
        write_png(d / "same_src.png", arr)
        write_png(d / "same_edit.png", arr)
        items = load_manifest(manifest)
        run = run_builtin("ssim", items, base_dir=d)
        assert run.predictions[("same", "quality")] == pytest.approx(1.0, abs=1e-12)

    def test_mixed_size_error_recorded_run_continues(self, tmp_path):
        rng = np.random.default_rng(2)
        d = tmp_path / "bench"
        d.mkdir()
        rows = [manifest_row("ok"), manifest_row("bad")]
        write_png(d / "ok_src.png", rng.integers(0, 256, (16, 16), dtype=np.uint8))
        write_png(d / "ok_edit.png", rng.integers(0, 256, (16, 16), dtype=np.uint8))
        write_png(d / "bad_src.png", rng.integers(0, 256, (16, 16), dtype=np.uint8))
        write_png(d / "bad_edit.png", rng.integers(0, 256, (12, 16), dtype=np.uint8))
        manifest = build_manifest(d, rows, with_images=False)
        items = load_manifest(manifest)
        run = run_builtin("ssim", items, base_dir=d)
        assert ("ok", "quality") in run.predictions
        assert ("bad", "quality") not in run.predictions
        assert run.metadata["errors"][0]["item_id"] == "bad"
        with pytest.raises(PartialCoverage):
            validate_coverage(run, items)

    def test_resolution_recorded(self, three_items):
        path, items = three_items
        run = run_builtin("mse", items, base_dir=path.parent)
        assert run.metadata["resolutions"]["it0"] == "16x16"


class TestLoadScoreFile:
    def _write(self, path, rows):
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path

    def test_full_coverage_single_dimension(self, three_items, tmp_path):
        _, items = three_items
        rows = [
            {"item_id": it.item_id, "dimension": "quality", "score": 10.0 + i}
            for i, it in enumerate(items)
        ]
        path = self._write(tmp_path / "s.jsonl", rows)
        run = load_score_file(path, manifest=items)
        assert run.claimed_dimensions() == ["quality"]
        assert len(run.predictions) == 3

    def test_partial_coverage_names_missing(self, three_items, tmp_path):
        _, items = three_items
        rows = [
            {"item_id": it.item_id, "dimension": "quality", "score": 1.0}
            for it in items[:-1]
        ]
        path = self._write(tmp_path / "s.jsonl", rows)
        with pytest.raises(PartialCoverage) as err:
            load_score_file(path, manifest=items)
        assert "it2" in str(err.value)
        assert err.value.missing == ["it2"]

    def test_unknown_item(self, three_items, tmp_path):
        _, items = three_items
        rows = [{"item_id": "ghost", "dimension": "quality", "score": 1.0}]
        path = self._write(tmp_path / "s.jsonl", rows)
        with pytest.raises(UnknownItem):
            load_score_file(path, manifest=items)

    def test_duplicates_last_write_wins(self, tmp_path):
        rows = [
            {"item_id": "a", "dimension": "quality", "score": 1.0},
            {"item_id": "a", "dimension": "quality", "score": 2.0},
            {"item_id": "a", "qa_answer": True},
            {"item_id": "a", "qa_answer": False},
        ]
        path = self._write(tmp_path / "s.jsonl", rows)
        run = load_score_file(path)
        assert run.predictions[("a", "quality")] == 2.0
        assert run.qa_predictions["a"] is False
        assert run.metadata["duplicate_rows"] == 2


class TestRunRemote:
    def test_constant_mock(self, three_items):
        path, items = three_items
        with MockScorerServer() as server:
            run = run_remote(
                fast_config(server.url), items, DIMENSIONS, base_dir=path.parent
            )
        assert len(run.predictions) == 9
        assert set(run.predictions.values()) == {50.0}

    def test_retry_after_single_failure(self, three_items):
        path, items = three_items
        with MockScorerServer(fail_first=1) as server:
            run = run_remote(
                fast_config(server.url), items[:1], ("quality",), base_dir=path.parent
            )
        assert run.metadata["retries"] == 1
        assert run.predictions[("it0", "quality")] == 50.0

    def test_score_out_of_range_fails_item(self, three_items):
        path, items = three_items
        with MockScorerServer(score_fn=lambda req: 120.0) as server:
            with pytest.raises(RemoteScoringFailed) as err:
                run_remote(
                    fast_config(server.url), items[:1], ("quality",),
                    base_dir=path.parent,
                )
        (item_id, dim, message), = err.value.failures
        assert (item_id, dim) == ("it0", "quality")
        assert "ScoreOutOfRange" in message

    def test_persistent_failure_exhausts_retries(self, three_items):
        path, items = three_items
        with MockScorerServer(fail_first=100) as server:
            with pytest.raises(RemoteScoringFailed):
                run_remote(
                    fast_config(server.url, retries=2), items[:1], ("quality",),
                    base_dir=path.parent,
                )
            # 1 initial + 2 retries
            assert server.request_count == 3

    def test_qa_requests(self, three_items):
        path, items = three_items
        with MockScorerServer(qa_fn=lambda req: "yes" in req["qa_question"]) as server:
            run = run_remote(
                fast_config(server.url), items, ("quality",),
                include_qa=True, base_dir=path.parent,
            )
        assert len(run.qa_predictions) == 3

    def test_source_indifference_and_idempotence(self, three_items, tmp_path):
        path, items = three_items
        rows = []
        for i, it in enumerate(items):
            for dim in DIMENSIONS:
                rows.append(
                    {"item_id": it.item_id, "dimension": dim,
                     "score": round(10.0 + 7.3 * i + len(dim), 3)}
                )
            rows.append({"item_id": it.item_id, "qa_answer": i % 2 == 0})
        scores_path = tmp_path / "scores.jsonl"
        with open(scores_path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")

        file_run = load_score_file(scores_path, manifest=items)
        score_fn, qa_fn = score_lookup_from_files(path, scores_path)
        with MockScorerServer(score_fn, qa_fn) as server:
            remote_run = run_remote(
                fast_config(server.url), items, DIMENSIONS,
                include_qa=True, base_dir=path.parent,
            )
            remote_again = run_remote(
                fast_config(server.url), items, DIMENSIONS,
                include_qa=True, base_dir=path.parent,
            )
        assert remote_run.predictions == file_run.predictions
        assert remote_run.qa_predictions == file_run.qa_predictions
        assert remote_again.predictions == remote_run.predictions
