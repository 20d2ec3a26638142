"""Shared fixtures: tiny images, manifests, and ratings files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


def write_png(path: Path, array: np.ndarray) -> Path:
    """Write a uint8 array (HxW gray or HxWx3 RGB) as PNG."""
    arr = np.asarray(array, dtype=np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")
    return path


def random_gray(rng: np.random.Generator, h: int = 16, w: int = 16) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w), dtype=np.uint8)


def manifest_row(item_id: str, task: str = "add", model: str = "model-a",
                 source: str = "", edited: str = "") -> dict:
    return {
        "item_id": item_id,
        "source_image": source or f"{item_id}_src.png",
        "edited_image": edited or f"{item_id}_edit.png",
        "editing_model": model,
        "task": task,
        "instruction": f"edit {item_id}",
        "source_description": f"a photo ({item_id})",
        "target_description": f"an edited photo ({item_id})",
        "qa_question": f"Does the edit of {item_id} meet the expectation?",
    }


def build_manifest(
    directory: Path,
    rows: list[dict],
    *,
    with_images: bool = True,
    seed: int = 0,
) -> Path:
    """Write a manifest file (and distinct images per item) into a directory."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    path = directory / "manifest.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            if with_images:
                write_png(directory / row["source_image"], random_gray(rng))
                write_png(directory / row["edited_image"], random_gray(rng))
            fh.write(json.dumps(row) + "\n")
    return path


@pytest.fixture
def tiny_manifest(tmp_path):
    """Three items, two editing models, with real PNG images."""
    rows = [
        manifest_row("item-01", task="add", model="model-a"),
        manifest_row("item-02", task="deblur", model="model-b"),
        manifest_row("item-03", task="style", model="model-a"),
    ]
    path = build_manifest(tmp_path / "bench", rows)
    return path


def rating_row(subject: str, item: str, q: float, a: float, p: float,
               qa: bool = True, at: str = "2025-06-01T10:00:00+00:00") -> dict:
    return {
        "subject_id": subject,
        "item_id": item,
        "quality": q,
        "alignment": a,
        "preservation": p,
        "qa_answer": qa,
        "submitted_at": at,
    }


def write_ratings(path: Path, rows: list[dict]) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path
