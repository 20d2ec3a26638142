"""The 17-model human/metric comparison fixture and its file writers.

Each row: (model, human_q, ours_q, human_e, ours_e, human_p, ours_p,
human_acc, ours_acc, human_overall_rank, ours_overall_rank, human_acc_rank,
ours_acc_rank). Scores are per-model means on the MOS scale; acc is the
task-specific accuracy in percent. The printed rank columns are fixture data
(the published acc ranks break exact ties by table row order, not by name).
"""

from __future__ import annotations

import json
from pathlib import Path

ROWS = [
    ("FlowEdit (SD3)",  54.70, 52.64, 52.61, 52.65, 55.57, 54.40, 72.22, 74.54,  1,  1,  1,  1),
    ("PnP",             52.63, 51.20, 55.67, 56.17, 51.11, 50.21, 68.06, 70.83,  2,  2,  2,  2),
    ("RFSE",            55.91, 53.23, 56.35, 56.73, 46.74, 45.47, 67.13, 64.35,  3,  3,  3,  4),
    ("CDS",             54.28, 51.81, 46.01, 46.07, 63.05, 61.51, 64.81, 66.67,  4,  4,  4,  3),
    ("InfEdit",         51.27, 49.44, 54.96, 54.97, 52.02, 50.63, 49.54, 53.70,  5,  5,  5,  6),
    ("FlowEdit (FLUX)", 50.56, 50.04, 52.08, 53.25, 51.43, 50.52, 49.54, 52.31,  6,  6,  6,  7),
    ("EDICT",           50.63, 49.10, 47.66, 48.80, 57.05, 55.83, 49.07, 54.63,  7,  8,  7,  5),
    ("Any2Pix",         54.04, 52.81, 57.55, 58.38, 41.15, 41.37, 44.91, 45.83,  8,  7,  8,  9),
    ("Magicbrush",      49.18, 48.57, 49.73, 50.02, 52.48, 51.89, 41.20, 46.30,  9,  9,  9,  8),
    ("ZONE",            49.67, 48.87, 44.95, 45.15, 58.77, 58.67, 37.50, 40.28, 10, 10, 10, 10),
    ("ReNoise",         50.20, 48.78, 51.19, 51.84, 48.16, 47.18, 32.41, 29.63, 11, 11, 11, 13),
    ("IP2P",            48.28, 47.44, 46.73, 47.34, 52.72, 51.79, 31.94, 34.26, 12, 12, 12, 11),
    ("ACE++",           50.83, 49.25, 46.39, 46.73, 44.34, 43.97, 30.56, 30.09, 13, 13, 13, 12),
    ("HQEdit",          46.81, 46.61, 48.23, 50.05, 39.21, 38.78, 26.85, 23.15, 14, 14, 14, 15),
    ("MasaCtrl",        44.13, 43.88, 45.07, 44.74, 44.07, 44.30, 26.39, 23.15, 15, 15, 15, 16),
    ("DDPM",            44.72, 43.73, 40.83, 41.08, 49.59, 48.19, 25.93, 26.39, 16, 16, 16, 14),
    ("Text2LIVE",       37.50, 39.13, 44.55, 43.07, 46.46, 47.38, 11.11,  9.72, 17, 17, 17, 17),
]

MODELS = [row[0] for row in ROWS]
HUMAN_Q = [row[1] for row in ROWS]
OURS_Q = [row[2] for row in ROWS]
HUMAN_E = [row[3] for row in ROWS]
OURS_E = [row[4] for row in ROWS]
HUMAN_P = [row[5] for row in ROWS]
OURS_P = [row[6] for row in ROWS]
HUMAN_ACC = [row[7] for row in ROWS]
OURS_ACC = [row[8] for row in ROWS]
HUMAN_OVERALL_RANK = [row[9] for row in ROWS]
OURS_OVERALL_RANK = [row[10] for row in ROWS]
HUMAN_ACC_RANK = [row[11] for row in ROWS]
OURS_ACC_RANK = [row[12] for row in ROWS]

DIMS_WITH_ACC = ("quality", "alignment", "preservation", "accuracy")


def item_id_for(index: int) -> str:
    return f"m{index + 1:02d}"


def write_fixture(directory: Path, *, with_images: bool = True) -> dict[str, Path]:
    """Write the 17-model replay as engine files: one manifest item per
    model carrying the human means as the MOS table and the metric means as
    a score file (accuracy rides as a fourth dimension)."""
    from conftest import build_manifest, manifest_row

    directory.mkdir(parents=True, exist_ok=True)
    rows = [
        manifest_row(item_id_for(i), task="add", model=MODELS[i])
        for i in range(len(ROWS))
    ]
    manifest = build_manifest(directory, rows, with_images=with_images, seed=42)

    mos_path = directory / "human_mos.jsonl"
    human = {
        "quality": HUMAN_Q,
        "alignment": HUMAN_E,
        "preservation": HUMAN_P,
        "accuracy": HUMAN_ACC,
    }
    with open(mos_path, "w", encoding="utf-8") as fh:
        for i in range(len(ROWS)):
            for dim in DIMS_WITH_ACC:
                fh.write(
                    json.dumps(
                        {
                            "item_id": item_id_for(i),
                            "dimension": dim,
                            "mos": human[dim][i],
                            "n_valid": 15,
                            "n_removed": 0,
                        }
                    )
                    + "\n"
                )

    scores_path = directory / "metric_scores.jsonl"
    ours = {
        "quality": OURS_Q,
        "alignment": OURS_E,
        "preservation": OURS_P,
        "accuracy": OURS_ACC,
    }
    with open(scores_path, "w", encoding="utf-8") as fh:
        for i in range(len(ROWS)):
            for dim in DIMS_WITH_ACC:
                fh.write(
                    json.dumps(
                        {
                            "item_id": item_id_for(i),
                            "dimension": dim,
                            "score": ours[dim][i],
                        }
                    )
                    + "\n"
                )

    qa_path = directory / "qa.jsonl"
    with open(qa_path, "w", encoding="utf-8") as fh:
        for i in range(len(ROWS)):
            fh.write(
                json.dumps(
                    {
                        "item_id": item_id_for(i),
                        "yes_fraction": 1.0,
                        "majority": True,
                        "n_answers": 15,
                        "tie": False,
                    }
                )
                + "\n"
            )

    return {
        "manifest": manifest,
        "mos": mos_path,
        "scores": scores_path,
        "qa": qa_path,
    }


def human_mos_records():
    """Human per-model means as in-memory MOS records (one item per model)."""
    from tiebench.mos import MosRecord

    records = []
    for i in range(len(ROWS)):
        for dim, column in (
            ("quality", HUMAN_Q),
            ("alignment", HUMAN_E),
            ("preservation", HUMAN_P),
        ):
            records.append(
                MosRecord(
                    item_id=item_id_for(i),
                    dimension=dim,
                    mos=column[i],
                    n_valid=15,
                    n_removed=0,
                    raw_mean=None,
                    raw_std=None,
                )
            )
    return records


def ours_mos_records():
    from tiebench.mos import MosRecord

    records = []
    for i in range(len(ROWS)):
        for dim, column in (
            ("quality", OURS_Q),
            ("alignment", OURS_E),
            ("preservation", OURS_P),
        ):
            records.append(
                MosRecord(
                    item_id=item_id_for(i),
                    dimension=dim,
                    mos=column[i],
                    n_valid=15,
                    n_removed=0,
                    raw_mean=None,
                    raw_std=None,
                )
            )
    return records
