"""Command-line entry point.

Exit codes: 0 success, 1 validation failure (bad input data), 2 runtime
error (missing files, network, ports). Data goes to stdout as line-delimited
JSON (``--table`` switches to aligned text); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataset import DIMENSIONS, load_manifest, load_ratings
from .errors import TiebenchError, ValidationFailure
from .gateway import RemoteConfig, load_score_file, run_builtin, run_remote
from .mos import (
    OutlierPolicy,
    load_mos_records,
    load_qa_consensus,
    process_ratings,
    write_mos_table,
    write_qa_consensus,
)
from .report import (
    OverallWeights,
    align_metric,
    alignment_rows_json,
    build_leaderboard,
    format_table,
    leaderboard_rows_json,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiebench",
        description="Benchmark engine for text-guided image editing studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser(
        "validate", help="validate a manifest and optionally a ratings file"
    )
    p_validate.add_argument("manifest", help="manifest file (line-delimited JSON)")
    p_validate.add_argument("--ratings", help="ratings file to cross-validate")
    p_validate.add_argument(
        "--no-image-check",
        action="store_true",
        help="skip image decodability checks",
    )

    p_mos = sub.add_parser(
        "mos", help="run the ratings-to-MOS pipeline and write the MOS table"
    )
    p_mos.add_argument("--ratings", required=True, help="ratings file")
    p_mos.add_argument("--out-dir", required=True, help="output directory")
    p_mos.add_argument("--manifest", help="manifest for item cross-validation")
    p_mos.add_argument("--normal-k", type=float, default=2.0,
                       help="outlier multiplier for normal items")
    p_mos.add_argument("--nonnormal-k", type=float, default=4.47213595499958,
                       help="outlier multiplier for non-normal items")
    p_mos.add_argument("--subject-reject-fraction", type=float, default=0.05,
                       help="exclude subjects whose outlier fraction exceeds this")
    p_mos.add_argument("--kurtosis-band", default="2,4",
                       help="normality kurtosis band as LO,HI")
    p_mos.add_argument("--pooled", action="store_true",
                       help="pool dimensions for per-subject normalization")

    p_eval = sub.add_parser(
        "eval", help="score a candidate metric against human ground truth"
    )
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--mos", required=True, help="MOS table file")
    p_eval.add_argument("--qa", help="QA consensus file (enables accuracy)")
    source = p_eval.add_mutually_exclusive_group(required=True)
    source.add_argument("--metric", help="in-process metric, e.g. builtin:mse")
    source.add_argument("--scores", help="pre-computed score file")
    source.add_argument("--remote", help="remote scorer endpoint URL")
    p_eval.add_argument("--slice", action="append", default=None,
                        choices=["global", "per-task", "per-tier"],
                        help="slices to report (repeatable; default global)")
    p_eval.add_argument("--include-qa", action="store_true",
                        help="also request yes/no answers from the remote scorer")
    p_eval.add_argument("--concurrency", type=int, default=4)
    p_eval.add_argument("--timeout", type=float, default=30.0)
    p_eval.add_argument("--retries", type=int, default=3)
    p_eval.add_argument("--backoff-base", type=float, default=1.0)
    p_eval.add_argument("--no-image-check", action="store_true",
                        help="skip image decodability checks")
    p_eval.add_argument("--table", action="store_true", help="human-readable output")

    p_board = sub.add_parser(
        "leaderboard", help="rank editing models by weighted geometric overall score"
    )
    p_board.add_argument("--manifest", required=True)
    p_board.add_argument("--mos", required=True, help="MOS table file")
    p_board.add_argument("--qa", required=True, help="QA consensus file")
    p_board.add_argument("--weights", default="0.3,0.4,0.3",
                         help="quality,alignment,preservation weights")
    p_board.add_argument("--no-image-check", action="store_true",
                         help="skip image decodability checks")
    p_board.add_argument("--table", action="store_true", help="human-readable output")

    p_serve = sub.add_parser("serve", help="run the campaign service")
    p_serve.add_argument("--config", required=True, help="service config JSON file")

    return parser


def _cmd_validate(args) -> int:
    items = load_manifest(args.manifest, check_images=not args.no_image_check)
    tiers = {"high-level": 0, "low-level": 0}
    for item in items:
        tiers[item.tier] += 1
    summary = {
        "manifest": args.manifest,
        "n_items": len(items),
        "tier_counts": tiers,
        "n_models": len({item.editing_model for item in items}),
    }
    if args.ratings:
        records = load_ratings(args.ratings, manifest=items)
        summary["n_ratings"] = len(records)
        summary["n_subjects"] = len({r.subject_id for r in records})
    print(json.dumps(summary))
    return 0


def _cmd_mos(args) -> int:
    try:
        lo, hi = (float(v) for v in args.kurtosis_band.split(","))
    except ValueError as exc:
        raise ValidationFailure(f"bad --kurtosis-band {args.kurtosis_band!r}") from exc
    policy = OutlierPolicy(
        normal_k=args.normal_k,
        nonnormal_k=args.nonnormal_k,
        subject_reject_fraction=args.subject_reject_fraction,
        normality_kurtosis_band=(lo, hi),
    )
    manifest = load_manifest(args.manifest, check_images=False) if args.manifest else None
    ratings = load_ratings(args.ratings, manifest=manifest)
    table = process_ratings(ratings, policy, pool_dimensions=args.pooled)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_mos_table(table, out_dir / "mos.jsonl", summary_path=out_dir / "summary.json")
    write_qa_consensus(table.qa, out_dir / "qa.jsonl")
    for item_id, dim in table.empty_items():
        print(f"warning: no valid ratings for ({item_id}, {dim})", file=sys.stderr)
    print(json.dumps(dict(table.summary)))
    return 0


def _build_run(args, items):
    base_dir = Path(args.manifest).parent
    if args.metric:
        name = args.metric
        if name.startswith("builtin:"):
            name = name.split(":", 1)[1]
        return run_builtin(name, items, base_dir=base_dir)
    if args.scores:
        return load_score_file(args.scores, manifest=items)
    config = RemoteConfig(
        endpoint=args.remote,
        concurrency=args.concurrency,
        timeout=args.timeout,
        retries=args.retries,
        backoff_base=args.backoff_base,
    )
    return run_remote(
        config,
        items,
        DIMENSIONS,
        include_qa=args.include_qa,
        base_dir=base_dir,
    )


def _cmd_eval(args) -> int:
    items = load_manifest(args.manifest, check_images=not args.no_image_check)
    mos_records = load_mos_records(args.mos)
    qa_truth = load_qa_consensus(args.qa) if args.qa else []
    run = _build_run(args, items)
    slicing = tuple(args.slice) if args.slice else ("global",)
    report = align_metric(run, mos_records, qa_truth, items, slicing=slicing)
    if args.table:
        rows = []
        for cell in report.slices:
            if cell.report is not None:
                rows.append(
                    [
                        cell.slice_name,
                        cell.dimension,
                        cell.n,
                        f"{cell.report.srcc:.4f}",
                        f"{cell.report.krcc:.4f}",
                        f"{cell.report.plcc:.4f}",
                        f"{cell.report.rmse:.4f}",
                    ]
                )
            else:
                rows.append([cell.slice_name, cell.dimension, cell.n, "-", "-", "-",
                             cell.error])
        print(format_table(
            ["slice", "dimension", "n", "srcc", "krcc", "plcc", "rmse"], rows
        ))
        for slice_name, acc in report.qa_accuracy.items():
            acc_str = "-" if acc is None else f"{acc:.4f}"
            print(f"qa accuracy [{slice_name}]: {acc_str}")
    else:
        for line in alignment_rows_json(report):
            print(line)
    return 0


def _cmd_leaderboard(args) -> int:
    try:
        wq, we, wp = (float(v) for v in args.weights.split(","))
    except ValueError as exc:
        raise ValidationFailure(f"bad --weights {args.weights!r}") from exc
    weights = OverallWeights(w_quality=wq, w_alignment=we, w_preservation=wp)
    items = load_manifest(args.manifest, check_images=not args.no_image_check)
    mos_records = load_mos_records(args.mos)
    qa = load_qa_consensus(args.qa)
    rows = build_leaderboard(mos_records, qa, items, weights)
    if args.table:
        print(
            format_table(
                ["rank", "model", "quality", "alignment", "preservation",
                 "overall", "qa_acc", "acc_rank"],
                [
                    [
                        r.rank_overall,
                        r.editing_model,
                        f"{r.mean_mos['quality']:.2f}",
                        f"{r.mean_mos['alignment']:.2f}",
                        f"{r.mean_mos['preservation']:.2f}",
                        f"{r.overall:.2f}",
                        f"{r.qa_accuracy:.3f}",
                        r.rank_acc,
                    ]
                    for r in rows
                ],
            )
        )
    else:
        for line in leaderboard_rows_json(rows):
            print(line)
    return 0


def _cmd_serve(args) -> int:
    import socket

    import uvicorn

    from .campaign import CampaignStore
    from .service import create_app, load_service_config

    config = load_service_config(args.config)
    # Fail fast with the runtime exit code when the port is taken.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((config.host, config.port))
    finally:
        probe.close()
    store = CampaignStore(
        config.data_dir, fsync=config.fsync, snapshot_every=config.snapshot_every
    )
    app = create_app(store)
    try:
        uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    except SystemExit as exc:
        return 2 if exc.code else 0
    finally:
        store.close()
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "mos": _cmd_mos,
        "eval": _cmd_eval,
        "leaderboard": _cmd_leaderboard,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TiebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
