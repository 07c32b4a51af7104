"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .calibration import calibrate
from .dataset import BundleError, DatasetBundle, read_bundle, write_bundle
from .evaluation import (
    EvalConfig,
    eligible_queries,
    max_recall_at_full_precision,
    pr_curve,
    read_detections,
    write_detections,
    write_pr_csv,
)
from .index import IndexConfig
from .modelio import ModelFileError, load_model, save_model
from .pipeline import replay
from .synth import synth_generate
from .voting import DetectorConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# detector/index options that may come from --config or flags
_DETECTOR_KEYS = ("mode", "alpha", "alpha_map", "t_delay", "dt", "theta", "k_nn", "verify", "ratio", "min_matches")
_INDEX_KEYS = ("codebook_size", "probe_cells", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _detector_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detector")
    g.add_argument("--config", type=Path, help="JSON file of options; flags override it")
    g.add_argument("--model", type=Path, help="model file from 'calibrate'; trained on the dataset if absent")
    g.add_argument("--mode", choices=("v2v", "v2m"))
    g.add_argument("--alpha", type=float)
    g.add_argument("--alpha-map", type=float)
    g.add_argument("--t-delay", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--theta", type=float, help="squared distance cap (default: model value or inf)")
    g.add_argument("--k-nn", type=int, help="fixed neighbour count instead of the adaptive table")
    g.add_argument("--verify", action="store_true", default=None, help="apply the ratio-test verifier")
    g.add_argument("--ratio", type=float)
    g.add_argument("--min-matches", type=int)
    g.add_argument("--codebook-size", type=int)
    g.add_argument("--probe-cells", type=int)
    g.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probvote", description="Probabilistic vote-based loop closure detection.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="replay a dataset and write detections")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="detection CSV")
    p.add_argument("--report", type=Path, help="run report JSON (default: <out>.report.json)")
    _detector_flags(p)

    p = sub.add_parser("score-matrix", help="replay a dataset and dump every per-vertex score")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="CSV of query_id,vertex_id,votes,gate_pass,neg_log_score")
    _detector_flags(p)

    p = sub.add_parser("calibrate", help="train projection and codebooks and pick theta")
    p.add_argument("dataset", type=Path)
    p.add_argument("--out", type=Path, required=True, help="model file")
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--codebook-size", type=int, default=64)
    p.add_argument("--probe-cells", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-training", type=int, default=200_000)

    p = sub.add_parser("eval", help="precision/recall of a detection CSV")
    p.add_argument("detections", type=Path)
    p.add_argument("dataset", type=Path)
    p.add_argument("--d-near", type=float, default=5.0)
    p.add_argument("--d-far", type=float, default=10.0)
    p.add_argument("--t-delay", type=float, default=10.0, help="delay used for the run (defines recall's denominator)")
    p.add_argument("--verified", action="store_true", help="count only detections that passed verification")
    p.add_argument("--out", type=Path, required=True, help="PR CSV")

    p = sub.add_parser("synth", help="write a synthetic dataset bundle")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-places", type=int, default=200)
    p.add_argument("--revisit", action="append", metavar="START:LENGTH", help="revisit segment (repeatable; default 60:40)")
    p.add_argument("--sigma", type=float, default=0.28)
    p.add_argument("--aliasing-rate", type=float, default=0.2)
    p.add_argument("--landmark-fraction", type=float, default=0.3)
    return parser


def _load_config(args) -> dict:
    merged: dict = {}
    if args.config is not None:
        try:
            merged = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(merged, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(merged) - set(_DETECTOR_KEYS) - set(_INDEX_KEYS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in _DETECTOR_KEYS + _INDEX_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _prepare(args):
    opts = _load_config(args)
    bundle = read_bundle(args.dataset)
    if args.model is not None:
        model = load_model(args.model)
        base = model.index_cfg or IndexConfig(codebook_size=len(model.codebooks[0]))
        if "codebook_size" in opts and opts["codebook_size"] != base.codebook_size:
            raise UsageError("--codebook-size conflicts with the model file's codebooks")
    else:
        base = IndexConfig(
            codebook_size=opts.get("codebook_size", 64), probe_cells=opts.get("probe_cells", 32), seed=opts.get("seed", 0)
        )
        # theta stays disabled unless requested: training here is for convenience only
        model = calibrate(bundle, index_cfg=base, percentile=None)
        base = model.index_cfg
    icfg = IndexConfig(
        base.codebook_size, opts.get("probe_cells", base.probe_cells), base.max_distance, base.kmeans_iters, base.seed
    )
    det_opts = {k: opts[k] for k in _DETECTOR_KEYS if k in opts}
    det_opts.setdefault("theta", icfg.max_distance)
    try:
        cfg = DetectorConfig(**det_opts)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return bundle, model, cfg, icfg


def cmd_run(args) -> int:
    bundle, model, cfg, icfg = _prepare(args)
    report = replay(bundle, model, cfg, icfg)
    write_detections(args.out, report.detections())
    rpath = args.report or args.out.with_name(args.out.name + ".report.json")
    summary = report.summary()
    rpath.write_text(json.dumps(summary, indent=2) + "\n")
    t = summary["timing"]
    print(
        f"{t['steps']} steps, {summary['accepted']} accepted; "
        f"query {1e3 * t['query_avg']:.2f}±{1e3 * t['query_std']:.2f} ms, "
        f"add {1e3 * t['add_avg']:.2f}±{1e3 * t['add_std']:.2f} ms, total {t['total']:.2f} s"
    )
    return EXIT_OK


def cmd_score_matrix(args) -> int:
    bundle, model, cfg, icfg = _prepare(args)
    report = replay(bundle, model, cfg, icfg, collect_scores=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query_id", "vertex_id", "votes", "gate_pass", "neg_log_score"])
        for r in report.score_rows:
            w.writerow([r.query, r.vertex, r.votes, int(r.gate_pass), repr(r.neg_log_score)])
    print(f"{len(report.score_rows)} scored pairs")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    bundle = read_bundle(args.dataset)
    try:
        icfg = IndexConfig(codebook_size=args.codebook_size, probe_cells=args.probe_cells, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    model = calibrate(bundle, args.dim, icfg, args.percentile, args.max_training)
    save_model(args.out, model)
    print(f"theta = {model.theta!r}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        cfg = EvalConfig(args.d_near, args.d_far)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    detections = read_detections(args.detections)
    bundle = read_bundle(args.dataset)
    eligible = eligible_queries(bundle.positions, bundle.timestamps, args.t_delay, cfg)
    curve = pr_curve(detections, bundle.positions, eligible, cfg, use_verification=args.verified)
    write_pr_csv(args.out, curve)
    print(f"max recall at full precision: {max_recall_at_full_precision(curve):.4f}")
    return EXIT_OK


def _parse_revisits(specs) -> tuple:
    if not specs:
        return ((60, 40),)
    out = []
    for s in specs:
        try:
            a, b = s.split(":")
            out.append((int(a), int(b)))
        except ValueError:
            raise UsageError(f"bad revisit segment {s!r}; expected START:LENGTH") from None
    return tuple(out)


def cmd_synth(args) -> int:
    try:
        world = synth_generate(
            seed=args.seed, n_places=args.n_places, revisit_plan=_parse_revisits(args.revisit),
            sigma=args.sigma, aliasing_rate=args.aliasing_rate, landmark_fraction=args.landmark_fraction,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_bundle(DatasetBundle.from_world(world), args.out)
    print(f"{world.n_vertices} vertices written to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "score-matrix": cmd_score_matrix,
    "calibrate": cmd_calibrate,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"probvote {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BundleError, ModelFileError, KeyError, ValueError, OSError) as exc:
        print(f"probvote {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
