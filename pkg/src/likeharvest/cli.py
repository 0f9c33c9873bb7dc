"""Command-line entry point.

Every failure prints one JSON object to stderr::

    {"error_class": "config_error", "message": "...", "keys": [...], "exit_code": 2}

and exits with that code (2 config, 3 resumable, 4 input/load, 5 numerical).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import eval as ev
from .analysis import bin_size_histogram, bin_users, build_matrix, svd_embed
from .analysis.outputs import embedding_svg, write_bins_csv, write_embedding_csv, write_histogram_csv
from .budget import plan_budget
from .client import HttpClient
from .collector import run as run_collector
from .config import load_config, preset_names
from .datastore import Dataset, load_canonical, load_dataset
from .errors import ConfigError, LikeHarvestError
from .pipeline import run_pipeline
from .platform import Platform, VirtualClock, WallClock
from .report import write_report
from .server import PlatformHTTPServer
from .world import generate_world, load_world, save_world

log = logging.getLogger("likeharvest")


def _load_dataset(path: str) -> Dataset:
    p = Path(path)
    return load_dataset(p) if p.is_dir() else load_canonical(p)


def _out(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    timeline = generate_world(cfg.sim)
    save_world(timeline, args.out)
    print(json.dumps({"world": str(args.out), "tweets": len(timeline.tweets), "events": len(timeline.like_events)}))
    return 0


def _parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError as exc:
        raise ConfigError(f"bad --addr {addr!r}; expected host:port", ["addr"]) from exc


def cmd_serve(args) -> int:
    timeline = load_world(args.world)
    cfg = load_config(args.config) if args.config else None
    epoch = timeline.config.epoch
    clock = VirtualClock(epoch) if args.clock == "virtual" else WallClock(epoch, args.speed)
    opts = cfg.platform if cfg else None
    audit_fh = open(args.audit, "a") if args.audit else None
    platform = Platform(
        timeline,
        clock=clock,
        tokens=cfg.collector.tokens if cfg and cfg.collector else None,
        rate_limit=opts.rate_limit if opts else 75,
        monthly_cap=opts.monthly_cap if opts else 10_000_000,
        search_limit=opts.search_limit if opts else None,
        audit_sink=(lambda r: (audit_fh.write(r.to_json() + "\n"), audit_fh.flush())) if audit_fh else None,
    )
    server = PlatformHTTPServer(platform, _parse_addr(args.addr))
    print(json.dumps({"url": server.url, "clock": args.clock, "now": platform.get_clock()}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        if audit_fh:
            audit_fh.close()
    return 0


def cmd_collect(args) -> int:
    cfg = load_config(args.config)
    if cfg.collector is None:
        raise ConfigError("config has no collector section", ["collector"])
    client = HttpClient(args.server, virtual=(args.clock or cfg.clock) == "virtual")
    out = run_collector(cfg.collector, client, args.out, durable=args.durable)
    print(json.dumps({"dataset": str(out)}))
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    root = run_pipeline(cfg, args.out, crash_after=args.crash_after)
    print(json.dumps({"run": str(root)}))
    return 0


def cmd_bins(args) -> int:
    matrix = build_matrix(_load_dataset(args.dataset))
    bins = bin_users(matrix).canonical()
    out = _out(args.out)
    write_bins_csv(out / "bins.csv", bins, matrix, args.c)
    write_histogram_csv(out / "histogram.csv", bin_size_histogram(bins, args.min_size))
    print(json.dumps({"users": matrix.m, "bins": len(bins), "largest": bins.bins[0].size}))
    return 0


def cmd_embed(args) -> int:
    matrix = build_matrix(_load_dataset(args.dataset))
    bins = bin_users(matrix).canonical()
    emb = svd_embed(matrix, args.q)
    out = _out(args.out)
    write_embedding_csv(out / "embedding.csv", emb, matrix, bins)
    (out / "embedding.svg").write_text(embedding_svg(emb, bins, matrix, min_size=args.min_size))
    print(json.dumps({"users": int(emb.user_ids.size), "excluded": len(emb.excluded), "eigenvalues": emb.eigenvalues.tolist()}))
    return 0


def cmd_eval(args) -> int:
    dataset = _load_dataset(args.dataset)
    out = _out(args.out)
    comp = ev.completeness(dataset, args.population)
    ev.write_completeness_csv(comp, out / "completeness.csv")
    result = {"completeness": ev.summary_dict(comp)}
    if args.world:
        timeline = load_world(args.world)
        rec = ev.ground_truth_recall(dataset, timeline)
        ev.write_recall_csv(rec, out / "recall.csv")
        result["recall"] = ev.fraction_str(rec.overall)
        if dataset.likers:
            matrix = build_matrix(dataset)
            det = ev.detection_metrics(bin_users(matrix).canonical(), matrix, timeline.ground_truth, args.min_size)
        else:
            det = ev.DetectionReport([], args.min_size, 0, 0, None, None)
        ev.write_detection_json(det, out / "detection.json")
        result["detection_recall"] = det.recall
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    run = Path(args.run)
    if not run.is_dir():
        raise ConfigError(f"run directory {run} does not exist", ["run"])
    rep = write_report(run)
    print(json.dumps({"report": str(run / "report.json"), "tweets": rep["collection"]["tweets"]}))
    return 0


def cmd_budget(args) -> int:
    cfg = load_config(args.config)
    if cfg.collector is None:
        raise ConfigError("config has no collector section", ["collector"])
    rep = plan_budget(args.tweets_per_day, cfg.collector, cfg.platform.monthly_cap)
    print(json.dumps(rep.__dict__, indent=1, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="likeharvest", description="Simulate, harvest and analyse liking users.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="repeat for debug logging")
    sub = p.add_subparsers(dest="command", required=True)
    cfg_help = f"JSON config file or bundled preset ({', '.join(preset_names())})"

    s = sub.add_parser("simulate", help="generate a world and write it to disk")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--out", required=True, help="world directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("serve", help="serve a world over HTTP")
    s.add_argument("--world", required=True, help="directory written by simulate")
    s.add_argument("--addr", default="127.0.0.1:8750", help="host:port (default %(default)s; port 0 picks one)")
    s.add_argument("--config", help="config whose platform/collector sections set limits and tokens")
    s.add_argument("--clock", choices=("virtual", "wall"), default="virtual", help="default %(default)s")
    s.add_argument("--speed", type=float, default=1.0, help="wall clock speed-up factor (default %(default)s)")
    s.add_argument("--audit", help="append audit records to this JSONL file")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("collect", help="run the collector against a server")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--server", required=True, help="base URL, e.g. http://127.0.0.1:8750")
    s.add_argument("--out", required=True, help="dataset directory (resumed when it exists)")
    s.add_argument("--clock", choices=("virtual", "wall"), help="override the config's clock mode")
    s.add_argument("--durable", action="store_true", help="fsync every file before committing")
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("pipeline", help="simulate, collect, analyse and evaluate in process")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--out", required=True, help="run directory (resumed when it exists)")
    s.add_argument("--crash-after", type=int, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_pipeline)

    for name, func, text in (("bins", cmd_bins, "write bins.csv and histogram.csv"), ("embed", cmd_embed, "write embedding.csv and embedding.svg")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--dataset", required=True, help="dataset directory or merged dataset.jsonl")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--min-size", type=int, default=1 if name == "bins" else 50, help="bin size filter (default %(default)s)")
        if name == "bins":
            s.add_argument("--c", type=float, default=0.95, help="P(B) base (default %(default)s)")
        else:
            s.add_argument("--q", type=int, default=2, help="embedding dimensions (default %(default)s)")
        s.set_defaults(func=func)

    s = sub.add_parser("eval", help="write completeness.csv, and recall/detection when --world is given")
    s.add_argument("--dataset", required=True, help="dataset directory or merged dataset.jsonl")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--world", help="world directory providing ground truth")
    s.add_argument("--population", choices=("final_harvest", "all"), default="final_harvest", help="default %(default)s")
    s.add_argument("--min-size", type=int, default=50, help="bin size for detection (default %(default)s)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="(re)write report.json and report.md for a run directory")
    s.add_argument("--run", required=True, help="run directory written by pipeline")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("budget", help="estimate request and retrieval budget")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--tweets-per-day", type=float, required=True, help="expected matching tweets per day")
    s.set_defaults(func=cmd_budget)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except LikeHarvestError as exc:
        err = {"error_class": exc.error_class, "message": str(exc), "exit_code": exc.exit_code}
        if isinstance(exc, ConfigError):
            err["keys"] = exc.keys
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
