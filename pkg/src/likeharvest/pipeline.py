"""Simulate, collect, analyse and evaluate in one deterministic pass.

The platform runs in-process on a virtual clock. After every pull the
collector commits ``log.json`` together with a snapshot of the platform
(clock, rate windows, cap usage, audit length), so a killed run resumes to
exactly the state an uninterrupted run would have had.

Run directory::

    config.json
    world/            world.json, events.jsonl
    server/           audit.jsonl
    dataset/          collector output (see DatasetStore)
    dataset.jsonl     merged canonical dataset
    analysis/         bins.csv, histogram.csv, embedding.csv, embedding.svg, summary.json
    eval/             completeness.csv, recall.csv, detection.json, summary.json
    report.json, report.md
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from . import eval as ev
from .analysis import bin_size_histogram, bin_users, build_matrix, coordination_probability, svd_embed
from .analysis.outputs import embedding_svg, write_bins_csv, write_embedding_csv, write_histogram_csv
from .client import InProcessClient
from .collector import DatasetStore, atomic_write, run as run_collector
from .config import RunConfig
from .datastore import Dataset, load_dataset, save_canonical
from .errors import ConfigError, EmptyMatrixError, NumericalError
from .platform import AuditRecord, Platform, VirtualClock, read_audit
from .report import write_report
from .world import WorldTimeline, generate_world, save_world

log = logging.getLogger(__name__)

CRASH_ENV = "LIKEHARVEST_CRASH_AFTER_PULL"
CRASH_EXIT_CODE = 70


@dataclass(frozen=True)
class RunLayout:
    root: Path

    @property
    def world(self) -> Path:
        return self.root / "world"

    @property
    def audit(self) -> Path:
        return self.root / "server" / "audit.jsonl"

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def merged(self) -> Path:
        return self.root / "dataset.jsonl"

    @property
    def analysis(self) -> Path:
        return self.root / "analysis"

    @property
    def eval(self) -> Path:
        return self.root / "eval"


class AuditFile:
    """Appends audit records as JSON lines, flushing each one."""

    def __init__(self, path: Path, keep: list[AuditRecord]):
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write(path, "".join(r.to_json() + "\n" for r in keep))
        self.fh = open(path, "a")

    def __call__(self, rec: AuditRecord) -> None:
        self.fh.write(rec.to_json() + "\n")
        self.fh.flush()

    def close(self) -> None:
        self.fh.close()


def _crash_hook(crash_after: int | None):
    if crash_after is None:
        return None

    def hook(k: int, _state) -> None:
        if k + 1 == crash_after:
            log.warning("simulated crash after pull %d", k + 1)
            os._exit(CRASH_EXIT_CODE)

    return hook


def collect(cfg: RunConfig, layout: RunLayout, timeline: WorldTimeline, crash_after: int | None = None) -> Platform:
    """Collect ``layout.dataset`` against an in-process platform, resuming if possible."""
    if cfg.collector is None:
        raise ConfigError("the pipeline needs a collector section", ["collector"])
    opts = cfg.platform
    platform = Platform(
        timeline,
        clock=VirtualClock(cfg.sim.epoch),
        tokens=cfg.collector.tokens,
        rate_limit=opts.rate_limit,
        monthly_cap=opts.monthly_cap,
        search_limit=opts.search_limit,
    )
    state = DatasetStore(layout.dataset).load_state()
    keep: list[AuditRecord] = []
    if state is not None and state.driver:
        keep = read_audit(layout.audit)[: state.driver["audit_length"]]
        if len(keep) != state.driver["audit_length"]:
            raise ConfigError("audit log is shorter than the committed state", ["server/audit.jsonl"])
        platform.restore(state.driver, keep)
    sink = AuditFile(layout.audit, keep)
    platform.audit_sink = sink
    try:
        run_collector(
            cfg.collector,
            InProcessClient(platform, virtual=True),
            layout.dataset,
            driver_state=platform.snapshot,
            after_pull=_crash_hook(crash_after),
        )
    finally:
        sink.close()
    return platform


def _dump(path: Path, obj: Any) -> None:
    atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def analyze(dataset: Dataset, cfg: RunConfig, out: Path):
    """Bins, histogram and embedding. Returns (matrix, bins) or (None, None) when empty."""
    out.mkdir(parents=True, exist_ok=True)
    a = cfg.analysis
    try:
        matrix = build_matrix(dataset)
    except EmptyMatrixError as exc:
        for name, header in (("bins.csv", "bin_id,size,p_b,member_user_ids"), ("histogram.csv", "size,bin_count,user_count"), ("embedding.csv", "user_id,x,y,bin_id,excluded")):
            atomic_write(out / name, header + "\n")
        _dump(out / "summary.json", {"n": 0, "m": 0, "bins": 0, "embedding": None, "note": str(exc)})
        return None, None
    bins = bin_users(matrix).canonical()
    write_bins_csv(out / "bins.csv", bins, matrix, a.c)
    write_histogram_csv(out / "histogram.csv", bin_size_histogram(bins, 1))
    summary: dict[str, Any] = {
        "n": matrix.n,
        "m": matrix.m,
        "bins": len(bins),
        "singletons": sum(b.size == 1 for b in bins),
        "largest_bin": bins.bins[0].size,
        "c": a.c,
        "min_bin_size": a.min_bin_size,
        "large_bins": [
            {"bin_id": i, "size": b.size, "p_b": coordination_probability(b.size, a.c)}
            for i, b in enumerate(bins)
            if b.size >= a.min_bin_size
        ],
    }
    try:
        emb = svd_embed(matrix, a.q)
    except (EmptyMatrixError, NumericalError) as exc:
        summary["embedding"] = None
        summary["embedding_note"] = str(exc)
        atomic_write(out / "embedding.csv", "user_id,x,y,bin_id,excluded\n")
    else:
        write_embedding_csv(out / "embedding.csv", emb, matrix, bins)
        atomic_write(out / "embedding.svg", embedding_svg(emb, bins, matrix, min_size=a.min_bin_size))
        summary["embedding"] = {
            "q": a.q,
            "users": int(emb.user_ids.size),
            "excluded": len(emb.excluded),
            "eigenvalues": [float(x) for x in emb.eigenvalues],
            "iterations": emb.iterations,
        }
    _dump(out / "summary.json", summary)
    return matrix, bins


def evaluate(dataset: Dataset, timeline: WorldTimeline | None, matrix, bins, cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    comp = ev.completeness(dataset, cfg.eval.population)
    ev.write_completeness_csv(comp, out / "completeness.csv")
    summary: dict[str, Any] = {"population": cfg.eval.population, "completeness": ev.summary_dict(comp)}
    if timeline is not None:
        rec = ev.ground_truth_recall(dataset, timeline)
        ev.write_recall_csv(rec, out / "recall.csv")
        summary["recall"] = {"overall": ev.fraction_str(rec.overall), "overall_float": float(rec.overall), "vacuous": rec.vacuous}
        if matrix is not None:
            det = ev.detection_metrics(bins, matrix, timeline.ground_truth, cfg.analysis.min_bin_size, cfg.eval.jaccard_threshold)
        else:
            det = ev.DetectionReport([], cfg.analysis.min_bin_size, 0, 0, None, None)
        ev.write_detection_json(det, out / "detection.json")
    _dump(out / "summary.json", summary)


def run_pipeline(cfg: RunConfig, out: str | Path, crash_after: int | None = None) -> Path:
    if cfg.clock != "virtual":
        raise ConfigError("the pipeline runs on the virtual clock only", ["clock"])
    if crash_after is None and os.environ.get(CRASH_ENV):
        crash_after = int(os.environ[CRASH_ENV])
    layout = RunLayout(Path(out))
    layout.root.mkdir(parents=True, exist_ok=True)
    resolved = cfg.to_dict(redact=True)
    previous = layout.root / "config.json"
    if previous.exists() and (layout.dataset / "log.json").exists():
        if json.loads(previous.read_text()) != resolved:
            raise ConfigError(f"{layout.root} holds a run with a different config; use a fresh directory", ["out"])
    _dump(previous, resolved)
    timeline = generate_world(cfg.sim)
    save_world(timeline, layout.world)
    collect(cfg, layout, timeline, crash_after)
    dataset = load_dataset(layout.dataset)
    save_canonical(dataset, layout.merged)
    matrix, bins = analyze(dataset, cfg, layout.analysis)
    evaluate(dataset, timeline, matrix, bins, cfg, layout.eval)
    write_report(layout.root)
    return layout.root
