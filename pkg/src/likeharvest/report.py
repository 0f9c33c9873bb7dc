"""Summarise a run directory into report.json and report.md.

Every section is read back from the artifacts on disk, so the report can be
regenerated for any run directory, including one whose dataset is empty.
Missing artifacts produce zeroed sections.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from pathlib import Path
from typing import Any, Iterable

from .collector import atomic_write
from .platform import AuditRecord, read_audit, window_start


def audit_stats(records: Iterable[AuditRecord]) -> dict[str, Any]:
    by_endpoint: Counter[str] = Counter()
    per_window: Counter[tuple[str, str, int]] = Counter()
    limited = 0
    total = 0
    for r in records:
        total += 1
        by_endpoint[r.endpoint] += 1
        if r.outcome == "rate_limited":
            limited += 1
        elif r.endpoint in ("liking_users", "retweeted_by"):
            per_window[(r.token, r.endpoint, window_start(r.timestamp))] += 1
    liking = [n for (_, ep, _), n in per_window.items() if ep == "liking_users"]
    return {
        "requests": total,
        "by_endpoint": dict(sorted(by_endpoint.items())),
        "rate_limited": limited,
        "peak_liking_requests_per_token_window": max(liking, default=0),
    }


def _json(path: Path, default: Any) -> Any:
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return default


def _csv_rows(path: Path) -> list[dict[str, str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError:
        return []


def build_report(run_dir: str | Path) -> dict[str, Any]:
    root = Path(run_dir)
    manifest = _json(root / "dataset" / "manifest.json", {})
    analysis = _json(root / "analysis" / "summary.json", {})
    ev = _json(root / "eval" / "summary.json", {})
    detection = _json(root / "eval" / "detection.json", None)
    min_size = analysis.get("min_bin_size", 50)
    hist = [{k: int(v) for k, v in row.items()} for row in _csv_rows(root / "analysis" / "histogram.csv")]

    tweets = likers_tweets = 0
    merged = root / "dataset.jsonl"
    if merged.exists():
        with open(merged) as fh:
            next(fh, None)
            for line in fh:
                rec = json.loads(line)
                if "orphan" in rec:
                    continue
                tweets += 1
                likers_tweets += bool(rec["likers"])

    m = analysis.get("m", 0)
    singletons = analysis.get("singletons", 0)
    completeness = ev.get("completeness") or {
        "tweets": 0,
        "exact": 0.0,
        "within_10pct": 0.0,
        "within_10_likes": 0.0,
        "negative_within_10pct": 0.0,
        "positive_within_10pct": 0.0,
        "negative_rows": 0,
        "positive_rows": 0,
    }
    return {
        "collection": {
            "pulls": manifest.get("pull_count", 0),
            "pullpoints_total": manifest.get("pullpoints_total", 0),
            "completed": manifest.get("completed", False),
            "errors": len(manifest.get("errors", [])),
            "tweets": tweets,
            "tweets_with_likers": likers_tweets,
        },
        "audit": audit_stats(read_audit(root / "server" / "audit.jsonl")),
        "matrix": {"n": analysis.get("n", 0), "m": m},
        "bins": {
            "count": analysis.get("bins", 0),
            "singletons": singletons,
            "singleton_user_share": singletons / m if m else 0.0,
            "largest": analysis.get("largest_bin", 0),
            "c": analysis.get("c", 0.95),
            "min_size": min_size,
            "large": analysis.get("large_bins", []),
        },
        "histogram": [row for row in hist if row["size"] >= min_size],
        "embedding": analysis.get("embedding"),
        "completeness": completeness,
        "recall": ev.get("recall") or {"overall": None, "overall_float": None, "vacuous": True},
        "detection": detection
        or {"groups": [], "precision": None, "recall": None, "large_bins": 0, "matched_large_bins": 0, "min_size": min_size},
    }


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.2f}%"


def render_markdown(rep: dict[str, Any]) -> str:
    c, a, b = rep["collection"], rep["audit"], rep["bins"]
    lines = [
        "# Run report",
        "",
        "## Collection",
        "",
        f"- pulls executed: {c['pulls']} of {c['pullpoints_total']} (completed: {c['completed']})",
        f"- tweets logged: {c['tweets']}, with collected likers: {c['tweets_with_likers']}",
        f"- API requests: {a['requests']}, rate-limited: {a['rate_limited']}",
        f"- peak liking requests per token and window: {a['peak_liking_requests_per_token_window']}",
        "",
        "## Bins",
        "",
        f"- matrix: {rep['matrix']['n']} tweets x {rep['matrix']['m']} users",
        f"- bins: {b['count']}, singletons: {b['singletons']} ({_pct(b['singleton_user_share'])} of users)",
        f"- largest bin: {b['largest']}",
        "",
        f"Bins of at least {b['min_size']} users (c = {b['c']}):",
        "",
        "| bin_id | size | P(B) |",
        "|---:|---:|---:|",
    ]
    lines += [f"| {x['bin_id']} | {x['size']} | {x['p_b']:.3g} |" for x in b["large"]]
    lines += ["", "Histogram (filtered):", "", "| size | bins | users |", "|---:|---:|---:|"]
    lines += [f"| {h['size']} | {h['bin_count']} | {h['user_count']} |" for h in rep["histogram"]]
    comp = rep["completeness"]
    lines += [
        "",
        "## Completeness",
        "",
        f"- tweets: {comp['tweets']}",
        f"- exact: {_pct(comp['exact'])}",
        f"- within 10%: {_pct(comp['within_10pct'])}",
        f"- within 10 likes: {_pct(comp['within_10_likes'])}",
        f"- negative deviation at most 10%: {_pct(comp['negative_within_10pct'])}",
        f"- positive deviation at most 10%: {_pct(comp['positive_within_10pct'])}",
        "",
        "## Ground truth",
        "",
        f"- liker recall: {rep['recall']['overall']}" + (" (vacuous)" if rep["recall"]["vacuous"] else ""),
    ]
    det = rep["detection"]
    lines += [
        f"- detection precision: {_pct(det['precision'])}, recall: {_pct(det['recall'])}",
        "",
        "| group | size | bin | bin size | exact | jaccard |",
        "|---|---:|---:|---:|---|---:|",
    ]
    for g in det["groups"]:
        lines.append(
            f"| {g['group_id']} | {g['size']} | {g['bin_index']} | {g['bin_size']} | {g['exact']} | {g['jaccard_exact']} |"
        )
    return "\n".join(lines) + "\n"


def write_report(run_dir: str | Path) -> dict[str, Any]:
    root = Path(run_dir)
    rep = build_report(root)
    atomic_write(root / "report.json", json.dumps(rep, indent=1, sort_keys=True) + "\n")
    atomic_write(root / "report.md", render_markdown(rep))
    return rep
