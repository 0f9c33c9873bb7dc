from __future__ import annotations

from pathlib import Path

import pytest

from likeharvest.config import load_config
from likeharvest.pipeline import run_pipeline
from likeharvest.world import DEFAULT_EPOCH, Event, SimConfig, Tweet, WorldTimeline

E = DEFAULT_EPOCH


def hand_world(tweets, events, ground_truth=None, tag="#dkpol") -> WorldTimeline:
    """tweets: [(tweet_id, created_offset)], events: [(offset, user, tweet, kind)]."""
    tws = tuple(Tweet(tid, E + c, 200_000_000, f"{tag} post {tid}", (tag,), False) for tid, c in sorted(tweets, key=lambda x: (x[1], x[0])))
    evs = sorted((Event(E + t, u, tid, kind) for t, u, tid, kind in events), key=lambda e: (e.timestamp, e.user_id, e.tweet_id, kind_order(e.kind)))
    return WorldTimeline(SimConfig(), tws, tuple(evs), {g: frozenset(m) for g, m in (ground_truth or {}).items()})


def kind_order(kind: str) -> int:
    return ("like", "retweet", "unlike").index(kind)


_RUNS: dict[str, Path] = {}


@pytest.fixture(scope="session")
def preset_run(tmp_path_factory):
    """Run a bundled preset once per session and return its run directory."""

    def get(name: str) -> Path:
        if name not in _RUNS:
            out = tmp_path_factory.mktemp(f"run_{name}")
            run_pipeline(load_config(name), out)
            _RUNS[name] = out
        return _RUNS[name]

    return get


def tree_bytes(root: Path) -> dict[str, bytes]:
    """Every file under ``root`` keyed by relative path."""
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def first_difference(a: dict[str, bytes], b: dict[str, bytes]) -> str | None:
    if a.keys() != b.keys():
        return f"file sets differ: {sorted(a.keys() ^ b.keys())}"
    for name in a:
        if a[name] != b[name]:
            return f"{name} differs"
    return None


# acceptance verdicts, printed once at the end of the session
VERDICTS: list[str] = []


@pytest.fixture()
def verdict():
    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
