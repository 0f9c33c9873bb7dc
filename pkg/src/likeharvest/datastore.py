"""Load and merge a collection directory into one canonical dataset."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .collector import DATASET_FORMAT, SCHEMA_VERSION, atomic_write
from .errors import LoadError, SchemaVersionError
from .platform import PAGE_SIZE

MERGED_FORMAT = "likeharvest.merged"


@dataclass
class TweetInfo:
    tweet_id: int
    created_at: int
    max_like_count: int
    max_retweet_count: int
    author_id: int = 0
    text: str = ""


@dataclass(frozen=True)
class OrphanRow:
    """A users row whose tweet never appeared in any tweets file."""

    kind: str  # "likers" or "retweeters"
    tweet_id: int
    user_ids: tuple[int, ...]
    pulled_at: int
    source: str = field(default="", compare=False)


@dataclass
class Dataset:
    tweets: dict[int, TweetInfo] = field(default_factory=dict)
    # tweet -> {user: first-seen pull time}, in first-seen order
    likers: dict[int, dict[int, int]] = field(default_factory=dict)
    retweeters: dict[int, dict[int, int]] = field(default_factory=dict)
    final_harvest: set[int] = field(default_factory=set)
    orphans: list[OrphanRow] = field(default_factory=list)
    duplicates: list[dict[str, Any]] = field(default_factory=list)
    oversized: list[dict[str, Any]] = field(default_factory=list)
    manifest: dict[str, Any] = field(default_factory=dict)

    def collected_likers(self, tweet_id: int) -> int:
        return len(self.likers.get(tweet_id, ()))

    def same_content(self, other: "Dataset") -> bool:
        """Equality including liker order (dict ``==`` ignores order)."""

        def ordered(d: dict[int, dict[int, int]]) -> list:
            return [(k, list(v.items())) for k, v in sorted(d.items())]

        return (
            self.tweets == other.tweets
            and ordered(self.likers) == ordered(other.likers)
            and ordered(self.retweeters) == ordered(other.retweeters)
            and self.final_harvest == other.final_harvest
            and sorted(self.orphans, key=_orphan_key) == sorted(other.orphans, key=_orphan_key)
        )


def _orphan_key(o: OrphanRow) -> tuple:
    return (o.kind, o.pulled_at, o.tweet_id, o.user_ids)


def _epoch_files(directory: Path, prefix: str) -> list[Path]:
    out = []
    for p in directory.glob(f"{prefix}_*.jsonl"):
        suffix = p.stem[len(prefix) + 1 :]
        if suffix.isdigit():
            out.append((int(suffix), p))
    return [p for _, p in sorted(out)]


def _read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise LoadError(f"corrupt JSON on line {lineno}: {exc.msg}", str(path)) from exc
                if not isinstance(row, dict):
                    raise LoadError(f"line {lineno} is not an object", str(path))
                yield row
    except OSError as exc:
        raise LoadError(f"cannot read: {exc}", str(path)) from exc


def _absorb_tweets(ds: Dataset, path: Path) -> None:
    for row in _read_jsonl(path):
        try:
            tid, created = int(row["id"]), int(row["created_at"])
            likes, rts = int(row["like_count"]), int(row["retweet_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"bad tweet record {row!r}", str(path)) from exc
        cur = ds.tweets.get(tid)
        if cur is None:
            ds.tweets[tid] = TweetInfo(tid, created, likes, rts, int(row.get("author_id", 0)), row.get("text", ""))
        elif cur.created_at != created:
            raise LoadError(f"tweet {tid} has inconsistent created_at ({cur.created_at} vs {created})", str(path))
        else:
            cur.max_like_count = max(cur.max_like_count, likes)
            cur.max_retweet_count = max(cur.max_retweet_count, rts)


def _absorb_users(ds: Dataset, path: Path, kind: str, is_final: bool) -> None:
    ids_key = "liker_ids" if kind == "likers" else "retweeter_ids"
    target = ds.likers if kind == "likers" else ds.retweeters
    for row in _read_jsonl(path):
        try:
            tid, pulled = int(row["tweet_id"]), int(row["pulled_at"])
            ids = [int(u) for u in row[ids_key]]
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"bad {kind} row {row!r}", str(path)) from exc
        if len(set(ids)) != len(ids):
            ds.duplicates.append({"source": path.name, "tweet_id": tid, "kind": kind, "rows": len(ids) - len(set(ids))})
        if tid not in ds.tweets:
            ds.orphans.append(OrphanRow(kind, tid, tuple(ids), pulled, path.name))
            continue
        if is_final and kind == "likers":
            ds.final_harvest.add(tid)
        if len(ids) > PAGE_SIZE:
            ds.oversized.append({"source": path.name, "tweet_id": tid, "kind": kind, "size": len(ids)})
        seen = target.setdefault(tid, {})
        for uid in ids:
            if uid not in seen:
                seen[uid] = pulled
            elif pulled < seen[uid]:
                seen[uid] = pulled


def load_dataset(directory: str | Path) -> Dataset:
    """Merge every tweets/likers/retweeters file of a collection directory.

    Tweet counts keep their maximum over all snapshots; user sets are unions
    that remember the earliest pull at which each user was seen.
    """
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise LoadError("missing manifest", str(mpath))
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise LoadError(f"corrupt manifest: {exc.msg}", str(mpath)) from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise LoadError("not a dataset manifest", str(mpath))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema {manifest.get('schema_version')} != {SCHEMA_VERSION}", str(mpath))

    ds = Dataset(manifest=manifest)
    for path in _epoch_files(directory, "tweets"):
        _absorb_tweets(ds, path)
    for kind in ("likers", "retweeters"):
        for path in _epoch_files(directory, kind):
            _absorb_users(ds, path, kind, is_final=False)
        final = directory / f"{kind}_final.jsonl"
        if final.exists():
            _absorb_users(ds, final, kind, is_final=True)
    return ds


@dataclass
class ValidationReport:
    per_tweet: list[tuple[int, int, int]]  # (tweet_id, collected likers, max like count)
    orphans: list[OrphanRow]
    duplicates: list[dict[str, Any]]
    oversized: list[dict[str, Any]]

    @property
    def anomalies(self) -> int:
        return len(self.orphans) + len(self.duplicates) + len(self.oversized)


def validate(dataset: Dataset) -> ValidationReport:
    per_tweet = [
        (tid, dataset.collected_likers(tid), info.max_like_count) for tid, info in sorted(dataset.tweets.items())
    ]
    return ValidationReport(per_tweet, list(dataset.orphans), list(dataset.duplicates), list(dataset.oversized))


# canonical merged file -------------------------------------------------------------


def save_canonical(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"format": MERGED_FORMAT, "schema_version": SCHEMA_VERSION}, sort_keys=True)]
    for tid, info in sorted(dataset.tweets.items()):
        rec = {
            "tweet_id": tid,
            "created_at": info.created_at,
            "author_id": info.author_id,
            "text": info.text,
            "max_like_count": info.max_like_count,
            "max_retweet_count": info.max_retweet_count,
            "final_harvest": tid in dataset.final_harvest,
            "likers": [[u, t] for u, t in dataset.likers.get(tid, {}).items()],
            "retweeters": [[u, t] for u, t in dataset.retweeters.get(tid, {}).items()],
        }
        lines.append(json.dumps(rec, sort_keys=True, separators=(",", ":")))
    for o in sorted(dataset.orphans, key=lambda o: (o.kind, o.pulled_at, o.tweet_id)):
        lines.append(
            json.dumps(
                {"orphan": o.kind, "tweet_id": o.tweet_id, "user_ids": list(o.user_ids), "pulled_at": o.pulled_at, "source": o.source},
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    atomic_write(path, "\n".join(lines) + "\n")
    return path


def load_canonical(path: str | Path) -> Dataset:
    path = Path(path)
    rows = iter(_read_jsonl(path))
    head = next(rows, None)
    if head is None or head.get("format") != MERGED_FORMAT:
        raise LoadError("not a merged dataset file", str(path))
    if head.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema {head.get('schema_version')} != {SCHEMA_VERSION}", str(path))
    ds = Dataset()
    for rec in rows:
        if "orphan" in rec:
            ds.orphans.append(OrphanRow(rec["orphan"], rec["tweet_id"], tuple(rec["user_ids"]), rec["pulled_at"], rec["source"]))
            continue
        tid = rec["tweet_id"]
        ds.tweets[tid] = TweetInfo(
            tid, rec["created_at"], rec["max_like_count"], rec["max_retweet_count"], rec["author_id"], rec["text"]
        )
        if rec["likers"]:
            ds.likers[tid] = {u: t for u, t in rec["likers"]}
        if rec["retweeters"]:
            ds.retweeters[tid] = {u: t for u, t in rec["retweeters"]}
        if rec["final_harvest"]:
            ds.final_harvest.add(tid)
    return ds


def write_layout(dataset: Dataset, directory: str | Path) -> Path:
    """Write ``dataset`` back out in the collector's directory layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"format": DATASET_FORMAT, "schema_version": SCHEMA_VERSION, "rewritten": True}
    atomic_write(directory / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    tweet_rows = [
        {
            "id": tid,
            "created_at": info.created_at,
            "author_id": info.author_id,
            "text": info.text,
            "like_count": info.max_like_count,
            "retweet_count": info.max_retweet_count,
        }
        for tid, info in sorted(dataset.tweets.items())
    ]
    _write_rows(directory / "tweets_0.jsonl", tweet_rows)

    for kind, ids_key, users in (("likers", "liker_ids", dataset.likers), ("retweeters", "retweeter_ids", dataset.retweeters)):
        by_time: dict[int, list[dict[str, Any]]] = {}
        for tid, seen in sorted(users.items()):
            groups: dict[int, list[int]] = {}
            for uid, t in seen.items():
                groups.setdefault(t, []).append(uid)
            for t, ids in groups.items():
                by_time.setdefault(t, []).append({"tweet_id": tid, ids_key: ids, "pulled_at": t})
        for o in dataset.orphans:
            if o.kind == kind:
                by_time.setdefault(o.pulled_at, []).append({"tweet_id": o.tweet_id, ids_key: list(o.user_ids), "pulled_at": o.pulled_at})
        for t, rows in sorted(by_time.items()):
            _write_rows(directory / f"{kind}_{t}.jsonl", rows)
        if kind == "likers":
            final_rows = [{"tweet_id": tid, ids_key: [], "pulled_at": 0} for tid in sorted(dataset.final_harvest)]
            _write_rows(directory / "likers_final.jsonl", final_rows)
    return directory


def _write_rows(path: Path, rows: list[dict[str, Any]]) -> None:
    atomic_write(path, "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows))
