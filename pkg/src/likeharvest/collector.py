"""Rate-limit-aware harvesting of liking users.

The collector polls a text query every ``pullinterval`` seconds. Each pull
refreshes the like counts of tweets still inside their tracking window,
ranks logged tweets by *delta* (likes gained since their likers were last
requested) and requests the 100 most recent likers of the ``top_n`` tweets
whose delta reaches ``min_delta``. After the last pull a final harvest
requests the likers of every logged tweet with at least ``min_likes`` likes,
pausing 15 minutes after each ``req_rate_lim * len(tokens)`` requests.

State is persisted after every pull with write-then-rename, so a killed run
resumes from the first pullpoint that has not been executed.
"""

from __future__ import annotations

import bisect
import dataclasses
import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import ConfigError, LoadError, NotFoundError, RateLimitError, ResumableError, SchemaVersionError, TransportError
from .platform import WINDOW_SECONDS, TweetRecord, window_start

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DATASET_FORMAT = "likeharvest.dataset"

_DURATION = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([smhd]?)\s*$")
_UNITS = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400}


def parse_duration(value: int | float | str) -> int:
    """Seconds from ``300``, ``"300"``, ``"5m"``, ``"48h"`` or ``"30d"``."""
    if isinstance(value, bool):
        raise ConfigError(f"bad duration {value!r}")
    if isinstance(value, (int, float)):
        return int(value)
    m = _DURATION.match(value)
    if not m:
        raise ConfigError(f"bad duration {value!r}")
    return int(float(m.group(1)) * _UNITS[m.group(2)])


def token_fingerprint(token: str) -> str:
    return hashlib.sha256(token.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class CollectorParams:
    keyword: str
    tokens: tuple[str, ...]
    startpoint: int
    observationtime: int
    tracktime: int
    pullinterval: int
    min_delta: int = 3
    top_n: int = 36
    min_likes: int = 10
    req_rate_lim: int = 75
    collect_retweeters: bool = False

    @property
    def endpoint(self) -> int:
        return self.startpoint + self.observationtime + self.tracktime

    @property
    def observation_end(self) -> int:
        return self.startpoint + self.observationtime

    @property
    def safe_top_n_max(self) -> int:
        # top_n <= rlim * pullinterval / (15 * 60 s) * |token|
        return self.req_rate_lim * self.pullinterval * len(self.tokens) // WINDOW_SECONDS

    def pullpoints(self) -> list[int]:
        if self.observationtime == 0:
            return []
        count = (self.endpoint - self.startpoint) // self.pullinterval + 1
        return [self.startpoint + k * self.pullinterval for k in range(count)]

    def pull_index(self, t: int) -> int:
        k, rem = divmod(t - self.startpoint, self.pullinterval)
        if rem or k < 0 or t > self.endpoint:
            raise ValueError(f"{t} is not a pullpoint")
        return k

    def validate(self, now: int | None = None) -> None:
        bad = []
        if not self.keyword.strip():
            bad.append("keyword")
        if not self.tokens or any(not t for t in self.tokens):
            bad.append("tokens")
        if self.pullinterval <= 0:
            bad.append("pullinterval")
        if self.tracktime <= 0:
            bad.append("tracktime")
        if self.observationtime < 0:
            bad.append("observationtime")
        if self.min_delta < 1:
            bad.append("min_delta")
        if self.top_n < 1:
            bad.append("top_n")
        if self.min_likes < 0:
            bad.append("min_likes")
        if self.req_rate_lim < 1:
            bad.append("req_rate_lim")
        if bad:
            raise ConfigError("invalid collector params: " + ", ".join(bad), bad)
        if now is not None and self.startpoint > now:
            raise ConfigError(f"startpoint {self.startpoint} must be in the past (now={now})", ["startpoint"])
        if self.top_n > self.safe_top_n_max:
            log.warning(
                "top_n=%d exceeds the safe maximum %d; the client-side window guard will defer excess requests",
                self.top_n,
                self.safe_top_n_max,
            )

    def to_dict(self, redact: bool = False) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["tokens"] = [token_fingerprint(t) for t in self.tokens] if redact else list(self.tokens)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CollectorParams":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError("unknown collector keys: " + ", ".join(extra), extra)
        missing = sorted(k for k in ("keyword", "tokens", "startpoint", "observationtime", "tracktime", "pullinterval") if k not in data)
        if missing:
            raise ConfigError("missing collector keys: " + ", ".join(missing), missing)
        d = dict(data)
        tokens = d["tokens"]
        if isinstance(tokens, str):
            tokens = [tokens]
        d["tokens"] = tuple(tokens)
        for key in ("observationtime", "tracktime", "pullinterval"):
            try:
                d[key] = parse_duration(d[key])
            except ConfigError as exc:
                raise ConfigError(f"{key}: {exc}", [key]) from exc
        d["startpoint"] = int(d["startpoint"])
        return cls(**d)


@dataclass
class LogEntry:
    tweet_id: int
    like_count: int
    like_count_last: int = 0
    created_at: int = 0

    @property
    def delta(self) -> int:
        return self.like_count - self.like_count_last


@dataclass
class PullSnapshot:
    t: int
    tweets: list[TweetRecord] = field(default_factory=list)
    likers: list[dict[str, Any]] = field(default_factory=list)
    retweeters: list[dict[str, Any]] = field(default_factory=list)
    deferred: int = 0


@dataclass
class CollectorState:
    log: dict[int, LogEntry] = field(default_factory=dict)
    rt_log: dict[int, LogEntry] = field(default_factory=dict)
    next_pull_index: int = 0
    token_index: int = 0
    pulls_completed: int = 0
    # client-side view of (token, pool) -> (window_start, requests)
    windows: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)
    errors: list[dict[str, Any]] = field(default_factory=list)
    harvest_done: bool = False
    driver: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        def rows(entries: dict[int, LogEntry]) -> list[list[int]]:
            return [[e.tweet_id, e.like_count, e.like_count_last, e.created_at] for _, e in sorted(entries.items())]

        return {
            "format": "likeharvest.log",
            "schema_version": SCHEMA_VERSION,
            "columns": ["tweet", "like.count", "like.count.last", "created_at"],
            "log": rows(self.log),
            "retweet_log": rows(self.rt_log),
            "resume": {
                "next_pull_index": self.next_pull_index,
                "token_index": self.token_index,
                "pulls_completed": self.pulls_completed,
                "harvest_done": self.harvest_done,
                "windows": sorted([tok, pool, start, n] for (tok, pool), (start, n) in self.windows.items()),
                "errors": self.errors,
            },
            "driver": self.driver,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CollectorState":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionError(f"log schema {d.get('schema_version')} != {SCHEMA_VERSION}")
        r = d["resume"]
        return cls(
            log={row[0]: LogEntry(*row) for row in d["log"]},
            rt_log={row[0]: LogEntry(*row) for row in d["retweet_log"]},
            next_pull_index=r["next_pull_index"],
            token_index=r["token_index"],
            pulls_completed=r["pulls_completed"],
            harvest_done=r["harvest_done"],
            windows={(tok, pool): (start, n) for tok, pool, start, n in r["windows"]},
            errors=list(r["errors"]),
            driver=dict(d.get("driver", {})),
        )


# log operations ---------------------------------------------------------------


def update_log_1(log: dict[int, LogEntry], tweets: Iterable[TweetRecord], count_field: str = "like_count") -> dict[int, LogEntry]:
    """Append unseen tweets with ``like_count_last=0``; refresh counts of known ones.

    Duplicate ids within ``tweets``: the last occurrence wins.
    """
    for rec in tweets:
        count = getattr(rec, count_field)
        entry = log.get(rec.id)
        if entry is None:
            log[rec.id] = LogEntry(rec.id, count, 0, rec.created_at)
        else:
            entry.like_count = count
    return log


def find_candidates(log: Mapping[int, LogEntry], min_delta: int) -> list[tuple[int, int]]:
    """Entries with delta >= min_delta, largest delta first, older tweets first on ties."""
    hits = [e for e in log.values() if e.delta >= min_delta]
    hits.sort(key=lambda e: (-e.delta, e.created_at, e.tweet_id))
    return [(e.tweet_id, e.delta) for e in hits]


def update_log_2(log: dict[int, LogEntry], tweet_id: int) -> None:
    entry = log[tweet_id]
    entry.like_count_last = entry.like_count


def next_token(state: CollectorState, params: CollectorParams) -> str:
    if not params.tokens:
        raise ConfigError("no bearer tokens configured", ["tokens"])
    token = params.tokens[state.token_index % len(params.tokens)]
    state.token_index += 1
    return token


# client-side window guard ------------------------------------------------------


def _window_used(state: CollectorState, token: str, pool: str, now: int) -> int:
    start, n = state.windows.get((token, pool), (None, 0))
    return n if start == window_start(now) else 0


def _window_record(state: CollectorState, token: str, pool: str, now: int, n: int = 1) -> None:
    state.windows[(token, pool)] = (window_start(now), _window_used(state, token, pool, now) + n)


# persistence -------------------------------------------------------------------


def atomic_write(path: Path, data: str | bytes, durable: bool = False) -> None:
    tmp = path.with_name(path.name + ".tmp")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
        if durable:
            fh.flush()
            os.fsync(fh.fileno())
    os.replace(tmp, path)


def tweet_to_row(rec: TweetRecord) -> dict[str, Any]:
    return dataclasses.asdict(rec)


def _jsonl(rows: Iterable[Mapping[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in rows)


class DatasetStore:
    """File layout of one collection run::

        tweets_<epoch>.jsonl      tweet records fetched by the pull at <epoch>
        likers_<epoch>.jsonl      {tweet_id, liker_ids, pulled_at} per request
        retweeters_<epoch>.jsonl  {tweet_id, retweeter_ids, pulled_at}
        log.json                  tracking log plus resume cursor (commit point)
        likers_final.jsonl        final-harvest rows
        retweeters_final.jsonl
        manifest.json
    """

    def __init__(self, directory: str | Path, durable: bool = False):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.durable = durable

    def save_tweets(self, t: int, tweets: list[TweetRecord]) -> None:
        atomic_write(self.dir / f"tweets_{t}.jsonl", _jsonl(tweet_to_row(r) for r in tweets), self.durable)

    def save_rows(self, name: str, rows: list[dict[str, Any]]) -> None:
        atomic_write(self.dir / name, _jsonl(rows), self.durable)

    def commit(self, state: CollectorState) -> None:
        atomic_write(self.dir / "log.json", json.dumps(state.to_dict(), sort_keys=True, separators=(",", ":")), self.durable)

    def load_state(self) -> CollectorState | None:
        path = self.dir / "log.json"
        if not path.exists():
            return None
        try:
            return CollectorState.from_dict(json.loads(path.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise LoadError(f"corrupt log: {exc}", str(path)) from exc

    def tweet_files(self) -> list[Path]:
        files = [p for p in self.dir.glob("tweets_*.jsonl") if p.stem.split("_", 1)[1].isdigit()]
        return sorted(files, key=lambda p: int(p.stem.split("_", 1)[1]))

    def read_manifest(self) -> dict[str, Any] | None:
        path = self.dir / "manifest.json"
        return json.loads(path.read_text()) if path.exists() else None

    def write_manifest(self, params: CollectorParams, state: CollectorState, completed: bool = False) -> None:
        manifest = {
            "format": DATASET_FORMAT,
            "schema_version": SCHEMA_VERSION,
            "params": params.to_dict(redact=True),
            "token_fingerprints": [token_fingerprint(t) for t in params.tokens],
            "pull_count": state.pulls_completed,
            "pullpoints_total": len(params.pullpoints()),
            "completed": completed,
            "errors": state.errors,
        }
        atomic_write(self.dir / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n", self.durable)


# Algorithm 1 ---------------------------------------------------------------------


def _fetch_tweets(client, params: CollectorParams, start: int, end: int, token: str, into: list[TweetRecord]) -> None:
    page_token = None
    while True:
        records, page_token = client.search(params.keyword, start, end, token, page_token)
        into.extend(records)
        if not page_token:
            return


def _service(
    state: CollectorState,
    params: CollectorParams,
    log_: dict[int, LogEntry],
    fetch: Callable[[int, str], list[int]],
    pool: str,
    ids_key: str,
    token: str,
    client,
    rows: list[dict[str, Any]],
) -> int:
    """Request users for the top candidates. Returns how many were deferred."""
    top = find_candidates(log_, params.min_delta)[: params.top_n]
    for pos, (tweet_id, _delta) in enumerate(top):
        now = client.now()
        if _window_used(state, token, pool, now) >= params.req_rate_lim:
            log.info("window budget for %s exhausted; deferring %d candidates", pool, len(top) - pos)
            return len(top) - pos
        try:
            users = fetch(tweet_id, token)
        except RateLimitError:
            _window_record(state, token, pool, now, params.req_rate_lim)
            raise
        except NotFoundError:
            users = []
        _window_record(state, token, pool, now)
        rows.append({"tweet_id": tweet_id, ids_key: users, "pulled_at": now})
        update_log_2(log_, tweet_id)
    return 0


def pull_once(
    state: CollectorState,
    params: CollectorParams,
    t: int,
    client,
    store: DatasetStore,
    *,
    driver_state: Callable[[], dict[str, Any]] | None = None,
) -> tuple[PullSnapshot, CollectorState]:
    """Execute the pull at pullpoint ``t`` and persist its outputs.

    On a rate-limit or transport error the partial outputs are persisted, the
    pull is marked executed and the error is re-raised.
    """
    k = params.pull_index(t)
    token = next_token(state, params)
    start = params.startpoint if t - params.tracktime < params.startpoint else t - params.tracktime
    end = t if t < params.observation_end else params.observation_end
    snap = PullSnapshot(t)
    error: ResumableError | None = None
    try:
        if start < end:
            _fetch_tweets(client, params, start, end, token, snap.tweets)
        update_log_1(state.log, snap.tweets)
        if params.collect_retweeters:
            update_log_1(state.rt_log, snap.tweets, "retweet_count")
        snap.deferred += _service(state, params, state.log, client.liking_users, "liking_users", "liker_ids", token, client, snap.likers)
        if params.collect_retweeters:
            snap.deferred += _service(
                state, params, state.rt_log, client.retweeted_by, "retweeted_by", "retweeter_ids", token, client, snap.retweeters
            )
    except ResumableError as exc:
        error = exc
        state.errors.append({"t": t, "error_class": exc.error_class, "message": str(exc)})
        log.warning("pull at %d aborted: %s", t, exc)
    store.save_tweets(t, snap.tweets)
    store.save_rows(f"likers_{t}.jsonl", snap.likers)
    if params.collect_retweeters:
        store.save_rows(f"retweeters_{t}.jsonl", snap.retweeters)
    state.next_pull_index = k + 1
    state.pulls_completed += 1
    if driver_state is not None:
        state.driver = driver_state()
    store.commit(state)
    if error is not None:
        raise error
    return snap, state


# Algorithm 2 ---------------------------------------------------------------------


def merge_tweet_files(paths: Iterable[Path]) -> dict[int, dict[str, Any]]:
    """Concatenate T_t files keeping, per tweet, the row with the highest like count."""
    best: dict[int, dict[str, Any]] = {}
    for path in paths:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                cur = best.get(row["id"])
                if cur is None:
                    best[row["id"]] = row
                else:
                    cur["like_count"] = max(cur["like_count"], row["like_count"])
                    cur["retweet_count"] = max(cur["retweet_count"], row["retweet_count"])
    return best


def _harvest_pass(
    state: CollectorState,
    params: CollectorParams,
    client,
    tweet_ids: list[int],
    fetch: Callable[[int, str], list[int]],
    pool: str,
    ids_key: str,
) -> list[dict[str, Any]]:
    rows: list[dict[str, Any]] = []
    n_tokens = len(params.tokens)
    counter = 0
    for i, tweet_id in enumerate(tweet_ids):
        token = params.tokens[i % n_tokens]
        while True:
            now = client.now()
            if _window_used(state, token, pool, now) >= params.req_rate_lim:
                client.wait_until(window_start(now) + WINDOW_SECONDS)
                continue
            try:
                users = fetch(tweet_id, token)
            except RateLimitError as exc:
                log.warning("rate limited during final harvest; sleeping until %d", exc.reset_epoch_seconds)
                client.wait_until(exc.reset_epoch_seconds)
                continue
            except NotFoundError:
                users = None
            break
        _window_record(state, token, pool, now)
        if users is not None:
            rows.append({"tweet_id": tweet_id, ids_key: users, "pulled_at": now})
        counter += 1
        if counter >= params.req_rate_lim * n_tokens:
            counter = 0
            client.wait_until(client.now() + WINDOW_SECONDS)
    return rows


def final_harvest(params: CollectorParams, store: DatasetStore, client, state: CollectorState | None = None) -> list[dict[str, Any]]:
    """Request the most recent likers of every logged tweet with enough likes."""
    state = state if state is not None else CollectorState()
    merged = merge_tweet_files(store.tweet_files())
    eligible = sorted(tid for tid, row in merged.items() if row["like_count"] >= params.min_likes)
    rows = _harvest_pass(state, params, client, eligible, client.liking_users, "liking_users", "liker_ids")
    store.save_rows("likers_final.jsonl", rows)
    if params.collect_retweeters:
        rt_eligible = sorted(tid for tid, row in merged.items() if row["retweet_count"] >= params.min_likes)
        rt_rows = _harvest_pass(state, params, client, rt_eligible, client.retweeted_by, "retweeted_by", "retweeter_ids")
        store.save_rows("retweeters_final.jsonl", rt_rows)
    return rows


# driver ----------------------------------------------------------------------------


def run(
    params: CollectorParams,
    client,
    directory: str | Path,
    *,
    driver_state: Callable[[], dict[str, Any]] | None = None,
    after_pull: Callable[[int, CollectorState], None] | None = None,
    durable: bool = False,
) -> Path:
    """Run every remaining pullpoint, then the final harvest.

    Resumes from ``directory/log.json`` when present. Pullpoints that passed
    while the collector was down are skipped, not replayed.
    """
    store = DatasetStore(directory, durable=durable)
    state = store.load_state()
    if state is None:
        params.validate(now=client.now())
        state = CollectorState()
        store.write_manifest(params, state)
    else:
        params.validate()
        manifest = store.read_manifest()
        if manifest is not None and manifest["params"] != params.to_dict(redact=True):
            raise ConfigError("parameters differ from the run being resumed", ["collector"])
        log.info("resuming at pull %d", state.next_pull_index)

    points = params.pullpoints()
    while state.next_pull_index < len(points):
        k = state.next_pull_index
        now = client.now()
        if k + 1 < len(points) and now >= points[k + 1]:
            state.next_pull_index = bisect.bisect_right(points, now) - 1
            log.warning("skipping %d missed pullpoints", state.next_pull_index - k)
            continue
        client.wait_until(points[k])
        try:
            pull_once(state, params, points[k], client, store, driver_state=driver_state)
        except TransportError:
            raise
        except ResumableError:
            pass
        if after_pull is not None:
            after_pull(k, state)

    if not state.harvest_done:
        client.wait_until(params.endpoint)
        final_harvest(params, store, client, state)
        state.harvest_done = True
        if driver_state is not None:
            state.driver = driver_state()
        store.commit(state)
    store.write_manifest(params, state, completed=True)
    return store.dir
