"""Simulated platform serving a :class:`WorldTimeline` under API quotas.

Quotas modelled:

* liking_users and retweeted_by: ``rate_limit`` requests per token per fixed
  15-minute window, windows aligned to multiples of 900 s since the Unix epoch;
  the two pools are independent.
* search: unlimited by default, optionally limited like the other pools.
* every tweet returned by search counts against a per-token monthly cap
  (calendar month, UTC).

All state changes go through one lock, so audit order is total.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import threading
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Iterable

from .errors import AuthError, ClientError, NotFoundError, QuotaError, RateLimitError
from .world import Tweet, WorldTimeline

WINDOW_SECONDS = 900
PAGE_SIZE = 100
DEFAULT_RATE_LIMIT = 75
DEFAULT_MONTHLY_CAP = 10_000_000
POOLS = ("liking_users", "retweeted_by", "search")


def window_start(t: int) -> int:
    return t - t % WINDOW_SECONDS


def month_key(t: int) -> str:
    d = dt.datetime.fromtimestamp(t, tz=dt.timezone.utc)
    return f"{d.year:04d}-{d.month:02d}"


def next_month_start(t: int) -> int:
    d = dt.datetime.fromtimestamp(t, tz=dt.timezone.utc)
    year, month = (d.year + 1, 1) if d.month == 12 else (d.year, d.month + 1)
    return int(dt.datetime(year, month, 1, tzinfo=dt.timezone.utc).timestamp())


class VirtualClock:
    """Time moves only when told to."""

    def __init__(self, now: int):
        self._now = int(now)

    def now(self) -> int:
        return self._now

    def advance(self, delta: int) -> int:
        self._now += int(delta)
        return self._now


class WallClock:
    """Wall-clock time shifted so that it starts at ``origin``.

    ``speed`` > 1 compresses time for demos; ``advance`` adds a fixed offset.
    """

    def __init__(self, origin: int, speed: float = 1.0, _monotonic: Callable[[], float] = time.monotonic):
        self._mono = _monotonic
        self._t0 = _monotonic()
        self.origin = int(origin)
        self.speed = speed
        self.offset = 0

    def now(self) -> int:
        return self.origin + self.offset + int((self._mono() - self._t0) * self.speed)

    def advance(self, delta: int) -> int:
        self.offset += int(delta)
        return self.now()


@dataclass(frozen=True)
class AuditRecord:
    timestamp: int
    token: str
    endpoint: str
    tweet_id: int | None
    outcome: str  # ok | rate_limited | not_found
    items_returned: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AuditRecord":
        return cls(**d)


@dataclass
class RateWindowState:
    """Per (token, pool) request count in the current fixed window.

    Pools missing from ``limits`` are counted but never refused.
    """

    limits: dict[str, int] = field(
        default_factory=lambda: {"liking_users": DEFAULT_RATE_LIMIT, "retweeted_by": DEFAULT_RATE_LIMIT}
    )
    counts: dict[tuple[str, str], tuple[int, int]] = field(default_factory=dict)

    def count(self, token: str, pool: str, now: int) -> int:
        start, n = self.counts.get((token, pool), (None, 0))
        return n if start == window_start(now) else 0

    def try_consume(self, token: str, pool: str, now: int) -> None:
        n = self.count(token, pool, now)
        limit = self.limits.get(pool)
        if limit is not None and n >= limit:
            raise RateLimitError(window_start(now) + WINDOW_SECONDS)
        self.counts[(token, pool)] = (window_start(now), n + 1)


@dataclass
class TweetCapState:
    cap: int = DEFAULT_MONTHLY_CAP
    used: dict[tuple[str, str], int] = field(default_factory=dict)

    def remaining(self, token: str, now: int) -> int:
        return self.cap - self.used.get((token, month_key(now)), 0)

    def consume(self, token: str, now: int, n: int) -> None:
        if n > self.remaining(token, now):
            raise QuotaError(next_month_start(now), "monthly tweet cap exhausted")
        key = (token, month_key(now))
        self.used[key] = self.used.get(key, 0) + n


# query language -------------------------------------------------------------

_TERM = re.compile(r"^(-?)(#?[\w]+|is:retweet)$", re.UNICODE)


@dataclass(frozen=True)
class Query:
    """Conjunction of terms. ``#tag`` matches a tag, bare words match text,
    ``is:retweet`` matches retweets; a leading ``-`` negates a term."""

    terms: tuple[tuple[bool, str], ...]

    def matches(self, tweet: Tweet) -> bool:
        for negated, term in self.terms:
            if term == "is:retweet":
                hit = False  # the simulator only generates original tweets
            elif term.startswith("#"):
                hit = term.lower() in (t.lower() for t in tweet.tags)
            else:
                hit = term.lower() in tweet.text.lower()
            if hit == negated:
                return False
        return True


@lru_cache(maxsize=64)
def parse_query(text: str) -> Query:
    parts = text.split()
    if not parts:
        raise ClientError("empty query")
    terms = []
    positive = 0
    for part in parts:
        m = _TERM.match(part)
        if not m:
            raise ClientError(f"malformed query term {part!r}")
        terms.append((m.group(1) == "-", m.group(2)))
        positive += m.group(1) != "-"
    if not positive:
        raise ClientError("query needs at least one positive term")
    return Query(tuple(terms))


def encode_page_token(position: int) -> str:
    return f"p{position:x}"


def decode_page_token(token: str) -> int:
    if not token or token[0] != "p":
        raise ClientError(f"bad pagination token {token!r}")
    try:
        return int(token[1:], 16)
    except ValueError as exc:
        raise ClientError(f"bad pagination token {token!r}") from exc


@dataclass(frozen=True)
class TweetRecord:
    id: int
    created_at: int
    author_id: int
    text: str
    like_count: int
    retweet_count: int


class Platform:
    """Stateful API surface over a timeline.

    ``tokens=None`` accepts any non-empty bearer token. ``audit_sink`` receives
    each audit record as it is appended (the CLI uses it to stream to disk).
    """

    def __init__(
        self,
        timeline: WorldTimeline,
        *,
        clock: VirtualClock | WallClock | None = None,
        tokens: Iterable[str] | None = None,
        rate_limit: int = DEFAULT_RATE_LIMIT,
        monthly_cap: int = DEFAULT_MONTHLY_CAP,
        search_limit: int | None = None,
        audit_sink: Callable[[AuditRecord], None] | None = None,
    ):
        self.timeline = timeline
        self.clock = clock or VirtualClock(timeline.config.epoch)
        self.tokens = None if tokens is None else frozenset(tokens)
        limits = {"liking_users": rate_limit, "retweeted_by": rate_limit}
        if search_limit is not None:
            limits["search"] = search_limit
        self.windows = RateWindowState(limits=limits)
        self.cap = TweetCapState(cap=monthly_cap)
        self.audit: list[AuditRecord] = []
        self.audit_sink = audit_sink
        self.lock = threading.RLock()

    # helpers

    def _check_token(self, token: str) -> None:
        if not token or (self.tokens is not None and token not in self.tokens):
            raise AuthError("unknown bearer token")

    def _record(self, token: str, endpoint: str, tweet_id: int | None, outcome: str, n: int) -> None:
        rec = AuditRecord(self.clock.now(), token, endpoint, tweet_id, outcome, n)
        self.audit.append(rec)
        if self.audit_sink is not None:
            self.audit_sink(rec)

    def _consume(self, token: str, pool: str, tweet_id: int | None) -> None:
        try:
            self.windows.try_consume(token, pool, self.clock.now())
        except RateLimitError:
            self._record(token, pool, tweet_id, "rate_limited", 0)
            raise

    # endpoints

    def handle_search(
        self, query: str, start: int, end: int, page_token: str | None, token: str
    ) -> tuple[list[TweetRecord], str | None]:
        with self.lock:
            self._check_token(token)
            if start > end:
                raise ClientError("start_time after end_time")
            q = parse_query(query)
            now = self.clock.now()
            # tweets posted after "now" are not visible yet
            visible = self.timeline.tweets_created_between(start, min(end, now + 1))
            matching = [tw for tw in visible if q.matches(tw)]
            matching.reverse()  # newest first
            offset = decode_page_token(page_token) if page_token else 0
            if offset > len(matching):
                raise ClientError(f"bad pagination token {page_token!r}")
            page = matching[offset : offset + PAGE_SIZE]
            self._consume(token, "search", None)
            try:
                self.cap.consume(token, now, len(page))
            except QuotaError:
                self._record(token, "search", None, "rate_limited", 0)
                raise
            records = [
                TweetRecord(
                    tw.tweet_id,
                    tw.created_at,
                    tw.author_id,
                    tw.text,
                    self.timeline.count_at(tw.tweet_id, now, "like"),
                    self.timeline.count_at(tw.tweet_id, now, "retweet"),
                )
                for tw in page
            ]
            nxt = encode_page_token(offset + PAGE_SIZE) if offset + PAGE_SIZE < len(matching) else None
            self._record(token, "search", None, "ok", len(records))
            return records, nxt

    def _handle_users(self, tweet_id: int, token: str, pool: str, kind: str) -> list[int]:
        with self.lock:
            self._check_token(token)
            if tweet_id not in self.timeline.tweet_by_id:
                self._record(token, pool, tweet_id, "not_found", 0)
                raise NotFoundError(f"unknown tweet {tweet_id}")
            self._consume(token, pool, tweet_id)
            users = self.timeline.most_recent(tweet_id, self.clock.now(), PAGE_SIZE, kind)
            self._record(token, pool, tweet_id, "ok", len(users))
            return users

    def handle_liking_users(self, tweet_id: int, token: str) -> list[int]:
        return self._handle_users(tweet_id, token, "liking_users", "like")

    def handle_retweeted_by(self, tweet_id: int, token: str) -> list[int]:
        return self._handle_users(tweet_id, token, "retweeted_by", "retweet")

    # admin

    def advance_clock(self, delta_seconds: int) -> int:
        if delta_seconds < 0:
            raise ClientError("delta_seconds must be >= 0")
        with self.lock:
            return self.clock.advance(int(delta_seconds))

    def get_clock(self) -> int:
        with self.lock:
            return self.clock.now()

    def export_ground_truth(self) -> dict[str, list[int]]:
        return {g: sorted(u) for g, u in sorted(self.timeline.ground_truth.items())}

    def export_audit(self) -> list[AuditRecord]:
        with self.lock:
            return list(self.audit)

    # checkpointing (virtual-clock runs only)

    def snapshot(self) -> dict[str, Any]:
        with self.lock:
            return {
                "now": self.clock.now(),
                "windows": sorted([tok, pool, start, n] for (tok, pool), (start, n) in self.windows.counts.items()),
                "cap": sorted([tok, month, n] for (tok, month), n in self.cap.used.items()),
                "audit_length": len(self.audit),
            }

    def restore(self, snap: dict[str, Any], audit: list[AuditRecord]) -> None:
        if not isinstance(self.clock, VirtualClock):
            raise ClientError("restore requires a virtual clock")
        with self.lock:
            self.clock = VirtualClock(snap["now"])
            self.windows.counts = {(tok, pool): (start, n) for tok, pool, start, n in snap["windows"]}
            self.cap.used = {(tok, month): n for tok, month, n in snap["cap"]}
            self.audit = list(audit[: snap["audit_length"]])


def read_audit(path: str | Path) -> list[AuditRecord]:
    out = []
    p = Path(path)
    if not p.exists():
        return out
    with open(p) as fh:
        for line in fh:
            if line.strip():
                out.append(AuditRecord.from_dict(json.loads(line)))
    return out
