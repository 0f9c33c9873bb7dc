"""Deterministic synthetic platform history.

A world is a set of tweets under one hashtag plus a time-ordered stream of
like / retweet / unlike events. Organic likes follow a thinned Poisson
process whose intensity decays exponentially after posting; coordinated
groups are injected on top with known membership, which later serves as
ground truth for the detection stage.

Timestamps are integer epoch seconds throughout.
"""

from __future__ import annotations

import bisect
import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple

import numpy as np

from .errors import ConfigError, LoadError, NotFoundError, SchemaVersionError

# 2022-05-25T12:00:00Z; a multiple of 900 so rate windows align with the epoch.
DEFAULT_EPOCH = 1653480000

TWEET_ID_BASE = 1_000_000
ORGANIC_USER_BASE = 100_000_000
AUTHOR_BASE = 200_000_000
GROUP_USER_BASE = 900_000_000
TEST_AUTHOR_ID = 299_999_999

KINDS = ("like", "retweet", "unlike")
WORLD_FORMAT = "likeharvest.world"
WORLD_VERSION = 1


@dataclass(frozen=True)
class OrganicLikeModel:
    """Per-tweet organic engagement parameters.

    Each organic tweet draws a discrete Pareto popularity ``w`` (capped at
    ``max_popularity``); likes then arrive at rate
    ``base_rate_per_hour * w * 2**(-age / half_life_hours)`` until
    ``horizon_hours`` after posting.
    """

    base_rate_per_hour: float = 2.0
    half_life_hours: float = 3.0
    pareto_alpha: float = 1.5
    max_popularity: float = 50.0
    horizon_hours: float = 48.0
    n_users: int = 5000
    retweet_rate_per_hour: float = 0.0


@dataclass(frozen=True)
class CoordGroupSpec:
    """A coordinated group whose members all like the same target tweets.

    Targets are indexes into the organic tweets (ordered by creation), and/or
    a dedicated test tweet posted ``test_tweet_at`` seconds after the world
    epoch. Groups naming the same ``test_tweet_at`` share that tweet.
    """

    group_id: str
    size: int
    target_tweets: tuple[int, ...] = ()
    test_tweet_at: int | None = None
    delivery: str = "burst"
    burst_window: int = 60
    drip_hours: float = 10.0
    start_delay: int = 60
    extra_organic_noise: float = 0.0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    duration: int = 86_400
    tweet_rate: float = 1.0
    n_tweets: int | None = None
    organic: OrganicLikeModel = field(default_factory=OrganicLikeModel)
    query_tag: str = "#dkpol"
    group_specs: tuple[CoordGroupSpec, ...] = ()
    unlike_rate: float = 0.0
    unlike_delay_hours: float = 6.0
    n_authors: int = 500
    epoch: int = DEFAULT_EPOCH

    def validate(self) -> None:
        bad: list[str] = []
        if self.tweet_rate <= 0:
            bad.append("tweet_rate")
        if self.duration < 0:
            bad.append("duration")
        if self.n_tweets is not None and self.n_tweets < 0:
            bad.append("n_tweets")
        org = self.organic
        if org.half_life_hours <= 0:
            bad.append("organic.half_life_hours")
        if org.base_rate_per_hour < 0:
            bad.append("organic.base_rate_per_hour")
        if org.retweet_rate_per_hour < 0:
            bad.append("organic.retweet_rate_per_hour")
        if org.pareto_alpha <= 0:
            bad.append("organic.pareto_alpha")
        if org.max_popularity < 1:
            bad.append("organic.max_popularity")
        if org.horizon_hours <= 0:
            bad.append("organic.horizon_hours")
        if org.n_users < 1:
            bad.append("organic.n_users")
        if not 0 <= self.unlike_rate <= 1:
            bad.append("unlike_rate")
        if self.unlike_delay_hours <= 0:
            bad.append("unlike_delay_hours")
        if self.n_authors < 1:
            bad.append("n_authors")
        seen = set()
        for i, g in enumerate(self.group_specs):
            where = f"group_specs[{i}]"
            if g.group_id in seen:
                bad.append(f"{where}.group_id")
            seen.add(g.group_id)
            if g.size < 1:
                bad.append(f"{where}.size")
            if g.delivery not in ("burst", "drip"):
                bad.append(f"{where}.delivery")
            if g.burst_window < 0:
                bad.append(f"{where}.burst_window")
            if g.drip_hours <= 0:
                bad.append(f"{where}.drip_hours")
            if g.start_delay < 0:
                bad.append(f"{where}.start_delay")
            if not 0 <= g.extra_organic_noise <= 1:
                bad.append(f"{where}.extra_organic_noise")
            if not g.target_tweets and g.test_tweet_at is None:
                bad.append(f"{where}.target_tweets")
        if bad:
            raise ConfigError("invalid simulation config: " + ", ".join(bad), bad)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["group_specs"] = [dict(g, target_tweets=list(g["target_tweets"])) for g in d["group_specs"]]
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimConfig":
        data = dict(data)
        _reject_unknown(data, cls, "sim")
        organic = data.pop("organic", None)
        groups = data.pop("group_specs", ())
        kwargs: dict[str, Any] = dict(data)
        if organic is not None:
            _reject_unknown(organic, OrganicLikeModel, "sim.organic")
            kwargs["organic"] = OrganicLikeModel(**organic)
        specs = []
        for i, g in enumerate(groups):
            _reject_unknown(g, CoordGroupSpec, f"sim.group_specs[{i}]")
            g = dict(g)
            g["target_tweets"] = tuple(g.get("target_tweets", ()))
            try:
                specs.append(CoordGroupSpec(**g))
            except TypeError as exc:
                raise ConfigError(f"sim.group_specs[{i}]: {exc}", [f"sim.group_specs[{i}]"]) from exc
        kwargs["group_specs"] = tuple(specs)
        return cls(**kwargs)


def _reject_unknown(data: Mapping[str, Any], cls: type, where: str) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {', '.join(extra)}", [f"{where}.{k}" for k in extra])


@dataclass(frozen=True)
class Tweet:
    tweet_id: int
    created_at: int
    author_id: int
    text: str
    tags: tuple[str, ...]
    is_test: bool = False


class Event(NamedTuple):
    timestamp: int
    user_id: int
    tweet_id: int
    kind: str


@dataclass
class _KindIndex:
    times: np.ndarray  # sorted by (time, user_id)
    users: np.ndarray
    ends: np.ndarray  # unlike time of each like, or INT64 max
    sorted_ends: np.ndarray


_NEVER = np.iinfo(np.int64).max


@dataclass(frozen=True)
class WorldTimeline:
    config: SimConfig
    tweets: tuple[Tweet, ...]
    like_events: tuple[Event, ...]
    ground_truth: Mapping[str, frozenset[int]]

    @cached_property
    def tweet_by_id(self) -> dict[int, Tweet]:
        return {tw.tweet_id: tw for tw in self.tweets}

    @cached_property
    def _created(self) -> list[int]:
        return [tw.created_at for tw in self.tweets]

    @cached_property
    def _index(self) -> dict[tuple[int, str], _KindIndex]:
        grouped: dict[tuple[int, str], list[Event]] = {}
        unlikes: dict[tuple[int, int], int] = {}
        for ev in self.like_events:
            if ev.kind == "unlike":
                unlikes[(ev.tweet_id, ev.user_id)] = ev.timestamp
            else:
                grouped.setdefault((ev.tweet_id, ev.kind), []).append(ev)
        index = {}
        for key, evs in grouped.items():
            times = np.fromiter((e.timestamp for e in evs), dtype=np.int64, count=len(evs))
            users = np.fromiter((e.user_id for e in evs), dtype=np.int64, count=len(evs))
            if key[1] == "like":
                ends = np.fromiter(
                    (unlikes.get((e.tweet_id, e.user_id), _NEVER) for e in evs), dtype=np.int64, count=len(evs)
                )
            else:
                ends = np.full(len(evs), _NEVER, dtype=np.int64)
            index[key] = _KindIndex(times, users, ends, np.sort(ends))
        return index

    def tweets_created_between(self, start: int, end: int) -> list[Tweet]:
        lo = bisect.bisect_left(self._created, start)
        hi = bisect.bisect_left(self._created, end)
        return list(self.tweets[lo:hi])

    def _lookup(self, tweet_id: int, kind: str) -> _KindIndex | None:
        if tweet_id not in self.tweet_by_id:
            raise NotFoundError(f"unknown tweet {tweet_id}")
        return self._index.get((tweet_id, kind))

    def count_at(self, tweet_id: int, t: float, kind: str = "like") -> int:
        idx = self._lookup(tweet_id, kind)
        if idx is None:
            return 0
        if t == math.inf:
            return int(np.count_nonzero(idx.ends == _NEVER))
        t = int(math.floor(t))
        started = int(np.searchsorted(idx.times, t, side="right"))
        ended = int(np.searchsorted(idx.sorted_ends, t, side="right"))
        return started - ended

    def most_recent(self, tweet_id: int, t: float, k: float, kind: str = "like") -> list[int]:
        idx = self._lookup(tweet_id, kind)
        if idx is None:
            return []
        if t == math.inf:
            pos = len(idx.times)
            tt = _NEVER - 1
        else:
            tt = int(math.floor(t))
            pos = int(np.searchsorted(idx.times, tt, side="right"))
        out: list[int] = []
        j = pos - 1
        while j >= 0 and len(out) < k:
            if idx.ends[j] > tt:
                out.append(int(idx.users[j]))
            j -= 1
        return out

    def likers(self, tweet_id: int, kind: str = "like") -> set[int]:
        """Every user who ever liked (or retweeted) the tweet."""
        idx = self._lookup(tweet_id, kind)
        return set() if idx is None else {int(u) for u in idx.users}

    # serialization --------------------------------------------------------

    def header(self) -> dict[str, Any]:
        return {
            "format": WORLD_FORMAT,
            "version": WORLD_VERSION,
            "config": self.config.to_dict(),
            "tweets": [dataclasses.asdict(tw) | {"tags": list(tw.tags)} for tw in self.tweets],
            "ground_truth": {g: sorted(users) for g, users in sorted(self.ground_truth.items())},
        }

    def event_lines(self) -> Iterable[str]:
        for ev in self.like_events:
            yield json.dumps([ev.timestamp, ev.kind, ev.user_id, ev.tweet_id], separators=(",", ":"))

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True, separators=(",", ":"))
        return (head + "\n" + "\n".join(self.event_lines()) + "\n").encode()


def like_count_at(timeline: WorldTimeline, tweet_id: int, t: float) -> int:
    """Number of likes on ``tweet_id`` visible at time ``t``."""
    return timeline.count_at(tweet_id, t, "like")


def likers_most_recent(timeline: WorldTimeline, tweet_id: int, t: float, k: float) -> list[int]:
    """The up-to-``k`` most recent likers at time ``t``, newest first.

    Recency is ordered by ``(timestamp, user_id)``; retracted likes are skipped.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    return timeline.most_recent(tweet_id, t, k, "like")


# generation ---------------------------------------------------------------


def generate_world(config: SimConfig) -> WorldTimeline:
    config.validate()
    rng = np.random.default_rng(config.seed)
    org = config.organic

    if config.n_tweets is not None:
        n_organic = config.n_tweets
    elif config.duration == 0:
        n_organic = 0
    else:
        n_organic = int(rng.poisson(config.tweet_rate * config.duration / 3600.0))
    span = max(config.duration, 1)
    offsets = np.sort(rng.integers(0, span, size=n_organic))
    authors = rng.integers(0, config.n_authors, size=n_organic)

    # (created_at, is_test, sequence) orders organic tweets before test tweets at equal times
    drafts: list[tuple[int, int, int, int]] = []
    for i in range(n_organic):
        drafts.append((config.epoch + int(offsets[i]), 0, i, AUTHOR_BASE + int(authors[i])))
    test_times = sorted({g.test_tweet_at for g in config.group_specs if g.test_tweet_at is not None})
    for j, at in enumerate(test_times):
        drafts.append((config.epoch + int(at), 1, j, TEST_AUTHOR_ID))
    drafts.sort()

    tweets: list[Tweet] = []
    organic_ids: list[int] = []
    test_ids: dict[int, int] = {}
    for rank, (created, is_test, seq, author) in enumerate(drafts):
        tid = TWEET_ID_BASE + rank
        if is_test:
            text = f"{config.query_tag} test tweet {seq}, likes purchased for testing"
            test_ids[test_times[seq]] = tid
        else:
            text = f"{config.query_tag} organic post {seq}"
            organic_ids.append(tid)
        tweets.append(Tweet(tid, created, author, text, (config.query_tag,), bool(is_test)))
    created_of = {tw.tweet_id: tw.created_at for tw in tweets}

    events: list[Event] = []
    horizon_s = int(org.horizon_hours * 3600)
    decay = math.log(2) / org.half_life_hours  # per hour
    mass = 1.0 - math.exp(-decay * org.horizon_hours)  # share of the decay curve inside the horizon

    def organic_times(c: int, count: int) -> np.ndarray:
        u = rng.random(count)
        hours = -np.log1p(-u * mass) / decay
        return c + 1 + np.minimum(np.floor(hours * 3600).astype(np.int64), horizon_s - 1)

    for tid in organic_ids:
        c = created_of[tid]
        popularity = min(org.max_popularity, math.floor(1.0 + rng.pareto(org.pareto_alpha)))
        for kind, rate in (("like", org.base_rate_per_hour), ("retweet", org.retweet_rate_per_hour)):
            if rate == 0:
                continue
            mean = rate * popularity * mass / decay
            count = min(int(rng.poisson(mean)), org.n_users)
            if count == 0:
                continue
            users = rng.choice(org.n_users, size=count, replace=False) + ORGANIC_USER_BASE
            times = organic_times(c, count)
            for ts, uid in zip(times.tolist(), users.tolist()):
                events.append(Event(ts, uid, tid, kind))
                if kind == "like" and config.unlike_rate > 0 and rng.random() < config.unlike_rate:
                    delay = 1 + int(rng.exponential(config.unlike_delay_hours * 3600))
                    events.append(Event(ts + delay, uid, tid, "unlike"))

    ground_truth: dict[str, frozenset[int]] = {}
    next_member = GROUP_USER_BASE
    for g in config.group_specs:
        targets: list[int] = []
        for idx in g.target_tweets:
            if not 0 <= idx < len(organic_ids):
                raise ConfigError(
                    f"group {g.group_id}: target tweet index {idx} out of range (0..{len(organic_ids) - 1})",
                    [f"group_specs.{g.group_id}.target_tweets"],
                )
            targets.append(organic_ids[idx])
        if g.test_tweet_at is not None:
            targets.append(test_ids[g.test_tweet_at])
        targets = sorted(set(targets))
        members = list(range(next_member, next_member + g.size))
        next_member += g.size
        target_set = set(targets)
        others = [tid for tid in organic_ids if tid not in target_set]
        for tid in targets:
            start = created_of[tid] + g.start_delay
            if g.delivery == "burst":
                jitter = rng.integers(0, g.burst_window + 1, size=g.size)
                times = [start + int(x) for x in jitter]
            else:
                total = g.drip_hours * 3600.0
                times = [start + int(math.floor((i + 0.5) * total / g.size)) for i in range(g.size)]
            events.extend(Event(ts, uid, tid, "like") for ts, uid in zip(times, members))
        if g.extra_organic_noise > 0 and others:
            for uid in members:
                if rng.random() < g.extra_organic_noise:
                    tid = others[int(rng.integers(len(others)))]
                    ts = created_of[tid] + 1 + int(rng.integers(horizon_s))
                    events.append(Event(ts, uid, tid, "like"))
        ground_truth[g.group_id] = frozenset(members)

    events.sort(key=lambda e: (e.timestamp, e.user_id, e.tweet_id, KINDS.index(e.kind)))
    return WorldTimeline(config=config, tweets=tuple(tweets), like_events=tuple(events), ground_truth=ground_truth)


def save_world(timeline: WorldTimeline, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = json.dumps(timeline.header(), sort_keys=True, indent=1)
    (directory / "world.json").write_text(header + "\n")
    with open(directory / "events.jsonl", "w") as fh:
        for line in timeline.event_lines():
            fh.write(line + "\n")
    return directory


def load_world(directory: str | Path) -> WorldTimeline:
    directory = Path(directory)
    head_path = directory / "world.json"
    try:
        header = json.loads(head_path.read_text())
    except FileNotFoundError as exc:
        raise LoadError("missing world header", str(head_path)) from exc
    except json.JSONDecodeError as exc:
        raise LoadError(f"corrupt world header: {exc}", str(head_path)) from exc
    if header.get("format") != WORLD_FORMAT:
        raise LoadError("not a world header", str(head_path))
    if header.get("version") != WORLD_VERSION:
        raise SchemaVersionError(f"world version {header.get('version')} != {WORLD_VERSION}", str(head_path))
    config = SimConfig.from_dict(header["config"])
    tweets = tuple(
        Tweet(t["tweet_id"], t["created_at"], t["author_id"], t["text"], tuple(t["tags"]), t.get("is_test", False))
        for t in header["tweets"]
    )
    ev_path = directory / "events.jsonl"
    events = []
    try:
        with open(ev_path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    ts, kind, uid, tid = json.loads(line)
                except (ValueError, TypeError) as exc:
                    raise LoadError(f"bad event on line {lineno}", str(ev_path)) from exc
                events.append(Event(ts, uid, tid, kind))
    except FileNotFoundError as exc:
        raise LoadError("missing event file", str(ev_path)) from exc
    truth = {g: frozenset(users) for g, users in header["ground_truth"].items()}
    return WorldTimeline(config=config, tweets=tweets, like_events=tuple(events), ground_truth=truth)
