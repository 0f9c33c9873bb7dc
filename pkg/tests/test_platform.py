import datetime as dt

import pytest
from hypothesis import given, strategies as st

from likeharvest.errors import AuthError, ClientError, NotFoundError, QuotaError, RateLimitError
from likeharvest.platform import (
    Platform,
    RateWindowState,
    VirtualClock,
    WallClock,
    month_key,
    next_month_start,
    parse_query,
    read_audit,
    window_start,
)
from likeharvest.world import Tweet

from conftest import E, hand_world


def many_tweets(n, likes_on_first=0):
    tweets = [(i, i) for i in range(1, n + 1)]
    events = [(n + 10 + j, 1000 + j, 1, "like") for j in range(likes_on_first)]
    return hand_world(tweets, events)


def make(world, **kw):
    return Platform(world, clock=VirtualClock(E + 100_000), **kw)


@given(st.integers(0, 2**40))
def test_window_start_is_aligned(t):
    w = window_start(t)
    assert w % 900 == 0 and w <= t < w + 900


def test_month_boundaries():
    dec = int(dt.datetime(2022, 12, 31, 23, 59, tzinfo=dt.timezone.utc).timestamp())
    assert month_key(dec) == "2022-12"
    assert next_month_start(dec) == int(dt.datetime(2023, 1, 1, tzinfo=dt.timezone.utc).timestamp())


def test_rate_limit_per_token_and_pool():
    p = make(many_tweets(3, 5), rate_limit=3)
    for _ in range(3):
        p.handle_liking_users(1, "a")
    with pytest.raises(RateLimitError) as exc:
        p.handle_liking_users(1, "a")
    assert exc.value.reset_epoch_seconds == window_start(p.get_clock()) + 900
    p.handle_liking_users(1, "b")  # other token unaffected
    p.handle_retweeted_by(1, "a")  # separate pool
    p.advance_clock(exc.value.reset_epoch_seconds - p.get_clock())
    p.handle_liking_users(1, "a")
    outcomes = [r.outcome for r in p.export_audit()]
    assert outcomes.count("rate_limited") == 1


def test_window_is_fixed_not_sliding():
    s = RateWindowState(limits={"liking_users": 2})
    s.try_consume("t", "liking_users", 899)
    s.try_consume("t", "liking_users", 899)
    s.try_consume("t", "liking_users", 900)  # new window, even though 1 s later


def test_search_is_unlimited_by_default_and_optionally_limited():
    p = make(many_tweets(3))
    for _ in range(200):
        p.handle_search("#dkpol", E, E + 10, None, "a")
    q = make(many_tweets(3), search_limit=2)
    q.handle_search("#dkpol", E, E + 10, None, "a")
    q.handle_search("#dkpol", E, E + 10, None, "a")
    with pytest.raises(RateLimitError):
        q.handle_search("#dkpol", E, E + 10, None, "a")


def test_search_order_pagination_and_window():
    p = make(many_tweets(250))
    seen = []
    token = None
    pages = 0
    while True:
        recs, token = p.handle_search("#dkpol", E + 1, E + 251, token, "a")
        seen.extend(r.id for r in recs)
        pages += 1
        if token is None:
            break
    assert pages == 3
    assert seen == list(range(250, 0, -1))
    recs, _ = p.handle_search("#dkpol", E + 5, E + 8, None, "a")
    assert [r.id for r in recs] == [7, 6, 5]  # half-open [start, end)


def test_future_tweets_are_invisible():
    w = hand_world([(1, 10), (2, 500)], [])
    p = Platform(w, clock=VirtualClock(E + 100))
    assert [r.id for r in p.handle_search("#dkpol", E, E + 1000, None, "a")[0]] == [1]


def test_like_counts_reflect_the_clock():
    w = hand_world([(1, 0)], [(10, 5, 1, "like"), (20, 6, 1, "like"), (30, 6, 1, "unlike")])
    p = Platform(w, clock=VirtualClock(E + 25))
    assert p.handle_search("#dkpol", E, E + 1, None, "a")[0][0].like_count == 2
    assert p.handle_liking_users(1, "a") == [6, 5]
    p.advance_clock(10)
    assert p.handle_search("#dkpol", E, E + 1, None, "a")[0][0].like_count == 1
    assert p.handle_liking_users(1, "a") == [5]


def test_monthly_cap():
    p = make(many_tweets(10), monthly_cap=15)
    p.handle_search("#dkpol", E, E + 20, None, "a")  # 10 returned
    with pytest.raises(QuotaError) as exc:
        p.handle_search("#dkpol", E, E + 20, None, "a")
    assert exc.value.reset_epoch_seconds == next_month_start(p.get_clock())
    p.handle_search("#dkpol", E, E + 20, None, "b")
    p.advance_clock(exc.value.reset_epoch_seconds - p.get_clock())
    p.handle_search("#dkpol", E, E + 20, None, "a")


def test_auth_and_unknown_tweets():
    p = make(many_tweets(2), tokens=["good"])
    with pytest.raises(AuthError):
        p.handle_liking_users(1, "bad")
    with pytest.raises(AuthError):
        p.handle_search("#dkpol", E, E + 5, None, "")
    with pytest.raises(NotFoundError):
        p.handle_liking_users(999, "good")
    assert [r.outcome for r in p.export_audit()] == ["not_found"]


@pytest.mark.parametrize("query", ["", "-#dkpol", "#dk pol!", "a&b"])
def test_bad_queries(query):
    with pytest.raises(ClientError):
        parse_query(query)


def test_query_matching():
    tw = Tweet(1, E, 2, "#dkpol Valg i dag", ("#dkpol",), False)
    assert parse_query("#dkpol").matches(tw)
    assert parse_query("#DKPOL valg").matches(tw)
    assert not parse_query("#dkpol -valg").matches(tw)
    assert not parse_query("#dkpol is:retweet").matches(tw)
    assert parse_query("#dkpol -is:retweet").matches(tw)


def test_bad_page_token_and_inverted_range():
    p = make(many_tweets(2))
    for bad in ("zz", "p", "pzz", "p999"):
        with pytest.raises(ClientError):
            p.handle_search("#dkpol", E, E + 5, bad, "a")
    with pytest.raises(ClientError):
        p.handle_search("#dkpol", E + 5, E, None, "a")


def test_snapshot_restore_round_trip(tmp_path):
    lines = []
    p = make(many_tweets(5, 3), rate_limit=5, audit_sink=lambda r: lines.append(r.to_json()))
    for _ in range(4):
        p.handle_liking_users(1, "a")
    p.handle_search("#dkpol", E, E + 10, None, "a")
    snap = p.snapshot()
    audit_path = tmp_path / "audit.jsonl"
    audit_path.write_text("\n".join(lines) + "\n")
    q = make(many_tweets(5, 3), rate_limit=5)
    q.restore(snap, read_audit(audit_path))
    assert q.snapshot() == snap
    q.handle_liking_users(1, "a")
    with pytest.raises(RateLimitError):
        q.handle_liking_users(1, "a")


def test_wall_clock_speed():
    ticks = iter([0.0, 10.0])
    clock = WallClock(E, speed=6.0, _monotonic=lambda: next(ticks))
    assert clock.now() == E + 60
