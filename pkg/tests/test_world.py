import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from likeharvest.errors import ConfigError, NotFoundError
from likeharvest.world import (
    GROUP_USER_BASE,
    CoordGroupSpec,
    OrganicLikeModel,
    SimConfig,
    generate_world,
    like_count_at,
    likers_most_recent,
    load_world,
    save_world,
)

from conftest import E, hand_world


def small_config(**kw):
    base = dict(seed=1, duration=6 * 3600, tweet_rate=5.0, organic=OrganicLikeModel(n_users=300, horizon_hours=6.0))
    base.update(kw)
    return SimConfig(**base)


def test_generation_is_deterministic():
    a = generate_world(small_config()).to_bytes()
    b = generate_world(small_config()).to_bytes()
    c = generate_world(small_config(seed=2)).to_bytes()
    assert a == b
    assert a != c


def test_fixed_tweet_count_and_ordering():
    w = generate_world(small_config(n_tweets=25))
    assert len(w.tweets) == 25
    created = [t.created_at for t in w.tweets]
    assert created == sorted(created)
    assert [t.tweet_id for t in w.tweets] == sorted(t.tweet_id for t in w.tweets)
    stamps = [e.timestamp for e in w.like_events]
    assert stamps == sorted(stamps)


def test_zero_duration_world_is_empty():
    w = generate_world(small_config(duration=0))
    assert w.tweets == () and w.like_events == ()


def test_likes_never_precede_their_tweet():
    w = generate_world(small_config())
    created = {t.tweet_id: t.created_at for t in w.tweets}
    assert all(e.timestamp > created[e.tweet_id] for e in w.like_events)


def test_burst_group_lands_inside_its_window():
    spec = CoordGroupSpec("g", 300, test_tweet_at=3600, burst_window=60, start_delay=30)
    w = generate_world(small_config(group_specs=(spec,)))
    test = [t for t in w.tweets if t.is_test]
    assert len(test) == 1
    c = test[0].created_at
    evs = [e for e in w.like_events if e.tweet_id == test[0].tweet_id]
    assert len(evs) == 300
    assert all(c + 30 <= e.timestamp <= c + 90 for e in evs)
    assert {e.user_id for e in evs} == set(w.ground_truth["g"])
    assert min(w.ground_truth["g"]) == GROUP_USER_BASE


def test_drip_group_spreads_evenly():
    spec = CoordGroupSpec("d", 120, test_tweet_at=600, delivery="drip", drip_hours=10.0, start_delay=0)
    w = generate_world(small_config(group_specs=(spec,)))
    tid = next(t.tweet_id for t in w.tweets if t.is_test)
    times = sorted(e.timestamp for e in w.like_events if e.tweet_id == tid)
    gaps = np.diff(times)
    assert gaps.min() >= 299 and gaps.max() <= 301  # 36000 s / 120 members


def test_groups_sharing_a_test_time_share_the_tweet():
    a = CoordGroupSpec("a", 5, test_tweet_at=100)
    b = CoordGroupSpec("b", 7, test_tweet_at=100)
    w = generate_world(small_config(group_specs=(a, b)))
    assert sum(t.is_test for t in w.tweets) == 1


def test_noise_adds_one_organic_like_per_noisy_member():
    spec = CoordGroupSpec("n", 40, test_tweet_at=100, extra_organic_noise=1.0)
    w = generate_world(small_config(group_specs=(spec,)))
    test_id = next(t.tweet_id for t in w.tweets if t.is_test)
    extra = [e for e in w.like_events if e.user_id >= GROUP_USER_BASE and e.tweet_id != test_id]
    assert len(extra) == 40


def test_unlikes_follow_their_like():
    w = generate_world(small_config(unlike_rate=0.5))
    likes = {(e.user_id, e.tweet_id): e.timestamp for e in w.like_events if e.kind == "like"}
    unlikes = [e for e in w.like_events if e.kind == "unlike"]
    assert unlikes
    assert all(e.timestamp > likes[(e.user_id, e.tweet_id)] for e in unlikes)


def test_config_rejects_unknown_and_invalid_keys():
    with pytest.raises(ConfigError) as exc:
        SimConfig.from_dict({"seed": 1, "bogus": 2})
    assert "bogus" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        SimConfig(tweet_rate=-1, unlike_rate=2).validate()
    assert set(exc.value.keys) == {"tweet_rate", "unlike_rate"}
    with pytest.raises(ConfigError):
        SimConfig.from_dict({"group_specs": [{"group_id": "x", "size": 3, "colour": "red"}]})


def test_out_of_range_target_is_a_config_error():
    with pytest.raises(ConfigError):
        generate_world(small_config(n_tweets=3, group_specs=(CoordGroupSpec("g", 2, target_tweets=(9,)),)))


def test_config_round_trip():
    cfg = small_config(group_specs=(CoordGroupSpec("g", 4, target_tweets=(1, 2), test_tweet_at=50),))
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


def test_save_load_round_trip(tmp_path):
    w = generate_world(small_config(group_specs=(CoordGroupSpec("g", 10, test_tweet_at=60),), unlike_rate=0.1))
    save_world(w, tmp_path)
    back = load_world(tmp_path)
    assert back.to_bytes() == w.to_bytes()
    assert back.ground_truth == w.ground_truth


# queries against hand-built timelines


def test_count_and_recency_with_unlike():
    w = hand_world([(1, 0)], [(10, 5, 1, "like"), (20, 6, 1, "like"), (30, 7, 1, "like"), (40, 6, 1, "unlike")])
    tid = 1
    assert like_count_at(w, tid, E + 9) == 0
    assert like_count_at(w, tid, E + 10) == 1
    assert like_count_at(w, tid, E + 35) == 3
    assert like_count_at(w, tid, E + 40) == 2
    assert like_count_at(w, tid, math.inf) == 2
    assert likers_most_recent(w, tid, E + 35, 2) == [7, 6]
    assert likers_most_recent(w, tid, E + 45, 100) == [7, 5]
    assert w.likers(tid) == {5, 6, 7}


def test_recency_ties_break_by_user_id():
    w = hand_world([(1, 0)], [(10, 9, 1, "like"), (10, 3, 1, "like")])
    assert likers_most_recent(w, 1, E + 10, 1) == [9]


def test_unknown_tweet_and_bad_k():
    w = hand_world([(1, 0)], [])
    with pytest.raises(NotFoundError):
        like_count_at(w, 99, E)
    with pytest.raises(ValueError):
        likers_most_recent(w, 1, E, 0)
    assert likers_most_recent(w, 1, E, 5) == []


events = st.lists(
    st.tuples(st.integers(1, 50), st.integers(1, 12), st.booleans(), st.integers(1, 30)), min_size=0, max_size=25,
    unique_by=lambda x: x[1],
)


@settings(max_examples=150, deadline=None)
@given(events, st.integers(0, 90), st.integers(1, 15))
def test_recency_matches_brute_force(evs, t, k):
    raw = []
    for ts, user, retract, delay in evs:
        raw.append((ts, user, 1, "like"))
        if retract:
            raw.append((ts + delay, user, 1, "unlike"))
    w = hand_world([(1, 0)], raw)
    alive = [(ts, u) for ts, u, r, d in evs if ts <= t and not (r and ts + d <= t)]
    alive.sort(reverse=True)
    assert like_count_at(w, 1, E + t) == len(alive)
    assert likers_most_recent(w, 1, E + t, k) == [u for _, u in alive[:k]]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_counts_monotone_without_unlikes(seed):
    w = generate_world(small_config(seed=seed, duration=3600, organic=OrganicLikeModel(n_users=100, horizon_hours=2.0)))
    for tw in w.tweets[:5]:
        counts = [like_count_at(w, tw.tweet_id, tw.created_at + s) for s in range(0, 7200, 600)]
        assert counts == sorted(counts)
        final = like_count_at(w, tw.tweet_id, math.inf)
        assert len(likers_most_recent(w, tw.tweet_id, math.inf, 100)) == min(100, final)
