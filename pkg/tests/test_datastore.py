import json

import pytest

from likeharvest.collector import DATASET_FORMAT, SCHEMA_VERSION
from likeharvest.datastore import OrphanRow, load_canonical, load_dataset, save_canonical, validate, write_layout
from likeharvest.errors import LoadError, SchemaVersionError


def write(dirpath, name, rows):
    (dirpath / name).write_text("".join(json.dumps(r) + "\n" for r in rows))


def tweet(i, likes, created=1000):
    return {"id": i, "created_at": created, "author_id": 7, "text": "t", "like_count": likes, "retweet_count": 0}


@pytest.fixture
def coll(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({"format": DATASET_FORMAT, "schema_version": SCHEMA_VERSION}))
    write(tmp_path, "tweets_100.jsonl", [tweet(1, 3), tweet(2, 1)])
    write(tmp_path, "tweets_200.jsonl", [tweet(1, 5), tweet(2, 0)])
    write(tmp_path, "likers_100.jsonl", [{"tweet_id": 1, "liker_ids": [11, 12, 13], "pulled_at": 100}])
    write(tmp_path, "likers_200.jsonl", [{"tweet_id": 1, "liker_ids": [14, 11], "pulled_at": 200},
                                        {"tweet_id": 9, "liker_ids": [99], "pulled_at": 200}])
    write(tmp_path, "likers_final.jsonl", [{"tweet_id": 1, "liker_ids": [14, 11, 11], "pulled_at": 300}])
    return tmp_path


def test_merge_rules(coll):
    ds = load_dataset(coll)
    assert ds.tweets[1].max_like_count == 5 and ds.tweets[2].max_like_count == 1
    assert ds.likers[1] == {11: 100, 12: 100, 13: 100, 14: 200}
    assert list(ds.likers[1]) == [11, 12, 13, 14]
    assert ds.final_harvest == {1}
    assert ds.orphans == [OrphanRow("likers", 9, (99,), 200)]
    assert ds.duplicates and ds.duplicates[0]["tweet_id"] == 1
    rep = validate(ds)
    assert rep.per_tweet == [(1, 4, 5), (2, 0, 1)]
    assert rep.anomalies == 2


def test_canonical_round_trip(coll, tmp_path_factory):
    ds = load_dataset(coll)
    out = tmp_path_factory.mktemp("c") / "dataset.jsonl"
    save_canonical(ds, out)
    back = load_canonical(out)
    assert back.same_content(ds)
    again = tmp_path_factory.mktemp("d") / "dataset.jsonl"
    save_canonical(back, again)
    assert again.read_bytes() == out.read_bytes()


def test_layout_round_trip(coll, tmp_path_factory):
    ds = load_dataset(coll)
    ds.duplicates.clear()
    out = write_layout(ds, tmp_path_factory.mktemp("layout"))
    back = load_dataset(out)
    assert back.same_content(ds)


def test_inconsistent_created_at(coll):
    write(coll, "tweets_300.jsonl", [tweet(1, 5, created=999)])
    with pytest.raises(LoadError):
        load_dataset(coll)


def test_missing_and_wrong_manifest(tmp_path):
    with pytest.raises(LoadError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text(json.dumps({"format": DATASET_FORMAT, "schema_version": 99}))
    with pytest.raises(SchemaVersionError):
        load_dataset(tmp_path)


def test_corrupt_line(coll):
    (coll / "likers_400.jsonl").write_text("{not json\n")
    with pytest.raises(LoadError) as exc:
        load_dataset(coll)
    assert "likers_400" in exc.value.path


def test_oversized_rows_are_reported(coll):
    write(coll, "likers_500.jsonl", [{"tweet_id": 2, "liker_ids": list(range(101)), "pulled_at": 500}])
    assert load_dataset(coll).oversized[0]["size"] == 101
