"""Acceptance criteria 1 to 10, one PASS/FAIL line each.

Run alone with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import json
import os
import subprocess
import sys
import time
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from likeharvest import eval as ev
from likeharvest.analysis import (
    LikeMatrix,
    bin_users,
    bin_users_naive,
    canonicalize_signs,
    coordination_probability,
    correlation_matrix,
    similarity,
    svd_embed,
)
from likeharvest.budget import plan_budget
from likeharvest.collector import CollectorParams
from likeharvest.config import load_config
from likeharvest.datastore import load_dataset
from likeharvest.pipeline import CRASH_EXIT_CODE, run_pipeline
from likeharvest.platform import read_audit
from likeharvest.report import audit_stats
from likeharvest.world import load_world

from conftest import first_difference, tree_bytes
from test_eval import fixture_dataset


def set_of_sets(bins, matrix=None):
    return {frozenset(b.members) for b in bins}


def random_matrix(rng, n, m, density):
    a = (rng.random((n, m)) < density).astype(np.int8)
    empty = a.sum(axis=0) == 0
    a[rng.integers(0, n, size=int(empty.sum())), np.flatnonzero(empty)] = 1
    return a


def with_duplicates(rng, a, copies):
    """Append ``copies`` duplicated columns and shuffle all columns."""
    picks = rng.integers(0, a.shape[1], size=copies)
    b = np.hstack([a, a[:, picks]])
    return b[:, rng.permutation(b.shape[1])]


# criterion 1

PB_TABLE = [(2, "0.95"), (10, "0.63"), (50, "0.08"), (60, "0.05"), (75, "0.02"), (100, "0.006"), (200, "3.69E-5")]


def round_like(value: float, printed: str) -> Decimal:
    p = Decimal(printed)
    exp = p.as_tuple().exponent
    return Decimal(value).quantize(Decimal(1).scaleb(exp), rounding=ROUND_HALF_EVEN)


def test_c1_coordination_probability_table(verdict):
    t0 = time.perf_counter()
    got = {size: round_like(coordination_probability(size, 0.95), printed) for size, printed in PB_TABLE}
    elapsed = time.perf_counter() - t0
    bad = [(s, str(got[s]), p) for s, p in PB_TABLE if got[s] != Decimal(p)]
    verdict(1, not bad and elapsed < 1, f"7 table entries, mismatches {bad}, {elapsed * 1e3:.2f} ms")


# criterion 2


def test_c2_safe_capacity_extremes(verdict):
    def safe(interval):
        params = CollectorParams("#dkpol", ("t",), 0, 86400, 86400, interval)
        return plan_budget(1000, params).safe_top_n_max

    a, b = safe(12), safe(900)
    verdict(2, (a, b) == (1, 75), f"12 s -> {a}, 15 min -> {b} (one token)")


# criterion 3


def test_c3_binning_matches_naive(verdict):
    rng = np.random.default_rng(20240301)
    t0 = time.perf_counter()
    cases = failures = 0
    for _ in range(200):
        n, m = int(rng.integers(1, 51)), int(rng.integers(1, 201))
        mat = LikeMatrix.from_dense(random_matrix(rng, n, m, float(rng.uniform(0.01, 0.5))))
        cases += 1
        failures += set_of_sets(bin_users(mat)) != set_of_sets(bin_users_naive(mat))
    for _ in range(40):
        n, m = int(rng.integers(1, 51)), int(rng.integers(1, 120))
        a = with_duplicates(rng, random_matrix(rng, n, m, float(rng.uniform(0.01, 0.5))), int(rng.integers(1, 81)))
        mat = LikeMatrix.from_dense(a)
        naive = set_of_sets(bin_users_naive(mat))
        for hasher in (None, lambda b: 0, lambda b: len(b) % 3):
            cases += 1
            got = bin_users(mat) if hasher is None else bin_users(mat, hasher=hasher)
            failures += set_of_sets(got) != naive
    elapsed = time.perf_counter() - t0
    verdict(3, failures == 0 and elapsed < 30, f"{cases} matrices, {failures} disagreements, {elapsed:.1f} s")


# criterion 4


def test_c4_similarity_equivalence(verdict):
    rng = np.random.default_rng(4)
    pairs = violations = 0
    while pairs < 100_000:
        n = int(rng.integers(2, 12))
        a = with_duplicates(rng, random_matrix(rng, n, int(rng.integers(4, 30)), float(rng.uniform(0.05, 0.6))), 30)
        mat = LikeMatrix.from_dense(a)
        assign = bin_users(mat).assignment(mat.m)
        for i, j in combinations(range(mat.m), 2):
            same = assign[i] == assign[j]
            cos = similarity(mat, i, j, "cosine")
            facts = (same, cos == 1.0 or abs(cos - 1.0) < 1e-12, similarity(mat, i, j, "jaccard") == 1, similarity(mat, i, j, "hamming") == 0)
            violations += len(set(facts)) != 1
            pairs += 1
            if pairs >= 100_000:
                break
    verdict(4, violations == 0, f"{pairs} pairs, {violations} violations")


# criterion 5


def dense_reference(mat, q=2):
    r = correlation_matrix(mat)
    vals, vecs = np.linalg.eigh(r.values)
    top = np.argsort(vals)[::-1][:q]
    return canonicalize_signs(vecs[:, top] * vals[top]), vals[top], r.columns


def test_c5_embedding_matches_dense(verdict):
    rng = np.random.default_rng(55)
    worst_coord = worst_bin = worst_eig = 0.0
    instances = skipped = 0
    while instances < 50:
        n, m = int(rng.integers(8, 51)), int(rng.integers(20, 181))
        a = with_duplicates(rng, random_matrix(rng, n, m, float(rng.uniform(0.05, 0.4))), 20)
        mat = LikeMatrix.from_dense(a)
        ref, vals, cols = dense_reference(mat)
        full = np.sort(np.linalg.eigvalsh(correlation_matrix(mat).values))[::-1]
        if full[1] - full[2] < 1e-6 * full[0]:
            skipped += 1  # degenerate subspace; coordinates are not unique
            continue
        emb = svd_embed(mat)
        assert emb.columns.tolist() == cols.tolist()
        worst_coord = max(worst_coord, float(np.abs(emb.coords - ref).max()))
        worst_eig = max(worst_eig, float(np.max(np.abs(emb.eigenvalues - vals) / np.abs(vals))))
        assign = bin_users(mat).assignment(mat.m)[emb.columns]
        for b in np.unique(assign):
            block = emb.coords[assign == b]
            worst_bin = max(worst_bin, float(np.abs(block - block[0]).max()))
        instances += 1
    ok = worst_coord <= 1e-6 and worst_bin <= 1e-9 and worst_eig <= 1e-8
    verdict(5, ok, f"{instances} instances ({skipped} degenerate skipped), max coord err {worst_coord:.1e}, same-bin spread {worst_bin:.1e}, eigenvalue rel err {worst_eig:.1e}")


# criterion 6


@pytest.mark.slow
def test_c6_calm_end_to_end(verdict, tmp_path):
    t0 = time.perf_counter()
    run = run_pipeline(load_config("calm"), tmp_path / "calm")
    elapsed = time.perf_counter() - t0
    recall = json.loads((run / "eval" / "summary.json").read_text())["recall"]
    stats = audit_stats(read_audit(run / "server" / "audit.jsonl"))
    tweets = len(load_world(run / "world").tweets)
    ok = recall["overall"] == "1/1" and stats["peak_liking_requests_per_token_window"] <= 75 and stats["rate_limited"] == 0 and elapsed < 60
    verdict(
        6,
        ok,
        f"{tweets} tweets, recall {recall['overall']}, peak {stats['peak_liking_requests_per_token_window']} per token-window, "
        f"{stats['rate_limited']} rate-limited, {elapsed:.1f} s",
    )


# criterion 7


def test_c7_burst_row(verdict, preset_run):
    run = preset_run("burst")
    world = load_world(run / "world")
    test_tweet = next(t.tweet_id for t in world.tweets if t.is_test)
    truth = len(world.likers(test_tweet))
    row = next(r for r in ev.completeness(load_dataset(run / "dataset"), "all").rows if r.tweet_id == test_tweet)
    ok = truth == 300 and row.collected_likers == 100 and row.missed_share == Fraction(200, 300)
    verdict(7, ok, f"true likers {truth}, collected {row.collected_likers}, missed_share {row.missed_share}")


# criterion 8


@pytest.mark.slow
def test_c8_crash_resume(verdict, tmp_path, preset_run):
    ref = tree_bytes(preset_run("small"))
    total = len(load_config("small").collector.pullpoints())
    outcomes = []
    for k in (1, total // 2, total):
        out = tmp_path / f"k{k}"
        cmd = [sys.executable, "-m", "likeharvest", "pipeline", "--config", "small", "--out", str(out)]
        crashed = subprocess.run(cmd + ["--crash-after", str(k)], capture_output=True).returncode
        resumed = subprocess.run(cmd, capture_output=True).returncode
        diff = first_difference(ref, tree_bytes(out))
        outcomes.append((k, crashed == CRASH_EXIT_CODE and resumed == 0 and diff is None, diff))
    ok = all(o for _, o, _ in outcomes)
    verdict(8, ok, "; ".join(f"k={k} {'identical' if o else d or 'bad exit'}" for k, o, d in outcomes))


# criterion 9


@pytest.mark.slow
def test_c9_detection_recovery(verdict, preset_run):
    run = preset_run("detection")
    world = load_world(run / "world")
    det = json.loads((run / "eval" / "detection.json").read_text())
    hist = {int(line.split(",")[0]): int(line.split(",")[1]) for line in (run / "analysis" / "histogram.csv").read_text().splitlines()[1:]}
    m = json.loads((run / "analysis" / "summary.json").read_text())["m"]
    organic = m - sum(len(g) for g in world.ground_truth.values())
    sizes = sorted(len(g) for g in world.ground_truth.values())
    exact = all(g["exact"] and g["recovered"] for g in det["groups"])
    shown = all(hist.get(s, 0) >= 1 for s in sizes)
    ok = sizes == [50, 120, 320] and exact and det["recall"] == 1.0 and shown and organic >= 5000
    verdict(9, ok, f"groups {sizes} exact={exact}, recall {det['recall']}, histogram rows {[(s, hist.get(s, 0)) for s in sizes]}, {organic} organic users")


# criterion 10


def test_c10_ten_tweet_fixture(verdict):
    s = ev.completeness(fixture_dataset()).summary
    got = (s.tweets, s.exact, s.within_10pct, s.within_10_likes, s.negative_within_10pct, s.positive_within_10pct)
    verdict(10, got == (10, 0.3, 0.6, 0.8, 0.9, 0.7), f"tweets, exact, within 10%, within 10 likes, neg, pos = {got}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
