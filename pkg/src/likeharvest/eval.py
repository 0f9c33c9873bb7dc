"""Completeness of a collected dataset and detection quality against ground truth."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping


from .analysis.binning import BinList
from .analysis.matrix import LikeMatrix
from .datastore import Dataset
from .errors import InputError
from .world import WorldTimeline

TENTH = Fraction(1, 10)


@dataclass(frozen=True)
class CompletenessRow:
    tweet_id: int
    max_like_count: int
    collected_likers: int
    missed_share: Fraction  # negative when more likers were collected than the count shows


@dataclass(frozen=True)
class CompletenessSummary:
    tweets: int
    exact: float
    within_10pct: float
    within_10_likes: float
    negative_within_10pct: float
    positive_within_10pct: float
    negative_rows: int
    positive_rows: int


@dataclass(frozen=True)
class CompletenessReport:
    rows: list[CompletenessRow]
    summary: CompletenessSummary


def _share(hits: int, total: int) -> float:
    return hits / total if total else 0.0


def completeness(dataset: Dataset, population: str = "final_harvest") -> CompletenessReport:
    """Missed-likes share per tweet, ascending by like count.

    ``population`` is ``"final_harvest"`` (tweets that went through the final
    harvest) or ``"all"``. Only tweets with a like count of at least 1 count.

    Summary fractions:
      exact                  collected == like count
      within_10pct           |missed share| <= 10 %
      within_10_likes        |like count - collected| <= 10
      negative_within_10pct  collected at most 10 % above the like count
      positive_within_10pct  collected at most 10 % below the like count
    """
    if population == "final_harvest":
        ids = dataset.final_harvest
    elif population == "all":
        ids = dataset.tweets.keys()
    else:
        raise ValueError(f"unknown population {population!r}")
    rows = []
    for tid in ids:
        info = dataset.tweets.get(tid)
        if info is None or info.max_like_count < 1:
            continue
        got = dataset.collected_likers(tid)
        rows.append(CompletenessRow(tid, info.max_like_count, got, Fraction(info.max_like_count - got, info.max_like_count)))
    rows.sort(key=lambda r: (r.max_like_count, r.tweet_id))
    n = len(rows)
    summary = CompletenessSummary(
        tweets=n,
        exact=_share(sum(r.missed_share == 0 for r in rows), n),
        within_10pct=_share(sum(abs(r.missed_share) <= TENTH for r in rows), n),
        within_10_likes=_share(sum(abs(r.max_like_count - r.collected_likers) <= 10 for r in rows), n),
        negative_within_10pct=_share(sum(r.missed_share >= -TENTH for r in rows), n),
        positive_within_10pct=_share(sum(r.missed_share <= TENTH for r in rows), n),
        negative_rows=sum(r.missed_share < 0 for r in rows),
        positive_rows=sum(r.missed_share > 0 for r in rows),
    )
    return CompletenessReport(rows, summary)


@dataclass(frozen=True)
class RecallRow:
    tweet_id: int
    true_likers: int
    collected_true: int
    recall: Fraction


@dataclass(frozen=True)
class RecallReport:
    rows: list[RecallRow]
    overall: Fraction
    vacuous: bool  # no true likers at all; overall reported as 1


def ground_truth_recall(dataset: Dataset, timeline: WorldTimeline) -> RecallReport:
    foreign = sorted(set(dataset.tweets) - set(timeline.tweet_by_id))
    if foreign:
        raise InputError(f"{len(foreign)} dataset tweets are not in the timeline (first: {foreign[0]})")
    rows = []
    hit_total = true_total = 0
    for tw in timeline.tweets:
        truth = timeline.likers(tw.tweet_id)
        if not truth:
            continue
        got = len(truth & dataset.likers.get(tw.tweet_id, {}).keys())
        rows.append(RecallRow(tw.tweet_id, len(truth), got, Fraction(got, len(truth))))
        hit_total += got
        true_total += len(truth)
    if true_total == 0:
        return RecallReport(rows, Fraction(1), True)
    return RecallReport(rows, Fraction(hit_total, true_total), False)


@dataclass(frozen=True)
class GroupMatch:
    group_id: str
    size: int
    bin_index: int | None
    bin_size: int
    exact: bool
    jaccard: Fraction
    recovered: bool


@dataclass(frozen=True)
class DetectionReport:
    groups: list[GroupMatch]
    min_size: int
    large_bins: int
    matched_large_bins: int
    precision: float | None
    recall: float | None
    unmatched_large_bins: list[int] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_size": self.min_size,
            "large_bins": self.large_bins,
            "matched_large_bins": self.matched_large_bins,
            "precision": self.precision,
            "recall": self.recall,
            "unmatched_large_bins": self.unmatched_large_bins,
            "groups": [
                {
                    "group_id": g.group_id,
                    "size": g.size,
                    "bin_index": g.bin_index,
                    "bin_size": g.bin_size,
                    "exact": g.exact,
                    "jaccard": float(g.jaccard),
                    "jaccard_exact": f"{g.jaccard.numerator}/{g.jaccard.denominator}",
                    "recovered": g.recovered,
                }
                for g in self.groups
            ],
        }


def detection_metrics(
    bins: BinList,
    matrix: LikeMatrix,
    ground_truth: Mapping[str, frozenset[int] | set[int] | list[int]],
    min_size: int = 50,
    jaccard_threshold: float = 0.5,
) -> DetectionReport:
    """Match each injected group to the bin that overlaps it best.

    A group is recovered when a bin equals its member set exactly, or, for
    groups that noise has split, when its best bin reaches
    ``jaccard_threshold``; either way the bin must have at least
    ``min_size`` members. Precision is the share of bins of at least
    ``min_size`` users that are the best match of a recovered group.
    """
    assign = bins.assignment(matrix.m)
    bin_sets = [frozenset(int(matrix.user_ids[j]) for j in b.members) for b in bins]
    matches = []
    matched_bins: set[int] = set()
    for gid in sorted(ground_truth):
        members = frozenset(int(u) for u in ground_truth[gid])
        cols = [matrix.user_index[u] for u in members if u in matrix.user_index]
        best: tuple[Fraction, int, int] | None = None
        for b in sorted(set(assign[cols].tolist())) if cols else []:
            jac = Fraction(len(bin_sets[b] & members), len(bin_sets[b] | members))
            key = (jac, len(bin_sets[b]), -b)
            if best is None or key > best:
                best = key
        if best is None:
            matches.append(GroupMatch(gid, len(members), None, 0, False, Fraction(0), False))
            continue
        jac, bsize, neg_b = best
        b = -neg_b
        exact = bin_sets[b] == members
        recovered = bsize >= min_size and (exact or jac >= Fraction(jaccard_threshold).limit_denominator(10**6))
        if recovered:
            matched_bins.add(b)
        matches.append(GroupMatch(gid, len(members), b, bsize, exact, jac, recovered))
    large = [i for i, b in enumerate(bins) if b.size >= min_size]
    eligible = [g for g in matches if g.size >= min_size]
    return DetectionReport(
        groups=matches,
        min_size=min_size,
        large_bins=len(large),
        matched_large_bins=sum(i in matched_bins for i in large),
        precision=(sum(i in matched_bins for i in large) / len(large)) if large else None,
        recall=(sum(g.recovered for g in eligible) / len(eligible)) if eligible else None,
        unmatched_large_bins=[i for i in large if i not in matched_bins],
    )


# writers ---------------------------------------------------------------------------


def write_completeness_csv(report: CompletenessReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweet_id", "max_like_count", "collected_likers", "missed_share"])
        for r in report.rows:
            w.writerow([r.tweet_id, r.max_like_count, r.collected_likers, repr(float(r.missed_share))])


def write_recall_csv(report: RecallReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweet_id", "true_likers", "collected_true", "recall"])
        for r in report.rows:
            w.writerow([r.tweet_id, r.true_likers, r.collected_true, repr(float(r.recall))])


def write_detection_json(report: DetectionReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True) + "\n")


def summary_dict(report: CompletenessReport) -> dict[str, Any]:
    s = report.summary
    return {k: getattr(s, k) for k in s.__dataclass_fields__}


def fraction_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


__all__ = [
    "CompletenessReport",
    "CompletenessRow",
    "CompletenessSummary",
    "DetectionReport",
    "GroupMatch",
    "RecallReport",
    "RecallRow",
    "completeness",
    "detection_metrics",
    "ground_truth_recall",
]
