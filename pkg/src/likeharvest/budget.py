"""Request-budget arithmetic for choosing collector parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .collector import CollectorParams
from .errors import ConfigError
from .platform import DEFAULT_MONTHLY_CAP, WINDOW_SECONDS

DAY = 86_400


@dataclass(frozen=True)
class BudgetReport:
    tracked_tweets: float
    pulls_total: int
    tweet_retrievals_total: int
    monthly_cap: int
    monthly_cap_ok: bool
    likers_requests_per_window_peak: int
    safe_top_n_max: int
    strict_top_n_max: int
    rate_ok: bool
    strict_rate_ok: bool


def max_pulls_per_token_window(params: CollectorParams) -> int:
    """Most pulls one token can serve inside a single aligned 15-minute window.

    Each token serves every ``len(tokens)``-th pull, so its pulls are spaced
    ``pullinterval * len(tokens)`` apart; a half-open window of 900 s holds at
    most ``ceil(900 / spacing)`` of them.
    """
    spacing = params.pullinterval * len(params.tokens)
    return -(-WINDOW_SECONDS // spacing)


def plan_budget(expected_tweets_per_day: float, params: CollectorParams, monthly_cap: int = DEFAULT_MONTHLY_CAP) -> BudgetReport:
    """Estimate tweet retrievals and likers-request pressure for a run.

    In steady state ``rate * tracktime`` tweets are inside their tracking window
    and each is returned once per pull, so over the observation period the
    search endpoint returns ``rate * tracktime * observationtime / pullinterval``
    tweets (the ramp-up at the start and the tail after the observation period
    cancel out exactly for a constant rate).

    ``safe_top_n_max`` is ``floor(req_rate_lim * pullinterval / 900 s * |tokens|)``.
    ``strict_top_n_max`` additionally accounts for fixed windows: one token
    may serve ``max_pulls_per_token_window`` pulls in the same window.
    """
    if expected_tweets_per_day <= 0 or params.pullinterval <= 0 or params.tracktime <= 0 or not params.tokens:
        raise ConfigError("budget inputs must be positive")
    rate = Fraction(expected_tweets_per_day).limit_denominator(10**9)
    tracked = rate * params.tracktime / DAY
    total = rate * params.tracktime * params.observationtime / (DAY * params.pullinterval)
    retrievals = math.floor(total + Fraction(1, 2))
    per_window = max_pulls_per_token_window(params)
    strict = params.req_rate_lim // per_window
    safe = params.safe_top_n_max
    return BudgetReport(
        tracked_tweets=float(tracked),
        pulls_total=len(params.pullpoints()),
        tweet_retrievals_total=retrievals,
        monthly_cap=monthly_cap,
        monthly_cap_ok=retrievals <= monthly_cap,
        likers_requests_per_window_peak=params.top_n * per_window,
        safe_top_n_max=safe,
        strict_top_n_max=strict,
        rate_ok=params.top_n <= safe,
        strict_rate_ok=params.top_n <= strict,
    )
