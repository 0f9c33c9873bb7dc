"""API clients used by the collector.

Both clients expose the same duck-typed surface::

    now() -> int
    wait_until(t) -> None
    search(query, start, end, token, page_token=None) -> (records, next_token)
    liking_users(tweet_id, token) -> list[int]
    retweeted_by(tweet_id, token) -> list[int]

In virtual mode ``wait_until`` advances the platform clock instead of sleeping.
"""

from __future__ import annotations

import time

import requests

from .errors import AuthError, ClientError, NotFoundError, RateLimitError, TransportError
from .platform import Platform, TweetRecord
from .server import format_time, tweet_from_wire


class InProcessClient:
    def __init__(self, platform: Platform, virtual: bool = True):
        self.platform = platform
        self.virtual = virtual

    def now(self) -> int:
        return self.platform.get_clock()

    def wait_until(self, t: int) -> None:
        while (now := self.now()) < t:
            if self.virtual:
                self.platform.advance_clock(t - now)
            else:
                time.sleep(min(1.0, t - now))

    def search(
        self, query: str, start: int, end: int, token: str, page_token: str | None = None
    ) -> tuple[list[TweetRecord], str | None]:
        return self.platform.handle_search(query, start, end, page_token, token)

    def liking_users(self, tweet_id: int, token: str) -> list[int]:
        return self.platform.handle_liking_users(tweet_id, token)

    def retweeted_by(self, tweet_id: int, token: str) -> list[int]:
        return self.platform.handle_retweeted_by(tweet_id, token)


class HttpClient:
    """Talks to :class:`~likeharvest.server.PlatformHTTPServer` over HTTP."""

    def __init__(self, base_url: str, virtual: bool = True, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.virtual = virtual
        self.timeout = timeout
        self.session = requests.Session()

    def _call(self, method: str, path: str, *, token: str | None = None, **kwargs) -> dict:
        headers = {"authorization": f"Bearer {token}"} if token is not None else {}
        try:
            resp = self.session.request(method, self.base_url + path, headers=headers, timeout=self.timeout, **kwargs)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {path}: {exc}") from exc
        try:
            body = resp.json()
        except ValueError as exc:
            raise TransportError(f"{method} {path}: non-JSON response ({resp.status_code})") from exc
        if resp.status_code == 200:
            return body
        if resp.status_code == 429:
            raise RateLimitError(body["reset_epoch_seconds"])
        if resp.status_code == 404:
            raise NotFoundError(body.get("detail", path))
        if resp.status_code == 401:
            raise AuthError(body.get("detail", "unauthorized"))
        if 400 <= resp.status_code < 500:
            raise ClientError(body.get("detail", f"HTTP {resp.status_code}"))
        raise TransportError(f"{method} {path}: HTTP {resp.status_code}")

    def now(self) -> int:
        return int(self._call("GET", "/admin/time")["now"])

    def wait_until(self, t: int) -> None:
        while (now := self.now()) < t:
            if self.virtual:
                self._call("POST", "/admin/advance_clock", json={"delta_seconds": t - now})
            else:
                time.sleep(min(1.0, t - now))

    def search(
        self, query: str, start: int, end: int, token: str, page_token: str | None = None
    ) -> tuple[list[TweetRecord], str | None]:
        params = {"query": query, "start_time": format_time(start), "end_time": format_time(end)}
        if page_token:
            params["pagination_token"] = page_token
        body = self._call("GET", "/2/tweets/search", token=token, params=params)
        return [tweet_from_wire(d) for d in body["data"]], body["meta"].get("next_token")

    def _users(self, tweet_id: int, token: str, pool: str) -> list[int]:
        body = self._call("GET", f"/2/tweets/{tweet_id}/{pool}", token=token)
        return [int(d["id"]) for d in body["data"]]

    def liking_users(self, tweet_id: int, token: str) -> list[int]:
        return self._users(tweet_id, token, "liking_users")

    def retweeted_by(self, tweet_id: int, token: str) -> list[int]:
        return self._users(tweet_id, token, "retweeted_by")

    def ground_truth(self) -> dict[str, list[int]]:
        groups = self._call("GET", "/admin/ground_truth")["groups"]
        return {g: [int(u) for u in us] for g, us in groups.items()}

    def audit(self) -> list[dict]:
        return self._call("GET", "/admin/audit")["records"]
