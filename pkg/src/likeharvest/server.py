"""HTTP/1.1 + JSON front end for :class:`~likeharvest.platform.Platform`.

Endpoints::

    GET  /2/tweets/search?query=&start_time=&end_time=&pagination_token=
    GET  /2/tweets/{id}/liking_users
    GET  /2/tweets/{id}/retweeted_by
    POST /admin/advance_clock   {"delta_seconds": n}
    GET  /admin/time
    GET  /admin/ground_truth
    GET  /admin/audit

Data endpoints need ``Authorization: Bearer <token>``; admin endpoints are
unauthenticated and never rate-limited. Every response carries
``x-virtual-now``.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any
from urllib.parse import parse_qs, urlsplit

from .errors import AuthError, ClientError, NotFoundError, RateLimitError
from .platform import Platform, TweetRecord

log = logging.getLogger(__name__)

_USERS_PATH = re.compile(r"^/2/tweets/(\d+)/(liking_users|retweeted_by)$")


def format_time(t: int) -> str:
    return dt.datetime.fromtimestamp(t, tz=dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.000Z")


def parse_time(value: str) -> int:
    """Accept RFC 3339 (``2022-05-25T12:00:00Z``) or integer epoch seconds."""
    value = value.strip()
    if re.fullmatch(r"-?\d+", value):
        return int(value)
    try:
        parsed = dt.datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ClientError(f"bad timestamp {value!r}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=dt.timezone.utc)
    return int(parsed.timestamp())


def tweet_to_wire(rec: TweetRecord) -> dict[str, Any]:
    return {
        "id": str(rec.id),
        "created_at": format_time(rec.created_at),
        "author_id": str(rec.author_id),
        "text": rec.text,
        "public_metrics": {"like_count": rec.like_count, "retweet_count": rec.retweet_count},
    }


def tweet_from_wire(d: dict[str, Any]) -> TweetRecord:
    m = d["public_metrics"]
    return TweetRecord(
        int(d["id"]), parse_time(d["created_at"]), int(d["author_id"]), d["text"], m["like_count"], m["retweet_count"]
    )


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True
    server: "PlatformHTTPServer"

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: dict[str, Any]) -> None:
        payload = json.dumps(body, separators=(",", ":")).encode()
        self.send_response(status)
        self.send_header("content-type", "application/json")
        self.send_header("content-length", str(len(payload)))
        self.send_header("x-virtual-now", str(self.server.platform.get_clock()))
        self.end_headers()
        self.wfile.write(payload)

    def _token(self) -> str:
        auth = self.headers.get("authorization", "")
        if not auth.lower().startswith("bearer "):
            raise AuthError("missing bearer token")
        return auth[7:].strip()

    def _dispatch(self, method: str) -> None:
        platform = self.server.platform
        url = urlsplit(self.path)
        try:
            if method == "GET" and url.path == "/2/tweets/search":
                qs = {k: v[-1] for k, v in parse_qs(url.query, keep_blank_values=True).items()}
                if "query" not in qs:
                    raise ClientError("missing query")
                start = parse_time(qs["start_time"]) if qs.get("start_time") else 0
                end = parse_time(qs["end_time"]) if qs.get("end_time") else platform.get_clock() + 1
                records, nxt = platform.handle_search(
                    qs["query"], start, end, qs.get("pagination_token") or None, self._token()
                )
                meta = {"next_token": nxt} if nxt else {}
                self._send(200, {"data": [tweet_to_wire(r) for r in records], "meta": meta})
            elif method == "GET" and (m := _USERS_PATH.match(url.path)):
                tweet_id, pool = int(m.group(1)), m.group(2)
                handler = platform.handle_liking_users if pool == "liking_users" else platform.handle_retweeted_by
                users = handler(tweet_id, self._token())
                self._send(200, {"data": [{"id": str(u)} for u in users]})
            elif method == "POST" and url.path == "/admin/advance_clock":
                length = int(self.headers.get("content-length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                    delta = int(body["delta_seconds"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ClientError("body must be {\"delta_seconds\": int}") from exc
                self._send(200, {"now": platform.advance_clock(delta)})
            elif method == "GET" and url.path == "/admin/time":
                self._send(200, {"now": platform.get_clock()})
            elif method == "GET" and url.path == "/admin/ground_truth":
                self._send(200, {"groups": {g: [str(u) for u in us] for g, us in platform.export_ground_truth().items()}})
            elif method == "GET" and url.path == "/admin/audit":
                recs = [r.__dict__ for r in platform.export_audit()]
                self._send(200, {"records": recs})
            else:
                self._send(404, {"title": "Not Found Error", "detail": f"no route {method} {url.path}"})
        except RateLimitError as exc:
            self._send(429, {"reset_epoch_seconds": exc.reset_epoch_seconds})
        except NotFoundError as exc:
            self._send(404, {"title": "Not Found Error", "detail": str(exc)})
        except AuthError as exc:
            self._send(401, {"title": "Unauthorized", "detail": str(exc)})
        except ClientError as exc:
            self._send(400, {"title": "Invalid Request", "detail": str(exc)})

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")


class PlatformHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, platform: Platform, addr: tuple[str, int] = ("127.0.0.1", 0)):
        super().__init__(addr, _Handler)
        self.platform = platform

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, name="platform-http", daemon=True)
        thread.start()
        return thread
