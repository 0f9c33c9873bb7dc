import pytest
import requests

from likeharvest.client import HttpClient, InProcessClient
from likeharvest.errors import AuthError, ClientError, NotFoundError, RateLimitError, TransportError
from likeharvest.platform import Platform, VirtualClock
from likeharvest.server import PlatformHTTPServer, format_time, parse_time

from conftest import E, hand_world


@pytest.fixture
def served():
    world = hand_world(
        [(i, i) for i in range(1, 131)],
        [(200 + j, 500 + j, 1, "like") for j in range(120)] + [(300, 77, 2, "retweet")],
        {"g": {500, 501}},
    )
    platform = Platform(world, clock=VirtualClock(E + 1000), tokens=["t1", "t2"], rate_limit=2)
    server = PlatformHTTPServer(platform)
    server.start_background()
    yield platform, HttpClient(server.url)
    server.shutdown()
    server.server_close()


def test_time_format_round_trip():
    assert format_time(E) == "2022-05-25T12:00:00.000Z"
    assert parse_time(format_time(E)) == E
    assert parse_time(str(E)) == E
    with pytest.raises(ClientError):
        parse_time("yesterday")


def test_http_matches_in_process(served):
    platform, http = served
    local = InProcessClient(platform)
    a, ta = http.search("#dkpol", E, E + 200, "t1")
    b, tb = local.search("#dkpol", E, E + 200, "t1")
    assert a == b and ta == tb
    assert http.search("#dkpol", E, E + 200, "t1", ta) == local.search("#dkpol", E, E + 200, "t1", tb)
    assert http.liking_users(1, "t2") == local.liking_users(1, "t1")
    assert len(http.liking_users(1, "t2")) == 100
    assert http.retweeted_by(2, "t1") == [77]


def test_status_mapping(served):
    platform, http = served
    http.liking_users(1, "t1")
    http.liking_users(1, "t1")
    with pytest.raises(RateLimitError) as exc:
        http.liking_users(1, "t1")
    assert exc.value.reset_epoch_seconds == (E + 1000) - (E + 1000) % 900 + 900
    with pytest.raises(NotFoundError):
        http.liking_users(9999, "t2")
    with pytest.raises(AuthError):
        http.liking_users(1, "nobody")
    with pytest.raises(ClientError):
        http.search("-#dkpol", E, E + 5, "t2")


def test_admin_endpoints_and_header(served):
    platform, http = served
    assert http.now() == E + 1000
    http.wait_until(E + 1500)
    assert platform.get_clock() == E + 1500
    assert http.ground_truth() == {"g": [500, 501]}
    http.liking_users(1, "t1")
    recs = http.audit()
    assert recs[-1]["endpoint"] == "liking_users" and recs[-1]["items_returned"] == 100
    r = requests.get(http.base_url + "/admin/time")
    assert r.headers["x-virtual-now"] == str(E + 1500)
    r = requests.get(http.base_url + "/nowhere")
    assert r.status_code == 404 and r.json()["title"] == "Not Found Error"
    r = requests.post(http.base_url + "/admin/advance_clock", json={"delta_seconds": -5})
    assert r.status_code == 400


def test_dead_server_is_a_transport_error():
    with pytest.raises(TransportError):
        HttpClient("http://127.0.0.1:9", timeout=0.5).now()
