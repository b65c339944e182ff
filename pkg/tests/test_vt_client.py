import json
import threading
from collections import deque

import pytest
import requests

from labelforge import fixtures
from labelforge.errors import (
    MalformedJson,
    NotFound,
    QuotaExhausted,
    StaleAfterPolling,
    TransportError,
    Unauthorized,
)
from labelforge.report_model import parse_snapshot, serialize_snapshot, snapshot_to_dict
from labelforge.vt_client import API_KEY_ENV, ClientConfig, RateLimiter, V2Routes, VTClient


class VirtualClock:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        return self.now

    def sleep(self, seconds):
        self.now += max(seconds, 0.0)


class Resp:
    def __init__(self, status, body):
        self.status_code = status
        self._body = body

    def json(self):
        if isinstance(self._body, str):
            return json.loads(self._body)
        return self._body


class ScriptedSession:
    """Answers requests from a route table and records every call with its virtual time."""

    def __init__(self, handler, clock=None):
        self.handler = handler
        self.clock = clock
        self.calls = []

    def request(self, method, url, params=None, headers=None, timeout=None):
        self.calls.append((self.clock() if self.clock else None, method, url, params, headers))
        return self.handler(method, url, params)


APP = fixtures.TIME_TABLE_APP
HISTORY = fixtures.time_table_history()


def latest_handler(snap):
    def handle(method, url, params):
        if method == "POST":
            return Resp(202, {"accepted": True})
        return Resp(200, snapshot_to_dict(snap))
    return handle


def client_for(handler, clock=None, **cfg):
    clock = clock or VirtualClock()
    config = ClientConfig(base_url="http://mock", **cfg)
    limiter = RateLimiter(config.per_minute_quota, config.daily_quota, clock=clock, sleep=clock.sleep,
                          block_on_daily=config.block_on_daily_quota)
    session = ScriptedSession(handler, clock)
    return VTClient(config, session=session, limiter=limiter, sleep=clock.sleep), session, clock


def test_rescan_and_fetch():
    client, session, _ = client_for(latest_handler(HISTORY[-1]))
    assert client.rescan(APP).accepted is True
    snap = client.fetch_report(APP)
    assert snap == HISTORY[-1]
    assert parse_snapshot(serialize_snapshot(snap)) == snap
    assert session.calls[0][1:3] == ("POST", f"http://mock/apps/{APP}/rescan")
    assert session.calls[1][1:3] == ("GET", f"http://mock/apps/{APP}/reports/latest")


@pytest.mark.parametrize("status, error", [(401, Unauthorized), (403, Unauthorized), (404, NotFound),
                                           (429, QuotaExhausted), (500, TransportError)])
def test_status_mapping(status, error):
    client, *_ = client_for(lambda m, u, p: Resp(status, {"error": "x"}))
    with pytest.raises(error):
        client.rescan(APP)


def test_transport_and_parse_failures():
    def boom(m, u, p):
        raise requests.ConnectionError("refused")
    client, *_ = client_for(boom)
    with pytest.raises(TransportError):
        client.fetch_report(APP)
    client, *_ = client_for(lambda m, u, p: Resp(200, "{not json"))
    with pytest.raises(TransportError):
        client.fetch_report(APP)
    client, *_ = client_for(lambda m, u, p: Resp(200, {"sha1": APP, "scan_date": "2019-01-01", "positives": "x",
                                                       "total": 1}))
    with pytest.raises(MalformedJson):
        client.fetch_report(APP)


def test_api_key_comes_from_environment(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret-key")
    cfg = ClientConfig.from_env(base_url="http://mock")
    session = ScriptedSession(latest_handler(HISTORY[0]))
    VTClient(cfg, session=session).fetch_report(APP)
    assert session.calls[0][4]["x-apikey"] == "secret-key"


def _timeline(updates_on_poll):
    """Report endpoint that serves the old snapshot until the given poll, then the new one."""
    polls = {"n": 0}

    def handle(method, url, params):
        if method == "POST":
            return Resp(202, {"accepted": True})
        polls["n"] += 1
        snap = HISTORY[-1] if updates_on_poll and polls["n"] >= updates_on_poll else HISTORY[-2]
        return Resp(200, snapshot_to_dict(snap))
    return handle, polls


def test_wait_for_fresh_returns_after_second_poll():
    handler, polls = _timeline(updates_on_poll=2)
    client, session, clock = client_for(handler, per_minute_quota=100, rescan_poll_interval=240)
    snap = client.fetch_report(APP, wait_for_fresh=True, newer_than=HISTORY[-2].scan_date)
    assert snap == HISTORY[-1]
    assert polls["n"] == 2
    assert clock.now == 240


def test_stale_after_max_polls():
    handler, polls = _timeline(updates_on_poll=None)
    client, _, clock = client_for(handler, per_minute_quota=100, max_poll_attempts=4)
    with pytest.raises(StaleAfterPolling):
        client.fetch_report(APP, wait_for_fresh=True, newer_than=HISTORY[-2].scan_date)
    assert polls["n"] == 4


def _max_in_window(times, width):
    times = sorted(times)
    best, lo = 0, 0
    for hi, t in enumerate(times):
        while t - times[lo] >= width:
            lo += 1
        best = max(best, hi - lo + 1)
    return best


def test_limiter_windows_under_virtual_time():
    clock = VirtualClock()
    limiter = RateLimiter(per_minute=4, per_day=20_000, clock=clock, sleep=clock.sleep, block_on_daily=True)
    stamps = []
    for _ in range(45_000):
        limiter.acquire()
        stamps.append(clock.now)
    assert _max_in_window(stamps, 60.0) <= 4
    assert _max_in_window(stamps, 86400.0) <= 20_000


def test_limiter_daily_cap_binds_when_minute_cap_is_loose():
    clock = VirtualClock()
    limiter = RateLimiter(per_minute=1000, per_day=20_000, clock=clock, sleep=clock.sleep, block_on_daily=True)
    stamps = []
    for i in range(50_000):
        limiter.acquire()
        stamps.append(clock.now)
        clock.now += 0.5
    assert _max_in_window(stamps, 86400.0) == 20_000
    assert _max_in_window(stamps, 60.0) <= 1000


def test_quota_exhausted_without_network_call():
    client, session, clock = client_for(latest_handler(HISTORY[0]), daily_quota=5, per_minute_quota=100)
    for _ in range(5):
        client.fetch_report(APP)
    n = len(session.calls)
    with pytest.raises(QuotaExhausted):
        client.rescan(APP)
    with pytest.raises(QuotaExhausted):
        client.fetch_report(APP)
    assert len(session.calls) == n
    clock.now += 86400
    client.fetch_report(APP)
    assert len(session.calls) == n + 1


def test_limiter_is_thread_safe():
    clock = VirtualClock()
    lock = threading.Lock()

    def sleep(s):
        with lock:
            clock.sleep(s)

    limiter = RateLimiter(per_minute=7, per_day=10**6, clock=clock, sleep=sleep)
    stamps = deque()

    def worker():
        for _ in range(200):
            limiter.acquire()
            stamps.append(clock.now)

    threads = [threading.Thread(target=worker) for _ in range(5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(stamps) == 1000
    assert _max_in_window(list(stamps), 60.0) <= 7


def test_config_validation():
    with pytest.raises(ValueError):
        ClientConfig(daily_quota=0)
    with pytest.raises(ValueError):
        ClientConfig(max_poll_attempts=0)
    assert (ClientConfig().daily_quota, ClientConfig().per_minute_quota) == (20_000, 4)
    assert ClientConfig().rescan_poll_interval == 240


def test_v2_routes(monkeypatch):
    calls = []

    def handle(method, url, params):
        calls.append((method, url, params))
        if url.endswith("rescan"):
            return Resp(200, {"response_code": 1, "scan_id": "x"})
        if params["resource"] == "missing":
            return Resp(200, {"response_code": 0})
        return Resp(200, {**snapshot_to_dict(HISTORY[0]), "response_code": 1})

    cfg = ClientConfig(base_url="https://vt.example", api_key="k")
    client = VTClient(cfg, session=ScriptedSession(handle), routes=V2Routes(),
                      limiter=RateLimiter(100, 100, clock=VirtualClock()))
    assert client.rescan(APP).accepted
    assert client.fetch_report(APP) == HISTORY[0]
    with pytest.raises(NotFound):
        client.fetch_report("missing")
    assert calls[0][1] == "https://vt.example/vtapi/v2/file/rescan"
    assert calls[0][2] == {"resource": APP, "apikey": "k"}
