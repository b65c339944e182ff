"""Rate-limited client for a VirusTotal-compatible report API.

Native routes (served by ``labelforge.report_service``)::

    POST {base}/apps/{id}/rescan
    GET  {base}/apps/{id}/reports/latest

``V2Routes`` maps the same operations onto the public v2 file endpoints.
The API key is read from ``VT_API_KEY`` and never taken from the command line.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime
from typing import Callable

import requests

from .errors import (
    LabelforgeError,
    NotFound,
    QuotaExhausted,
    StaleAfterPolling,
    TransportError,
    Unauthorized,
)
from .report_model import ScanSnapshot, snapshot_from_dict

log = logging.getLogger(__name__)

API_KEY_ENV = "VT_API_KEY"
MINUTE = 60.0
DAY = 86400.0


@dataclass(frozen=True)
class ClientConfig:
    base_url: str = "http://127.0.0.1:8585"
    api_key: str | None = None
    daily_quota: int = 20_000
    per_minute_quota: int = 4
    rescan_poll_interval: float = 240.0
    max_poll_attempts: int = 10
    block_on_daily_quota: bool = False
    timeout: float = 30.0

    def __post_init__(self):
        if self.daily_quota <= 0 or self.per_minute_quota <= 0:
            raise ValueError("quotas must be positive")
        if self.max_poll_attempts < 1:
            raise ValueError("max_poll_attempts must be at least 1")

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        return cls(api_key=os.environ.get(API_KEY_ENV), **overrides)


class RateLimiter:
    """Sliding-window limiter over a per-minute and a per-day budget.

    Rescans and report downloads share one pool. ``clock``/``sleep`` are
    injectable so tests can run days of traffic in virtual time.
    """

    def __init__(self, per_minute: int, per_day: int, *, block_on_daily: bool = False,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.per_minute = per_minute
        self.per_day = per_day
        self.block_on_daily = block_on_daily
        self.clock = clock
        self.sleep = sleep
        self._minute: deque[float] = deque()
        self._day: deque[float] = deque()
        self._lock = threading.Lock()

    def _expire(self, now: float):
        while self._minute and now - self._minute[0] >= MINUTE:
            self._minute.popleft()
        while self._day and now - self._day[0] >= DAY:
            self._day.popleft()

    def remaining_today(self) -> int:
        with self._lock:
            self._expire(self.clock())
            return self.per_day - len(self._day)

    def acquire(self) -> None:
        """Take one request slot, sleeping while the minute window is full.

        Raises QuotaExhausted when the daily window is full, unless configured to wait it out.
        """
        with self._lock:
            while True:
                now = self.clock()
                self._expire(now)
                if len(self._day) >= self.per_day:
                    if not self.block_on_daily:
                        raise QuotaExhausted(f"daily quota of {self.per_day} requests spent")
                    self.sleep(self._day[0] + DAY - now)
                    continue
                if len(self._minute) >= self.per_minute:
                    self.sleep(self._minute[0] + MINUTE - now)
                    continue
                self._minute.append(now)
                self._day.append(now)
                return


class NativeRoutes:
    def rescan(self, base: str, app_id: str) -> tuple[str, str, dict]:
        return "POST", f"{base}/apps/{app_id}/rescan", {}

    def report(self, base: str, app_id: str) -> tuple[str, str, dict]:
        return "GET", f"{base}/apps/{app_id}/reports/latest", {}


class V2Routes:
    """Public v2 API: resource passed as a parameter, key as ``apikey``."""

    def rescan(self, base: str, app_id: str):
        return "POST", f"{base}/vtapi/v2/file/rescan", {"resource": app_id}

    def report(self, base: str, app_id: str):
        return "GET", f"{base}/vtapi/v2/file/report", {"resource": app_id, "allinfo": "true"}


@dataclass(frozen=True)
class RescanAck:
    accepted: bool
    payload: dict | None = None


class VTClient:
    def __init__(self, config: ClientConfig, *, session=None, limiter: RateLimiter | None = None,
                 routes=None, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self.limiter = limiter or RateLimiter(
            config.per_minute_quota, config.daily_quota, block_on_daily=config.block_on_daily_quota
        )
        self.routes = routes or NativeRoutes()
        self.sleep = sleep
        self.requests_sent = 0

    def _call(self, method: str, url: str, params: dict, app_id: str):
        self.limiter.acquire()
        headers = {"Accept": "application/json"}
        if self.config.api_key:
            headers["x-apikey"] = self.config.api_key
            if isinstance(self.routes, V2Routes):
                params = {**params, "apikey": self.config.api_key}
        try:
            resp = self.session.request(method, url, params=params or None, headers=headers,
                                        timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{method} {url}: {exc}") from exc
        finally:
            self.requests_sent += 1
        status = resp.status_code
        if status in (401, 403):
            raise Unauthorized(f"{method} {url}: HTTP {status}")
        if status == 404:
            raise NotFound(app_id)
        if status == 429:
            raise QuotaExhausted(f"server refused {method} {url}: HTTP 429")
        if status >= 400:
            raise TransportError(f"{method} {url}: HTTP {status}")
        try:
            return status, resp.json()
        except ValueError as exc:
            raise TransportError(f"{method} {url}: response is not JSON") from exc

    def rescan(self, app_id: str) -> RescanAck:
        method, url, params = self.routes.rescan(self.config.base_url.rstrip("/"), app_id)
        status, body = self._call(method, url, params, app_id)
        if isinstance(body, dict) and "response_code" in body:  # v2 style acknowledgement
            return RescanAck(body.get("response_code") == 1, body)
        return RescanAck(status in (200, 201, 202), body if isinstance(body, dict) else None)

    def _download(self, app_id: str) -> ScanSnapshot:
        method, url, params = self.routes.report(self.config.base_url.rstrip("/"), app_id)
        _, body = self._call(method, url, params, app_id)
        if isinstance(body, dict) and body.get("response_code") == 0:
            raise NotFound(app_id)
        try:
            return snapshot_from_dict(body)
        except LabelforgeError:
            raise
        except Exception as exc:
            raise TransportError(f"unusable report for {app_id}: {exc}") from exc

    def fetch_report(self, app_id: str, wait_for_fresh: bool = False,
                     newer_than: datetime | None = None) -> ScanSnapshot:
        """Download the latest report.

        With ``wait_for_fresh``, keep polling every ``rescan_poll_interval``
        seconds until the report is newer than ``newer_than``, for at most
        ``max_poll_attempts`` downloads.
        """
        snap = self._download(app_id)
        if not wait_for_fresh or newer_than is None:
            return snap
        attempts = 1
        while snap.scan_date <= newer_than:
            if attempts >= self.config.max_poll_attempts:
                raise StaleAfterPolling(f"{app_id}: report not refreshed after {attempts} polls")
            self.sleep(self.config.rescan_poll_interval)
            snap = self._download(app_id)
            attempts += 1
        log.debug("%s fresh after %d poll(s)", app_id, attempts)
        return snap
