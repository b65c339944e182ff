"""HTTP service over a SnapshotStore that serves every app's full report history.

    GET  /apps                      JSON array of app ids
    GET  /apps/{id}/reports         JSON array of snapshots, oldest first
    GET  /apps/{id}/reports/latest  newest snapshot
    POST /apps/{id}/rescan          202, appends the next scripted snapshot

Rescans do not run any scanner. With a replay script
``{"apps": {app_id: [snapshot, ...]}}`` each rescan of an app appends its next
scripted snapshot to the store; once the script runs out the service answers 409.
"""

from __future__ import annotations

import json
import logging
import threading
from collections import deque
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import BindError, InvalidReplayScript, LabelforgeError
from .report_model import ScanSnapshot, format_timestamp, serialize_snapshot, snapshot_from_dict
from .store import SnapshotStore

log = logging.getLogger(__name__)


class ReplayScript:
    """Per-app queues of snapshots handed out one rescan at a time."""

    def __init__(self, queues: dict[str, list[ScanSnapshot]]):
        self._queues = {a: deque(q) for a, q in queues.items()}
        self._locks = {a: threading.Lock() for a in queues}

    @classmethod
    def from_dict(cls, obj) -> "ReplayScript":
        if not isinstance(obj, dict) or not isinstance(obj.get("apps"), dict):
            raise InvalidReplayScript('replay script must be an object with an "apps" mapping')
        queues = {}
        for app_id, entries in obj["apps"].items():
            app_id = app_id.lower()
            if not isinstance(entries, list):
                raise InvalidReplayScript(f"{app_id}: expected a list of snapshots")
            snaps = []
            for i, entry in enumerate(entries):
                if not isinstance(entry, dict):
                    raise InvalidReplayScript(f"{app_id}[{i}]: not an object")
                if not any(k in entry for k in ("sha256", "sha1", "md5", "app_id")):
                    entry = {**entry, "app_id": app_id}
                try:
                    s = snapshot_from_dict(entry)
                except LabelforgeError as exc:
                    raise InvalidReplayScript(f"{app_id}[{i}]: {exc}") from exc
                if s.app_id != app_id:
                    raise InvalidReplayScript(f"{app_id}[{i}]: snapshot belongs to {s.app_id}")
                if snaps and s.scan_date <= snaps[-1].scan_date:
                    raise InvalidReplayScript(f"{app_id}[{i}]: scan dates must increase")
                snaps.append(s)
            queues[app_id] = snaps
        return cls(queues)

    @classmethod
    def load(cls, path) -> "ReplayScript":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise InvalidReplayScript(f"cannot read replay script {path}: {exc}") from exc
        return cls.from_dict(obj)

    def __contains__(self, app_id):
        return app_id in self._queues

    def lock_for(self, app_id: str) -> threading.Lock:
        return self._locks[app_id]

    def next_for(self, app_id: str) -> ScanSnapshot | None:
        q = self._queues[app_id]
        return q.popleft() if q else None

    def remaining(self, app_id: str) -> int:
        return len(self._queues.get(app_id, ()))


def _history_body(store: SnapshotStore, app_id: str) -> bytes:
    h = store.history(app_id)
    return ("[" + ",".join(serialize_snapshot(s) for s in h.snapshots) + "]").encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    server_version = "labelforge-reports/1"
    # filled in per server by serve()
    store: SnapshotStore
    replay: ReplayScript | None

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: bytes):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, error: str, detail: str):
        self._send(status, json.dumps({"error": error, "detail": detail}, sort_keys=True).encode("utf-8"))

    def _parts(self) -> list[str]:
        path = self.path.split("?", 1)[0]
        return [p for p in path.split("/") if p]

    def do_GET(self):
        parts = self._parts()
        if parts == ["apps"]:
            return self._send(200, json.dumps(self.store.app_ids()).encode("utf-8"))
        if len(parts) >= 3 and parts[0] == "apps" and parts[2] == "reports":
            app_id = parts[1].lower()
            if app_id not in self.store:
                return self._error(404, "UnknownApp", app_id)
            if len(parts) == 3:
                return self._send(200, _history_body(self.store, app_id))
            if parts[3:] == ["latest"]:
                return self._send(200, serialize_snapshot(self.store.latest(app_id)).encode("utf-8"))
        self._error(404, "NoSuchRoute", self.path)

    def do_POST(self):
        parts = self._parts()
        if len(parts) != 3 or parts[0] != "apps" or parts[2] != "rescan":
            return self._error(404, "NoSuchRoute", self.path)
        app_id = parts[1].lower()
        replay = self.replay
        scripted = replay is not None and app_id in replay
        if not scripted and app_id not in self.store:
            return self._error(404, "UnknownApp", app_id)
        if not scripted:
            if replay is not None:
                return self._error(409, "NoMoreScriptedScans", app_id)
            # without a script a rescan is acknowledged but changes nothing
            return self._send(202, json.dumps({"accepted": True, "appended": False}, sort_keys=True).encode())
        with replay.lock_for(app_id):
            snap = replay.next_for(app_id)
            if snap is None:
                return self._error(409, "NoMoreScriptedScans", app_id)
            appended = self.store.add([snap]) == 1
        body = {"accepted": True, "appended": appended, "scan_date": format_timestamp(snap.scan_date)}
        self._send(202, json.dumps(body, sort_keys=True).encode("utf-8"))


@dataclass
class ServiceHandle:
    server: ThreadingHTTPServer
    thread: threading.Thread

    @property
    def host(self) -> str:
        return self.server.server_address[0]

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must look like HOST:PORT, got {bind!r}")
    return host or "127.0.0.1", int(port)


def make_server(store: SnapshotStore, bind: str | tuple[str, int] = "127.0.0.1:0",
                replay: ReplayScript | None = None) -> ThreadingHTTPServer:
    address = parse_bind(bind) if isinstance(bind, str) else bind
    handler = type("ReportHandler", (_Handler,), {"store": store, "replay": replay})
    try:
        server = ThreadingHTTPServer(address, handler)
    except OSError as exc:
        raise BindError(f"cannot bind {address[0]}:{address[1]}: {exc}") from exc
    server.daemon_threads = True
    return server


def serve(store: SnapshotStore, bind: str | tuple[str, int] = "127.0.0.1:0",
          replay: ReplayScript | dict | str | Path | None = None) -> ServiceHandle:
    """Start the service on a background thread. Port 0 picks a free port."""
    if isinstance(replay, dict):
        replay = ReplayScript.from_dict(replay)
    elif isinstance(replay, (str, Path)):
        replay = ReplayScript.load(replay)
    server = make_server(store, bind, replay)
    thread = threading.Thread(target=server.serve_forever, name="report-service", daemon=True)
    thread.start()
    return ServiceHandle(server, thread)
