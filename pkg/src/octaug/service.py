"""HTTP service for blinded grading sessions.

Serves study items one image at a time, records verdicts and navigation in
per-session append-only JSONL logs, and exposes an admin-only analysis
endpoint.  Grader-facing responses carry no field correlated with ground
truth: items are addressed by display index, the bytes come from opaque
item-id filenames, and every image response uses the same header set.

Every verdict is flushed and fsynced to the session log before the 204 is
sent (durable-then-ack), so an acknowledged verdict survives a crash.
Sessions are resumable: on startup the service reloads any session logs
found in the sessions directory and continues their sequence numbers.
"""

from __future__ import annotations

import json
import logging
import re
import secrets
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from . import stats
from .sessionlog import (
    FINISHED,
    STARTED,
    VERDICT,
    VERDICT_VALUES,
    VIEWED,
    EventLogWriter,
    SessionLog,
    load_session_log,
    replay,
)
from .study import StudyManifest, item_image_path, load_study_dir

log = logging.getLogger("octaug.service")


class ServiceError(Exception):
    status = 500

    def payload(self) -> dict:
        return {"error": str(self)}


class BadRequest(ServiceError):
    status = 400


class Unauthorized(ServiceError):
    status = 401


class NotFound(ServiceError):
    status = 404


class Conflict(ServiceError):
    status = 409

    def __init__(self, message: str, **fields):
        super().__init__(message)
        self.fields = fields

    def payload(self) -> dict:
        return {"error": str(self), **self.fields}


class _LiveSession:
    """One session's log, incremental state, and lazily opened writer."""

    def __init__(self, parsed: SessionLog, log_path: Path):
        self.log = parsed
        self.log_path = log_path
        self.state = replay(parsed.events)
        self.lock = threading.Lock()
        self._writer: EventLogWriter | None = None

    def append(self, kind: str, item_index=None, verdict=None, **extra):
        if self._writer is None:
            self._writer = EventLogWriter(self.log_path)
            self._writer.set_next_seq(
                self.log.events[-1].seq + 1 if self.log.events else 0
            )
        ev = self._writer.append(kind, item_index, verdict, **extra)
        self.log.events.append(ev)
        self.state.apply(ev)
        return ev

    def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            self._writer = None


class GradingService:
    """Domain logic behind the HTTP handler; usable directly in tests."""

    def __init__(
        self,
        study_dirs: list[str | Path],
        sessions_dir: str | Path,
        admin_token: str,
        session_id_source: Callable[[], str] | None = None,
    ):
        self.studies: dict[str, tuple[StudyManifest, Path]] = {}
        for d in study_dirs:
            d = Path(d)
            manifest = load_study_dir(d)
            if manifest.study_id in self.studies:
                raise ValueError(f"duplicate study id: {manifest.study_id}")
            self.studies[manifest.study_id] = (manifest, d)
        self.sessions_dir = Path(sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.admin_token = admin_token
        self._new_session_id = session_id_source or (lambda: secrets.token_hex(8))
        self._sessions: dict[str, _LiveSession] = {}
        self._lock = threading.Lock()
        self._resume_existing()

    def _resume_existing(self) -> None:
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            parsed = load_session_log(path)
            self._sessions[parsed.session_id] = _LiveSession(parsed, path)

    def close(self) -> None:
        with self._lock:
            for s in self._sessions.values():
                s.close()

    # -- session lifecycle ------------------------------------------------

    def create_session(self, study_id: str, grader_id: str) -> dict:
        if not grader_id or not isinstance(grader_id, str):
            raise BadRequest("grader_id must be a non-empty string")
        with self._lock:
            if study_id not in self.studies:
                raise NotFound(f"unknown study: {study_id}")
            manifest, _ = self.studies[study_id]
            session_id = self._new_session_id()
            while session_id in self._sessions:
                session_id = self._new_session_id()
            parsed = SessionLog(
                session_id=session_id,
                grader_id=grader_id,
                study_id=study_id,
                item_count=manifest.item_count,
                events=[],
            )
            live = _LiveSession(parsed, self.sessions_dir / f"{session_id}.jsonl")
            self._sessions[session_id] = live
        with live.lock:
            live.append(
                STARTED,
                session_id=session_id,
                grader_id=grader_id,
                study_id=study_id,
                item_count=manifest.item_count,
            )
        return {"session_id": session_id, "item_count": manifest.item_count}

    def _session(self, session_id: str) -> _LiveSession:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise NotFound(f"unknown session: {session_id}") from None

    def _check_index(self, live: _LiveSession, index: int) -> None:
        if not 0 <= index < live.log.item_count:
            raise NotFound(
                f"item index {index} out of range [0, {live.log.item_count})"
            )

    def get_item(self, session_id: str, index: int) -> bytes:
        live = self._session(session_id)
        self._check_index(live, index)
        manifest, study_dir = self.studies[live.log.study_id]
        item = manifest.item_at_display_index(index)
        data = item_image_path(study_dir, item.item_id).read_bytes()
        with live.lock:
            if live.state.finished:
                raise Conflict("session already finished")
            live.append(VIEWED, item_index=index)
        return data

    def put_verdict(self, session_id: str, index: int, verdict: str) -> None:
        live = self._session(session_id)
        self._check_index(live, index)
        if verdict not in VERDICT_VALUES:
            raise BadRequest(
                f"verdict must be one of {list(VERDICT_VALUES)}, got {verdict!r}"
            )
        with live.lock:
            if live.state.finished:
                raise Conflict("session already finished")
            live.append(VERDICT, item_index=index, verdict=verdict)

    def get_state(self, session_id: str) -> dict:
        live = self._session(session_id)
        with live.lock:
            return {
                "cursor": live.state.cursor,
                "answered": sorted(live.state.verdicts),
                "item_count": live.log.item_count,
                "finished": live.state.finished,
            }

    def finish(self, session_id: str) -> dict:
        live = self._session(session_id)
        with live.lock:
            if live.state.finished:
                raise Conflict("session already finished")
            missing = [
                i for i in range(live.log.item_count) if i not in live.state.verdicts
            ]
            if missing:
                raise Conflict("incomplete session", missing=missing)
            live.append(FINISHED)
            counts = {v: 0 for v in VERDICT_VALUES}
            for verdict in live.state.verdicts.values():
                counts[verdict] += 1
            return {
                "session_id": session_id,
                "item_count": live.log.item_count,
                "counts": counts,
            }

    # -- admin ------------------------------------------------------------

    def check_admin(self, token: str | None) -> None:
        if token is None or not secrets.compare_digest(token, self.admin_token):
            raise Unauthorized("missing or invalid admin token")

    def results(self, study_id: str) -> stats.StudyReport:
        with self._lock:
            if study_id not in self.studies:
                raise NotFound(f"unknown study: {study_id}")
            manifest, _ = self.studies[study_id]
            finished = [
                s.log
                for s in self._sessions.values()
                if s.log.study_id == study_id and s.state.finished
            ]
        return stats.analyze_study(manifest, finished)


_ROUTES = (
    ("POST", re.compile(r"/studies/([^/]+)/sessions"), "create_session"),
    ("GET", re.compile(r"/sessions/([^/]+)/items/(\d+)"), "get_item"),
    ("PUT", re.compile(r"/sessions/([^/]+)/items/(\d+)/verdict"), "put_verdict"),
    ("GET", re.compile(r"/sessions/([^/]+)/state"), "get_state"),
    ("POST", re.compile(r"/sessions/([^/]+)/finish"), "finish"),
    ("GET", re.compile(r"/admin/studies/([^/]+)/results"), "admin_results"),
)


class GradingRequestHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "octaug"
    sys_version = ""

    @property
    def service(self) -> GradingService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _dispatch(self, method: str) -> None:
        path, _, query = self.path.partition("?")
        try:
            for verb, pattern, name in _ROUTES:
                if verb != method:
                    continue
                m = pattern.fullmatch(path)
                if m:
                    getattr(self, "_" + name)(*m.groups(), query=query)
                    return
            raise NotFound(f"no such endpoint: {method} {path}")
        except ServiceError as e:
            self._send_json(e.status, e.payload())
        except Exception:
            log.exception("unhandled error serving %s %s", method, path)
            self._send_json(500, {"error": "internal error"})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_OPTIONS(self):
        # CORS preflight, so a browser-served client on another origin works
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- endpoint implementations ------------------------------------------

    def _create_session(self, study_id: str, query: str = ""):
        body = self._read_json()
        grader_id = body.get("grader_id")
        if not isinstance(grader_id, str):
            raise BadRequest("body must carry a string grader_id")
        self._send_json(200, self.service.create_session(study_id, grader_id))

    def _get_item(self, session_id: str, index: str, query: str = ""):
        data = self.service.get_item(session_id, int(index))
        self.send_response(200)
        self._cors()
        self.send_header("Content-Type", "image/png")
        self.send_header("Content-Length", str(len(data)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(data)

    def _put_verdict(self, session_id: str, index: str, query: str = ""):
        body = self._read_json()
        self.service.put_verdict(session_id, int(index), body.get("verdict"))
        self.send_response(204)
        self._cors()
        self.send_header("Content-Length", "0")
        self.end_headers()

    def _get_state(self, session_id: str, query: str = ""):
        self._send_json(200, self.service.get_state(session_id))

    def _finish(self, session_id: str, query: str = ""):
        self._send_json(200, self.service.finish(session_id))

    def _admin_results(self, study_id: str, query: str = ""):
        self.service.check_admin(self.headers.get("X-Admin-Token"))
        report = self.service.results(study_id)
        if "format=text" in query:
            data = report.to_text().encode("utf-8")
            self.send_response(200)
            self._cors()
            self.send_header("Content-Type", "text/plain; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        else:
            self._send_json(200, report.to_json_dict())

    # -- plumbing -----------------------------------------------------------

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, X-Admin-Token")

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise BadRequest("request body required")
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as e:
            raise BadRequest(f"malformed JSON body: {e}") from None
        if not isinstance(body, dict):
            raise BadRequest("JSON body must be an object")
        return body

    def _send_json(self, status: int, obj: dict) -> None:
        data = (json.dumps(obj) + "\n").encode("utf-8")
        self.send_response(status)
        self._cors()
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


def make_server(
    service: GradingService, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """Bind a threading HTTP server over `service` (port 0 picks a free one)."""
    httpd = ThreadingHTTPServer((host, port), GradingRequestHandler)
    httpd.service = service  # type: ignore[attr-defined]
    httpd.daemon_threads = True
    return httpd


def serve(
    study_dirs: list[str | Path],
    sessions_dir: str | Path,
    admin_token: str,
    host: str = "127.0.0.1",
    port: int = 8077,
) -> None:
    """Blocking entry point used by the CLI."""
    service = GradingService(study_dirs, sessions_dir, admin_token)
    httpd = make_server(service, host, port)
    addr = httpd.server_address
    print(f"serving {len(service.studies)} studies on http://{addr[0]}:{addr[1]}")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
        service.close()
