"""Network front end for the monitor service.

Two listeners share one MonitorService:

- an HTTP API (status, history, alerts with SSE push, acknowledgment,
  config, snapshot upload, static dashboard files) — the frozen surface
  documented in docs/api.md;
- a persistent-connection TCP ingest port carrying length-delimited JSON
  records: each frame is the record's UTF-8 byte length as ASCII digits,
  a newline, then the record.

Every ingest record is wrapped with {"device_id": ..., "seq": ...}; the
first record of a stream is the trace header (plus "token"), and a final
{"end": true} record closes the device's pipeline.
"""

from __future__ import annotations

import json
import queue
import socket
import socketserver
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import ActimonError, InputError, StreamError
from .service import MonitorService
from .signals import canonical_json


def _frame(payload: bytes) -> bytes:
    return str(len(payload)).encode() + b"\n" + payload


def read_frame(rfile) -> bytes | None:
    """Read one length-delimited frame; None on clean EOF."""
    header = b""
    while not header.endswith(b"\n"):
        ch = rfile.read(1)
        if not ch:
            return None
        header += ch
    try:
        length = int(header.strip())
    except ValueError as exc:
        raise StreamError(f"bad frame length {header!r}") from exc
    payload = b""
    while len(payload) < length:
        chunk = rfile.read(length - len(payload))
        if not chunk:
            raise StreamError("connection closed mid-frame")
        payload += chunk
    return payload


class IngestHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        service: MonitorService = self.server.service  # type: ignore[attr-defined]
        authed: set[str] = set()
        while True:
            try:
                payload = read_frame(self.rfile)
            except StreamError:
                break
            if payload is None:
                break
            try:
                rec = json.loads(payload)
                device_id = str(rec["device_id"])
                if device_id not in authed:
                    service.authenticate(device_id, rec.get("token", ""))
                    authed.add(device_id)
                ack = service.ingest_records(device_id, [rec])
            except (ActimonError, KeyError, ValueError, json.JSONDecodeError) as exc:
                reply = {"ok": False, "error": str(exc)}
                self.wfile.write(_frame(canonical_json(reply).encode()))
                continue
            self.wfile.write(_frame(canonical_json(ack).encode()))


class IngestServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, service: MonitorService):
        super().__init__(addr, IngestHandler)
        self.service = service


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "actimon"

    @property
    def service(self) -> MonitorService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    # -- helpers -------------------------------------------------------------

    def _send_json(self, obj, status: int = 200) -> None:
        body = (json.dumps(obj) + "\n").encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, exc: Exception, status: int = 400) -> None:
        if isinstance(exc, InputError):
            status = 404
        self._send_json({"error": str(exc)}, status=status)

    def _query(self) -> tuple[str, dict]:
        parsed = urllib.parse.urlparse(self.path)
        params = {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}
        return parsed.path, params

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    # -- routes --------------------------------------------------------------

    def do_GET(self) -> None:
        path, params = self._query()
        try:
            if path == "/api/devices":
                self._send_json([self.service.status(d) for d in self.service.device_ids()])
            elif path.startswith("/api/devices/") and path.endswith("/status"):
                device_id = path.split("/")[3]
                self._send_json(self.service.status(device_id))
            elif path.startswith("/api/devices/") and path.endswith("/history"):
                device_id = path.split("/")[3]
                self._send_json(
                    self.service.query_history(
                        device_id,
                        t_start=_opt_float(params.get("t_start")),
                        t_end=_opt_float(params.get("t_end")),
                        activity_class=params.get("activity_class"),
                    )
                )
            elif path == "/api/alerts":
                self._send_json(
                    self.service.query_alerts(
                        device_id=params.get("device_id"),
                        kind=params.get("kind"),
                        since=_opt_float(params.get("since")),
                        unacked_only=params.get("unacked") == "true",
                    )
                )
            elif path == "/api/alerts/stream":
                self._stream_alerts()
            elif path == "/api/config":
                self._send_json(self.service.get_config())
            else:
                self._serve_static(path)
        except ActimonError as exc:
            self._send_error_json(exc)

    def do_POST(self) -> None:
        path, params = self._query()
        try:
            if path.startswith("/api/alerts/") and path.endswith("/ack"):
                alert_id = path.split("/")[3]
                note = ""
                body = self._body()
                if body:
                    note = json.loads(body).get("note", "")
                self._send_json(self.service.acknowledge(alert_id, note))
            elif path == "/api/ingest/snapshot":
                self._ingest_snapshot(params)
            else:
                self._send_json({"error": "not found"}, status=404)
        except (ActimonError, json.JSONDecodeError, KeyError, ValueError) as exc:
            self._send_error_json(exc)

    def do_PUT(self) -> None:
        path, _ = self._query()
        try:
            if path == "/api/config":
                doc = json.loads(self._body())
                self._send_json(self.service.set_config(doc))
            else:
                self._send_json({"error": "not found"}, status=404)
        except (ActimonError, json.JSONDecodeError) as exc:
            self._send_error_json(exc)

    # -- route bodies ----------------------------------------------------------

    def _ingest_snapshot(self, params: dict) -> None:
        token = self.headers.get("X-Device-Token", "")
        records = []
        device_id = None
        for line in self._body().decode().splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            rid = str(rec.get("device_id", ""))
            if device_id is None:
                device_id = rid
            elif rid != device_id:
                raise StreamError("snapshot mixes devices")
            records.append(rec)
        if device_id is None:
            raise StreamError("empty snapshot")
        self.service.authenticate(device_id, token)
        ack = self.service.ingest_records(device_id, records)
        if params.get("final") == "true":
            ack["finished"] = True
            self.service.ingest_records(
                device_id, [{"device_id": device_id, "seq": 2**62, "end": True}]
            )
        self._send_json(ack)

    def _stream_alerts(self) -> None:
        q = self.service.subscribe_alerts()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            while True:
                try:
                    alert = q.get(timeout=5.0)
                    data = f"event: alert\ndata: {canonical_json(alert)}\n\n"
                except queue.Empty:
                    data = ": keepalive\n\n"
                self.wfile.write(data.encode())
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            self.service.unsubscribe_alerts(q)

    def _serve_static(self, path: str) -> None:
        root = getattr(self.server, "static_dir", None)
        if root is None:
            self._send_json({"error": "not found"}, status=404)
            return
        name = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, status=404)
            return
        body = target.read_bytes()
        ctype = {
            ".html": "text/html",
            ".js": "text/javascript",
            ".css": "text/css",
            ".map": "application/json",
        }.get(target.suffix, "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def _opt_float(v: str | None) -> float | None:
    return None if v is None else float(v)


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr, service: MonitorService, static_dir: Path | None = None):
        super().__init__(addr, ApiHandler)
        self.service = service
        self.static_dir = static_dir


class MonitorServer:
    """Runs the HTTP API and TCP ingest listeners on background threads."""

    def __init__(
        self,
        service: MonitorService,
        http_port: int = 8321,
        ingest_port: int = 8322,
        host: str = "127.0.0.1",
        static_dir: Path | None = None,
    ):
        self.service = service
        self.api = ApiServer((host, http_port), service, static_dir)
        self.ingest = IngestServer((host, ingest_port), service)
        self._threads: list[threading.Thread] = []

    @property
    def http_port(self) -> int:
        return self.api.server_address[1]

    @property
    def ingest_port(self) -> int:
        return self.ingest.server_address[1]

    def start(self) -> None:
        for srv in (self.api, self.ingest):
            thread = threading.Thread(target=srv.serve_forever, daemon=True)
            thread.start()
            self._threads.append(thread)

    def stop(self) -> None:
        for srv in (self.api, self.ingest):
            srv.shutdown()
            srv.server_close()

    def serve_forever(self) -> None:
        self.start()
        try:
            for thread in self._threads:
                thread.join()
        except KeyboardInterrupt:
            self.stop()


# -- streaming client ----------------------------------------------------------


class StreamClient:
    """Length-delimited record stream to the ingest port (the phone side)."""

    def __init__(self, host: str, port: int):
        self.sock = socket.create_connection((host, port))
        self.rfile = self.sock.makefile("rb")

    def send(self, record: dict) -> dict:
        payload = canonical_json(record).encode()
        self.sock.sendall(_frame(payload))
        reply = read_frame(self.rfile)
        if reply is None:
            raise StreamError("server closed connection")
        return json.loads(reply)

    def close(self) -> None:
        try:
            self.rfile.close()
        finally:
            self.sock.close()


def replay_trace(
    host: str,
    port: int,
    stream,
    frames=None,
    token: str = "",
    device_id: str | None = None,
) -> int:
    """Replay a recorded trace over the ingest connection as a device would.

    Samples and audio frames are interleaved in time order with monotone
    sequence numbers; an end record closes the stream.  Returns the number
    of records accepted by the server.
    """
    device_id = device_id or stream.device_id
    client = StreamClient(host, port)
    accepted = 0
    try:
        seq = 0
        header = {
            "device_id": device_id,
            "seq": seq,
            "token": token,
            "rate_hz": stream.rate_hz,
            "unit": stream.unit,
        }
        ack = client.send(header)
        accepted += ack.get("accepted", 0)
        events: list[tuple[float, int, dict]] = []
        for t, (ax, ay, az) in zip(stream.t, stream.xyz):
            events.append(
                (float(t), 1, {"t": float(t), "ax": float(ax), "ay": float(ay), "az": float(az)})
            )
        for fr in frames or []:
            events.append(
                (
                    float(fr.t_start),
                    0,
                    {
                        "t_start": float(fr.t_start),
                        "rate_hz": float(fr.rate_hz),
                        "samples": [float(v) for v in fr.samples],
                    },
                )
            )
        events.sort(key=lambda e: (e[0], e[1]))
        for _, _, rec in events:
            seq += 1
            rec["device_id"] = device_id
            rec["seq"] = seq
            ack = client.send(rec)
            if not ack.get("ok"):
                raise StreamError(f"server rejected record: {ack}")
            accepted += ack.get("accepted", 0)
        ack = client.send({"device_id": device_id, "seq": seq + 1, "end": True})
        accepted += ack.get("accepted", 0)
    finally:
        client.close()
    return accepted
