"""HTTP oracle: a JSON client with retries, and a loopback server for the toy model.

Wire format (POST, application/json)::

    request:  {"audio_b64": <base64 little-endian int16 PCM>,
               "sample_rate": 16000, "target": "<phrase>"}
    response: {"loss": <number> | "inf", "transcript": "<phrase>"}
"""
from __future__ import annotations

import base64
import json
import logging
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import requests

from ..audio_io import AudioBuffer, to_pcm16
from ..ctc import validate_phrase
from .oracle import (OracleConnectionError, OracleError, OracleResponse, OracleTimeout,
                     ProtocolError, RemoteError)

log = logging.getLogger(__name__)


def encode_request(audio: AudioBuffer, target: str) -> dict:
    pcm = to_pcm16(audio.samples)
    return {
        "audio_b64": base64.b64encode(pcm.tobytes()).decode("ascii"),
        "sample_rate": audio.sample_rate,
        "target": target,
    }


def decode_request(payload: dict) -> tuple[AudioBuffer, str]:
    try:
        raw = base64.b64decode(payload["audio_b64"], validate=True)
        rate = int(payload["sample_rate"])
        target = validate_phrase(payload["target"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad request: {exc}") from exc
    if len(raw) % 2:
        raise ValueError("bad request: odd number of PCM bytes")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64), rate), target


def encode_response(resp: OracleResponse) -> dict:
    loss = resp.loss if math.isfinite(resp.loss) else "inf"
    return {"loss": loss, "transcript": resp.transcript}


def decode_response(body: bytes) -> OracleResponse:
    try:
        data = json.loads(body)
        loss = data["loss"]
        transcript = data["transcript"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed oracle response: {exc}") from exc
    if loss == "inf":
        loss = math.inf
    elif isinstance(loss, bool) or not isinstance(loss, (int, float)):
        raise ProtocolError(f"loss must be a number or 'inf', got {loss!r}")
    loss = float(loss)
    if math.isnan(loss) or loss < 0:
        raise ProtocolError(f"loss must be >= 0, got {loss}")
    if not isinstance(transcript, str):
        raise ProtocolError("transcript must be a string")
    try:
        validate_phrase(transcript)
    except ValueError as exc:
        raise ProtocolError(str(exc)) from exc
    return OracleResponse(loss, transcript)


class HttpOracle:
    """Oracle backed by a remote scoring endpoint.

    Retryable failures (timeouts, connection errors, 5xx/429) are retried
    up to ``retries`` more times with exponential backoff. Safe to share
    between threads: each thread keeps its own session.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, retries: int = 2,
                 backoff: float = 0.05):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._local = threading.local()

    def _session(self) -> requests.Session:
        s = getattr(self._local, "session", None)
        if s is None:
            s = self._local.session = requests.Session()
        return s

    def _post_once(self, payload: dict) -> OracleResponse:
        try:
            r = self._session().post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.Timeout as exc:
            raise OracleTimeout(f"oracle timed out after {self.timeout}s") from exc
        except requests.ConnectionError as exc:
            raise OracleConnectionError(f"cannot reach oracle at {self.endpoint}: {exc}") from exc
        if r.status_code != 200:
            raise RemoteError(r.status_code, r.text)
        return decode_response(r.content)

    def score(self, audio: AudioBuffer, target: str) -> OracleResponse:
        payload = encode_request(audio, target)
        attempt = 0
        while True:
            try:
                return self._post_once(payload)
            except OracleError as exc:
                if not exc.retryable or attempt >= self.retries:
                    raise
                log.warning("oracle call failed (%s); retry %d/%d", exc, attempt + 1, self.retries)
                time.sleep(self.backoff * 2 ** attempt)
                attempt += 1


def _make_handler(oracle):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _send(self, status: int, body: dict):
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path.rstrip("/") in ("", "/health"):
                self._send(200, {"status": "ok"})
            else:
                self._send(404, {"error": "not found"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                payload = json.loads(self.rfile.read(length))
                audio, target = decode_request(payload)
            except ValueError as exc:
                self._send(400, {"error": str(exc)})
                return
            try:
                resp = oracle.score(audio, target)
            except OracleError as exc:
                self._send(422, {"error": str(exc)})
                return
            self._send(200, encode_response(resp))

        def log_message(self, fmt, *args):
            log.debug("%s - %s", self.address_string(), fmt % args)

    return Handler


def make_server(oracle, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """HTTP server exposing ``oracle.score``; port 0 picks a free port."""
    server = ThreadingHTTPServer((host, port), _make_handler(oracle))
    server.daemon_threads = True
    return server


class BackgroundServer:
    """Run an oracle server on a daemon thread (context manager)."""

    def __init__(self, oracle, host: str = "127.0.0.1", port: int = 0):
        self.server = make_server(oracle, host, port)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/score"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join()
