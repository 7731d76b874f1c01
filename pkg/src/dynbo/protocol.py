"""Client side of the external scoring protocol.

Transport is a stream of newline-delimited UTF-8 JSON objects, one object per
line, over either a TCP socket or the stdin/stdout of a spawned subprocess.
The conversation is strictly serial: one outstanding request at a time, each
response echoing the request id.

Records:

    handshake  -> {"type": "hello", "version": 1}
    handshake <-  {"type": "hello", "version": 1, "score_lo": -1.0, "score_hi": 1.0}
    request   ->  {"type": "score", "id": N, "frame": "<path>", "cx": .., "cy": ..,
                   "w": .., "h": .., "scale": ..}
    response  <-  {"type": "score", "id": N, "value": ..}
    error     <-  {"type": "error", "id": N, "message": "..."}

An extension record {"type": "exemplar", "id": N, "frame": ..., "cx": ...}
pins the exemplar crop server-side before scoring starts. Unknown fields are
ignored on receipt.
"""

from __future__ import annotations

import json
import select
import socket
import subprocess

from .geometry import BoundingBox
from .similarity import Frame, SimilarityOracle

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 5.0


class ProtocolError(Exception):
    """Base class for scoring-protocol failures."""


class HandshakeError(ProtocolError):
    pass


class MalformedResponseError(ProtocolError):
    pass


class ResponseTimeout(ProtocolError):
    pass


class ConnectionClosedError(ProtocolError):
    pass


class RemoteScoreError(ProtocolError):
    """The server answered with an error record."""


class _SocketChannel:
    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        self._buf = b""

    def send_line(self, line: str) -> None:
        try:
            self._sock.sendall(line.encode("utf-8") + b"\n")
        except OSError as exc:
            raise ConnectionClosedError(f"send failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        self._sock.settimeout(timeout)
        while b"\n" not in self._buf:
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise ResponseTimeout(f"no response within {timeout:g}s") from None
            except OSError as exc:
                raise ConnectionClosedError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ConnectionClosedError("connection closed by peer")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class _PipeChannel:
    def __init__(self, proc: subprocess.Popen) -> None:
        self._proc = proc
        self._buf = b""

    def send_line(self, line: str) -> None:
        if self._proc.poll() is not None or self._proc.stdin is None:
            raise ConnectionClosedError("subprocess has exited")
        try:
            self._proc.stdin.write(line.encode("utf-8") + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ConnectionClosedError(f"send failed: {exc}") from exc

    def recv_line(self, timeout: float) -> str:
        out = self._proc.stdout
        assert out is not None
        while b"\n" not in self._buf:
            ready, _, _ = select.select([out], [], [], timeout)
            if not ready:
                raise ResponseTimeout(f"no response within {timeout:g}s")
            chunk = out.read1(65536)
            if not chunk:
                raise ConnectionClosedError("subprocess closed its stdout")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8")

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()


class ScoreClient:
    """Serial request/response client for the scoring protocol."""

    def __init__(self, channel, timeout: float = DEFAULT_TIMEOUT) -> None:
        self._channel = channel
        self.timeout = timeout
        self.score_lo = -1.0
        self.score_hi = 1.0
        self._next_id = 0
        self._ready = False

    @classmethod
    def connect_tcp(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "ScoreClient":
        sock = socket.create_connection((host, port), timeout=timeout)
        return cls(_SocketChannel(sock), timeout)

    @classmethod
    def spawn_stdio(cls, command: list[str], timeout: float = DEFAULT_TIMEOUT) -> "ScoreClient":
        proc = subprocess.Popen(command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(_PipeChannel(proc), timeout)

    def handshake(self) -> None:
        self._channel.send_line(json.dumps({"type": "hello", "version": PROTOCOL_VERSION}))
        reply = self._read_record()
        if reply.get("type") != "hello":
            raise HandshakeError(f"expected hello record, got {reply.get('type')!r}")
        if reply.get("version") != PROTOCOL_VERSION:
            raise HandshakeError(
                f"protocol version mismatch: ours {PROTOCOL_VERSION}, server {reply.get('version')!r}"
            )
        self.score_lo = float(reply.get("score_lo", -1.0))
        self.score_hi = float(reply.get("score_hi", 1.0))
        self._ready = True

    def _read_record(self) -> dict:
        line = self._channel.recv_line(self.timeout)
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponseError(f"response is not valid JSON: {line!r}") from exc
        if not isinstance(record, dict):
            raise MalformedResponseError(f"response is not a JSON object: {line!r}")
        return record

    def query(self, record: dict) -> dict:
        """Send one request record and return its matching response record."""
        if not self._ready:
            raise HandshakeError("handshake has not completed")
        req_id = self._next_id
        self._next_id += 1
        record = dict(record, id=req_id)
        self._channel.send_line(json.dumps(record))
        reply = self._read_record()
        if reply.get("id") != req_id:
            raise MalformedResponseError(
                f"response id {reply.get('id')!r} does not echo request id {req_id}"
            )
        if reply.get("type") == "error":
            raise RemoteScoreError(str(reply.get("message", "unspecified server error")))
        return reply

    def score(self, frame_path: str, box: BoundingBox, scale: float = 1.0) -> float:
        reply = self.query(
            {
                "type": "score",
                "frame": frame_path,
                "cx": box.cx,
                "cy": box.cy,
                "w": box.w,
                "h": box.h,
                "scale": scale,
            }
        )
        if reply.get("type") != "score" or "value" not in reply:
            raise MalformedResponseError(f"unexpected response record: {reply!r}")
        return float(reply["value"])

    def set_exemplar(self, frame_path: str, box: BoundingBox) -> None:
        self.query(
            {
                "type": "exemplar",
                "frame": frame_path,
                "cx": box.cx,
                "cy": box.cy,
                "w": box.w,
                "h": box.h,
            }
        )

    def close(self) -> None:
        self._channel.close()


def external_query(client: ScoreClient, request: dict) -> float:
    """Round-trip one score request; returns the reported value."""
    reply = client.query(request)
    if "value" not in reply:
        raise MalformedResponseError(f"response carries no value: {reply!r}")
    return float(reply["value"])


class ExternalOracle(SimilarityOracle):
    """Similarity oracle that defers to a remote scorer over the protocol.

    The client must have completed its handshake; the advertised score range
    becomes the oracle's range. Frames must carry a path the server can read.
    """

    def __init__(self, client: ScoreClient) -> None:
        super().__init__()
        self.client = client
        self.score_lo = client.score_lo
        self.score_hi = client.score_hi

    def set_exemplar(self, frame: Frame, box: BoundingBox) -> None:
        if frame.path is None:
            raise ValueError("external scoring requires frames with a path")
        self.client.set_exemplar(frame.path, box)

    def _score(self, frame: Frame, box: BoundingBox, scale: float) -> float:
        if frame.path is None:
            raise ValueError("external scoring requires frames with a path")
        return self.client.score(frame.path, box, scale)
