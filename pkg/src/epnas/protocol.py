"""Client side of the external-trainer wire protocol.

Newline-delimited JSON over a byte stream, either the stdio pipes of a
spawned worker subprocess or a TCP connection:

    -> {"type": "hello", "version": 1, "space": "macro"|"micro"}
    <- {"type": "ready", "version": 1}
    -> {"type": "eval", "id": n, "arch": {...}, "epochs": e,
        "channels": c, "stack_n": s}
    <- {"type": "result", "id": n, "accuracy": a}      # a in [0, 1]
    -> {"type": "shutdown"}

One request is in flight at a time and eval ids strictly increase. A
worker may answer any request with {"type": "error", "id": ...,
"message": ...}, which surfaces here as :class:`ProtocolError`.
"""

from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading

from .hashing import STUB_SCORE_SEED, fnv1a64_unit

PROTOCOL_VERSION = 1

DEFAULT_TIMEOUT = 3600.0


class WorkerError(RuntimeError):
    """Base class for failures talking to an external worker."""


class TransportError(WorkerError):
    """The byte stream died (EOF, broken pipe, refused connection)."""


class ProtocolError(WorkerError):
    """The worker sent something the protocol does not allow."""


class WorkerTimeoutError(WorkerError):
    """No reply within the per-request timeout."""


def stub_score(arch_json: dict) -> float:
    """Deterministic hash score of a canonical arch JSON document.

    The reference worker's stub scorer computes the identical function, so
    engine and worker can be compared bit for bit across the wire.
    """
    text = json.dumps(arch_json, sort_keys=True, separators=(",", ":"))
    return fnv1a64_unit(text.encode(), STUB_SCORE_SEED)


class _LineReader(threading.Thread):
    """Pumps decoded lines from a byte stream into a queue.

    A ``None`` sentinel marks EOF. Decouples blocking reads from the
    caller so per-request timeouts work uniformly for pipes and sockets.
    """

    def __init__(self, fh):
        super().__init__(daemon=True)
        self._fh = fh
        self.lines: queue.Queue = queue.Queue()

    def run(self) -> None:
        try:
            for raw in self._fh:
                self.lines.put(raw.decode("utf-8", errors="replace"))
        except (OSError, ValueError):
            pass
        self.lines.put(None)


class WorkerClient:
    """Blocking single-connection protocol client."""

    def __init__(self, reader_fh, writer, timeout: float = DEFAULT_TIMEOUT, process=None):
        self._writer = writer
        self._process = process
        self._sock = None
        self.timeout = timeout
        self._next_id = 0
        self._closed = False
        self._reader = _LineReader(reader_fh)
        self._reader.start()

    # -- constructors

    @classmethod
    def spawn(cls, cmd, timeout: float = DEFAULT_TIMEOUT) -> "WorkerClient":
        """Start a worker subprocess and talk over its stdio."""
        argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        try:
            proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise TransportError(f"cannot start worker {argv!r}: {exc}") from exc
        return cls(proc.stdout, proc.stdin, timeout=timeout, process=proc)

    @classmethod
    def connect_tcp(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "WorkerClient":
        try:
            sock = socket.create_connection((host, port), timeout=30.0)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        sock.settimeout(None)
        client = cls(sock.makefile("rb"), sock.makefile("wb"), timeout=timeout)
        client._sock = sock
        return client

    # -- raw line IO (also used by conformance checks)

    def send_raw_line(self, text: str) -> None:
        if self._closed:
            raise TransportError("connection already closed")
        try:
            self._writer.write((text + "\n").encode())
            self._writer.flush()
        except (OSError, ValueError) as exc:
            raise TransportError(f"write failed: {exc}") from exc

    def send_msg(self, msg: dict) -> None:
        self.send_raw_line(json.dumps(msg, separators=(",", ":")))

    def recv_msg(self, timeout: float | None = None) -> dict:
        limit = self.timeout if timeout is None else timeout
        try:
            line = self._reader.lines.get(timeout=limit)
        except queue.Empty:
            raise WorkerTimeoutError(f"no reply within {limit} s") from None
        if line is None:
            raise TransportError("connection closed by worker")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"reply is not valid JSON: {line!r}") from exc
        if not isinstance(msg, dict) or "type" not in msg:
            raise ProtocolError(f"reply is not a protocol message: {line!r}")
        return msg

    # -- protocol operations

    def handshake(self, space: str) -> None:
        if space not in ("macro", "micro"):
            raise ValueError(f"space must be 'macro' or 'micro', got {space!r}")
        self.send_msg({"type": "hello", "version": PROTOCOL_VERSION, "space": space})
        reply = self.recv_msg()
        if reply.get("type") == "error":
            raise ProtocolError(f"worker rejected hello: {reply.get('message')}")
        if reply.get("type") != "ready" or reply.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"expected ready v{PROTOCOL_VERSION}, got {reply!r}")

    def evaluate(self, arch_json: dict, epochs: int, channels: int, stack_n: int) -> float:
        self._next_id += 1
        req_id = self._next_id
        self.send_msg(
            {
                "type": "eval",
                "id": req_id,
                "arch": arch_json,
                "epochs": epochs,
                "channels": channels,
                "stack_n": stack_n,
            }
        )
        reply = self.recv_msg()
        if reply.get("type") == "error":
            raise ProtocolError(f"worker error: {reply.get('message')}")
        if reply.get("type") != "result":
            raise ProtocolError(f"expected result, got {reply!r}")
        if reply.get("id") != req_id:
            raise ProtocolError(f"reply id {reply.get('id')} != request id {req_id}")
        acc = reply.get("accuracy")
        if isinstance(acc, bool) or not isinstance(acc, (int, float)):
            raise ProtocolError(f"accuracy is not a number: {acc!r}")
        acc = float(acc)
        if not 0.0 <= acc <= 1.0:
            raise ProtocolError(f"accuracy {acc} outside [0, 1]")
        return acc

    def shutdown(self) -> None:
        try:
            self.send_msg({"type": "shutdown"})
        except TransportError:
            pass
        self.close()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._writer.close()
        except (OSError, ValueError):
            pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._process is not None:
            try:
                self._process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()

    def __enter__(self) -> "WorkerClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
