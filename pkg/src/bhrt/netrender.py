"""Multi-process rendering over the BHRT framed protocol.

Every frame is a 10-byte header followed by the payload::

    magic "BHRT" | version u8 | msg_type u8 | payload_len u32 (big-endian)

A worker connects, both sides exchange HELLO, the coordinator sends one JOB
(scene text, background PPM and a static scanline band) and the worker
streams back ROWS chunks followed by DONE.  ERROR carries a numeric code and
a message in either direction.
"""

from __future__ import annotations

import logging
import socket
import struct
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from .config import scene_from_text, scene_to_text
from .environment import ImageBuffer, PPMError, load_ppm, save_ppm
from .geodesic import TraceError
from .render import BandAssignment, SceneConfig, make_bands, render_rows

log = logging.getLogger(__name__)

MAGIC = b"BHRT"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
MAX_CHUNK_ROWS = 64

HELLO, JOB, ROWS, DONE, ERROR = 1, 2, 3, 4, 5

# ERROR codes
ERR_PROTOCOL = 1
ERR_RENDER = 2
ERR_INTERNAL = 3


class ProtocolError(Exception):
    pass


class BadMagic(ProtocolError):
    pass


class BadVersion(ProtocolError):
    pass


class UnknownMsgType(ProtocolError):
    pass


class LengthMismatch(ProtocolError):
    pass


class WorkerFailed(ProtocolError):
    """A worker reported an error, hung up, or broke the protocol."""

    def __init__(self, worker_id, reason):
        super().__init__(f"worker {worker_id}: {reason}")
        self.worker_id = worker_id
        self.reason = reason


@dataclass(frozen=True)
class Hello:
    version: int = VERSION


@dataclass(frozen=True)
class Job:
    scene_text: str
    background_ppm: bytes
    band: BandAssignment


@dataclass(frozen=True)
class Rows:
    row_start: int
    row_count: int
    pixels: bytes


@dataclass(frozen=True)
class Done:
    pass


@dataclass(frozen=True)
class Error:
    code: int
    text: str


Message = Union[Hello, Job, Rows, Done, Error]

_JOB_HEAD = struct.Struct(">IIII")
_ROWS_HEAD = struct.Struct(">II")
_ERR_HEAD = struct.Struct(">H")


def _payload(msg: Message):
    if isinstance(msg, Hello):
        return HELLO, bytes([msg.version])
    if isinstance(msg, Job):
        text = msg.scene_text.encode("utf-8")
        b = msg.band
        return JOB, _JOB_HEAD.pack(b.worker_id, b.row_start, b.row_end, len(text)) + text + msg.background_ppm
    if isinstance(msg, Rows):
        return ROWS, _ROWS_HEAD.pack(msg.row_start, msg.row_count) + bytes(msg.pixels)
    if isinstance(msg, Done):
        return DONE, b""
    if isinstance(msg, Error):
        return ERROR, _ERR_HEAD.pack(msg.code) + msg.text.encode("utf-8")
    raise TypeError(f"not a protocol message: {msg!r}")


def encode_frame(msg: Message) -> bytes:
    kind, payload = _payload(msg)
    return HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


def _check_header(header: bytes):
    magic, version, kind, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    if kind not in (HELLO, JOB, ROWS, DONE, ERROR):
        raise UnknownMsgType(f"unknown message type {kind}")
    return kind, length


def _decode_payload(kind: int, payload: bytes) -> Message:
    if kind == HELLO:
        if len(payload) != 1:
            raise LengthMismatch(f"HELLO payload is {len(payload)} bytes, expected 1")
        return Hello(payload[0])
    if kind == JOB:
        if len(payload) < _JOB_HEAD.size:
            raise LengthMismatch("JOB payload too short")
        wid, start, end, tlen = _JOB_HEAD.unpack_from(payload)
        body = payload[_JOB_HEAD.size:]
        if tlen > len(body):
            raise LengthMismatch("JOB scene text overruns the payload")
        if end < start:
            raise LengthMismatch(f"JOB band [{start}, {end}) is inverted")
        try:
            text = body[:tlen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"JOB scene text is not UTF-8: {exc}") from None
        return Job(text, body[tlen:], BandAssignment(wid, start, end))
    if kind == ROWS:
        if len(payload) < _ROWS_HEAD.size:
            raise LengthMismatch("ROWS payload too short")
        start, count = _ROWS_HEAD.unpack_from(payload)
        pixels = payload[_ROWS_HEAD.size:]
        if count == 0 or len(pixels) % (3 * count):
            raise LengthMismatch(f"{len(pixels)} pixel bytes do not split into {count} RGB rows")
        return Rows(start, count, pixels)
    if kind == DONE:
        if payload:
            raise LengthMismatch("DONE carries no payload")
        return Done()
    if len(payload) < _ERR_HEAD.size:
        raise LengthMismatch("ERROR payload too short")
    (code,) = _ERR_HEAD.unpack_from(payload)
    return Error(code, payload[_ERR_HEAD.size:].decode("utf-8", errors="replace"))


def decode_frame(data: bytes) -> Message:
    """Decode exactly one frame; trailing or missing bytes are an error."""
    data = bytes(data)
    if len(data) < HEADER.size:
        raise LengthMismatch(f"frame shorter than its {HEADER.size}-byte header")
    kind, length = _check_header(data[:HEADER.size])
    if length != len(data) - HEADER.size:
        raise LengthMismatch(f"header says {length} payload bytes, got {len(data) - HEADER.size}")
    return _decode_payload(kind, data[HEADER.size:])


# -- streams ----------------------------------------------------------------

def _read_exact(stream, n: int) -> bytes:
    chunks = []
    while n:
        chunk = stream.read(n)
        if not chunk:
            raise EOFError("stream closed")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_message(stream) -> Message:
    header = _read_exact(stream, HEADER.size)
    kind, length = _check_header(header)
    try:
        payload = _read_exact(stream, length)
    except EOFError:
        raise LengthMismatch(f"stream ended inside a {length}-byte payload") from None
    return _decode_payload(kind, payload)


def send_message(stream, msg: Message) -> None:
    stream.write(encode_frame(msg))
    stream.flush()


def handshake_coordinator(stream) -> None:
    msg = read_message(stream)
    if not isinstance(msg, Hello):
        raise ProtocolError(f"expected HELLO, got {type(msg).__name__}")
    if msg.version != VERSION:
        raise BadVersion(f"worker speaks version {msg.version}")
    send_message(stream, Hello())


# -- coordinator --------------------------------------------------------------

def _collect(worker_id, stream, band, image, seen, lock):
    width = image.shape[1]
    while True:
        try:
            msg = read_message(stream)
        except EOFError:
            raise WorkerFailed(worker_id, "stream closed before DONE") from None
        except ProtocolError as exc:
            raise WorkerFailed(worker_id, str(exc)) from None
        if isinstance(msg, Done):
            missing = [r for r in range(band.row_start, band.row_end) if not seen[r]]
            if missing:
                raise WorkerFailed(worker_id, f"DONE with {len(missing)} rows missing")
            return
        if isinstance(msg, Error):
            raise WorkerFailed(worker_id, f"error {msg.code}: {msg.text}")
        if not isinstance(msg, Rows):
            raise WorkerFailed(worker_id, f"unexpected {type(msg).__name__}")
        stop = msg.row_start + msg.row_count
        if msg.row_start < band.row_start or stop > band.row_end:
            raise WorkerFailed(worker_id, f"rows [{msg.row_start}, {stop}) outside its band")
        if len(msg.pixels) != msg.row_count * width * 3:
            raise WorkerFailed(worker_id, f"ROWS carries {len(msg.pixels)} bytes for "
                                          f"{msg.row_count} rows of width {width}")
        with lock:
            if seen[msg.row_start:stop].any():
                raise WorkerFailed(worker_id, f"duplicate rows in [{msg.row_start}, {stop})")
            seen[msg.row_start:stop] = True
        image[msg.row_start:stop] = np.frombuffer(msg.pixels, dtype=np.uint8).reshape(
            msg.row_count, width, 3)


def run_coordinator(scene: SceneConfig, workers: Sequence) -> ImageBuffer:
    """Hand one static band to each (handshaken) worker stream and assemble
    the rows they return."""
    if not workers:
        raise ValueError("need at least one worker")
    bands = make_bands(scene.height, len(workers))
    text = scene_to_text(scene)
    ppm = save_ppm(scene.background)
    for band in bands:
        send_message(workers[band.worker_id], Job(text, ppm, band))
    image = np.zeros((scene.height, scene.width, 3), dtype=np.uint8)
    seen = np.zeros(scene.height, dtype=bool)
    lock = threading.Lock()
    errors = [None] * len(bands)

    def service(band):
        try:
            _collect(band.worker_id, workers[band.worker_id], band, image, seen, lock)
        except Exception as exc:  # reported below, in worker order
            errors[band.worker_id] = exc

    threads = [threading.Thread(target=service, args=(b,), daemon=True) for b in bands]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for exc in errors:
        if exc is not None:
            raise exc
    # surplus workers (more workers than rows) get no band
    for stream in workers[len(bands):]:
        send_message(stream, Done())
    return ImageBuffer(image)


# -- worker -----------------------------------------------------------------

def run_worker(stream, threads: int = 1, chunk_rows: int = MAX_CHUNK_ROWS) -> int:
    """Serve one job on ``stream``.  Returns a process exit status:
    0 on success, 3 on a render failure, 4 on a protocol failure."""
    chunk_rows = max(1, min(chunk_rows, MAX_CHUNK_ROWS))
    try:
        send_message(stream, Hello())
        reply = read_message(stream)
        if not isinstance(reply, Hello):
            raise ProtocolError(f"expected HELLO, got {type(reply).__name__}")
        job = read_message(stream)
        if isinstance(job, Done):
            return 0
        if not isinstance(job, Job):
            raise ProtocolError(f"expected JOB, got {type(job).__name__}")
        try:
            scene = scene_from_text(job.scene_text, load_ppm(job.background_ppm))
        except (ValueError, PPMError) as exc:
            raise ProtocolError(f"unusable JOB: {exc}") from None
        band = job.band
        if band.row_end > scene.height:
            raise ProtocolError(f"band [{band.row_start}, {band.row_end}) exceeds image height")
        for start in range(band.row_start, band.row_end, chunk_rows):
            stop = min(start + chunk_rows, band.row_end)
            rows = render_rows(scene, start, stop, threads)
            send_message(stream, Rows(start, stop - start, rows.tobytes()))
        send_message(stream, Done())
        return 0
    except (ProtocolError, EOFError) as exc:
        log.error("protocol failure: %s", exc)
        _try_send(stream, Error(ERR_PROTOCOL, str(exc)))
        return 4
    except TraceError as exc:
        log.error("render failure: %s", exc)
        _try_send(stream, Error(ERR_RENDER, str(exc)))
        return 3


def _try_send(stream, msg):
    try:
        send_message(stream, msg)
    except OSError:
        pass


# -- sockets ----------------------------------------------------------------

def parse_address(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def connect(address, timeout: float = 30.0):
    """Connect to a coordinator, retrying until it is listening."""
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection(address)
            break
        except OSError:
            if time.monotonic() > deadline:
                raise
            time.sleep(0.05)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return sock


def accept_workers(listener: socket.socket, count: int, timeout: float = 120.0) -> List:
    """Accept and handshake ``count`` workers; returns their streams."""
    listener.settimeout(timeout)
    streams = []
    for _ in range(count):
        sock, _ = listener.accept()
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        stream = sock.makefile("rwb")
        handshake_coordinator(stream)
        streams.append(stream)
    return streams


def spawn_workers(address, count: int, threads: int = 1) -> List[subprocess.Popen]:
    cmd = [sys.executable, "-m", "bhrt", "worker", "--connect",
           f"{address[0]}:{address[1]}", "--threads", str(threads)]
    return [subprocess.Popen(cmd) for _ in range(count)]


class LocalCluster:
    """``count`` worker processes on this host, connected and handshaken.

    Usable once: enter, call :meth:`render`, exit.
    """

    def __init__(self, count: int, threads: int = 1):
        self.count = count
        self.threads = threads
        self.procs: List[subprocess.Popen] = []
        self.streams: List = []

    def __enter__(self):
        self.listener = socket.create_server(("127.0.0.1", 0))
        self.listener.listen(self.count)
        address = self.listener.getsockname()[:2]
        self.procs = spawn_workers(address, self.count, self.threads)
        try:
            self.streams = accept_workers(self.listener, self.count)
        except BaseException:
            self.__exit__(None, None, None)
            raise
        return self

    def render(self, scene: SceneConfig) -> ImageBuffer:
        return run_coordinator(scene, self.streams)

    def __exit__(self, *exc):
        for s in self.streams:
            try:
                s.close()
            except OSError:
                pass
        self.listener.close()
        for p in self.procs:
            try:
                p.wait(timeout=30)
            except subprocess.TimeoutExpired:
                p.kill()
                p.wait()
        return False


def render_distributed(scene: SceneConfig, workers: int, threads: int = 1) -> ImageBuffer:
    with LocalCluster(workers, threads) as cluster:
        return cluster.render(scene)
