"""Table provider: one PIR database per Hellman table behind a framed TCP protocol.

Frames are ``u32 length | u8 msg_type | payload`` (little-endian) where
``length`` counts the type byte plus the payload.

====  ==========  ===========================================================
type  name        payload
====  ==========  ===========================================================
0x01  INFO_REQ    empty
0x02  INFO_RESP   version u16 | hash_id u8 | length u8 | alphabet_len u8 |
                  alphabet | M u32 | bucket_count u32 | dp_modulus u64 |
                  record_size_bits u16
0x10  PIR_QUERY   table_index u32 | scheme u8 | classic query (if scheme 1)
0x11  PIR_RESP    scheme u8 | full database (naive) or bit-row products
0x7F  ERROR       code u16 | utf-8 message
====  ==========  ===========================================================

The server never sees a key. For classic queries it only multiplies the
supplied elements modulo the supplied modulus.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from . import pir
from .core import HashId, PasswordSpace
from .tables import RECORD_SIZE_BITS, HellmanTable, TableParams, load

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024

INFO_REQ = 0x01
INFO_RESP = 0x02
PIR_QUERY = 0x10
PIR_RESP = 0x11
ERROR = 0x7F

ERR_MALFORMED = 1
ERR_UNKNOWN_TYPE = 2
ERR_BAD_TABLE = 3
ERR_TOO_LARGE = 4

_LEN = struct.Struct("<I")
_INFO_HEAD = struct.Struct("<HBBB")
_INFO_TAIL = struct.Struct("<IIQH")
_QUERY_HEAD = struct.Struct("<IB")
_ERROR_HEAD = struct.Struct("<H")


class ProtocolError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code
        self.message = message


class TransportError(ConnectionError):
    pass


def encode_frame(msg_type: int, payload: bytes = b"") -> bytes:
    return _LEN.pack(len(payload) + 1) + bytes([msg_type]) + payload


def error_frame(code: int, message: str) -> bytes:
    return encode_frame(ERROR, _ERROR_HEAD.pack(code) + message.encode("utf-8"))


def parse_error(payload: bytes) -> ProtocolError:
    if len(payload) < 2:
        return ProtocolError(ERR_MALFORMED, "truncated error frame")
    (code,) = _ERROR_HEAD.unpack_from(payload)
    return ProtocolError(code, payload[2:].decode("utf-8", "replace"))


@dataclass(frozen=True)
class ServerInfo:
    version: int
    hash_id: HashId
    length: int
    alphabet: bytes
    M: int
    bucket_count: int
    dp_modulus: int
    record_size_bits: int

    @property
    def space(self) -> PasswordSpace:
        return PasswordSpace(self.alphabet, self.length)

    def encode(self) -> bytes:
        return (
            _INFO_HEAD.pack(self.version, int(self.hash_id), self.length, len(self.alphabet))
            + self.alphabet
            + _INFO_TAIL.pack(self.M, self.bucket_count, self.dp_modulus, self.record_size_bits)
        )

    @classmethod
    def decode(cls, payload: bytes) -> "ServerInfo":
        try:
            version, hash_id, length, alen = _INFO_HEAD.unpack_from(payload)
            alphabet = payload[_INFO_HEAD.size : _INFO_HEAD.size + alen]
            off = _INFO_HEAD.size + alen
            if len(payload) != off + _INFO_TAIL.size:
                raise ValueError("bad length")
            M, buckets, dp, rbits = _INFO_TAIL.unpack_from(payload, off)
            return cls(version, HashId(hash_id), length, bytes(alphabet), M, buckets, dp, rbits)
        except (struct.error, ValueError) as exc:
            raise ProtocolError(ERR_MALFORMED, f"bad INFO_RESP: {exc}") from exc


@dataclass
class ConnectionCounters:
    """Per-connection diagnostics. Only counts, never payload contents."""

    queries: Counter = field(default_factory=Counter)
    mulmods: int = 0
    errors: int = 0

    @property
    def total_queries(self) -> int:
        return sum(self.queries.values())


class ProviderState:
    """Immutable serving state built from a loaded table set."""

    def __init__(self, tables: Sequence[HellmanTable], params: TableParams):
        self.params = params
        self.databases = tuple(pir.PirDatabase(t.to_bytes(), RECORD_SIZE_BITS) for t in tables)
        if len(self.databases) != params.M:
            raise ValueError("table count does not match M")
        self.info = ServerInfo(
            version=PROTOCOL_VERSION,
            hash_id=params.hash_id,
            length=params.space.length,
            alphabet=params.space.alphabet,
            M=params.M,
            bucket_count=params.bucket_count,
            dp_modulus=params.dp_modulus,  # type: ignore[arg-type]
            record_size_bits=RECORD_SIZE_BITS,
        )

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "ProviderState":
        tables, params = load(path)
        return cls(tables, params)


def handle_pir_query(
    state: ProviderState,
    table_index: int,
    scheme: int,
    payload: bytes,
    counters: Optional[ConnectionCounters] = None,
) -> bytes:
    """Answer one PIR query; returns the PIR_RESP payload."""
    if not 0 <= table_index < len(state.databases):
        raise ProtocolError(ERR_BAD_TABLE, f"table index {table_index} out of range")
    db = state.databases[table_index]
    try:
        if scheme == pir.Scheme.NAIVE:
            if payload:
                raise pir.MalformedPayload("naive query carries a payload")
            body = pir.naive_answer(db).data
        elif scheme == pir.Scheme.CLASSIC:
            query = pir.decode_classic_query(payload, db.record_count)
            op = pir.OpCounter()
            response = pir.classic_answer(db, query, op)
            if counters is not None:
                counters.mulmods += op.mulmods
            body = pir.encode_classic_response(response, query.modulus_bits)
        else:
            raise ProtocolError(ERR_MALFORMED, f"unknown scheme {scheme}")
    except pir.MalformedPayload as exc:
        raise ProtocolError(ERR_MALFORMED, str(exc)) from exc
    if counters is not None:
        counters.queries[table_index] += 1
    return bytes([scheme]) + body


def handle_message(
    state: ProviderState, msg_type: int, payload: bytes, counters: Optional[ConnectionCounters] = None
) -> bytes:
    """Dispatch one decoded frame and return the full reply frame. Never raises."""
    try:
        if msg_type == INFO_REQ:
            if payload:
                raise ProtocolError(ERR_MALFORMED, "INFO_REQ carries a payload")
            return encode_frame(INFO_RESP, state.info.encode())
        if msg_type == PIR_QUERY:
            if len(payload) < _QUERY_HEAD.size:
                raise ProtocolError(ERR_MALFORMED, "PIR_QUERY too short")
            table_index, scheme = _QUERY_HEAD.unpack_from(payload)
            body = handle_pir_query(state, table_index, scheme, payload[_QUERY_HEAD.size :], counters)
            return encode_frame(PIR_RESP, body)
        raise ProtocolError(ERR_UNKNOWN_TYPE, f"unknown message type 0x{msg_type:02x}")
    except ProtocolError as exc:
        if counters is not None:
            counters.errors += 1
        return error_frame(exc.code, exc.message)
    except Exception as exc:  # noqa: BLE001 - a bad request must not kill the server
        log.exception("unexpected error while handling a request")
        if counters is not None:
            counters.errors += 1
        return error_frame(ERR_MALFORMED, f"internal error: {type(exc).__name__}")


def handle_frame_bytes(state: ProviderState, frame: bytes, counters: Optional[ConnectionCounters] = None) -> bytes:
    """Handle one complete frame given as raw bytes (length prefix included)."""
    if len(frame) < _LEN.size + 1:
        return error_frame(ERR_MALFORMED, "truncated frame")
    (length,) = _LEN.unpack_from(frame)
    if length != len(frame) - _LEN.size:
        return error_frame(ERR_MALFORMED, "frame length mismatch")
    return handle_message(state, frame[4], frame[5:], counters)


# -- transport ---------------------------------------------------------------

def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Optional[tuple[int, bytes]]:
    """Read one frame; ``None`` on clean EOF before a frame starts."""
    head = _recv_exact(sock, _LEN.size)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    if length < 1 or length > MAX_FRAME:
        raise ProtocolError(ERR_TOO_LARGE, f"frame length {length} not accepted")
    body = _recv_exact(sock, length)
    if body is None:
        raise TransportError("connection closed mid-frame")
    return body[0], body[1:]


class _Handler(socketserver.BaseRequestHandler):
    server: "ProviderServer"

    def handle(self) -> None:
        counters = ConnectionCounters()
        self.server.register(counters)
        sock = self.request
        while True:
            try:
                frame = read_frame(sock)
            except ProtocolError as exc:
                # length prefix is untrustworthy: report and drop the connection
                sock.sendall(error_frame(exc.code, exc.message))
                return
            except (TransportError, OSError):
                return
            if frame is None:
                return
            reply = handle_message(self.server.state, frame[0], frame[1], counters)
            try:
                sock.sendall(reply)
            except OSError:
                return


class ProviderServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, state: ProviderState, address: tuple[str, int] = ("127.0.0.1", 0)):
        self.state = state
        self.connections: list[ConnectionCounters] = []
        self._lock = threading.Lock()
        super().__init__(address, _Handler)

    def register(self, counters: ConnectionCounters) -> None:
        with self._lock:
            self.connections.append(counters)

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve(tables_file: Union[str, Path], listen: tuple[str, int]) -> None:
    state = ProviderState.from_file(tables_file)
    with ProviderServer(state, listen) as server:
        host, port = server.server_address[:2]
        log.info("serving %d tables on %s:%d", state.params.M, host, port)
        print(f"listening on {host}:{port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


# -- client-side handles -----------------------------------------------------

class ProviderClient:
    """Base for provider handles; subclasses implement ``_roundtrip``."""

    def __init__(self) -> None:
        self.bytes_up = 0
        self.bytes_down = 0

    def _roundtrip(self, frame: bytes) -> tuple[int, bytes, int]:
        raise NotImplementedError

    def request(self, msg_type: int, payload: bytes = b"") -> tuple[int, bytes]:
        frame = encode_frame(msg_type, payload)
        self.bytes_up += len(frame)
        rtype, rpayload, size = self._roundtrip(frame)
        self.bytes_down += size
        if rtype == ERROR:
            raise parse_error(rpayload)
        return rtype, rpayload

    def info(self) -> ServerInfo:
        rtype, payload = self.request(INFO_REQ)
        if rtype != INFO_RESP:
            raise ProtocolError(ERR_MALFORMED, f"expected INFO_RESP, got 0x{rtype:02x}")
        return ServerInfo.decode(payload)

    def pir_query(self, table_index: int, scheme: int, payload: bytes = b"") -> bytes:
        rtype, body = self.request(PIR_QUERY, _QUERY_HEAD.pack(table_index, scheme) + payload)
        if rtype != PIR_RESP or not body or body[0] != scheme:
            raise ProtocolError(ERR_MALFORMED, "unexpected reply to PIR_QUERY")
        return body[1:]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class LocalProvider(ProviderClient):
    """Runs the server handler in-process, through the same frame encoding."""

    def __init__(self, state: ProviderState):
        super().__init__()
        self.state = state
        self.counters = ConnectionCounters()

    def _roundtrip(self, frame: bytes) -> tuple[int, bytes, int]:
        reply = handle_frame_bytes(self.state, frame, self.counters)
        return reply[4], reply[5:], len(reply)


class RemoteProvider(ProviderClient):
    def __init__(self, host: str, port: int, timeout: Optional[float] = 60.0):
        super().__init__()
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc

    def _roundtrip(self, frame: bytes) -> tuple[int, bytes, int]:
        try:
            self.sock.sendall(frame)
            reply = read_frame(self.sock)
        except OSError as exc:
            raise TransportError(str(exc)) from exc
        if reply is None:
            raise TransportError("server closed the connection")
        return reply[0], reply[1], _LEN.size + 1 + len(reply[1])

    def close(self) -> None:
        self.sock.close()


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        return default_host, int(text)
    return host or default_host, int(port)
