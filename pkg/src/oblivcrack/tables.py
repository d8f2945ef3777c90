"""Hellman tables with distinguished end-points, stored as closed hash tables.

Each of the ``M`` tables holds exactly ``M`` chains in ``ceil(beta * M)``
fixed-size buckets. A chain whose endpoint lands in an occupied bucket is
thrown away rather than probed elsewhere, so a client can find any endpoint
with a single record fetch.

File layout (``.hpt``, little-endian)::

    "HPT1" | version u16 | hash_id u8 | length u8 | alphabet_len u8 | alphabet
    | alpha f64 | beta f64 | M u32 | bucket_count u32 | dp_modulus u64
    | max_chain_len u32
    then M times: table_index u32 | bucket_count * (start_index u64 | end_fp u64)
"""

from __future__ import annotations

import logging
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .core import (
    ChainParams,
    HashId,
    HashProvider,
    InvalidParameters,
    PasswordSpace,
    derive_m,
    splitmix64,
    walk_to_endpoint,
)

log = logging.getLogger(__name__)

EMPTY = 0xFFFF_FFFF_FFFF_FFFF
RECORD_SIZE = 16
RECORD_SIZE_BITS = RECORD_SIZE * 8
MAGIC = b"HPT1"
FORMAT_VERSION = 1

_RECORD = struct.Struct("<QQ")
_HEADER_HEAD = struct.Struct("<4sHBBB")
_HEADER_TAIL = struct.Struct("<ddIIQI")
_TABLE_INDEX = struct.Struct("<I")


class TableExhausted(RuntimeError):
    """Every start index was tried before ``M`` chains could be stored."""

    def __init__(self, table_index: int, stored: int, needed: int):
        super().__init__(
            f"table {table_index}: password space exhausted after storing "
            f"{stored} of {needed} chains (alpha/beta too large for this space?)"
        )
        self.table_index = table_index


class CorruptFile(ValueError):
    pass


class InvariantViolation(ValueError):
    pass


@dataclass(frozen=True)
class TableParams:
    """Everything needed to rebuild a table set bit for bit."""

    space: PasswordSpace
    M: int
    alpha: float
    beta: float
    hash_id: HashId = HashId.MD5
    dp_modulus: Optional[int] = None
    max_chain_len: Optional[int] = None

    def __post_init__(self) -> None:
        if self.dp_modulus is None:
            object.__setattr__(self, "dp_modulus", self.M)
        if self.max_chain_len is None:
            object.__setattr__(self, "max_chain_len", 10 * self.M)
        object.__setattr__(self, "hash_id", HashId(self.hash_id))
        if self.M < 1:
            raise InvalidParameters("M must be positive")
        if not self.beta > 1.0:
            raise InvalidParameters("beta must be greater than 1")
        if self.bucket_count <= self.M:
            raise InvalidParameters("bucket_count must exceed M")
        if self.M > 0xFFFF_FFFF or self.bucket_count > 0xFFFF_FFFF:
            raise InvalidParameters("M or bucket_count too large for the file format")

    @classmethod
    def from_alpha(
        cls,
        space: PasswordSpace,
        alpha: float,
        beta: float = 4.0,
        hash_id: HashId = HashId.MD5,
    ) -> "TableParams":
        return cls(space=space, M=derive_m(alpha, space.size()), alpha=alpha, beta=beta, hash_id=hash_id)

    @property
    def n_passwords(self) -> int:
        return self.space.size()

    @property
    def bucket_count(self) -> int:
        return math.ceil(self.beta * self.M)

    @property
    def chain(self) -> ChainParams:
        return ChainParams(self.M, self.dp_modulus, self.max_chain_len)  # type: ignore[arg-type]

    @property
    def hasher(self) -> HashProvider:
        return HashProvider(self.hash_id)


@dataclass
class BuildStats:
    chains_attempted: int = 0
    chains_discarded_collision: int = 0
    chains_discarded_cycle: int = 0

    @property
    def chains_stored(self) -> int:
        return self.chains_attempted - self.chains_discarded_collision - self.chains_discarded_cycle

    def __add__(self, other: "BuildStats") -> "BuildStats":
        return BuildStats(
            self.chains_attempted + other.chains_attempted,
            self.chains_discarded_collision + other.chains_discarded_collision,
            self.chains_discarded_cycle + other.chains_discarded_cycle,
        )


@dataclass
class HellmanTable:
    table_index: int
    starts: list[int]
    ends: list[int]
    chain_count: int = field(default=0)

    @classmethod
    def empty(cls, table_index: int, bucket_count: int) -> "HellmanTable":
        return cls(table_index, [EMPTY] * bucket_count, [EMPTY] * bucket_count)

    @property
    def bucket_count(self) -> int:
        return len(self.starts)

    def record(self, bucket: int) -> tuple[int, int]:
        return self.starts[bucket], self.ends[bucket]

    def is_empty(self, bucket: int) -> bool:
        return self.starts[bucket] == EMPTY

    def lookup(self, end_fingerprint: int) -> Optional[int]:
        """Direct (non-private) lookup of the chain start for an endpoint."""
        b = bucket_for(end_fingerprint, self.bucket_count)
        if self.starts[b] == EMPTY or self.ends[b] != end_fingerprint:
            return None
        return self.starts[b]

    def to_bytes(self) -> bytes:
        """Bucket array as consecutive 16-byte records in position order."""
        buf = bytearray(RECORD_SIZE * self.bucket_count)
        for b, (s, e) in enumerate(zip(self.starts, self.ends)):
            _RECORD.pack_into(buf, b * RECORD_SIZE, s, e)
        return bytes(buf)


def bucket_for(end_fingerprint: int, bucket_count: int) -> int:
    # Fingerprints are all multiples of dp_modulus; remix before reducing.
    return splitmix64(end_fingerprint) % bucket_count


def build_table(table_index: int, params: TableParams) -> tuple[HellmanTable, BuildStats]:
    """Fill table ``table_index`` with chains from start indices 0, 1, 2, ...

    Stops once ``M`` buckets are occupied. When a new chain lands in an
    occupied bucket one of the two is discarded: the shorter one, or the new
    one on a tie. Long chains collide more often (they merge into earlier
    chains), so always dropping the newcomer would bias the table towards
    short chains and cost coverage.
    """
    chain = params.chain
    space = params.space
    hasher = params.hasher
    n = params.n_passwords
    buckets = params.bucket_count
    table = HellmanTable.empty(table_index, buckets)
    lengths = [0] * buckets
    stats = BuildStats()

    chain_index = 0
    while table.chain_count < params.M:
        if chain_index >= n:
            raise TableExhausted(table_index, table.chain_count, params.M)
        stats.chains_attempted += 1
        result = walk_to_endpoint(chain_index, table_index, chain, space, hasher)
        if result is None:
            stats.chains_discarded_cycle += 1
        else:
            end, steps = result
            b = bucket_for(end, buckets)
            if table.starts[b] == EMPTY:
                table.starts[b] = chain_index
                table.ends[b] = end
                lengths[b] = steps
                table.chain_count += 1
            else:
                stats.chains_discarded_collision += 1
                if steps > lengths[b]:
                    table.starts[b] = chain_index
                    table.ends[b] = end
                    lengths[b] = steps
        chain_index += 1
    return table, stats


def _build_one(args: tuple[int, TableParams]) -> tuple[HellmanTable, BuildStats]:
    return build_table(*args)


def build_all(
    params: TableParams, workers: int = 1
) -> tuple[list[HellmanTable], BuildStats, list[BuildStats]]:
    """Build tables ``0..M-1``.

    Returns the tables (ordered by index), the aggregate statistics and the
    per-table statistics. ``workers > 1`` builds tables in separate processes.
    """
    jobs = [(i, params) for i in range(params.M)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_build_one, jobs))
    else:
        results = [_build_one(job) for job in jobs]
    tables = [t for t, _ in results]
    per_table = [s for _, s in results]
    total = BuildStats()
    for s in per_table:
        total = total + s
    log.info(
        "built %d tables: %d chains attempted, %d collisions, %d cycles",
        params.M,
        total.chains_attempted,
        total.chains_discarded_collision,
        total.chains_discarded_cycle,
    )
    return tables, total, per_table


def header_size(params: TableParams) -> int:
    return _HEADER_HEAD.size + len(params.space.alphabet) + _HEADER_TAIL.size


def file_overhead(params: TableParams) -> int:
    """All non-record bytes: the global header plus one index field per table."""
    return header_size(params) + params.M * _TABLE_INDEX.size


def table_offset(params: TableParams, table_index: int) -> int:
    """Byte offset of table ``table_index``'s first bucket record."""
    per_table = _TABLE_INDEX.size + params.bucket_count * RECORD_SIZE
    return header_size(params) + table_index * per_table + _TABLE_INDEX.size


def serialize(tables: Sequence[HellmanTable], params: TableParams) -> bytes:
    if len(tables) != params.M:
        raise ValueError(f"expected {params.M} tables, got {len(tables)}")
    space = params.space
    parts = [
        _HEADER_HEAD.pack(MAGIC, FORMAT_VERSION, int(params.hash_id), space.length, len(space.alphabet)),
        space.alphabet,
        _HEADER_TAIL.pack(
            params.alpha,
            params.beta,
            params.M,
            params.bucket_count,
            params.dp_modulus,
            params.max_chain_len,
        ),
    ]
    for i, t in enumerate(tables):
        if t.table_index != i or t.bucket_count != params.bucket_count:
            raise ValueError(f"table {i} does not match the parameters")
        parts.append(_TABLE_INDEX.pack(t.table_index))
        parts.append(t.to_bytes())
    return b"".join(parts)


def _read_params(data: bytes) -> tuple[TableParams, int]:
    if len(data) < _HEADER_HEAD.size:
        raise CorruptFile("file shorter than header")
    magic, version, hash_id, length, alen = _HEADER_HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CorruptFile(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CorruptFile(f"unsupported format version {version}")
    off = _HEADER_HEAD.size
    if len(data) < off + alen + _HEADER_TAIL.size:
        raise CorruptFile("file shorter than header")
    alphabet = bytes(data[off : off + alen])
    off += alen
    alpha, beta, M, bucket_count, dp_modulus, max_chain_len = _HEADER_TAIL.unpack_from(data, off)
    off += _HEADER_TAIL.size
    try:
        params = TableParams(
            space=PasswordSpace(alphabet, length),
            M=M,
            alpha=alpha,
            beta=beta,
            hash_id=HashId(hash_id),
            dp_modulus=dp_modulus,
            max_chain_len=max_chain_len,
        )
    except (ValueError, InvalidParameters) as exc:
        raise CorruptFile(f"invalid header: {exc}") from exc
    if params.bucket_count != bucket_count:
        raise CorruptFile(f"bucket_count {bucket_count} inconsistent with beta*M")
    return params, off


def deserialize(data: bytes) -> tuple[list[HellmanTable], TableParams]:
    """Parse and validate a ``.hpt`` image."""
    params, off = _read_params(data)
    buckets = params.bucket_count
    expected = off + params.M * (_TABLE_INDEX.size + buckets * RECORD_SIZE)
    if len(data) != expected:
        raise CorruptFile(f"expected {expected} bytes, got {len(data)}")

    n = params.n_passwords
    dp = params.dp_modulus
    tables = []
    for i in range(params.M):
        (index,) = _TABLE_INDEX.unpack_from(data, off)
        off += _TABLE_INDEX.size
        if index != i:
            raise CorruptFile(f"table {i} carries index {index}")
        table = HellmanTable.empty(i, buckets)
        for b, (s, e) in enumerate(_RECORD.iter_unpack(data[off : off + buckets * RECORD_SIZE])):
            if s == EMPTY:
                if e != EMPTY:
                    raise InvariantViolation(f"table {i} bucket {b}: half-empty record")
                continue
            if s >= n:
                raise InvariantViolation(f"table {i} bucket {b}: start index {s} out of range")
            if e % dp != 0:
                raise InvariantViolation(f"table {i} bucket {b}: endpoint is not distinguished")
            if bucket_for(e, buckets) != b:
                raise InvariantViolation(f"table {i} bucket {b}: endpoint stored in the wrong bucket")
            table.starts[b] = s
            table.ends[b] = e
            table.chain_count += 1
        off += buckets * RECORD_SIZE
        if table.chain_count != params.M:
            raise InvariantViolation(f"table {i} holds {table.chain_count} chains, expected {params.M}")
        tables.append(table)
    return tables, params


def save(path: Union[str, Path], tables: Sequence[HellmanTable], params: TableParams) -> int:
    data = serialize(tables, params)
    Path(path).write_bytes(data)
    return len(data)


def load(path: Union[str, Path]) -> tuple[list[HellmanTable], TableParams]:
    return deserialize(Path(path).read_bytes())


def verify_chains(tables: Sequence[HellmanTable], params: TableParams) -> None:
    """Re-walk every stored chain and check its endpoint. Costs about M**3 hashes."""
    chain = params.chain
    for t in tables:
        for b in range(t.bucket_count):
            if t.is_empty(b):
                continue
            result = walk_to_endpoint(t.starts[b], t.table_index, chain, params.space, params.hasher)
            if result is None or result[0] != t.ends[b]:
                raise InvariantViolation(f"table {t.table_index} bucket {b}: chain does not reach its endpoint")
