"""Single-server PIR over fixed-size records.

Two schemes share one database type:

* naive: the server ships the whole database and the client indexes it.
* classic: quadratic-residuosity PIR. The database is viewed as a matrix with
  one row per record bit and one column per record. The client sends one
  group element per column, all with Jacobi symbol +1, of which only the
  target's is a non-residue. For every bit row the server multiplies the
  elements of the columns holding a 1 there; the product is a non-residue
  exactly when the target record has a 1 in that row.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, field
from enum import IntEnum
from math import gcd
from typing import Optional, Sequence

MAX_MODULUS_BITS = 4096
MIN_MODULUS_BITS = 32
DEFAULT_MODULUS_BITS = 512


class Scheme(IntEnum):
    NAIVE = 0
    CLASSIC = 1


class MalformedPayload(ValueError):
    pass


# -- number theory ---------------------------------------------------------

def mod_exp(a: int, e: int, n: int) -> int:
    return pow(a, e, n)


def mod_mul(a: int, b: int, n: int) -> int:
    return a * b % n


def jacobi(a: int, n: int) -> int:
    """Jacobi symbol (a/n) for odd positive n, binary algorithm."""
    if n <= 0 or n % 2 == 0:
        raise ValueError("jacobi symbol needs an odd positive modulus")
    a %= n
    result = 1
    while a:
        while a % 2 == 0:
            a //= 2
            if n % 8 in (3, 5):
                result = -result
        a, n = n, a
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a %= n
    return result if n == 1 else 0


def is_probable_prime(n: int, rounds: int = 40, rng: Optional[random.Random] = None) -> bool:
    """Miller-Rabin with ``rounds`` random bases."""
    if n < 2:
        return False
    for small in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % small == 0:
            return n == small
    rng = rng or random.Random(n)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        x = pow(rng.randrange(2, n - 1), d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _blum_prime(bits: int, rng: random.Random) -> int:
    # Top two bits set so the product of two such primes has full width.
    while True:
        c = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 0b11
        if is_probable_prime(c, rng=rng):
            return c


@dataclass(frozen=True)
class QraKey:
    """Blum modulus ``n = p*q`` plus a public pseudo-square ``u``.

    ``u`` has Jacobi symbol +1 but is a non-residue modulo both factors.
    Only the holder of ``p`` and ``q`` can tell residues from ``u``-multiples.
    """

    p: int
    q: int
    n: int
    u: int
    modulus_bits: int

    @classmethod
    def from_primes(cls, p: int, q: int, u: Optional[int] = None, rng: Optional[random.Random] = None) -> "QraKey":
        if p == q or p % 4 != 3 or q % 4 != 3:
            raise ValueError("p and q must be distinct primes congruent to 3 mod 4")
        n = p * q
        if u is None:
            rng = rng or random.Random(n)
            while True:
                u = rng.randrange(2, n)
                if jacobi(u, n) == 1 and pow(u, (p - 1) // 2, p) == p - 1:
                    break
        key = cls(p=p, q=q, n=n, u=u, modulus_bits=n.bit_length())
        if jacobi(u, n) != 1 or key.is_residue(u):
            raise ValueError(f"{u} is not a pseudo-square modulo {n}")
        return key

    def is_residue(self, x: int) -> bool:
        """Euler's criterion modulo both secret factors."""
        p, q = self.p, self.q
        return pow(x, (p - 1) // 2, p) == 1 and pow(x, (q - 1) // 2, q) == 1

    @property
    def width(self) -> int:
        return element_width(self.modulus_bits)


def keygen(modulus_bits: int = DEFAULT_MODULUS_BITS, seed: Optional[int] = None) -> QraKey:
    """Deterministic for a given ``seed``; fresh system randomness if ``seed`` is None."""
    if modulus_bits < MIN_MODULUS_BITS:
        raise ValueError(f"modulus_bits must be at least {MIN_MODULUS_BITS}")
    rng = random.Random(seed) if seed is not None else random.Random(secrets.randbits(128))
    p_bits = (modulus_bits + 1) // 2
    q_bits = modulus_bits - p_bits
    while True:
        p = _blum_prime(p_bits, rng)
        q = _blum_prime(q_bits, rng)
        if p != q and (p * q).bit_length() == modulus_bits:
            return QraKey.from_primes(p, q, rng=rng)


def element_width(modulus_bits: int) -> int:
    return (modulus_bits + 7) // 8


# -- database --------------------------------------------------------------

@dataclass(frozen=True)
class PirDatabase:
    records: bytes
    record_size_bits: int = 128
    # columns[b] lists the records whose bit b is set
    columns: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.record_size_bits <= 0 or self.record_size_bits % 8:
            raise ValueError("record size must be a positive whole number of bytes")
        if len(self.records) % self.record_size:
            raise ValueError("database length is not a multiple of the record size")
        object.__setattr__(self, "records", bytes(self.records))
        cols: list[list[int]] = [[] for _ in range(self.record_size_bits)]
        for j in range(self.record_count):
            value = int.from_bytes(self.record(j), "little")
            b = 0
            while value:
                if value & 1:
                    cols[b].append(j)
                value >>= 1
                b += 1
        object.__setattr__(self, "columns", tuple(tuple(c) for c in cols))

    @property
    def record_size(self) -> int:
        return self.record_size_bits // 8

    @property
    def record_count(self) -> int:
        return len(self.records) // self.record_size

    def record(self, index: int) -> bytes:
        if not 0 <= index < self.record_count:
            raise IndexError(index)
        size = self.record_size
        return self.records[index * size : (index + 1) * size]

    def popcount(self) -> int:
        return sum(len(c) for c in self.columns)


@dataclass
class OpCounter:
    """Server-side work counter (modular multiplications)."""

    mulmods: int = 0


# -- naive -----------------------------------------------------------------

@dataclass(frozen=True)
class NaiveQuery:
    scheme: Scheme = Scheme.NAIVE


@dataclass(frozen=True)
class NaiveResponse:
    data: bytes


def naive_query() -> NaiveQuery:
    return NaiveQuery()


def naive_answer(db: PirDatabase, query: Optional[NaiveQuery] = None) -> NaiveResponse:
    return NaiveResponse(db.records)


def naive_decode(response: NaiveResponse, target: int, record_count: int, record_size_bits: int = 128) -> bytes:
    size = record_size_bits // 8
    if len(response.data) != record_count * size:
        raise MalformedPayload(f"naive response has {len(response.data)} bytes, expected {record_count * size}")
    if not 0 <= target < record_count:
        raise IndexError(target)
    return response.data[target * size : (target + 1) * size]


# -- classic ---------------------------------------------------------------

@dataclass(frozen=True)
class ClassicQuery:
    n: int
    modulus_bits: int
    elements: tuple[int, ...]
    scheme: Scheme = Scheme.CLASSIC


@dataclass(frozen=True)
class ClassicResponse:
    elements: tuple[int, ...]


def _unit(n: int, rng: random.Random) -> int:
    while True:
        r = rng.randrange(1, n)
        if gcd(r, n) == 1:
            return r


def classic_query(target: int, record_count: int, key: QraKey, rng: Optional[random.Random] = None) -> ClassicQuery:
    if not 0 <= target < record_count:
        raise IndexError(f"target {target} outside [0, {record_count})")
    rng = rng or secrets.SystemRandom()
    n = key.n
    elements = []
    for j in range(record_count):
        r = _unit(n, rng)
        e = r * r % n
        if j == target:
            e = e * key.u % n
        elements.append(e)
    return ClassicQuery(n=n, modulus_bits=key.modulus_bits, elements=tuple(elements))


def classic_answer(db: PirDatabase, query: ClassicQuery, counter: Optional[OpCounter] = None) -> ClassicResponse:
    """Multiply, for each bit row, the query elements of the columns holding a 1.

    Every record is visited for every query; the work depends only on the
    database contents.
    """
    n = query.n
    elements = query.elements
    if len(elements) != db.record_count:
        raise MalformedPayload(f"query has {len(elements)} elements for {db.record_count} records")
    if any(not 0 < e < n for e in elements):
        raise MalformedPayload("query element outside (0, n)")
    out = []
    mulmods = 0
    for column in db.columns:
        z = 1
        for j in column:
            z = z * elements[j] % n
        mulmods += len(column)
        out.append(z)
    if counter is not None:
        counter.mulmods += mulmods
    return ClassicResponse(tuple(out))


def classic_decode(response: ClassicResponse, key: QraKey, record_size_bits: int = 128) -> bytes:
    if len(response.elements) != record_size_bits:
        raise MalformedPayload(f"response has {len(response.elements)} elements, expected {record_size_bits}")
    value = 0
    for b, z in enumerate(response.elements):
        if not key.is_residue(z):
            value |= 1 << b
    return value.to_bytes(record_size_bits // 8, "little")


# -- wire encodings --------------------------------------------------------

def _pack_elements(elements: Sequence[int], width: int) -> bytes:
    return b"".join(e.to_bytes(width, "big") for e in elements)


def _unpack_elements(data: bytes, width: int) -> tuple[int, ...]:
    return tuple(int.from_bytes(data[i : i + width], "big") for i in range(0, len(data), width))


def encode_classic_query(query: ClassicQuery) -> bytes:
    """``modulus_bits u16 | modulus | elements``, big-endian fixed-width integers."""
    width = element_width(query.modulus_bits)
    return (
        query.modulus_bits.to_bytes(2, "little")
        + query.n.to_bytes(width, "big")
        + _pack_elements(query.elements, width)
    )


def decode_classic_query(payload: bytes, record_count: int) -> ClassicQuery:
    if len(payload) < 2:
        raise MalformedPayload("classic query too short")
    bits = int.from_bytes(payload[:2], "little")
    if not MIN_MODULUS_BITS <= bits <= MAX_MODULUS_BITS:
        raise MalformedPayload(f"modulus size {bits} bits not supported")
    width = element_width(bits)
    expected = 2 + width * (record_count + 1)
    if len(payload) != expected:
        raise MalformedPayload(f"classic query has {len(payload)} bytes, expected {expected}")
    n = int.from_bytes(payload[2 : 2 + width], "big")
    if n.bit_length() != bits or n % 2 == 0:
        raise MalformedPayload("modulus does not match its declared size")
    elements = _unpack_elements(payload[2 + width :], width)
    if any(not 0 < e < n for e in elements):
        raise MalformedPayload("query element outside (0, n)")
    return ClassicQuery(n=n, modulus_bits=bits, elements=elements)


def encode_classic_response(response: ClassicResponse, modulus_bits: int) -> bytes:
    return _pack_elements(response.elements, element_width(modulus_bits))


def decode_classic_response(payload: bytes, modulus_bits: int, record_size_bits: int = 128) -> ClassicResponse:
    width = element_width(modulus_bits)
    if len(payload) != width * record_size_bits:
        raise MalformedPayload(f"classic response has {len(payload)} bytes, expected {width * record_size_bits}")
    return ClassicResponse(_unpack_elements(payload, width))
