"""Password space, hashing, reduction functions and chain walking.

Everything here is a pure function of its arguments. Chains alternate
hashing and reduction::

    p0 --H--> h1 --r_i--> p1 --H--> h2 ... --H--> h_k   (h_k distinguished)

A chain stops at the first *distinguished* digest, i.e. one whose 64-bit
little-endian prefix is divisible by ``dp_modulus``. Only the 64-bit prefix
of that digest (the *fingerprint*) is ever stored.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Optional

MASK64 = (1 << 64) - 1


class InvalidParameters(ValueError):
    """Raised for configurations that cannot produce usable tables."""


def splitmix64(x: int) -> int:
    """Stateless SplitMix64 finaliser applied to ``x + golden gamma``."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def table_salt(table_index: int) -> int:
    return splitmix64(table_index)


def fingerprint(digest: bytes) -> int:
    """64-bit little-endian prefix of a digest."""
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class PasswordSpace:
    """All strings of exactly ``length`` characters over ``alphabet``.

    Index ``i`` maps to the base-``len(alphabet)`` expansion of ``i`` with the
    most significant digit first, so index 0 is ``alphabet[0] * length``.
    """

    alphabet: bytes
    length: int

    def __post_init__(self) -> None:
        if isinstance(self.alphabet, str):
            object.__setattr__(self, "alphabet", self.alphabet.encode("ascii"))
        if len(set(self.alphabet)) != len(self.alphabet):
            raise InvalidParameters("alphabet characters must be unique")
        if not 2 <= len(self.alphabet) <= 64:
            raise InvalidParameters("alphabet must hold between 2 and 64 characters")
        if self.length < 1:
            raise InvalidParameters("password length must be positive")
        if len(self.alphabet) ** self.length > MASK64:
            raise InvalidParameters("password space does not fit in 64 bits")
        object.__setattr__(self, "_chars", tuple(bytes([c]) for c in self.alphabet))
        object.__setattr__(self, "_lookup", {c: d for d, c in enumerate(self.alphabet)})

    @property
    def radix(self) -> int:
        return len(self.alphabet)

    def size(self) -> int:
        return self.radix**self.length

    def index_to_password(self, index: int) -> bytes:
        if not 0 <= index < self.size():
            raise IndexError(f"password index {index} outside [0, {self.size()})")
        chars = self._chars  # type: ignore[attr-defined]
        radix = self.radix
        out = [b""] * self.length
        for pos in range(self.length - 1, -1, -1):
            index, digit = divmod(index, radix)
            out[pos] = chars[digit]
        return b"".join(out)

    def password_to_index(self, password: bytes) -> int:
        if isinstance(password, str):
            password = password.encode("ascii")
        if len(password) != self.length:
            raise ValueError(f"password must have length {self.length}")
        lookup = self._lookup  # type: ignore[attr-defined]
        index = 0
        for c in password:
            try:
                index = index * self.radix + lookup[c]
            except KeyError:
                raise ValueError(f"character {chr(c)!r} not in alphabet") from None
        return index


class HashId(IntEnum):
    MD5 = 1
    SHA1 = 2
    SHA256 = 3


@dataclass(frozen=True)
class HashProvider:
    algorithm: HashId = HashId.MD5

    def __post_init__(self) -> None:
        object.__setattr__(self, "algorithm", HashId(self.algorithm))
        name = self.algorithm.name.lower()
        object.__setattr__(self, "_ctor", getattr(hashlib, name))

    @classmethod
    def by_name(cls, name: str) -> "HashProvider":
        try:
            return cls(HashId[name.upper()])
        except KeyError:
            raise InvalidParameters(f"unsupported hash algorithm {name!r}") from None

    @property
    def digest_size(self) -> int:
        return self._ctor().digest_size  # type: ignore[attr-defined]

    @property
    def hash_fn(self) -> Callable[[bytes], bytes]:
        ctor = self._ctor  # type: ignore[attr-defined]
        return lambda data: ctor(data).digest()

    def __call__(self, data: bytes) -> bytes:
        return self._ctor(data).digest()  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ChainParams:
    """Chain shape shared by every table of one build.

    ``M`` is simultaneously the number of tables, the number of reduction
    functions and the mean chain length.
    """

    M: int
    dp_modulus: int
    max_chain_len: int

    def __post_init__(self) -> None:
        if self.M < 1 or self.dp_modulus < 1 or self.max_chain_len < 1:
            raise InvalidParameters("chain parameters must be positive")

    @classmethod
    def for_m(cls, M: int) -> "ChainParams":
        return cls(M=M, dp_modulus=M, max_chain_len=10 * M)


def derive_m(alpha: float, n_passwords: int) -> int:
    """Number of tables (and mean chain length) for success probability ``alpha``.

    Inverts ``alpha = 1 - exp(-M**3 / N)`` and rounds up.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameters(f"alpha must lie strictly between 0 and 1, got {alpha}")
    if n_passwords < 8:
        raise InvalidParameters("password space too small")
    exact = (-math.log1p(-alpha) * n_passwords) ** (1.0 / 3.0)
    # round first so exact cubes (M**3 == N) do not tip over to M + 1
    return max(math.ceil(round(exact, 9)), 2)


def reduce(digest: bytes, table_index: int, space: PasswordSpace) -> bytes:
    idx = (fingerprint(digest) ^ table_salt(table_index)) % space.size()
    return space.index_to_password(idx)


def is_distinguished(digest: bytes, dp_modulus: int) -> bool:
    return fingerprint(digest) % dp_modulus == 0


def _chain_from_digest(
    digest: bytes,
    table_index: int,
    params: ChainParams,
    space: PasswordSpace,
    hasher: HashProvider,
    budget: int,
) -> Optional[tuple[int, int]]:
    # Hot loop: inlined reduce/is_distinguished.
    h = hasher.hash_fn
    to_pw = space.index_to_password
    salt = table_salt(table_index)
    n = space.size()
    dp = params.dp_modulus
    fp = int.from_bytes(digest[:8], "little")
    for steps in range(1, budget + 1):
        if fp % dp == 0:
            return fp, steps
        digest = h(to_pw((fp ^ salt) % n))
        fp = int.from_bytes(digest[:8], "little")
    return None


def walk_to_endpoint(
    start_index: int,
    table_index: int,
    params: ChainParams,
    space: PasswordSpace,
    hasher: HashProvider,
) -> Optional[tuple[int, int]]:
    """Walk the chain starting at password ``start_index``.

    Returns ``(end_fingerprint, steps)`` where ``steps`` counts hash
    evaluations, or ``None`` when no distinguished digest shows up within
    ``max_chain_len`` steps (treated as a cycle).
    """
    first = hasher(space.index_to_password(start_index))
    return _chain_from_digest(first, table_index, params, space, hasher, params.max_chain_len)


def endpoint_from_digest(
    digest: bytes,
    table_index: int,
    params: ChainParams,
    space: PasswordSpace,
    hasher: HashProvider,
) -> Optional[tuple[int, int]]:
    """Endpoint of any chain of table ``table_index`` that passes through ``digest``.

    ``digest`` itself counts as step 1, so a distinguished target is its own
    endpoint. ``None`` if the walk exceeds ``max_chain_len``.
    """
    return _chain_from_digest(digest, table_index, params, space, hasher, params.max_chain_len)


def find_preimage(
    start_index: int,
    table_index: int,
    target_digest: bytes,
    params: ChainParams,
    space: PasswordSpace,
    hasher: HashProvider,
) -> Optional[bytes]:
    """Search the chain from ``start_index`` for a password hashing to the target.

    Returns ``None`` once the chain's endpoint has been passed without a hit
    (a false alarm) or the chain runs past ``max_chain_len``.
    """
    h = hasher.hash_fn
    to_pw = space.index_to_password
    salt = table_salt(table_index)
    n = space.size()
    dp = params.dp_modulus
    password = to_pw(start_index)
    for _ in range(params.max_chain_len):
        digest = h(password)
        if digest == target_digest:
            return password
        fp = int.from_bytes(digest[:8], "little")
        if fp % dp == 0:
            return None
        password = to_pw((fp ^ salt) % n)
    return None
