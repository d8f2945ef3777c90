"""Client side: reverse a digest with exactly one PIR query per table.

An attempt runs in three phases:

1. compute the candidate endpoint of the target for every table (local work);
2. fetch the bucket for each endpoint, one PIR query per table, always ``M``
   queries whether or not an endpoint was found;
3. walk the chains whose stored endpoint matched, looking for the preimage.
"""

from __future__ import annotations

import random
import secrets
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from . import pir
from .core import ChainParams, HashProvider, PasswordSpace, endpoint_from_digest, find_preimage
from .provider import ProtocolError, ProviderClient, ServerInfo
from .tables import EMPTY, RECORD_SIZE_BITS, HellmanTable, TableParams, bucket_for

_RECORD = struct.Struct("<QQ")
DUMMY_BUCKET = 0


class ParamsMismatch(ValueError):
    pass


class AttemptFailed(RuntimeError):
    """A transport or protocol error aborted a crack attempt."""


@dataclass
class CrackTrace:
    endpoints: list[Optional[int]] = field(default_factory=list)
    starts: list[Optional[int]] = field(default_factory=list)
    queries_sent: int = 0
    chains_walked: int = 0
    # ("fetch", table) / ("walk", table), in the order they happened
    events: list[tuple[str, int]] = field(default_factory=list)


def candidate_endpoints(
    target: bytes, chain: ChainParams, space: PasswordSpace, hasher: HashProvider
) -> list[Optional[int]]:
    """Endpoint the target digest leads to under each table's reduction, or None on a cycle."""
    out: list[Optional[int]] = []
    for i in range(chain.M):
        result = endpoint_from_digest(target, i, chain, space, hasher)
        out.append(None if result is None else result[0])
    return out


def lookup(target: bytes, tables: Sequence[HellmanTable], params: TableParams) -> Optional[bytes]:
    """Reverse ``target`` by reading the tables directly, without PIR.

    Same chain logic and table order as :meth:`CrackSession.crack`, so the two
    agree on every input.
    """
    chain, space, hasher = params.chain, params.space, params.hasher
    _check_digest(target, hasher)
    ends = candidate_endpoints(target, chain, space, hasher)
    starts = [None if e is None else t.lookup(e) for e, t in zip(ends, tables)]
    for i, start in enumerate(starts):
        if start is None:
            continue
        found = find_preimage(start, i, target, chain, space, hasher)
        if found is not None:
            return found
    return None


def _check_digest(target: bytes, hasher: HashProvider) -> None:
    if len(target) != hasher.digest_size:
        raise ValueError(f"digest must be {hasher.digest_size} bytes, got {len(target)}")


class CrackSession:
    """One client bound to one provider.

    Not safe for concurrent ``crack`` calls; use one session per thread.
    """

    def __init__(
        self,
        provider: ProviderClient,
        scheme: Union[pir.Scheme, str] = pir.Scheme.NAIVE,
        key: Optional[pir.QraKey] = None,
        modulus_bits: int = pir.DEFAULT_MODULUS_BITS,
        seed: Optional[int] = None,
        expected: Optional[TableParams] = None,
    ):
        if isinstance(scheme, str):
            scheme = pir.Scheme[scheme.upper()]
        self.provider = provider
        self.scheme = pir.Scheme(scheme)
        self.info = provider.info()
        self._check_info(self.info, expected)
        self.space = self.info.space
        self.hasher = HashProvider(self.info.hash_id)
        max_len = expected.max_chain_len if expected is not None else 10 * self.info.M
        self.chain = ChainParams(self.info.M, self.info.dp_modulus, max_len)  # type: ignore[arg-type]
        self.rng: random.Random = random.Random(seed) if seed is not None else secrets.SystemRandom()
        self.key = key
        if self.scheme == pir.Scheme.CLASSIC and self.key is None:
            self.key = pir.keygen(modulus_bits, seed=None if seed is None else self.rng.getrandbits(64))
        self.trace = CrackTrace()
        self.attempts = 0
        self.failed_attempts = 0

    @staticmethod
    def _check_info(info: ServerInfo, expected: Optional[TableParams]) -> None:
        if info.record_size_bits != RECORD_SIZE_BITS:
            raise ParamsMismatch(f"server record size {info.record_size_bits} bits, expected {RECORD_SIZE_BITS}")
        if expected is None:
            return
        mine = (
            expected.M,
            expected.bucket_count,
            expected.dp_modulus,
            expected.space.alphabet,
            expected.space.length,
            expected.hash_id,
        )
        theirs = (info.M, info.bucket_count, info.dp_modulus, info.alphabet, info.length, info.hash_id)
        if mine != theirs:
            raise ParamsMismatch(f"server parameters {theirs} differ from expected {mine}")

    def compute_candidate_endpoints(self, target: bytes) -> list[Optional[int]]:
        return candidate_endpoints(target, self.chain, self.space, self.hasher)

    def _fetch_record(self, table_index: int, bucket: int) -> tuple[int, int]:
        count = self.info.bucket_count
        if self.scheme == pir.Scheme.NAIVE:
            body = self.provider.pir_query(table_index, pir.Scheme.NAIVE)
            record = pir.naive_decode(pir.NaiveResponse(body), bucket, count, RECORD_SIZE_BITS)
        else:
            assert self.key is not None
            query = pir.classic_query(bucket, count, self.key, self.rng)
            body = self.provider.pir_query(table_index, pir.Scheme.CLASSIC, pir.encode_classic_query(query))
            response = pir.decode_classic_response(body, self.key.modulus_bits, RECORD_SIZE_BITS)
            record = pir.classic_decode(response, self.key, RECORD_SIZE_BITS)
        self.trace.queries_sent += 1
        self.trace.events.append(("fetch", table_index))
        return _RECORD.unpack(record)

    def fetch_start(self, end_fingerprint: Optional[int], table_index: int) -> Optional[int]:
        """Privately fetch the chain start stored for ``end_fingerprint``.

        A ``None`` endpoint still costs one query, aimed at a dummy bucket.
        """
        if end_fingerprint is None:
            self._fetch_record(table_index, DUMMY_BUCKET)
            return None
        bucket = bucket_for(end_fingerprint, self.info.bucket_count)
        start, end = self._fetch_record(table_index, bucket)
        if start == EMPTY or end != end_fingerprint:
            return None
        return start

    def crack(self, target: bytes) -> Optional[bytes]:
        """Return a password hashing to ``target``, or None."""
        _check_digest(target, self.hasher)
        self.trace = trace = CrackTrace()
        self.attempts += 1
        trace.endpoints = self.compute_candidate_endpoints(target)
        try:
            trace.starts = [self.fetch_start(end, i) for i, end in enumerate(trace.endpoints)]
        except (ProtocolError, OSError, ValueError) as exc:
            self.failed_attempts += 1
            raise AttemptFailed(f"attempt aborted after {trace.queries_sent} queries: {exc}") from exc
        for i, start in enumerate(trace.starts):
            if start is None:
                continue
            trace.chains_walked += 1
            trace.events.append(("walk", i))
            found = find_preimage(start, i, target, self.chain, self.space, self.hasher)
            if found is not None:
                if self.hasher(found) != target:
                    raise AssertionError("chain walk returned a wrong preimage")
                return found
        return None
