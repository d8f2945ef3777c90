"""Oblivious password cracking: Hellman tables with distinguished end-points served over PIR."""

from .core import (
    ChainParams,
    HashId,
    HashProvider,
    InvalidParameters,
    PasswordSpace,
    derive_m,
    find_preimage,
    is_distinguished,
    reduce,
    walk_to_endpoint,
)
from .cracker import CrackSession, lookup
from .pir import QraKey, Scheme, keygen
from .provider import LocalProvider, ProviderServer, ProviderState, RemoteProvider
from .tables import BuildStats, HellmanTable, TableParams, build_all, build_table, deserialize, serialize

__all__ = [
    "BuildStats",
    "ChainParams",
    "CrackSession",
    "HashId",
    "HashProvider",
    "HellmanTable",
    "InvalidParameters",
    "LocalProvider",
    "PasswordSpace",
    "ProviderServer",
    "ProviderState",
    "QraKey",
    "RemoteProvider",
    "Scheme",
    "TableParams",
    "build_all",
    "build_table",
    "derive_m",
    "deserialize",
    "find_preimage",
    "is_distinguished",
    "keygen",
    "lookup",
    "reduce",
    "serialize",
    "walk_to_endpoint",
]
