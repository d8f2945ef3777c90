"""Benchmark grid: build tables per (length, alpha) cell and crack random passwords."""

from __future__ import annotations

import csv
import logging
import random
import time
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Optional, TextIO

from . import pir
from .core import HashId, PasswordSpace
from .cracker import CrackSession
from .provider import LocalProvider, ProviderServer, ProviderState, RemoteProvider
from .tables import TableParams, build_all

log = logging.getLogger(__name__)


@dataclass
class BenchRow:
    ell: int
    N: int
    alpha: float
    M: int
    scheme: str
    passwords_attempted: int = 0
    passwords_cracked: int = 0
    wall_time_total: float = 0.0
    bytes_up: int = 0
    bytes_down: int = 0
    server_mulmods: int = 0
    error: str = ""


CSV_COLUMNS = [f.name for f in fields(BenchRow)]


def run_cell(
    alphabet: bytes,
    ell: int,
    alpha: float,
    trials: int,
    scheme: pir.Scheme,
    beta: float = 4.0,
    hash_id: HashId = HashId.MD5,
    modulus_bits: int = pir.DEFAULT_MODULUS_BITS,
    seed: int = 0,
    workers: int = 1,
    transport: str = "local",
) -> BenchRow:
    """One grid cell. Only the cracking phase is timed, table building is not."""
    space = PasswordSpace(alphabet, ell)
    row = BenchRow(ell=ell, N=space.size(), alpha=alpha, M=0, scheme=scheme.name.lower())
    try:
        params = TableParams.from_alpha(space, alpha, beta, hash_id)
        row.M = params.M
        tables, _, _ = build_all(params, workers=workers)
        state = ProviderState(tables, params)
        rng = random.Random(f"{seed}:{ell}:{alpha}")
        targets = [params.hasher(space.index_to_password(rng.randrange(space.size()))) for _ in range(trials)]

        server = None
        if transport == "tcp":
            server = ProviderServer(state)
            server.start_background()
            provider = RemoteProvider(*server.server_address[:2])
        else:
            provider = LocalProvider(state)
        try:
            session = CrackSession(provider, scheme, modulus_bits=modulus_bits, seed=rng.getrandbits(64), expected=params)
            up0, down0 = provider.bytes_up, provider.bytes_down
            t0 = time.perf_counter()
            for target in targets:
                row.passwords_attempted += 1
                if session.crack(target) is not None:
                    row.passwords_cracked += 1
            row.wall_time_total = time.perf_counter() - t0
            row.bytes_up = provider.bytes_up - up0
            row.bytes_down = provider.bytes_down - down0
        finally:
            provider.close()
            if server is not None:
                server.shutdown()
                server.server_close()
        if isinstance(provider, LocalProvider):
            row.server_mulmods = provider.counters.mulmods
        elif server is not None:
            row.server_mulmods = sum(c.mulmods for c in server.connections)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the grid
        log.warning("bench cell ell=%d alpha=%s failed: %s", ell, alpha, exc)
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_grid(
    alphabet: bytes,
    lengths: Iterable[int],
    alphas: Iterable[float],
    trials: int = 100,
    scheme: pir.Scheme = pir.Scheme.NAIVE,
    **kwargs,
) -> list[BenchRow]:
    rows = []
    alphas = list(alphas)
    for ell in lengths:
        for alpha in alphas:
            row = run_cell(alphabet, ell, alpha, trials, scheme, **kwargs)
            log.info("%s", row)
            rows.append(row)
    return rows


def write_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        d = asdict(row)
        d["wall_time_total"] = f"{row.wall_time_total:.6f}"
        writer.writerow(d)


def read_csv(src: TextIO) -> list[dict[str, str]]:
    return list(csv.DictReader(src))


def count_inversions(values: list[float]) -> int:
    """Number of adjacent pairs where the sequence goes down."""
    return sum(1 for a, b in zip(values, values[1:]) if b < a)


def trend_inversions(rows: Iterable[BenchRow], ell: Optional[int] = None) -> dict[int, int]:
    """Per password length, count wall-time inversions with cells ordered by M."""
    by_ell: dict[int, list[BenchRow]] = {}
    for r in rows:
        if not r.error and (ell is None or r.ell == ell):
            by_ell.setdefault(r.ell, []).append(r)
    out = {}
    for k, cells in by_ell.items():
        cells.sort(key=lambda r: (r.M, r.alpha))
        out[k] = count_inversions([r.wall_time_total for r in cells])
    return out
