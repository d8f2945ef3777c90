"""Command line entry point: build, serve, crack, lookup, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import bench, pir
from .core import HashProvider, InvalidParameters, PasswordSpace
from .cracker import AttemptFailed, CrackSession, ParamsMismatch, lookup
from .provider import ProtocolError, RemoteProvider, parse_address, serve
from .tables import CorruptFile, InvariantViolation, TableExhausted, TableParams, build_all, load, save

log = logging.getLogger("oblivcrack")


def _csv_list(cast):
    def parse(text: str):
        try:
            return [cast(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _digest(text: str) -> bytes:
    try:
        return bytes.fromhex(text.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a hex digest: {text!r}") from exc


def cmd_build(args: argparse.Namespace) -> int:
    space = PasswordSpace(args.alphabet.encode("ascii"), args.length)
    hasher = HashProvider.by_name(args.hash)
    params = TableParams.from_alpha(space, args.alpha, args.beta, hasher.algorithm)
    print(f"N = {space.size()}")
    print(f"M = {params.M}, bucket_count = {params.bucket_count}")
    tables, stats, _ = build_all(params, workers=args.workers)
    size = save(args.out, tables, params)
    print(
        f"chains_attempted = {stats.chains_attempted}, "
        f"discarded_collision = {stats.chains_discarded_collision}, "
        f"discarded_cycle = {stats.chains_discarded_cycle}"
    )
    print(f"wrote {size} bytes to {args.out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    serve(args.tables, parse_address(args.listen))
    return 0


def _report(found: Optional[bytes]) -> None:
    print(found.decode("ascii") if found is not None else "NOT FOUND")


def cmd_crack(args: argparse.Namespace) -> int:
    host, port = parse_address(args.server)
    with RemoteProvider(host, port) as provider:
        session = CrackSession(provider, args.scheme, modulus_bits=args.modulus_bits, seed=args.seed)
        found = session.crack(args.hash)
        _report(found)
        t = session.trace
        cycled = sum(e is None for e in t.endpoints)
        print(
            f"queries_sent = {t.queries_sent}, endpoints_cycled = {cycled}, "
            f"chains_walked = {t.chains_walked}, bytes_up = {provider.bytes_up}, "
            f"bytes_down = {provider.bytes_down}"
        )
    return 0


def cmd_lookup(args: argparse.Namespace) -> int:
    tables, params = load(args.tables)
    _report(lookup(args.hash, tables, params))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    rows = bench.run_grid(
        args.alphabet.encode("ascii"),
        args.lengths,
        args.alphas,
        trials=args.trials,
        scheme=pir.Scheme[args.scheme.upper()],
        beta=args.beta,
        modulus_bits=args.modulus_bits,
        seed=args.seed,
        workers=args.workers,
        transport=args.transport,
    )
    if args.out == "-":
        bench.write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(rows, fh)
        for r in rows:
            status = r.error or f"{r.passwords_cracked}/{r.passwords_attempted} cracked in {r.wall_time_total:.3f}s"
            print(f"ell={r.ell} alpha={r.alpha} M={r.M}: {status}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oblivcrack", description="Oblivious password cracking with Hellman tables and PIR.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="compute tables and write a .hpt file")
    p.add_argument("--alphabet", required=True)
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("--hash", default="md5")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("serve", help="serve a .hpt file over TCP")
    p.add_argument("--tables", required=True)
    p.add_argument("--listen", default="127.0.0.1:7878")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("crack", help="reverse one digest against a provider")
    p.add_argument("--server", required=True, help="host:port")
    p.add_argument("--scheme", choices=["naive", "classic"], default="classic")
    p.add_argument("--hash", type=_digest, required=True, help="hex digest to reverse")
    p.add_argument("--modulus-bits", type=int, default=pir.DEFAULT_MODULUS_BITS)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_crack)

    p = sub.add_parser("lookup", help="reverse one digest directly from a .hpt file (no PIR)")
    p.add_argument("--tables", required=True)
    p.add_argument("--hash", type=_digest, required=True)
    p.set_defaults(func=cmd_lookup)

    p = sub.add_parser("bench", help="run the runtime grid and write CSV")
    p.add_argument("--alphabet", default="abcdef")
    p.add_argument("--lengths", type=_csv_list(int), default=[4, 5, 6])
    p.add_argument("--alphas", type=_csv_list(float), default=[0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--scheme", choices=["naive", "classic"], default="naive")
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("--modulus-bits", type=int, default=pir.DEFAULT_MODULUS_BITS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="processes for table builds")
    p.add_argument("--transport", choices=["local", "tcp"], default="local")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (
        InvalidParameters,
        TableExhausted,
        CorruptFile,
        InvariantViolation,
        ParamsMismatch,
        AttemptFailed,
        ProtocolError,
        ConnectionError,
        OSError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
