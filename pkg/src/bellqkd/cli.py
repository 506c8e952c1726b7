"""Experiment runner.

``run`` simulates the pair source and detectors, drives both protocol
endpoints concurrently, and writes one CSV row per key block plus the
two final key files.  ``replay`` feeds recorded time-tag files through
the identical pipeline from coincidence matching onward.  ``keyrate``
prints a standalone security estimate.

Config files are flat ``key = value`` text with ``#`` comments; unknown
keys are rejected.  All keys default to the paper-like operating point.

Exit codes: 0 success, 2 insecure regime, 3 verification failure,
4 transport/protocol failure, 5 config or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import socket
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .physics import AttackConfig, ChannelConfig, JointSegmentSource, _time_origin_ticks
from .privamp import InsecureRegimeError, SecurityEstimate, binary_entropy, secret_fraction
from .protocol import (
    AbortReason,
    BlockStats,
    SessionConfig,
    SessionResult,
    SocketTransport,
    inproc_pair,
    run_transport_pair,
)
from .timetag import TagFileError, read_tag_file, seconds_to_ticks, write_tag_file

EXIT_OK = 0
EXIT_INSECURE = 2
EXIT_VERIFICATION = 3
EXIT_TRANSPORT = 4
EXIT_CONFIG = 5

CSV_COLUMNS = [
    "block_index", "t_start_s", "coincidences_per_s", "accidentals_per_s",
    "qber", "s_value", "s_stderr", "leak_ec_bits", "i_eve", "final_bits",
    "final_rate_bps",
]

# rough reconciliation overhead assumed by the standalone estimator
KEYRATE_EC_EFFICIENCY = 1.2
KEYRATE_TAG_BITS = 64


class ParseError(ValueError):
    """Config text could not be parsed; carries the offending line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RangeError(ValueError):
    """A config field value is outside its allowed range."""

    def __init__(self, field: str, message: str = ""):
        super().__init__(message or f"{field} out of range")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    channel: ChannelConfig
    attack: AttackConfig
    block_min_key_bits: int = 10000
    segment_seconds: float = 1.0
    finite_deduction: int = 0
    rate_multiplier: float = 1.0
    transport: str = "inproc"
    csv: Optional[str] = None
    keys: Optional[str] = None


_CHANNEL_FLOAT = (
    "pair_rate", "loss_db_bob", "detector_efficiency", "visibility_hv",
    "visibility_diag", "background_rate", "jitter_sigma", "bob_delay",
    "duration",
)
_CHANNEL_INT = ("rng_seed",)
_ATTACK_FLOAT = ("intercept_fraction", "attack_basis")
_TOP_INT = ("block_min_key_bits", "finite_deduction")
_TOP_FLOAT = ("segment_seconds", "rate_multiplier")
_TOP_STR = ("transport", "csv", "keys")

_ALL_KEYS = (
    set(_CHANNEL_FLOAT) | set(_CHANNEL_INT) | set(_ATTACK_FLOAT)
    | set(_TOP_INT) | set(_TOP_FLOAT) | set(_TOP_STR)
)


def _cast(key: str, value: str, lineno: int, kind):
    try:
        return kind(value)
    except ValueError:
        raise ParseError(lineno, f"bad {kind.__name__} for {key}: '{value}'")


def _validate_transport(value: str) -> str:
    parts = value.split()
    if not parts or parts[0] not in ("inproc", "socket"):
        raise RangeError("transport", f"transport must be 'inproc' or 'socket [HOST:PORT]', got '{value}'")
    if parts[0] == "inproc" and len(parts) != 1:
        raise RangeError("transport", "inproc takes no address")
    if parts[0] == "socket":
        if len(parts) > 2:
            raise RangeError("transport", "socket takes at most one HOST:PORT address")
        if len(parts) == 2:
            host, sep, port = parts[1].rpartition(":")
            if not sep or not host:
                raise RangeError("transport", f"bad socket address '{parts[1]}'")
            try:
                port_num = int(port)
            except ValueError:
                raise RangeError("transport", f"bad port in '{parts[1]}'")
            if not 0 <= port_num <= 65535:
                raise RangeError("transport", f"port {port_num} out of range")
    return " ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat key = value config text; all keys optional."""
    entries: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(lineno, "expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if " #" in value:
            value = value.split(" #", 1)[0].rstrip()
        if not key:
            raise ParseError(lineno, "missing key before '='")
        if not value:
            raise ParseError(lineno, f"missing value for '{key}'")
        if key not in _ALL_KEYS:
            raise ParseError(lineno, f"unknown key '{key}'")
        if key in entries:
            raise ParseError(lineno, f"duplicate key '{key}'")
        entries[key] = (value, lineno)

    channel_kwargs: dict = {}
    attack_kwargs: dict = {}
    top_kwargs: dict = {}
    for key, (value, lineno) in entries.items():
        if key in _CHANNEL_FLOAT:
            channel_kwargs[key] = _cast(key, value, lineno, float)
        elif key in _CHANNEL_INT:
            channel_kwargs[key] = _cast(key, value, lineno, int)
        elif key in _ATTACK_FLOAT:
            attack_kwargs[key] = _cast(key, value, lineno, float)
        elif key in _TOP_INT:
            top_kwargs[key] = _cast(key, value, lineno, int)
        elif key in _TOP_FLOAT:
            top_kwargs[key] = _cast(key, value, lineno, float)
        else:
            top_kwargs[key] = value

    # Probe each field on its own so range failures name the field.
    for key, value in channel_kwargs.items():
        try:
            ChannelConfig(**{key: value})
        except ValueError as exc:
            raise RangeError(key, str(exc))
    for key, value in attack_kwargs.items():
        try:
            AttackConfig(**{key: value})
        except ValueError as exc:
            raise RangeError(key, str(exc))
    channel = ChannelConfig(**channel_kwargs)
    attack = AttackConfig(**attack_kwargs)
    if channel.rng_seed < 0:
        raise RangeError("rng_seed", "rng_seed must be >= 0")

    if top_kwargs.get("block_min_key_bits", 10000) < 1:
        raise RangeError("block_min_key_bits", "block_min_key_bits must be >= 1")
    if top_kwargs.get("segment_seconds", 1.0) <= 0:
        raise RangeError("segment_seconds", "segment_seconds must be > 0")
    if top_kwargs.get("finite_deduction", 0) < 0:
        raise RangeError("finite_deduction", "finite_deduction must be >= 0")
    if not 0.0 < top_kwargs.get("rate_multiplier", 1.0) <= 1.0:
        raise RangeError("rate_multiplier", "rate_multiplier must be in (0, 1]")
    if "transport" in top_kwargs:
        top_kwargs["transport"] = _validate_transport(top_kwargs["transport"])

    return ExperimentConfig(channel=channel, attack=attack, **top_kwargs)


def _session_config(cfg: ExperimentConfig) -> SessionConfig:
    return SessionConfig(
        block_min_key_bits=cfg.block_min_key_bits,
        finite_deduction=cfg.finite_deduction,
        rate_multiplier=cfg.rate_multiplier,
        seed=cfg.channel.rng_seed,
        segment_seconds=cfg.segment_seconds,
    )


def _make_transports(transport: str, timeout: float):
    parts = transport.split()
    if parts[0] == "inproc":
        return inproc_pair(timeout=timeout)
    addr = parts[1] if len(parts) == 2 else "127.0.0.1:0"
    host, _, port = addr.rpartition(":")
    host = host or "127.0.0.1"
    listener = socket.create_server((host, int(port)))
    try:
        bound_port = listener.getsockname()[1]
        listener.settimeout(10.0)
        client = socket.create_connection((host, bound_port), timeout=10.0)
        server, _ = listener.accept()
    finally:
        listener.close()
    for s in (server, client):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketTransport(server, timeout=timeout), SocketTransport(client, timeout=timeout)


def _stats_row(stats: BlockStats) -> list:
    dt = stats.duration
    per_s = (1.0 / dt) if dt > 0 else 0.0
    return [
        stats.block_index,
        stats.t_start,
        stats.coincidence_count * per_s,
        stats.accidental_count * per_s,
        stats.qber,
        stats.s_value,
        stats.s_stderr,
        stats.leak_ec,
        stats.i_eve,
        stats.final_bits,
        stats.final_bits * per_s,
    ]


def format_csv(stats: List[BlockStats]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in stats:
        writer.writerow(_stats_row(s))
    return out.getvalue()


def _session_exit_code(alice: SessionResult, bob: SessionResult) -> int:
    if alice.done and bob.done:
        return EXIT_OK
    reasons = {r.abort_reason for r in (alice, bob) if r.abort_reason is not None}
    if AbortReason.INSECURE_REGIME in reasons:
        return EXIT_INSECURE
    if AbortReason.VERIFICATION_FAILED in reasons:
        return EXIT_VERIFICATION
    return EXIT_TRANSPORT


def _execute(cfg: ExperimentConfig, alice_segments, bob_segments,
             csv_path: Optional[str], keys_dir: Optional[str]) -> int:
    session_cfg = _session_config(cfg)
    t_alice, t_bob = _make_transports(cfg.transport, session_cfg.timeout)
    alice, bob = run_transport_pair(t_alice, t_bob, alice_segments, bob_segments, session_cfg)
    code = _session_exit_code(alice, bob)

    if code == EXIT_OK:
        if [s.encode() for s in alice.stats] != [s.encode() for s in bob.stats]:
            print("error: endpoints disagree on block statistics", file=sys.stderr)
            code = EXIT_TRANSPORT
        elif alice.key_bytes() != bob.key_bytes():
            print("error: final keys differ", file=sys.stderr)
            code = EXIT_TRANSPORT

    text = format_csv(bob.stats)
    if csv_path:
        Path(csv_path).write_text(text)
    else:
        sys.stdout.write(text)

    if keys_dir:
        directory = Path(keys_dir)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "alice.key").write_bytes(alice.key_bytes())
        (directory / "bob.key").write_bytes(bob.key_bytes())

    if csv_path:
        total = sum(s.final_bits for s in bob.stats)
        print(f"{len(bob.stats)} blocks, {total} final key bits, exit {code}")
    return code


def _tee_segments(segments, store: list):
    for seg in segments:
        store.append(seg)
        yield seg


def _dump_tag_store(store: list, path: Path, side: str) -> None:
    if store:
        ticks = np.concatenate([t for t, _ in store])
        dets = np.concatenate([d for _, d in store])
    else:
        ticks = np.empty(0, dtype=np.uint64)
        dets = np.empty(0, dtype=np.uint8)
    write_tag_file(path, side, ticks, dets)


def run_experiment(cfg: ExperimentConfig, csv_path: Optional[str] = None,
                   keys_dir: Optional[str] = None,
                   dump_tags_dir: Optional[str] = None) -> int:
    """Simulate, run both endpoints, write outputs; returns the exit code."""
    try:
        source = JointSegmentSource(cfg.channel, cfg.attack,
                                    segment_seconds=cfg.segment_seconds)
    except ValueError as exc:
        raise RangeError("segment_seconds", str(exc))
    alice_segments = source.segments("alice")
    bob_segments = source.segments("bob")
    stores: dict = {}
    if dump_tags_dir:
        stores = {"alice": [], "bob": []}
        alice_segments = _tee_segments(alice_segments, stores["alice"])
        bob_segments = _tee_segments(bob_segments, stores["bob"])
    code = _execute(cfg, alice_segments, bob_segments, csv_path, keys_dir)
    if dump_tags_dir:
        directory = Path(dump_tags_dir)
        directory.mkdir(parents=True, exist_ok=True)
        _dump_tag_store(stores["alice"], directory / "alice.tags", "alice")
        _dump_tag_store(stores["bob"], directory / "bob.tags", "bob")
    return code


def _file_segments(ticks: np.ndarray, detectors: np.ndarray,
                   channel: ChannelConfig, segment_seconds: float) -> Iterator:
    """Re-cut a recorded stream on the boundaries a live run would use.

    Anchored to the file's own first tag, so a recorded run replays into
    byte-identical batches while a stream recorded at a far-away time
    still produces data-bearing segments (whose mismatch then surfaces as
    a missing correlation peak, not as silent emptiness).
    """
    n_segments = (int(math.ceil(channel.duration / segment_seconds))
                  if channel.duration > 0 else 0)
    if n_segments == 0 or len(ticks) == 0:
        return
    order = np.argsort(ticks, kind="stable")
    ticks = ticks[order]
    detectors = detectors[order]
    origin = _time_origin_ticks(channel)
    approx_seg = max(1, seconds_to_ticks(segment_seconds))
    k0 = max(0, (int(ticks[0]) - origin) // approx_seg)
    start = 0
    for k in range(k0, k0 + n_segments):
        if k == k0 + n_segments - 1:
            cut = len(ticks)
        else:
            boundary = origin + seconds_to_ticks((k + 1) * segment_seconds)
            cut = int(np.searchsorted(ticks, np.uint64(boundary), side="left"))
        yield ticks[start:cut], detectors[start:cut]
        start = cut


def replay(alice_path: str, bob_path: str, cfg: ExperimentConfig,
           csv_path: Optional[str] = None, keys_dir: Optional[str] = None) -> int:
    """Run the pipeline from matching onward on recorded tag files."""
    side_a, ticks_a, dets_a = read_tag_file(alice_path)
    side_b, ticks_b, dets_b = read_tag_file(bob_path)
    if side_a != "alice":
        raise TagFileError(f"{alice_path} records side '{side_a}', expected alice")
    if side_b != "bob":
        raise TagFileError(f"{bob_path} records side '{side_b}', expected bob")
    alice_segments = _file_segments(ticks_a, dets_a, cfg.channel, cfg.segment_seconds)
    bob_segments = _file_segments(ticks_b, dets_b, cfg.channel, cfg.segment_seconds)
    return _execute(cfg, alice_segments, bob_segments, csv_path, keys_dir)


def keyrate_estimate(s_value: float, qber: float, n: int) -> SecurityEstimate:
    """Security estimate for a hypothetical block.

    The reconciliation leak is modeled as 1.2 n h(qber) plus a 64-bit
    verification tag, matching the interactive reconciler's target.
    """
    if n < 1:
        raise RangeError("n", "n must be >= 1")
    if not 0.0 <= qber <= 0.5:
        raise RangeError("qber", "qber must be in [0, 0.5]")
    leak = int(math.ceil(KEYRATE_EC_EFFICIENCY * n * float(binary_entropy(qber))))
    leak += KEYRATE_TAG_BITS
    return secret_fraction(n, leak, s_value)


def _load_config(path: str) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        if args.seed < 0:
            raise RangeError("rng_seed", "seed must be >= 0")
        cfg = replace(cfg, channel=replace(cfg.channel, rng_seed=args.seed))
    if getattr(args, "transport", None):
        cfg = replace(cfg, transport=_validate_transport(" ".join(args.transport)))
    if getattr(args, "csv", None):
        cfg = replace(cfg, csv=args.csv)
    if getattr(args, "keys", None):
        cfg = replace(cfg, keys=args.keys)
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    return run_experiment(cfg, csv_path=cfg.csv, keys_dir=cfg.keys,
                          dump_tags_dir=args.dump_tags)


def _cmd_replay(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    return replay(args.alice, args.bob, cfg, csv_path=cfg.csv, keys_dir=cfg.keys)


def _cmd_keyrate(args) -> int:
    try:
        est = keyrate_estimate(args.s, args.qber, args.n)
    except InsecureRegimeError as exc:
        print(f"insecure: {exc}", file=sys.stderr)
        return EXIT_INSECURE
    print(f"n               {est.n}")
    print(f"s_value         {est.s_value}")
    print(f"i_eve           {est.i_eve:.6f}")
    print(f"leak_ec_bits    {est.leak_ec}")
    print(f"finite_deduction {est.finite_deduction}")
    print(f"rate_multiplier {est.rate_multiplier}")
    print(f"final_length    {est.final_length}")
    print(f"secret_fraction {est.secret_fraction_value:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellqkd",
        description="Entanglement-based key distribution simulator and protocol runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate and run a full key-distribution session")
    p_run.add_argument("--config", required=True, help="path to key = value config file")
    p_run.add_argument("--transport", nargs="+", metavar="KIND",
                       help="'inproc' or 'socket [HOST:PORT]' (overrides config)")
    p_run.add_argument("--csv", help="write per-block CSV here instead of stdout")
    p_run.add_argument("--keys", help="directory for alice.key / bob.key")
    p_run.add_argument("--seed", type=int, help="override the config rng_seed")
    p_run.add_argument("--dump-tags", dest="dump_tags", metavar="DIR",
                       help="also record both raw tag streams (short runs only)")

    p_rep = sub.add_parser("replay", help="re-run matching onward from recorded tag files")
    p_rep.add_argument("--alice", required=True, help="Alice-side tag file")
    p_rep.add_argument("--bob", required=True, help="Bob-side tag file")
    p_rep.add_argument("--config", required=True)
    p_rep.add_argument("--transport", nargs="+", metavar="KIND")
    p_rep.add_argument("--csv")
    p_rep.add_argument("--keys")

    p_key = sub.add_parser("keyrate", help="print a security estimate for given S, QBER, n")
    p_key.add_argument("--s", type=float, required=True, help="CHSH value")
    p_key.add_argument("--qber", type=float, required=True)
    p_key.add_argument("--n", type=int, required=True, help="reconciled block length")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "replay": _cmd_replay, "keyrate": _cmd_keyrate}
    try:
        return handlers[args.command](args)
    except (ParseError, RangeError, TagFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
