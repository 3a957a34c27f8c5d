"""Operator-facing command line: rewrite, replay, analyze, serve-mock,
calibrate, volume.

Exit codes are stable: 0 ok, 1 I/O failure, 2 decode failure, 3 transport
unavailable, 4 nothing selectable to replay, 5 calibration threshold
failure. Set PRIMER_LOG=debug|info|warning for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from primer.capture_io import CaptureError, load, save
from primer.mock_honeypot import (
    BindFailure,
    default_profile,
    harvest_log,
    load_profile,
    serve,
)
from primer.packet_codec import CodecError, decode_packet
from primer.replay_engine import (
    AttackerNotFound,
    NoSelectableTraffic,
    SendFailure,
    TimingPolicy,
    build_replay_plan,
    execute_replay,
    session_to_capture,
)
from primer.rewrite_engine import DecodeFailure, RewriteSpec, rewrite_capture
from primer.traffic_analysis import (
    EmptyCapture,
    accuracy_report,
    accuracy_to_dict,
    conversation_table,
    format_accuracy_text,
    format_conversation_tsv,
    volume_series,
    volume_to_dict,
    write_volume_csv,
)
from primer.transport import LoopbackTransport, SocketListener, SocketTransport, TransportUnavailable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_DECODE = 2
EXIT_TRANSPORT = 3
EXIT_NO_TRAFFIC = 4
EXIT_THRESHOLD = 5


def _fail(message: str) -> None:
    print(f"primer: {message}", file=sys.stderr)


def _parse_assignment(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected OLD=NEW, got {text!r}")
    old, new = text.split("=", 1)
    return old.strip(), new.strip()


def _parse_ports(text: str) -> set[tuple[str, int]]:
    """Parse 'tcp/22,tcp/23,udp/53' into {(proto, port)} pairs."""
    ports = set()
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "/" not in item:
            raise argparse.ArgumentTypeError(f"expected PROTO/PORT, got {item!r}")
        proto, port = item.split("/", 1)
        proto = proto.lower()
        if proto not in ("tcp", "udp"):
            raise argparse.ArgumentTypeError(f"protocol must be tcp or udp, got {proto!r}")
        ports.add((proto, int(port)))
    return ports


def _parse_port_remap(text: str) -> tuple[str, int, int]:
    """Parse 'tcp:23=2323' for rewrite port maps."""
    if ":" not in text or "=" not in text:
        raise argparse.ArgumentTypeError(f"expected PROTO:OLD=NEW, got {text!r}")
    proto, rest = text.split(":", 1)
    old, new = rest.split("=", 1)
    proto = proto.lower()
    if proto not in ("tcp", "udp"):
        raise argparse.ArgumentTypeError(f"protocol must be tcp or udp, got {proto!r}")
    return proto, int(old), int(new)


def _parse_bind_remap(text: str) -> tuple[int, int]:
    old, new = _parse_assignment(text)
    return int(old), int(new)


def _timing_policy(args: argparse.Namespace) -> TimingPolicy:
    kind = args.timing
    if kind in ("recorded", "as-recorded"):
        return TimingPolicy.as_recorded(scale=args.scale)
    if kind == "compressed":
        return TimingPolicy.compressed()
    if kind == "rate":
        if args.rate is None:
            raise argparse.ArgumentTypeError("--timing rate requires --rate")
        return TimingPolicy.fixed_rate(args.rate)
    raise argparse.ArgumentTypeError(f"unknown timing {kind!r}")


def _infer_endpoints(capture) -> tuple[str | None, str | None]:
    """Attacker/target default to the first decodable packet's src/dst."""
    for record in capture.records:
        try:
            packet = decode_packet(record, capture.link_type)
        except CodecError:
            continue
        return packet.src_addr, packet.dst_addr
    return None, None


# ---------------------------------------------------------------------------
# subcommands


def cmd_rewrite(args: argparse.Namespace) -> int:
    capture = load(args.pcap)
    spec = RewriteSpec(
        ip_map=dict(args.map or []),
        port_map={(p, o): n for p, o, n in (args.port_map or [])},
        mac_map=dict(args.mac_map or []),
    )
    result = rewrite_capture(capture, spec, skip_bad=args.skip_bad)
    save(result.capture, args.out)
    report = sys.stderr if args.out == "-" else sys.stdout  # keep the pcap stream clean
    for (old, new), count in sorted(result.ip_substitutions.items()):
        print(f"ip {old} -> {new}: {count} packets", file=report)
    for (proto, old, new), count in sorted(result.port_substitutions.items()):
        print(f"port {proto}/{old} -> {new}: {count} packets", file=report)
    for (old, new), count in sorted(result.mac_substitutions.items()):
        print(f"mac {old} -> {new}: {count} packets", file=report)
    skipped = len(result.skipped)
    print(f"wrote {len(result.capture.records)} records to {args.out}"
          + (f" ({skipped} skipped)" if skipped else ""), file=report)
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    capture = load(args.pcap)
    plan = build_replay_plan(
        capture,
        args.attacker,
        mode=args.mode,
        policy=_timing_policy(args),
        only_ports=_parse_ports(args.only_ports) if args.only_ports else None,
        target=args.target,
    )

    handle = None
    if args.transport == "loopback":
        transport = LoopbackTransport()
        if args.profile:
            profile = load_profile(args.profile)
            if profile.identity != plan.target_addr:
                profile = dataclasses.replace(profile, identity=plan.target_addr)
            handle = serve(profile, transport)
    else:
        transport = SocketTransport(
            connect_host=args.connect_host, unsafe_raw=args.unsafe_raw
        )
    try:
        session = execute_replay(
            plan, transport, reply_window=args.reply_window, fail_fast=args.fail_fast
        )
    finally:
        if handle is not None:
            handle.shutdown()

    if args.out:
        save(session_to_capture(session), args.out)
    report = sys.stderr if args.out == "-" else sys.stdout
    failures = f", {len(session.send_failures)} failed" if session.send_failures else ""
    print(f"sent {len(session.sent)} packets, received {len(session.received)}{failures}",
          file=report)
    if args.out:
        print(f"session capture written to {args.out}", file=report)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    capture = load(args.pcap)
    rows = conversation_table(capture, sort=args.sort, merge_directions=args.merge_directions)
    report = None
    if args.target:
        open_ports = _parse_ports(args.open_ports) if args.open_ports else set()
        report = accuracy_report(capture, args.target, open_ports)

    if args.format == "json":
        doc = {"conversations": [dataclasses.asdict(r) for r in rows]}
        if report is not None:
            doc["accuracy"] = accuracy_to_dict(report)
        print(json.dumps(doc, indent=2))
    else:
        sys.stdout.write(format_conversation_tsv(rows))
        if report is not None:
            sys.stdout.write("\n")
            sys.stdout.write(format_accuracy_text(report))
    return EXIT_OK


def cmd_volume(args: argparse.Namespace) -> int:
    capture = load(args.pcap)
    series = volume_series(capture, args.bin_width)
    if args.format == "json":
        print(json.dumps(volume_to_dict(series), indent=2))
    elif args.csv and args.csv != "-":
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            write_volume_csv(series, fh)
        print(f"wrote {len(series.bins)} bins to {args.csv}", file=sys.stderr)
    else:
        write_volume_csv(series, sys.stdout)
    if args.plot:
        from primer.plotting import render_volume_figure

        render_volume_figure(series, args.plot, title=f"Traffic volume: {Path(args.pcap).name}")
        print(f"figure written to {args.plot}", file=sys.stderr)
    return EXIT_OK


def cmd_serve_mock(args: argparse.Namespace) -> int:
    profile = load_profile(args.profile) if args.profile else default_profile()
    listener = SocketListener(
        bind_addr=args.bind,
        port_map=dict(args.remap or []) or None,
    )
    handle = serve(profile, listener)
    for proto, port in sorted(profile.services):
        print(f"listening {proto}/{listener.real_port(port)} (service {proto}/{port})")
    print("serving; interrupt to stop", file=sys.stderr)
    deadline = time.monotonic() + args.duration if args.duration else None
    try:
        while deadline is None or time.monotonic() < deadline:
            time.sleep(0.1)
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    transcripts = harvest_log(handle)
    print(f"{len(transcripts)} connections logged")
    if args.transcripts:
        doc = [
            {
                "peer": list(t.peer),
                "port": t.port,
                "protocol": t.protocol,
                "opened_at": t.opened_at,
                "closed_at": t.closed_at,
                "inbound": t.inbound_bytes.decode("latin-1"),
                "outbound": t.outbound_bytes.decode("latin-1"),
            }
            for t in transcripts
        ]
        with open(args.transcripts, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
        print(f"transcripts written to {args.transcripts}")
    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace) -> int:
    capture = load(args.pcap)
    profile = load_profile(args.profile) if args.profile else default_profile()

    inferred_attacker, inferred_target = _infer_endpoints(capture)
    attacker = args.attacker or inferred_attacker
    target = args.target or inferred_target
    if attacker is None or target is None:
        raise NoSelectableTraffic("cannot infer endpoints from an empty capture")
    if profile.identity != target:
        logger.info("profile identity %s adjusted to target %s", profile.identity, target)
        profile = dataclasses.replace(profile, identity=target)

    transport = LoopbackTransport()
    handle = serve(profile, transport)
    try:
        plan = build_replay_plan(
            capture, attacker, mode=args.mode, policy=_timing_policy(args), target=target
        )
        session = execute_replay(plan, transport, reply_window=args.reply_window)
    finally:
        handle.shutdown()

    merged = session_to_capture(session)
    if args.out:
        save(merged, args.out)
    report = accuracy_report(merged, target, profile.open_ports)
    series = volume_series(merged, bin_width=args.bin_width)
    burst = series.burst_window.get(attacker, 0.0)

    acc_ok = report.accuracy >= Fraction(args.min_accuracy).limit_denominator(10**6)
    reply_ok = report.reply_fraction >= Fraction(args.min_reply).limit_denominator(10**6)
    passed = acc_ok and reply_ok

    doc = {
        "attacker": attacker,
        "target": target,
        "sent": len(session.sent),
        "received": len(session.received),
        "send_failures": len(session.send_failures),
        "accuracy": float(report.accuracy),
        "reply_fraction": float(report.reply_fraction),
        "reply_percent": report.reply_percent,
        "burst_window": burst,
        "thresholds": {"accuracy": args.min_accuracy, "reply_fraction": args.min_reply},
        "passed": passed,
    }
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        print(f"attacker {attacker} -> target {target}")
        print(f"sent {doc['sent']}, received {doc['received']}, failures {doc['send_failures']}")
        print(
            f"accuracy {float(report.accuracy):.4f} "
            f"({report.accuracy.numerator}/{report.accuracy.denominator}) "
            f"[threshold {args.min_accuracy}] {'ok' if acc_ok else 'FAIL'}"
        )
        print(
            f"reply fraction {report.reply_percent}% "
            f"({report.reply_fraction.numerator}/{report.reply_fraction.denominator}) "
            f"[threshold {args.min_reply}] {'ok' if reply_ok else 'FAIL'}"
        )
        print(f"burst window {burst:.6f} s")
        print("calibration PASS" if passed else "calibration FAIL")
    return EXIT_OK if passed else EXIT_THRESHOLD


# ---------------------------------------------------------------------------
# parser


def _add_timing_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--timing",
        choices=["recorded", "compressed", "rate"],
        default="recorded",
        help="schedule: recorded gaps, all-at-once, or fixed rate",
    )
    parser.add_argument("--rate", type=float, help="packets per second for --timing rate")
    parser.add_argument(
        "--scale", type=float, default=1.0, help="gap multiplier for --timing recorded"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="primer",
        description="Replay recorded attack traffic at a honeypot and measure the interaction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rewrite", help="remap addresses/ports/MACs and reset checksums")
    p.add_argument("--pcap", required=True, help="input capture")
    p.add_argument("--out", required=True, help="output capture")
    p.add_argument(
        "--map", action="append", type=_parse_assignment, metavar="OLD=NEW",
        help="IPv4 remap (repeatable)",
    )
    p.add_argument(
        "--port-map", action="append", type=_parse_port_remap, metavar="PROTO:OLD=NEW",
        help="port remap (repeatable)",
    )
    p.add_argument(
        "--mac-map", action="append", type=_parse_assignment, metavar="OLD=NEW",
        help="MAC remap (repeatable)",
    )
    p.add_argument("--skip-bad", action="store_true", help="skip undecodable records")
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("replay", help="send the attacker side of a capture at a target")
    p.add_argument("--pcap", required=True)
    p.add_argument("--attacker", required=True, help="source address to replay")
    p.add_argument("--target", required=True, help="endpoint address")
    p.add_argument("--mode", choices=["auto", "raw", "session"], default="auto")
    p.add_argument("--transport", choices=["loopback", "socket"], default="loopback")
    p.add_argument("--profile", help="serve this mock-honeypot profile on the loopback")
    p.add_argument("--connect-host", help="real host to dial instead of the target address")
    p.add_argument("--reply-window", type=float, default=2.0)
    p.add_argument("--only-ports", help="restrict to PROTO/PORT,... destinations")
    p.add_argument("--fail-fast", action="store_true")
    p.add_argument("--unsafe-raw", action="store_true", help="allow raw injection on OS sockets")
    p.add_argument("--out", help="write merged session capture here")
    _add_timing_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="conversation table and accuracy report")
    p.add_argument("--pcap", required=True)
    p.add_argument("--target", help="honeypot address for the accuracy report")
    p.add_argument("--open-ports", help="open services, e.g. tcp/22,tcp/23")
    p.add_argument("--sort", choices=["first-seen", "addr"], default="first-seen")
    p.add_argument("--merge-directions", action="store_true")
    p.add_argument("--format", choices=["tsv", "json"], default="tsv")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("volume", help="traffic volume bins, gaps, and bursts")
    p.add_argument("--pcap", required=True)
    p.add_argument("--bin-width", type=float, default=0.01, help="bin width in seconds")
    p.add_argument("--csv", help="write bins CSV here instead of stdout")
    p.add_argument("--plot", help="render a volume figure to this image file")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("serve-mock", help="run the mock honeypot on OS sockets")
    p.add_argument("--profile", help="profile JSON (default: SSH+Telnet echo profile)")
    p.add_argument("--bind", default="127.0.0.1")
    p.add_argument(
        "--remap", action="append", type=_parse_bind_remap, metavar="PORT=REAL",
        help="bind a service port elsewhere (repeatable)",
    )
    p.add_argument("--transcripts", help="write connection transcripts JSON on shutdown")
    p.add_argument(
        "--duration", type=float, help="stop after this many seconds (default: run until interrupted)"
    )
    p.set_defaults(func=cmd_serve_mock)

    p = sub.add_parser("calibrate", help="replay against the mock honeypot and score it")
    p.add_argument("--pcap", required=True)
    p.add_argument("--profile", help="profile JSON (default: SSH+Telnet echo profile)")
    p.add_argument("--attacker", help="default: source of the first packet")
    p.add_argument("--target", help="default: destination of the first packet")
    p.add_argument("--mode", choices=["auto", "raw", "session"], default="auto")
    p.add_argument("--reply-window", type=float, default=2.0)
    p.add_argument("--bin-width", type=float, default=0.01)
    p.add_argument("--min-accuracy", type=float, default=0.7)
    p.add_argument("--min-reply", type=float, default=0.38)
    p.add_argument("--out", help="write merged session capture here")
    p.add_argument("--format", choices=["text", "json"], default="text")
    _add_timing_flags(p)
    p.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("PRIMER_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DecodeFailure as exc:
        _fail(f"decode failure: {exc} (use --skip-bad to continue)")
        return EXIT_DECODE
    except (TransportUnavailable, BindFailure) as exc:
        _fail(f"transport: {exc}")
        return EXIT_TRANSPORT
    except (NoSelectableTraffic, AttackerNotFound) as exc:
        _fail(f"nothing to replay: {exc}")
        return EXIT_NO_TRAFFIC
    except SendFailure as exc:
        _fail(f"send failure: {exc}")
        return EXIT_TRANSPORT
    except EmptyCapture as exc:
        _fail(f"empty capture: {exc}")
        return EXIT_IO
    except (CaptureError, CodecError) as exc:
        _fail(str(exc))
        return EXIT_IO
    except OSError as exc:
        _fail(str(exc))
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
