"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line
and holding to its runtime budget (run with ``pytest -s`` to see the lines).

Expected values come from the bundled fixture definitions and independent
oracles (frame_gen, hand tallies), never from the code paths under test.
"""

import contextlib
import io
import json
import random
import struct
import time
from fractions import Fraction

import frame_gen
from test_rewrite_engine import allowed_diff_positions, random_spec

from primer.capture_io import CaptureFile, PacketRecord, read_capture, write_capture
from primer.cli import main
from primer.mock_honeypot import default_profile, serve
from primer.packet_codec import (
    decode_packet,
    encode_packet,
    ones_complement_checksum,
    verify_checksums,
)
from primer.replay_engine import (
    TimingPolicy,
    build_replay_plan,
    execute_replay,
    session_to_capture,
)
from primer.rewrite_engine import apply_rewrite
from primer.sample_captures import (
    INTERNET_SCAN_TARGET,
    LAB_ATTACKER,
    LAB_TARGET,
    internet_scan_capture,
    internet_scan_table,
    ssh_attack_capture,
    telnet_keyid_capture,
    write_samples,
)
from primer.traffic_analysis import (
    accuracy_report,
    conversation_table,
    format_accuracy_text,
    format_conversation_tsv,
    volume_series,
)

RAW = 101


@contextlib.contextmanager
def criterion(number: int, name: str, budget: float):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[acceptance] criterion {number} ({name}): FAIL")
        raise
    elapsed = time.monotonic() - start
    if elapsed >= budget:
        print(f"[acceptance] criterion {number} ({name}): FAIL (took {elapsed:.2f}s, budget {budget}s)")
        raise AssertionError(f"criterion {number} over budget: {elapsed:.2f}s >= {budget}s")
    print(f"[acceptance] criterion {number} ({name}): PASS ({elapsed:.2f}s)")


def test_criterion_1_internet_scan_reproduction():
    with criterion(1, "scan-trace accuracy and table", budget=1.0):
        capture = internet_scan_capture()
        report = accuracy_report(capture, INTERNET_SCAN_TARGET, {("tcp", 22), ("tcp", 23)})
        assert report.total_toward_target == 17
        assert report.on_service == 3
        assert report.distinct_sources == 12
        assert report.distinct_dst_ports == 14

        rows = conversation_table(capture)
        assert len(rows) == 14
        expected_tsv = "Address A\tPort A\tAddress B\tPort B\tPackets\tBytes\n" + "".join(
            f"{a}\t{pa}\t{b}\t{pb}\t{n}\t{size}\n"
            for a, pa, b, pb, n, size in internet_scan_table()
        )
        assert format_conversation_tsv(rows) == expected_tsv


def test_criterion_2_telnet_reply_fraction():
    with criterion(2, "telnet key-id reply fraction", budget=1.0):
        capture = telnet_keyid_capture()
        assert len(capture.records) == 18
        report = accuracy_report(capture, LAB_TARGET, {("tcp", 22), ("tcp", 23)})
        assert report.reply_fraction == Fraction(7, 18)
        assert "38%" in format_accuracy_text(report)
        assert any(
            p.protocol == "tcp" and p.port == 12235 and p.packets == 3
            for p in report.extraneous_ports
        )


def test_criterion_3_ssh_perfect_accuracy():
    with criterion(3, "ssh two-row table, accuracy 1.0", budget=1.0):
        capture = ssh_attack_capture()
        rows = conversation_table(capture)
        assert [
            (r.addr_a, r.port_a, r.addr_b, r.port_b, r.packets, r.bytes) for r in rows
        ] == [
            (LAB_ATTACKER, 36269, LAB_TARGET, 22, 13, 2939),
            (LAB_TARGET, 22, LAB_ATTACKER, 36269, 13, 2347),
        ]
        report = accuracy_report(capture, LAB_TARGET, {("tcp", 22), ("tcp", 23)})
        assert report.accuracy == 1


def test_criterion_4_compressed_burst_timing():
    with criterion(4, "compressed replay burst window", budget=5.0):
        from primer.transport import LoopbackTransport

        plan = build_replay_plan(
            ssh_attack_capture(), LAB_ATTACKER, mode="raw", policy=TimingPolicy.compressed()
        )
        assert len(plan.entries) == 13
        session = execute_replay(plan, LoopbackTransport())
        assert len(session.sent) == 13
        actual_span = session.sent[-1].timestamp - session.sent[0].timestamp
        assert actual_span <= 0.1  # 5x margin over the 0.02 s target

        merged = session_to_capture(session)
        series = volume_series(merged, bin_width=0.01)
        assert series.burst_window[LAB_ATTACKER] == actual_span


def test_criterion_5_calibrate_deterministic(tmp_path):
    with criterion(5, "calibrate 10x deterministic pass", budget=30.0):
        outdir = tmp_path / "samples"
        write_samples(outdir)
        outcomes = []
        for _ in range(10):
            buffer = io.StringIO()
            with contextlib.redirect_stdout(buffer):
                code = main([
                    "calibrate",
                    "--pcap", str(outdir / "ssh_attack.pcap"),
                    "--format", "json",
                ])
            doc = json.loads(buffer.getvalue())
            assert code == 0
            assert doc["passed"] is True
            assert doc["accuracy"] >= 0.7
            assert doc["reply_fraction"] >= 0.38
            outcomes.append((doc["accuracy"], doc["reply_fraction"], doc["sent"], doc["received"]))
        assert len(set(outcomes)) == 1  # identical across all runs


def _corpus(count: int) -> list[frame_gen.FrameMeta]:
    rng = random.Random(20260810)
    return [frame_gen.random_frame(rng) for _ in range(count)]


def test_criterion_6_rewrite_property_suite():
    with criterion(6, "rewrite over 1000 random packets", budget=10.0):
        rng = random.Random(987654)
        checked = 0
        for meta in _corpus(1000):
            packet = decode_packet(meta.data, meta.link_type)
            spec = random_spec(rng, meta)
            out = apply_rewrite(packet, spec)
            report = verify_checksums(out)
            assert report.ip_ok and report.transport_ok is True  # (a)
            assert out.payload == meta.payload  # (b)
            data = encode_packet(out)
            allowed = allowed_diff_positions(meta)
            diffs = {i for i, (x, y) in enumerate(zip(meta.data, data)) if x != y}
            assert diffs <= allowed  # (c)
            checked += 1
        assert checked >= 1000


def test_criterion_7_codec_round_trips():
    with criterion(7, "pcap and codec round-trips + checksum vector", budget=10.0):
        vector = bytes([0x00, 0x01, 0xF2, 0x03, 0xF4, 0xF5, 0xF6, 0xF7])
        assert frame_gen.oracle_checksum(vector) == 0x220D  # independent oracle first
        assert ones_complement_checksum(vector) == 0x220D

        corpus = _corpus(1000)
        for meta in corpus:
            packet = decode_packet(meta.data, meta.link_type)
            assert encode_packet(packet, recompute_checksums=False) == meta.data

        for link_type in (1, 101):
            frames = [m.data for m in corpus if m.link_type == link_type]
            records = tuple(
                PacketRecord(i, (i * 37) % 1_000_000, len(f), len(f), f)
                for i, f in enumerate(frames)
            )
            cap = CaptureFile(link_type=link_type, records=records)
            blob = write_capture(cap)
            again = read_capture(blob)
            assert again == cap
            assert write_capture(again) == blob


def test_criterion_8_analyzer_brute_force_equivalence():
    with criterion(8, "conversation table vs naive tally", budget=10.0):
        rng = random.Random(424242)
        for _case in range(100):
            n = rng.randint(1, 100)
            metas = [frame_gen.random_frame(rng, ethernet=False) for _ in range(n)]
            records = tuple(
                PacketRecord(i, 0, len(m.data), len(m.data), m.data)
                for i, m in enumerate(metas)
            )
            capture = CaptureFile(link_type=RAW, records=records)

            # naive tally straight off the generator's ground truth
            oracle: dict[tuple, list[int]] = {}
            for meta in metas:
                key = (meta.src, meta.sport, meta.dst, meta.dport)
                entry = oracle.setdefault(key, [0, 0])
                entry[0] += 1
                entry[1] += len(meta.data)
            expected = [
                (a, pa, b, pb, n_pkts, n_bytes)
                for (a, pa, b, pb), (n_pkts, n_bytes) in oracle.items()
            ]

            rows = conversation_table(capture)
            assert [
                (r.addr_a, r.port_a, r.addr_b, r.port_b, r.packets, r.bytes) for r in rows
            ] == expected
