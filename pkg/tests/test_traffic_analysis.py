"""Analysis measures against hand-tallied and fixture-defined expectations."""

import io
import random
from fractions import Fraction

import pytest

import frame_gen
from primer.capture_io import CaptureFile, PacketRecord
from primer.sample_captures import (
    INTERNET_SCAN_TARGET,
    LAB_ATTACKER,
    LAB_TARGET,
    internet_scan_capture,
    internet_scan_table,
    ssh_attack_capture,
    telnet_keyid_capture,
)
from primer.traffic_analysis import (
    CONVERSATION_TSV_HEADER,
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

RAW = 101


def _record(ts_us: int, frame: bytes) -> PacketRecord:
    return PacketRecord(ts_us // 10**6, ts_us % 10**6, len(frame), len(frame), frame)


def _capture(frames_with_ts) -> CaptureFile:
    return CaptureFile(
        link_type=RAW, records=tuple(_record(ts, f) for ts, f in frames_with_ts)
    )


class TestConversationTable:
    def test_single_packet(self):
        cap = _capture([(0, frame_gen.build_udp_frame("1.1.1.1", 10, "2.2.2.2", 20, b"x"))])
        rows = conversation_table(cap)
        assert len(rows) == 1
        assert rows[0].packets == 1
        assert (rows[0].addr_a, rows[0].port_a, rows[0].addr_b, rows[0].port_b) == (
            "1.1.1.1", 10, "2.2.2.2", 20,
        )

    def test_direction_sensitivity(self):
        frames = [
            (0, frame_gen.build_tcp_frame("1.1.1.1", 10, "2.2.2.2", 20, b"a")),
            (1, frame_gen.build_tcp_frame("3.3.3.3", 30, "4.4.4.4", 40, b"bb")),
        ]
        reversed_frames = [
            (0, frame_gen.build_tcp_frame("2.2.2.2", 20, "1.1.1.1", 10, b"a")),
            (1, frame_gen.build_tcp_frame("4.4.4.4", 40, "3.3.3.3", 30, b"bb")),
        ]
        fwd = conversation_table(_capture(frames))
        rev = conversation_table(_capture(reversed_frames))
        assert [(r.addr_a, r.port_a, r.addr_b, r.port_b) for r in rev] == [
            (r.addr_b, r.port_b, r.addr_a, r.port_a) for r in fwd
        ]
        assert [(r.packets, r.bytes) for r in rev] == [(r.packets, r.bytes) for r in fwd]

    def test_conservation(self):
        rng = random.Random(9)
        metas = [frame_gen.random_frame(rng, ethernet=False) for _ in range(60)]
        cap = _capture([(i * 1000, m.data) for i, m in enumerate(metas)])
        rows = conversation_table(cap)
        assert sum(r.packets for r in rows) == 60
        assert sum(r.bytes for r in rows) == sum(len(m.data) for m in metas)

    def test_undecodable_records_excluded(self):
        good = frame_gen.build_udp_frame("1.1.1.1", 1, "2.2.2.2", 2)
        cap = CaptureFile(
            link_type=RAW,
            records=(_record(0, good), PacketRecord(1, 0, 3, 3, b"\x00\x01\x02")),
        )
        assert len(conversation_table(cap)) == 1

    def test_merge_directions(self):
        frames = [
            (0, frame_gen.build_tcp_frame("1.1.1.1", 10, "2.2.2.2", 20, b"abc")),
            (1, frame_gen.build_tcp_frame("2.2.2.2", 20, "1.1.1.1", 10, b"defg")),
        ]
        rows = conversation_table(_capture(frames), merge_directions=True)
        assert len(rows) == 1
        assert rows[0].packets == 2
        assert rows[0].addr_a == "1.1.1.1"  # first-seen direction names the row

    def test_addr_sort_is_numeric_and_stable(self):
        frames = [
            (0, frame_gen.build_tcp_frame("45.129.33.60", 1, "9.9.9.9", 30690)),
            (1, frame_gen.build_tcp_frame("45.129.33.60", 1, "9.9.9.9", 16390)),
            (2, frame_gen.build_tcp_frame("45.67.14.21", 1, "9.9.9.9", 22)),
            (3, frame_gen.build_tcp_frame("9.9.9.8", 1, "9.9.9.9", 23)),
        ]
        rows = conversation_table(_capture(frames), sort="addr")
        assert [r.addr_a for r in rows] == [
            "9.9.9.8", "45.67.14.21", "45.129.33.60", "45.129.33.60",
        ]
        # ties keep first-seen order
        assert [r.port_b for r in rows[2:]] == [30690, 16390]

    def test_tsv_header_is_byte_exact(self):
        assert CONVERSATION_TSV_HEADER == "Address A\tPort A\tAddress B\tPort B\tPackets\tBytes"
        out = format_conversation_tsv([])
        assert out == CONVERSATION_TSV_HEADER + "\n"

    def test_scan_fixture_matches_its_definition(self):
        rows = conversation_table(internet_scan_capture())
        assert [
            (r.addr_a, r.port_a, r.addr_b, r.port_b, r.packets, r.bytes) for r in rows
        ] == internet_scan_table()


class TestAccuracy:
    def test_scan_fixture_numbers(self):
        rep = accuracy_report(
            internet_scan_capture(), INTERNET_SCAN_TARGET, {("tcp", 22), ("tcp", 23)}
        )
        assert rep.total_toward_target == 17
        assert rep.on_service == 3
        assert rep.off_service == 14
        assert rep.distinct_sources == 12
        assert rep.distinct_dst_ports == 14
        assert rep.accuracy == Fraction(3, 17)
        assert rep.reply_fraction == 0  # unidirectional trace

    def test_telnet_fixture_reply_fraction(self):
        rep = accuracy_report(telnet_keyid_capture(), LAB_TARGET, {("tcp", 22), ("tcp", 23)})
        assert rep.reply_fraction == Fraction(7, 18)
        assert rep.reply_percent == 38
        assert rep.accuracy == Fraction(8, 11)
        assert any(
            p.protocol == "tcp" and p.port == 12235 and p.packets == 3
            for p in rep.extraneous_ports
        )
        text = format_accuracy_text(rep)
        assert "38%" in text

    def test_all_on_service_is_accuracy_one(self):
        rep = accuracy_report(ssh_attack_capture(), LAB_TARGET, {("tcp", 22), ("tcp", 23)})
        assert rep.accuracy == 1
        assert rep.on_service == rep.total_toward_target == 13

    def test_icmp_counts_toward_target_but_never_on_service(self):
        frames = [
            (0, frame_gen.build_icmp_frame("1.1.1.1", "9.9.9.9")),
            (1, frame_gen.build_tcp_frame("1.1.1.1", 5, "9.9.9.9", 22)),
        ]
        rep = accuracy_report(_capture(frames), "9.9.9.9", {("tcp", 22)})
        assert rep.total_toward_target == 2
        assert rep.on_service == 1
        assert rep.accuracy == Fraction(1, 2)
        assert rep.distinct_dst_ports == 1  # ICMP is portless

    def test_empty_capture(self):
        rep = accuracy_report(CaptureFile(link_type=RAW), "9.9.9.9", set())
        assert rep.total_toward_target == 0
        assert rep.accuracy == 0

    def test_json_dict_fields(self):
        rep = accuracy_report(telnet_keyid_capture(), LAB_TARGET, {("tcp", 22), ("tcp", 23)})
        doc = accuracy_to_dict(rep)
        assert doc["reply_percent"] == 38
        assert doc["total_toward_target"] == 11
        assert doc["extraneous_ports"] == [{"protocol": "tcp", "port": 12235, "packets": 3}]
        assert doc["open_ports"] == ["tcp/22", "tcp/23"]


class TestVolume:
    def test_one_packet(self):
        cap = _capture([(0, frame_gen.build_udp_frame("1.1.1.1", 1, "2.2.2.2", 2))])
        series = volume_series(cap, 0.01)
        assert len(series.bins) == 1
        assert series.bins[0].packets == 1
        assert series.gaps.count == 0
        assert series.gaps.min is None

    def test_empty_capture(self):
        with pytest.raises(EmptyCapture):
            volume_series(CaptureFile(link_type=RAW), 0.01)

    def test_bad_bin_width(self):
        cap = _capture([(0, frame_gen.build_udp_frame("1.1.1.1", 1, "2.2.2.2", 2))])
        with pytest.raises(ValueError):
            volume_series(cap, 0)

    def test_burst_window_of_ssh_fixture(self):
        series = volume_series(ssh_attack_capture(), 0.01)
        assert series.burst_window[LAB_ATTACKER] <= 0.02

    def test_internet_trial_gaps(self):
        series = volume_series(internet_scan_capture(), 10.0)
        assert series.gaps.count == 16
        assert series.gaps.min >= 30.0
        assert series.gaps.max <= 50.0

    def test_bin_conservation(self):
        rng = random.Random(4)
        frames = [
            (i * 3_000 + rng.randrange(1000), frame_gen.random_frame(rng, ethernet=False).data)
            for i in range(40)
        ]
        cap = _capture(frames)
        series = volume_series(cap, 0.005)
        assert sum(b.packets for b in series.bins) == 40
        assert sum(b.bytes for b in series.bins) == sum(r.original_len for r in cap.records)

    def test_csv_emission(self):
        series = volume_series(ssh_attack_capture(), 0.005)
        out = io.StringIO()
        write_volume_csv(series, out)
        lines = out.getvalue().strip().splitlines()
        assert lines[0] == "start,packets,bytes"
        assert len(lines) == len(series.bins) + 1

    def test_json_dict(self):
        series = volume_series(ssh_attack_capture(), 0.005)
        doc = volume_to_dict(series)
        assert doc["bin_width"] == 0.005
        assert sum(b["packets"] for b in doc["bins"]) == 26
        assert LAB_ATTACKER in doc["burst_window"]
