"""Rewrite engine: focality, payload immutability, checksum validity."""

import random

import pytest

import frame_gen
from primer.capture_io import CaptureFile, PacketRecord
from primer.packet_codec import decode_packet, encode_packet, verify_checksums
from primer.rewrite_engine import DecodeFailure, RewriteSpec, apply_rewrite, rewrite_capture

RAW = 101
ETH = 1


def allowed_diff_positions(meta: frame_gen.FrameMeta) -> set[int]:
    """Byte offsets rewriting may legally touch, from ground-truth layout."""
    pos: set[int] = set()
    link_off = 14 if meta.link_type == ETH else 0
    if meta.link_type == ETH:
        pos |= set(range(0, 12))  # both MAC fields
    pos |= {link_off + 10, link_off + 11}  # IP header checksum
    pos |= set(range(link_off + 12, link_off + 20))  # src + dst addresses
    t = link_off + 20 + meta.ip_options_len
    if meta.proto == "tcp":
        pos |= set(range(t, t + 4))  # ports
        pos |= {t + 16, t + 17}  # checksum
    elif meta.proto == "udp":
        pos |= set(range(t, t + 4))
        pos |= {t + 6, t + 7}
    elif meta.proto == "icmp":
        pos |= {t + 2, t + 3}
    return pos


def random_spec(rng: random.Random, meta: frame_gen.FrameMeta) -> RewriteSpec:
    """Injective maps touching the frame's own addresses/ports/MACs."""
    new_addrs = []
    while len(new_addrs) < 2:
        addr = frame_gen.random_addr(rng)
        if addr not in new_addrs and addr not in (meta.src, meta.dst):
            new_addrs.append(addr)
    ip_map = {}
    if rng.random() < 0.9:
        ip_map[meta.src] = new_addrs[0]
    if rng.random() < 0.9 and meta.dst not in ip_map:
        ip_map[meta.dst] = new_addrs[1]

    port_map = {}
    if meta.proto in ("tcp", "udp") and rng.random() < 0.5:
        new_ports = rng.sample(range(1, 65536), 2)
        port_map[(meta.proto, meta.sport)] = new_ports[0]
        if meta.dport != meta.sport:
            port_map[(meta.proto, meta.dport)] = new_ports[1]

    mac_map = {}
    if meta.link_type == ETH and rng.random() < 0.5:
        mac_map[meta.src_mac] = frame_gen.random_mac(rng)
        if meta.dst_mac not in mac_map:
            mac_map[meta.dst_mac] = frame_gen.random_mac(rng)
    return RewriteSpec(ip_map=ip_map, port_map=port_map, mac_map=mac_map)


def test_empty_spec_is_byte_identity():
    rng = random.Random(11)
    for _ in range(50):
        meta = frame_gen.random_frame(rng)
        packet = decode_packet(meta.data, meta.link_type)
        out = apply_rewrite(packet, RewriteSpec())
        assert encode_packet(out) == meta.data


def test_identity_valued_maps_are_byte_identity():
    meta = frame_gen.random_frame(random.Random(12), ethernet=False)
    packet = decode_packet(meta.data, meta.link_type)
    spec = RewriteSpec(ip_map={meta.src: meta.src, meta.dst: meta.dst})
    assert encode_packet(apply_rewrite(packet, spec)) == meta.data


def test_lab_address_pair_remap():
    # Attack recorded between 10.0.0.9 and 10.0.0.7, replayed in a lab where
    # the replayer is 192.168.1.5 and the target 192.168.1.7.
    frame = frame_gen.build_tcp_frame("10.0.0.9", 40000, "10.0.0.7", 22, payload=b"probe")
    spec = RewriteSpec(ip_map={"10.0.0.9": "192.168.1.5", "10.0.0.7": "192.168.1.7"})
    out = apply_rewrite(decode_packet(frame, RAW), spec)
    assert out.src_addr == "192.168.1.5"
    assert out.dst_addr == "192.168.1.7"
    assert out.payload == b"probe"
    assert verify_checksums(out).all_ok


def test_reverse_direction_uses_same_map():
    spec = RewriteSpec(ip_map={"10.0.0.9": "192.168.1.5", "10.0.0.7": "192.168.1.7"})
    reply = frame_gen.build_tcp_frame("10.0.0.7", 22, "10.0.0.9", 40000)
    out = apply_rewrite(decode_packet(reply, RAW), spec)
    assert out.src_addr == "192.168.1.7"
    assert out.dst_addr == "192.168.1.5"


def test_icmp_checksum_untouched_by_ip_remap():
    frame = frame_gen.build_icmp_frame("10.0.0.9", "10.0.0.7", payload=b"echo-data")
    original = decode_packet(frame, RAW)
    out = apply_rewrite(original, RewriteSpec(ip_map={"10.0.0.9": "192.168.1.5"}))
    # ICMP checksum does not cover IP addresses; IP header checksum does.
    assert out.transport.checksum == original.transport.checksum
    assert out.ip.header_checksum != original.ip.header_checksum
    assert verify_checksums(out).all_ok


def test_port_and_mac_remap():
    inner = frame_gen.build_udp_frame("10.0.0.9", 5353, "10.0.0.7", 53, b"q")
    frame = frame_gen.wrap_ethernet(inner, "aa:aa:aa:aa:aa:02", "aa:aa:aa:aa:aa:01")
    spec = RewriteSpec(
        port_map={("udp", 53): 5300},
        mac_map={"aa:aa:aa:aa:aa:01": "bb:bb:bb:bb:bb:01"},
    )
    out = apply_rewrite(decode_packet(frame, ETH), spec)
    assert out.transport.dst_port == 5300
    assert out.transport.src_port == 5353
    assert out.link.src_mac == "bb:bb:bb:bb:bb:01"
    assert out.link.dst_mac == "aa:aa:aa:aa:aa:02"
    assert verify_checksums(out).all_ok


def test_non_injective_maps_rejected():
    with pytest.raises(ValueError):
        RewriteSpec(ip_map={"1.1.1.1": "3.3.3.3", "2.2.2.2": "3.3.3.3"})
    with pytest.raises(ValueError):
        RewriteSpec(port_map={("tcp", 1): 9, ("tcp", 2): 9})
    # same new port on different protocols is fine
    RewriteSpec(port_map={("tcp", 1): 9, ("udp", 1): 9})


def test_rewrite_properties_over_random_corpus():
    rng = random.Random(501)
    for _ in range(200):
        meta = frame_gen.random_frame(rng)
        packet = decode_packet(meta.data, meta.link_type)
        spec = random_spec(rng, meta)
        out = apply_rewrite(packet, spec)
        data = encode_packet(out)
        assert out.payload == meta.payload  # payload immutability
        assert verify_checksums(out).all_ok  # validity
        assert len(data) == len(meta.data)
        allowed = allowed_diff_positions(meta)
        diffs = {i for i, (a, b) in enumerate(zip(meta.data, data)) if a != b}
        assert diffs <= allowed, f"unexpected diffs at {sorted(diffs - allowed)}"


class TestRewriteCapture:
    def _capture(self, n: int = 18) -> CaptureFile:
        rng = random.Random(77)
        records = []
        for i in range(n):
            frame = frame_gen.build_tcp_frame(
                "10.0.0.9" if i % 2 == 0 else "10.0.0.7",
                40000,
                "10.0.0.7" if i % 2 == 0 else "10.0.0.9",
                23,
                payload=rng.randbytes(10),
            )
            records.append(PacketRecord(1000 + i, i * 100, len(frame), len(frame), frame))
        return CaptureFile(link_type=RAW, records=tuple(records))

    def test_counts_order_timestamps_preserved(self):
        cap = self._capture(18)
        spec = RewriteSpec(ip_map={"10.0.0.9": "192.168.1.5", "10.0.0.7": "192.168.1.7"})
        result = rewrite_capture(cap, spec)
        out = result.capture
        assert len(out.records) == 18
        for before, after in zip(cap.records, out.records):
            assert (before.ts_sec, before.ts_usec) == (after.ts_sec, after.ts_usec)
            assert before.original_len == after.original_len
        # every packet had both addresses remapped
        assert result.ip_substitutions[("10.0.0.9", "192.168.1.5")] == 18
        assert result.ip_substitutions[("10.0.0.7", "192.168.1.7")] == 18

    def test_empty_capture(self):
        result = rewrite_capture(CaptureFile(link_type=RAW), RewriteSpec())
        assert result.capture.records == ()

    def test_bad_record_aborts_with_index(self):
        cap = self._capture(3)
        bad = PacketRecord(2000, 0, 4, 4, b"\x00\x01\x02\x03")
        cap = cap.with_records(list(cap.records[:2]) + [bad] + [cap.records[2]])
        with pytest.raises(DecodeFailure) as err:
            rewrite_capture(cap, RewriteSpec())
        assert err.value.index == 2

    def test_skip_mode_drops_and_reports(self):
        cap = self._capture(17)
        bad = PacketRecord(2000, 0, 4, 4, b"\x00\x01\x02\x03")
        cap = cap.with_records(list(cap.records) + [bad])
        result = rewrite_capture(cap, RewriteSpec(), skip_bad=True)
        assert len(result.capture.records) == 17
        assert len(result.skipped) == 1
        assert result.skipped[0][0] == 17
