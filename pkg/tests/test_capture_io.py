"""Capture file round-trips against independently packed pcap bytes."""

import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from primer.capture_io import (
    BadMagic,
    CaptureFile,
    InvariantViolation,
    PacketRecord,
    Truncated,
    UnsupportedLinkType,
    read_capture,
    write_capture,
)

# Oracle-side pcap packing: struct calls written out by hand.


def pack_header(endian: str, snaplen: int = 65535, network: int = 101) -> bytes:
    return struct.pack(endian + "IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, snaplen, network)


def pack_record(endian: str, sec: int, usec: int, data: bytes, orig: int | None = None) -> bytes:
    orig = len(data) if orig is None else orig
    return struct.pack(endian + "IIII", sec, usec, len(data), orig) + data


def test_header_only_is_empty_capture():
    cap = read_capture(pack_header("<"))
    assert cap.records == ()
    assert cap.link_type == 101
    assert cap.snap_len == 65535
    assert cap.byte_order == "little"


def test_both_byte_orders_parse_identically():
    # The same 60-byte record encoded little- and big-endian must parse to
    # the same capture; packet bytes are never swapped.
    payload = bytes(range(60))
    little = pack_header("<") + pack_record("<", 1000, 250, payload)
    big = pack_header(">") + pack_record(">", 1000, 250, payload)
    cap_l = read_capture(little)
    cap_b = read_capture(big)
    assert cap_l == cap_b
    assert cap_b.byte_order == "big"
    assert cap_l.records[0].data == payload


def test_truncated_record_body():
    blob = pack_header("<") + struct.pack("<IIII", 5, 0, 60, 60) + b"\x00" * 10
    with pytest.raises(Truncated):
        read_capture(blob)


def test_truncated_record_header():
    blob = pack_header("<") + b"\x00" * 7
    with pytest.raises(Truncated):
        read_capture(blob)


def test_truncated_global_header():
    with pytest.raises(Truncated):
        read_capture(pack_header("<")[:20])


def test_bad_magic():
    with pytest.raises(BadMagic):
        read_capture(b"\xde\xad\xbe\xef" + b"\x00" * 20)


def test_nanosecond_magic_rejected():
    blob = struct.pack("<IHHiIII", 0xA1B23C4D, 2, 4, 0, 0, 65535, 1)
    with pytest.raises(BadMagic, match="nanosecond"):
        read_capture(blob)


def test_pcapng_rejected():
    blob = struct.pack("<I", 0x0A0D0D0A) + b"\x00" * 20
    with pytest.raises(BadMagic, match="pcapng"):
        read_capture(blob)


def test_unsupported_link_type():
    with pytest.raises(UnsupportedLinkType):
        read_capture(pack_header("<", network=147))


def test_write_empty_capture_is_24_bytes():
    out = write_capture(CaptureFile(link_type=1))
    assert len(out) == 24


def test_three_record_round_trip_is_byte_identical():
    blob = pack_header("<", snaplen=262144, network=1)
    for i in range(3):
        blob += pack_record("<", 1600000000 + i, i * 1000, bytes([i]) * (40 + i))
    cap = read_capture(blob)
    assert write_capture(cap) == blob


def test_swapped_write_then_read_round_trips():
    records = tuple(
        PacketRecord(100 + i, 5 * i, 30, 30, bytes([i]) * 30) for i in range(4)
    )
    cap = CaptureFile(link_type=101, records=records)
    again = read_capture(write_capture(cap, order="big"))
    assert again == cap
    assert again.byte_order == "big"


def test_write_rejects_length_mismatch():
    bad = PacketRecord(0, 0, captured_len=10, original_len=10, data=b"short")
    with pytest.raises(InvariantViolation):
        write_capture(CaptureFile(link_type=1, records=(bad,)))


def test_write_rejects_usec_overflow():
    bad = PacketRecord(0, 1_000_000, 1, 1, b"x")
    with pytest.raises(InvariantViolation):
        write_capture(CaptureFile(link_type=1, records=(bad,)))


def test_read_rejects_captured_over_original():
    blob = pack_header("<") + pack_record("<", 0, 0, b"\x00" * 20, orig=10)
    with pytest.raises(InvariantViolation):
        read_capture(blob)


records_strategy = st.lists(
    st.builds(
        lambda sec, usec, data, extra: PacketRecord(sec, usec, len(data), len(data) + extra, data),
        st.integers(0, 2**32 - 1),
        st.integers(0, 999_999),
        st.binary(min_size=0, max_size=200),
        st.integers(0, 50),
    ),
    max_size=20,
)


@settings(max_examples=200, deadline=None)
@given(records=records_strategy, link=st.sampled_from([1, 101]), order=st.sampled_from(["little", "big"]))
def test_round_trip_property(records, link, order):
    cap = CaptureFile(link_type=link, byte_order=order, records=tuple(records))
    again = read_capture(write_capture(cap))
    assert again == cap
    # order preservation and byte passthrough, index by index
    for i, rec in enumerate(records):
        assert again.records[i].data == rec.data
        assert again.records[i].ts_sec == rec.ts_sec
        assert again.records[i].ts_usec == rec.ts_usec
