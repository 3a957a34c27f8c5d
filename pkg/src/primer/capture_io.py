"""Bit-exact reading and writing of classic pcap capture files.

Only the classic libpcap format (version 2.4, microsecond timestamps) is
supported. pcapng and nanosecond-magic files are rejected outright rather
than silently degraded, and packet bytes are never touched regardless of
the file's byte order.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import BinaryIO, Iterable, Union

MAGIC_MICROS = 0xA1B2C3D4
MAGIC_NANOS = 0xA1B23C4D
MAGIC_PCAPNG = 0x0A0D0D0A

PCAP_VERSION_MAJOR = 2
PCAP_VERSION_MINOR = 4
GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW_IP = 101
SUPPORTED_LINK_TYPES = (LINKTYPE_ETHERNET, LINKTYPE_RAW_IP)

DEFAULT_SNAP_LEN = 65535


class CaptureError(Exception):
    """Base class for capture file errors."""


class BadMagic(CaptureError):
    """Stream does not start with a supported pcap magic number."""


class Truncated(CaptureError):
    """Stream ended before a declared header or packet body was complete."""


class UnsupportedLinkType(CaptureError):
    """Capture uses a link-layer type other than Ethernet or raw IP."""


class InvariantViolation(CaptureError):
    """A record breaks the PacketRecord/CaptureFile invariants."""


@dataclass(frozen=True)
class PacketRecord:
    """One captured frame: (seconds, microseconds) timestamp plus raw bytes.

    Timestamps stay as an integer pair; float conversion is presentation
    only, so round-trips compare exactly equal.
    """

    ts_sec: int
    ts_usec: int
    captured_len: int
    original_len: int
    data: bytes

    @property
    def timestamp(self) -> float:
        """Timestamp as float seconds (lossy; for scheduling and stats)."""
        return self.ts_sec + self.ts_usec / 1_000_000.0


@dataclass(frozen=True)
class CaptureFile:
    """An ordered sequence of packet records plus the pcap header fields.

    ``byte_order`` records how the source stream was encoded ("little" or
    "big"); it is excluded from equality because the packets, not the
    serialization, define the capture.
    """

    link_type: int
    snap_len: int = DEFAULT_SNAP_LEN
    byte_order: str = field(default="little", compare=False)
    records: tuple[PacketRecord, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.records)

    def with_records(self, records: Iterable[PacketRecord]) -> "CaptureFile":
        """Same header, different records."""
        return replace(self, records=tuple(records))


def split_timestamp(ts: float) -> tuple[int, int]:
    """Split float seconds into a (sec, usec) pair, carrying rounded usecs."""
    sec = int(ts)
    usec = int(round((ts - sec) * 1_000_000))
    if usec >= 1_000_000:
        sec += usec // 1_000_000
        usec %= 1_000_000
    return sec, usec


def _validate_record(index: int, rec: PacketRecord, snap_len: int) -> None:
    if len(rec.data) != rec.captured_len:
        raise InvariantViolation(
            f"record {index}: data is {len(rec.data)} bytes but captured_len={rec.captured_len}"
        )
    if rec.captured_len > rec.original_len:
        raise InvariantViolation(
            f"record {index}: captured_len {rec.captured_len} > original_len {rec.original_len}"
        )
    if rec.captured_len > snap_len:
        raise InvariantViolation(
            f"record {index}: captured_len {rec.captured_len} > snap_len {snap_len}"
        )
    if not 0 <= rec.ts_usec < 1_000_000:
        raise InvariantViolation(f"record {index}: ts_usec {rec.ts_usec} out of range")
    if rec.ts_sec < 0:
        raise InvariantViolation(f"record {index}: negative ts_sec {rec.ts_sec}")


def _detect_byte_order(magic_bytes: bytes) -> str:
    little = struct.unpack("<I", magic_bytes)[0]
    big = struct.unpack(">I", magic_bytes)[0]
    if little == MAGIC_MICROS:
        return "little"
    if big == MAGIC_MICROS:
        return "big"
    if MAGIC_NANOS in (little, big):
        raise BadMagic(
            "nanosecond-precision pcap (magic 0xa1b23c4d) is not supported; "
            "convert to microsecond pcap first"
        )
    if little == MAGIC_PCAPNG or big == MAGIC_PCAPNG:
        raise BadMagic("pcapng is not supported; convert to classic pcap first")
    raise BadMagic(f"unrecognized capture magic 0x{little:08x}")


def read_capture(source: Union[bytes, BinaryIO]) -> CaptureFile:
    """Parse a classic pcap stream into a CaptureFile.

    Both byte orders are accepted; header fields are swapped as implied by
    the magic while packet data passes through untouched. Records are
    returned in file order.
    """
    stream = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source

    header = stream.read(GLOBAL_HEADER_LEN)
    if len(header) < 4:
        raise Truncated("stream shorter than a pcap magic number")
    order = _detect_byte_order(header[:4])
    if len(header) < GLOBAL_HEADER_LEN:
        raise Truncated(
            f"global header is {len(header)} bytes, expected {GLOBAL_HEADER_LEN}"
        )
    endian = "<" if order == "little" else ">"
    _major, _minor, _zone, _sigfigs, snap_len, link_type = struct.unpack(
        endian + "HHiIII", header[4:]
    )
    if link_type not in SUPPORTED_LINK_TYPES:
        raise UnsupportedLinkType(
            f"link type {link_type} (supported: Ethernet={LINKTYPE_ETHERNET}, "
            f"raw IP={LINKTYPE_RAW_IP})"
        )

    record_fmt = endian + "IIII"
    records = []
    index = 0
    while True:
        rec_header = stream.read(RECORD_HEADER_LEN)
        if not rec_header:
            break
        if len(rec_header) < RECORD_HEADER_LEN:
            raise Truncated(
                f"record {index}: header is {len(rec_header)} bytes, expected {RECORD_HEADER_LEN}"
            )
        ts_sec, ts_usec, incl_len, orig_len = struct.unpack(record_fmt, rec_header)
        data = stream.read(incl_len)
        if len(data) < incl_len:
            raise Truncated(
                f"record {index}: body is {len(data)} bytes, declared {incl_len}"
            )
        rec = PacketRecord(ts_sec, ts_usec, incl_len, orig_len, data)
        _validate_record(index, rec, snap_len)
        records.append(rec)
        index += 1

    return CaptureFile(
        link_type=link_type,
        snap_len=snap_len,
        byte_order=order,
        records=tuple(records),
    )


def write_capture(capture: CaptureFile, order: str | None = None) -> bytes:
    """Serialize a CaptureFile to classic pcap bytes.

    ``order`` picks the output byte order ("little"/"big"); by default the
    capture's own order is used, which makes write(read(x)) byte-identical
    to x.
    """
    order = capture.byte_order if order is None else order
    if order not in ("little", "big"):
        raise ValueError(f"byte order must be 'little' or 'big', got {order!r}")
    if capture.link_type not in SUPPORTED_LINK_TYPES:
        raise UnsupportedLinkType(f"link type {capture.link_type}")
    endian = "<" if order == "little" else ">"

    out = io.BytesIO()
    out.write(
        struct.pack(
            endian + "IHHiIII",
            MAGIC_MICROS,
            PCAP_VERSION_MAJOR,
            PCAP_VERSION_MINOR,
            0,
            0,
            capture.snap_len,
            capture.link_type,
        )
    )
    record_fmt = endian + "IIII"
    for index, rec in enumerate(capture.records):
        _validate_record(index, rec, capture.snap_len)
        out.write(
            struct.pack(record_fmt, rec.ts_sec, rec.ts_usec, rec.captured_len, rec.original_len)
        )
        out.write(rec.data)
    return out.getvalue()


def load(path: Union[str, Path]) -> CaptureFile:
    """Read a capture from a file path ('-' reads standard input)."""
    if str(path) == "-":
        import sys

        return read_capture(sys.stdin.buffer.read())
    with open(path, "rb") as fh:
        return read_capture(fh)


def save(capture: CaptureFile, path: Union[str, Path], order: str | None = None) -> None:
    """Write a capture to a file path ('-' writes standard output)."""
    payload = write_capture(capture, order=order)
    if str(path) == "-":
        import sys

        sys.stdout.buffer.write(payload)
        return
    with open(path, "wb") as fh:
        fh.write(payload)
