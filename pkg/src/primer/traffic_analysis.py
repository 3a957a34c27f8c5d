"""Interaction measures computed from a capture: directional conversation
tables, targeting accuracy against a known set of open services, and
traffic volume over time (bins, inter-packet gaps, per-source bursts).

Ratios are held as exact fractions; rounding happens only when a report is
rendered for display.
"""

from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, TextIO

from primer.capture_io import CaptureFile, PacketRecord
from primer.packet_codec import (
    CodecError,
    ParsedPacket,
    TcpHeader,
    UdpHeader,
    decode_packet,
    ip_to_bytes,
)

logger = logging.getLogger(__name__)

CONVERSATION_TSV_HEADER = "Address A\tPort A\tAddress B\tPort B\tPackets\tBytes"


class EmptyCapture(Exception):
    """Volume statistics need at least one packet."""


@dataclass(frozen=True)
class ConversationStats:
    """One directional endpoint-pair row: packets and on-wire bytes."""

    addr_a: str
    port_a: int
    addr_b: str
    port_b: int
    packets: int
    bytes: int


@dataclass(frozen=True)
class PortTraffic:
    """Packets seen toward one off-service destination port."""

    protocol: str
    port: int
    packets: int


@dataclass(frozen=True)
class AccuracyReport:
    """Targeting accuracy of a capture against a honeypot's open services.

    ``accuracy`` is the fraction of packets toward the target that hit an
    open service port; ``reply_fraction`` is the share of all packets that
    the target sent back. Both are exact fractions.
    """

    target: str
    open_ports: frozenset[tuple[str, int]]
    total_toward_target: int
    on_service: int
    off_service: int
    accuracy: Fraction
    reply_fraction: Fraction
    distinct_sources: int
    distinct_dst_ports: int
    extraneous_ports: tuple[PortTraffic, ...]

    @property
    def reply_percent(self) -> int:
        """Reply share truncated to integer percent (presentation form)."""
        return int(self.reply_fraction * 100)


@dataclass(frozen=True)
class GapStats:
    """Summary of inter-packet gaps over consecutive capture timestamps."""

    count: int
    min: Optional[float] = None
    max: Optional[float] = None
    mean: Optional[float] = None
    median: Optional[float] = None


@dataclass(frozen=True)
class VolumeBin:
    start: float  # seconds from the first packet
    packets: int
    bytes: int


@dataclass(frozen=True)
class VolumeSeries:
    """Packet/byte counts in fixed-width bins plus gap and burst measures.

    ``burst_window`` maps each source address to the shortest window
    containing all of its packets (last timestamp minus first).
    """

    bin_width: float
    origin: float  # epoch timestamp of the first packet
    bins: tuple[VolumeBin, ...]
    gaps: GapStats
    burst_window: Mapping[str, float]


def _decoded(capture: CaptureFile) -> Iterator[tuple[PacketRecord, ParsedPacket]]:
    """Yield (record, packet) pairs, skipping and logging undecodable ones."""
    for index, record in enumerate(capture.records):
        try:
            yield record, decode_packet(record, capture.link_type)
        except CodecError as exc:
            logger.warning("analysis skipping undecodable record %d: %s", index, exc)


def conversation_table(
    capture: CaptureFile,
    sort: str = "first-seen",
    merge_directions: bool = False,
) -> list[ConversationStats]:
    """Group packets by directional (source, source port, destination,
    destination port) and sum packets and on-wire bytes.

    Portless protocols enter with ports 0/0. ``sort`` is "first-seen" or
    "addr" (numeric source-address order, ties keep first-seen order).
    With ``merge_directions`` the two directions of a conversation collapse
    into one row keyed by its first-seen direction.
    """
    counts: dict[tuple[str, int, str, int], list[int]] = {}
    for record, packet in _decoded(capture):
        key = (packet.src_addr, packet.src_port, packet.dst_addr, packet.dst_port)
        if merge_directions:
            reverse = (key[2], key[3], key[0], key[1])
            if reverse in counts:
                key = reverse
        entry = counts.setdefault(key, [0, 0])
        entry[0] += 1
        entry[1] += record.original_len

    rows = [
        ConversationStats(a, pa, b, pb, packets, nbytes)
        for (a, pa, b, pb), (packets, nbytes) in counts.items()
    ]
    if sort == "addr":
        rows.sort(key=lambda r: ip_to_bytes(r.addr_a))
    elif sort != "first-seen":
        raise ValueError(f"unknown sort policy {sort!r}")
    return rows


def format_conversation_tsv(rows: Iterable[ConversationStats]) -> str:
    """Render a conversation table as TSV with the canonical header."""
    lines = [CONVERSATION_TSV_HEADER]
    for r in rows:
        lines.append(f"{r.addr_a}\t{r.port_a}\t{r.addr_b}\t{r.port_b}\t{r.packets}\t{r.bytes}")
    return "\n".join(lines) + "\n"


def accuracy_report(
    capture: CaptureFile,
    target: str,
    open_ports: Iterable[tuple[str, int]],
) -> AccuracyReport:
    """Compute the targeting-accuracy measure for one endpoint.

    Open ports are (protocol, port) pairs for TCP/UDP services; portless
    traffic toward the target (e.g. ICMP) counts toward the total but can
    never be on-service. Distinct destination ports are counted over
    TCP/UDP packets only.
    """
    open_set = frozenset(open_ports)
    total_toward = 0
    on_service = 0
    from_target = 0
    all_packets = 0
    sources: set[str] = set()
    dst_ports: set[tuple[str, int]] = set()
    off_ports: dict[tuple[str, int], int] = {}

    for _record, packet in _decoded(capture):
        all_packets += 1
        if packet.src_addr == target:
            from_target += 1
        if packet.dst_addr != target:
            continue
        total_toward += 1
        sources.add(packet.src_addr)
        ported = isinstance(packet.transport, (TcpHeader, UdpHeader))
        if not ported:
            continue
        proto = packet.protocol_name
        port_key = (proto, packet.dst_port)
        dst_ports.add(port_key)
        if port_key in open_set:
            on_service += 1
        else:
            off_ports[port_key] = off_ports.get(port_key, 0) + 1

    extraneous = tuple(
        PortTraffic(proto, port, n)
        for (proto, port), n in sorted(off_ports.items(), key=lambda kv: -kv[1])
    )
    return AccuracyReport(
        target=target,
        open_ports=open_set,
        total_toward_target=total_toward,
        on_service=on_service,
        off_service=total_toward - on_service,
        accuracy=Fraction(on_service, total_toward) if total_toward else Fraction(0),
        reply_fraction=Fraction(from_target, all_packets) if all_packets else Fraction(0),
        distinct_sources=len(sources),
        distinct_dst_ports=len(dst_ports),
        extraneous_ports=extraneous,
    )


def volume_series(capture: CaptureFile, bin_width: float) -> VolumeSeries:
    """Bin packet and byte counts over time and summarize gaps and bursts.

    Bins are aligned to the first packet's timestamp and cover the capture
    contiguously (empty bins included). Gap statistics run over
    consecutive capture-order timestamps; burst windows are per source
    address and need decodable packets.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    if not capture.records:
        raise EmptyCapture("no packets to bin")

    times = [rec.timestamp for rec in capture.records]
    origin = times[0]
    last_index = int((max(times) - origin) / bin_width)
    packet_counts = [0] * (last_index + 1)
    byte_counts = [0] * (last_index + 1)
    for rec, ts in zip(capture.records, times):
        # clamp handles out-of-order timestamps on either side of the range
        index = min(max(int((ts - origin) / bin_width), 0), last_index)
        packet_counts[index] += 1
        byte_counts[index] += rec.original_len

    deltas = [b - a for a, b in zip(times, times[1:])]
    if deltas:
        gaps = GapStats(
            count=len(deltas),
            min=min(deltas),
            max=max(deltas),
            mean=statistics.fmean(deltas),
            median=statistics.median(deltas),
        )
    else:
        gaps = GapStats(count=0)

    first_last: dict[str, tuple[float, float]] = {}
    for record, packet in _decoded(capture):
        ts = record.timestamp
        src = packet.src_addr
        if src in first_last:
            lo, hi = first_last[src]
            first_last[src] = (min(lo, ts), max(hi, ts))
        else:
            first_last[src] = (ts, ts)
    bursts = {src: hi - lo for src, (lo, hi) in first_last.items()}

    bins = tuple(
        VolumeBin(start=i * bin_width, packets=p, bytes=b)
        for i, (p, b) in enumerate(zip(packet_counts, byte_counts))
    )
    return VolumeSeries(
        bin_width=bin_width, origin=origin, bins=bins, gaps=gaps, burst_window=bursts
    )


# ---------------------------------------------------------------------------
# report serialization


def accuracy_to_dict(report: AccuracyReport) -> dict:
    """JSON-ready view of an AccuracyReport (exact values become floats)."""
    return {
        "target": report.target,
        "open_ports": sorted(f"{proto}/{port}" for proto, port in report.open_ports),
        "total_toward_target": report.total_toward_target,
        "on_service": report.on_service,
        "off_service": report.off_service,
        "accuracy": float(report.accuracy),
        "reply_fraction": float(report.reply_fraction),
        "reply_percent": report.reply_percent,
        "distinct_sources": report.distinct_sources,
        "distinct_dst_ports": report.distinct_dst_ports,
        "extraneous_ports": [
            {"protocol": p.protocol, "port": p.port, "packets": p.packets}
            for p in report.extraneous_ports
        ],
    }


def format_accuracy_text(report: AccuracyReport) -> str:
    """Human-readable accuracy report."""
    lines = [
        f"target: {report.target}",
        "open ports: " + ", ".join(sorted(f"{p}/{n}" for p, n in report.open_ports)),
        f"packets toward target: {report.total_toward_target}",
        f"on-service: {report.on_service}   off-service: {report.off_service}",
        f"accuracy: {float(report.accuracy):.4f} ({report.accuracy.numerator}/{report.accuracy.denominator})",
        f"reply fraction: {report.reply_percent}% ({report.reply_fraction.numerator}/{report.reply_fraction.denominator})",
        f"distinct sources: {report.distinct_sources}",
        f"distinct destination ports: {report.distinct_dst_ports}",
    ]
    if report.extraneous_ports:
        extras = ", ".join(
            f"{p.protocol}/{p.port} ({p.packets} pkt)" for p in report.extraneous_ports
        )
        lines.append(f"extraneous ports: {extras}")
    return "\n".join(lines) + "\n"


def volume_to_dict(series: VolumeSeries) -> dict:
    """JSON-ready view of a VolumeSeries."""
    return {
        "bin_width": series.bin_width,
        "origin": series.origin,
        "bins": [
            {"start": b.start, "packets": b.packets, "bytes": b.bytes} for b in series.bins
        ],
        "gaps": {
            "count": series.gaps.count,
            "min": series.gaps.min,
            "max": series.gaps.max,
            "mean": series.gaps.mean,
            "median": series.gaps.median,
        },
        "burst_window": dict(series.burst_window),
    }


def write_volume_csv(series: VolumeSeries, out: TextIO) -> None:
    """Emit the bins as CSV (start offset in seconds, packets, bytes)."""
    writer = csv.writer(out)
    writer.writerow(["start", "packets", "bytes"])
    for b in series.bins:
        writer.writerow([f"{b.start:.6f}", b.packets, b.bytes])
