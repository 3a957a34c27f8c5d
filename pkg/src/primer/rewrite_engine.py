"""Address and port remapping for parsed packets and whole captures.

Rewriting is direction-agnostic: one map is applied to source and
destination fields alike, so a bidirectional capture stays internally
consistent. Everything except addresses, ports, MACs and checksums passes
through byte-identical; checksums are always recomputed afterwards.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from primer.capture_io import CaptureFile, PacketRecord
from primer.packet_codec import (
    CodecError,
    ParsedPacket,
    TcpHeader,
    UdpHeader,
    decode_packet,
    encode_packet,
    with_fresh_checksums,
)

logger = logging.getLogger(__name__)


class DecodeFailure(Exception):
    """A capture record failed to decode during batch rewriting."""

    def __init__(self, index: int, cause: CodecError):
        super().__init__(f"record {index}: {cause}")
        self.index = index
        self.cause = cause


def _check_injective(mapping: Mapping, label: str) -> None:
    values = list(mapping.values())
    if len(set(values)) != len(values):
        raise ValueError(f"{label} is not injective: duplicate target values")


@dataclass(frozen=True)
class RewriteSpec:
    """Finite remapping tables for IPv4 addresses, ports and MACs.

    Values absent from a map pass through unchanged. Each map must be
    injective so distinct conversations never merge. Port map keys are
    (protocol, old_port) with protocol "tcp" or "udp".
    """

    ip_map: Mapping[str, str] = field(default_factory=dict)
    port_map: Mapping[tuple[str, int], int] = field(default_factory=dict)
    mac_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        _check_injective(self.ip_map, "ip_map")
        _check_injective(self.mac_map, "mac_map")
        by_proto: dict[str, list[int]] = {}
        for (proto, _old), new in self.port_map.items():
            by_proto.setdefault(proto, []).append(new)
        for proto, news in by_proto.items():
            if len(set(news)) != len(news):
                raise ValueError(f"port_map is not injective for protocol {proto!r}")

    @property
    def is_empty(self) -> bool:
        return not (self.ip_map or self.port_map or self.mac_map)


@dataclass
class RewriteResult:
    """Rewritten capture plus substitution accounting for reporting."""

    capture: CaptureFile
    ip_substitutions: Counter = field(default_factory=Counter)
    port_substitutions: Counter = field(default_factory=Counter)
    mac_substitutions: Counter = field(default_factory=Counter)
    skipped: list[tuple[int, str]] = field(default_factory=list)


def apply_rewrite(
    packet: ParsedPacket,
    spec: RewriteSpec,
    counters: Optional[RewriteResult] = None,
) -> ParsedPacket:
    """Remap addresses/ports/MACs on one packet and recompute checksums.

    Source and destination fields are mapped independently through the same
    tables; unmapped values pass through. The payload and all other header
    fields are untouched.
    """
    ip = packet.ip
    new_src = spec.ip_map.get(ip.src_addr, ip.src_addr)
    new_dst = spec.ip_map.get(ip.dst_addr, ip.dst_addr)
    if counters is not None:
        if new_src != ip.src_addr:
            counters.ip_substitutions[(ip.src_addr, new_src)] += 1
        if new_dst != ip.dst_addr:
            counters.ip_substitutions[(ip.dst_addr, new_dst)] += 1
    ip = replace(ip, src_addr=new_src, dst_addr=new_dst)

    transport = packet.transport
    if spec.port_map and isinstance(transport, (TcpHeader, UdpHeader)):
        proto = "tcp" if isinstance(transport, TcpHeader) else "udp"
        new_sport = spec.port_map.get((proto, transport.src_port), transport.src_port)
        new_dport = spec.port_map.get((proto, transport.dst_port), transport.dst_port)
        if counters is not None:
            if new_sport != transport.src_port:
                counters.port_substitutions[(proto, transport.src_port, new_sport)] += 1
            if new_dport != transport.dst_port:
                counters.port_substitutions[(proto, transport.dst_port, new_dport)] += 1
        transport = replace(transport, src_port=new_sport, dst_port=new_dport)

    link = packet.link
    if spec.mac_map and link is not None:
        new_src_mac = spec.mac_map.get(link.src_mac, link.src_mac)
        new_dst_mac = spec.mac_map.get(link.dst_mac, link.dst_mac)
        if counters is not None:
            if new_src_mac != link.src_mac:
                counters.mac_substitutions[(link.src_mac, new_src_mac)] += 1
            if new_dst_mac != link.dst_mac:
                counters.mac_substitutions[(link.dst_mac, new_dst_mac)] += 1
        link = replace(link, src_mac=new_src_mac, dst_mac=new_dst_mac)

    rewritten = replace(packet, ip=ip, transport=transport, link=link)
    return with_fresh_checksums(rewritten)


def rewrite_capture(
    capture: CaptureFile,
    spec: RewriteSpec,
    skip_bad: bool = False,
) -> RewriteResult:
    """Rewrite every record of a capture, preserving count, order and
    timestamps.

    Records that fail to decode abort with DecodeFailure carrying the
    record index; with ``skip_bad`` they are dropped with a warning and
    listed in the result instead.
    """
    result = RewriteResult(capture=capture)
    records: list[PacketRecord] = []
    for index, record in enumerate(capture.records):
        try:
            packet = decode_packet(record, capture.link_type)
        except CodecError as exc:
            if not skip_bad:
                raise DecodeFailure(index, exc) from exc
            logger.warning("skipping record %d: %s", index, exc)
            result.skipped.append((index, str(exc)))
            continue
        rewritten = apply_rewrite(packet, spec, counters=result)
        data = encode_packet(rewritten, recompute_checksums=False)
        # apply_rewrite never changes encoded length
        assert len(data) == record.captured_len
        records.append(replace(record, data=data))
    result.capture = capture.with_records(records)
    return result
