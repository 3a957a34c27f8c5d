"""Decode/encode Ethernet, IPv4, TCP, UDP and ICMP headers and compute
Internet checksums.

Decoding is strictly byte-preserving: re-encoding a decoded packet with
``recompute_checksums=False`` reproduces the original frame exactly,
including IP/TCP options and any Ethernet trailer padding. Checksum
recomputation always overwrites the stored values (never "repairs"), so
captures with offload-zeroed checksums come out stack-acceptable.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, replace
from typing import Optional, Union

from primer.capture_io import LINKTYPE_ETHERNET, LINKTYPE_RAW_IP, PacketRecord

ETHERTYPE_IPV4 = 0x0800
ETHERNET_HEADER_LEN = 14

PROTO_ICMP = 1
PROTO_TCP = 6
PROTO_UDP = 17

# TCP flag bits (low byte of the flags field)
TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20

IP_FLAG_MF = 0x1  # more fragments
IP_FLAG_DF = 0x2  # don't fragment

ICMP_ECHO_REPLY = 0
ICMP_DEST_UNREACHABLE = 3
ICMP_ECHO_REQUEST = 8


class CodecError(Exception):
    """Base class for packet decode/encode errors."""


class TruncatedHeader(CodecError):
    """Frame is shorter than its declared headers (or a header is malformed)."""


class FragmentedPacket(CodecError):
    """IPv4 fragment; reassembly is out of scope, fragments are rejected."""


class NotIPv4(CodecError):
    """Frame does not carry an IPv4 packet."""


class LengthOverflow(CodecError):
    """A length field exceeds its 16-bit wire limit."""


def ip_to_bytes(addr: str) -> bytes:
    return socket.inet_aton(addr)


def ip_from_bytes(raw: bytes) -> str:
    return socket.inet_ntoa(raw)


def mac_to_bytes(mac: str) -> bytes:
    parts = mac.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {mac!r}")
    return bytes(int(p, 16) for p in parts)


def mac_from_bytes(raw: bytes) -> str:
    return ":".join(f"{b:02x}" for b in raw)


@dataclass(frozen=True)
class EthernetHeader:
    dst_mac: str
    src_mac: str
    ethertype: int = ETHERTYPE_IPV4


@dataclass(frozen=True)
class Ipv4Header:
    src_addr: str
    dst_addr: str
    protocol: int
    total_length: int
    identification: int = 0
    flags: int = 0  # 3-bit field: reserved/DF/MF
    fragment_offset: int = 0
    ttl: int = 64
    header_checksum: int = 0
    tos: int = 0
    ihl: int = 5
    version: int = 4
    options: bytes = b""

    @property
    def header_len(self) -> int:
        return self.ihl * 4


@dataclass(frozen=True)
class TcpHeader:
    src_port: int
    dst_port: int
    seq: int = 0
    ack: int = 0
    data_offset: int = 5
    flags: int = TCP_ACK
    window: int = 65535
    checksum: int = 0
    urgent: int = 0
    reserved: int = 0  # low nibble of the offset byte, preserved verbatim
    options: bytes = b""

    @property
    def header_len(self) -> int:
        return self.data_offset * 4


@dataclass(frozen=True)
class UdpHeader:
    src_port: int
    dst_port: int
    length: int
    checksum: int = 0


@dataclass(frozen=True)
class IcmpMessage:
    type: int
    code: int = 0
    checksum: int = 0
    rest: bytes = b"\x00\x00\x00\x00"  # identifier/sequence or unused word


@dataclass(frozen=True)
class OpaqueProtocol:
    """Transport bytes for protocols this codec does not interpret."""

    protocol: int
    data: bytes


Transport = Union[TcpHeader, UdpHeader, IcmpMessage, OpaqueProtocol]


@dataclass(frozen=True)
class ParsedPacket:
    """Layered view of one frame: optional Ethernet, IPv4, transport, payload.

    ``trailer`` holds bytes past the IP total length (Ethernet minimum-frame
    padding); it is carried so re-encoding stays byte-identical.
    """

    ip: Ipv4Header
    transport: Transport
    payload: bytes = b""
    link: Optional[EthernetHeader] = None
    trailer: bytes = b""

    @property
    def link_type(self) -> int:
        return LINKTYPE_ETHERNET if self.link is not None else LINKTYPE_RAW_IP

    @property
    def src_addr(self) -> str:
        return self.ip.src_addr

    @property
    def dst_addr(self) -> str:
        return self.ip.dst_addr

    @property
    def src_port(self) -> int:
        t = self.transport
        return t.src_port if isinstance(t, (TcpHeader, UdpHeader)) else 0

    @property
    def dst_port(self) -> int:
        t = self.transport
        return t.dst_port if isinstance(t, (TcpHeader, UdpHeader)) else 0

    @property
    def protocol_name(self) -> str:
        t = self.transport
        if isinstance(t, TcpHeader):
            return "tcp"
        if isinstance(t, UdpHeader):
            return "udp"
        if isinstance(t, IcmpMessage):
            return "icmp"
        return f"proto-{t.protocol}"


@dataclass(frozen=True)
class ChecksumReport:
    """Per-layer checksum validity; None where the layer has no checksum."""

    ip_ok: bool
    transport_kind: str  # "tcp" | "udp" | "icmp" | "opaque"
    transport_ok: Optional[bool]

    @property
    def all_ok(self) -> bool:
        return self.ip_ok and self.transport_ok is not False


def _ones_complement_sum(data: bytes) -> int:
    """16-bit one's-complement sum over big-endian words, carries folded."""
    if len(data) % 2:
        data += b"\x00"
    total = 0
    for (word,) in struct.iter_unpack("!H", data):
        total += word
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def ones_complement_checksum(data: bytes) -> int:
    """Standard Internet checksum: complement of the one's-complement sum.

    Odd-length input is padded with one zero byte for summation.
    """
    return ~_ones_complement_sum(data) & 0xFFFF


def _pseudo_header(ip: Ipv4Header, length: int) -> bytes:
    return struct.pack(
        "!4s4sBBH", ip_to_bytes(ip.src_addr), ip_to_bytes(ip.dst_addr), 0, ip.protocol, length
    )


def decode_packet(record: Union[PacketRecord, bytes], link_type: int) -> ParsedPacket:
    """Decode one frame into its layered form.

    Checksum fields are carried as read, not validated. Unknown transport
    protocols are preserved opaquely. IPv4 fragments are rejected.
    """
    data = record.data if isinstance(record, PacketRecord) else bytes(record)

    link = None
    offset = 0
    if link_type == LINKTYPE_ETHERNET:
        if len(data) < ETHERNET_HEADER_LEN:
            raise TruncatedHeader(f"{len(data)} bytes is too short for an Ethernet header")
        ethertype = struct.unpack("!H", data[12:14])[0]
        if ethertype != ETHERTYPE_IPV4:
            raise NotIPv4(f"ethertype 0x{ethertype:04x} is not IPv4")
        link = EthernetHeader(
            dst_mac=mac_from_bytes(data[0:6]),
            src_mac=mac_from_bytes(data[6:12]),
            ethertype=ethertype,
        )
        offset = ETHERNET_HEADER_LEN
    elif link_type != LINKTYPE_RAW_IP:
        raise NotIPv4(f"unsupported link type {link_type}")

    if len(data) - offset < 20:
        raise TruncatedHeader("IPv4 header incomplete")
    ver_ihl, tos, total_length, ident, flags_frag, ttl, proto, cksum = struct.unpack(
        "!BBHHHBBH", data[offset : offset + 12]
    )
    version = ver_ihl >> 4
    ihl = ver_ihl & 0x0F
    if version != 4:
        raise NotIPv4(f"IP version {version}")
    if ihl < 5:
        raise TruncatedHeader(f"IPv4 ihl {ihl} < 5")
    header_len = ihl * 4
    if len(data) - offset < header_len:
        raise TruncatedHeader("IPv4 options incomplete")
    if total_length < header_len:
        raise TruncatedHeader(
            f"IPv4 total_length {total_length} shorter than header ({header_len})"
        )
    flags = flags_frag >> 13
    fragment_offset = flags_frag & 0x1FFF
    if fragment_offset != 0 or flags & IP_FLAG_MF:
        raise FragmentedPacket(
            f"fragment (offset={fragment_offset}, MF={bool(flags & IP_FLAG_MF)})"
        )
    src = ip_from_bytes(data[offset + 12 : offset + 16])
    dst = ip_from_bytes(data[offset + 16 : offset + 20])
    options = data[offset + 20 : offset + header_len]
    ip = Ipv4Header(
        src_addr=src,
        dst_addr=dst,
        protocol=proto,
        total_length=total_length,
        identification=ident,
        flags=flags,
        fragment_offset=fragment_offset,
        ttl=ttl,
        header_checksum=cksum,
        tos=tos,
        ihl=ihl,
        options=options,
    )

    # Body may be shorter than total_length when the capture was snapped;
    # bytes beyond total_length are an Ethernet trailer.
    body_end = min(offset + total_length, len(data))
    body = data[offset + header_len : body_end]
    trailer = data[body_end:]

    transport: Transport
    if proto == PROTO_TCP:
        if len(body) < 20:
            raise TruncatedHeader("TCP header incomplete")
        sport, dport, seq, ack, off_res, flag_bits, window, tcksum, urgent = struct.unpack(
            "!HHIIBBHHH", body[:20]
        )
        data_offset = off_res >> 4
        if data_offset < 5:
            raise TruncatedHeader(f"TCP data offset {data_offset} < 5")
        if len(body) < data_offset * 4:
            raise TruncatedHeader("TCP options incomplete")
        transport = TcpHeader(
            src_port=sport,
            dst_port=dport,
            seq=seq,
            ack=ack,
            data_offset=data_offset,
            flags=flag_bits,
            window=window,
            checksum=tcksum,
            urgent=urgent,
            reserved=off_res & 0x0F,
            options=body[20 : data_offset * 4],
        )
        payload = body[data_offset * 4 :]
    elif proto == PROTO_UDP:
        if len(body) < 8:
            raise TruncatedHeader("UDP header incomplete")
        sport, dport, ulen, ucksum = struct.unpack("!HHHH", body[:8])
        transport = UdpHeader(src_port=sport, dst_port=dport, length=ulen, checksum=ucksum)
        payload = body[8:]
    elif proto == PROTO_ICMP:
        if len(body) < 8:
            raise TruncatedHeader("ICMP header incomplete")
        itype, icode, icksum = struct.unpack("!BBH", body[:4])
        transport = IcmpMessage(type=itype, code=icode, checksum=icksum, rest=body[4:8])
        payload = body[8:]
    else:
        transport = OpaqueProtocol(protocol=proto, data=body)
        payload = b""

    return ParsedPacket(ip=ip, transport=transport, payload=payload, link=link, trailer=trailer)


def _encode_ip_header(ip: Ipv4Header, recompute: bool) -> bytes:
    if not 0 <= ip.total_length <= 0xFFFF:
        raise LengthOverflow(f"IPv4 total_length {ip.total_length} exceeds 65535")
    header = bytearray(
        struct.pack(
            "!BBHHHBBH4s4s",
            (ip.version << 4) | ip.ihl,
            ip.tos,
            ip.total_length,
            ip.identification,
            (ip.flags << 13) | ip.fragment_offset,
            ip.ttl,
            ip.protocol,
            0 if recompute else ip.header_checksum,
            ip_to_bytes(ip.src_addr),
            ip_to_bytes(ip.dst_addr),
        )
    )
    header += ip.options
    if recompute:
        header[10:12] = struct.pack("!H", ones_complement_checksum(bytes(header)))
    return bytes(header)


def _encode_tcp(tcp: TcpHeader, ip: Ipv4Header, payload: bytes, recompute: bool) -> bytes:
    segment = bytearray(
        struct.pack(
            "!HHIIBBHHH",
            tcp.src_port,
            tcp.dst_port,
            tcp.seq,
            tcp.ack,
            (tcp.data_offset << 4) | tcp.reserved,
            tcp.flags,
            tcp.window,
            0 if recompute else tcp.checksum,
            tcp.urgent,
        )
    )
    segment += tcp.options
    segment += payload
    if recompute:
        pseudo = _pseudo_header(ip, len(segment))
        segment[16:18] = struct.pack("!H", ones_complement_checksum(pseudo + bytes(segment)))
    return bytes(segment)


def _encode_udp(udp: UdpHeader, ip: Ipv4Header, payload: bytes, recompute: bool) -> bytes:
    if not 0 <= udp.length <= 0xFFFF:
        raise LengthOverflow(f"UDP length {udp.length} exceeds 65535")
    datagram = bytearray(
        struct.pack("!HHHH", udp.src_port, udp.dst_port, udp.length, 0 if recompute else udp.checksum)
    )
    datagram += payload
    if recompute:
        pseudo = _pseudo_header(ip, udp.length)
        value = ones_complement_checksum(pseudo + bytes(datagram))
        if value == 0:
            value = 0xFFFF  # RFC 768: computed zero is transmitted as all-ones
        datagram[6:8] = struct.pack("!H", value)
    return bytes(datagram)


def _encode_icmp(icmp: IcmpMessage, payload: bytes, recompute: bool) -> bytes:
    message = bytearray(
        struct.pack("!BBH", icmp.type, icmp.code, 0 if recompute else icmp.checksum)
    )
    message += icmp.rest
    message += payload
    if recompute:
        message[2:4] = struct.pack("!H", ones_complement_checksum(bytes(message)))
    return bytes(message)


def encode_packet(packet: ParsedPacket, recompute_checksums: bool = False) -> bytes:
    """Encode a ParsedPacket back to frame bytes.

    With ``recompute_checksums=False`` this is the exact inverse of
    decode_packet. With True, the IP header checksum, TCP/UDP checksum
    (pseudo-header included) and ICMP checksum are freshly computed.
    """
    ip_header = _encode_ip_header(packet.ip, recompute_checksums)

    t = packet.transport
    if isinstance(t, TcpHeader):
        body = _encode_tcp(t, packet.ip, packet.payload, recompute_checksums)
    elif isinstance(t, UdpHeader):
        body = _encode_udp(t, packet.ip, packet.payload, recompute_checksums)
    elif isinstance(t, IcmpMessage):
        body = _encode_icmp(t, packet.payload, recompute_checksums)
    else:
        body = t.data

    frame = ip_header + body + packet.trailer
    if packet.link is not None:
        frame = (
            mac_to_bytes(packet.link.dst_mac)
            + mac_to_bytes(packet.link.src_mac)
            + struct.pack("!H", packet.link.ethertype)
            + frame
        )
    return frame


def with_fresh_checksums(packet: ParsedPacket) -> ParsedPacket:
    """Return the packet with all checksum fields recomputed."""
    return decode_packet(encode_packet(packet, recompute_checksums=True), packet.link_type)


def verify_checksums(packet: ParsedPacket) -> ChecksumReport:
    """Report IP-header and transport checksum validity independently.

    Validity means the full-coverage one's-complement sum, checksum field
    included, comes out 0xFFFF. A zero UDP checksum counts as valid
    (checksum disabled, legal over IPv4). Invalid checksums are report
    content, never errors.
    """
    ip_bytes = _encode_ip_header(packet.ip, recompute=False)
    ip_ok = _ones_complement_sum(ip_bytes) == 0xFFFF

    t = packet.transport
    transport_ok: Optional[bool]
    if isinstance(t, TcpHeader):
        kind = "tcp"
        segment = _encode_tcp(t, packet.ip, packet.payload, recompute=False)
        pseudo = _pseudo_header(packet.ip, len(segment))
        transport_ok = _ones_complement_sum(pseudo + segment) == 0xFFFF
    elif isinstance(t, UdpHeader):
        kind = "udp"
        if t.checksum == 0:
            transport_ok = True
        else:
            datagram = _encode_udp(t, packet.ip, packet.payload, recompute=False)
            pseudo = _pseudo_header(packet.ip, t.length)
            transport_ok = _ones_complement_sum(pseudo + datagram) == 0xFFFF
    elif isinstance(t, IcmpMessage):
        kind = "icmp"
        message = _encode_icmp(t, packet.payload, recompute=False)
        transport_ok = _ones_complement_sum(message) == 0xFFFF
    else:
        kind = "opaque"
        transport_ok = None

    return ChecksumReport(ip_ok=ip_ok, transport_kind=kind, transport_ok=transport_ok)


def make_tcp_packet(
    src_addr: str,
    src_port: int,
    dst_addr: str,
    dst_port: int,
    payload: bytes = b"",
    *,
    flags: int = TCP_PSH | TCP_ACK,
    seq: int = 0,
    ack: int = 0,
    options: bytes = b"",
    link: Optional[EthernetHeader] = None,
    ttl: int = 64,
    identification: int = 0,
    window: int = 65535,
) -> ParsedPacket:
    """Build a wire-valid TCP packet (checksums computed, lengths derived)."""
    if len(options) % 4:
        raise ValueError("TCP options length must be a multiple of 4")
    tcp = TcpHeader(
        src_port=src_port,
        dst_port=dst_port,
        seq=seq,
        ack=ack,
        data_offset=5 + len(options) // 4,
        flags=flags,
        window=window,
        options=options,
    )
    ip = Ipv4Header(
        src_addr=src_addr,
        dst_addr=dst_addr,
        protocol=PROTO_TCP,
        total_length=20 + tcp.header_len + len(payload),
        ttl=ttl,
        identification=identification,
        flags=IP_FLAG_DF,
    )
    return with_fresh_checksums(ParsedPacket(ip=ip, transport=tcp, payload=payload, link=link))


def make_udp_packet(
    src_addr: str,
    src_port: int,
    dst_addr: str,
    dst_port: int,
    payload: bytes = b"",
    *,
    link: Optional[EthernetHeader] = None,
    ttl: int = 64,
    identification: int = 0,
) -> ParsedPacket:
    """Build a wire-valid UDP packet."""
    udp = UdpHeader(src_port=src_port, dst_port=dst_port, length=8 + len(payload))
    ip = Ipv4Header(
        src_addr=src_addr,
        dst_addr=dst_addr,
        protocol=PROTO_UDP,
        total_length=28 + len(payload),
        ttl=ttl,
        identification=identification,
    )
    return with_fresh_checksums(ParsedPacket(ip=ip, transport=udp, payload=payload, link=link))


def make_icmp_packet(
    src_addr: str,
    dst_addr: str,
    icmp_type: int,
    code: int = 0,
    rest: bytes = b"\x00\x00\x00\x00",
    payload: bytes = b"",
    *,
    link: Optional[EthernetHeader] = None,
    ttl: int = 64,
    identification: int = 0,
) -> ParsedPacket:
    """Build a wire-valid ICMP packet (echo, unreachable, ...)."""
    if len(rest) != 4:
        raise ValueError("ICMP rest-of-header must be 4 bytes")
    icmp = IcmpMessage(type=icmp_type, code=code, rest=rest)
    ip = Ipv4Header(
        src_addr=src_addr,
        dst_addr=dst_addr,
        protocol=PROTO_ICMP,
        total_length=28 + len(payload),
        ttl=ttl,
        identification=identification,
    )
    return with_fresh_checksums(ParsedPacket(ip=ip, transport=icmp, payload=payload, link=link))


def replace_addresses(
    packet: ParsedPacket,
    *,
    src_addr: Optional[str] = None,
    dst_addr: Optional[str] = None,
) -> ParsedPacket:
    """Swap IP addresses without recomputing checksums (rewrite plumbing)."""
    ip = replace(
        packet.ip,
        src_addr=src_addr if src_addr is not None else packet.ip.src_addr,
        dst_addr=dst_addr if dst_addr is not None else packet.ip.dst_addr,
    )
    return replace(packet, ip=ip)
