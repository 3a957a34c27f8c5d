"""Replay transports: an in-memory loopback network and OS sockets.

The loopback transport is a single-endpoint virtual network shared by the
mock honeypot (server side) and the replay engine (client side). All
responses are generated synchronously, which makes replay sessions over it
deterministic. The socket transport drives real TCP connections; raw frame
injection over OS interfaces needs elevated privileges and an explicit
opt-in, and cannot capture replies (use the loopback for closed-loop runs).
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass
from typing import Mapping, Optional

from primer.capture_io import LINKTYPE_ETHERNET, LINKTYPE_RAW_IP
from primer.packet_codec import (
    CodecError,
    EthernetHeader,
    IcmpMessage,
    ParsedPacket,
    TcpHeader,
    UdpHeader,
    TCP_ACK,
    TCP_RST,
    TCP_SYN,
    decode_packet,
    encode_packet,
    make_icmp_packet,
    make_tcp_packet,
    make_udp_packet,
)

logger = logging.getLogger(__name__)


class TransportUnavailable(Exception):
    """The transport cannot reach any endpoint at all."""


class ConnectFailed(Exception):
    """One connection attempt failed (endpoint may still be reachable)."""


class LoopbackStream:
    """Client side of one loopback connection."""

    def __init__(self, session, local_port: int):
        self._session = session
        self.local_port = local_port
        self._inbox: list[tuple[float, bytes]] = []
        self._closed = False
        for chunk in session.on_connect():
            self._inbox.append((time.time(), chunk))

    def send(self, data: bytes) -> None:
        if self._closed:
            raise ConnectFailed("stream is closed")
        now = time.time()
        for chunk in self._session.on_data(data):
            self._inbox.append((now, chunk))

    def recv_pending(self) -> list[tuple[float, bytes]]:
        chunks, self._inbox = self._inbox, []
        return chunks

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._session.on_close()


class LoopbackTransport:
    """Deterministic in-memory network with at most one served endpoint.

    The mock honeypot attaches a runtime (identity, open services, closed
    policy); clients open streams or inject raw frames against it. Frames
    sent with no endpoint attached vanish, like traffic into an unused
    subnet.
    """

    deterministic = True
    strict_reachability = False

    def __init__(self):
        self._endpoint = None
        self._frame_inbox: list[tuple[float, bytes]] = []

    # server side -----------------------------------------------------------

    def attach_endpoint(self, runtime) -> None:
        if self._endpoint is not None:
            raise ConnectFailed("loopback already has an endpoint attached")
        self._endpoint = runtime

    def detach_endpoint(self) -> None:
        self._endpoint = None

    # client side -----------------------------------------------------------

    def open_stream(
        self, target: str, port: int, src_port: int = 0, timeout: float | None = None
    ) -> LoopbackStream:
        endpoint = self._endpoint
        if endpoint is None or endpoint.identity != target:
            raise TransportUnavailable(f"no loopback endpoint at {target}")
        if not endpoint.tcp_open(port):
            if endpoint.closed_policy == "reject":
                raise ConnectFailed(f"connection refused on tcp/{port}")
            raise ConnectFailed(f"connect timed out on tcp/{port} (drop policy)")
        session = endpoint.open_tcp_session(("loopback-client", src_port), port)
        return LoopbackStream(session, local_port=src_port)

    def inject_frame(self, link_type: int, frame: bytes) -> None:
        try:
            packet = decode_packet(frame, link_type)
        except CodecError as exc:
            raise ConnectFailed(f"frame does not decode: {exc}") from exc
        endpoint = self._endpoint
        if endpoint is None or packet.dst_addr != endpoint.identity:
            return  # silently dropped, nothing lives there

        reply = None
        t = packet.transport
        if isinstance(t, TcpHeader):
            if endpoint.tcp_open(t.dst_port):
                if t.flags & TCP_SYN and not t.flags & TCP_ACK:
                    reply = make_tcp_packet(
                        packet.dst_addr,
                        t.dst_port,
                        packet.src_addr,
                        t.src_port,
                        flags=TCP_SYN | TCP_ACK,
                        seq=0,
                        ack=(t.seq + 1) & 0xFFFFFFFF,
                        link=self._reply_link(packet),
                    )
            elif endpoint.closed_policy == "reject":
                reply = make_tcp_packet(
                    packet.dst_addr,
                    t.dst_port,
                    packet.src_addr,
                    t.src_port,
                    flags=TCP_RST | TCP_ACK,
                    seq=0,
                    ack=(t.seq + 1) & 0xFFFFFFFF,
                    link=self._reply_link(packet),
                )
        elif isinstance(t, UdpHeader):
            if endpoint.udp_open(t.dst_port):
                responses = endpoint.datagram(
                    (packet.src_addr, t.src_port), t.dst_port, packet.payload
                )
                now = time.time()
                for chunk in responses:
                    datagram = make_udp_packet(
                        packet.dst_addr,
                        t.dst_port,
                        packet.src_addr,
                        t.src_port,
                        chunk,
                        link=self._reply_link(packet),
                    )
                    self._frame_inbox.append(
                        (now, encode_packet(datagram, recompute_checksums=True))
                    )
                return
            if endpoint.closed_policy == "reject":
                # ICMP port unreachable quoting the offending IP header + 8 bytes
                offending = encode_packet(packet)
                if packet.link is not None:
                    offending = offending[14:]
                quote = offending[: packet.ip.header_len + 8]
                reply = make_icmp_packet(
                    packet.dst_addr,
                    packet.src_addr,
                    icmp_type=3,
                    code=3,
                    payload=quote,
                    link=self._reply_link(packet),
                )
        elif isinstance(t, IcmpMessage):
            pass  # not a service; dropped regardless of policy

        if reply is not None:
            self._frame_inbox.append(
                (time.time(), encode_packet(reply, recompute_checksums=True))
            )

    @staticmethod
    def _reply_link(packet: ParsedPacket) -> Optional[EthernetHeader]:
        if packet.link is None:
            return None
        return EthernetHeader(dst_mac=packet.link.src_mac, src_mac=packet.link.dst_mac)

    def poll_frames(self) -> list[tuple[float, bytes]]:
        frames, self._frame_inbox = self._frame_inbox, []
        return frames


class SocketStream:
    """Client side of one real TCP connection with a background reader."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self.local_port = sock.getsockname()[1]
        self._chunks: list[tuple[float, bytes]] = []
        self._lock = threading.Lock()
        self._closed = False
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while True:
            try:
                data = self._sock.recv(4096)
            except OSError:
                return
            if not data:
                return
            with self._lock:
                self._chunks.append((time.time(), data))

    def send(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise ConnectFailed(f"send failed: {exc}") from exc

    def recv_pending(self) -> list[tuple[float, bytes]]:
        with self._lock:
            chunks, self._chunks = self._chunks, []
        return chunks

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass
        self._reader.join(timeout=1.0)
        try:
            self._sock.close()
        except OSError:
            pass


class SocketTransport:
    """OS-socket client transport for session replay.

    ``connect_host``/``port_map`` redirect connections when the rewritten
    capture addresses do not match the real endpoint (NAT, unprivileged
    test ports). Raw frame injection is feature-gated behind
    ``unsafe_raw`` and needs privileges; replies are not captured on this
    path.
    """

    deterministic = False
    strict_reachability = True

    def __init__(
        self,
        connect_host: str | None = None,
        port_map: Mapping[int, int] | None = None,
        timeout: float = 2.0,
        unsafe_raw: bool = False,
    ):
        self.connect_host = connect_host
        self.port_map = dict(port_map or {})
        self.timeout = timeout
        self.unsafe_raw = unsafe_raw
        self._raw_sock: socket.socket | None = None

    def open_stream(
        self, target: str, port: int, src_port: int = 0, timeout: float | None = None
    ) -> SocketStream:
        host = self.connect_host or target
        real_port = self.port_map.get(port, port)
        try:
            sock = socket.create_connection(
                (host, real_port), timeout=timeout or self.timeout
            )
        except OSError as exc:
            raise ConnectFailed(f"connect to {host}:{real_port} failed: {exc}") from exc
        sock.settimeout(0.2)
        return SocketStream(sock)

    def inject_frame(self, link_type: int, frame: bytes) -> None:
        if not self.unsafe_raw:
            raise TransportUnavailable(
                "raw frame injection over OS sockets requires the unsafe-raw capability"
            )
        if self._raw_sock is None:
            try:
                self._raw_sock = socket.socket(
                    socket.AF_INET, socket.SOCK_RAW, socket.IPPROTO_RAW
                )
            except PermissionError as exc:
                raise TransportUnavailable(
                    f"raw socket needs elevated privileges: {exc}"
                ) from exc
        if link_type == LINKTYPE_ETHERNET:
            frame = frame[14:]  # kernel supplies the link layer
        elif link_type != LINKTYPE_RAW_IP:
            raise ConnectFailed(f"unsupported link type {link_type}")
        dst = socket.inet_ntoa(frame[16:20])
        self._raw_sock.sendto(frame, (dst, 0))

    def poll_frames(self) -> list[tuple[float, bytes]]:
        return []  # reply sniffing over OS interfaces is out of scope


@dataclass(frozen=True)
class SocketListener:
    """Where the mock honeypot should bind when serving on OS sockets.

    ``port_map`` rebinds service ports (e.g. tcp/22 -> 2222 so tests run
    unprivileged); the profile still describes the logical service.
    """

    bind_addr: str = "127.0.0.1"
    port_map: Mapping[int, int] | None = None

    def real_port(self, port: int) -> int:
        if self.port_map and port in self.port_map:
            return self.port_map[port]
        return port
