"""Deterministic stand-in for a Cowrie-style target: configurable banner
services on an otherwise drop-everything endpoint.

This is a calibration fixture, not a deception system: no shell emulation,
no filesystem illusion. It exists so replay runs can be measured against a
known ground truth of open services, entirely offline over the loopback
transport or on real sockets.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Union

from primer.transport import LoopbackTransport, SocketListener

logger = logging.getLogger(__name__)

MODES = ("sink", "echo", "scripted")
CLOSED_POLICIES = ("drop", "reject")

DEFAULT_IDENTITY = "192.168.1.7"
DEFAULT_SSH_BANNER = b"SSH-2.0-OpenSSH_7.9\r\n"
DEFAULT_TELNET_BANNER = b"login: "


class BindFailure(Exception):
    """A service port could not be bound."""


@dataclass(frozen=True)
class ServiceScript:
    """Behaviour of one open service.

    The banner is sent exactly once per connection, before any response.
    Modes: "sink" swallows input, "echo" returns it, "scripted" matches
    accumulated inbound bytes against trigger prefixes (longest first) and
    answers with the paired response, consuming the matched bytes.
    """

    banner: bytes = b""
    mode: str = "sink"
    script: tuple[tuple[bytes, bytes], ...] = ()

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "scripted" and not self.script:
            raise ValueError("scripted mode needs at least one trigger/response pair")


@dataclass(frozen=True)
class ServiceProfile:
    """Open services keyed by (protocol, port), plus the closed-port policy
    and the address the endpoint claims to be."""

    services: Mapping[tuple[str, int], ServiceScript]
    closed_policy: str = "drop"
    identity: str = DEFAULT_IDENTITY

    def __post_init__(self) -> None:
        if self.closed_policy not in CLOSED_POLICIES:
            raise ValueError(f"closed_policy must be one of {CLOSED_POLICIES}")
        for proto, _port in self.services:
            if proto not in ("tcp", "udp"):
                raise ValueError(f"service protocol must be tcp or udp, got {proto!r}")

    @property
    def open_ports(self) -> frozenset[tuple[str, int]]:
        return frozenset(self.services)


def default_profile(identity: str = DEFAULT_IDENTITY) -> ServiceProfile:
    """SSH and Telnet banners with echo, everything else dropped."""
    return ServiceProfile(
        services={
            ("tcp", 22): ServiceScript(banner=DEFAULT_SSH_BANNER, mode="echo"),
            ("tcp", 23): ServiceScript(banner=DEFAULT_TELNET_BANNER, mode="echo"),
        },
        closed_policy="drop",
        identity=identity,
    )


def profile_from_dict(raw: dict) -> ServiceProfile:
    services = {}
    for svc in raw.get("services", []):
        key = (svc["proto"], int(svc["port"]))
        script = tuple(
            (t.encode("latin-1"), r.encode("latin-1")) for t, r in svc.get("script", [])
        )
        services[key] = ServiceScript(
            banner=svc.get("banner", "").encode("latin-1"),
            mode=svc.get("mode", "sink"),
            script=script,
        )
    return ServiceProfile(
        services=services,
        closed_policy=raw.get("closed_policy", "drop"),
        identity=raw.get("identity", DEFAULT_IDENTITY),
    )


def profile_to_dict(profile: ServiceProfile) -> dict:
    return {
        "identity": profile.identity,
        "closed_policy": profile.closed_policy,
        "services": [
            {
                "proto": proto,
                "port": port,
                "banner": script.banner.decode("latin-1"),
                "mode": script.mode,
                "script": [
                    [t.decode("latin-1"), r.decode("latin-1")] for t, r in script.script
                ],
            }
            for (proto, port), script in sorted(profile.services.items())
        ],
    }


def load_profile(path: Union[str, Path]) -> ServiceProfile:
    """Read a profile from its JSON file format (bytes as latin-1 strings)."""
    with open(path, "r", encoding="utf-8") as fh:
        return profile_from_dict(json.load(fh))


def save_profile(profile: ServiceProfile, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(profile_to_dict(profile), fh, indent=2)
        fh.write("\n")


@dataclass
class Transcript:
    """Everything one connection said and heard, with timestamps."""

    peer: tuple[str, int]
    port: int
    protocol: str
    opened_at: float
    inbound: list[tuple[float, bytes]] = field(default_factory=list)
    outbound: list[tuple[float, bytes]] = field(default_factory=list)
    closed_at: Optional[float] = None

    @property
    def inbound_bytes(self) -> bytes:
        return b"".join(chunk for _ts, chunk in self.inbound)

    @property
    def outbound_bytes(self) -> bytes:
        return b"".join(chunk for _ts, chunk in self.outbound)


class _Session:
    """Per-connection service state: banner-once, then mode behaviour."""

    def __init__(self, script: ServiceScript, transcript: Transcript):
        self._script = script
        self._transcript = transcript
        self._pending = b""  # scripted-mode accumulation

    def on_connect(self) -> list[bytes]:
        if not self._script.banner:
            return []
        self._transcript.outbound.append((time.time(), self._script.banner))
        return [self._script.banner]

    def on_data(self, data: bytes) -> list[bytes]:
        now = time.time()
        self._transcript.inbound.append((now, data))
        if self._script.mode == "sink":
            return []
        if self._script.mode == "echo":
            self._transcript.outbound.append((now, data))
            return [data]
        # scripted: longest trigger that prefixes the accumulated buffer
        # fires, is consumed, and matching retries until nothing fits
        self._pending += data
        responses = []
        while True:
            match = None
            for trigger, response in sorted(
                self._script.script, key=lambda tr: -len(tr[0])
            ):
                if trigger and self._pending.startswith(trigger):
                    match = (trigger, response)
                    break
            if match is None:
                break
            trigger, response = match
            self._pending = self._pending[len(trigger):]
            if response:
                self._transcript.outbound.append((now, response))
                responses.append(response)
        return responses

    def on_close(self) -> None:
        self._transcript.closed_at = time.time()


class ProfileRuntime:
    """Endpoint logic shared by the loopback and socket transports."""

    def __init__(self, profile: ServiceProfile):
        self.profile = profile
        self.identity = profile.identity
        self.closed_policy = profile.closed_policy
        self._transcripts: list[Transcript] = []
        self._lock = threading.Lock()
        self._udp_sessions: dict[tuple[tuple[str, int], int], _Session] = {}

    def tcp_open(self, port: int) -> bool:
        return ("tcp", port) in self.profile.services

    def udp_open(self, port: int) -> bool:
        return ("udp", port) in self.profile.services

    def open_tcp_session(self, peer: tuple[str, int], port: int) -> _Session:
        script = self.profile.services[("tcp", port)]
        transcript = Transcript(peer=peer, port=port, protocol="tcp", opened_at=time.time())
        with self._lock:
            self._transcripts.append(transcript)
        return _Session(script, transcript)

    def datagram(self, peer: tuple[str, int], port: int, payload: bytes) -> list[bytes]:
        """Feed one UDP datagram; the first from a peer opens a session and
        gets the banner ahead of any response."""
        key = (peer, port)
        first = key not in self._udp_sessions
        if first:
            script = self.profile.services[("udp", port)]
            transcript = Transcript(
                peer=peer, port=port, protocol="udp", opened_at=time.time()
            )
            with self._lock:
                self._transcripts.append(transcript)
            self._udp_sessions[key] = _Session(script, transcript)
        session = self._udp_sessions[key]
        out = session.on_connect() if first else []
        out += session.on_data(payload)
        return out

    def snapshot(self) -> list[Transcript]:
        with self._lock:
            return sorted(self._transcripts, key=lambda t: t.opened_at)


class ServiceHandle:
    """Running mock honeypot; shutdown stops listeners and freezes logs."""

    def __init__(self, runtime: ProfileRuntime, stop):
        self._runtime = runtime
        self._stop = stop
        self._closed = False

    @property
    def runtime(self) -> ProfileRuntime:
        return self._runtime

    def shutdown(self) -> None:
        if not self._closed:
            self._closed = True
            self._stop()

    def __enter__(self) -> "ServiceHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


class _TcpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        runtime: ProfileRuntime = self.server.runtime  # type: ignore[attr-defined]
        port: int = self.server.service_port  # type: ignore[attr-defined]
        session = runtime.open_tcp_session(self.client_address, port)
        try:
            for chunk in session.on_connect():
                self.request.sendall(chunk)
            while True:
                data = self.request.recv(4096)
                if not data:
                    break
                for chunk in session.on_data(data):
                    self.request.sendall(chunk)
        except OSError:
            pass
        finally:
            session.on_close()


class _UdpHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        runtime: ProfileRuntime = self.server.runtime  # type: ignore[attr-defined]
        port: int = self.server.service_port  # type: ignore[attr-defined]
        data, sock = self.request
        for chunk in runtime.datagram(self.client_address, port, data):
            sock.sendto(chunk, self.client_address)


class _ThreadingTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _ThreadingUDPServer(socketserver.ThreadingUDPServer):
    daemon_threads = True


def serve(
    profile: ServiceProfile,
    transport: Union[LoopbackTransport, SocketListener],
) -> ServiceHandle:
    """Start serving the profile on the given endpoint.

    On the loopback transport this attaches the endpoint to the fabric; on
    a SocketListener it binds one threaded server per service. The closed
    policy is fully honored on loopback only: unbound OS ports behave
    however the host stack does.
    """
    runtime = ProfileRuntime(profile)

    if isinstance(transport, LoopbackTransport):
        transport.attach_endpoint(runtime)
        return ServiceHandle(runtime, stop=transport.detach_endpoint)

    if isinstance(transport, SocketListener):
        servers = []
        threads = []
        try:
            for (proto, port) in profile.services:
                real_port = transport.real_port(port)
                server_cls = _ThreadingTCPServer if proto == "tcp" else _ThreadingUDPServer
                handler = _TcpHandler if proto == "tcp" else _UdpHandler
                try:
                    server = server_cls((transport.bind_addr, real_port), handler)
                except OSError as exc:
                    raise BindFailure(
                        f"cannot bind {proto}/{real_port} on {transport.bind_addr}: {exc}"
                    ) from exc
                server.runtime = runtime  # type: ignore[attr-defined]
                server.service_port = port  # type: ignore[attr-defined]
                thread = threading.Thread(target=server.serve_forever, daemon=True)
                thread.start()
                servers.append(server)
                threads.append(thread)
        except BindFailure:
            for server in servers:
                server.shutdown()
                server.server_close()
            raise

        def stop() -> None:
            for server in servers:
                server.shutdown()
                server.server_close()
            for thread in threads:
                thread.join(timeout=2.0)

        return ServiceHandle(runtime, stop=stop)

    raise TypeError(f"unsupported serve transport {type(transport).__name__}")


def harvest_log(handle: ServiceHandle) -> list[Transcript]:
    """Per-connection transcripts ordered by connection start."""
    return handle.runtime.snapshot()
