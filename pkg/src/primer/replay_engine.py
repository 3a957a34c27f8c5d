"""Select the attacker side of a capture, schedule it, transmit it, and
record replies.

Raw mode resends recorded frames verbatim (right for ICMP/UDP and volume
calibration). Session mode re-enacts TCP flows over real connections so
the target's stack genuinely answers; entries are the payload-bearing
segments, grouped per flow, and the session log records every attempted
transmission: a chunk aimed at a closed port still counts as sent, the
way a SYN to a dropped port still crosses the wire.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from primer.capture_io import (
    CaptureFile,
    DEFAULT_SNAP_LEN,
    LINKTYPE_RAW_IP,
    PacketRecord,
    split_timestamp,
)
from primer.packet_codec import (
    CodecError,
    ParsedPacket,
    TcpHeader,
    UdpHeader,
    TCP_ACK,
    TCP_PSH,
    decode_packet,
    encode_packet,
    make_tcp_packet,
)
from primer.transport import ConnectFailed, TransportUnavailable

logger = logging.getLogger(__name__)

MODES = ("raw", "session")
TIMING_KINDS = ("as-recorded", "compressed", "fixed-rate")


class ReplayError(Exception):
    """Base class for replay planning/execution errors."""


class AttackerNotFound(ReplayError):
    """The requested attacker address never appears as a source."""


class NoSelectableTraffic(ReplayError):
    """Nothing in the capture can be replayed under the given settings."""


class SendFailure(ReplayError):
    """One plan entry could not be transmitted (fail-fast mode only)."""

    def __init__(self, index: int, cause: str):
        super().__init__(f"entry {index}: {cause}")
        self.index = index


@dataclass(frozen=True)
class TimingPolicy:
    """When each selected packet goes out, relative to replay start.

    "as-recorded" scales the recorded gaps (scale 1.0 reproduces them),
    "compressed" sends everything immediately, "fixed-rate" spaces entries
    at ``rate`` packets per second.
    """

    kind: str = "as-recorded"
    rate: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in TIMING_KINDS:
            raise ValueError(f"timing kind must be one of {TIMING_KINDS}")
        if self.kind == "fixed-rate" and (self.rate is None or self.rate <= 0):
            raise ValueError("fixed-rate timing needs rate > 0")
        if self.kind == "as-recorded" and self.scale <= 0:
            raise ValueError("as-recorded timing needs scale > 0")

    @classmethod
    def as_recorded(cls, scale: float = 1.0) -> "TimingPolicy":
        return cls(kind="as-recorded", scale=scale)

    @classmethod
    def compressed(cls) -> "TimingPolicy":
        return cls(kind="compressed")

    @classmethod
    def fixed_rate(cls, rate: float) -> "TimingPolicy":
        return cls(kind="fixed-rate", rate=rate)

    def offsets(self, timestamps: list[float]) -> list[float]:
        if self.kind == "compressed":
            return [0.0] * len(timestamps)
        if self.kind == "fixed-rate":
            assert self.rate is not None
            return [i / self.rate for i in range(len(timestamps))]
        if not timestamps:
            return []
        base = timestamps[0]
        offsets = []
        high = 0.0
        for ts in timestamps:
            high = max(high, (ts - base) * self.scale)  # keep non-decreasing
            offsets.append(high)
        return offsets


@dataclass(frozen=True)
class RawEntry:
    offset: float
    packet: ParsedPacket


@dataclass(frozen=True)
class SessionEntry:
    offset: float
    flow_id: int
    payload: bytes
    service_port: int
    src_port: int


@dataclass(frozen=True)
class ReplayPlan:
    """Ordered, scheduled client-side transmissions toward one target."""

    mode: str
    entries: tuple[Union[RawEntry, SessionEntry], ...]
    attacker_addr: str
    target_addr: str
    link_type: int


@dataclass
class ReplaySession:
    """What a replay run actually sent and received, timestamped.

    ``sent`` is appended only by the sender, ``received`` only by the
    reply collector; both are read-only once the run finishes.
    """

    attacker_addr: str
    target_addr: str
    link_type: int
    sent: list[PacketRecord] = field(default_factory=list)
    received: list[PacketRecord] = field(default_factory=list)
    send_failures: list[tuple[int, str]] = field(default_factory=list)
    started_at: float = 0.0
    ended_at: float = 0.0


def build_replay_plan(
    capture: CaptureFile,
    attacker: str,
    mode: str = "auto",
    policy: Optional[TimingPolicy] = None,
    only_ports: Optional[Iterable[tuple[str, int]]] = None,
    target: Optional[str] = None,
) -> ReplayPlan:
    """Select the attacker's packets, in capture order, and schedule them.

    ``mode`` "auto" picks session when the selection carries TCP payload
    and raw otherwise. ``only_ports`` restricts the selection to given
    (protocol, destination port) pairs; off by default, so extraneous
    flows in the source capture replay as recorded. The target defaults to
    the attacker's most common destination.
    """
    policy = policy or TimingPolicy.as_recorded()
    port_filter = frozenset(only_ports) if only_ports else None

    decoded: list[tuple[PacketRecord, ParsedPacket]] = []
    for index, record in enumerate(capture.records):
        try:
            decoded.append((record, decode_packet(record, capture.link_type)))
        except CodecError as exc:
            logger.warning("plan skipping undecodable record %d: %s", index, exc)
    if not decoded:
        raise NoSelectableTraffic("capture has no decodable packets")

    if attacker not in {pkt.src_addr for _rec, pkt in decoded}:
        raise AttackerNotFound(f"{attacker} never appears as a source address")

    selected = [(rec, pkt) for rec, pkt in decoded if pkt.src_addr == attacker]
    if port_filter is not None:
        selected = [
            (rec, pkt)
            for rec, pkt in selected
            if isinstance(pkt.transport, (TcpHeader, UdpHeader))
            and (pkt.protocol_name, pkt.dst_port) in port_filter
        ]
    if not selected:
        raise NoSelectableTraffic(f"no replayable packets from {attacker}")

    if target is None:
        target = Counter(pkt.dst_addr for _rec, pkt in selected).most_common(1)[0][0]

    if mode == "auto":
        mode = (
            "session"
            if any(
                isinstance(pkt.transport, TcpHeader) and pkt.payload
                for _rec, pkt in selected
            )
            else "raw"
        )
    if mode not in MODES:
        raise ValueError(f"mode must be 'raw', 'session' or 'auto', got {mode!r}")

    if mode == "raw":
        offsets = policy.offsets([rec.timestamp for rec, _pkt in selected])
        entries: tuple = tuple(
            RawEntry(offset=off, packet=pkt)
            for off, (_rec, pkt) in zip(offsets, selected)
        )
        return ReplayPlan(
            mode="raw",
            entries=entries,
            attacker_addr=attacker,
            target_addr=target,
            link_type=capture.link_type,
        )

    # session mode: TCP payload chunks grouped per flow; pure control
    # segments and non-TCP records produce no entries
    chunks = [
        (rec, pkt)
        for rec, pkt in selected
        if isinstance(pkt.transport, TcpHeader) and pkt.payload
    ]
    if not chunks:
        raise NoSelectableTraffic(
            f"no TCP payload from {attacker} to re-enact; use raw mode"
        )
    flow_ids: dict[tuple[int, int], int] = {}
    offsets = policy.offsets([rec.timestamp for rec, _pkt in chunks])
    session_entries = []
    for off, (_rec, pkt) in zip(offsets, chunks):
        key = (pkt.transport.src_port, pkt.transport.dst_port)
        flow_id = flow_ids.setdefault(key, len(flow_ids))
        session_entries.append(
            SessionEntry(
                offset=off,
                flow_id=flow_id,
                payload=pkt.payload,
                service_port=pkt.transport.dst_port,
                src_port=pkt.transport.src_port,
            )
        )
    return ReplayPlan(
        mode="session",
        entries=tuple(session_entries),
        attacker_addr=attacker,
        target_addr=target,
        link_type=capture.link_type,
    )


def _record(ts: float, frame: bytes) -> PacketRecord:
    sec, usec = split_timestamp(ts)
    return PacketRecord(sec, usec, len(frame), len(frame), frame)


class _FlowState:
    """Sequence bookkeeping for one synthesized session flow."""

    def __init__(self) -> None:
        self.sent_bytes = 0
        self.recv_bytes = 0


def _synth_segment(
    src: str, sport: int, dst: str, dport: int, payload: bytes, seq: int, ack: int
) -> bytes:
    packet = make_tcp_packet(
        src, sport, dst, dport, payload,
        flags=TCP_PSH | TCP_ACK,
        seq=seq & 0xFFFFFFFF,
        ack=ack & 0xFFFFFFFF,
    )
    return encode_packet(packet, recompute_checksums=True)


def execute_replay(
    plan: ReplayPlan,
    transport,
    reply_window: float = 2.0,
    fail_fast: bool = False,
) -> ReplaySession:
    """Transmit the plan and collect replies from the target.

    Each entry goes out no earlier than its offset. Replies arriving from
    the target within ``reply_window`` after the last transmission are
    recorded; deterministic transports (loopback) finish as soon as they
    are drained instead of waiting out the window.

    Session mode logs every attempted transmission in ``sent`` even when
    the underlying connection failed (closed port), mirroring how refused
    traffic still appears in a wire capture; the failure is also noted in
    ``send_failures``.
    """
    if not plan.entries:
        raise NoSelectableTraffic("plan is empty")
    session = ReplaySession(
        attacker_addr=plan.attacker_addr,
        target_addr=plan.target_addr,
        link_type=plan.link_type if plan.mode == "raw" else LINKTYPE_RAW_IP,
    )
    session.started_at = time.time()
    start_mono = time.monotonic()

    def wait_for(offset: float) -> None:
        delay = offset - (time.monotonic() - start_mono)
        if delay > 0:
            time.sleep(delay)

    def note_failure(index: int, cause: str) -> None:
        if fail_fast:
            raise SendFailure(index, cause)
        logger.warning("entry %d failed: %s", index, cause)
        session.send_failures.append((index, cause))

    if plan.mode == "raw":
        _execute_raw(plan, transport, session, wait_for, note_failure, reply_window)
    else:
        _execute_session(plan, transport, session, wait_for, note_failure, reply_window)

    session.received.sort(key=lambda rec: (rec.ts_sec, rec.ts_usec))
    session.ended_at = time.time()
    return session


def _execute_raw(plan, transport, session, wait_for, note_failure, reply_window):
    def drain() -> None:
        for ts, frame in transport.poll_frames():
            try:
                packet = decode_packet(frame, plan.link_type)
            except CodecError:
                continue
            if packet.src_addr == plan.target_addr:
                session.received.append(_record(ts, frame))

    for index, entry in enumerate(plan.entries):
        wait_for(entry.offset)
        frame = encode_packet(entry.packet)  # verbatim resend
        ts = time.time()
        try:
            transport.inject_frame(plan.link_type, frame)
        except TransportUnavailable:
            raise
        except Exception as exc:  # noqa: BLE001 - per-entry failures are data
            note_failure(index, str(exc))
            continue
        session.sent.append(_record(ts, frame))
        drain()

    if not transport.deterministic and reply_window > 0:
        deadline = time.monotonic() + reply_window
        while time.monotonic() < deadline:
            drain()
            time.sleep(0.01)
    drain()


def _execute_session(plan, transport, session, wait_for, note_failure, reply_window):
    streams: dict[int, object] = {}
    flow_ports: dict[int, tuple[int, int]] = {}
    flows: dict[int, _FlowState] = {}
    opened_any = False

    def drain() -> None:
        for flow_id, stream in streams.items():
            if stream is None:
                continue
            sport, dport = flow_ports[flow_id]
            state = flows[flow_id]
            for ts, chunk in stream.recv_pending():
                frame = _synth_segment(
                    plan.target_addr,
                    dport,
                    plan.attacker_addr,
                    sport,
                    chunk,
                    seq=1 + state.recv_bytes,
                    ack=1 + state.sent_bytes,
                )
                state.recv_bytes += len(chunk)
                session.received.append(_record(ts, frame))

    for index, entry in enumerate(plan.entries):
        wait_for(entry.offset)
        flow_ports[entry.flow_id] = (entry.src_port, entry.service_port)
        flows.setdefault(entry.flow_id, _FlowState())
        noted = False
        if entry.flow_id not in streams:
            try:
                streams[entry.flow_id] = transport.open_stream(
                    plan.target_addr, entry.service_port, src_port=entry.src_port
                )
                opened_any = True
            except ConnectFailed as exc:
                if transport.strict_reachability and not opened_any:
                    raise TransportUnavailable(str(exc)) from exc
                streams[entry.flow_id] = None
                note_failure(index, str(exc))
                noted = True

        stream = streams[entry.flow_id]
        ts = time.time()
        state = flows[entry.flow_id]
        if stream is not None:
            try:
                stream.send(entry.payload)
            except Exception as exc:  # noqa: BLE001
                note_failure(index, str(exc))
        elif not noted:
            note_failure(
                index, f"tcp/{entry.service_port} unavailable (connect failed earlier)"
            )
        # the attempt is part of the session record either way
        frame = _synth_segment(
            plan.attacker_addr,
            entry.src_port,
            plan.target_addr,
            entry.service_port,
            entry.payload,
            seq=1 + state.sent_bytes,
            ack=1 + state.recv_bytes,
        )
        state.sent_bytes += len(entry.payload)
        session.sent.append(_record(ts, frame))
        drain()

    if not transport.deterministic and reply_window > 0:
        deadline = time.monotonic() + reply_window
        while time.monotonic() < deadline:
            drain()
            time.sleep(0.01)
    for stream in streams.values():
        if stream is not None:
            stream.close()
    drain()


def session_to_capture(session: ReplaySession) -> CaptureFile:
    """Merge sent and received into one timestamp-ordered capture.

    Ties break sent-before-received.
    """
    tagged = [(rec.ts_sec, rec.ts_usec, 0, rec) for rec in session.sent]
    tagged += [(rec.ts_sec, rec.ts_usec, 1, rec) for rec in session.received]
    tagged.sort(key=lambda item: item[:3])
    return CaptureFile(
        link_type=session.link_type,
        snap_len=DEFAULT_SNAP_LEN,
        records=tuple(rec for _s, _u, _t, rec in tagged),
    )
