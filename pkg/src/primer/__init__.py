"""Primer: controlled, repeatable usage generation for honeypot research.

The library reads classic pcap captures of recorded attacks, rewrites
addresses and checksums, replays the attacker side at a target endpoint,
and measures the resulting interaction (conversation tables, targeting
accuracy, traffic volume).
"""

from primer.capture_io import CaptureFile, PacketRecord, read_capture, write_capture
from primer.packet_codec import (
    ParsedPacket,
    decode_packet,
    encode_packet,
    ones_complement_checksum,
    verify_checksums,
)
from primer.rewrite_engine import RewriteSpec, apply_rewrite, rewrite_capture
from primer.replay_engine import (
    ReplayPlan,
    ReplaySession,
    TimingPolicy,
    build_replay_plan,
    execute_replay,
    session_to_capture,
)
from primer.traffic_analysis import (
    AccuracyReport,
    ConversationStats,
    VolumeSeries,
    accuracy_report,
    conversation_table,
    volume_series,
)
from primer.mock_honeypot import ServiceProfile, ServiceScript, harvest_log, serve

__version__ = "0.1.0"

__all__ = [
    "CaptureFile",
    "PacketRecord",
    "read_capture",
    "write_capture",
    "ParsedPacket",
    "decode_packet",
    "encode_packet",
    "ones_complement_checksum",
    "verify_checksums",
    "RewriteSpec",
    "apply_rewrite",
    "rewrite_capture",
    "ReplayPlan",
    "ReplaySession",
    "TimingPolicy",
    "build_replay_plan",
    "execute_replay",
    "session_to_capture",
    "AccuracyReport",
    "ConversationStats",
    "VolumeSeries",
    "accuracy_report",
    "conversation_table",
    "volume_series",
    "ServiceProfile",
    "ServiceScript",
    "serve",
    "harvest_log",
]
