"""Deterministic builders for the bundled sample attack captures.

The samples are synthetic: packets are shaped like the recorded ICMP, SSH
and Telnet attacks (sizes, ports, direction mix, burst timing) but carry
filler payloads, never real exploit bytes. Every builder is seeded, so
regenerating the files is byte-for-byte reproducible.

Run ``python -m primer.sample_captures [OUTDIR]`` to (re)write the sample
pcaps and the example service profile.
"""

from __future__ import annotations

import random
import struct
from pathlib import Path

from primer.capture_io import (
    CaptureFile,
    LINKTYPE_ETHERNET,
    LINKTYPE_RAW_IP,
    PacketRecord,
    save,
)
from primer.packet_codec import (
    EthernetHeader,
    TCP_ACK,
    TCP_PSH,
    TCP_SYN,
    encode_packet,
    make_icmp_packet,
    make_tcp_packet,
)
from primer.mock_honeypot import default_profile, save_profile

BASE_TS = 1_600_000_000  # fixed epoch base keeps the files reproducible

# Lab addressing used by the replayable attack samples
LAB_ATTACKER = "192.168.1.5"
LAB_TARGET = "192.168.1.7"

# Internet-exposure trace: unsolicited scans toward one honeypot address.
# Each row: source, source port, destination port, per-packet frame sizes.
INTERNET_SCAN_TARGET = "206.195.147.100"
INTERNET_SCAN_ROWS = (
    ("14.192.212.211", 51018, 445, (60, 60, 74)),
    ("31.124.112.163", 49990, 23, (60,)),
    ("31.168.191.243", 58564, 81, (60,)),
    ("45.67.14.21", 35966, 22, (60, 54)),
    ("45.129.33.60", 42272, 30690, (60,)),
    ("45.129.33.60", 42272, 16390, (60,)),
    ("45.129.33.122", 41118, 5957, (60,)),
    ("45.145.66.90", 49652, 2223, (60,)),
    ("45.146.164.169", 59843, 3393, (60,)),
    ("45.146.164.169", 59843, 75, (60,)),
    ("45.146.165.250", 59757, 5097, (60,)),
    ("46.161.27.48", 43277, 23389, (60,)),
    ("51.161.12.231", 32767, 8545, (60,)),
    ("59.126.89.160", 30579, 8080, (60,)),
)

# SSH attack sample: 13 data segments each way on one port-22 flow.
SSH_CLIENT_PORT = 36269
SSH_CLIENT_SIZES = (63, 616, 72, 280, 56, 328, 92, 180, 336, 200, 256, 228, 232)
SSH_SERVER_SIZES = (62, 616, 72, 216, 56, 280, 76, 140, 248, 164, 180, 120, 117)

# Telnet key-id attack sample: SSH probe flow, Telnet flow, plus an
# extraneous high-port flow carried over from the source recording.
TELNET_FLOWS = {"ssh_probe": (52234, 22), "telnet": (41085, 23), "stray": (43691, 12235)}

_SYN_OPTIONS = (
    b"\x02\x04\x05\xb4"  # MSS 1460
    b"\x04\x02"  # SACK permitted
    b"\x08\x0a" + struct.pack("!II", 0x0001E240, 0)  # timestamps
    + b"\x01"  # NOP
    + b"\x03\x03\x07"  # window scale 7
)


def _filler(size: int, salt: int, prefix: bytes = b"") -> bytes:
    if len(prefix) > size:
        raise ValueError(f"prefix longer than payload size {size}")
    pad = bytes((salt * 31 + i * 7) % 251 for i in range(size - len(prefix)))
    return prefix + pad


def _usec_walk(rng: random.Random, count: int, lo_us: int, hi_us: int) -> list[int]:
    """Cumulative microsecond timestamps with gaps drawn from [lo, hi]."""
    ts = [BASE_TS * 1_000_000]
    for _ in range(count - 1):
        ts.append(ts[-1] + rng.randrange(lo_us, hi_us + 1))
    return ts


def _rec(ts_us: int, frame: bytes) -> PacketRecord:
    return PacketRecord(ts_us // 1_000_000, ts_us % 1_000_000, len(frame), len(frame), frame)


def internet_scan_capture() -> CaptureFile:
    """Unsolicited Internet scan traffic toward one exposed address.

    17 unidirectional TCP packets from 12 sources to 14 destination ports;
    inter-packet gaps run 30 to 50 seconds. 60-byte frames are option-rich
    SYNs; larger ones carry probe payloads.
    """
    rng = random.Random(1077)
    packets = []
    ident = 7000
    for src, sport, dport, sizes in INTERNET_SCAN_ROWS:
        for k, size in enumerate(sizes):
            ident += 1
            if size == 60:
                pkt = make_tcp_packet(
                    src, sport, INTERNET_SCAN_TARGET, dport,
                    flags=TCP_SYN,
                    seq=rng.randrange(1, 2**31),
                    options=_SYN_OPTIONS,
                    identification=ident,
                    window=64240,
                )
            else:
                pkt = make_tcp_packet(
                    src, sport, INTERNET_SCAN_TARGET, dport,
                    payload=_filler(size - 40, salt=ident),
                    flags=TCP_PSH | TCP_ACK,
                    seq=rng.randrange(1, 2**31),
                    identification=ident,
                )
            packets.append(pkt)
    times = _usec_walk(rng, len(packets), 30_000_000, 50_000_000)
    records = tuple(_rec(ts, encode_packet(p)) for ts, p in zip(times, packets))
    return CaptureFile(link_type=LINKTYPE_RAW_IP, records=records)


def internet_scan_table() -> list[tuple[str, int, str, int, int, int]]:
    """The conversation rows the scan capture is built to produce."""
    return [
        (src, sport, INTERNET_SCAN_TARGET, dport, len(sizes), sum(sizes))
        for src, sport, dport, sizes in INTERNET_SCAN_ROWS
    ]


def ssh_attack_capture() -> CaptureFile:
    """Interactive SSH-shaped attack: 13 request/response pairs on tcp/22.

    All client segments carry payload; the client burst spans under two
    hundredths of a second.
    """
    records = []
    c_sent = s_sent = 0
    base_us = BASE_TS * 1_000_000
    for i, (c_size, s_size) in enumerate(zip(SSH_CLIENT_SIZES, SSH_SERVER_SIZES)):
        c_payload = _filler(
            c_size - 40, salt=i, prefix=b"SSH-2.0-probe\r\n" if i == 0 else b""
        )
        c_pkt = make_tcp_packet(
            LAB_ATTACKER, SSH_CLIENT_PORT, LAB_TARGET, 22,
            payload=c_payload,
            seq=1 + c_sent,
            ack=1 + s_sent,
            identification=2000 + 2 * i,
        )
        c_sent += len(c_payload)
        records.append((base_us + i * 1400, c_pkt))

        s_payload = _filler(
            s_size - 40, salt=100 + i, prefix=b"SSH-2.0-OpenSSH_7.9\r\n" if i == 0 else b""
        )
        s_pkt = make_tcp_packet(
            LAB_TARGET, 22, LAB_ATTACKER, SSH_CLIENT_PORT,
            payload=s_payload,
            seq=1 + s_sent,
            ack=1 + c_sent,
            identification=2001 + 2 * i,
        )
        s_sent += len(s_payload)
        records.append((base_us + i * 1400 + 300, s_pkt))
    return CaptureFile(
        link_type=LINKTYPE_RAW_IP,
        records=tuple(_rec(ts, encode_packet(p)) for ts, p in records),
    )


def telnet_keyid_capture() -> CaptureFile:
    """Telnet key-id-overflow-shaped attack: 18 packets in under a second.

    Three client flows (tcp/22 probe, tcp/23 attack, stray tcp/12235), with
    replies on the first two; the stray flow goes unanswered, as recorded.
    """
    a, t = LAB_ATTACKER, LAB_TARGET
    ssh_sport, _ = TELNET_FLOWS["ssh_probe"]
    tel_sport, _ = TELNET_FLOWS["telnet"]
    stray_sport, stray_port = TELNET_FLOWS["stray"]

    iac = b"\xff\xfd\x01\xff\xfd\x03\xff\xfb\x18\xff\xfb\x1f"  # telnet negotiation
    events = [
        (a, ssh_sport, t, 22, _filler(14, 1, b"SSH-2.0-scan\r\n")),
        (t, 22, a, ssh_sport, _filler(20, 2, b"SSH-2.0-OpenSSH_7.9\n")),
        (a, ssh_sport, t, 22, _filler(14, 3)),
        (t, 22, a, ssh_sport, _filler(20, 4)),
        (a, tel_sport, t, 23, _filler(20, 5, iac)),
        (t, 23, a, tel_sport, _filler(21, 6, b"login: ")),
        (a, tel_sport, t, 23, _filler(20, 7)),
        (t, 23, a, tel_sport, _filler(20, 8)),
        (a, tel_sport, t, 23, _filler(20, 9)),
        (t, 23, a, tel_sport, _filler(20, 10)),
        (a, tel_sport, t, 23, _filler(20, 11)),
        (t, 23, a, tel_sport, _filler(20, 12)),
        (a, tel_sport, t, 23, _filler(20, 13)),
        (t, 23, a, tel_sport, _filler(20, 14)),
        (a, tel_sport, t, 23, _filler(20, 15)),
        (a, stray_sport, t, stray_port, _filler(34, 16)),
        (a, stray_sport, t, stray_port, _filler(34, 17)),
        (a, stray_sport, t, stray_port, _filler(34, 18)),
    ]
    rng = random.Random(4455)
    times = _usec_walk(rng, len(events), 10_000, 45_000)
    sent: dict[tuple, int] = {}
    records = []
    for ts, (src, sport, dst, dport, payload) in zip(times, events):
        key = (src, sport, dst, dport)
        rkey = (dst, dport, src, sport)
        pkt = make_tcp_packet(
            src, sport, dst, dport,
            payload=payload,
            seq=1 + sent.get(key, 0),
            ack=1 + sent.get(rkey, 0),
            identification=3000 + len(records),
        )
        sent[key] = sent.get(key, 0) + len(payload)
        records.append(_rec(ts, encode_packet(pkt)))
    return CaptureFile(link_type=LINKTYPE_RAW_IP, records=tuple(records))


def icmp_sweep_capture() -> CaptureFile:
    """Four echo request/reply pairs over Ethernet, pre-rewrite addressing.

    Uses 10.0.0.x addresses so the rewrite stage has work to do before a
    lab replay.
    """
    src, dst = "10.0.0.9", "10.0.0.7"
    link_fwd = EthernetHeader(dst_mac="aa:bb:cc:00:00:07", src_mac="aa:bb:cc:00:00:09")
    link_rev = EthernetHeader(dst_mac="aa:bb:cc:00:00:09", src_mac="aa:bb:cc:00:00:07")
    records = []
    base_us = BASE_TS * 1_000_000
    for seq in range(1, 5):
        payload = _filler(56, salt=seq)
        rest = struct.pack("!HH", 0x4242, seq)
        req = make_icmp_packet(src, dst, 8, rest=rest, payload=payload, link=link_fwd,
                               identification=4000 + seq)
        rep = make_icmp_packet(dst, src, 0, rest=rest, payload=payload, link=link_rev,
                               identification=4100 + seq)
        ts = base_us + (seq - 1) * 1_000_000
        records.append(_rec(ts, encode_packet(req)))
        records.append(_rec(ts + 450, encode_packet(rep)))
    return CaptureFile(link_type=LINKTYPE_ETHERNET, records=tuple(records))


SAMPLES = {
    "internet_scan.pcap": internet_scan_capture,
    "ssh_attack.pcap": ssh_attack_capture,
    "telnet_keyid.pcap": telnet_keyid_capture,
    "icmp_sweep.pcap": icmp_sweep_capture,
}


def write_samples(outdir: Path) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, builder in SAMPLES.items():
        path = outdir / name
        save(builder(), path)
        written.append(path)
    profile_path = outdir / "default_profile.json"
    save_profile(default_profile(), profile_path)
    written.append(profile_path)
    return written


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Regenerate the bundled sample captures.")
    parser.add_argument("outdir", nargs="?", default="samples", type=Path)
    args = parser.parse_args(argv)
    for path in write_samples(args.outdir):
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
