"""MUD URL extraction from device-join signals.

Handles raw BOOTP/DHCP packets carrying the MUD URL option (code 161) and
structured join-event lines from the simulator. The fixed BOOTP layout:

    op(1) htype(1) hlen(1) hops(1) xid(4) secs(2) flags(2)
    ciaddr(4) yiaddr(4) siaddr(4) giaddr(4) chaddr(16) sname(64) file(128)
    = 236 bytes, then the magic cookie 63 82 53 63, then options
    (code, len, payload ...) terminated by 255, padded with 0.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterator, Optional

from .errors import (
    BadMagicCookie,
    InvalidMac,
    InvalidUrl,
    MalformedEvent,
    MalformedOption,
    TruncatedPacket,
)
from .model import MudUrl, normalize_mac

BOOTP_HEADER_LEN = 236
MAGIC_COOKIE = b"\x63\x82\x53\x63"
OPT_PAD = 0
OPT_END = 255
OPT_MUD_URL = 161  # IANA DHCPv4 option: Manufacturer Usage Description URL

DHCP_SERVER_PORT = 67
DHCP_CLIENT_PORT = 68


@dataclass(frozen=True)
class DhcpPacket:
    """The fields of a parsed DHCP message this package cares about."""

    op: int
    xid: int
    chaddr: str  # client MAC, normalized
    options: dict[int, bytes]


@dataclass(frozen=True)
class DeviceJoin:
    """A device appearing on the network, from DHCP or the simulator."""

    mac: str
    ipv4: Optional[str]
    mud_url: Optional[MudUrl]
    timestamp: datetime


def parse_dhcp(packet: bytes) -> DhcpPacket:
    """Parse the BOOTP header and option section of a DHCP message."""
    if len(packet) < BOOTP_HEADER_LEN + 4:
        raise TruncatedPacket(
            f"packet is {len(packet)} bytes, need at least {BOOTP_HEADER_LEN + 4}")
    op, htype, hlen, hops = struct.unpack_from("!BBBB", packet, 0)
    (xid,) = struct.unpack_from("!I", packet, 4)
    chaddr_raw = packet[28:28 + 16]
    if hlen != 6:
        raise TruncatedPacket(f"hardware address length {hlen}, expected 6")
    chaddr = normalize_mac(chaddr_raw[:6].hex())
    if packet[BOOTP_HEADER_LEN:BOOTP_HEADER_LEN + 4] != MAGIC_COOKIE:
        raise BadMagicCookie(
            f"bad magic {packet[BOOTP_HEADER_LEN:BOOTP_HEADER_LEN + 4].hex()}")

    options: dict[int, bytes] = {}
    off = BOOTP_HEADER_LEN + 4
    end = len(packet)
    while off < end:
        code = packet[off]
        off += 1
        if code == OPT_END:
            break
        if code == OPT_PAD:
            continue
        if off >= end:
            raise TruncatedPacket(f"option {code} has no length octet")
        length = packet[off]
        off += 1
        if off + length > end:
            raise MalformedOption(
                f"option {code} length {length} exceeds remaining {end - off} bytes")
        if code in options:
            # Option splitting (one option across several instances) is not
            # supported; a second instance is treated as malformed.
            raise MalformedOption(f"option {code} appears more than once")
        options[code] = packet[off:off + length]
        off += length
    return DhcpPacket(op=op, xid=xid, chaddr=chaddr, options=options)


def extract_mud_url(packet: bytes) -> Optional[MudUrl]:
    """Return the MUD URL carried in option 161, or None if absent."""
    parsed = parse_dhcp(packet)
    payload = parsed.options.get(OPT_MUD_URL)
    if payload is None:
        return None
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUrl(f"option {OPT_MUD_URL} payload is not UTF-8") from exc
    return MudUrl(text)


def build_discover(mac: str, mud_url: Optional[str] = None,
                   xid: int = 0x1234, extra_options: Optional[list[tuple[int, bytes]]] = None) -> bytes:
    """Assemble a DHCPDISCOVER carrying option 161; test/simulator helper."""
    mac_bytes = bytes.fromhex(normalize_mac(mac).replace(":", ""))
    header = struct.pack("!BBBBIHH4s4s4s4s16s64s128s",
                         1, 1, 6, 0, xid, 0, 0,
                         b"\x00" * 4, b"\x00" * 4, b"\x00" * 4, b"\x00" * 4,
                         mac_bytes + b"\x00" * 10, b"\x00" * 64, b"\x00" * 128)
    options = bytearray(MAGIC_COOKIE)
    options += bytes([53, 1, 1])  # message type: DHCPDISCOVER
    if mud_url is not None:
        payload = mud_url.encode("utf-8")
        if len(payload) > 255:
            raise MalformedOption("MUD URL does not fit a single option")
        options += bytes([OPT_MUD_URL, len(payload)]) + payload
    for code, payload in (extra_options or []):
        options += bytes([code, len(payload)]) + payload
    options.append(OPT_END)
    return header + bytes(options)


# --------------------------------------------------------------------------
# Simulator join events: one JSON object per line.


def parse_join_event(line: str) -> DeviceJoin:
    """Parse a join-event line: {"mac":..., "ip":..., "mud_url":..., "ts":...}."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedEvent(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedEvent("event must be a JSON object")
    for key in ("mac", "ts"):
        if key not in obj:
            raise MalformedEvent(f"event lacks {key!r}")
    try:
        mac = normalize_mac(obj["mac"])
    except InvalidMac as exc:
        raise MalformedEvent(str(exc)) from exc
    try:
        ts = datetime.fromisoformat(str(obj["ts"]).replace("Z", "+00:00"))
    except ValueError as exc:
        raise MalformedEvent(f"bad timestamp {obj['ts']!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    url = obj.get("mud_url")
    try:
        mud_url = MudUrl(url) if url is not None else None
    except InvalidUrl as exc:
        raise MalformedEvent(str(exc)) from exc
    return DeviceJoin(mac=mac, ipv4=obj.get("ip"), mud_url=mud_url,
                      timestamp=ts.astimezone(timezone.utc))


def format_join_event(join: DeviceJoin) -> str:
    return json.dumps({
        "mac": join.mac,
        "ip": join.ipv4,
        "mud_url": join.mud_url.value if join.mud_url else None,
        "ts": join.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
    }, sort_keys=True)


# --------------------------------------------------------------------------
# pcap ingestion for the mudgate-extract CLI.

_PCAP_MAGICS = {
    0xA1B2C3D4: ("!", 1_000_000),   # big endian, microseconds
    0xD4C3B2A1: ("<", 1_000_000),   # little endian, microseconds
    0xA1B23C4D: ("!", 1_000_000_000),
    0x4D3CB2A1: ("<", 1_000_000_000),
}

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW_IP = 101


def _udp_payload(frame: bytes, linktype: int) -> Optional[bytes]:
    """Walk Ethernet/IPv4/UDP headers down to a DHCP payload, else None."""
    if linktype == LINKTYPE_ETHERNET:
        if len(frame) < 14:
            return None
        ethertype = struct.unpack_from("!H", frame, 12)[0]
        if ethertype != 0x0800:
            return None
        ip = frame[14:]
    elif linktype == LINKTYPE_RAW_IP:
        ip = frame
    else:
        return None
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return None
    ihl = (ip[0] & 0x0F) * 4
    if ip[9] != 17 or len(ip) < ihl + 8:  # UDP
        return None
    sport, dport, ulen = struct.unpack_from("!HHH", ip, ihl)
    if {sport, dport} & {DHCP_SERVER_PORT, DHCP_CLIENT_PORT} == set():
        return None
    return ip[ihl + 8:ihl + ulen]


def iter_pcap_joins(data: bytes) -> Iterator[DeviceJoin]:
    """Yield a DeviceJoin for each DHCP packet in a classic pcap capture.

    Packets whose MUD URL option is malformed are skipped, not fatal; a
    missing option still yields a join with mud_url=None.
    """
    if len(data) < 24:
        raise TruncatedPacket("pcap global header truncated")
    magic = struct.unpack_from("!I", data, 0)[0]
    if magic not in _PCAP_MAGICS:
        raise TruncatedPacket(f"not a pcap file (magic {magic:#010x})")
    endian, ts_div = _PCAP_MAGICS[magic]
    _, _, _, _, _, linktype = struct.unpack_from(endian + "HHiIII", data, 4)
    off = 24
    while off + 16 <= len(data):
        ts_sec, ts_frac, incl_len, _ = struct.unpack_from(endian + "IIII", data, off)
        off += 16
        frame = data[off:off + incl_len]
        if len(frame) < incl_len:
            raise TruncatedPacket("pcap record truncated")
        off += incl_len
        payload = _udp_payload(frame, linktype)
        if payload is None:
            continue
        try:
            packet = parse_dhcp(payload)
            url = extract_mud_url(payload)
        except (TruncatedPacket, BadMagicCookie, MalformedOption, InvalidUrl, InvalidMac):
            continue
        ts = datetime.fromtimestamp(ts_sec + ts_frac / ts_div, tz=timezone.utc)
        yield DeviceJoin(mac=packet.chaddr, ipv4=None, mud_url=url, timestamp=ts)


def write_pcap(frames: list[tuple[float, bytes]], linktype: int = LINKTYPE_ETHERNET) -> bytes:
    """Serialize (timestamp, frame) pairs as a classic pcap; test helper."""
    out = bytearray(struct.pack("!IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, linktype))
    for ts, frame in frames:
        sec = int(ts)
        usec = int(round((ts - sec) * 1_000_000))
        out += struct.pack("!IIII", sec, usec, len(frame), len(frame))
        out += frame
    return bytes(out)


def wrap_udp_frame(payload: bytes, src_mac: str = "aa:bb:cc:00:00:01") -> bytes:
    """Wrap a DHCP payload in minimal Ethernet/IPv4/UDP headers; test helper."""
    mac_bytes = bytes.fromhex(normalize_mac(src_mac).replace(":", ""))
    udp = struct.pack("!HHHH", DHCP_CLIENT_PORT, DHCP_SERVER_PORT,
                      8 + len(payload), 0) + payload
    total = 20 + len(udp)
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, total, 0, 0, 64, 17, 0,
                     b"\x00\x00\x00\x00", b"\xff\xff\xff\xff") + udp
    eth = b"\xff" * 6 + mac_bytes + struct.pack("!H", 0x0800)
    return eth + ip
