"""Pluggable enforcement plane.

The simulated backend answers packet queries against installed policy sets;
the text emitter renders netfilter-style rule lines for inspection and for
oracle cross-checking. MUD-managed devices are default-deny: a packet
touching a managed endpoint passes only if every managed endpoint involved
has a matching accept rule. Endpoints without an installed policy follow the
configured default class (allow, modelling legacy devices).

Policy evaluation is first-match over the canonically ordered rule list,
which sorts drop ahead of accept for otherwise-identical rules (fail-safe).
"""

from __future__ import annotations

import ipaddress
import threading
from dataclasses import dataclass
from typing import Optional

from .compiler import AccessRule, EGRESS, INGRESS
from .merge import PolicySet
from .model import normalize_mac

VERDICT_ALLOW = "allow"
VERDICT_DENY = "deny"

REASON_RULE_MATCH = "rule_match"
REASON_DEFAULT_DENY_DEVICE = "default_deny_device"
REASON_DEFAULT_ALLOW_NON_MUD = "default_allow_non_mud"

LAN_TO_WAN = "lan_to_wan"
WAN_TO_LAN = "wan_to_lan"
LAN_TO_LAN = "lan_to_lan"
DIRECTIONS = (LAN_TO_WAN, WAN_TO_LAN, LAN_TO_LAN)


@dataclass(frozen=True)
class PacketQuery:
    src_ip: str
    dst_ip: str
    protocol: str  # tcp | udp | icmp
    src_port: Optional[int]
    dst_port: Optional[int]
    direction: str
    tcp_initiator: Optional[str] = None  # src | dst

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"bad direction {self.direction!r}")
        if self.protocol not in ("tcp", "udp", "icmp"):
            raise ValueError(f"bad protocol {self.protocol!r}")
        has_ports = self.src_port is not None and self.dst_port is not None
        if (self.protocol in ("tcp", "udp")) != has_ports:
            raise ValueError("ports must be present iff protocol is tcp or udp")
        if self.tcp_initiator not in (None, "src", "dst"):
            raise ValueError(f"bad tcp_initiator {self.tcp_initiator!r}")


@dataclass(frozen=True)
class Decision:
    verdict: str
    matched_rule: Optional[str]  # source_ace of the decisive rule
    reason: str

    def __post_init__(self):
        if self.verdict == VERDICT_ALLOW and self.reason == REASON_RULE_MATCH:
            assert self.matched_rule is not None


@dataclass(frozen=True)
class _Installed:
    mac: str
    ipv4: str
    policy: PolicySet


@dataclass(frozen=True)
class _State:
    devices: dict  # mac -> _Installed
    by_ip: dict    # ipv4 -> _Installed


def _rule_matches(rule: AccessRule, q: PacketQuery, side: str) -> bool:
    """side is 'src' when the device is the packet source (egress check)."""
    if side == "src":
        remote_ip, remote_port, device_port = q.dst_ip, q.dst_port, q.src_port
    else:
        remote_ip, remote_port, device_port = q.src_ip, q.src_port, q.dst_port
    if rule.protocol != "any" and rule.protocol != q.protocol:
        return False
    if ipaddress.IPv4Address(remote_ip) not in rule.remote:
        return False
    if rule.remote_port is not None:
        if remote_port is None or not rule.remote_port.contains(remote_port):
            return False
    if rule.device_port is not None:
        if device_port is None or not rule.device_port.contains(device_port):
            return False
    if rule.initiated_by is not None:
        if rule.initiated_by == "device":
            expected = "src" if side == "src" else "dst"
        else:
            expected = "dst" if side == "src" else "src"
        if q.tcp_initiator != expected:
            return False
    return True


def _evaluate(installed: _Installed, q: PacketQuery, side: str):
    """First matching rule for this endpoint, or None (default deny)."""
    wanted = EGRESS if side == "src" else INGRESS
    for rule in installed.policy.rules:
        if rule.direction == wanted and _rule_matches(rule, q, side):
            return rule
    return None


class SimulatedFirewall:
    """In-memory enforcement backend with atomic policy replacement."""

    def __init__(self, default_non_mud: str = VERDICT_ALLOW):
        if default_non_mud not in (VERDICT_ALLOW, VERDICT_DENY):
            raise ValueError(f"bad default class {default_non_mud!r}")
        self.default_non_mud = default_non_mud
        self._write_lock = threading.Lock()
        self._addresses: dict[str, str] = {}
        self._state = _State(devices={}, by_ip={})

    def set_address(self, device_mac: str, ipv4: str) -> None:
        """Bind a device's address; required before installing a policy."""
        with self._write_lock:
            self._addresses[normalize_mac(device_mac)] = ipv4

    def install(self, device_mac: str, policy: PolicySet) -> None:
        """Install or atomically replace the device's policy."""
        mac = normalize_mac(device_mac)
        with self._write_lock:
            ipv4 = self._addresses.get(mac)
            if ipv4 is None and policy.rules:
                ipv4 = policy.rules[0].device_ip
                self._addresses[mac] = ipv4
            if ipv4 is None:
                raise ValueError(f"no address bound for {mac}")
            devices = dict(self._state.devices)
            devices[mac] = _Installed(mac=mac, ipv4=ipv4, policy=policy)
            self._swap(devices)

    def remove(self, device_mac: str) -> None:
        """Drop the device's policy; it reverts to the non-MUD default class."""
        mac = normalize_mac(device_mac)
        with self._write_lock:
            if mac not in self._state.devices:
                return
            devices = dict(self._state.devices)
            del devices[mac]
            self._swap(devices)

    def _swap(self, devices: dict) -> None:
        by_ip = {inst.ipv4: inst for inst in devices.values()}
        self._state = _State(devices=devices, by_ip=by_ip)  # atomic reference swap

    def installed_policy(self, device_mac: str) -> Optional[PolicySet]:
        inst = self._state.devices.get(normalize_mac(device_mac))
        return inst.policy if inst else None

    def decide(self, q: PacketQuery) -> Decision:
        state = self._state  # one snapshot for the whole query
        endpoints = []
        if q.direction in (LAN_TO_WAN, LAN_TO_LAN):
            inst = state.by_ip.get(q.src_ip)
            if inst:
                endpoints.append((inst, "src"))
        if q.direction in (WAN_TO_LAN, LAN_TO_LAN):
            inst = state.by_ip.get(q.dst_ip)
            if inst:
                endpoints.append((inst, "dst"))

        if not endpoints:
            if self.default_non_mud == VERDICT_ALLOW:
                return Decision(VERDICT_ALLOW, None, REASON_DEFAULT_ALLOW_NON_MUD)
            return Decision(VERDICT_DENY, None, REASON_DEFAULT_DENY_DEVICE)

        first_accept: Optional[AccessRule] = None
        for inst, side in endpoints:
            rule = _evaluate(inst, q, side)
            if rule is None:
                return Decision(VERDICT_DENY, None, REASON_DEFAULT_DENY_DEVICE)
            if rule.action == "drop":
                return Decision(VERDICT_DENY, rule.source_ace, REASON_RULE_MATCH)
            if first_accept is None:
                first_accept = rule
        return Decision(VERDICT_ALLOW, first_accept.source_ace, REASON_RULE_MATCH)


# --------------------------------------------------------------------------
# Textual rule emission. One line per rule in policy order, then the
# device's default-deny pair, in a fixed grammar:
#
#   <table> <chain> -s <cidr> -d <cidr> -p <proto> [--dport lo:hi]
#       [--sport lo:hi] [--ctdir <dir>] -j <ACCEPT|DROP> # <provenance>/<ace>


def _ctdir(rule: AccessRule) -> Optional[str]:
    if rule.initiated_by is None:
        return None
    packet_follows_initiation = (
        (rule.direction == EGRESS) == (rule.initiated_by == "device"))
    return "ORIGINAL" if packet_follows_initiation else "REPLY"


def _rule_line(rule: AccessRule) -> str:
    device_cidr = f"{rule.device_ip}/32"
    remote_cidr = str(rule.remote)
    if rule.direction == EGRESS:
        src, dst = device_cidr, remote_cidr
        dport, sport = rule.remote_port, rule.device_port
    else:
        src, dst = remote_cidr, device_cidr
        dport, sport = rule.device_port, rule.remote_port
    parts = ["filter", "FORWARD", "-s", src, "-d", dst, "-p", rule.protocol]
    if dport is not None:
        parts += ["--dport", f"{dport.lo}:{dport.hi}"]
    if sport is not None:
        parts += ["--sport", f"{sport.lo}:{sport.hi}"]
    direction = _ctdir(rule)
    if direction is not None:
        parts += ["--ctdir", direction]
    parts += ["-j", "ACCEPT" if rule.action == "accept" else "DROP",
              "#", f"{rule.provenance}/{rule.source_ace}"]
    return " ".join(parts)


def emit_rules_text(policy: PolicySet, device_ip: Optional[str] = None) -> list[str]:
    """Render the policy as netfilter-style lines, default-deny pair last."""
    if device_ip is None:
        if not policy.rules:
            raise ValueError("cannot emit an empty policy without a device_ip")
        device_ip = policy.rules[0].device_ip
    lines = [_rule_line(rule) for rule in policy.rules]
    lines.append(f"filter FORWARD -s {device_ip}/32 -d 0.0.0.0/0 -p any "
                 f"-j DROP # default/deny-egress")
    lines.append(f"filter FORWARD -s 0.0.0.0/0 -d {device_ip}/32 -p any "
                 f"-j DROP # default/deny-ingress")
    return lines
