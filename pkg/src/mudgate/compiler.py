"""Compiles a verified MUD file into concrete per-device firewall rules.

DNS names are resolved at compile time to /32 rules and abstract selectors
(local-networks, controller, my-controller, same-manufacturer) are expanded
from site configuration and the device registry, so the enforcement plane
only ever sees numeric rules. Unresolvable or unbound selectors skip their
ACE and are reported; the rest of the profile still compiles.
"""

from __future__ import annotations

import ipaddress
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import model
from .model import Ace, MatchCriteria, MudFile, MudUrl, PortRange, normalize_mac

EGRESS = "egress"
INGRESS = "ingress"

PROVENANCE_MANUFACTURER = "manufacturer"
PROVENANCE_ADMIN = "admin"

Resolver = Callable[[str], set[str]]

_ACTION_ORDER = {"drop": 0, "accept": 1}  # drop first: fail-safe under first-match
_INITIATOR_ORDER = {None: 0, "device": 1, "remote": 2}


@dataclass(frozen=True)
class AccessRule:
    """Canonical device-scoped firewall rule."""

    device_mac: str
    device_ip: str
    direction: str  # egress | ingress
    remote: ipaddress.IPv4Network
    protocol: str = "any"  # tcp | udp | icmp | any
    remote_port: Optional[PortRange] = None
    device_port: Optional[PortRange] = None
    initiated_by: Optional[str] = None  # device | remote
    action: str = "accept"
    provenance: str = PROVENANCE_MANUFACTURER
    source_ace: str = ""

    def __post_init__(self):
        if self.direction not in (EGRESS, INGRESS):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.protocol not in ("tcp", "udp", "icmp", "any"):
            raise ValueError(f"bad protocol {self.protocol!r}")
        if self.action not in ("accept", "drop"):
            raise ValueError(f"bad action {self.action!r}")
        if self.initiated_by not in (None, "device", "remote"):
            raise ValueError(f"bad initiator {self.initiated_by!r}")
        if self.provenance not in (PROVENANCE_MANUFACTURER, PROVENANCE_ADMIN):
            raise ValueError(f"bad provenance {self.provenance!r}")

    @property
    def canonical_key(self) -> tuple:
        """Ordering/dedup identity: every field except provenance/source_ace."""
        return (
            self.device_mac,
            self.device_ip,
            self.direction,
            int(self.remote.network_address),
            self.remote.prefixlen,
            self.protocol,
            (self.remote_port.lo, self.remote_port.hi) if self.remote_port else (0, 0),
            (self.device_port.lo, self.device_port.hi) if self.device_port else (0, 0),
            _INITIATOR_ORDER[self.initiated_by],
            _ACTION_ORDER[self.action],
        )

    def to_dict(self) -> dict:
        return {
            "device_mac": self.device_mac,
            "device_ip": self.device_ip,
            "direction": self.direction,
            "remote": str(self.remote),
            "protocol": self.protocol,
            "remote_port": [self.remote_port.lo, self.remote_port.hi] if self.remote_port else None,
            "device_port": [self.device_port.lo, self.device_port.hi] if self.device_port else None,
            "initiated_by": self.initiated_by,
            "action": self.action,
            "provenance": self.provenance,
            "source_ace": self.source_ace,
        }


@dataclass(frozen=True)
class RegistryEntry:
    ipv4: str
    authority: str  # MUD URL host[:port]


class DeviceRegistry:
    """Tracked devices, keyed by MAC; feeds same-manufacturer expansion."""

    def __init__(self):
        self._entries: dict[str, RegistryEntry] = {}
        self._lock = threading.Lock()

    def add(self, mac: str, ipv4: str, mud_url: MudUrl) -> None:
        with self._lock:
            self._entries[normalize_mac(mac)] = RegistryEntry(ipv4, mud_url.authority)

    def remove(self, mac: str) -> None:
        with self._lock:
            self._entries.pop(normalize_mac(mac), None)

    def peers_with_authority(self, authority: str, excluding_mac: str) -> list[RegistryEntry]:
        skip = normalize_mac(excluding_mac)
        with self._lock:
            return [e for mac, e in sorted(self._entries.items())
                    if mac != skip and e.authority == authority]

    def entries(self) -> dict[str, RegistryEntry]:
        with self._lock:
            return dict(self._entries)


@dataclass
class DeviceContext:
    """Site configuration plus the identity of the device being compiled."""

    mac: str
    ipv4: str
    mud_url: MudUrl
    local_networks: list[str]
    controllers: dict[str, list[str]] = field(default_factory=dict)
    my_controller: Optional[str] = None
    registry: DeviceRegistry = field(default_factory=DeviceRegistry)

    def __post_init__(self):
        self.mac = normalize_mac(self.mac)
        if not self.local_networks:
            raise ValueError("local_networks must not be empty")


@dataclass(frozen=True)
class CompileProblem:
    kind: str  # resolution_failure | unbound_controller | unbound_my_controller
    acl: str
    ace: str
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "acl": self.acl, "ace": self.ace, "detail": self.detail}


@dataclass
class CompileResult:
    rules: list[AccessRule]
    problems: list[CompileProblem]


def _host_net(address: str) -> ipaddress.IPv4Network:
    return ipaddress.IPv4Network(f"{address}/32")


def _expand_remote(m: MatchCriteria, ctx: DeviceContext, resolver: Resolver,
                   acl: str, ace: str,
                   problems: list[CompileProblem]) -> list[ipaddress.IPv4Network]:
    r = m.remote
    if r.kind == model.IPV4_NETWORK:
        return [ipaddress.IPv4Network(r.value)]
    if r.kind == model.DNS_NAME:
        try:
            addresses = resolver(r.value)
        except Exception as exc:  # resolver failures are per-ACE, not fatal
            problems.append(CompileProblem("resolution_failure", acl, ace,
                                           f"{r.value}: {exc}"))
            return []
        if not addresses:
            problems.append(CompileProblem("resolution_failure", acl, ace,
                                           f"{r.value}: no addresses"))
            return []
        return [_host_net(a) for a in sorted(addresses)]
    if r.kind == model.LOCAL_NETWORKS:
        return [ipaddress.IPv4Network(n) for n in ctx.local_networks]
    if r.kind == model.CONTROLLER:
        addresses = ctx.controllers.get(r.value)
        if not addresses:
            problems.append(CompileProblem("unbound_controller", acl, ace,
                                           f"no binding for class {r.value!r}"))
            return []
        return [_host_net(a) for a in sorted(addresses)]
    if r.kind == model.MY_CONTROLLER:
        if ctx.my_controller is None:
            problems.append(CompileProblem("unbound_my_controller", acl, ace,
                                           "device has no controller binding"))
            return []
        return [_host_net(ctx.my_controller)]
    if r.kind == model.SAME_MANUFACTURER:
        peers = ctx.registry.peers_with_authority(ctx.mud_url.authority, ctx.mac)
        return [_host_net(p.ipv4) for p in peers]
    raise AssertionError(f"unhandled selector kind {r.kind}")


def _initiator(ace: Ace) -> Optional[str]:
    if ace.matches.direction_initiated == "from-device":
        return "device"
    if ace.matches.direction_initiated == "to-device":
        return "remote"
    return None


def compile(file: MudFile, ctx: DeviceContext, resolver: Resolver,
            provenance: str = PROVENANCE_MANUFACTURER) -> CompileResult:
    """Expand every ACE into concrete rules for this device.

    Deterministic for a fixed resolver table: output is sorted by the
    canonical rule key.
    """
    rules: list[AccessRule] = []
    problems: list[CompileProblem] = []
    for direction in (EGRESS, INGRESS):
        for acl_name, ace in file.aces_for(direction):
            remotes = _expand_remote(ace.matches, ctx, resolver,
                                     acl_name, ace.name, problems)
            for remote in remotes:
                rules.append(AccessRule(
                    device_mac=ctx.mac,
                    device_ip=ctx.ipv4,
                    direction=direction,
                    remote=remote,
                    protocol=ace.matches.protocol or "any",
                    remote_port=ace.matches.remote_port,
                    device_port=ace.matches.device_port,
                    initiated_by=_initiator(ace),
                    action=ace.action,
                    provenance=provenance,
                    source_ace=ace.name,
                ))
    rules.sort(key=lambda r: (r.canonical_key, r.source_ace))
    return CompileResult(rules=rules, problems=problems)


def resolve_and_refresh(rules: list[AccessRule], file: MudFile, ctx: DeviceContext,
                        resolver: Resolver,
                        provenance: str = PROVENANCE_MANUFACTURER) -> CompileResult:
    """Re-run name resolution for rules previously compiled from file.

    Recompiles against the current resolver snapshot; when the resolver
    output is unchanged the result is structurally identical to the input.
    """
    for rule in rules:
        if rule.device_mac != ctx.mac:
            raise ValueError(
                f"rule for {rule.device_mac} does not belong to device {ctx.mac}")
    return compile(file, ctx, resolver, provenance=provenance)
