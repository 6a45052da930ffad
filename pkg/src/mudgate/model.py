"""MUD/UPS file model.

Parses the supported subset of the RFC 8520 JSON instance layout
(``ietf-mud:mud`` root container plus ``ietf-access-control-list:acls``)
into plain dataclasses, and re-serializes them into a canonical byte form
suitable for detached signing.

Administrator policy (UPS) files use the identical schema; there is no
separate parser.
"""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional
from urllib.parse import urlsplit

from .errors import (
    DanglingAclReference,
    InvalidMac,
    InvalidUrl,
    MalformedDocument,
    SchemaViolation,
    UnsupportedSelector,
    UnsupportedVersion,
)

MUD_VERSION = 1
CACHE_VALIDITY_MIN_HOURS = 1
CACHE_VALIDITY_MAX_HOURS = 168
MAX_URL_LEN = 2048

PROTO_BY_NUMBER = {6: "tcp", 17: "udp", 1: "icmp"}
PROTO_NUMBERS = {v: k for k, v in PROTO_BY_NUMBER.items()}

# Remote endpoint selector kinds (the supported subset).
DNS_NAME = "dns_name"
IPV4_NETWORK = "ipv4_network"
LOCAL_NETWORKS = "local_networks"
CONTROLLER = "controller"
MY_CONTROLLER = "my_controller"
SAME_MANUFACTURER = "same_manufacturer"

_MAC_RE = re.compile(r"^[0-9a-f]{12}$")


def normalize_mac(mac: str) -> str:
    """Return the MAC as lowercase colon-separated hex, or raise InvalidMac."""
    if not isinstance(mac, str):
        raise InvalidMac(f"MAC must be a string, got {type(mac).__name__}")
    stripped = mac.lower().replace(":", "").replace("-", "").replace(".", "")
    if not _MAC_RE.match(stripped):
        raise InvalidMac(f"not a 6-octet MAC address: {mac!r}")
    return ":".join(stripped[i:i + 2] for i in range(0, 12, 2))


def mac_to_filename(mac: str) -> str:
    """Map a MAC address to its UPS file name: lowercase hex, no separators."""
    return normalize_mac(mac).replace(":", "") + ".json"


@dataclass(frozen=True)
class MudUrl:
    """Absolute https URL pointing at a MUD file."""

    value: str

    def __post_init__(self):
        if len(self.value.encode("utf-8")) > MAX_URL_LEN:
            raise InvalidUrl(f"URL longer than {MAX_URL_LEN} bytes")
        parts = urlsplit(self.value)
        if parts.scheme != "https":
            raise InvalidUrl(f"MUD URL scheme must be https, got {parts.scheme!r}")
        if not parts.netloc:
            raise InvalidUrl("MUD URL has no host")
        if parts.fragment:
            raise InvalidUrl("MUD URL must not carry a fragment")

    @property
    def authority(self) -> str:
        """host[:port], lowercased; the same-manufacturer grouping key."""
        return urlsplit(self.value).netloc.lower()

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class PortRange:
    """Inclusive port range, 1 <= lo <= hi <= 65535."""

    lo: int
    hi: int

    def __post_init__(self):
        if not (1 <= self.lo <= self.hi <= 65535):
            raise SchemaViolation(f"bad port range [{self.lo}, {self.hi}]")

    def contains(self, port: int) -> bool:
        return self.lo <= port <= self.hi


@dataclass(frozen=True)
class RemoteSpec:
    """Exactly-one remote endpoint selector of an ACE."""

    kind: str  # one of the selector kind constants above
    value: Optional[str] = None  # FQDN, CIDR or controller class URI

    def __post_init__(self):
        needs_value = self.kind in (DNS_NAME, IPV4_NETWORK, CONTROLLER)
        if needs_value != (self.value is not None):
            raise SchemaViolation(f"selector {self.kind} value mismatch")
        if self.kind == IPV4_NETWORK:
            try:
                ipaddress.IPv4Network(self.value)
            except ValueError as exc:
                raise SchemaViolation(f"bad IPv4 network {self.value!r}: {exc}") from exc


@dataclass(frozen=True)
class MatchCriteria:
    remote: RemoteSpec
    protocol: Optional[str] = None  # tcp | udp | icmp
    remote_port: Optional[PortRange] = None
    device_port: Optional[PortRange] = None
    direction_initiated: Optional[str] = None  # from-device | to-device

    def __post_init__(self):
        if self.protocol is not None and self.protocol not in PROTO_NUMBERS:
            raise SchemaViolation(f"unsupported protocol {self.protocol!r}")
        if (self.remote_port or self.device_port) and self.protocol not in ("tcp", "udp"):
            raise SchemaViolation("port ranges need protocol tcp or udp")
        if self.direction_initiated is not None:
            if self.protocol != "tcp":
                raise SchemaViolation("direction-initiated needs protocol tcp")
            if self.direction_initiated not in ("from-device", "to-device"):
                raise SchemaViolation(
                    f"bad direction-initiated {self.direction_initiated!r}")


@dataclass(frozen=True)
class Ace:
    name: str
    matches: MatchCriteria
    action: str  # accept | drop

    def __post_init__(self):
        if self.action not in ("accept", "drop"):
            raise SchemaViolation(f"bad forwarding action {self.action!r}")


@dataclass
class MudFile:
    """Parsed MUD or UPS file (metadata plus access lists of ACEs)."""

    mud_version: int
    mud_url: MudUrl
    last_update: datetime
    cache_validity: int  # hours
    is_supported: bool
    systeminfo: str
    from_device_policy: list[str]
    to_device_policy: list[str]
    acls: dict[str, list[Ace]]
    warnings: list[str] = field(default_factory=list, compare=False)

    def validate(self) -> None:
        if self.mud_version != MUD_VERSION:
            raise UnsupportedVersion(f"mud-version {self.mud_version}")
        if not (CACHE_VALIDITY_MIN_HOURS <= self.cache_validity <= CACHE_VALIDITY_MAX_HOURS):
            raise SchemaViolation(
                f"cache-validity {self.cache_validity} outside "
                f"[{CACHE_VALIDITY_MIN_HOURS}, {CACHE_VALIDITY_MAX_HOURS}] hours")
        for name in self.from_device_policy + self.to_device_policy:
            if name not in self.acls:
                raise DanglingAclReference(f"policy references unknown acl {name!r}")
        both = set(self.from_device_policy) & set(self.to_device_policy)
        if both:
            raise SchemaViolation(
                f"acl(s) referenced by both directions: {sorted(both)}")
        for name, aces in self.acls.items():
            seen = set()
            for ace in aces:
                if ace.name in seen:
                    raise SchemaViolation(f"duplicate ace {ace.name!r} in acl {name!r}")
                seen.add(ace.name)

    def aces_for(self, direction: str) -> list[tuple[str, Ace]]:
        """All (acl_name, ace) pairs for 'egress' or 'ingress'."""
        names = self.from_device_policy if direction == "egress" else self.to_device_policy
        return [(n, ace) for n in names for ace in self.acls[n]]


# --------------------------------------------------------------------------
# Parsing


def _require(mapping: dict, key: str, context: str) -> Any:
    if key not in mapping:
        raise SchemaViolation(f"missing mandatory node {key!r} in {context}")
    return mapping[key]


def _parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str):
        raise SchemaViolation(f"last-update must be a string, got {type(text).__name__}")
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise SchemaViolation(f"bad timestamp {text!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    # Canonical form is whole-second Zulu time; sub-second precision is dropped.
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def _parse_policy_list(node: Any, context: str, warnings: list[str]) -> list[str]:
    if node is None:
        return []
    if not isinstance(node, dict):
        raise SchemaViolation(f"{context} must be a container")
    lists = node.get("access-lists", {})
    if not isinstance(lists, dict):
        raise SchemaViolation(f"{context}/access-lists must be a container")
    entries = lists.get("access-list", [])
    if not isinstance(entries, list):
        raise SchemaViolation(f"{context} access-list must be an array")
    names = []
    for entry in entries:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaViolation(f"{context} entry lacks a name")
        names.append(entry["name"])
        _warn_unknown(entry, {"name"}, f"{context} entry", warnings)
    return names


def _parse_port(node: Any, context: str) -> PortRange:
    if not isinstance(node, dict):
        raise SchemaViolation(f"{context} port node must be a container")
    if "port" in node:
        if node.get("operator", "eq") != "eq":
            raise SchemaViolation(
                f"{context}: only the eq port operator is supported")
        port = node["port"]
        if not isinstance(port, int):
            raise SchemaViolation(f"{context}: port must be an integer")
        return PortRange(port, port)
    if "lower-port" in node or "upper-port" in node:
        lo = _require(node, "lower-port", context)
        hi = node.get("upper-port", lo)
        if not isinstance(lo, int) or not isinstance(hi, int):
            raise SchemaViolation(f"{context}: ports must be integers")
        return PortRange(lo, hi)
    raise SchemaViolation(f"{context}: unrecognized port node")


def _warn_unknown(node: dict, known: set[str], context: str, warnings: list[str]) -> None:
    for key in node:
        if key not in known:
            warnings.append(f"unknown node {key!r} in {context} ignored")


_MUD_SELECTORS = {
    "local-networks": LOCAL_NETWORKS,
    "same-manufacturer": SAME_MANUFACTURER,
    "my-controller": MY_CONTROLLER,
    "controller": CONTROLLER,
}


def _parse_matches(node: Any, acl_direction: str, context: str,
                   warnings: list[str]) -> MatchCriteria:
    """Normalize a matches node into direction-neutral criteria.

    acl_direction is 'egress' (from-device policy: the remote endpoint sits
    on the destination side) or 'ingress' (to-device policy: remote is the
    source side).
    """
    if not isinstance(node, dict):
        raise SchemaViolation(f"{context}: matches must be a container")
    if "ipv6" in node:
        raise SchemaViolation(f"{context}: IPv6 matches are not supported")

    remote_side = "dst" if acl_direction == "egress" else "src"
    remotes: list[RemoteSpec] = []
    protocol = None
    remote_port = device_port = None
    direction_initiated = None

    ipv4 = node.get("ipv4")
    if ipv4 is not None:
        if not isinstance(ipv4, dict):
            raise SchemaViolation(f"{context}: ipv4 must be a container")
        if "protocol" in ipv4:
            number = ipv4["protocol"]
            if number not in PROTO_BY_NUMBER:
                raise SchemaViolation(f"{context}: unsupported protocol number {number}")
            protocol = PROTO_BY_NUMBER[number]
        for key, kind, side in (
            ("ietf-acldns:src-dnsname", DNS_NAME, "src"),
            ("ietf-acldns:dst-dnsname", DNS_NAME, "dst"),
            ("source-ipv4-network", IPV4_NETWORK, "src"),
            ("destination-ipv4-network", IPV4_NETWORK, "dst"),
        ):
            if key in ipv4:
                if side != remote_side:
                    raise SchemaViolation(
                        f"{context}: {key} is on the device side of a "
                        f"{acl_direction} acl")
                remotes.append(RemoteSpec(kind, ipv4[key]))
        _warn_unknown(ipv4, {"protocol", "ietf-acldns:src-dnsname",
                             "ietf-acldns:dst-dnsname", "source-ipv4-network",
                             "destination-ipv4-network"}, f"{context}/ipv4", warnings)

    mud = node.get("ietf-mud:mud")
    if mud is not None:
        if not isinstance(mud, dict):
            raise SchemaViolation(f"{context}: ietf-mud:mud must be a container")
        for key in ("manufacturer", "model"):
            if key in mud:
                raise UnsupportedSelector(
                    f"{context}: the {key} selector needs a model registry "
                    "and is not supported")
        for key, kind in _MUD_SELECTORS.items():
            if key in mud:
                value = mud[key] if kind == CONTROLLER else None
                remotes.append(RemoteSpec(kind, value))
        _warn_unknown(mud, set(_MUD_SELECTORS), f"{context}/ietf-mud:mud", warnings)

    for proto_key in ("tcp", "udp"):
        sub = node.get(proto_key)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            raise SchemaViolation(f"{context}: {proto_key} must be a container")
        if protocol is None:
            protocol = proto_key
        elif protocol != proto_key:
            raise SchemaViolation(
                f"{context}: {proto_key} matches clash with protocol {protocol}")
        src_port = dst_port = None
        if "source-port" in sub:
            src_port = _parse_port(sub["source-port"], f"{context}/{proto_key}")
        if "destination-port" in sub:
            dst_port = _parse_port(sub["destination-port"], f"{context}/{proto_key}")
        if remote_side == "dst":
            remote_port, device_port = dst_port, src_port
        else:
            remote_port, device_port = src_port, dst_port
        if "ietf-mud:direction-initiated" in sub:
            if proto_key != "tcp":
                raise SchemaViolation(
                    f"{context}: direction-initiated is tcp-only")
            direction_initiated = sub["ietf-mud:direction-initiated"]
        _warn_unknown(sub, {"source-port", "destination-port",
                            "ietf-mud:direction-initiated"},
                      f"{context}/{proto_key}", warnings)

    _warn_unknown(node, {"ipv4", "tcp", "udp", "ietf-mud:mud"}, context, warnings)

    if len(remotes) != 1:
        raise SchemaViolation(
            f"{context}: expected exactly one remote endpoint selector, "
            f"found {len(remotes)}")
    return MatchCriteria(remote=remotes[0], protocol=protocol,
                         remote_port=remote_port, device_port=device_port,
                         direction_initiated=direction_initiated)


def _parse_ace(node: Any, acl_direction: str, context: str,
               warnings: list[str]) -> Ace:
    if not isinstance(node, dict):
        raise SchemaViolation(f"{context}: ace must be a container")
    name = _require(node, "name", context)
    matches = _parse_matches(_require(node, "matches", context),
                             acl_direction, f"{context}/{name}", warnings)
    actions = _require(node, "actions", context)
    if not isinstance(actions, dict):
        raise SchemaViolation(f"{context}: actions must be a container")
    forwarding = _require(actions, "forwarding", f"{context}/{name}/actions")
    _warn_unknown(actions, {"forwarding"}, f"{context}/{name}/actions", warnings)
    _warn_unknown(node, {"name", "matches", "actions"}, f"{context}/{name}", warnings)
    return Ace(name=name, matches=matches, action=forwarding)


def parse_mud_file(data: bytes | str) -> MudFile:
    """Parse MUD/UPS file bytes into a validated MudFile.

    Unknown extension nodes are collected into MudFile.warnings rather than
    rejected; missing mandatory nodes and invariant violations raise.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"not UTF-8 text: {exc}") from exc
    try:
        root = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if not isinstance(root, dict):
        raise SchemaViolation("document root must be a JSON object")

    warnings: list[str] = []
    mud = _require(root, "ietf-mud:mud", "document root")
    if not isinstance(mud, dict):
        raise SchemaViolation("ietf-mud:mud must be a container")

    version = _require(mud, "mud-version", "ietf-mud:mud")
    if version != MUD_VERSION:
        raise UnsupportedVersion(f"mud-version {version!r} is not supported")
    try:
        url = MudUrl(_require(mud, "mud-url", "ietf-mud:mud"))
    except (InvalidUrl, TypeError, AttributeError) as exc:
        raise SchemaViolation(f"bad mud-url: {exc}") from exc
    last_update = _parse_timestamp(_require(mud, "last-update", "ietf-mud:mud"))
    cache_validity = _require(mud, "cache-validity", "ietf-mud:mud")
    if not isinstance(cache_validity, int):
        raise SchemaViolation("cache-validity must be an integer hour count")
    is_supported = _require(mud, "is-supported", "ietf-mud:mud")
    if not isinstance(is_supported, bool):
        raise SchemaViolation("is-supported must be a boolean")
    systeminfo = mud.get("systeminfo", "")

    from_policy = _parse_policy_list(mud.get("from-device-policy"),
                                     "from-device-policy", warnings)
    to_policy = _parse_policy_list(mud.get("to-device-policy"),
                                   "to-device-policy", warnings)
    _warn_unknown(mud, {"mud-version", "mud-url", "last-update", "cache-validity",
                        "is-supported", "systeminfo", "from-device-policy",
                        "to-device-policy"}, "ietf-mud:mud", warnings)

    # Determine each ACL's direction from the policy lists before parsing
    # aces, so src/dst positional ports can be normalized to remote/device.
    direction_by_acl = {name: "egress" for name in from_policy}
    for name in to_policy:
        if name in direction_by_acl:
            raise SchemaViolation(
                f"acl {name!r} referenced by both from- and to-device-policy")
        direction_by_acl[name] = "ingress"

    acls: dict[str, list[Ace]] = {}
    acls_node = root.get("ietf-access-control-list:acls", {})
    if not isinstance(acls_node, dict):
        raise SchemaViolation("ietf-access-control-list:acls must be a container")
    acl_entries = acls_node.get("acl", [])
    if not isinstance(acl_entries, list):
        raise SchemaViolation("acl must be an array")
    for entry in acl_entries:
        if not isinstance(entry, dict):
            raise SchemaViolation("acl entry must be a container")
        name = _require(entry, "name", "acl entry")
        if name in acls:
            raise SchemaViolation(f"duplicate acl name {name!r}")
        acl_type = entry.get("type")
        if acl_type is not None and acl_type != "ipv4-acl-type":
            raise SchemaViolation(f"acl {name!r}: only ipv4-acl-type is supported")
        direction = direction_by_acl.get(name)
        if direction is None:
            warnings.append(f"acl {name!r} is not referenced by any policy")
            direction = "egress"  # positional normalization default; emits no rules
        aces_node = entry.get("aces", {})
        if not isinstance(aces_node, dict):
            raise SchemaViolation(f"acl {name!r}: aces must be a container")
        ace_list = aces_node.get("ace", [])
        if not isinstance(ace_list, list):
            raise SchemaViolation(f"acl {name!r}: ace must be an array")
        acls[name] = [_parse_ace(a, direction, f"acl {name!r}", warnings)
                      for a in ace_list]
        _warn_unknown(entry, {"name", "type", "aces"}, f"acl {name!r}", warnings)
        _warn_unknown(aces_node, {"ace"}, f"acl {name!r}/aces", warnings)
    _warn_unknown(root, {"ietf-mud:mud", "ietf-access-control-list:acls"},
                  "document root", warnings)

    parsed = MudFile(
        mud_version=version,
        mud_url=url,
        last_update=last_update,
        cache_validity=cache_validity,
        is_supported=is_supported,
        systeminfo=systeminfo,
        from_device_policy=from_policy,
        to_device_policy=to_policy,
        acls=acls,
        warnings=warnings,
    )
    parsed.validate()
    return parsed


# --------------------------------------------------------------------------
# Canonical serialization


def _port_to_json(port: PortRange) -> dict:
    return {"lower-port": port.lo, "upper-port": port.hi}


def _matches_to_json(m: MatchCriteria, acl_direction: str) -> dict:
    remote_side = "dst" if acl_direction == "egress" else "src"
    node: dict[str, Any] = {}
    ipv4: dict[str, Any] = {}
    if m.protocol is not None:
        ipv4["protocol"] = PROTO_NUMBERS[m.protocol]
    r = m.remote
    if r.kind == DNS_NAME:
        key = "ietf-acldns:dst-dnsname" if remote_side == "dst" else "ietf-acldns:src-dnsname"
        ipv4[key] = r.value
    elif r.kind == IPV4_NETWORK:
        key = "destination-ipv4-network" if remote_side == "dst" else "source-ipv4-network"
        ipv4[key] = r.value
    else:
        mud: dict[str, Any] = {}
        wire_key = {LOCAL_NETWORKS: "local-networks",
                    SAME_MANUFACTURER: "same-manufacturer",
                    MY_CONTROLLER: "my-controller",
                    CONTROLLER: "controller"}[r.kind]
        mud[wire_key] = r.value if r.kind == CONTROLLER else [None]
        node["ietf-mud:mud"] = mud
    if ipv4:
        node["ipv4"] = ipv4
    if m.protocol in ("tcp", "udp"):
        sub: dict[str, Any] = {}
        src_port = m.device_port if remote_side == "dst" else m.remote_port
        dst_port = m.remote_port if remote_side == "dst" else m.device_port
        if src_port is not None:
            sub["source-port"] = _port_to_json(src_port)
        if dst_port is not None:
            sub["destination-port"] = _port_to_json(dst_port)
        if m.direction_initiated is not None:
            sub["ietf-mud:direction-initiated"] = m.direction_initiated
        if sub:
            node[m.protocol] = sub
    return node


def _policy_to_json(names: list[str]) -> dict:
    return {"access-lists": {"access-list": [{"name": n} for n in names]}}


def to_json_dict(file: MudFile) -> dict:
    """Rebuild the wire-layout dict from the model (extensions dropped)."""
    direction_by_acl = {name: "egress" for name in file.from_device_policy}
    direction_by_acl.update({name: "ingress" for name in file.to_device_policy})
    acl_entries = []
    for name in sorted(file.acls):
        direction = direction_by_acl.get(name, "egress")
        aces = [{
            "name": ace.name,
            "matches": _matches_to_json(ace.matches, direction),
            "actions": {"forwarding": ace.action},
        } for ace in file.acls[name]]
        acl_entries.append({"name": name, "type": "ipv4-acl-type",
                            "aces": {"ace": aces}})
    return {
        "ietf-mud:mud": {
            "mud-version": file.mud_version,
            "mud-url": file.mud_url.value,
            "last-update": file.last_update.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "cache-validity": file.cache_validity,
            "is-supported": file.is_supported,
            "systeminfo": file.systeminfo,
            "from-device-policy": _policy_to_json(file.from_device_policy),
            "to-device-policy": _policy_to_json(file.to_device_policy),
        },
        "ietf-access-control-list:acls": {"acl": acl_entries},
    }


def canonicalize(file: MudFile) -> bytes:
    """Deterministic byte form: sorted keys, no insignificant whitespace,
    UTF-8, whole-second Zulu timestamps. Stable under reparsing."""
    file.validate()
    return json.dumps(to_json_dict(file), sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False).encode("utf-8")
