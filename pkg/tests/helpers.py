"""Builders for wire-format MUD documents used across the tests."""

from __future__ import annotations

import json
from typing import Optional

PROTO_NUM = {"tcp": 6, "udp": 17, "icmp": 1}


def ace_spec(name: str, remote, proto: Optional[str] = None,
             remote_port=None, device_port=None,
             initiated: Optional[str] = None, action: str = "accept") -> dict:
    """remote is a tuple: ('dns', fqdn) | ('net', cidr) | ('local',) |
    ('samemfr',) | ('myctl',) | ('controller', uri)."""
    return {"name": name, "remote": remote, "proto": proto,
            "remote_port": remote_port, "device_port": device_port,
            "initiated": initiated, "action": action}


def _port_node(value) -> dict:
    if isinstance(value, int):
        return {"operator": "eq", "port": value}
    lo, hi = value
    return {"lower-port": lo, "upper-port": hi}


def wire_ace(spec: dict, direction: str) -> dict:
    """Render an ace_spec as RFC 8520 wire JSON for a from/to-device acl."""
    remote_side = "dst" if direction == "egress" else "src"
    matches: dict = {}
    ipv4: dict = {}
    if spec["proto"]:
        ipv4["protocol"] = PROTO_NUM[spec["proto"]]
    kind = spec["remote"][0]
    if kind == "dns":
        ipv4[f"ietf-acldns:{remote_side}-dnsname"] = spec["remote"][1]
    elif kind == "net":
        key = "destination-ipv4-network" if remote_side == "dst" else "source-ipv4-network"
        ipv4[key] = spec["remote"][1]
    else:
        mud = {}
        if kind == "local":
            mud["local-networks"] = [None]
        elif kind == "samemfr":
            mud["same-manufacturer"] = [None]
        elif kind == "myctl":
            mud["my-controller"] = [None]
        elif kind == "controller":
            mud["controller"] = spec["remote"][1]
        else:
            raise ValueError(kind)
        matches["ietf-mud:mud"] = mud
    if ipv4:
        matches["ipv4"] = ipv4
    if spec["proto"] in ("tcp", "udp"):
        sub = {}
        r_port, d_port = spec["remote_port"], spec["device_port"]
        src_port = d_port if remote_side == "dst" else r_port
        dst_port = r_port if remote_side == "dst" else d_port
        if src_port is not None:
            sub["source-port"] = _port_node(src_port)
        if dst_port is not None:
            sub["destination-port"] = _port_node(dst_port)
        if spec["proto"] == "tcp" and spec["initiated"]:
            sub["ietf-mud:direction-initiated"] = spec["initiated"]
        if sub:
            matches[spec["proto"]] = sub
    return {"name": spec["name"], "matches": matches,
            "actions": {"forwarding": spec["action"]}}


def mud_doc(url: str = "https://mfs.example/bulb",
            from_aces: Optional[list[dict]] = None,
            to_aces: Optional[list[dict]] = None,
            cache_validity: int = 48,
            last_update: str = "2020-01-01T00:00:00Z",
            systeminfo: str = "test device",
            extra_mud_nodes: Optional[dict] = None) -> dict:
    from_aces = from_aces or []
    to_aces = to_aces or []
    acl_entries = []
    from_names, to_names = [], []
    if from_aces:
        from_names = ["fr-acl"]
        acl_entries.append({
            "name": "fr-acl", "type": "ipv4-acl-type",
            "aces": {"ace": [wire_ace(s, "egress") for s in from_aces]},
        })
    if to_aces:
        to_names = ["to-acl"]
        acl_entries.append({
            "name": "to-acl", "type": "ipv4-acl-type",
            "aces": {"ace": [wire_ace(s, "ingress") for s in to_aces]},
        })
    mud = {
        "mud-version": 1,
        "mud-url": url,
        "last-update": last_update,
        "cache-validity": cache_validity,
        "is-supported": True,
        "systeminfo": systeminfo,
        "from-device-policy": {"access-lists": {"access-list": [
            {"name": n} for n in from_names]}},
        "to-device-policy": {"access-lists": {"access-list": [
            {"name": n} for n in to_names]}},
    }
    if extra_mud_nodes:
        mud.update(extra_mud_nodes)
    return {
        "ietf-mud:mud": mud,
        "ietf-access-control-list:acls": {"acl": acl_entries},
    }


def mud_bytes(**kwargs) -> bytes:
    return json.dumps(mud_doc(**kwargs)).encode("utf-8")
