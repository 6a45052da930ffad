"""Merging of manufacturer and administrator rule sets.

Two modes: union (the device may do anything either file allows) and
admin_priority (a published administrator file replaces the manufacturer
profile outright). Duplicates collapse on the canonical rule key; pairs that
agree on everything but the action are reported as clashes, and in union
mode the drop side wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from .compiler import AccessRule
from .errors import MixedDevice

MODE_UNION = "union"
MODE_ADMIN_PRIORITY = "admin_priority"
MODES = (MODE_UNION, MODE_ADMIN_PRIORITY)

KIND_DUPLICATE = "duplicate"
KIND_ADMIN_ONLY = "admin_only"
KIND_MANUFACTURER_ONLY = "manufacturer_only"
KIND_ACTION_CLASH = "action_clash"


def _base_key(rule: AccessRule) -> tuple:
    """Canonical key with the action component masked out."""
    return rule.canonical_key[:-1]


@dataclass(frozen=True)
class ConflictEntry:
    kind: str
    manufacturer_rule: Optional[AccessRule] = None
    admin_rule: Optional[AccessRule] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "manufacturer_rule": self.manufacturer_rule.to_dict() if self.manufacturer_rule else None,
            "admin_rule": self.admin_rule.to_dict() if self.admin_rule else None,
        }


@dataclass
class ConflictReport:
    entries: list[ConflictEntry] = field(default_factory=list)

    def count(self, kind: str) -> int:
        return sum(1 for e in self.entries if e.kind == kind)

    @property
    def clashes(self) -> list[ConflictEntry]:
        return [e for e in self.entries if e.kind == KIND_ACTION_CLASH]

    def to_dict(self) -> dict:
        return {"entries": [e.to_dict() for e in self.entries]}


@dataclass
class PolicySet:
    """Merged, deduplicated rule set for one device."""

    device_mac: str
    mode: str
    rules: list[AccessRule]
    conflicts: ConflictReport
    generated_at: datetime

    def __post_init__(self):
        keys = [r.canonical_key for r in self.rules]
        if len(keys) != len(set(keys)):
            raise ValueError("policy set contains duplicate canonical keys")
        for rule in self.rules:
            if rule.device_mac != self.device_mac:
                raise MixedDevice(
                    f"rule for {rule.device_mac} in policy set for {self.device_mac}")

    def to_dict(self) -> dict:
        return {
            "device_mac": self.device_mac,
            "mode": self.mode,
            "rules": [r.to_dict() for r in self.rules],
            "conflicts": self.conflicts.to_dict(),
            "generated_at": self.generated_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
        }


def _common_mac(rules: list[AccessRule], device_mac: Optional[str]) -> str:
    macs = {r.device_mac for r in rules}
    if device_mac is not None:
        macs.add(device_mac)
    if len(macs) > 1:
        raise MixedDevice(f"rules span devices {sorted(macs)}")
    if not macs:
        raise ValueError("cannot infer the device: no rules and no device_mac")
    return macs.pop()


def dedup(rules: list[AccessRule]) -> list[AccessRule]:
    """One rule per canonical key, first occurrence wins, sorted output."""
    seen: dict[tuple, AccessRule] = {}
    for rule in rules:
        seen.setdefault(rule.canonical_key, rule)
    return sorted(seen.values(), key=lambda r: r.canonical_key)


def detect_conflicts(mfr: list[AccessRule], adm: list[AccessRule]) -> ConflictReport:
    """Classify rule pairs across the two sources.

    Pairs sharing the full canonical key are duplicates; pairs sharing the
    key modulo action are clashes; everything else is one-sided.
    """
    mfr_unique = dedup(mfr)
    adm_unique = dedup(adm)
    adm_by_base: dict[tuple, list[AccessRule]] = {}
    for rule in adm_unique:
        adm_by_base.setdefault(_base_key(rule), []).append(rule)

    report = ConflictReport()
    paired_admin: set[tuple] = set()
    for m_rule in mfr_unique:
        partners = adm_by_base.get(_base_key(m_rule), [])
        if not partners:
            report.entries.append(ConflictEntry(KIND_MANUFACTURER_ONLY,
                                                manufacturer_rule=m_rule))
            continue
        for a_rule in partners:
            paired_admin.add(a_rule.canonical_key)
            kind = KIND_DUPLICATE if a_rule.action == m_rule.action else KIND_ACTION_CLASH
            report.entries.append(ConflictEntry(kind, manufacturer_rule=m_rule,
                                                admin_rule=a_rule))
    for a_rule in adm_unique:
        if a_rule.canonical_key not in paired_admin:
            report.entries.append(ConflictEntry(KIND_ADMIN_ONLY, admin_rule=a_rule))
    return report


def _drop_wins(rules: list[AccessRule]) -> list[AccessRule]:
    """Remove accept rules shadowed by a drop rule with the same base key."""
    dropped_bases = {_base_key(r) for r in rules if r.action == "drop"}
    return [r for r in rules
            if r.action == "drop" or _base_key(r) not in dropped_bases]


def merge(mfr: list[AccessRule], adm: list[AccessRule], mode: str,
          device_mac: Optional[str] = None,
          now: Optional[datetime] = None) -> PolicySet:
    """Merge manufacturer and administrator rules under the given mode.

    union: the device gets everything either source allows. admin_priority:
    a non-empty administrator set replaces the manufacturer profile.
    """
    if mode not in MODES:
        raise ValueError(f"unknown merge mode {mode!r}")
    mac = _common_mac(list(mfr) + list(adm), device_mac)
    conflicts = detect_conflicts(mfr, adm)
    if mode == MODE_ADMIN_PRIORITY and adm:
        rules = dedup(adm)
    elif mode == MODE_ADMIN_PRIORITY:
        rules = dedup(mfr)
    else:
        rules = _drop_wins(dedup(list(mfr) + list(adm)))
    return PolicySet(
        device_mac=mac,
        mode=mode,
        rules=rules,
        conflicts=conflicts,
        generated_at=now or datetime.now(timezone.utc),
    )
