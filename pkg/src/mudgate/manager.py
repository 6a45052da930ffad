"""The MUD manager: orchestrates device joins end to end.

For every join event: fetch the MUD file and its detached signature, verify
against the manufacturer anchors, compile to rules, install; then ask the
UPS for an administrator overlay for the device's MAC, and when one exists
verify (ups role), compile and atomically reinstall the merged policy. An
absent UPS file is a normal outcome. Verification failures quarantine the
device behind a DHCP+DNS-only containment policy.

Per-device timings are recorded in the three pipeline phases (fetch,
verify+store, process+install) plus the UPS interaction.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Optional

import requests

from . import compiler, merge, model, signature
from .compiler import DeviceContext, DeviceRegistry
from .dhcp import DeviceJoin
from .errors import (
    AnchorExpired,
    FetchFailure,
    FetchTimeout,
    HttpError,
    MudgateError,
    NotFound,
    SignatureError,
    SignatureInvalid,
)
from .firewall import SimulatedFirewall, emit_rules_text
from .merge import PolicySet
from .model import MudFile, MudUrl, mac_to_filename

log = logging.getLogger(__name__)

STATE_PENDING = "pending"
STATE_ACTIVE = "active"
STATE_QUARANTINED = "quarantined"
STATE_LEGACY = "legacy"

QUARANTINE_DHCP_PORTS = model.PortRange(67, 68)
QUARANTINE_DNS_PORT = model.PortRange(53, 53)


@dataclass(frozen=True)
class LatencyRecord:
    """Per-device durations of the pipeline phases, in seconds."""

    t_fetch: float
    t_verify_store: float
    t_process_install: float
    t_ups_total: float

    @property
    def total(self) -> float:
        return self.t_fetch + self.t_verify_store + self.t_process_install + self.t_ups_total

    @classmethod
    def zero(cls) -> "LatencyRecord":
        return cls(0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "t_fetch_ms": self.t_fetch * 1000.0,
            "t_verify_ms": self.t_verify_store * 1000.0,
            "t_install_ms": self.t_process_install * 1000.0,
            "t_ups_ms": self.t_ups_total * 1000.0,
            "total_ms": self.total * 1000.0,
        }


@dataclass
class DeviceRecord:
    mac: str
    ipv4: Optional[str]
    mud_url: Optional[MudUrl]
    state: str = STATE_PENDING
    stale: bool = False
    mud_file: Optional[MudFile] = None
    ups_file: Optional[MudFile] = None
    policy: Optional[PolicySet] = None
    cache_expires_at: Optional[datetime] = None
    last_latency: LatencyRecord = field(default_factory=LatencyRecord.zero)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        rules = self.policy.rules if self.policy else []
        return {
            "mac": self.mac,
            "ip": self.ipv4,
            "mud_url": self.mud_url.value if self.mud_url else None,
            "state": self.state,
            "stale": self.stale,
            "rule_count": len(rules),
            "provenance_counts": {
                "manufacturer": sum(1 for r in rules if r.provenance == "manufacturer"),
                "admin": sum(1 for r in rules if r.provenance == "admin"),
            },
            "conflict_count": len(self.policy.conflicts.entries) if self.policy else 0,
            "merge_mode": self.policy.mode if self.policy else None,
            "cache_expires_at": (self.cache_expires_at.strftime("%Y-%m-%dT%H:%M:%SZ")
                                 if self.cache_expires_at else None),
            "latency": self.last_latency.to_dict(),
            "warnings": list(self.warnings),
        }


# --------------------------------------------------------------------------
# Configuration: a flat key = value file, '#' comments. controller bindings
# use prefixed keys: controller.<class-uri> = ip[,ip...]


@dataclass
class ManagerConfig:
    ups_base_url: str
    merge_mode: str = merge.MODE_UNION
    anchors_dir: str = "anchors"
    fetch_timeout_ms: int = 3000
    local_networks: list[str] = field(default_factory=lambda: ["192.168.1.0/24"])
    default_legacy: str = "allow"
    listen_status_addr: str = "127.0.0.1:0"
    gateway_ip: str = "192.168.1.1"
    cache_dir: Optional[str] = None
    tls_ca_file: Optional[str] = None
    insecure_tls: bool = False
    my_controller: Optional[str] = None
    controllers: dict[str, list[str]] = field(default_factory=dict)
    refresh_interval_s: float = 60.0
    merge_mode_ttl_s: float = 60.0
    parallel: int = 1


def load_config(path: str | Path) -> ManagerConfig:
    values: dict[str, str] = {}
    controllers: dict[str, list[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip().strip('"')
        if key.startswith("controller."):
            controllers[key[len("controller."):]] = [
                v.strip() for v in value.split(",") if v.strip()]
        else:
            values[key] = value

    def split_list(text: str) -> list[str]:
        return [v.strip() for v in text.split(",") if v.strip()]

    known = {
        "ups_base_url": str, "merge_mode": str, "anchors_dir": str,
        "fetch_timeout_ms": int, "local_networks": split_list,
        "default_legacy": str, "listen_status_addr": str, "gateway_ip": str,
        "cache_dir": str, "tls_ca_file": str, "my_controller": str,
        "refresh_interval_s": float, "merge_mode_ttl_s": float,
        "insecure_tls": lambda v: v.lower() in ("1", "true", "yes"),
        "parallel": int,
    }
    kwargs = {}
    for key, value in values.items():
        conv = known.get(key)
        if conv is None:
            log.warning("unknown config key %r ignored", key)
            continue
        kwargs[key] = conv(value)
    if "ups_base_url" not in kwargs:
        raise ValueError(f"{path}: ups_base_url is required")
    config = ManagerConfig(controllers=controllers, **kwargs)
    if config.merge_mode not in merge.MODES:
        raise ValueError(f"{path}: bad merge_mode {config.merge_mode!r}")
    if config.default_legacy not in ("allow", "deny"):
        raise ValueError(f"{path}: bad default_legacy {config.default_legacy!r}")
    return config


# --------------------------------------------------------------------------
# HTTP fetching with timeout and bounded retries.


class Fetcher:
    """GETs MUD/UPS payloads and their detached signature siblings."""

    RETRIES = 2
    BACKOFF_S = 0.05

    def __init__(self, timeout_ms: int, tls_ca_file: Optional[str] = None,
                 insecure_tls: bool = False):
        self.timeout = timeout_ms / 1000.0
        self.session = requests.Session()
        if insecure_tls:
            self.verify: bool | str = False
            import urllib3
            urllib3.disable_warnings(urllib3.exceptions.InsecureRequestWarning)
        else:
            self.verify = tls_ca_file if tls_ca_file else True

    def get(self, url: str) -> bytes:
        last: Exception = FetchTimeout(f"no attempt made for {url}")
        for attempt in range(1 + self.RETRIES):
            if attempt:
                time.sleep(self.BACKOFF_S * attempt)
            try:
                resp = self.session.get(url, timeout=self.timeout, verify=self.verify)
            except requests.Timeout as exc:
                last = FetchTimeout(f"timeout fetching {url}")
                continue
            except requests.RequestException as exc:
                last = FetchTimeout(f"cannot reach {url}: {exc}")
                continue
            if resp.status_code == 404:
                raise NotFound(url)
            if resp.status_code != 200:
                raise HttpError(resp.status_code, url)
            return resp.content
        raise last

    def fetch_mud(self, url: MudUrl) -> tuple[bytes, bytes]:
        """Payload plus sibling signature resource <url>.p7s."""
        payload = self.get(url.value)
        sig = self.get(url.value + ".p7s")
        return payload, sig

    def fetch_ups(self, base_url: str, mac: str) -> tuple[bytes, bytes]:
        """UPS overlay for the device: /ups/<macfile>.json and .sig."""
        filename = mac_to_filename(mac)
        payload = self.get(f"{base_url}/ups/{filename}")
        sig = self.get(f"{base_url}/ups/{filename[:-len('.json')]}.sig")
        return payload, sig

    def fetch_merge_mode(self, base_url: str) -> Optional[str]:
        try:
            data = json.loads(self.get(f"{base_url}/ups/merge-mode"))
            mode = data.get("merge_mode")
            return mode if mode in merge.MODES else None
        except (FetchFailure, json.JSONDecodeError):
            return None


def system_resolver(fqdn: str) -> set[str]:
    infos = socket.getaddrinfo(fqdn, None, family=socket.AF_INET)
    return {info[4][0] for info in infos}


# --------------------------------------------------------------------------


class MudManager:
    def __init__(self, config: ManagerConfig, firewall: SimulatedFirewall,
                 anchors: signature.AnchorStore,
                 fetcher: Optional[Fetcher] = None,
                 resolver: Optional[compiler.Resolver] = None,
                 clock: Optional[Callable[[], datetime]] = None):
        self.config = config
        self.firewall = firewall
        self.anchors = anchors
        self.fetcher = fetcher or Fetcher(config.fetch_timeout_ms,
                                          config.tls_ca_file, config.insecure_tls)
        self.resolver = resolver or system_resolver
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.registry = DeviceRegistry()
        self._records: dict[str, DeviceRecord] = {}
        self._records_lock = threading.Lock()
        # Single-flight by default: one pipeline at a time, strict arrival
        # order. config.parallel > 1 relaxes this for experiments.
        self._event_lock = threading.BoundedSemaphore(max(1, config.parallel))
        self._merge_mode_cached = config.merge_mode
        self._merge_mode_fetched_at = 0.0
        if config.cache_dir:
            Path(config.cache_dir).mkdir(parents=True, exist_ok=True)

    # --- merge mode: config default, overridable from the UPS settings ---

    def current_merge_mode(self, force_refresh: bool = False) -> str:
        age = time.monotonic() - self._merge_mode_fetched_at
        if force_refresh or age >= self.config.merge_mode_ttl_s:
            mode = self.fetcher.fetch_merge_mode(self.config.ups_base_url)
            if mode is not None:
                self._merge_mode_cached = mode
            self._merge_mode_fetched_at = time.monotonic()
        return self._merge_mode_cached

    # --- device records ---

    def _put_record(self, record: DeviceRecord) -> None:
        with self._records_lock:
            self._records[record.mac] = record

    def _get_record(self, mac: str) -> Optional[DeviceRecord]:
        with self._records_lock:
            return self._records.get(mac)

    def status(self) -> list[dict]:
        with self._records_lock:
            return [r.to_dict() for _, r in sorted(self._records.items())]

    def device_status(self, mac: str) -> Optional[dict]:
        record = self._get_record(model.normalize_mac(mac))
        return record.to_dict() if record else None

    def device_rules_text(self, mac: str) -> Optional[list[str]]:
        record = self._get_record(model.normalize_mac(mac))
        if record is None or record.policy is None or record.ipv4 is None:
            return None
        return emit_rules_text(record.policy, device_ip=record.ipv4)

    def device_conflicts(self, mac: str) -> Optional[dict]:
        record = self._get_record(model.normalize_mac(mac))
        if record is None or record.policy is None:
            return None
        return record.policy.conflicts.to_dict()

    def latency_records(self) -> list[tuple[str, LatencyRecord]]:
        with self._records_lock:
            return [(mac, r.last_latency) for mac, r in sorted(self._records.items())]

    # --- join pipeline ---

    def handle_device_join(self, ev: DeviceJoin) -> DeviceRecord:
        """Process one join event; events are handled strictly in order."""
        with self._event_lock:
            return self._handle_join(ev)

    def _handle_join(self, ev: DeviceJoin) -> DeviceRecord:
        record = DeviceRecord(mac=ev.mac, ipv4=ev.ipv4, mud_url=ev.mud_url)
        self._put_record(record)

        if ev.mud_url is None:
            record.state = STATE_LEGACY
            log.info("%s: legacy device (no MUD URL), default class %s",
                     ev.mac, self.config.default_legacy)
            return record
        if ev.ipv4 is None:
            record.warnings.append("join event carries no IPv4 address; waiting")
            return record

        mode = self.current_merge_mode()
        phases = _PhaseTimer()

        with phases.measure("fetch"):
            try:
                payload, sig, from_cache = self._load_mud(ev.mud_url)
            except FetchFailure as exc:
                self._quarantine(record, f"fetch failed: {exc}", phases)
                return record

        with phases.measure("verify"):
            try:
                doc = signature.verify(payload, sig, self.anchors.snapshot(),
                                       self.clock(), signature.ROLE_MANUFACTURER)
                mud_file = model.parse_mud_file(payload)
                if not from_cache:
                    self._store_cache(ev.mud_url, payload, sig)
            except (SignatureError, MudgateError) as exc:
                self._quarantine(record, f"MUD file rejected: {exc}", phases)
                return record

        with phases.measure("install"):
            self.registry.add(ev.mac, ev.ipv4, ev.mud_url)
            ctx = self._context_for(ev.mac, ev.ipv4, ev.mud_url)
            result = compiler.compile(mud_file, ctx, self.resolver)
            self._note_problems(record, result)
            mfr_rules = result.rules
            policy = merge.merge(mfr_rules, [], mode, device_mac=ev.mac)
            self.firewall.set_address(ev.mac, ev.ipv4)
            self.firewall.install(ev.mac, policy)

        with phases.measure("ups"):
            ups_file, ups_rules = self._query_ups(record, ctx)
            if ups_rules is not None:
                policy = merge.merge(mfr_rules, ups_rules, mode, device_mac=ev.mac)
                self.firewall.install(ev.mac, policy)

        record.mud_file = mud_file
        record.ups_file = ups_file
        record.policy = policy
        record.state = STATE_ACTIVE
        record.stale = False
        record.warnings.extend(mud_file.warnings)
        record.cache_expires_at = self._cache_bound(mud_file, doc.signer)
        record.last_latency = phases.record()
        self._recompile_peers(ev.mud_url.authority, exclude_mac=ev.mac)
        log.info("%s: active with %d rules (%s mode)", ev.mac, len(policy.rules), mode)
        return record

    @staticmethod
    def _warn(record: DeviceRecord, message: str) -> None:
        """Record a warning, skipping consecutive repeats (sweeps re-warn)."""
        if not record.warnings or record.warnings[-1] != message:
            record.warnings.append(message)

    def _note_problems(self, record: DeviceRecord, result: compiler.CompileResult) -> None:
        for problem in result.problems:
            self._warn(record,
                       f"{problem.kind} in {problem.acl}/{problem.ace}: {problem.detail}")

    def _query_ups(self, record: DeviceRecord, ctx: DeviceContext):
        """Returns (ups_file, rules) with rules None when no usable overlay."""
        try:
            payload, sig = self.fetcher.fetch_ups(self.config.ups_base_url, record.mac)
        except NotFound:
            return None, None  # no administrator file: the normal outcome
        except FetchFailure as exc:
            self._warn(record, f"UPS fetch failed, manufacturer policy kept: {exc}")
            return None, None
        for attempt in (1, 2):
            try:
                signature.verify(payload, sig, self.anchors.snapshot(),
                                 self.clock(), signature.ROLE_UPS)
                break
            except SignatureInvalid as exc:
                # A publish may have raced our two GETs; refetch once.
                if attempt == 1:
                    try:
                        payload, sig = self.fetcher.fetch_ups(
                            self.config.ups_base_url, record.mac)
                        continue
                    except FetchFailure:
                        pass
                self._warn(record, f"UPS file ignored: {exc}")
                return None, None
            except SignatureError as exc:
                self._warn(record, f"UPS file ignored: {exc}")
                return None, None
        try:
            ups_file = model.parse_mud_file(payload)
            result = compiler.compile(ups_file, ctx, self.resolver,
                                      provenance=compiler.PROVENANCE_ADMIN)
        except MudgateError as exc:
            self._warn(record, f"UPS file ignored: {exc}")
            return None, None
        self._note_problems(record, result)
        return ups_file, result.rules

    def _context_for(self, mac: str, ipv4: str, url: MudUrl) -> DeviceContext:
        return DeviceContext(
            mac=mac, ipv4=ipv4, mud_url=url,
            local_networks=list(self.config.local_networks),
            controllers=dict(self.config.controllers),
            my_controller=self.config.my_controller,
            registry=self.registry,
        )

    def _cache_bound(self, mud_file: MudFile, signer: str) -> datetime:
        bound = self.clock() + timedelta(hours=mud_file.cache_validity)
        for anchor in self.anchors.snapshot():
            if anchor.name == signer:
                bound = min(bound, anchor.not_after)
        return bound

    def _quarantine(self, record: DeviceRecord, reason: str,
                    phases: Optional["_PhaseTimer"] = None) -> None:
        record.warnings.append(reason)
        record.state = STATE_QUARANTINED
        self.registry.remove(record.mac)
        if record.ipv4 is not None:
            policy = self._quarantine_policy(record.mac, record.ipv4)
            self.firewall.set_address(record.mac, record.ipv4)
            self.firewall.install(record.mac, policy)
            record.policy = policy
        if phases is not None:
            record.last_latency = phases.record()
        if record.mud_url is not None:
            self._recompile_peers(record.mud_url.authority, exclude_mac=record.mac)
        log.warning("%s: quarantined (%s)", record.mac, reason)

    def _quarantine_policy(self, mac: str, ipv4: str) -> PolicySet:
        """Deny everything except DHCP (udp/67-68) and DNS (53) to the gateway."""
        gateway = ipaddress.IPv4Network(f"{self.config.gateway_ip}/32")

        def to_gateway(proto, ports, ace, initiated=None):
            return compiler.AccessRule(
                device_mac=model.normalize_mac(mac), device_ip=ipv4,
                direction=compiler.EGRESS, remote=gateway, protocol=proto,
                remote_port=ports, initiated_by=initiated, action="accept",
                provenance="manufacturer", source_ace=ace)

        rules = [
            to_gateway("udp", QUARANTINE_DHCP_PORTS, "quarantine-dhcp"),
            to_gateway("udp", QUARANTINE_DNS_PORT, "quarantine-dns-udp"),
            to_gateway("tcp", QUARANTINE_DNS_PORT, "quarantine-dns-tcp", "device"),
        ]
        return merge.merge(rules, [], merge.MODE_UNION, device_mac=mac)

    def _recompile_peers(self, authority: str, exclude_mac: str) -> None:
        """Re-expand same-manufacturer selectors after the registry changed."""
        with self._records_lock:
            peers = [r for r in self._records.values()
                     if r.mac != exclude_mac and r.state == STATE_ACTIVE
                     and r.mud_url is not None
                     and r.mud_url.authority == authority
                     and any(_uses_same_manufacturer(f)
                             for f in (r.mud_file, r.ups_file) if f is not None)]
        for record in peers:
            try:
                self._reinstall_from_files(record)
            except Exception as exc:
                record.warnings.append(f"peer recompilation failed: {exc}")

    def _reinstall_from_files(self, record: DeviceRecord) -> None:
        ctx = self._context_for(record.mac, record.ipv4, record.mud_url)
        mfr = compiler.compile(record.mud_file, ctx, self.resolver)
        rules_adm = []
        if record.ups_file is not None:
            rules_adm = compiler.compile(record.ups_file, ctx, self.resolver,
                                         provenance=compiler.PROVENANCE_ADMIN).rules
        policy = merge.merge(mfr.rules, rules_adm, self.current_merge_mode(),
                             device_mac=record.mac)
        self.firewall.install(record.mac, policy)
        record.policy = policy

    # --- disk cache, keyed by URL digest ---

    def _cache_paths(self, url: MudUrl):
        digest = hashlib.sha256(url.value.encode("utf-8")).hexdigest()
        base = Path(self.config.cache_dir) / digest
        return base.with_suffix(".json"), base.with_suffix(".p7s"), base.with_suffix(".meta")

    def _load_mud(self, url: MudUrl) -> tuple[bytes, bytes, bool]:
        """Cached payload within validity, else a fresh network fetch."""
        if self.config.cache_dir:
            payload_path, sig_path, meta_path = self._cache_paths(url)
            try:
                meta = json.loads(meta_path.read_text(encoding="utf-8"))
                expires = datetime.fromisoformat(meta["expires_at"])
                if self.clock() < expires:
                    return payload_path.read_bytes(), sig_path.read_bytes(), True
            except (OSError, KeyError, ValueError):
                pass
        payload, sig = self.fetcher.fetch_mud(url)
        return payload, sig, False

    def _store_cache(self, url: MudUrl, payload: bytes, sig: bytes) -> None:
        if not self.config.cache_dir:
            return
        try:
            mud_file = model.parse_mud_file(payload)
            expires = self.clock() + timedelta(hours=mud_file.cache_validity)
            payload_path, sig_path, meta_path = self._cache_paths(url)
            payload_path.write_bytes(payload)
            sig_path.write_bytes(sig)
            meta_path.write_text(json.dumps({
                "url": url.value,
                "fetched_at": self.clock().isoformat(),
                "expires_at": expires.isoformat(),
            }), encoding="utf-8")
        except (OSError, MudgateError) as exc:
            log.warning("cache store failed for %s: %s", url, exc)

    # --- expiry refresh sweep ---

    def refresh_expired(self, now: Optional[datetime] = None) -> list[DeviceRecord]:
        """Re-fetch and reinstall every active device whose cache lapsed.

        The existing policy stays installed and enforced throughout; failures
        never abort the sweep.
        """
        now = now or self.clock()
        with self._event_lock:
            with self._records_lock:
                due = [r for r in self._records.values()
                       if r.state == STATE_ACTIVE
                       and r.cache_expires_at is not None
                       and r.cache_expires_at <= now]
            for record in due:
                try:
                    self._refresh_device(record)
                except Exception as exc:
                    record.warnings.append(f"refresh failed: {exc}")
                    record.stale = True
            return due

    def sync_ups_overlays(self) -> list[str]:
        """Re-query the UPS for every active device; reinstall where the
        merged policy changed. Makes admin publishes (and merge-mode
        changes) take effect within one sweep instead of waiting for the
        device's cache validity to lapse."""
        changed = []
        with self._event_lock:
            with self._records_lock:
                active = [r for r in self._records.values()
                          if r.state == STATE_ACTIVE and r.mud_file is not None]
            for record in active:
                try:
                    if self._sync_overlay(record):
                        changed.append(record.mac)
                except Exception as exc:
                    log.warning("%s: UPS overlay sync failed: %s", record.mac, exc)
        return changed

    def _sync_overlay(self, record: DeviceRecord) -> bool:
        mode = self.current_merge_mode()
        ctx = self._context_for(record.mac, record.ipv4, record.mud_url)
        ups_file, ups_rules = self._query_ups(record, ctx)
        mfr_rules = compiler.compile(record.mud_file, ctx, self.resolver).rules
        policy = merge.merge(mfr_rules, ups_rules or [], mode,
                             device_mac=record.mac)
        if (record.policy is not None and policy.rules == record.policy.rules
                and policy.mode == record.policy.mode):
            return False
        self.firewall.install(record.mac, policy)
        record.ups_file = ups_file
        record.policy = policy
        log.info("%s: UPS overlay change applied (%d rules, %s mode)",
                 record.mac, len(policy.rules), mode)
        return True

    def _refresh_device(self, record: DeviceRecord) -> None:
        mode = self.current_merge_mode()
        phases = _PhaseTimer()
        with phases.measure("fetch"):
            try:
                payload, sig = self.fetcher.fetch_mud(record.mud_url)
            except FetchFailure as exc:
                record.stale = True
                record.warnings.append(f"refresh fetch failed, rules kept: {exc}")
                return
        with phases.measure("verify"):
            try:
                doc = signature.verify(payload, sig, self.anchors.snapshot(),
                                       self.clock(), signature.ROLE_MANUFACTURER)
            except AnchorExpired as exc:
                record.stale = True
                record.warnings.append(f"anchor expired at refresh, rules kept: {exc}")
                return
            except SignatureError as exc:
                self._quarantine(record, f"refresh verification failed: {exc}", phases)
                return
            try:
                mud_file = model.parse_mud_file(payload)
                self._store_cache(record.mud_url, payload, sig)
            except MudgateError as exc:
                record.stale = True
                record.warnings.append(f"refreshed file malformed, rules kept: {exc}")
                return
        with phases.measure("install"):
            self.registry.add(record.mac, record.ipv4, record.mud_url)
            ctx = self._context_for(record.mac, record.ipv4, record.mud_url)
            result = compiler.compile(mud_file, ctx, self.resolver)
            self._note_problems(record, result)
            mfr_rules = result.rules
        with phases.measure("ups"):
            ups_file, ups_rules = self._query_ups(record, ctx)
            policy = merge.merge(mfr_rules, ups_rules or [], mode,
                                 device_mac=record.mac)
            self.firewall.install(record.mac, policy)
        record.mud_file = mud_file
        record.ups_file = ups_file
        record.policy = policy
        record.stale = False
        record.cache_expires_at = self._cache_bound(mud_file, doc.signer)
        record.last_latency = phases.record()


def _uses_same_manufacturer(file: MudFile) -> bool:
    return any(ace.matches.remote.kind == model.SAME_MANUFACTURER
               for aces in file.acls.values() for ace in aces)


class _PhaseTimer:
    """Measures the four pipeline phases with perf_counter."""

    _KEYS = ("fetch", "verify", "install", "ups")

    def __init__(self):
        self.durations = dict.fromkeys(self._KEYS, 0.0)

    def measure(self, key: str):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                timer.durations[key] += time.perf_counter() - self.start
                return False

        return _Ctx()

    def record(self) -> LatencyRecord:
        d = self.durations
        return LatencyRecord(d["fetch"], d["verify"], d["install"], d["ups"])
