"""Boot-storm simulator and rule-installation latency benchmark.

Spins up a TLS stub manufacturer file server and a local UPS, then for each
(a, b) pair replays b simultaneous device joins into a freshly booted
manager, a of which (chosen by a seeded PRNG) have a published UPS overlay.
WAN-vs-LAN distance is modelled by injected per-request delays on the two
servers, which makes the UPS overhead testable against an analytic delay
model instead of hardware-bound absolute numbers.

Caching is disabled on the benched manager: a boot storm means every file is
retrieved again.
"""

from __future__ import annotations

import json
import random
import ssl
import statistics
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

from . import model, signature
from .errors import HarnessStartupFailure
from .firewall import SimulatedFirewall
from .httpd import ApiServer, route
from .manager import Fetcher, LatencyRecord, ManagerConfig, MudManager
from .signature import AnchorStore
from .ups import UpsServer, UpsStore

CSV_HEADER = "pair_a,pair_b,rep,mac,t_fetch_ms,t_verify_ms,t_install_ms,t_ups_ms,total_ms"

PAPER_PAIRS = [(1, 1), (2, 2), (2, 4), (3, 8), (6, 16)]


@dataclass(frozen=True)
class BenchmarkConfig:
    pairs: list[tuple[int, int]]
    repetitions: int = 20
    remote_rtt_s: float = 0.2
    local_rtt_s: float = 0.005
    file_size_bytes: tuple[int, int] = (2048, 6144)
    seed: int = 42

    def __post_init__(self):
        for a, b in self.pairs:
            if not (0 <= a <= b):
                raise ValueError(f"pair ({a},{b}) must satisfy 0 <= a <= b")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        lo, hi = self.file_size_bytes
        if not (256 <= lo <= hi):
            raise ValueError("bad file size range")

    def baseline(self) -> "BenchmarkConfig":
        """The matched a=0 configuration (no device carries a UPS file)."""
        return BenchmarkConfig(pairs=[(0, b) for _, b in self.pairs],
                               repetitions=self.repetitions,
                               remote_rtt_s=self.remote_rtt_s,
                               local_rtt_s=self.local_rtt_s,
                               file_size_bytes=self.file_size_bytes,
                               seed=self.seed)


@dataclass(frozen=True)
class DevicePlan:
    mac: str
    ipv4: str
    path: str  # MFS path of the device's MUD file
    has_ups: bool
    size_target: int


@dataclass
class DeviceRun:
    pair: tuple[int, int]
    rep: int
    mac: str
    has_ups: bool
    latency: LatencyRecord


@dataclass
class RepRun:
    pair: tuple[int, int]
    rep: int
    total_s: float
    devices: list[DeviceRun]


@dataclass
class LatencyReport:
    config: BenchmarkConfig
    reps: list[RepRun]
    request_overhead_s: float = 0.0   # calibrated plain-GET cost
    ups_processing_s: float = 0.0     # calibrated verify+compile+merge+install

    def pair_totals(self) -> dict[tuple[int, int], list[float]]:
        out: dict[tuple[int, int], list[float]] = {}
        for rep in self.reps:
            out.setdefault(rep.pair, []).append(rep.total_s)
        return out

    def aggregates(self) -> list[dict]:
        rows = []
        for pair, totals in self.pair_totals().items():
            rows.append({
                "pair_a": pair[0], "pair_b": pair[1],
                "mean_s": statistics.mean(totals),
                "min_s": min(totals), "max_s": max(totals),
            })
        return rows

    def mean_total(self, pair: tuple[int, int]) -> float:
        return statistics.mean(self.pair_totals()[pair])

    def modeled_ups_overhead(self, pair: tuple[int, int]) -> float:
        """Expected extra seconds per rep versus the matched a=0 baseline.

        Each UPS-carrying device costs one extra local request (the overlay
        probe becomes the payload GET, the signature GET is new) plus the
        overlay processing work.
        """
        a, _ = pair
        per_device = (self.config.local_rtt_s + self.request_overhead_s
                      + self.ups_processing_s)
        return a * per_device


def plan_boot_storm(cfg: BenchmarkConfig) -> dict[tuple[int, int, int], list[DevicePlan]]:
    """Deterministic device/UPS assignment for every (pair, rep)."""
    plans = {}
    for pair_idx, (a, b) in enumerate(cfg.pairs):
        for rep in range(cfg.repetitions):
            rng = random.Random(f"{cfg.seed}/{pair_idx}/{a}/{b}/{rep}")
            with_ups = set(rng.sample(range(b), a))
            devices = []
            for i in range(b):
                devices.append(DevicePlan(
                    mac=f"02:{pair_idx:02x}:{rep:02x}:00:00:{i:02x}",
                    ipv4=f"10.{pair_idx + 1}.{rep % 250}.{10 + i}",
                    path=f"/dev-{pair_idx}-{rep}-{i}.json",
                    has_ups=i in with_ups,
                    size_target=rng.randint(*cfg.file_size_bytes),
                ))
            plans[(pair_idx, a, rep)] = devices
    return plans


# --------------------------------------------------------------------------
# Synthetic MUD/UPS files.

BENCH_HOSTS = ["192.0.2.10", "192.0.2.11", "198.51.100.7"]
BENCH_FQDN = "updates.bench.example"
BENCH_RESOLVER_TABLE = {BENCH_FQDN: {"192.0.2.99"}}


def synth_mud_doc(url: str, size_target: int, rng: random.Random) -> bytes:
    """A MUD file with a handful of ACEs, padded to the size target."""
    aces = [{
        "name": "cl0-frdev",
        "matches": {
            "ipv4": {"protocol": 6,
                     "ietf-acldns:dst-dnsname": BENCH_FQDN},
            "tcp": {"ietf-mud:direction-initiated": "from-device",
                    "destination-port": {"operator": "eq", "port": 443}},
        },
        "actions": {"forwarding": "accept"},
    }]
    for i, host in enumerate(rng.sample(BENCH_HOSTS, k=2)):
        aces.append({
            "name": f"cl{i + 1}-frdev",
            "matches": {
                "ipv4": {"protocol": 17,
                         "destination-ipv4-network": f"{host}/32"},
                "udp": {"destination-port": {"operator": "eq",
                                             "port": rng.choice([123, 5683])}},
            },
            "actions": {"forwarding": "accept"},
        })
    doc = {
        "ietf-mud:mud": {
            "mud-version": 1,
            "mud-url": url,
            "last-update": "2026-01-01T00:00:00Z",
            "cache-validity": 48,
            "is-supported": True,
            "systeminfo": "",
            "from-device-policy": {"access-lists": {"access-list": [
                {"name": "mud-bench-fr"}]}},
            "to-device-policy": {"access-lists": {"access-list": []}},
        },
        "ietf-access-control-list:acls": {"acl": [
            {"name": "mud-bench-fr", "type": "ipv4-acl-type",
             "aces": {"ace": aces}}]},
    }
    base = len(json.dumps(doc).encode())
    pad = max(0, size_target - base)
    doc["ietf-mud:mud"]["systeminfo"] = "bench device " + "x" * pad
    return json.dumps(doc).encode()


def synth_ups_doc(url: str) -> bytes:
    doc = {
        "ietf-mud:mud": {
            "mud-version": 1,
            "mud-url": url,
            "last-update": "2026-01-01T00:00:00Z",
            "cache-validity": 48,
            "is-supported": True,
            "systeminfo": "administrator overlay",
            "from-device-policy": {"access-lists": {"access-list": [
                {"name": "ups-bench-fr"}]}},
            "to-device-policy": {"access-lists": {"access-list": []}},
        },
        "ietf-access-control-list:acls": {"acl": [
            {"name": "ups-bench-fr", "type": "ipv4-acl-type",
             "aces": {"ace": [{
                 "name": "adm0-frdev",
                 "matches": {
                     "ipv4": {"protocol": 6,
                              "destination-ipv4-network": "203.0.113.20/32"},
                     "tcp": {"destination-port": {"operator": "eq", "port": 8883}},
                 },
                 "actions": {"forwarding": "accept"}}]}}]},
    }
    return json.dumps(doc).encode()


# --------------------------------------------------------------------------
# Stub manufacturer file server (TLS).


class StubMfs:
    """Serves payload/signature pairs over HTTPS with an injectable delay."""

    def __init__(self, signing_key, signing_cert, listen_addr: str = "127.0.0.1:0",
                 response_delay: float = 0.0, workdir: Optional[Path] = None):
        self.signing_key = signing_key
        self.signing_cert = signing_cert
        self.files: dict[str, bytes] = {}
        self.request_count = 0
        self._workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="mfs-"))
        self._workdir.mkdir(parents=True, exist_ok=True)

        tls_key, tls_cert = signature.make_self_signed(
            "stub-mfs", san_dns=["localhost"], san_ips=["127.0.0.1"])
        self.tls_cert_path = self._workdir / "mfs-tls.pem"
        key_path = self._workdir / "mfs-tls-key.pem"
        signature.save_certificate(tls_cert, self.tls_cert_path)
        signature.save_private_key(tls_key, key_path)
        context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        context.load_cert_chain(self.tls_cert_path, key_path)

        def serve(handler, path):
            self.request_count += 1
            data = self.files.get("/" + path)
            if data is None:
                handler.send_json({"error": "not found"}, status=404)
            else:
                handler.send_bytes(data, "application/octet-stream")

        self.api = ApiServer(listen_addr, [route("GET", r"/(?P<path>.+)", serve)],
                             tls_context=context, response_delay=response_delay)

    def add_signed(self, path: str, payload: bytes) -> None:
        self.files[path] = payload
        self.files[path + ".p7s"] = signature.sign(payload, self.signing_key,
                                                   self.signing_cert)
    def add_raw(self, path: str, data: bytes) -> None:
        self.files[path] = data

    @property
    def response_delay(self) -> float:
        return self.api.httpd.response_delay

    @response_delay.setter
    def response_delay(self, value: float) -> None:
        self.api.httpd.response_delay = value

    def url_for(self, path: str) -> str:
        return f"https://127.0.0.1:{self.api.port}{path}"

    def start(self) -> "StubMfs":
        self.api.start()
        return self

    def stop(self) -> None:
        self.api.stop()


# --------------------------------------------------------------------------
# The harness.


class BootStormHarness:
    def __init__(self, cfg: BenchmarkConfig, workdir: Optional[str | Path] = None):
        self.cfg = cfg
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="mudbench-"))
        self.workdir.mkdir(parents=True, exist_ok=True)
        try:
            self._start_servers()
        except Exception as exc:
            raise HarnessStartupFailure(f"benchmark stack failed to start: {exc}") from exc

    def _start_servers(self) -> None:
        self.mfr_key, self.mfr_cert = signature.make_self_signed("bench-manufacturer")
        self.ups_key, self.ups_cert = signature.make_self_signed("bench-ups")
        anchors_dir = self.workdir / "anchors"
        signature.write_anchor_store(anchors_dir, {
            "bench-mfr": ("manufacturer", self.mfr_cert),
            "bench-ups": ("ups", self.ups_cert),
        })
        self.anchors = AnchorStore(anchors_dir)

        # Servers start without delays; calibration runs first.
        self.mfs = StubMfs(self.mfr_key, self.mfr_cert,
                           workdir=self.workdir / "mfs").start()
        store = UpsStore(self.workdir / "ups-store", self.ups_key, self.ups_cert)
        self.ups = UpsServer(store, admin_token="bench").start()

        self._calibrate()
        self.mfs.response_delay = self.cfg.remote_rtt_s
        self.ups.api.httpd.response_delay = self.cfg.local_rtt_s

    def _calibrate(self) -> None:
        """Estimate plain request cost and UPS overlay processing cost."""
        session = requests.Session()
        probe_url = f"{self.ups.base_url}/ups/merge-mode"
        samples = []
        for _ in range(10):
            t0 = time.perf_counter()
            session.get(probe_url, timeout=5)
            samples.append(time.perf_counter() - t0)
        self.request_overhead_s = statistics.median(samples)

        from . import compiler, merge as merge_mod
        payload = synth_ups_doc("https://ups.bench.example/x")
        canonical = model.canonicalize(model.parse_mud_file(payload))
        sig = signature.sign(canonical, self.ups_key, self.ups_cert)
        fw = SimulatedFirewall()
        ctx = compiler.DeviceContext(
            mac="02:00:00:00:00:01", ipv4="10.1.0.10",
            mud_url=model.MudUrl("https://ups.bench.example/x"),
            local_networks=["10.0.0.0/8"])
        from datetime import datetime, timezone
        samples = []
        for _ in range(5):
            t0 = time.perf_counter()
            signature.verify(canonical, sig, self.anchors.snapshot(),
                             datetime.now(timezone.utc), signature.ROLE_UPS)
            file = model.parse_mud_file(canonical)
            rules = compiler.compile(file, ctx, lambda f: set(),
                                     provenance="admin").rules
            policy = merge_mod.merge([], rules, "union", device_mac=ctx.mac)
            fw.set_address(ctx.mac, ctx.ipv4)
            fw.install(ctx.mac, policy)
            samples.append(time.perf_counter() - t0)
        self.ups_processing_s = statistics.median(samples)

    def _manager_for_rep(self) -> tuple[MudManager, SimulatedFirewall]:
        config = ManagerConfig(
            ups_base_url=self.ups.base_url,
            merge_mode="union",
            anchors_dir=str(self.workdir / "anchors"),
            fetch_timeout_ms=30000,
            local_networks=["10.0.0.0/8"],
            gateway_ip="10.0.0.1",
            cache_dir=None,  # a boot storm re-retrieves every file
            tls_ca_file=str(self.mfs.tls_cert_path),
        )
        fw = SimulatedFirewall()
        fetcher = Fetcher(config.fetch_timeout_ms, tls_ca_file=config.tls_ca_file)
        mgr = MudManager(config, fw, self.anchors, fetcher=fetcher,
                         resolver=lambda f: BENCH_RESOLVER_TABLE.get(f, set()))
        return mgr, fw

    def run(self) -> LatencyReport:
        from .dhcp import DeviceJoin
        from datetime import datetime, timezone

        plans = plan_boot_storm(self.cfg)
        reps: list[RepRun] = []
        for pair_idx, (a, b) in enumerate(self.cfg.pairs):
            for rep in range(self.cfg.repetitions):
                devices = plans[(pair_idx, a, rep)]
                rng = random.Random(f"files/{self.cfg.seed}/{pair_idx}/{rep}")
                for plan in devices:
                    url = self.mfs.url_for(plan.path)
                    self.mfs.add_signed(plan.path, synth_mud_doc(
                        url, plan.size_target, rng))
                    if plan.has_ups:
                        ups_url = f"https://ups.bench.example/{plan.mac.replace(':', '')}"
                        self.ups.store.put_policy(plan.mac, synth_ups_doc(ups_url),
                                                  author="bench")
                        self.ups.store.publish(plan.mac)

                mgr, _ = self._manager_for_rep()
                joins = [DeviceJoin(mac=p.mac, ipv4=p.ipv4,
                                    mud_url=model.MudUrl(self.mfs.url_for(p.path)),
                                    timestamp=datetime.now(timezone.utc))
                         for p in devices]
                t0 = time.perf_counter()
                for join in joins:
                    mgr.handle_device_join(join)
                total = time.perf_counter() - t0

                mgr.fetcher.session.close()
                runs = []
                for plan in devices:
                    record = mgr.device_status(plan.mac)
                    assert record is not None and record["state"] == "active", \
                        f"{plan.mac} ended {record and record['state']}"
                    lat = record["latency"]
                    runs.append(DeviceRun(
                        pair=(a, b), rep=rep, mac=plan.mac, has_ups=plan.has_ups,
                        latency=LatencyRecord(
                            lat["t_fetch_ms"] / 1000.0,
                            lat["t_verify_ms"] / 1000.0,
                            lat["t_install_ms"] / 1000.0,
                            lat["t_ups_ms"] / 1000.0)))
                rep_run = RepRun(pair=(a, b), rep=rep, total_s=total, devices=runs)
                assert rep_run.total_s >= max(r.latency.total for r in runs) - 1e-6
                reps.append(rep_run)
        return LatencyReport(config=self.cfg, reps=reps,
                             request_overhead_s=self.request_overhead_s,
                             ups_processing_s=self.ups_processing_s)

    def close(self) -> None:
        self.mfs.stop()
        self.ups.stop()


def run_boot_storm(cfg: BenchmarkConfig,
                   workdir: Optional[str | Path] = None) -> LatencyReport:
    harness = BootStormHarness(cfg, workdir=workdir)
    try:
        return harness.run()
    finally:
        harness.close()


def emit_csv(report: LatencyReport) -> str:
    """One row per device per repetition, stable ordering."""
    lines = [CSV_HEADER]
    for rep in report.reps:
        for dev in rep.devices:
            d = dev.latency.to_dict()
            lines.append(
                f"{rep.pair[0]},{rep.pair[1]},{rep.rep},{dev.mac},"
                f"{d['t_fetch_ms']:.3f},{d['t_verify_ms']:.3f},"
                f"{d['t_install_ms']:.3f},{d['t_ups_ms']:.3f},{d['total_ms']:.3f}")
    return "\n".join(lines) + "\n"
