import random
import threading
import time
from datetime import datetime, timedelta, timezone
from types import SimpleNamespace

import pytest
import requests

from mudgate import model, signature, statusapi, ups
from mudgate.bench import StubMfs
from mudgate.firewall import PacketQuery, SimulatedFirewall
from mudgate.manager import Fetcher, ManagerConfig, MudManager, load_config
from mudgate.dhcp import DeviceJoin
from mudgate.signature import AnchorStore

from helpers import ace_spec, mud_bytes

MAC_A, IP_A = "02:00:00:00:00:0a", "10.0.0.10"
MAC_B, IP_B = "02:00:00:00:00:0b", "10.0.0.11"
GATEWAY = "10.0.0.1"
HOST_A, HOST_B, HOST_C = "192.0.2.1", "192.0.2.2", "192.0.2.3"


class FakeClock:
    def __init__(self):
        self.now = datetime.now(timezone.utc)

    def __call__(self):
        return self.now

    def advance(self, **kwargs):
        self.now += timedelta(**kwargs)


def egress_hosts_doc(url, hosts, ace_prefix="cl"):
    return mud_bytes(url=url, from_aces=[
        ace_spec(f"{ace_prefix}{i}", ("net", f"{h}/32"), proto="tcp", remote_port=443)
        for i, h in enumerate(hosts)])


def join(mac=MAC_A, ip=IP_A, url=None):
    return DeviceJoin(mac=mac, ipv4=ip,
                      mud_url=model.MudUrl(url) if url else None,
                      timestamp=datetime.now(timezone.utc))


def q_egress(src, dst, port=443, proto="tcp"):
    return PacketQuery(src_ip=src, dst_ip=dst, protocol=proto,
                       src_port=40000 if proto != "icmp" else None,
                       dst_port=port if proto != "icmp" else None,
                       direction="lan_to_wan",
                       tcp_initiator="src" if proto == "tcp" else None)


@pytest.fixture()
def stack(tmp_path, mfr_identity, ups_identity, anchor_dir, anchors):
    mfs = StubMfs(*mfr_identity, workdir=tmp_path / "mfs").start()
    store = ups.UpsStore(tmp_path / "ups-store", *ups_identity)
    ups_server = ups.UpsServer(store, admin_token="secret").start()
    clock = FakeClock()

    def make_manager(**overrides):
        kwargs = dict(
            ups_base_url=ups_server.base_url,
            merge_mode="union",
            anchors_dir=str(anchor_dir),
            fetch_timeout_ms=3000,
            local_networks=["10.0.0.0/24"],
            gateway_ip=GATEWAY,
            cache_dir=str(tmp_path / "cache"),
            tls_ca_file=str(mfs.tls_cert_path),
        )
        kwargs.update(overrides)
        config = ManagerConfig(**kwargs)
        fw = SimulatedFirewall(default_non_mud=config.default_legacy)
        fetcher = Fetcher(config.fetch_timeout_ms, tls_ca_file=config.tls_ca_file)
        mgr = MudManager(config, fw, anchors, fetcher=fetcher, clock=clock)
        return mgr, fw

    s = SimpleNamespace(mfs=mfs, store=store, ups=ups_server, clock=clock,
                        make_manager=make_manager, tmp_path=tmp_path)
    yield s
    mfs.stop()
    ups_server.stop()


def serve_device(stack, path="/bulb.json", hosts=(HOST_A, HOST_B)):
    url = stack.mfs.url_for(path)
    stack.mfs.add_signed(path, egress_hosts_doc(url, hosts))
    return url


def publish_ups(stack, mac, hosts=(HOST_A, HOST_C)):
    doc = egress_hosts_doc("https://ups.local/" + mac.replace(":", ""), hosts,
                           ace_prefix="adm")
    stack.store.put_policy(mac, doc, author="tester")
    stack.store.publish(mac)


class TestJoin:
    def test_active_when_ups_absent(self, stack):
        url = serve_device(stack)
        mgr, fw = stack.make_manager()
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "active"
        assert record.stale is False
        assert {r.provenance for r in record.policy.rules} == {"manufacturer"}
        assert record.last_latency.t_ups_total > 0  # the probe still ran
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "allow"
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "deny"

    def test_union_with_ups_overlay(self, stack):
        url = serve_device(stack, hosts=(HOST_A, HOST_B))
        publish_ups(stack, MAC_A, hosts=(HOST_A, HOST_C))
        mgr, fw = stack.make_manager()
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "active"
        allowed = {h for h in (HOST_A, HOST_B, HOST_C)
                   if fw.decide(q_egress(IP_A, h)).verdict == "allow"}
        assert allowed == {HOST_A, HOST_B, HOST_C}
        assert record.policy.conflicts.count("duplicate") == 1

    def test_admin_priority_with_ups_overlay(self, stack):
        url = serve_device(stack, hosts=(HOST_A, HOST_B))
        publish_ups(stack, MAC_A, hosts=(HOST_A, HOST_C))
        mgr, fw = stack.make_manager(merge_mode="admin_priority")
        mgr.handle_device_join(join(url=url))
        allowed = {h for h in (HOST_A, HOST_B, HOST_C)
                   if fw.decide(q_egress(IP_A, h)).verdict == "allow"}
        assert allowed == {HOST_A, HOST_C}

    def test_legacy_device_default_allow(self, stack):
        mgr, fw = stack.make_manager()
        record = mgr.handle_device_join(join(url=None))
        assert record.state == "legacy"
        d = fw.decide(q_egress(IP_A, HOST_A))
        assert d.verdict == "allow" and d.reason == "default_allow_non_mud"

    def test_latency_total_is_sum_of_phases(self, stack):
        url = serve_device(stack)
        mgr, _ = stack.make_manager()
        record = mgr.handle_device_join(join(url=url))
        lat = record.last_latency
        assert lat.total == pytest.approx(
            lat.t_fetch + lat.t_verify_store + lat.t_process_install + lat.t_ups_total)


class TestQuarantine:
    def containment_holds(self, fw, ip):
        # only DHCP (udp 67-68) and DNS (udp+tcp 53) to the gateway pass
        assert fw.decide(q_egress(ip, GATEWAY, port=67, proto="udp")).verdict == "allow"
        assert fw.decide(q_egress(ip, GATEWAY, port=68, proto="udp")).verdict == "allow"
        assert fw.decide(q_egress(ip, GATEWAY, port=53, proto="udp")).verdict == "allow"
        assert fw.decide(q_egress(ip, GATEWAY, port=53, proto="tcp")).verdict == "allow"
        assert fw.decide(q_egress(ip, GATEWAY, port=80, proto="tcp")).verdict == "deny"
        assert fw.decide(q_egress(ip, HOST_A, port=53, proto="udp")).verdict == "deny"
        assert fw.decide(q_egress(ip, HOST_A)).verdict == "deny"

    def test_tampered_signature(self, stack, mfr_identity):
        url = stack.mfs.url_for("/evil.json")
        payload = egress_hosts_doc(url, (HOST_A,))
        stack.mfs.add_raw("/evil.json", payload)
        other_sig = signature.sign(b"something else entirely", *mfr_identity)
        stack.mfs.add_raw("/evil.json.p7s", other_sig)
        mgr, fw = stack.make_manager()
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "quarantined"
        self.containment_holds(fw, IP_A)

    def test_schema_violation(self, stack, mfr_identity):
        url = stack.mfs.url_for("/broken.json")
        stack.mfs.add_signed("/broken.json", b'{"not": "a mud file"}')
        mgr, fw = stack.make_manager()
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "quarantined"
        self.containment_holds(fw, IP_A)

    def test_fetch_failure(self, stack):
        mgr, fw = stack.make_manager(fetch_timeout_ms=300)
        record = mgr.handle_device_join(
            join(url="https://127.0.0.1:1/nothing.json"))
        assert record.state == "quarantined"
        self.containment_holds(fw, IP_A)


class TestUpsFailureModes:
    def test_ups_transport_error_keeps_manufacturer_policy(self, stack, tmp_path):
        url = serve_device(stack)
        mgr, fw = stack.make_manager(ups_base_url="http://127.0.0.1:1")
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "active"
        assert any("UPS fetch failed" in w for w in record.warnings)
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "allow"

    def test_ups_bad_signer_ignored(self, stack, tmp_path, rogue_identity):
        url = serve_device(stack)
        rogue_store = ups.UpsStore(tmp_path / "rogue-store", *rogue_identity)
        rogue_server = ups.UpsServer(rogue_store, admin_token="x").start()
        try:
            doc = egress_hosts_doc("https://ups.local/x", (HOST_C,), "adm")
            rogue_store.put_policy(MAC_A, doc)
            rogue_store.publish(MAC_A)
            mgr, fw = stack.make_manager(ups_base_url=rogue_server.base_url)
            record = mgr.handle_device_join(join(url=url))
            assert record.state == "active"
            assert any("UPS file ignored" in w for w in record.warnings)
            assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "deny"
        finally:
            rogue_server.stop()

    def test_merge_mode_read_from_ups_settings(self, stack):
        url = serve_device(stack, hosts=(HOST_A, HOST_B))
        publish_ups(stack, MAC_A, hosts=(HOST_A, HOST_C))
        resp = requests.put(f"{stack.ups.base_url}/admin/settings/merge-mode",
                            json={"merge_mode": "admin_priority"},
                            headers={"Authorization": "Bearer secret"}, timeout=5)
        assert resp.status_code == 200
        mgr, fw = stack.make_manager(merge_mode="union", merge_mode_ttl_s=0.0)
        mgr.handle_device_join(join(url=url))
        allowed = {h for h in (HOST_A, HOST_B, HOST_C)
                   if fw.decide(q_egress(IP_A, h)).verdict == "allow"}
        assert allowed == {HOST_A, HOST_C}


class TestSequentialProcessing:
    def test_elapsed_at_least_sum_of_injected_delays(self, stack):
        delay = 0.05
        urls = [serve_device(stack, f"/dev{i}.json") for i in range(3)]
        stack.mfs.response_delay = delay
        mgr, _ = stack.make_manager(cache_dir=None)
        events = [join(mac=f"02:00:00:00:01:{i:02x}", ip=f"10.0.0.{20 + i}", url=u)
                  for i, u in enumerate(urls)]
        threads = [threading.Thread(target=mgr.handle_device_join, args=(ev,))
                   for ev in events]
        t0 = time.perf_counter()
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        elapsed = time.perf_counter() - t0
        stack.mfs.response_delay = 0.0
        # two delayed MFS requests per device, strictly one pipeline at a time
        assert elapsed >= len(events) * 2 * delay
        assert all(r["state"] == "active" for r in mgr.status())


class TestPendingVisibility:
    def test_status_shows_in_flight_device_as_pending(self, stack):
        url = serve_device(stack, "/slow.json")
        stack.mfs.response_delay = 0.2
        mgr, _ = stack.make_manager(cache_dir=None)
        worker = threading.Thread(target=mgr.handle_device_join,
                                  args=(join(url=url),))
        worker.start()
        try:
            seen_pending = False
            deadline = time.perf_counter() + 2.0
            while time.perf_counter() < deadline:
                record = mgr.device_status(MAC_A)
                if record and record["state"] == "pending":
                    seen_pending = True
                    break
                time.sleep(0.005)
        finally:
            worker.join()
            stack.mfs.response_delay = 0.0
        assert seen_pending
        assert mgr.device_status(MAC_A)["state"] == "active"


class TestCache:
    def test_second_boot_skips_refetch_within_validity(self, stack):
        url = serve_device(stack)
        mgr1, _ = stack.make_manager()
        mgr1.handle_device_join(join(url=url))
        count_after_first = stack.mfs.request_count
        mgr2, fw2 = stack.make_manager()
        record = mgr2.handle_device_join(join(url=url))
        assert record.state == "active"
        assert stack.mfs.request_count == count_after_first
        assert fw2.decide(q_egress(IP_A, HOST_A)).verdict == "allow"


class TestRefresh:
    def test_unchanged_file_is_fixed_point(self, stack):
        url = serve_device(stack)
        mgr, fw = stack.make_manager(cache_dir=None)
        record = mgr.handle_device_join(join(url=url))
        rules_before = list(record.policy.rules)
        stack.clock.advance(hours=49)  # past cache-validity
        due = mgr.refresh_expired()
        assert [r.mac for r in due] == [MAC_A]
        assert record.policy.rules == rules_before
        assert record.stale is False

    def test_refresh_picks_up_new_host_without_interruption(self, stack):
        url = serve_device(stack, hosts=(HOST_A,))
        mgr, fw = stack.make_manager(cache_dir=None)
        mgr.handle_device_join(join(url=url))
        assert fw.decide(q_egress(IP_A, HOST_B)).verdict == "deny"

        stop = threading.Event()
        denies = []

        def hammer():
            q = q_egress(IP_A, HOST_A)
            while not stop.is_set():
                if fw.decide(q).verdict != "allow":
                    denies.append(1)

        hammer_thread = threading.Thread(target=hammer)
        hammer_thread.start()
        try:
            stack.mfs.add_signed("/bulb.json", egress_hosts_doc(url, (HOST_A, HOST_B)))
            stack.clock.advance(hours=49)
            mgr.refresh_expired()
        finally:
            stop.set()
            hammer_thread.join()
        assert denies == []
        assert fw.decide(q_egress(IP_A, HOST_B)).verdict == "allow"

    def test_anchor_expired_at_refresh_keeps_rules_sets_stale(
            self, stack, tmp_path, ups_identity):
        short_key, short_cert = signature.make_self_signed(
            "short-lived-mfr",
            not_after=datetime.now(timezone.utc) + timedelta(hours=1))
        anchor_dir = tmp_path / "short-anchors"
        signature.write_anchor_store(anchor_dir, {
            "short": ("manufacturer", short_cert),
            "ups": ("ups", ups_identity[1]),
        })
        url = stack.mfs.url_for("/short.json")
        payload = egress_hosts_doc(url, (HOST_A,))
        stack.mfs.files["/short.json"] = payload
        stack.mfs.files["/short.json.p7s"] = signature.sign(
            payload, short_key, short_cert)

        config = ManagerConfig(
            ups_base_url=stack.ups.base_url, anchors_dir=str(anchor_dir),
            local_networks=["10.0.0.0/24"], gateway_ip=GATEWAY,
            tls_ca_file=str(stack.mfs.tls_cert_path), cache_dir=None)
        fw = SimulatedFirewall()
        mgr = MudManager(config, fw, AnchorStore(anchor_dir),
                         fetcher=Fetcher(3000, tls_ca_file=config.tls_ca_file),
                         clock=stack.clock)
        record = mgr.handle_device_join(join(url=url))
        assert record.state == "active"
        assert record.cache_expires_at <= stack.clock() + timedelta(hours=1)

        stack.clock.advance(hours=2)  # anchor now expired
        mgr.refresh_expired()
        assert record.state == "active"
        assert record.stale is True
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "allow"

    def test_bad_signature_at_refresh_quarantines(self, stack, mfr_identity):
        url = serve_device(stack)
        mgr, fw = stack.make_manager(cache_dir=None)
        record = mgr.handle_device_join(join(url=url))
        stack.mfs.add_raw("/bulb.json.p7s",
                          signature.sign(b"attacker swap", *mfr_identity))
        stack.clock.advance(hours=49)
        mgr.refresh_expired()
        assert record.state == "quarantined"
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "deny"

    def test_fetch_failure_at_refresh_keeps_rules(self, stack):
        url = serve_device(stack, "/flaky.json")
        mgr, fw = stack.make_manager(cache_dir=None, fetch_timeout_ms=300)
        record = mgr.handle_device_join(join(url=url))
        del stack.mfs.files["/flaky.json"]  # server now 404s
        stack.clock.advance(hours=49)
        mgr.refresh_expired()
        assert record.state == "active"
        assert record.stale is True
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "allow"


class TestOverlaySync:
    def test_publish_after_join_applies_on_sync(self, stack):
        url = serve_device(stack, hosts=(HOST_A, HOST_B))
        mgr, fw = stack.make_manager()
        mgr.handle_device_join(join(url=url))
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "deny"
        assert mgr.sync_ups_overlays() == []  # nothing published yet

        publish_ups(stack, MAC_A, hosts=(HOST_A, HOST_C))
        assert mgr.sync_ups_overlays() == [MAC_A]
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "allow"
        assert mgr.sync_ups_overlays() == []  # converged, no reinstall

    def test_overlay_removal_reverts_to_manufacturer(self, stack):
        url = serve_device(stack, hosts=(HOST_A,))
        publish_ups(stack, MAC_A, hosts=(HOST_C,))
        mgr, fw = stack.make_manager()
        mgr.handle_device_join(join(url=url))
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "allow"

        stack.store.delete(MAC_A)
        assert mgr.sync_ups_overlays() == [MAC_A]
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "deny"
        assert fw.decide(q_egress(IP_A, HOST_A)).verdict == "allow"

    def test_merge_mode_change_applies_on_sync(self, stack):
        url = serve_device(stack, hosts=(HOST_A, HOST_B))
        publish_ups(stack, MAC_A, hosts=(HOST_A, HOST_C))
        mgr, fw = stack.make_manager(merge_mode_ttl_s=0.0)
        mgr.handle_device_join(join(url=url))
        assert fw.decide(q_egress(IP_A, HOST_B)).verdict == "allow"  # union

        resp = requests.put(f"{stack.ups.base_url}/admin/settings/merge-mode",
                            json={"merge_mode": "admin_priority"},
                            headers={"Authorization": "Bearer secret"}, timeout=5)
        assert resp.status_code == 200
        assert mgr.sync_ups_overlays() == [MAC_A]
        assert fw.decide(q_egress(IP_A, HOST_B)).verdict == "deny"
        assert fw.decide(q_egress(IP_A, HOST_C)).verdict == "allow"
        # restore for other tests sharing the UPS store settings
        requests.put(f"{stack.ups.base_url}/admin/settings/merge-mode",
                     json={"merge_mode": "union"},
                     headers={"Authorization": "Bearer secret"}, timeout=5)

    def test_transport_errors_do_not_spam_warnings(self, stack):
        url = serve_device(stack)
        mgr, _ = stack.make_manager(ups_base_url="http://127.0.0.1:1",
                                    fetch_timeout_ms=200)
        record = mgr.handle_device_join(join(url=url))
        for _ in range(3):
            mgr.sync_ups_overlays()
        ups_warnings = [w for w in record.warnings if "UPS fetch failed" in w]
        assert len(ups_warnings) == 1


class TestSameManufacturer:
    def doc_with_peers(self, url):
        return mud_bytes(url=url,
                         from_aces=[ace_spec("peers-out", ("samemfr",))],
                         to_aces=[ace_spec("peers-in", ("samemfr",))])

    def test_peer_rules_appear_as_devices_join(self, stack):
        url_a = stack.mfs.url_for("/peer-a.json")
        url_b = stack.mfs.url_for("/peer-b.json")
        stack.mfs.add_signed("/peer-a.json", self.doc_with_peers(url_a))
        stack.mfs.add_signed("/peer-b.json", self.doc_with_peers(url_b))
        mgr, fw = stack.make_manager()
        mgr.handle_device_join(join(mac=MAC_A, ip=IP_A, url=url_a))
        record_a = mgr.device_status(MAC_A)
        assert record_a["rule_count"] == 0  # no peers yet

        mgr.handle_device_join(join(mac=MAC_B, ip=IP_B, url=url_b))
        q = PacketQuery(src_ip=IP_A, dst_ip=IP_B, protocol="tcp",
                        src_port=40000, dst_port=443, direction="lan_to_lan",
                        tcp_initiator="src")
        assert fw.decide(q).verdict == "allow"
        # a third, unrelated host is still blocked laterally
        q_other = PacketQuery(src_ip=IP_A, dst_ip="10.0.0.99", protocol="tcp",
                              src_port=40000, dst_port=443, direction="lan_to_lan")
        assert fw.decide(q_other).verdict == "deny"


class TestStateMachine:
    def test_random_event_sequences_keep_invariants(self, stack):
        rng = random.Random(101)
        good_url = serve_device(stack, "/good.json")
        bad_url = stack.mfs.url_for("/bad.json")
        payload = egress_hosts_doc(bad_url, (HOST_A,))
        stack.mfs.add_raw("/bad.json", payload)
        stack.mfs.add_raw("/bad.json.p7s", b"\x30\x03\x02\x01\x00")
        mgr, fw = stack.make_manager(cache_dir=None)
        for i in range(30):
            kind = rng.choice(["good", "bad", "legacy"])
            mac = f"02:00:00:00:02:{i:02x}"
            ip = f"10.0.0.{100 + i}"
            url = {"good": good_url, "bad": bad_url, "legacy": None}[kind]
            record = mgr.handle_device_join(join(mac=mac, ip=ip, url=url))
            if kind == "good":
                assert record.state == "active"
                assert fw.installed_policy(mac) is not None
            elif kind == "bad":
                assert record.state == "quarantined"
                assert fw.installed_policy(mac) is not None
            else:
                assert record.state == "legacy"
                assert fw.installed_policy(mac) is None
        # global invariant: active implies an installed policy
        for rec in mgr.status():
            if rec["state"] == "active":
                assert fw.installed_policy(rec["mac"]) is not None


class TestStatusApi:
    def test_endpoints(self, stack):
        url = serve_device(stack)
        publish_ups(stack, MAC_A)
        mgr, _ = stack.make_manager()
        mgr.handle_device_join(join(url=url))
        mgr.handle_device_join(join(mac=MAC_B, ip=IP_B, url=None))
        server = statusapi.build_status_server(mgr, "127.0.0.1:0").start()
        base = f"http://{server.address}"
        try:
            devices = requests.get(f"{base}/status/devices", timeout=5).json()
            assert {d["mac"] for d in devices} == {MAC_A, MAC_B}

            one = requests.get(f"{base}/status/devices/{MAC_A}", timeout=5).json()
            assert one["state"] == "active"
            assert one["provenance_counts"]["admin"] > 0

            rules = requests.get(f"{base}/status/devices/{MAC_A}/rules", timeout=5)
            assert "filter FORWARD" in rules.text
            assert "default/deny-egress" in rules.text

            conflicts = requests.get(
                f"{base}/status/devices/{MAC_A}/conflicts", timeout=5).json()
            assert any(e["kind"] == "duplicate" for e in conflicts["entries"])

            csv_resp = requests.get(f"{base}/metrics",
                                    headers={"Accept": "text/csv"}, timeout=5)
            assert csv_resp.text.splitlines()[0] == statusapi.METRICS_CSV_HEADER
            json_metrics = requests.get(f"{base}/metrics", timeout=5).json()
            assert {m["mac"] for m in json_metrics} == {MAC_A, MAC_B}

            missing = requests.get(f"{base}/status/devices/02:ff:ff:ff:ff:ff",
                                   timeout=5)
            assert missing.status_code == 404
        finally:
            server.stop()


class TestConfigFile:
    def test_load_config_round_trip(self, tmp_path):
        path = tmp_path / "mudgated.conf"
        path.write_text(
            "# manager config\n"
            "ups_base_url = http://127.0.0.1:9443\n"
            "merge_mode = admin_priority\n"
            "anchors_dir = /tmp/anchors\n"
            "fetch_timeout_ms = 1500\n"
            "local_networks = 10.0.0.0/24, 192.168.4.0/24\n"
            "default_legacy = deny\n"
            "listen_status_addr = 127.0.0.1:8445\n"
            "gateway_ip = 10.0.0.1\n"
            "my_controller = 10.0.0.7\n"
            "controller.urn:example:lights = 10.0.0.70,10.0.0.71\n",
            encoding="utf-8")
        config = load_config(path)
        assert config.merge_mode == "admin_priority"
        assert config.fetch_timeout_ms == 1500
        assert config.local_networks == ["10.0.0.0/24", "192.168.4.0/24"]
        assert config.default_legacy == "deny"
        assert config.controllers == {"urn:example:lights": ["10.0.0.70", "10.0.0.71"]}
        assert config.my_controller == "10.0.0.7"

    def test_bad_merge_mode_rejected(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("ups_base_url = http://x\nmerge_mode = shuffle\n")
        with pytest.raises(ValueError):
            load_config(path)
