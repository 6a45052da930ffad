"""Launches a full control-plane stack for the console's live e2e test.

Prints one JSON line with connection details once everything is up, then
serves commands on stdin: "refresh" forces a cache-expiry sweep (so a newly
published overlay is merged immediately), "exit" tears the stack down.
"""

import json
import sys
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from mudgate import model, signature, statusapi, ups
from mudgate.bench import StubMfs
from mudgate.dhcp import DeviceJoin
from mudgate.firewall import SimulatedFirewall
from mudgate.manager import Fetcher, ManagerConfig, MudManager
from mudgate.signature import AnchorStore

MAC = "02:00:00:00:00:01"
IP = "10.0.0.10"
HOST_A, HOST_B = "192.0.2.1", "192.0.2.2"
TOKEN = "console-test-token"

MUD_DOC = """{
  "ietf-mud:mud": {
    "mud-version": 1,
    "mud-url": "%(url)s",
    "last-update": "2026-01-01T00:00:00Z",
    "cache-validity": 48,
    "is-supported": true,
    "systeminfo": "live test device",
    "from-device-policy": {"access-lists": {"access-list": [{"name": "fr"}]}},
    "to-device-policy": {"access-lists": {"access-list": []}}
  },
  "ietf-access-control-list:acls": {"acl": [{
    "name": "fr", "type": "ipv4-acl-type",
    "aces": {"ace": [
      {"name": "to-a",
       "matches": {"ipv4": {"protocol": 6, "destination-ipv4-network": "%(a)s/32"},
                   "tcp": {"destination-port": {"operator": "eq", "port": 443}}},
       "actions": {"forwarding": "accept"}},
      {"name": "to-b",
       "matches": {"ipv4": {"protocol": 6, "destination-ipv4-network": "%(b)s/32"},
                   "tcp": {"destination-port": {"operator": "eq", "port": 443}}},
       "actions": {"forwarding": "accept"}}
    ]}}]}
}"""


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="console-e2e-"))
    mfr_key, mfr_cert = signature.make_self_signed("live-mfr")
    ups_key, ups_cert = signature.make_self_signed("live-ups")
    anchors_dir = workdir / "anchors"
    signature.write_anchor_store(anchors_dir, {
        "mfr": ("manufacturer", mfr_cert),
        "ups": ("ups", ups_cert),
    })
    anchors = AnchorStore(anchors_dir)

    mfs = StubMfs(mfr_key, mfr_cert, workdir=workdir / "mfs").start()
    url = mfs.url_for("/live.json")
    mfs.add_signed("/live.json",
                   (MUD_DOC % {"url": url, "a": HOST_A, "b": HOST_B}).encode())

    config = ManagerConfig(
        ups_base_url="pending", anchors_dir=str(anchors_dir),
        local_networks=["10.0.0.0/24"], gateway_ip="10.0.0.1",
        cache_dir=None, tls_ca_file=str(mfs.tls_cert_path),
        merge_mode_ttl_s=0.0)
    firewall = SimulatedFirewall()

    store = ups.UpsStore(workdir / "ups-store", ups_key, ups_cert)
    manager = None

    server = ups.UpsServer(store, admin_token=TOKEN,
                           ui_dir=str(Path(__file__).parent.parent / "dist"))
    config.ups_base_url = server.base_url
    server.start()

    manager = MudManager(config, firewall, anchors,
                         fetcher=Fetcher(5000, str(mfs.tls_cert_path)))
    status_server = statusapi.build_status_server(manager, "127.0.0.1:0").start()
    server.manager_status_url = f"http://{status_server.address}"

    record = manager.handle_device_join(DeviceJoin(
        mac=MAC, ipv4=IP, mud_url=model.MudUrl(url),
        timestamp=datetime.now(timezone.utc)))
    assert record.state == "active", record.state

    print(json.dumps({
        "ups_base": server.base_url,
        "manager_base": f"http://{status_server.address}",
        "token": TOKEN,
        "mac": MAC,
    }), flush=True)

    for line in sys.stdin:
        command = line.strip()
        if command == "refresh":
            manager.refresh_expired(
                now=datetime.now(timezone.utc) + timedelta(days=30))
            print("refreshed", flush=True)
        elif command == "exit":
            break
    status_server.stop()
    server.stop()
    mfs.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
