"""Read-only HTTP status API of the MUD manager.

GET /status/devices              all device records
GET /status/devices/{mac}        one record
GET /status/devices/{mac}/rules  emitted rule text for the installed policy
GET /status/devices/{mac}/conflicts
GET /metrics                     latency records, CSV or JSON per Accept
"""

from __future__ import annotations

import io

from .errors import InvalidMac
from .httpd import ApiServer, route
from .manager import MudManager

METRICS_CSV_HEADER = "mac,t_fetch_ms,t_verify_ms,t_install_ms,t_ups_ms,total_ms"


def metrics_csv(manager: MudManager) -> str:
    out = io.StringIO()
    out.write(METRICS_CSV_HEADER + "\n")
    for mac, rec in manager.latency_records():
        d = rec.to_dict()
        out.write(f"{mac},{d['t_fetch_ms']:.3f},{d['t_verify_ms']:.3f},"
                  f"{d['t_install_ms']:.3f},{d['t_ups_ms']:.3f},{d['total_ms']:.3f}\n")
    return out.getvalue()


def build_status_server(manager: MudManager, listen_addr: str) -> ApiServer:
    def devices(handler):
        handler.send_json(manager.status())

    def device(handler, mac):
        try:
            record = manager.device_status(mac)
        except InvalidMac:
            handler.send_json({"error": "bad mac"}, status=400)
            return
        if record is None:
            handler.send_json({"error": "unknown device"}, status=404)
        else:
            handler.send_json(record)

    def rules(handler, mac):
        try:
            lines = manager.device_rules_text(mac)
        except InvalidMac:
            handler.send_json({"error": "bad mac"}, status=400)
            return
        if lines is None:
            handler.send_json({"error": "no installed policy"}, status=404)
        else:
            handler.send_text("\n".join(lines) + "\n")

    def conflicts(handler, mac):
        try:
            report = manager.device_conflicts(mac)
        except InvalidMac:
            handler.send_json({"error": "bad mac"}, status=400)
            return
        if report is None:
            handler.send_json({"error": "no installed policy"}, status=404)
        else:
            handler.send_json(report)

    def metrics(handler):
        accept = handler.headers.get("Accept", "")
        if "text/csv" in accept:
            handler.send_text(metrics_csv(manager), content_type="text/csv; charset=utf-8")
        else:
            handler.send_json([{"mac": mac, **rec.to_dict()}
                               for mac, rec in manager.latency_records()])

    mac_pat = r"(?P<mac>[0-9a-fA-F:\-\.]+)"
    routes = [
        route("GET", r"/status/devices", devices),
        route("GET", rf"/status/devices/{mac_pat}", device),
        route("GET", rf"/status/devices/{mac_pat}/rules", rules),
        route("GET", rf"/status/devices/{mac_pat}/conflicts", conflicts),
        route("GET", r"/metrics", metrics),
    ]
    return ApiServer(listen_addr, routes)
