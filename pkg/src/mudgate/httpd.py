"""Small shared plumbing for the package's HTTP servers.

Both the manager status API and the UPS server are plain threading HTTP
servers with a regex route table; enough for a desk-scale control plane, no
async stack required.
"""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

log = logging.getLogger(__name__)

Route = tuple[str, re.Pattern, Callable]


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "mudgate"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    # --- dispatch ---

    def _dispatch(self, method: str) -> None:
        delay = getattr(self.server, "response_delay", 0.0)
        if delay:
            time.sleep(delay)
        path = self.path.split("?", 1)[0]
        for route_method, pattern, func in self.server.routes:
            if route_method != method:
                continue
            match = pattern.fullmatch(path)
            if match:
                try:
                    func(self, **match.groupdict())
                except Exception:
                    log.exception("handler error for %s %s", method, path)
                    self.send_json({"error": "internal error"}, status=500)
                return
        self.send_json({"error": "not found"}, status=404)

    def do_GET(self):
        self._dispatch("GET")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")

    # --- helpers ---

    def read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length) if length else b""

    def send_bytes(self, data: bytes, content_type: str, status: int = 200,
                   headers: Optional[dict] = None) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        # the admin console is served from the UPS origin but reads the
        # manager's status API directly
        self.send_header("Access-Control-Allow-Origin", "*")
        for key, value in (headers or {}).items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(data)

    def send_json(self, obj, status: int = 200, headers: Optional[dict] = None) -> None:
        self.send_bytes(json.dumps(obj, indent=2, sort_keys=True).encode("utf-8"),
                        "application/json", status=status, headers=headers)

    def send_text(self, text: str, status: int = 200,
                  content_type: str = "text/plain; charset=utf-8") -> None:
        self.send_bytes(text.encode("utf-8"), content_type, status=status)


class ApiServer:
    """A ThreadingHTTPServer running on a daemon thread."""

    def __init__(self, listen_addr: str, routes: list[Route],
                 handler_class=ApiHandler, tls_context=None,
                 response_delay: float = 0.0):
        host, _, port = listen_addr.rpartition(":")
        self.httpd = ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler_class)
        self.httpd.routes = routes
        self.httpd.response_delay = response_delay
        if tls_context is not None:
            self.httpd.socket = tls_context.wrap_socket(self.httpd.socket, server_side=True)
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> "ApiServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever,
                                        name=f"httpd:{self.address}", daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def route(method: str, pattern: str, func: Callable) -> Route:
    return (method, re.compile(pattern), func)
