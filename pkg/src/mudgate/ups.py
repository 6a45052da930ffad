"""The User Policy Server.

Stores administrator-authored per-device policy files (same schema as
manufacturer MUD files), signs them with the UPS key on publish, and serves
them to the manager under the device's MAC-derived file name. An
authenticated admin API backs the console UI: draft editing, publishing,
conflict inspection (proxied from the manager) and the merge-mode setting.

Persistence is a directory per device: draft.json, published.json,
published.sig, meta.json. The published (payload, signature) pair is swapped
atomically both on disk and in memory, so a fetch during publish sees either
the old pair or the new pair.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import requests

from . import model, signature
from .errors import (
    InvalidMac,
    MudgateError,
    NoDraft,
    NotFound,
    SigningFailure,
)
from .httpd import ApiServer, route
from .model import MudFile, mac_to_filename, normalize_mac

log = logging.getLogger(__name__)


@dataclass
class PolicyEntry:
    """One device's administrator policy: working draft plus published copy."""

    mac: str
    draft: Optional[MudFile]
    published: Optional[signature.SignedDocument]
    updated_at: datetime
    author: str

    def summary(self) -> dict:
        return {
            "mac": self.mac,
            "filename": mac_to_filename(self.mac),
            "has_draft": self.draft is not None,
            "published": self.published is not None,
            "updated_at": self.updated_at.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "author": self.author,
        }


class _StoredEntry:
    __slots__ = ("draft_bytes", "published_pair", "updated_at", "author")

    def __init__(self, draft_bytes=None, published_pair=None,
                 updated_at=None, author=""):
        self.draft_bytes: Optional[bytes] = draft_bytes
        self.published_pair: Optional[tuple[bytes, bytes]] = published_pair
        self.updated_at: datetime = updated_at or datetime.now(timezone.utc)
        self.author: str = author


class UpsStore:
    """Draft/published policy storage with per-MAC write serialization."""

    def __init__(self, store_dir: str | Path, signing_key, signing_cert):
        self.store_dir = Path(store_dir)
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.signing_key = signing_key
        self.signing_cert = signing_cert
        self._entries: dict[str, _StoredEntry] = {}
        self._entries_lock = threading.Lock()
        self._mac_locks: dict[str, threading.Lock] = {}
        self._load()

    # --- locking ---

    def _lock_for(self, mac: str) -> threading.Lock:
        with self._entries_lock:
            return self._mac_locks.setdefault(mac, threading.Lock())

    def _get(self, mac: str) -> Optional[_StoredEntry]:
        with self._entries_lock:
            return self._entries.get(mac)

    def _set(self, mac: str, entry: _StoredEntry) -> None:
        with self._entries_lock:
            self._entries[mac] = entry

    # --- persistence ---

    def _entry_dir(self, mac: str) -> Path:
        return self.store_dir / mac.replace(":", "")

    def _load(self) -> None:
        for entry_dir in sorted(self.store_dir.iterdir() if self.store_dir.exists() else []):
            if not entry_dir.is_dir():
                continue
            try:
                mac = normalize_mac(entry_dir.name)
            except InvalidMac:
                continue
            entry = _StoredEntry()
            draft = entry_dir / "draft.json"
            if draft.exists():
                entry.draft_bytes = draft.read_bytes()
            payload = entry_dir / "published.json"
            sig = entry_dir / "published.sig"
            if payload.exists() and sig.exists():
                entry.published_pair = (payload.read_bytes(), sig.read_bytes())
            meta = entry_dir / "meta.json"
            if meta.exists():
                try:
                    data = json.loads(meta.read_text(encoding="utf-8"))
                    entry.author = data.get("author", "")
                    entry.updated_at = datetime.fromisoformat(data["updated_at"])
                except (ValueError, KeyError):
                    pass
            if entry.draft_bytes or entry.published_pair:
                self._entries[mac] = entry

    def _write_meta(self, mac: str, entry: _StoredEntry) -> None:
        meta = {"author": entry.author, "updated_at": entry.updated_at.isoformat()}
        path = self._entry_dir(mac) / "meta.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(meta, indent=2), encoding="utf-8")
        tmp.replace(path)

    # --- operations ---

    def put_policy(self, mac: str, policy: MudFile | bytes | str,
                   author: str = "") -> PolicyEntry:
        """Store or replace the draft for a device; idempotent for identical
        payloads (updated_at still advances)."""
        mac = normalize_mac(mac)
        if isinstance(policy, (bytes, str)):
            policy = model.parse_mud_file(policy)
        policy.validate()
        draft_bytes = model.canonicalize(policy)
        with self._lock_for(mac):
            current = self._get(mac) or _StoredEntry()
            entry = _StoredEntry(draft_bytes=draft_bytes,
                                 published_pair=current.published_pair,
                                 updated_at=datetime.now(timezone.utc),
                                 author=author or current.author)
            entry_dir = self._entry_dir(mac)
            entry_dir.mkdir(parents=True, exist_ok=True)
            tmp = entry_dir / "draft.json.tmp"
            tmp.write_bytes(draft_bytes)
            tmp.replace(entry_dir / "draft.json")
            self._write_meta(mac, entry)
            self._set(mac, entry)
        return self.entry(mac)

    def publish(self, mac: str) -> PolicyEntry:
        """Canonicalize the draft, sign it, atomically swap the published pair."""
        mac = normalize_mac(mac)
        with self._lock_for(mac):
            current = self._get(mac)
            if current is None or current.draft_bytes is None:
                raise NoDraft(f"no draft stored for {mac}")
            payload = model.canonicalize(model.parse_mud_file(current.draft_bytes))
            try:
                sig = signature.sign(payload, self.signing_key, self.signing_cert)
            except Exception as exc:
                raise SigningFailure(f"cannot sign policy for {mac}: {exc}") from exc
            entry_dir = self._entry_dir(mac)
            entry_dir.mkdir(parents=True, exist_ok=True)
            tmp_payload = entry_dir / "published.json.tmp"
            tmp_sig = entry_dir / "published.sig.tmp"
            tmp_payload.write_bytes(payload)
            tmp_sig.write_bytes(sig)
            # Signature first: a reader pairing old payload with the new
            # signature is impossible once the payload rename lands last,
            # and the in-memory pair below is what the server actually serves.
            tmp_sig.replace(entry_dir / "published.sig")
            tmp_payload.replace(entry_dir / "published.json")
            entry = _StoredEntry(draft_bytes=current.draft_bytes,
                                 published_pair=(payload, sig),
                                 updated_at=datetime.now(timezone.utc),
                                 author=current.author)
            self._set(mac, entry)
        return self.entry(mac)

    def get_ups_file(self, mac: str) -> tuple[bytes, bytes]:
        """The published (payload, signature) pair, read atomically."""
        mac = normalize_mac(mac)
        entry = self._get(mac)
        pair = entry.published_pair if entry else None
        if pair is None:
            raise NotFound(f"/ups/{mac_to_filename(mac)}")
        return pair

    def delete(self, mac: str) -> bool:
        mac = normalize_mac(mac)
        with self._lock_for(mac):
            with self._entries_lock:
                existed = self._entries.pop(mac, None) is not None
            entry_dir = self._entry_dir(mac)
            if entry_dir.exists():
                for name in ("draft.json", "published.json", "published.sig", "meta.json"):
                    try:
                        (entry_dir / name).unlink()
                    except FileNotFoundError:
                        pass
                try:
                    entry_dir.rmdir()
                except OSError:
                    pass
            return existed

    def entry(self, mac: str) -> Optional[PolicyEntry]:
        mac = normalize_mac(mac)
        stored = self._get(mac)
        if stored is None:
            return None
        draft = model.parse_mud_file(stored.draft_bytes) if stored.draft_bytes else None
        published = None
        if stored.published_pair is not None:
            payload, sig = stored.published_pair
            published = signature.SignedDocument(
                payload=payload, signature=sig, signer="ups",
                signed_at=stored.updated_at)
        return PolicyEntry(mac=mac, draft=draft, published=published,
                           updated_at=stored.updated_at, author=stored.author)

    def list_policies(self) -> list[PolicyEntry]:
        with self._entries_lock:
            macs = sorted(self._entries)
        return [e for e in (self.entry(mac) for mac in macs) if e is not None]


# --------------------------------------------------------------------------
# Configuration and the HTTP server.


@dataclass
class UpsConfig:
    store_dir: str = "ups-store"
    signing_key: str = "ups-key.pem"
    signing_cert: str = "ups-cert.pem"
    admin_token: str = ""
    listen_addr: str = "127.0.0.1:0"
    manager_status_url: Optional[str] = None
    ui_dir: Optional[str] = None
    merge_mode: Optional[str] = None  # unset: the manager's config applies


def load_ups_config(path: str | Path) -> UpsConfig:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip().strip('"')
    fields = set(UpsConfig.__dataclass_fields__)
    kwargs = {k: v for k, v in values.items() if k in fields}
    for key in values:
        if key not in fields:
            log.warning("unknown UPS config key %r ignored", key)
    return UpsConfig(**kwargs)


class UpsServer:
    """Binds the store to its public and admin HTTP surfaces."""

    def __init__(self, store: UpsStore, admin_token: str,
                 listen_addr: str = "127.0.0.1:0",
                 manager_status_url: Optional[str] = None,
                 ui_dir: Optional[str] = None,
                 merge_mode: Optional[str] = None,
                 response_delay: float = 0.0):
        self.store = store
        self.admin_token = admin_token
        self.manager_status_url = manager_status_url
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self._merge_mode = merge_mode
        self._settings_path = store.store_dir / "settings.json"
        self._load_settings()
        self.api = ApiServer(listen_addr, self._routes(),
                             response_delay=response_delay)

    # --- settings ---

    def _load_settings(self) -> None:
        try:
            data = json.loads(self._settings_path.read_text(encoding="utf-8"))
            if data.get("merge_mode") in ("union", "admin_priority"):
                self._merge_mode = data["merge_mode"]
        except (OSError, ValueError):
            pass

    def _save_settings(self) -> None:
        tmp = self._settings_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps({"merge_mode": self._merge_mode}), encoding="utf-8")
        tmp.replace(self._settings_path)

    @property
    def merge_mode(self) -> Optional[str]:
        """The administrator-chosen mode; None until one is set."""
        return self._merge_mode

    # --- server lifecycle ---

    def start(self) -> "UpsServer":
        self.api.start()
        return self

    def stop(self) -> None:
        self.api.stop()

    @property
    def base_url(self) -> str:
        host, port = self.api.httpd.server_address[:2]
        return f"http://{host}:{port}"

    # --- request handling ---

    def _authorized(self, handler) -> bool:
        header = handler.headers.get("Authorization", "")
        if header == f"Bearer {self.admin_token}" and self.admin_token:
            return True
        handler.send_json({"error": "unauthorized"}, status=401)
        return False

    def _routes(self):
        server = self

        def ups_file(handler, stem):
            try:
                payload, _ = server.store.get_ups_file(stem)
            except (NotFound, InvalidMac):
                handler.send_json({"error": "no published policy"}, status=404)
                return
            handler.send_bytes(payload, "application/json")

        def ups_sig(handler, stem):
            try:
                _, sig = server.store.get_ups_file(stem)
            except (NotFound, InvalidMac):
                handler.send_json({"error": "no published policy"}, status=404)
                return
            handler.send_bytes(sig, "application/pkcs7-signature")

        def ups_merge_mode(handler):
            handler.send_json({"merge_mode": server._merge_mode})

        def ui_config(handler):
            handler.send_json({"manager_status_url": server.manager_status_url})

        def admin_list(handler):
            if not server._authorized(handler):
                return
            handler.send_json([e.summary() for e in server.store.list_policies()])

        def admin_get(handler, mac):
            if not server._authorized(handler):
                return
            try:
                entry = server.store.entry(mac)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            if entry is None:
                handler.send_json({"error": "unknown device"}, status=404)
                return
            body = entry.summary()
            body["draft"] = (json.loads(model.canonicalize(entry.draft))
                             if entry.draft else None)
            handler.send_json(body)

        def admin_put(handler, mac):
            if not server._authorized(handler):
                return
            expected = handler.headers.get("If-Match")
            try:
                current = server.store.entry(mac)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            if expected and current is not None:
                actual = current.updated_at.strftime("%Y-%m-%dT%H:%M:%SZ")
                if expected != actual:
                    handler.send_json({"error": "stale draft", "updated_at": actual},
                                      status=409)
                    return
            author = handler.headers.get("X-Author", "admin")
            try:
                entry = server.store.put_policy(mac, handler.read_body(), author)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            except MudgateError as exc:
                handler.send_json({"error": str(exc)}, status=422)
                return
            handler.send_json(entry.summary())

        def admin_delete(handler, mac):
            if not server._authorized(handler):
                return
            try:
                existed = server.store.delete(mac)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            handler.send_json({"deleted": existed},
                              status=200 if existed else 404)

        def admin_publish(handler, mac):
            if not server._authorized(handler):
                return
            try:
                entry = server.store.publish(mac)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            except NoDraft as exc:
                handler.send_json({"error": str(exc)}, status=409)
                return
            except SigningFailure as exc:
                handler.send_json({"error": str(exc)}, status=500)
                return
            handler.send_json(entry.summary())

        def admin_conflicts(handler, mac):
            if not server._authorized(handler):
                return
            if not server.manager_status_url:
                handler.send_json({"error": "manager status URL not configured"},
                                  status=503)
                return
            try:
                mac = normalize_mac(mac)
            except InvalidMac:
                handler.send_json({"error": "bad mac"}, status=400)
                return
            url = f"{server.manager_status_url}/status/devices/{mac}/conflicts"
            try:
                resp = requests.get(url, timeout=5)
            except requests.RequestException as exc:
                handler.send_json({"error": f"manager unreachable: {exc}"}, status=502)
                return
            handler.send_bytes(resp.content, "application/json",
                               status=resp.status_code)

        def admin_get_merge_mode(handler):
            if not server._authorized(handler):
                return
            handler.send_json({"merge_mode": server._merge_mode})

        def admin_put_merge_mode(handler):
            if not server._authorized(handler):
                return
            try:
                body = json.loads(handler.read_body())
                mode = body["merge_mode"]
            except (ValueError, KeyError):
                handler.send_json({"error": "expected {\"merge_mode\": ...}"}, status=400)
                return
            if mode not in ("union", "admin_priority"):
                handler.send_json({"error": f"unknown merge mode {mode!r}"}, status=400)
                return
            server._merge_mode = mode
            server._save_settings()
            handler.send_json({"merge_mode": mode})

        def static_ui(handler, asset=""):
            if server.ui_dir is None:
                handler.send_json({"error": "no UI installed"}, status=404)
                return
            name = asset or "index.html"
            path = (server.ui_dir / name).resolve()
            if not str(path).startswith(str(server.ui_dir.resolve())) or not path.is_file():
                handler.send_json({"error": "not found"}, status=404)
                return
            types = {".html": "text/html; charset=utf-8",
                     ".js": "text/javascript; charset=utf-8",
                     ".css": "text/css; charset=utf-8",
                     ".map": "application/json"}
            handler.send_bytes(path.read_bytes(),
                               types.get(path.suffix, "application/octet-stream"))

        mac_pat = r"(?P<mac>[0-9a-fA-F:\-\.]+)"
        return [
            route("GET", r"/ui-config", ui_config),
            route("GET", r"/ups/merge-mode", ups_merge_mode),
            route("GET", r"/ups/(?P<stem>[0-9a-fA-F]+)\.json", ups_file),
            route("GET", r"/ups/(?P<stem>[0-9a-fA-F]+)\.sig", ups_sig),
            route("GET", r"/admin/policies", admin_list),
            route("GET", rf"/admin/policies/{mac_pat}", admin_get),
            route("PUT", rf"/admin/policies/{mac_pat}", admin_put),
            route("DELETE", rf"/admin/policies/{mac_pat}", admin_delete),
            route("POST", rf"/admin/policies/{mac_pat}/publish", admin_publish),
            route("GET", rf"/admin/conflicts/{mac_pat}", admin_conflicts),
            route("GET", r"/admin/settings/merge-mode", admin_get_merge_mode),
            route("PUT", r"/admin/settings/merge-mode", admin_put_merge_mode),
            route("GET", r"/", static_ui),
            route("GET", r"/(?P<asset>[A-Za-z0-9_\-./]+)", static_ui),
        ]
