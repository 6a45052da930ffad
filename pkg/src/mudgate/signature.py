"""Detached-signature creation and verification for MUD and UPS files.

Signatures are DER-encoded CMS/PKCS#7 detached SignedData. Creation uses the
cryptography package; verification walks the DER structure directly (no CMS
verifier is exposed by the library), checks the messageDigest signed
attribute against the payload, and verifies the signer's signature with a
configured trust anchor's public key.

Verification distinguishes a cryptographically bad signature from a good
signature under an anchor whose validity window has lapsed, so callers can
keep enforcing existing rules while a refreshed file is fetched.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Optional

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa
from cryptography.hazmat.primitives.serialization import pkcs7
from cryptography.x509.oid import NameOID

from .errors import (
    AnchorExpired,
    KeyMismatch,
    NoMatchingAnchor,
    RoleMismatch,
    SignatureInvalid,
)

ROLE_MANUFACTURER = "manufacturer"
ROLE_UPS = "ups"
ROLES = (ROLE_MANUFACTURER, ROLE_UPS)

_OID_SIGNED_DATA = bytes.fromhex("2a864886f70d010702")   # 1.2.840.113549.1.7.2
_OID_MESSAGE_DIGEST = bytes.fromhex("2a864886f70d010904")  # 1.2.840.113549.1.9.4
_DIGESTS = {
    bytes.fromhex("608648016503040201"): hashlib.sha256,  # 2.16.840.1.101.3.4.2.1
    bytes.fromhex("608648016503040202"): hashlib.sha384,
    bytes.fromhex("608648016503040203"): hashlib.sha512,
}
_HASHES = {
    hashlib.sha256: hashes.SHA256,
    hashlib.sha384: hashes.SHA384,
    hashlib.sha512: hashes.SHA512,
}


@dataclass(frozen=True)
class TrustAnchor:
    """A named certificate trusted to sign files of one role."""

    name: str
    role: str  # manufacturer | ups
    certificate: x509.Certificate

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown anchor role {self.role!r}")

    @property
    def not_before(self) -> datetime:
        return self.certificate.not_valid_before_utc

    @property
    def not_after(self) -> datetime:
        return self.certificate.not_valid_after_utc

    def window_contains(self, now: datetime) -> bool:
        return self.not_before <= now <= self.not_after


@dataclass(frozen=True)
class SignedDocument:
    """A payload whose detached signature verified under a trust anchor."""

    payload: bytes
    signature: bytes
    signer: str  # anchor name
    signed_at: datetime


def _keys_pair(key, cert: x509.Certificate) -> bool:
    return key.public_key().public_numbers() == cert.public_key().public_numbers()


def sign(payload: bytes, signing_key, cert: x509.Certificate) -> bytes:
    """Produce a DER CMS detached SignedData over exactly the payload bytes."""
    if not payload:
        raise ValueError("refusing to sign an empty payload")
    if not _keys_pair(signing_key, cert):
        raise KeyMismatch("signing key does not pair with the certificate")
    return (
        pkcs7.PKCS7SignatureBuilder()
        .set_data(payload)
        .add_signer(cert, signing_key, hashes.SHA256())
        # Binary: sign the payload bytes exactly, no SMIME text canonicalization.
        .sign(serialization.Encoding.DER, [pkcs7.PKCS7Options.DetachedSignature,
                                           pkcs7.PKCS7Options.Binary])
    )


# --------------------------------------------------------------------------
# Minimal DER reader, just enough to walk a SignedData structure.


class _DerError(Exception):
    pass


def _der_read(buf: bytes, off: int) -> tuple[int, bytes, bytes, int]:
    """Read one TLV; returns (tag, content, raw including header, next offset)."""
    try:
        start = off
        tag = buf[off]
        off += 1
        length = buf[off]
        off += 1
        if length & 0x80:
            n = length & 0x7F
            if n == 0 or n > 4:
                raise _DerError("unsupported DER length form")
            length = int.from_bytes(buf[off:off + n], "big")
            off += n
        if off + length > len(buf):
            raise _DerError("DER value extends past buffer")
        return tag, buf[off:off + length], buf[start:off + length], off + length
    except IndexError as exc:
        raise _DerError("truncated DER structure") from exc


def _der_children(content: bytes) -> list[tuple[int, bytes, bytes]]:
    out = []
    off = 0
    while off < len(content):
        tag, body, raw, off = _der_read(content, off)
        out.append((tag, body, raw))
    return out


@dataclass(frozen=True)
class _SignerInfo:
    issuer_der: bytes
    serial: int
    digest: "callable"
    signed_attrs_raw: Optional[bytes]  # raw TLV with the IMPLICIT [0] tag
    message_digest: Optional[bytes]
    signature: bytes


def _parse_signed_data(signature_der: bytes) -> list[_SignerInfo]:
    tag, content_info, _, _ = _der_read(signature_der, 0)
    if tag != 0x30:
        raise _DerError("ContentInfo is not a SEQUENCE")
    kids = _der_children(content_info)
    if len(kids) < 2 or kids[0][0] != 0x06 or kids[0][1] != _OID_SIGNED_DATA:
        raise _DerError("not a CMS SignedData document")
    tag, signed_data_raw, _, _ = _der_read(kids[1][2], 0)  # [0] EXPLICIT
    if tag != 0xA0:
        raise _DerError("missing explicit content wrapper")
    tag, signed_data, _, _ = _der_read(signed_data_raw, 0)
    if tag != 0x30:
        raise _DerError("SignedData is not a SEQUENCE")
    sets = [k for k in _der_children(signed_data) if k[0] == 0x31]
    if not sets:
        raise _DerError("SignedData carries no signerInfos")
    signer_infos = sets[-1][1]  # digestAlgorithms is the first SET, signerInfos the last

    out = []
    for tag, si_body, _ in _der_children(signer_infos):
        if tag != 0x30:
            raise _DerError("SignerInfo is not a SEQUENCE")
        fields = _der_children(si_body)
        if len(fields) < 5:
            raise _DerError("SignerInfo too short")
        sid_tag, sid_body, _ = fields[1]
        if sid_tag != 0x30:
            raise _DerError("only issuerAndSerialNumber signer ids are supported")
        sid_kids = _der_children(sid_body)
        issuer_der = sid_kids[0][2]
        serial = int.from_bytes(sid_kids[1][1], "big", signed=True)
        digest_oid = _der_children(fields[2][1])[0][1]
        digest = _DIGESTS.get(digest_oid)
        if digest is None:
            raise _DerError(f"unsupported digest algorithm {digest_oid.hex()}")
        idx = 3
        signed_attrs_raw = None
        message_digest = None
        if fields[idx][0] == 0xA0:
            signed_attrs_raw = fields[idx][2]
            for attr_tag, attr_body, _ in _der_children(fields[idx][1]):
                attr_kids = _der_children(attr_body)
                if attr_kids and attr_kids[0][1] == _OID_MESSAGE_DIGEST:
                    values = _der_children(attr_kids[1][1])
                    if values:
                        message_digest = values[0][1]
            idx += 1
        idx += 1  # signatureAlgorithm
        sig_tag, sig_body, _ = fields[idx]
        if sig_tag != 0x04:
            raise _DerError("signature is not an OCTET STRING")
        out.append(_SignerInfo(issuer_der=issuer_der, serial=serial, digest=digest,
                               signed_attrs_raw=signed_attrs_raw,
                               message_digest=message_digest, signature=sig_body))
    return out


def _verify_with_key(public_key, signature: bytes, message: bytes, digest) -> None:
    algo = _HASHES[digest]()
    if isinstance(public_key, ec.EllipticCurvePublicKey):
        public_key.verify(signature, message, ec.ECDSA(algo))
    elif isinstance(public_key, rsa.RSAPublicKey):
        public_key.verify(signature, message, padding.PKCS1v15(), algo)
    else:
        raise SignatureInvalid(f"unsupported key type {type(public_key).__name__}")


def _check_signer(info: _SignerInfo, payload: bytes, cert: x509.Certificate) -> None:
    """Raise SignatureInvalid unless info's signature over payload is good."""
    if info.signed_attrs_raw is not None:
        if info.message_digest is None:
            raise SignatureInvalid("signed attributes lack a messageDigest")
        if info.message_digest != info.digest(payload).digest():
            raise SignatureInvalid("payload digest does not match messageDigest")
        # The attrs are signed as SET OF (0x31), not with the IMPLICIT [0] tag.
        message = b"\x31" + info.signed_attrs_raw[1:]
    else:
        message = payload
    try:
        _verify_with_key(cert.public_key(), info.signature, message, info.digest)
    except InvalidSignature as exc:
        raise SignatureInvalid("signature verification failed") from exc


def verify(payload: bytes, signature: bytes, anchors: Iterable[TrustAnchor],
           now: datetime, expected_role: str) -> SignedDocument:
    """Verify a detached signature against the anchor set.

    Succeeds iff the signature validates under some anchor whose role equals
    expected_role and whose validity window contains now. Error precedence:
    a cryptographically bad signature is always SignatureInvalid; a good one
    under a wrong-role anchor raises RoleMismatch; a good one under a lapsed
    anchor raises AnchorExpired.
    """
    if expected_role not in ROLES:
        raise ValueError(f"unknown expected role {expected_role!r}")
    try:
        signer_infos = _parse_signed_data(signature)
    except _DerError as exc:
        raise SignatureInvalid(f"malformed signature document: {exc}") from exc

    candidates = []
    for anchor in anchors:
        cert = anchor.certificate
        issuer_der = cert.issuer.public_bytes()
        for info in signer_infos:
            if info.issuer_der == issuer_der and info.serial == cert.serial_number:
                candidates.append((anchor, info))
    if not candidates:
        raise NoMatchingAnchor("no configured anchor matches the document signer")

    last_error: Exception = SignatureInvalid("signature verification failed")
    for anchor, info in candidates:
        try:
            _check_signer(info, payload, anchor.certificate)
        except SignatureInvalid as exc:
            last_error = exc
            continue
        if anchor.role != expected_role:
            last_error = RoleMismatch(
                f"anchor {anchor.name!r} has role {anchor.role}, expected {expected_role}")
            continue
        if not anchor.window_contains(now):
            last_error = AnchorExpired(
                f"anchor {anchor.name!r} validity window excludes {now.isoformat()}")
            continue
        return SignedDocument(payload=payload, signature=signature,
                              signer=anchor.name, signed_at=now)
    raise last_error


# --------------------------------------------------------------------------
# Anchor store: directory of PEM certificates plus a manifest mapping
# name -> {role, cert file}. Reloaded when the manifest changes; readers
# always see a complete snapshot.


class AnchorStore:
    MANIFEST = "anchors.json"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()
        self._snapshot: tuple[TrustAnchor, ...] = ()
        self._loaded_mtime: Optional[float] = None
        self.reload()

    def _manifest_path(self) -> Path:
        return self.directory / self.MANIFEST

    def reload(self) -> None:
        manifest_path = self._manifest_path()
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        anchors = []
        for name, entry in sorted(manifest.items()):
            pem = (self.directory / entry["cert"]).read_bytes()
            cert = x509.load_pem_x509_certificate(pem)
            anchors.append(TrustAnchor(name=name, role=entry["role"], certificate=cert))
        with self._lock:
            self._snapshot = tuple(anchors)
            self._loaded_mtime = os.stat(manifest_path).st_mtime

    def snapshot(self) -> tuple[TrustAnchor, ...]:
        """Current anchors, reloading first if the manifest changed on disk."""
        try:
            mtime = os.stat(self._manifest_path()).st_mtime
        except FileNotFoundError:
            mtime = None
        if mtime is not None and mtime != self._loaded_mtime:
            self.reload()
        with self._lock:
            return self._snapshot

    def for_role(self, role: str) -> tuple[TrustAnchor, ...]:
        return tuple(a for a in self.snapshot() if a.role == role)


def write_anchor_store(directory: str | Path,
                       anchors: dict[str, tuple[str, x509.Certificate]]) -> None:
    """Write certificates plus manifest for an AnchorStore.

    anchors maps name -> (role, certificate).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, (role, cert) in anchors.items():
        filename = f"{name}.pem"
        (directory / filename).write_bytes(
            cert.public_bytes(serialization.Encoding.PEM))
        manifest[name] = {"role": role, "cert": filename}
    tmp = directory / (AnchorStore.MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    tmp.replace(directory / AnchorStore.MANIFEST)


def make_self_signed(common_name: str, not_before: Optional[datetime] = None,
                     not_after: Optional[datetime] = None,
                     san_dns: Optional[list[str]] = None,
                     san_ips: Optional[list[str]] = None):
    """Generate an EC P-256 key and self-signed certificate (desk-scale PKI).

    SANs are only needed when the certificate fronts a TLS listener.
    """
    import ipaddress

    key = ec.generate_private_key(ec.SECP256R1())
    now = datetime.now(timezone.utc).replace(microsecond=0)
    not_before = not_before or (now - timedelta(days=1))
    not_after = not_after or (now + timedelta(days=365))
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
    builder = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
        .add_extension(x509.BasicConstraints(ca=True, path_length=None), critical=True)
    )
    sans = [x509.DNSName(d) for d in (san_dns or [])]
    sans += [x509.IPAddress(ipaddress.ip_address(ip)) for ip in (san_ips or [])]
    if sans:
        builder = builder.add_extension(x509.SubjectAlternativeName(sans),
                                        critical=False)
    return key, builder.sign(key, hashes.SHA256())


def load_private_key(path: str | Path):
    return serialization.load_pem_private_key(Path(path).read_bytes(), password=None)


def load_certificate(path: str | Path) -> x509.Certificate:
    return x509.load_pem_x509_certificate(Path(path).read_bytes())


def save_private_key(key, path: str | Path) -> None:
    Path(path).write_bytes(key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption()))


def save_certificate(cert: x509.Certificate, path: str | Path) -> None:
    Path(path).write_bytes(cert.public_bytes(serialization.Encoding.PEM))
