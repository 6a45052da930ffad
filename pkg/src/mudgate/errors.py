"""Exception types shared across the mudgate package."""


class MudgateError(Exception):
    """Base class for all mudgate errors."""


# --- MUD/UPS file model ---

class MalformedDocument(MudgateError):
    """Input is not valid JSON text."""


class SchemaViolation(MudgateError):
    """Missing mandatory node, bad cardinality or out-of-range value."""


class UnsupportedVersion(MudgateError):
    """mud-version is not a version this implementation understands."""


class DanglingAclReference(MudgateError):
    """A policy references an ACL name absent from the acls container."""


class UnsupportedSelector(MudgateError):
    """Match selector outside the supported subset (manufacturer/model)."""


class InvalidMac(MudgateError):
    """MAC address is not six hex octets."""


class InvalidUrl(MudgateError):
    """URL violates the MUD URL constraints (https, no fragment, length)."""


# --- DHCP extraction ---

class TruncatedPacket(MudgateError):
    """Packet shorter than the fixed BOOTP header plus magic cookie."""


class BadMagicCookie(MudgateError):
    """Options do not start with the DHCP magic cookie."""


class MalformedOption(MudgateError):
    """Option length field exceeds the remaining packet bytes."""


class MalformedEvent(MudgateError):
    """Join-event line is not a valid event object."""


# --- Signatures ---

class SignatureError(MudgateError):
    """Base class for signature creation/verification failures."""


class KeyMismatch(SignatureError):
    """Signing key does not pair with the supplied certificate."""


class SignatureInvalid(SignatureError):
    """Cryptographic verification failed (tampered payload or bad signature)."""


class NoMatchingAnchor(SignatureError):
    """No configured trust anchor matches the signer of the document."""


class AnchorExpired(SignatureError):
    """Signature is valid but the anchor validity window excludes now."""


class RoleMismatch(SignatureError):
    """Signature is valid but the anchor role does not match the source."""


# --- Merge engine ---

class MixedDevice(MudgateError):
    """Rule lists passed to merge belong to different devices."""


# --- Fetching ---

class FetchFailure(MudgateError):
    """Base class for MUD/UPS file retrieval failures."""


class FetchTimeout(FetchFailure):
    """Request exceeded the configured timeout budget."""


class HttpError(FetchFailure):
    """Server answered with a non-success status."""

    def __init__(self, status: int, url: str):
        super().__init__(f"HTTP {status} for {url}")
        self.status = status
        self.url = url


class NotFound(HttpError):
    """404, kept distinct so an absent UPS file is a normal outcome."""

    def __init__(self, url: str):
        super().__init__(404, url)


# --- UPS server ---

class NoDraft(MudgateError):
    """Publish requested for a MAC with no stored draft."""


class SigningFailure(MudgateError):
    """UPS signing key unavailable or signing failed."""


# --- Benchmark harness ---

class HarnessStartupFailure(MudgateError):
    """Stub servers or manager failed to come up."""
