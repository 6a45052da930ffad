"""mudgate: a desk-scale MUD network control plane.

Device MUD files are fetched, signature-verified, compiled to per-device
firewall rules and enforced by a simulated backend; a local User Policy
Server lets administrators overlay their own per-device policy, merged with
the manufacturer profile under a configurable mode.
"""

__version__ = "0.1.0"
