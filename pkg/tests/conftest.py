import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mudgate import signature


@pytest.fixture(scope="session")
def mfr_identity():
    """(key, cert) of the manufacturer file server."""
    return signature.make_self_signed("acme-manufacturer")


@pytest.fixture(scope="session")
def ups_identity():
    """(key, cert) of the user policy server."""
    return signature.make_self_signed("home-ups")


@pytest.fixture(scope="session")
def rogue_identity():
    """(key, cert) nobody trusts."""
    return signature.make_self_signed("rogue")


@pytest.fixture(scope="session")
def anchor_dir(tmp_path_factory, mfr_identity, ups_identity):
    d = tmp_path_factory.mktemp("anchors")
    signature.write_anchor_store(d, {
        "acme": ("manufacturer", mfr_identity[1]),
        "home-ups": ("ups", ups_identity[1]),
    })
    return d


@pytest.fixture(scope="session")
def anchors(anchor_dir):
    return signature.AnchorStore(anchor_dir)
