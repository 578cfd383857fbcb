import pytest

from blockpipe import config as cfg


@pytest.fixture(scope="session")
def net():
    """Four orgs (peer + client each), an orderer in Org1, 2-outof-2 policy."""
    return cfg.default_config()


@pytest.fixture
def cache(net):
    return net.build_cache()
