import pytest

from blockpipe import config as cfg
from blockpipe.errors import ConfigError
from blockpipe.identity import Role

YAML_DOC = """
key_seed: 11
orgs:
  - name: Org1
    orderers: 1
    peers: 2
    clients: 1
  - name: Org2
    peers: 1
chaincodes:
  - cc_id: 1
    policy: "Org1 & Org2"
  - cc_id: 2
    policy: "2-outof-2 orgs"
pipeline:
  lanes: 6
  engines_per_vscc: 3
  synthetic_delay_us: 500
protocol:
  port: 6111
  max_frame: 4096
  reassembly_deadline_ms: 100
  cert_size: 512
workload:
  block_size: 32
  total_txs: 128
  accounts: 256
statedb:
  capacity: 1024
results:
  mailbox_depth: 2
"""


@pytest.fixture
def yaml_path(tmp_path):
    path = tmp_path / "net.yaml"
    path.write_text(YAML_DOC)
    return path


def test_load_config_full(yaml_path):
    config = cfg.load_config(yaml_path)
    assert [org.name for org in config.orgs] == ["Org1", "Org2"]
    assert len(config.org("Org1").nodes) == 4
    assert config.org("Org2").node(Role.PEER, 0).encoded_id == 0x0120
    assert config.pipeline.tx_validators == 6
    assert config.pipeline.engines_per_vscc == 3
    assert config.pipeline.synthetic_delay == pytest.approx(500e-6)
    assert config.protocol.port == 6111
    assert config.protocol.reassembly_deadline == pytest.approx(0.1)
    assert config.protocol.cert_size == 512
    assert config.workload.block_size == 32
    assert config.statedb_capacity == 1024
    assert config.mailbox_depth == 2
    assert set(config.chaincodes) == {1, 2}


def test_cert_size_applies_to_all_nodes(yaml_path):
    config = cfg.load_config(yaml_path)
    for org in config.orgs:
        for node in org.nodes:
            assert len(node.cert_bytes) == 512


def test_same_seed_same_keys(yaml_path):
    a = cfg.load_config(yaml_path)
    b = cfg.load_config(yaml_path)
    assert a.org("Org1").nodes[0].cert_bytes == b.org("Org1").nodes[0].cert_bytes


def test_cache_contains_every_node(yaml_path):
    config = cfg.load_config(yaml_path)
    cache = config.build_cache()
    assert len(cache) == sum(len(org.nodes) for org in config.orgs)


def test_dump_load_roundtrip(tmp_path, net):
    path = tmp_path / "out.yaml"
    cfg.dump_config(net, path)
    loaded = cfg.load_config(path)
    assert loaded.org_names == net.org_names
    assert loaded.chaincodes == net.chaincodes
    assert loaded.orderer_node().cert_bytes == net.orderer_node().cert_bytes


def test_bad_policy_rejected_at_load(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(
        "orgs:\n  - name: Org1\n    peers: 1\nchaincodes:\n  - cc_id: 1\n    policy: 'Org7'\n"
    )
    with pytest.raises(ConfigError):
        cfg.load_config(path)


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(
        "orgs:\n  - name: Org1\n    peers: 1\nchaincodes:\n  - cc_id: 1\n    policy: 'Org1'\n"
        "workload:\n  no_such_knob: 3\n"
    )
    with pytest.raises(ConfigError):
        cfg.load_config(path)


def test_compiled_policies_cover_chaincodes(net):
    compiled = net.compiled_policies()
    assert set(compiled) == set(net.chaincodes)
    assert compiled[1].cc_id == 1
