from dataclasses import replace

import pytest

from blockpipe import blockmodel, oracle, workload
from blockpipe import config as cfg
from blockpipe.errors import ConfigError
from blockpipe.pipeline import TxFlag

from test_pipeline import replace_config


def stream_bytes(net, count=3):
    gen = workload.WorkloadGenerator(net)
    return [blockmodel.encode_baseline(b) for b in gen.blocks(count=count, sizes=[5] * count)]


def test_same_seed_byte_identical_streams(net):
    assert stream_bytes(net) == stream_bytes(net)


def test_different_seed_differs(net):
    settings = replace(net.workload, seed=net.workload.seed + 1)
    assert stream_bytes(net) != stream_bytes(replace_config(net, settings))


def test_fake_signature_mode_deterministic_and_decodable(net):
    from blockpipe import identity

    settings = replace(net.workload, fake_signatures=True)
    net_fake = replace_config(net, settings)
    blocks = list(workload.WorkloadGenerator(net_fake).blocks(count=1, sizes=[4]))
    for tx in blocks[0].transactions:
        identity.der_decode_signature(tx.signature)
        for end in tx.endorsements:
            identity.der_decode_signature(end.signature)
    assert stream_bytes(net_fake) == stream_bytes(net_fake)


def test_honest_stream_validates_clean(net):
    gen = workload.WorkloadGenerator(net)
    blocks = list(gen.blocks(count=4, sizes=[10, 10, 10, 10]))
    results, _, _ = oracle.validate_stream(blocks, net.policy_asts())
    for result in results:
        assert result.block_valid
        assert all(flag is TxFlag.VALID for flag in result.flags)


def test_injection_rates_produce_expected_flags(net):
    settings = replace(
        net.workload, invalid_sig_rate=0.25, invalid_policy_rate=0.25, conflict_rate=0.3, seed=21
    )
    net_adv = replace_config(net, settings)
    blocks = list(workload.WorkloadGenerator(net_adv).blocks(count=4, sizes=[20, 20, 20, 20]))
    results, _, _ = oracle.validate_stream(blocks, net_adv.policy_asts())
    flags = [flag for result in results for flag in result.flags]
    assert flags.count(TxFlag.INVALID_SIG) > 0
    assert flags.count(TxFlag.INVALID_POLICY) > 0
    assert flags.count(TxFlag.INVALID_MVCC) > 0
    assert flags.count(TxFlag.VALID) > 0


def test_split_writes_variant(net):
    settings = replace(net.workload, split_writes=4)
    blocks = list(workload.WorkloadGenerator(replace_config(net, settings)).blocks(count=1, sizes=[6]))
    for tx in blocks[0].transactions:
        assert len(tx.write_set) == 4


def test_drm_profile_has_single_read_write(net):
    settings = replace(net.workload, profile="drm")
    blocks = list(workload.WorkloadGenerator(replace_config(net, settings)).blocks(count=1, sizes=[6]))
    for tx in blocks[0].transactions:
        assert len(tx.read_set) == 1
        assert len(tx.write_set) == 1


def test_ends_derived_from_policy(net):
    net3 = cfg.default_config(num_orgs=3, chaincodes={1: "2-outof-3 orgs"})
    blocks = list(workload.WorkloadGenerator(net3).blocks(count=1, sizes=[3]))
    for tx in blocks[0].transactions:
        assert len(tx.endorsements) == 3  # one per org the policy names


def test_keyspace_capacity_guard(net):
    settings = replace(net.workload, accounts=20000)
    with pytest.raises(ConfigError):
        workload.WorkloadGenerator(replace_config(net, settings))


def test_block_numbers_and_chain(net):
    gen = workload.WorkloadGenerator(net)
    blocks = list(gen.blocks(count=3, sizes=[2, 2, 2]))
    assert [b.number for b in blocks] == [1, 2, 3]
    assert blocks[0].header.prev_hash == blockmodel.ZERO_HASH
    assert blocks[1].header.prev_hash == blockmodel.block_digest_of(blocks[0])
    assert blocks[2].header.prev_hash == blockmodel.block_digest_of(blocks[1])


def test_total_txs_plan(net):
    settings = replace(net.workload, total_txs=340, block_size=150)
    gen = workload.WorkloadGenerator(replace_config(net, settings))
    sizes = [len(b.transactions) for b in gen.blocks()]
    assert sizes == [150, 150, 40]
