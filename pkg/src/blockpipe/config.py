"""Network configuration: organizations, deterministic node keys and
certificates, chaincode policies, and the runtime knobs for the protocol,
pipeline, store, and workload. Loadable from YAML (schema in docs/config.md)
or built programmatically."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import yaml
from cryptography.hazmat.primitives.asymmetric import ec

from . import identity
from .errors import ConfigError
from .identity import DEFAULT_CERT_SIZE, Certificate, IdentityCache, Role, encode_id
from .pipeline import PipelineConfig
from .policy import CompiledPolicy, PolicyExpr, compile_policy, parse_policy
from .receiver import DEFAULT_REASSEMBLY_DEADLINE
from .statedb import DEFAULT_CAPACITY
from .wire import DEFAULT_MAX_FRAME, DEFAULT_PORT

# Order of the group-count keys in YAML org entries.
_ROLE_KEYS = (("orderers", Role.ORDERER), ("admins", Role.ADMIN), ("peers", Role.PEER), ("clients", Role.CLIENT))

_P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


@dataclass
class NodeConfig:
    org_name: str
    org_index: int
    role: Role
    seq: int
    private_key: ec.EllipticCurvePrivateKey
    cert_bytes: bytes

    @property
    def encoded_id(self) -> int:
        return encode_id(self.org_index, self.role, self.seq)


@dataclass
class OrgConfig:
    name: str
    index: int
    nodes: list[NodeConfig] = field(default_factory=list)

    def node(self, role: Role, seq: int = 0) -> NodeConfig:
        for node in self.nodes:
            if node.role == role and node.seq == seq:
                return node
        raise ConfigError(f"{self.name} has no {role.name.lower()}{seq}")


@dataclass
class ProtocolSettings:
    port: int = DEFAULT_PORT
    max_frame: int = DEFAULT_MAX_FRAME
    reassembly_deadline: float = DEFAULT_REASSEMBLY_DEADLINE
    cert_size: int = DEFAULT_CERT_SIZE


@dataclass
class WorkloadSettings:
    profile: str = "smallbank"  # or "drm"
    block_size: int = 150
    total_txs: int = 15000
    ends_per_tx: int = 0  # 0 = one endorsement per org the policy names
    accounts: int = 1024
    reads_min: int = 1
    reads_max: int = 2
    writes_min: int = 1
    writes_max: int = 2
    value_size: int = 128
    split_writes: int = 0  # >0 fixes writes per tx (split-payment variant)
    invalid_sig_rate: float = 0.0
    invalid_policy_rate: float = 0.0
    conflict_rate: float = 0.0
    seed: int = 42
    fake_signatures: bool = False
    start_block: int = 1


@dataclass
class NetworkConfig:
    orgs: list[OrgConfig]
    chaincodes: dict[int, str]
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    protocol: ProtocolSettings = field(default_factory=ProtocolSettings)
    workload: WorkloadSettings = field(default_factory=WorkloadSettings)
    statedb_capacity: int = DEFAULT_CAPACITY
    mailbox_depth: int = 1
    key_seed: int = 7

    @property
    def org_names(self) -> list[str]:
        return [org.name for org in self.orgs]

    @property
    def org_indices(self) -> dict[str, int]:
        return {org.name: org.index for org in self.orgs}

    def org(self, name: str) -> OrgConfig:
        for org in self.orgs:
            if org.name == name:
                return org
        raise ConfigError(f"unknown organization {name!r}")

    def orderer_node(self) -> NodeConfig:
        for org in self.orgs:
            for node in org.nodes:
                if node.role == Role.ORDERER:
                    return node
        raise ConfigError("no orderer node configured")

    def client_nodes(self) -> list[NodeConfig]:
        nodes = [n for org in self.orgs for n in org.nodes if n.role == Role.CLIENT]
        if not nodes:
            raise ConfigError("no client nodes configured")
        return nodes

    def endorser_node(self, org_index: int) -> NodeConfig:
        return self.orgs[org_index].node(Role.PEER, 0)

    def build_cache(self) -> IdentityCache:
        """Identity cache preloaded with every configured node — the
        synchronized initialization shared by sender and receiver."""
        cache = IdentityCache(self.org_indices)
        for org in self.orgs:
            for node in org.nodes:
                cache.insert(node.encoded_id, node.cert_bytes)
        return cache

    def policy_asts(self) -> dict[int, PolicyExpr]:
        names = self.org_names
        return {cc_id: parse_policy(text, names) for cc_id, text in self.chaincodes.items()}

    def compiled_policies(self) -> dict[int, CompiledPolicy]:
        indices = self.org_indices
        return {cc_id: compile_policy(cc_id, expr, indices) for cc_id, expr in self.policy_asts().items()}


def _derive_key(key_seed: int, org_name: str, role: Role, seq: int) -> ec.EllipticCurvePrivateKey:
    material = f"key:{key_seed}:{org_name}:{role.name}:{seq}".encode()
    scalar = int.from_bytes(hashlib.sha256(material).digest(), "big") % (_P256_ORDER - 1) + 1
    return identity.derive_private_key(scalar)


def _build_org(name: str, index: int, counts: dict[Role, int], key_seed: int, cert_size: int) -> OrgConfig:
    org = OrgConfig(name, index)
    for role, count in counts.items():
        if count > 16:
            raise ConfigError(f"{name}: at most 16 {role.name.lower()} nodes fit the id layout")
        for seq in range(count):
            key = _derive_key(key_seed, name, role, seq)
            cert = Certificate(name, role, seq, identity.public_key_bytes(key)).to_bytes(cert_size)
            org.nodes.append(NodeConfig(name, index, role, seq, key, cert))
    return org


def make_network(
    org_specs: list[tuple[str, dict[Role, int]]],
    chaincodes: dict[int, str],
    key_seed: int = 7,
    cert_size: int = DEFAULT_CERT_SIZE,
    **overrides,
) -> NetworkConfig:
    if len(org_specs) > 256:
        raise ConfigError("at most 256 organizations fit the id layout")
    orgs = [_build_org(name, i, counts, key_seed, cert_size) for i, (name, counts) in enumerate(org_specs)]
    config = NetworkConfig(orgs, dict(chaincodes), key_seed=key_seed, **overrides)
    config.protocol.cert_size = cert_size
    # Fail early on bad policy text.
    config.policy_asts()
    return config


def default_config(
    num_orgs: int = 4,
    chaincodes: Optional[dict[int, str]] = None,
    cert_size: int = DEFAULT_CERT_SIZE,
    key_seed: int = 7,
) -> NetworkConfig:
    """Four orgs with a peer and client each, an orderer in the first org, and
    a 2-outof-2 default policy."""
    specs = []
    for i in range(num_orgs):
        counts = {Role.PEER: 1, Role.CLIENT: 1}
        if i == 0:
            counts[Role.ORDERER] = 1
        specs.append((f"Org{i + 1}", counts))
    if chaincodes is None:
        chaincodes = {1: "2-outof-2 orgs"}
    return make_network(specs, chaincodes, key_seed=key_seed, cert_size=cert_size)


def _settings(cls, mapping: dict, **renames):
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for key, value in mapping.items():
        name = renames.get(key, key)
        if name not in known:
            raise ConfigError(f"unknown {cls.__name__} key {key!r}")
        kwargs[name] = value
    return cls(**kwargs)


def load_config(path) -> NetworkConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}

    key_seed = raw.get("key_seed", 7)
    protocol_raw = dict(raw.get("protocol", {}))
    if "reassembly_deadline_ms" in protocol_raw:
        protocol_raw["reassembly_deadline"] = protocol_raw.pop("reassembly_deadline_ms") / 1000.0
    protocol = _settings(ProtocolSettings, protocol_raw)

    org_specs = []
    for entry in raw.get("orgs", []):
        counts = {role: entry.get(key, 0) for key, role in _ROLE_KEYS}
        org_specs.append((entry["name"], {r: c for r, c in counts.items() if c}))
    if not org_specs:
        raise ConfigError("config defines no organizations")

    chaincodes = {}
    for entry in raw.get("chaincodes", []):
        chaincodes[int(entry["cc_id"])] = entry["policy"]
    if not chaincodes:
        raise ConfigError("config defines no chaincodes")

    pipeline_raw = dict(raw.get("pipeline", {}))
    if "synthetic_delay_us" in pipeline_raw:
        delay_us = pipeline_raw.pop("synthetic_delay_us")
        pipeline_raw["synthetic_delay"] = delay_us / 1e6 if delay_us else None
    if "lanes" in pipeline_raw:
        pipeline_raw["tx_validators"] = pipeline_raw.pop("lanes")
    pipeline = _settings(PipelineConfig, pipeline_raw)

    workload = _settings(WorkloadSettings, dict(raw.get("workload", {})))
    statedb_capacity = raw.get("statedb", {}).get("capacity", DEFAULT_CAPACITY)
    mailbox_depth = raw.get("results", {}).get("mailbox_depth", 1)

    config = make_network(
        org_specs,
        chaincodes,
        key_seed=key_seed,
        cert_size=protocol.cert_size,
        pipeline=pipeline,
        workload=workload,
        statedb_capacity=statedb_capacity,
        mailbox_depth=mailbox_depth,
    )
    config.protocol = protocol
    return config


def dump_config(config: NetworkConfig, path) -> None:
    """Write the YAML form of a config (keys are re-derived from key_seed on load)."""
    raw = {
        "key_seed": config.key_seed,
        "orgs": [
            {
                "name": org.name,
                **{
                    key: sum(1 for n in org.nodes if n.role == role)
                    for key, role in _ROLE_KEYS
                    if any(n.role == role for n in org.nodes)
                },
            }
            for org in config.orgs
        ],
        "chaincodes": [{"cc_id": cc_id, "policy": text} for cc_id, text in config.chaincodes.items()],
        "pipeline": {
            "lanes": config.pipeline.tx_validators,
            "engines_per_vscc": config.pipeline.engines_per_vscc,
            "synthetic_delay_us": int((config.pipeline.synthetic_delay or 0) * 1e6),
        },
        "protocol": {
            "port": config.protocol.port,
            "max_frame": config.protocol.max_frame,
            "reassembly_deadline_ms": int(config.protocol.reassembly_deadline * 1000),
            "cert_size": config.protocol.cert_size,
        },
        "workload": {k: v for k, v in config.workload.__dict__.items()},
        "statedb": {"capacity": config.statedb_capacity},
        "results": {"mailbox_depth": config.mailbox_depth},
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(raw, fh, sort_keys=False)
