"""blockpipe: UDP block dissemination with identity deduplication plus a
configurable parallel-pipelined block validation engine (signature
verification, endorsement policies with stop-on-satisfied scheduling, MVCC,
versioned key-value commit) and a benchmark harness."""

from .blockmodel import Block, Endorsement, Transaction, Version
from .config import NetworkConfig, default_config, load_config
from .errors import (
    CapacityError,
    ConfigError,
    DecodeError,
    DerDecodeError,
    FrameLimitError,
    MailboxClosed,
    MalformedPacket,
    MissingIdentityError,
    ProtocolError,
)
from .fifos import FifoSet, extract_block
from .identity import Certificate, IdentityCache, Role, encode_id, decode_id
from .pipeline import Pipeline, PipelineConfig, TxFlag, ValidationResult
from .policy import compile_policy, parse_policy
from .receiver import SectionReceiver
from .results import ResultMailbox
from .sender import BlockSender
from .statedb import KvStore
from .workload import WorkloadGenerator

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BlockSender",
    "CapacityError",
    "Certificate",
    "ConfigError",
    "DecodeError",
    "DerDecodeError",
    "Endorsement",
    "FifoSet",
    "FrameLimitError",
    "IdentityCache",
    "KvStore",
    "MailboxClosed",
    "MalformedPacket",
    "MissingIdentityError",
    "NetworkConfig",
    "Pipeline",
    "PipelineConfig",
    "ProtocolError",
    "ResultMailbox",
    "Role",
    "SectionReceiver",
    "Transaction",
    "TxFlag",
    "ValidationResult",
    "Version",
    "WorkloadGenerator",
    "compile_policy",
    "decode_id",
    "default_config",
    "encode_id",
    "extract_block",
    "load_config",
    "parse_policy",
]
