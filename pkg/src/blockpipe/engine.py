"""Signature verification slots. Real mode runs ECDSA P-256 over the request's
(r, s) pair; synthetic mode replaces the crypto with a fixed delay plus a
caller-supplied decision, for scaling runs that should not be bound by CPU
crypto throughput."""

from __future__ import annotations

import time
from functools import lru_cache
from typing import Callable, Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import Prehashed, encode_dss_signature

from .fifos import VerificationRequest

_PREHASHED_SHA256 = ec.ECDSA(Prehashed(hashes.SHA256()))


@lru_cache(maxsize=4096)
def _load_point(point: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), point)


def verify_request(request: VerificationRequest) -> bool:
    if request.prefailed:
        return False
    signature = encode_dss_signature(int.from_bytes(request.r, "big"), int.from_bytes(request.s, "big"))
    try:
        _load_point(request.public_key).verify(signature, request.digest, _PREHASHED_SHA256)
    except (InvalidSignature, ValueError):
        return False
    return True


class VerificationEngine:
    """A bank of identical fixed-latency verification slots.

    synthetic_delay=None runs real crypto. With a delay set, the crypto is
    replaced by the delay plus decide(request); the default decision passes
    everything that is not pre-failed, which models honest workloads.
    """

    def __init__(
        self,
        synthetic_delay: Optional[float] = None,
        decide: Optional[Callable[[VerificationRequest], bool]] = None,
    ):
        self.synthetic_delay = synthetic_delay
        self.decide = decide

    def _decide(self, request: VerificationRequest) -> bool:
        if request.prefailed:
            return False
        if self.decide is not None:
            return self.decide(request)
        return True

    def verify(self, request: VerificationRequest) -> bool:
        if request.prefailed:
            return False
        if self.synthetic_delay is None:
            return verify_request(request)
        time.sleep(self.synthetic_delay)
        return self._decide(request)

    def verify_wave(self, requests: list[VerificationRequest]) -> list[bool]:
        """Verify one wave of requests occupying concurrent slots.

        The slots run in lockstep, so a wave costs one engine latency
        regardless of its width; in synthetic mode that is a single delay.
        Verdicts are timing-independent, so real-crypto mode checks the
        requests in turn.
        """
        if self.synthetic_delay is None:
            return [verify_request(r) for r in requests]
        time.sleep(self.synthetic_delay)
        return [self._decide(r) for r in requests]
