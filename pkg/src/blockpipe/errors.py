"""Exception types shared across the package."""


class ProtocolError(Exception):
    """Base class for wire-protocol failures."""


class DecodeError(ProtocolError):
    """Malformed encoded data. Carries the byte offset of the failure."""

    def __init__(self, offset: int, reason: str):
        super().__init__(f"decode error at byte {offset}: {reason}")
        self.offset = offset
        self.reason = reason


class DerDecodeError(DecodeError):
    """Malformed DER signature, distinct from a signature that merely fails to verify."""


class MalformedPacket(ProtocolError):
    """Datagram on the protocol port that does not parse as a section packet."""


class FrameLimitError(ProtocolError):
    """A section does not fit the configured maximum frame size."""


class MissingIdentityError(ProtocolError):
    """A locator references an encoded id absent from the identity cache."""

    def __init__(self, encoded_id: int):
        super().__init__(f"identity 0x{encoded_id:04x} not in cache")
        self.encoded_id = encoded_id


class ConfigError(Exception):
    """Invalid or inconsistent network configuration."""


class CapacityError(Exception):
    """State database is full."""


class MailboxClosed(Exception):
    """Publish attempted on a closed result mailbox."""
