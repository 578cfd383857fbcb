"""In-memory versioned key-value store standing in for the validator's state
database. Reads return (value, version); versions are opaque to the store.
A key being written is not readable until the write completes."""

from __future__ import annotations

import threading
from typing import Optional

from .blockmodel import Version
from .errors import CapacityError

DEFAULT_CAPACITY = 8192


class KvStore:
    """Many concurrent readers, one writer (the commit stage). A key mid-write
    sits in a busy set; its readers wait on the write's completion event."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self._data: dict[bytes, tuple[bytes, Version]] = {}
        self._lock = threading.Lock()
        self._writing: dict[bytes, threading.Event] = {}

    def get(self, key: bytes) -> Optional[tuple[bytes, Version]]:
        while True:
            with self._lock:
                pending = self._writing.get(key)
                if pending is None:
                    return self._data.get(key)
            pending.wait()

    def put(self, key: bytes, value: bytes, version: Version) -> None:
        done = threading.Event()
        with self._lock:
            if key not in self._data and len(self._data) >= self.capacity:
                raise CapacityError(f"store full ({self.capacity} entries)")
            self._writing[key] = done
        try:
            self._install(key, value, version)
        finally:
            with self._lock:
                del self._writing[key]
            done.set()

    def _install(self, key: bytes, value: bytes, version: Version) -> None:
        # Runs with the key marked busy but outside the map lock; kept separate
        # so tests can widen the write window.
        with self._lock:
            self._data[key] = (value, version)

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)

    def snapshot(self) -> dict[bytes, tuple[bytes, Version]]:
        with self._lock:
            return dict(self._data)

    def dump(self, path) -> None:
        """Write `key_hex value_hex block.tx` lines sorted by key, for
        post-run diffing."""
        snap = self.snapshot()
        with open(path, "w", encoding="ascii") as fh:
            for key in sorted(snap):
                value, version = snap[key]
                fh.write(f"{key.hex()}\t{value.hex()}\t{version.block_num}.{version.tx_num}\n")
