"""Per-block result mailbox between the pipeline and the host-side consumer.

With the default depth of 1 the pipeline blocks before overwriting an unread
result, mirroring a register bank guarded against overwrite until read."""

from __future__ import annotations

import threading
from collections import deque
from typing import TYPE_CHECKING, Optional

from .errors import MailboxClosed

if TYPE_CHECKING:
    from .pipeline import ValidationResult


class ResultMailbox:
    """Single producer (pipeline), single consumer. Both may block."""

    def __init__(self, depth: int = 1):
        if depth < 1:
            raise ValueError("mailbox depth must be at least 1")
        self.depth = depth
        self._items: deque = deque()
        self._cv = threading.Condition()
        self._closed = False
        self.published = 0
        self.delivered = 0

    def publish(self, result: "ValidationResult") -> None:
        """Blocks while the mailbox holds `depth` unread results."""
        with self._cv:
            while len(self._items) >= self.depth and not self._closed:
                self._cv.wait()
            if self._closed:
                raise MailboxClosed("publish on closed mailbox")
            self._items.append(result)
            self.published += 1
            self._cv.notify_all()

    def get_block_data(self, timeout: Optional[float] = None) -> Optional["ValidationResult"]:
        """Blocks until a result is available; results come back in block order,
        each exactly once. Returns None once the mailbox is closed and drained."""
        with self._cv:
            while not self._items:
                if self._closed:
                    return None
                if not self._cv.wait(timeout=timeout):
                    return None
            result = self._items.popleft()
            self.delivered += 1
            self._cv.notify_all()
            return result

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()

    @property
    def unread(self) -> int:
        with self._cv:
            return len(self._items)
