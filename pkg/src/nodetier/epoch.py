"""Epoch-based deferred reclamation for retired tree nodes.

Every tree operation pins the current global epoch for its thread.  A retired
block is reclaimed only once no thread is still pinned at (or before) the
epoch in which it was retired, so optimistic readers never touch a freed
block.
"""
from __future__ import annotations

import collections
import threading
from typing import Callable


class EpochManager:
    def __init__(self):
        self._lock = threading.Lock()
        self._epoch = 0
        # thread id -> [pinned epoch, nesting depth]
        self._pins: dict[int, list[int]] = {}
        self._retired: collections.deque[tuple[int, Callable[[], None]]] = collections.deque()

    @property
    def epoch(self) -> int:
        return self._epoch

    def enter(self) -> None:
        tid = threading.get_ident()
        pin = self._pins.get(tid)
        if pin is None:
            self._pins[tid] = [self._epoch, 1]
        else:
            pin[1] += 1

    def exit(self) -> None:
        tid = threading.get_ident()
        pin = self._pins[tid]
        pin[1] -= 1
        if pin[1] == 0:
            del self._pins[tid]
            # the last pin to leave is what lets a retired block go; a
            # reader never waits for the lock just to help
            if self._retired:
                self.reclaim(blocking=False)

    def __enter__(self):
        self.enter()
        return self

    def __exit__(self, *exc):
        self.exit()

    def retire(self, reclaim: Callable[[], None]) -> None:
        with self._lock:
            self._retired.append((self._epoch, reclaim))
            self._epoch += 1
        self.reclaim()

    def reclaim(self, blocking: bool = True) -> int:
        """Run every reclaimer whose grace period has ended."""
        done = []
        if not self._lock.acquire(blocking):
            return 0
        try:
            pins = list(self._pins.values())
            floor = min((p[0] for p in pins), default=None)
            while self._retired and (floor is None or self._retired[0][0] < floor):
                done.append(self._retired.popleft()[1])
        finally:
            self._lock.release()
        for fn in done:
            fn()
        return len(done)

    def pending(self) -> int:
        return len(self._retired)
