"""Simulated two-tier memory.

A :class:`TieredHeap` hands out :class:`TierHandle` blocks from a bounded fast
arena and a (usually unbounded) slow arena, keeps exact logical-byte usage per
tier, and meters every node access as cost units.  ``c_slow / c_fast``
defaults to 2, the measured latency gap between CPU-attached and
CXL-attached DRAM.
"""
from __future__ import annotations

import enum
import itertools
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Optional


class TierId(enum.IntEnum):
    FAST = 0
    SLOW = 1

    @property
    def other(self) -> "TierId":
        return TierId.SLOW if self is TierId.FAST else TierId.FAST


FAST = TierId.FAST
SLOW = TierId.SLOW


class HeapError(Exception):
    pass


class FastExhausted(HeapError):
    pass


class SlowExhausted(HeapError):
    pass


class DoubleFree(HeapError):
    pass


@dataclass(frozen=True)
class TierBudget:
    fast_capacity: int
    slow_capacity: Optional[int] = None  # None = unbounded
    c_fast: float = 1
    c_slow: float = 2
    # (ns_fast, ns_slow) busy-wait per access, or None
    delay_ns: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.fast_capacity <= 0:
            raise ValueError("fast_capacity must be > 0")
        if self.slow_capacity is not None and self.slow_capacity <= 0:
            raise ValueError("slow_capacity must be > 0 or None")
        if not (self.c_slow >= self.c_fast > 0):
            raise ValueError("need c_slow >= c_fast > 0")


class TierHandle:
    """One allocated node block.  ``tier`` only changes through
    :meth:`TieredHeap.relocate`."""

    __slots__ = ("block", "size", "tier", "live", "retired")

    def __init__(self, block: int, size: int, tier: TierId):
        self.block = block
        self.size = size
        self.tier = tier
        self.live = True
        self.retired = False

    def __repr__(self):
        state = "" if self.live else " freed"
        return f"<TierHandle #{self.block} {self.size}B {self.tier.name}{state}>"


@dataclass(frozen=True)
class HeapStats:
    used_fast: int
    used_slow: int
    accesses_fast: int
    accesses_slow: int
    leaf_accesses_fast: int
    leaf_accesses_slow: int
    total_cost: float
    stale_accesses: int

    @property
    def fast_access_ratio(self) -> float:
        n = self.accesses_fast + self.accesses_slow
        return self.accesses_fast / n if n else 0.0

    @property
    def fast_leaf_access_ratio(self) -> float:
        n = self.leaf_accesses_fast + self.leaf_accesses_slow
        return self.leaf_accesses_fast / n if n else 0.0


class _Shard:
    # per-thread access counters; only the owning thread writes
    __slots__ = ("fast", "slow", "leaf_fast", "leaf_slow", "stale")

    def __init__(self):
        self.fast = self.slow = self.leaf_fast = self.leaf_slow = self.stale = 0


def _busy_wait(ns: int) -> None:
    end = time.perf_counter_ns() + ns
    while time.perf_counter_ns() < end:
        pass


class TieredHeap:
    def __init__(self, budget: TierBudget):
        self.budget = budget
        self.fast_capacity = budget.fast_capacity
        self.slow_capacity = budget.slow_capacity
        self.c_fast = budget.c_fast
        self.c_slow = budget.c_slow
        self._delay = budget.delay_ns
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self._live: dict[int, TierHandle] = {}
        self.used_fast = 0
        self.used_slow = 0
        # fast bytes retired by the trees but not yet reclaimed
        self.retired_fast = 0
        self._shards: dict[int, _Shard] = {}
        self._shards_lock = threading.Lock()
        self._watch: Optional[tuple[float, Callable[[], None]]] = None

    # -- allocation -----------------------------------------------------
    def alloc(self, size: int, tier: TierId) -> TierHandle:
        if size <= 0:
            raise ValueError("size must be > 0")
        crossed = False
        with self._lock:
            if tier is FAST:
                if self.used_fast + size > self.fast_capacity:
                    raise FastExhausted(
                        f"{size}B requested, {self.fast_capacity - self.used_fast}B free")
                crossed = self._crosses(size)
                self.used_fast += size
            else:
                if (self.slow_capacity is not None
                        and self.used_slow + size > self.slow_capacity):
                    raise SlowExhausted(
                        f"{size}B requested, {self.slow_capacity - self.used_slow}B free")
                self.used_slow += size
            h = TierHandle(next(self._ids), size, tier)
            self._live[h.block] = h
        if crossed:
            self._watch[1]()
        return h

    def free(self, h: TierHandle) -> None:
        with self._lock:
            if not h.live or self._live.pop(h.block, None) is None:
                raise DoubleFree(repr(h))
            h.live = False
            if h.tier is FAST:
                self.used_fast -= h.size
                if h.retired:
                    self.retired_fast -= h.size
            else:
                self.used_slow -= h.size

    def relocate(self, h: TierHandle, tier: TierId) -> None:
        """Move ``h``'s accounting to ``tier`` in one step."""
        crossed = False
        with self._lock:
            if not h.live:
                raise HeapError(f"relocate of freed {h!r}")
            if h.tier is tier:
                return
            if tier is FAST:
                if self.used_fast + h.size > self.fast_capacity:
                    raise FastExhausted(f"{h.size}B requested")
                crossed = self._crosses(h.size)
                self.used_fast += h.size
                self.used_slow -= h.size
            else:
                if (self.slow_capacity is not None
                        and self.used_slow + h.size > self.slow_capacity):
                    raise SlowExhausted(f"{h.size}B requested")
                self.used_slow += h.size
                self.used_fast -= h.size
            if h.retired:
                self.retired_fast += h.size if tier is FAST else -h.size
            h.tier = tier
        if crossed:
            self._watch[1]()

    def retire(self, h: TierHandle) -> None:
        """Mark ``h`` as unlinked and waiting for reclamation.  Its bytes
        still occupy the tier but no longer count toward the usage ratio."""
        with self._lock:
            if not h.live or h.retired:
                return
            h.retired = True
            if h.tier is FAST:
                self.retired_fast += h.size

    @property
    def live_fast(self) -> int:
        """Fast bytes held by blocks that are not retired."""
        return self.used_fast - self.retired_fast

    def resize_fast(self, capacity: int) -> None:
        """Change the fast budget; it may not drop below current usage."""
        with self._lock:
            if capacity <= 0 or capacity < self.used_fast:
                raise ValueError(f"fast capacity {capacity} below usage {self.used_fast}")
            self.fast_capacity = capacity

    def fast_headroom(self) -> int:
        return self.fast_capacity - self.used_fast

    def usage_ratio(self, tier: TierId = FAST) -> float:
        if tier is FAST:
            return self.live_fast / self.fast_capacity
        if self.slow_capacity is None:
            return 0.0
        return self.used_slow / self.slow_capacity

    def watch_fast_usage(self, threshold: float, callback: Callable[[], None]) -> None:
        """Call ``callback`` (outside the heap lock) whenever an allocation
        lifts the fast usage ratio from at-or-below ``threshold`` to above it."""
        self._watch = (threshold, callback)

    def _crosses(self, size: int) -> bool:
        if self._watch is None:
            return False
        limit = self._watch[0] * self.fast_capacity
        before = self.used_fast - self.retired_fast
        return before <= limit < before + size

    def live_handles(self) -> Iterator[TierHandle]:
        with self._lock:
            return iter(list(self._live.values()))

    # -- access metering ------------------------------------------------
    def _shard(self) -> _Shard:
        tid = threading.get_ident()
        s = self._shards.get(tid)
        if s is None:
            s = _Shard()
            with self._shards_lock:
                self._shards[tid] = s
        return s

    def record_access(self, h: TierHandle, leaf: bool = False) -> None:
        s = self._shards.get(threading.get_ident()) or self._shard()
        if not h.live:
            s.stale += 1
        if h.tier is FAST:
            s.fast += 1
            if leaf:
                s.leaf_fast += 1
            if self._delay:
                _busy_wait(self._delay[0])
        else:
            s.slow += 1
            if leaf:
                s.leaf_slow += 1
            if self._delay:
                _busy_wait(self._delay[1])

    def thread_accesses(self) -> tuple[int, int]:
        """``(fast, slow)`` node accesses made so far by the calling thread."""
        s = self._shard()
        return s.fast, s.slow

    def stats(self) -> HeapStats:
        with self._shards_lock:
            shards = list(self._shards.values())
        af = sum(s.fast for s in shards)
        asl = sum(s.slow for s in shards)
        return HeapStats(
            used_fast=self.used_fast,
            used_slow=self.used_slow,
            accesses_fast=af,
            accesses_slow=asl,
            leaf_accesses_fast=sum(s.leaf_fast for s in shards),
            leaf_accesses_slow=sum(s.leaf_slow for s in shards),
            total_cost=af * self.c_fast + asl * self.c_slow,
            stale_accesses=sum(s.stale for s in shards),
        )
