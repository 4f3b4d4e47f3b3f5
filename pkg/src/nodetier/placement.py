"""Critical-path placement state shared by every index.

Holds the per-node metadata, layer-aware tier choice for new nodes,
leaf-only access counting, the log2 frequency histogram and the
hot/cold threshold derivation.  Nothing here knows which index it serves;
indexes are reached only through the :class:`TreeAdapter` protocol.
"""
from __future__ import annotations

import dataclasses
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Optional, Protocol, runtime_checkable

from .heap import FAST, SLOW, FastExhausted, TierHandle, TierId, TieredHeap

MAX_LEVEL = 0x7F
FREQ_MAX = 0xFFFF
NUM_BINS = 16

#: metadata bytes added to each node's logical layout
META_INTERNAL_BYTES = 1
META_LEAF_BYTES = 3


class DegenerateHistogram(ValueError):
    """No leaves were counted, so no threshold can be derived."""


# ---------------------------------------------------------------------------
# node metadata

class NodeMeta:
    """One byte: 7-bit level, 1-bit tier flag (0 = fast, 1 = slow)."""

    __slots__ = ("byte",)

    def __init__(self, level: int, tier: TierId):
        if not 0 <= level <= MAX_LEVEL:
            raise ValueError(f"level {level} does not fit in 7 bits")
        self.byte = (level << 1) | int(tier)

    @property
    def level(self) -> int:
        return self.byte >> 1

    @level.setter
    def level(self, value: int) -> None:
        if not 0 <= value <= MAX_LEVEL:
            raise ValueError(f"level {value} does not fit in 7 bits")
        self.byte = (value << 1) | (self.byte & 1)

    @property
    def tier(self) -> TierId:
        return TierId(self.byte & 1)

    @tier.setter
    def tier(self, value: TierId) -> None:
        self.byte = (self.byte & ~1) | int(value)


class LeafMeta(NodeMeta):
    """Level/tier byte plus a saturating 16-bit access counter."""

    __slots__ = ("freq",)

    def __init__(self, level: int, tier: TierId, freq: int = 0):
        super().__init__(level, tier)
        self.freq = freq


def managed_layout(layout: dict[str, int], leaf: bool) -> dict[str, int]:
    """Add the placement metadata fields to an index's plain node layout."""
    out = dict(layout)
    out["level_tier"] = 1
    if leaf:
        out["access_freq"] = 2
    return out


# counters are shared between tree threads and the cooler
_STRIPES = [threading.Lock() for _ in range(64)]


def _stripe(meta: LeafMeta) -> threading.Lock:
    return _STRIPES[(id(meta) >> 4) & 63]


def track_leaf_access(meta: LeafMeta) -> None:
    with _STRIPES[(id(meta) >> 4) & 63]:
        f = meta.freq
        if f < FREQ_MAX:
            meta.freq = f + 1


def halve_freq(meta: LeafMeta) -> int:
    with _stripe(meta):
        meta.freq >>= 1
        return meta.freq


# ---------------------------------------------------------------------------
# parameters

@dataclass
class PlacementParams:
    """Tunables read on the critical path and moved by the watermark loop.

    ``l_fast``/``l_demote`` of ``None`` mean "not calibrated yet": new nodes
    may go fast at any depth and nothing is demoted by level.
    """

    l_fast: Optional[int] = None
    l_demote: Optional[int] = None
    p_hot: Optional[float] = None
    p_cold: Optional[float] = None
    t_hot: int = 2
    t_cold: int = 0
    u_high: float = 0.95
    u_low: float = 0.85

    def __post_init__(self):
        if not 0 <= self.u_low < self.u_high <= 1:
            raise ValueError("need 0 <= u_low < u_high <= 1")

    @property
    def calibrated(self) -> bool:
        return None not in (self.l_fast, self.l_demote, self.p_hot, self.p_cold)

    def calibrate(self, max_depth: int, fast_capacity: int, leaf_size: int,
                  total_leaves: int) -> None:
        """Fill in whatever is still unset from the fast budget and tree shape."""
        if self.l_fast is None:
            self.l_fast = max_depth
        if self.l_demote is None:
            self.l_demote = max_depth
        if self.p_hot is None:
            if total_leaves:
                leaf_cap = fast_capacity * 0.8 / leaf_size
                self.p_hot = min(1.0, leaf_cap / total_leaves)
            else:
                self.p_hot = 0.1
        if self.p_cold is None:
            self.p_cold = max(0.0, 1.0 - 2.0 * self.p_hot)

    def snapshot(self) -> "PlacementParams":
        return dataclasses.replace(self)

    def restore(self, snap: "PlacementParams") -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, getattr(snap, f.name))


# ---------------------------------------------------------------------------
# allocation

def choose_tier(depth: int, parent_tier: TierId, params: PlacementParams,
                heap: TieredHeap, size: int = 1) -> TierId:
    """Fast iff the node is shallower than ``l_fast``, its parent is fast and
    the fast arena can hold it.  The root passes ``parent_tier=FAST``."""
    l_fast = params.l_fast
    if l_fast is None:
        l_fast = MAX_LEVEL + 1
    if depth < l_fast and parent_tier is FAST and heap.fast_headroom() >= size:
        return FAST
    return SLOW


class AllocationPolicy(Protocol):
    #: True when the index must keep every fast node's parent fast
    preserve_boundary: bool

    def tier_for(self, depth: int, parent_tier: TierId, is_leaf: bool,
                 size: int) -> TierId: ...

    def prepare(self, max_depth: int, total_leaves: int, leaf_size: int) -> None: ...


class LayerAwarePolicy:
    preserve_boundary = True

    def __init__(self, params: PlacementParams, heap: TieredHeap):
        self.params = params
        self.heap = heap

    def tier_for(self, depth, parent_tier, is_leaf, size):
        return choose_tier(depth, parent_tier, self.params, self.heap, size)

    def prepare(self, max_depth, total_leaves, leaf_size):
        self.params.calibrate(max_depth, self.heap.fast_capacity, leaf_size, total_leaves)


def alloc_node(heap: TieredHeap, policy: AllocationPolicy, size: int, depth: int,
               parent_tier: TierId, is_leaf: bool,
               children: Iterable[Any] = (), tier_of: Callable[[Any], TierId] = None,
               ) -> tuple[TierHandle, list]:
    """Allocate a block for a new or replacement node.

    ``children`` are nodes the new one will adopt.  When the policy keeps the
    single boundary and picks slow for a node with fast children, the node is
    forced fast if its parent is fast; failing that, the fast children are
    returned so the caller can demote them before publishing.
    """
    tier = policy.tier_for(depth, parent_tier, is_leaf, size)
    demote: list = []
    if tier is SLOW and policy.preserve_boundary:
        fast_kids = [c for c in children if tier_of(c) is FAST]
        if fast_kids:
            if parent_tier is FAST:
                try:
                    return heap.alloc(size, FAST), []
                except FastExhausted:
                    pass
            demote = fast_kids
    if tier is FAST:
        try:
            return heap.alloc(size, FAST), demote
        except FastExhausted:
            tier = SLOW
    return heap.alloc(size, SLOW), demote


# ---------------------------------------------------------------------------
# tree adapter contract

@runtime_checkable
class TreeAdapter(Protocol):
    """What the background engine needs from an index.

    ``relocate`` allocates the copy in ``tier``, swaps the parent's link,
    marks the old node obsolete and retires its block after a grace period.
    It holds the parent/child lock pair while calling ``guard(node, parent)``
    and returns the new node, or ``None`` when the node went stale or the
    guard refused.
    """

    def root(self) -> Any: ...
    def leaves(self) -> Iterator[Any]: ...
    def nodes(self, include_leaves: bool = True) -> Iterator[Any]: ...
    def children(self, node) -> list: ...
    def parent_of(self, node) -> Any: ...
    def path_to(self, node) -> Optional[list]: ...
    def has_fast_child(self, node) -> bool: ...
    def relocate(self, node, tier: TierId, guard=None) -> Any: ...
    def depth_of(self, node) -> int: ...
    def is_leaf(self, node) -> bool: ...
    def is_live(self, node) -> bool: ...
    def meta(self, node) -> NodeMeta: ...
    def tier_of(self, node) -> TierId: ...
    def size_of(self, node) -> int: ...
    def max_depth(self) -> int: ...
    def leaf_size(self) -> int: ...


# ---------------------------------------------------------------------------
# histogram

def bin_of(freq: int) -> int:
    return 0 if freq <= 1 else freq.bit_length() - 1


def bin_floor(b: int) -> int:
    """Smallest frequency that lands in bin ``b``."""
    return 0 if b == 0 else 1 << b


@dataclass
class FreqHistogram:
    bins: list[int] = field(default_factory=lambda: [0] * NUM_BINS)
    total_leaves: int = 0

    def add(self, freq: int) -> None:
        self.bins[bin_of(freq)] += 1
        self.total_leaves += 1

    def shift_left(self) -> None:
        b = self.bins
        self.bins = [b[0] + b[1]] + b[2:] + [0]

    def replace(self, other: "FreqHistogram") -> None:
        self.bins = list(other.bins)
        self.total_leaves = other.total_leaves

    @classmethod
    def of(cls, freqs: Iterable[int]) -> "FreqHistogram":
        h = cls()
        for f in freqs:
            h.add(f)
        return h


def rebuild_histogram(adapter: TreeAdapter) -> FreqHistogram:
    bins = [0] * NUM_BINS
    n = 0
    meta = adapter.meta
    for leaf in adapter.leaves():
        f = meta(leaf).freq
        bins[0 if f <= 1 else f.bit_length() - 1] += 1
        n += 1
    return FreqHistogram(bins, n)


def cool(adapter: TreeAdapter, hist: FreqHistogram) -> None:
    """Halve every leaf counter and shift the histogram one bin down."""
    meta = adapter.meta
    for leaf in adapter.leaves():
        halve_freq(meta(leaf))
    hist.shift_left()


def update_thresholds(hist: FreqHistogram, params: PlacementParams) -> tuple[int, int]:
    """Derive ``(t_hot, t_cold)`` as bin floors.

    ``hot_bin`` is the highest bin whose cumulative count from the top
    exceeds ``p_hot`` of all leaves.  ``cold_bin`` is the lowest bin such
    that the leaves strictly below it make up at least ``p_cold`` of them.
    If the two collide the cold cut moves down below the hot one, except
    when no bin above 0 qualifies as hot; then the hot cut moves up instead.
    """
    n = hist.total_leaves
    if n == 0:
        raise DegenerateHistogram("empty histogram")
    bins = hist.bins
    hot_bin = 0
    above = 0
    hot_quota = params.p_hot * n
    for b in range(NUM_BINS - 1, -1, -1):
        above += bins[b]
        if above > hot_quota:
            hot_bin = b
            break
    cold_quota = params.p_cold * n
    cold_bin = 0
    below = 0
    while below < cold_quota and cold_bin < NUM_BINS - 2:
        below += bins[cold_bin]
        cold_bin += 1
    if cold_bin >= hot_bin:
        if hot_bin > 0:
            cold_bin = hot_bin - 1
        else:
            hot_bin = cold_bin + 1
    return bin_floor(hot_bin), bin_floor(cold_bin)


def is_hot(freq: int, params: PlacementParams) -> bool:
    return freq > params.t_hot


def is_cold(freq: int, params: PlacementParams) -> bool:
    return freq < params.t_cold


def single_boundary_violations(adapter: TreeAdapter) -> list:
    """Fast nodes whose parent is slow (walks the whole tree)."""
    bad = []
    root = adapter.root()
    if root is None:
        return bad
    stack = [root]
    tier_of = adapter.tier_of
    while stack:
        node = stack.pop()
        kids = adapter.children(node)
        if tier_of(node) is SLOW:
            bad.extend(c for c in kids if tier_of(c) is FAST)
        stack.extend(kids)
    return bad
