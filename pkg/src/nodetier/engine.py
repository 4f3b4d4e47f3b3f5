"""Background migration: trigger, promotion/demotion executors, cooler and
the watermark maintainer.

All tree access goes through a :class:`~nodetier.placement.TreeAdapter`;
this module has no idea which index it is driving.
"""
from __future__ import annotations

import collections
import enum
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .heap import FAST, SLOW, FastExhausted, TieredHeap
from .placement import (
    NUM_BINS,
    DegenerateHistogram,
    FreqHistogram,
    PlacementParams,
    TreeAdapter,
    bin_floor,
    cool,
    update_thresholds,
)

log = logging.getLogger(__name__)


class WrongMode(RuntimeError):
    """A virtual tick was requested while the engine runs on wall-clock threads."""


# ---------------------------------------------------------------------------
# queues

class _DedupQueue:
    def __init__(self):
        self._items: collections.deque = collections.deque()
        self._present: set = set()
        self._lock = threading.Lock()

    def push(self, node, front: bool = False) -> bool:
        with self._lock:
            if node in self._present:
                return False
            self._present.add(node)
            if front:
                self._items.appendleft(node)
            else:
                self._items.append(node)
            return True

    def pop(self):
        with self._lock:
            if not self._items:
                return None
            node = self._items.popleft()
            self._present.discard(node)
            return node

    def clear(self) -> int:
        with self._lock:
            n = len(self._items)
            self._items.clear()
            self._present.clear()
            return n

    def snapshot(self) -> list:
        with self._lock:
            return list(self._items)

    def __len__(self):
        return len(self._items)


class MigrationQueues:
    """Promotion and demotion FIFOs.  A node is never queued twice at once.

    ``on_wake(kind)`` fires when a queue grows past ``wake_threshold``.
    """

    def __init__(self, wake_threshold: int = 1024,
                 on_wake: Optional[Callable[[str], None]] = None):
        self.wake_threshold = wake_threshold
        self.on_wake = on_wake
        self.promotion = _DedupQueue()
        self.demotion = _DedupQueue()

    def push_promotion(self, node, front: bool = False) -> bool:
        added = self.promotion.push(node, front)
        if added and self.on_wake and len(self.promotion) == self.wake_threshold + 1:
            self.on_wake("promotion")
        return added

    def push_demotion(self, node) -> bool:
        added = self.demotion.push(node)
        if added and self.on_wake and len(self.demotion) == self.wake_threshold + 1:
            self.on_wake("demotion")
        return added


# ---------------------------------------------------------------------------
# trigger

@dataclass
class ScanStats:
    n_promo_candidates: int = 0
    n_demo_candidates: int = 0
    n_leaves: int = 0


@dataclass
class ScanCursor:
    """State carried between scans: the round-robin credit for cold slow
    leaves, and the fast leaf bytes per depth, fast leaves per bin and
    demotion level seen by the last scan."""

    cold_slow_credit: float = 0.0
    fast_leaf_bytes: dict = field(default_factory=dict)
    fast_by_bin: Optional[list] = None
    l_demote: Optional[int] = None


def _ensure_calibrated(adapter: TreeAdapter, params: PlacementParams,
                       heap: TieredHeap, n_leaves: int) -> None:
    if not params.calibrated:
        params.calibrate(adapter.max_depth(), heap.fast_capacity,
                         adapter.leaf_size(), n_leaves)


def trigger_scan(adapter: TreeAdapter, params: PlacementParams, hist: FreqHistogram,
                 queues: MigrationQueues, heap: TieredHeap,
                 cold_slow_fraction: float = 0.1,
                 cursor: Optional[ScanCursor] = None,
                 promote: bool = True) -> ScanStats:
    """One pass over the leaves: rebuild the histogram, refresh thresholds,
    then queue hot slow leaves for promotion and cold fast leaves (plus a
    share of cold slow ones) for demotion.  ``promote=False`` leaves the
    promotion queue alone."""
    if cursor is None:
        cursor = ScanCursor()
    fast_by_bin: list[list] = [[] for _ in range(NUM_BINS)]
    slow_by_bin: list[list] = [[] for _ in range(NUM_BINS)]
    bins = [0] * NUM_BINS
    fast_bytes: dict[int, int] = {}
    meta, depth_of, size_of = adapter.meta, adapter.depth_of, adapter.size_of
    for leaf in adapter.leaves():
        m = meta(leaf)
        f = m.freq
        b = 0 if f <= 1 else f.bit_length() - 1
        if m.byte & 1:
            slow_by_bin[b].append(leaf)
        else:
            fast_by_bin[b].append(leaf)
            d = depth_of(leaf)
            fast_bytes[d] = fast_bytes.get(d, 0) + size_of(leaf)
    for b in range(NUM_BINS):
        bins[b] = len(slow_by_bin[b]) + len(fast_by_bin[b])
    n = sum(bins)
    hist.replace(FreqHistogram(bins, n))
    cursor.fast_leaf_bytes = fast_bytes
    cursor.fast_by_bin = fast_by_bin
    cursor.l_demote = params.l_demote
    stats = ScanStats(n_leaves=n)
    if n == 0:
        return stats
    _ensure_calibrated(adapter, params, heap, n)
    try:
        params.t_hot, params.t_cold = update_thresholds(hist, params)
    except DegenerateHistogram:
        pass
    t_hot, t_cold = params.t_hot, params.t_cold

    for b in range(NUM_BINS if promote else 0):
        if (1 if b == 0 else (1 << (b + 1)) - 1) <= t_hot:
            continue
        for leaf in slow_by_bin[b]:
            if meta(leaf).freq > t_hot and queues.push_promotion(leaf):
                stats.n_promo_candidates += 1
    stats.n_demo_candidates += _queue_cold_fast(fast_by_bin, meta, t_cold, queues)
    # a slow leaf is queued only so its parent gets looked at
    lowest_parent = 1 + (params.l_demote or 0)
    if cold_slow_fraction > 0 and lowest_parent <= adapter.max_depth():
        credit = cursor.cold_slow_credit
        for b in range(NUM_BINS):
            if bin_floor(b) >= t_cold:
                break
            for leaf in slow_by_bin[b]:
                if meta(leaf).freq >= t_cold or depth_of(leaf) < lowest_parent:
                    continue
                credit += cold_slow_fraction
                if credit >= 1.0:
                    credit -= 1.0
                    if queues.push_demotion(leaf):
                        stats.n_demo_candidates += 1
        cursor.cold_slow_credit = credit
    return stats


def _queue_cold_fast(fast_by_bin, meta, t_cold, queues) -> int:
    n = 0
    for b in range(NUM_BINS):
        if bin_floor(b) >= t_cold:
            break
        for leaf in fast_by_bin[b]:
            if meta(leaf).freq < t_cold and queues.push_demotion(leaf):
                n += 1
    return n


def reselect_cold(adapter: TreeAdapter, params: PlacementParams, hist: FreqHistogram,
                  queues: MigrationQueues, cursor: ScanCursor) -> int:
    """Refresh the thresholds from ``hist`` and queue the cold leaves among
    those the last scan found fast, without walking the tree again.  Entries
    that have moved or died since are dropped when popped.  Returns the
    number queued."""
    params.t_hot, params.t_cold = update_thresholds(hist, params)
    return _queue_cold_fast(cursor.fast_by_bin, adapter.meta, params.t_cold, queues)


# ---------------------------------------------------------------------------
# executors

class WatermarkMode(enum.Enum):
    NORMAL = "normal"
    STRAIN_LOOP = "strain_loop"
    RESTORING = "restoring"


@dataclass
class WatermarkState:
    mode: WatermarkMode = WatermarkMode.NORMAL
    saved_params: Optional[PlacementParams] = None
    promotions_halted: bool = False
    strain_iterations: int = 0


def _at_high(heap: TieredHeap, params: PlacementParams) -> bool:
    # a move may carry usage past the watermark; the strain loop then reacts
    return heap.usage_ratio() >= params.u_high


def run_promotions(adapter: TreeAdapter, queues: MigrationQueues, heap: TieredHeap,
                   state: WatermarkState, params: PlacementParams,
                   on_pressure: Optional[Callable[[], None]] = None) -> int:
    """Promote each queued hot leaf along with its slow ancestors, highest
    first, so a fast node never sits below a slow one.  Returns the number
    of nodes moved."""
    moved = 0
    meta, tier_of = adapter.meta, adapter.tier_of

    def parent_fast(node, parent):
        return parent is None or tier_of(parent) is FAST

    while not state.promotions_halted:
        leaf = queues.promotion.pop()
        if leaf is None:
            break
        if (not adapter.is_live(leaf) or tier_of(leaf) is FAST
                or meta(leaf).freq <= params.t_hot):
            continue
        if _at_high(heap, params):
            queues.push_promotion(leaf, front=True)
            if on_pressure:
                on_pressure()
            break
        path = adapter.path_to(leaf)
        if path is None:
            continue
        start = next((i for i, node in enumerate(path) if tier_of(node) is SLOW), len(path))
        aborted = False
        for node in path[start:]:
            if state.promotions_halted or _at_high(heap, params):
                aborted = True
                break
            try:
                new = adapter.relocate(node, FAST, guard=parent_fast)
            except FastExhausted:
                aborted = True
                break
            if new is None:
                break
            moved += 1
        if aborted:
            if adapter.is_live(leaf) and tier_of(leaf) is SLOW:
                queues.push_promotion(leaf, front=True)
            if on_pressure:
                on_pressure()
            break
    return moved


def run_demotions(adapter: TreeAdapter, queues: MigrationQueues, params: PlacementParams,
                  heap: TieredHeap, should_halt: Optional[Callable[[], bool]] = None,
                  drop_on_halt: bool = True) -> int:
    """Drain the demotion queue bottom-up.

    A node shallower than ``l_demote`` is skipped, and so is an internal node
    that still has a fast child.  Everything else goes slow (if it is not
    already) and hands its parent to the queue.  When ``should_halt`` fires
    the rest of the queue is dropped unless ``drop_on_halt`` is false.
    Returns nodes moved.
    """
    moved = 0
    tier_of, is_leaf = adapter.tier_of, adapter.is_leaf
    has_fast_child = adapter.has_fast_child

    def no_fast_child(node, parent):
        return not has_fast_child(node)

    while True:
        if should_halt is not None and should_halt():
            if drop_on_halt:
                queues.demotion.clear()
            break
        node = queues.demotion.pop()
        if node is None:
            break
        if not adapter.is_live(node):
            continue
        l_demote = params.l_demote
        if l_demote is not None and adapter.depth_of(node) < l_demote:
            continue
        leaf = is_leaf(node)
        if tier_of(node) is FAST:
            if leaf:
                if adapter.meta(node).freq >= params.t_cold:
                    continue
                new = adapter.relocate(node, SLOW)
            else:
                if has_fast_child(node):
                    continue
                new = adapter.relocate(node, SLOW, guard=no_fast_child)
            if new is None:
                continue
            moved += 1
            node = new
        # a parent above l_demote would only be skipped when popped
        if l_demote is not None and adapter.depth_of(node) - 1 < l_demote:
            continue
        parent = adapter.parent_of(node)
        if parent is not None:
            queues.push_demotion(parent)
    return moved


# ---------------------------------------------------------------------------
# engine

class ClockMode(enum.Enum):
    WALL = "wall"
    VIRTUAL = "virtual"


@dataclass
class Clock:
    mode: ClockMode = ClockMode.VIRTUAL
    trigger_interval_ms: float = 500
    cooler_interval_ms: float = 2000
    watermark_interval_ms: float = 100


class TickKind(enum.Enum):
    TRIGGER = "trigger"
    COOLER = "cooler"
    WATERMARK = "watermark"


@dataclass
class EngineConfig:
    wake_threshold: int = 1024
    cold_slow_fraction: float = 0.1
    strain_p_step: float = 0.05
    strain_level_step: int = 1
    abundant_p_step: float = 0.025
    abundant_level_step: int = 1
    residency_floor: float = 0.5


@dataclass
class WatermarkActions:
    entered_strain: bool = False
    iterations: int = 0
    demoted: int = 0
    early_exit: bool = False
    abundant: bool = False
    stalled: bool = False


class Engine:
    """Owns the queues, histogram and watermark state for one tree and runs
    the five workers, either on request (virtual clock) or on threads."""

    def __init__(self, adapter: TreeAdapter, heap: TieredHeap,
                 params: PlacementParams, clock: Optional[Clock] = None,
                 config: Optional[EngineConfig] = None):
        self.adapter = adapter
        self.heap = heap
        self.params = params
        self.clock = clock or Clock()
        self.config = config or EngineConfig()
        self.hist = FreqHistogram()
        self.state = WatermarkState()
        self.cursor = ScanCursor()
        self.queues = MigrationQueues(self.config.wake_threshold, self._on_wake)
        self.promoted = 0
        self.demoted = 0
        self.scans = 0
        self.cools = 0
        #: (snapshot taken on entry, params right after restore) per strain exit
        self.strain_exits: list[tuple[PlacementParams, PlacementParams]] = []
        self.pressure = threading.Event()
        # fast bytes left over when the last strain loop could not get below
        # u_high; re-entry waits for growth past it or for a cooling pass
        self._stalled_at: Optional[int] = None
        self.worker_cpu: dict[str, float] = collections.defaultdict(float)
        self._demote_lock = threading.Lock()
        self._promote_lock = threading.Lock()
        self._wake = {k: threading.Event() for k in ("trigger", "promotion", "demotion")}
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._failure: Optional[BaseException] = None
        heap.watch_fast_usage(params.u_high, self._on_pressure)

    # -- signals --------------------------------------------------------
    def _on_wake(self, kind: str) -> None:
        if self.clock.mode is ClockMode.WALL:
            self._wake[kind].set()

    def _on_pressure(self) -> None:
        self.pressure.set()

    # -- single steps ---------------------------------------------------
    def trigger_step(self, promote: bool = True) -> ScanStats:
        stats = trigger_scan(self.adapter, self.params, self.hist, self.queues,
                             self.heap, self.config.cold_slow_fraction, self.cursor,
                             promote)
        self.scans += 1
        return stats

    def demotion_step(self, should_halt=None, drop_on_halt=True) -> int:
        with self._demote_lock:
            n = run_demotions(self.adapter, self.queues, self.params, self.heap, should_halt,
                              drop_on_halt)
            self.demoted += n
        return n

    def _scheduled_demotions(self) -> int:
        # the strain loop drains the queue itself, under its own halt rule
        def strained():
            return self.state.mode is not WatermarkMode.NORMAL

        if strained():
            return 0
        return self.demotion_step(strained, drop_on_halt=False)

    def promotion_step(self) -> int:
        with self._promote_lock:
            n = run_promotions(self.adapter, self.queues, self.heap, self.state,
                               self.params, self._on_pressure)
            self.promoted += n
        return n

    def cooler_step(self) -> None:
        cool(self.adapter, self.hist)
        self.cools += 1
        self._stalled_at = None
        # the halved counters make the last scan's bins stale
        self.cursor.fast_by_bin = None

    def _fast_floor(self) -> tuple[int, int]:
        """Shallowest depth strain may demote: the first depth at which fast
        bytes, accumulated from the root down, reach the residency floor of
        the budget, and never the root.  Everything shallower stays fast;
        demotion at the floor depth itself halts once residency drops to the
        floor.  Also returns an upper bound on the fast bytes strain may
        still demote."""
        inner_by_depth = collections.Counter()
        for node in self.adapter.nodes(include_leaves=False):
            if self.adapter.tier_of(node) is FAST:
                inner_by_depth[self.adapter.depth_of(node)] += self.adapter.size_of(node)
        by_depth = inner_by_depth + collections.Counter(self.cursor.fast_leaf_bytes)
        target = self.config.residency_floor * self.heap.fast_capacity
        total = 0
        max_depth = self.adapter.max_depth()
        floor = max_depth
        for d in range(max_depth + 1):
            total += by_depth.get(d, 0)
            if total >= target:
                floor = max(1, d)
                break
        floor = min(floor, max_depth)
        # leaf bytes come from the heap total, so a stale scan cannot hide any
        inner = sum(inner_by_depth.values())
        movable = (sum(b for d, b in inner_by_depth.items() if d >= floor)
                   + max(0, self.heap.live_fast - inner))
        return floor, movable

    def _demotion_key(self):
        # what decides the demotion candidate set, predicted from the histogram
        try:
            _, t_cold = update_thresholds(self.hist, self.params)
        except DegenerateHistogram:
            return None
        return t_cold, self.params.l_demote

    def watermark_step(self) -> WatermarkActions:
        p, cfg, heap = self.params, self.config, self.heap
        acts = WatermarkActions()
        self.pressure.clear()
        usage = heap.usage_ratio()
        max_depth = self.adapter.max_depth()
        if usage <= p.u_high:
            self._stalled_at = None
        elif self._stalled_at is not None and heap.live_fast <= self._stalled_at:
            acts.stalled = True
            return acts
        if usage > p.u_high:
            floor, movable = self._fast_floor()
            if movable == 0:
                # everything fast sits above the residency floor
                self._stalled_at = heap.live_fast
                acts.stalled = True
                return acts
            if not p.calibrated:
                _ensure_calibrated(self.adapter, p, heap, max(1, self.hist.total_leaves))
            acts.entered_strain = True
            snap = p.snapshot()
            st = self.state
            st.saved_params = snap
            st.strain_iterations = 0
            st.promotions_halted = True
            st.mode = WatermarkMode.STRAIN_LOOP
            bound = max_depth + math.ceil(1 / cfg.strain_p_step) + 1
            halted = []

            target = cfg.residency_floor * heap.fast_capacity

            def below_low():
                if heap.usage_ratio() < p.u_low or heap.live_fast < target:
                    halted.append(True)
                    return True
                return False

            scanned = None
            while heap.usage_ratio() > p.u_high and st.strain_iterations < bound:
                st.strain_iterations += 1
                before = p.snapshot()
                p.p_cold = min(1.0, p.p_cold + cfg.strain_p_step)
                p.p_hot = max(0.0, p.p_hot - cfg.strain_p_step)
                p.l_demote = max(floor, p.l_demote - cfg.strain_level_step)
                p.l_fast = max(floor, p.l_fast - cfg.strain_level_step)
                # thresholds move in whole bins; a step that leaves the cold
                # cut and the level where they were would rescan for nothing
                key = self._demotion_key()
                if key is not None and key == scanned:
                    n = 0
                else:
                    cur = self.cursor
                    if (key is not None and cur.fast_by_bin is not None
                            and cur.l_demote == p.l_demote):
                        # same cooling period and level: the last scan's bins
                        # still hold, and no new parents became demotable
                        reselect_cold(self.adapter, p, self.hist, self.queues, self.cursor)
                    else:
                        self.trigger_step(promote=False)
                    scanned = self._demotion_key()
                    n = self.demotion_step(below_low)
                acts.demoted += n
                if halted:
                    acts.early_exit = True
                    break
                if n == 0 and p == before:
                    # every knob is at its clamp and nothing moved
                    break
            acts.iterations = st.strain_iterations
            if heap.usage_ratio() > p.u_high:
                self._stalled_at = heap.live_fast
            st.mode = WatermarkMode.RESTORING
            p.restore(snap)
            self.strain_exits.append((snap, p.snapshot()))
            st.saved_params = None
            st.promotions_halted = False
            st.mode = WatermarkMode.NORMAL
        elif usage < p.u_low and p.calibrated:
            acts.abundant = True
            # never aim at more hot leaves than the budget left over by the
            # fast internal nodes could hold
            n = self.hist.total_leaves
            hot_cap = 1.0
            if n:
                inner = heap.live_fast - sum(self.cursor.fast_leaf_bytes.values())
                room = max(0, heap.fast_capacity - inner)
                hot_cap = min(1.0, room / (self.adapter.leaf_size() * n))
            cold_floor = max(0.0, 1.0 - 2.0 * hot_cap)
            p.p_hot = max(p.p_hot, min(hot_cap, p.p_hot + cfg.abundant_p_step))
            p.p_cold = min(p.p_cold, max(cold_floor, p.p_cold - cfg.abundant_p_step))
            p.l_fast = min(max_depth, p.l_fast + cfg.abundant_level_step)
            p.l_demote = min(max_depth, p.l_demote + cfg.abundant_level_step)
        return acts

    # -- virtual clock --------------------------------------------------
    def tick(self, kind: TickKind):
        if self.clock.mode is not ClockMode.VIRTUAL:
            raise WrongMode("tick() needs the virtual clock")
        if kind is TickKind.TRIGGER:
            if self.state.mode is not WatermarkMode.NORMAL:
                return ScanStats()
            stats = self.trigger_step()
            self.demotion_step()
            self.promotion_step()
            return stats
        if kind is TickKind.COOLER:
            self.cooler_step()
            return None
        if kind is TickKind.WATERMARK:
            return self.watermark_step()
        raise ValueError(kind)

    # -- wall clock -----------------------------------------------------
    def start(self) -> None:
        if self.clock.mode is not ClockMode.WALL:
            raise WrongMode("start() needs the wall clock")
        self._stop.clear()
        c = self.clock
        specs = [
            ("trigger", self._trigger_loop, c.trigger_interval_ms),
            ("cooler", self._periodic(self.cooler_step), c.cooler_interval_ms),
            ("watermark", self._watermark_loop, c.watermark_interval_ms),
            ("promotion", self._executor_loop("promotion", self.promotion_step), None),
            ("demotion", self._executor_loop("demotion", self._scheduled_demotions), None),
        ]
        for name, body, interval in specs:
            t = threading.Thread(target=self._worker, args=(name, body, interval),
                                 name=f"nodetier-{name}", daemon=True)
            self._threads.append(t)
            t.start()

    def stop(self) -> None:
        self._stop.set()
        for ev in self._wake.values():
            ev.set()
        self.pressure.set()
        for t in self._threads:
            t.join()
        self._threads.clear()
        if self._failure is not None:
            err, self._failure = self._failure, None
            raise RuntimeError("background worker failed") from err

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()

    def _worker(self, name, body, interval):
        t0 = time.thread_time()
        try:
            body(interval)
        except BaseException as err:  # surfaced by stop()
            log.exception("worker %s failed", name)
            self._failure = err
        finally:
            self.worker_cpu[name] += time.thread_time() - t0

    def _periodic(self, fn):
        def loop(interval):
            while not self._stop.wait(interval / 1000):
                fn()
        return loop

    def _trigger_loop(self, interval):
        while True:
            self._wake["trigger"].wait(interval / 1000)
            self._wake["trigger"].clear()
            if self._stop.is_set():
                return
            if self.state.mode is not WatermarkMode.NORMAL:
                continue
            self.trigger_step()
            self._wake["demotion"].set()
            self._wake["promotion"].set()

    def _watermark_loop(self, interval):
        while True:
            self.pressure.wait(interval / 1000)
            if self._stop.is_set():
                return
            self.watermark_step()

    def _executor_loop(self, kind, fn):
        ev = self._wake[kind]

        def loop(_interval):
            while True:
                ev.wait()
                ev.clear()
                if self._stop.is_set():
                    return
                fn()
        return loop
