"""Acceptance suite: one test group per criterion, each printing a PASS or
FAIL line in the terminal summary (see ``conftest.py``).

Criteria 1-6 run against both indexes through the same adapter surface.
"""
import ast
import itertools
import math
import random
import sys
import threading
import time
from pathlib import Path

import pytest

import oracles
from conftest import ToyTree, random_shape, random_tiers
import nodetier
from nodetier import ART, BPlusTree
from nodetier.art import node_layouts as art_layouts
from nodetier.bench import RunConfig, build, compare, run
from nodetier.btree import node_layouts as btree_layouts
from nodetier.engine import Engine, MigrationQueues, TickKind, run_demotions
from nodetier.heap import FAST, SLOW, TierBudget, TieredHeap
from nodetier.placement import (
    FreqHistogram,
    PlacementParams,
    TreeAdapter,
    cool,
    rebuild_histogram,
    single_boundary_violations,
    update_thresholds,
)
from nodetier.workloads import SkewedPartition

KINDS = ["btree", "art"]
criterion = pytest.mark.criterion


def new_index(kind, heap, params, order=4):
    if kind == "btree":
        return BPlusTree(heap, params=params, order=order)
    return ART(heap, params=params)


def index_keys(kind, rng, n):
    if kind == "btree":
        return rng.sample(range(10 * n), n)
    # clustered bytes so the radix tree has prefixes and several node widths
    out = set()
    while len(out) < n:
        out.add((rng.randrange(8) << 40) | (rng.randrange(16) << 16) | rng.randrange(64))
    return list(out)


def structure(t):
    """Shape, tiers, depths and nodes of a live index keyed by structural
    path (child positions from the root); relocation keeps paths stable."""
    shape, tiers, depth, nodes = {}, {}, {}, {}
    stack = [((), t.root())]
    while stack:
        path, node = stack.pop()
        nodes[path] = node
        tiers[path] = t.tier_of(node)
        depth[path] = t.depth_of(node)
        kids = [] if t.is_leaf(node) else t.children(node)
        shape[path] = [path + (i,) for i in range(len(kids))]
        stack.extend((path + (i,), c) for i, c in enumerate(kids))
    return shape, tiers, depth, nodes


def random_boundary_tiers(rng, shape, root):
    p = rng.random()
    tiers = {}
    stack = [(root, True)]
    while stack:
        n, parent_fast = stack.pop()
        tiers[n] = FAST if parent_fast and rng.random() < p else SLOW
        stack.extend((c, tiers[n] is FAST) for c in shape[n])
    return tiers


def apply_tiers(t, target):
    """Relocate children before parents so the boundary holds at each step."""
    shape, _, _, nodes = structure(t)
    order = []
    stack = [((), False)]
    while stack:
        path, done = stack.pop()
        if done:
            order.append(path)
            continue
        stack.append((path, True))
        stack.extend((c, False) for c in shape[path])
    for path in order:
        if target[path] is SLOW:
            t.relocate(nodes[path], SLOW)


# ---------------------------------------------------------------------------
# 1. single boundary under concurrent stress

TICKS = ((TickKind.WATERMARK, 100), (TickKind.TRIGGER, 500), (TickKind.COOLER, 2000))


def stress(kind, n_threads=4, total_ops=100_000, walks=100, preload=20_000, seed=1):
    heap = TieredHeap(TierBudget(fast_capacity=1))
    params = PlacementParams()
    t = new_index(kind, heap, params, order=16)
    t.bulk_load(((k * 2, k) for k in range(preload)),
                on_footprint=lambda b: heap.resize_fast(max(1, b // 5)))
    engine = Engine(t, heap, params)
    counter = itertools.count(1)
    tick_lock = threading.Lock()
    found = []
    errors = []

    def quiescent():
        found.append(len(single_boundary_violations(t)))
        t.check()

    barrier = threading.Barrier(n_threads, action=quiescent)
    per_round = total_ops // n_threads // walks
    hot = preload // 10

    def worker(tid):
        rng = random.Random(seed * 100 + tid)
        try:
            for _ in range(walks):
                for _ in range(per_round):
                    k = rng.randrange(hot) if rng.random() < 0.8 else rng.randrange(4 * preload)
                    r = rng.random()
                    if r < 0.5:
                        t.get(k)
                    elif r < 0.65:
                        t.update(k, tid)
                    elif r < 0.85:
                        t.insert(k, tid)
                    else:
                        t.remove(k)
                    i = next(counter)
                    due = [kind_ for kind_, every in TICKS if i % every == 0]
                    if due or engine.pressure.is_set():
                        with tick_lock:
                            for kind_ in due:
                                engine.tick(kind_)
                            if engine.pressure.is_set():
                                engine.tick(TickKind.WATERMARK)
                barrier.wait()
        except BaseException as err:  # surfaced below
            errors.append(err)
            barrier.abort()

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(n_threads)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    return found, errors, heap, engine


@criterion("C1", "C11", title="single boundary holds under 4-thread stress with virtual ticks")
@pytest.mark.parametrize("kind", KINDS)
def test_c1_single_boundary_stress(kind, record_property):
    t0 = time.perf_counter()
    found, errors, heap, engine = stress(kind)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"{kind}: {len(found)} walks, {sum(found)} violations, "
                                f"{engine.promoted}+{engine.demoted} moves, {elapsed:.1f}s")
    assert not errors, errors
    assert len(found) == 100
    assert sum(found) == 0
    assert engine.promoted + engine.demoted > 0
    assert heap.stats().stale_accesses == 0
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 2. demotion equals the reference queue simulation

def toy_demotion_case(rng):
    shape = random_shape(rng, 64)
    tiers = random_tiers(rng, shape)
    heap = TieredHeap(TierBudget(fast_capacity=1 << 30))
    leaves = [n for n in shape if not shape[n]]
    cold = rng.sample(leaves, rng.randint(0, len(leaves)))
    freqs = {n: (0 if n in cold else rng.randint(2, 50)) for n in leaves}
    t = ToyTree.from_shape(heap, shape, tiers, freqs)
    depth = {n.name: n.meta.level for n in t.nodes()}
    l_demote = rng.choice([None] + list(range(max(depth.values()) + 2)))
    rng.shuffle(cold)
    want = oracles.demotion(shape, tiers, depth, freqs, cold, l_demote, t_cold=2)
    params = PlacementParams(l_fast=64, l_demote=l_demote, p_hot=0.1, p_cold=0.5, t_cold=2)
    q = MigrationQueues()
    by = t.by_name()
    for n in cold:
        q.push_demotion(by[n])
    run_demotions(t, q, params, heap)
    return t.placement(), want, shape


@criterion("C2", title="run_demotions matches the reference queue simulation")
def test_c2_demotion_oracle_toy_trees(record_property):
    rng = random.Random(2024)
    t0 = time.perf_counter()
    mismatches = 0
    for _ in range(1000):
        got, want, shape = toy_demotion_case(rng)
        if got != want:
            mismatches += 1
        assert oracles.boundary_ok(shape, got)
    elapsed = time.perf_counter() - t0
    record_property("measured", f"toy: 1000 trees, {mismatches} mismatches, {elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 10


@criterion("C2", "C11")
@pytest.mark.parametrize("kind", KINDS)
def test_c2_demotion_oracle_indexes(kind, record_property):
    rng = random.Random(7 if kind == "btree" else 8)
    mismatches = 0
    cases = 100
    for _ in range(cases):
        heap = TieredHeap(TierBudget(fast_capacity=1 << 30))
        params = PlacementParams(l_fast=64, l_demote=64, p_hot=0.1, p_cold=0.5, t_cold=2)
        t = new_index(kind, heap, params)
        for k in index_keys(kind, rng, rng.randint(8, 40)):
            t.insert(k, k)
        shape, _, _, _ = structure(t)
        apply_tiers(t, random_boundary_tiers(rng, shape, ()))
        shape, tiers, depth, nodes = structure(t)
        leaves = [p for p in shape if not shape[p]]
        cold = rng.sample(leaves, rng.randint(0, len(leaves)))
        freqs = {}
        for p in leaves:
            freqs[p] = 0 if p in cold else rng.randint(2, 50)
            t.meta(nodes[p]).freq = freqs[p]
        params.l_demote = rng.choice([None] + sorted(set(depth.values())) + [max(depth.values()) + 1])
        rng.shuffle(cold)
        want = oracles.demotion(shape, tiers, depth, freqs, cold, params.l_demote, t_cold=2)
        q = MigrationQueues()
        for p in cold:
            q.push_demotion(nodes[p])
        run_demotions(t, q, params, heap)
        after_shape, got, _, _ = structure(t)
        assert after_shape == shape
        mismatches += got != want
        assert single_boundary_violations(t) == []
        t.check()
    record_property("measured", f"{kind}: {cases} trees, {mismatches} mismatches")
    assert mismatches == 0


# ---------------------------------------------------------------------------
# 3. thresholds equal the percentile scan over the multiset

def random_freqs(rng, n):
    style = rng.random()
    if style < 0.3:
        return [rng.randint(0, 8) for _ in range(n)]
    if style < 0.6:
        return [min(65535, int(rng.paretovariate(1.2)) - 1) for _ in range(n)]
    return [rng.randint(0, 65535) for _ in range(n)]


@criterion("C3", title="update_thresholds equals the multiset percentile scan; t_cold < t_hot")
def test_c3_threshold_oracle(record_property):
    rng = random.Random(33)
    mismatches = 0
    for _ in range(1000):
        freqs = random_freqs(rng, rng.randint(1, 400))
        p_hot, p_cold = rng.random(), rng.random()
        got = update_thresholds(FreqHistogram.of(freqs), PlacementParams(p_hot=p_hot, p_cold=p_cold))
        mismatches += got != oracles.thresholds(freqs, p_hot, p_cold)
        assert got[1] < got[0]
    record_property("measured", f"histograms: 1000, {mismatches} mismatches")
    assert mismatches == 0


@criterion("C3", "C11")
@pytest.mark.parametrize("kind", KINDS)
def test_c3_threshold_oracle_indexes(kind):
    rng = random.Random(34)
    for _ in range(30):
        t = new_index(kind, TieredHeap(TierBudget(fast_capacity=1 << 30)), PlacementParams())
        t.bulk_load((k, k) for k in sorted(index_keys(kind, rng, 300)))
        freqs = random_freqs(rng, 300)
        for leaf, f in zip(t.leaves(), freqs):
            t.meta(leaf).freq = f
        live = [t.meta(leaf).freq for leaf in t.leaves()]
        p_hot, p_cold = rng.random(), rng.random()
        got = update_thresholds(rebuild_histogram(t), PlacementParams(p_hot=p_hot, p_cold=p_cold))
        assert got == oracles.thresholds(live, p_hot, p_cold)
        assert got[1] < got[0]


# ---------------------------------------------------------------------------
# 4. cooling halves every counter and keeps the histogram exact

def oracle_bins(freqs):
    bins = [0] * oracles.NUM_BINS
    for f in freqs:
        bins[0 if f <= 1 else f.bit_length() - 1] += 1
    return bins


@criterion("C4", title="cool then rebuild equals the halved-frequency oracle")
def test_c4_cooling_toy_trees():
    rng = random.Random(44)
    for _ in range(300):
        shape = random_shape(rng, 64)
        leaves = [n for n in shape if not shape[n]]
        freqs = dict(zip(leaves, random_freqs(rng, len(leaves))))
        heap = TieredHeap(TierBudget(fast_capacity=1 << 30))
        t = ToyTree.from_shape(heap, shape, random_tiers(rng, shape), freqs)
        hist = rebuild_histogram(t)
        cool(t, hist)
        halved = {n: f // 2 for n, f in freqs.items()}
        assert {n.name: n.meta.freq for n in t.leaves()} == halved
        twin = ToyTree.from_shape(TieredHeap(TierBudget(fast_capacity=1 << 30)), shape,
                                  {n: SLOW for n in shape}, halved)
        assert hist == rebuild_histogram(twin) == rebuild_histogram(t)
        assert hist.bins == oracle_bins(halved.values())


@criterion("C4", "C11")
@pytest.mark.parametrize("kind", KINDS)
def test_c4_cooling_indexes(kind):
    rng = random.Random(45)
    for _ in range(20):
        t = new_index(kind, TieredHeap(TierBudget(fast_capacity=1 << 30)), PlacementParams())
        t.bulk_load((k, k) for k in sorted(index_keys(kind, rng, 500)))
        for leaf in t.leaves():
            t.meta(leaf).freq = rng.choice([0, 1, 2, 3, rng.randint(0, 65535), 65535])
        old = [t.meta(leaf).freq for leaf in t.leaves()]
        hist = rebuild_histogram(t)
        cool(t, hist)
        assert [t.meta(leaf).freq for leaf in t.leaves()] == [f // 2 for f in old]
        assert hist.bins == oracle_bins(f // 2 for f in old)
        assert hist == rebuild_histogram(t)


# ---------------------------------------------------------------------------
# 5. usage stays in the watermark band

# 20 us of simulated time per operation: a million keys need that many
# accesses per cooling period before the counters tell hot from cold
C5_MS_PER_OP = 0.02
C5_WARMUP = 200_000
C5_SAMPLES = 300


@pytest.mark.slow
@criterion("C5", "C11", title="usage stays within [u_low-0.05, u_high+0.01]; strain exits restore params")
@pytest.mark.parametrize("kind", KINDS)
def test_c5_watermark_containment(kind, record_property):
    cfg = RunConfig(index=kind, distribution="skewed", n_records=1_000_000, fast_budget_frac=0.1,
                    warmup_ops=C5_WARMUP, measure_ops=C5_SAMPLES * round(100 / C5_MS_PER_OP),
                    watermark_interval_ms=100, virtual_ms_per_op=C5_MS_PER_OP)
    setup = build(cfg)
    report = run(cfg, setup)
    lo, hi = cfg.u_low - 0.05, cfg.u_high + 0.01
    usage = [s.usage_ratio for s in report.timeline]
    inside = sum(lo <= u <= hi for u in usage) / len(usage)
    exits = setup.engine.strain_exits
    record_property("measured", f"{kind}: {inside:.1%} of {len(usage)} samples in band, "
                                f"usage {min(usage):.3f}..{max(usage):.3f}, "
                                f"{len(exits)} strain exits")
    assert len(usage) == C5_SAMPLES
    assert inside >= 0.95
    assert all(snap == restored for snap, restored in exits)
    assert report.strain_restored_exact


# ---------------------------------------------------------------------------
# 6. the hot path ends up in fast memory

def hot_budget(cfg):
    """Bytes of all internal nodes plus every leaf holding a hot key."""
    st = build(cfg.replace(fast_capacity_bytes=1 << 40, fast_budget_frac=None))
    t = st.tree
    start, length = SkewedPartition(cfg.hot_frac, cfg.hot_prob, cfg.hot_start).hot_range(
        cfg.n_records)
    inner = sum(t.size_of(x) for x in t.nodes(include_leaves=False))
    hot = 0
    for leaf in t.leaves():
        keys = leaf.keys if cfg.index == "btree" else [leaf.key]
        if any(start <= k < start + length for k in keys):
            hot += t.size_of(leaf)
    return inner + hot


@criterion("C6", "C11", title=">= 85% of leaf accesses hit fast leaves after 20 trigger cycles")
@pytest.mark.parametrize("kind", KINDS)
def test_c6_hot_path_residency(kind, record_property):
    n = 10_000
    base = RunConfig(index=kind, distribution="skewed", hot_frac=0.05, hot_prob=0.9,
                     hot_start=n // 2, n_records=n, warmup_ops=20 * 500, measure_ops=10 * 500)
    need = hot_budget(base)
    cap = math.ceil(need / base.u_high)
    report = run(base.replace(fast_capacity_bytes=cap, fast_budget_frac=None))
    record_property("measured", f"{kind}: fast leaf share {report.fast_leaf_access_ratio:.3f} "
                                f"(budget {cap} B for {need} B hot path)")
    assert report.fast_leaf_access_ratio >= 0.85


# ---------------------------------------------------------------------------
# 7. simulated cost beats both baselines

@pytest.mark.slow
@criterion("C7", title="B+tree Zipf cost/op >= 20% below weighted_interleave(0.2), >= 5% below internode_fast")
def test_c7_directional_cost_win(record_property):
    base = RunConfig(index="btree", mix="C", distribution="zipfian", theta=0.99,
                     n_records=100_000, fast_budget_frac=0.2, warmup_ops=20_000,
                     measure_ops=30_000, seed=11)
    vs_wi = compare(base.replace(policy="weighted_interleave(0.2)"), base)
    vs_inf = compare(base.replace(policy="internode_fast"), base)
    cut_wi, cut_inf = 1 - vs_wi.cost_ratio, 1 - vs_inf.cost_ratio
    record_property("measured", f"cost/op {vs_wi.b.cost_per_op:.3f} vs "
                                f"{vs_wi.a.cost_per_op:.3f} (-{cut_wi:.1%}) and "
                                f"{vs_inf.a.cost_per_op:.3f} (-{cut_inf:.1%})")
    assert cut_wi >= 0.20
    assert cut_inf >= 0.05


# ---------------------------------------------------------------------------
# 8. recovery after the hot region moves

C8_PRE = 25_000
CYCLE = 500


def cycle_ratios(timeline, per_cycle):
    return [sum(s.fast_leaf_access_ratio for s in timeline[i:i + per_cycle]) / per_cycle
            for i in range(0, len(timeline) - per_cycle + 1, per_cycle)]


@pytest.mark.slow
@criterion("C8", title="fast-leaf share recovers to >= 90% of pre-shift within 40 trigger cycles")
@pytest.mark.parametrize("kind", KINDS)
def test_c8_recovery_after_shift(kind, record_property):
    n = 10_000
    cfg = RunConfig(index=kind, distribution="skewed", n_records=n, fast_budget_frac=0.2,
                    warmup_ops=0, measure_ops=C8_PRE + 40 * CYCLE, shift_period=C8_PRE,
                    shift_displacement=n // 2)
    report = run(cfg)
    # every sample covers one watermark interval; each read touches one leaf
    per_cycle = CYCLE // 100
    cycles = cycle_ratios(report.timeline, per_cycle)
    k = C8_PRE // CYCLE
    pre = sum(cycles[k - 10:k]) / 10
    after = cycles[k:k + 40]
    took = next((i + 1 for i, c in enumerate(after) if c >= 0.9 * pre), None)
    record_property("measured", f"{kind}: pre-shift {pre:.3f}, first post-shift cycle "
                                f"{after[0]:.3f}, recovered after {took} cycles")
    assert after[0] < 0.9 * pre  # the shift really displaced the hot set
    assert took is not None and took <= 40


# ---------------------------------------------------------------------------
# 9. linearizable under forced migrations

def lin_keys(kind):
    if kind == "btree":
        return [10, 11, 12, 13, 14, 15], [k for k in range(0, 60) if not 10 <= k <= 15]
    base = 0x0102030405060700
    test = [base | b for b in (1, 2, 3, 200)] + [0x0102030499000000, 0x0102030405060800]
    # 13 siblings: the shared node sits just below the 16-child width
    return test, [base | b for b in range(20, 33)]


def one_history(kind, rng):
    heap = TieredHeap(TierBudget(fast_capacity=1 << 30))
    t = new_index(kind, heap, PlacementParams(l_fast=64, l_demote=64))
    test_keys, filler = lin_keys(kind)
    pre = rng.sample(test_keys, rng.randint(0, len(test_keys)))
    t.bulk_load(sorted((k, -k) for k in set(filler) | set(pre)))
    initial = {k: -k for k in pre}
    n_threads = rng.randint(2, 4)
    per = 40 // n_threads
    clock = itertools.count()
    history = []
    start = threading.Barrier(n_threads + 1)
    done = threading.Event()
    errors = []

    def migrate(r):
        nodes = list(t.nodes())
        node = r.choice(nodes)
        t.relocate(node, SLOW if t.tier_of(node) is FAST else FAST)

    def worker(tid):
        r = random.Random(rng.random())
        start.wait()
        try:
            for j in range(per):
                k = r.choice(test_keys)
                name = r.choice(("insert", "update", "remove", "get", "get"))
                value = tid * 1000 + j + 1
                migrate(r)
                if r.random() < 0.5:
                    time.sleep(0)
                c = next(clock)
                if name == "insert":
                    out = t.insert(k, value)
                elif name == "update":
                    out = t.update(k, value)
                elif name == "remove":
                    out = t.remove(k)
                else:
                    out = t.get(k)
                ret = next(clock)
                history.append((c, ret, (name, k, value), out))
        except BaseException as err:
            errors.append(err)

    def migrator():
        r = random.Random(rng.random())
        start.wait()
        while not done.is_set():
            migrate(r)

    ws = [threading.Thread(target=worker, args=(i,)) for i in range(n_threads)]
    m = threading.Thread(target=migrator)
    for th in ws + [m]:
        th.start()
    for th in ws:
        th.join()
    done.set()
    m.join()
    t.check()
    return history, initial, errors, heap


@pytest.fixture
def racy_scheduler():
    old = sys.getswitchinterval()
    sys.setswitchinterval(1e-6)
    yield
    sys.setswitchinterval(old)


@criterion("C9", title="bounded histories are linearizable with migrations injected")
@pytest.mark.parametrize("kind", KINDS)
def test_c9_linearizability(kind, racy_scheduler, record_property):
    rng = random.Random(99 if kind == "btree" else 98)
    bad = 0
    stale = 0
    runs = 150
    for _ in range(runs):
        history, initial, errors, heap = one_history(kind, rng)
        assert not errors, errors
        assert len(history) <= 40
        bad += not oracles.linearizable(history, initial)
        stale += heap.stats().stale_accesses
    record_property("measured", f"{kind}: {runs} histories, {bad} non-linearizable, "
                                f"{stale} stale accesses")
    assert bad == 0
    assert stale == 0


def test_linearizability_checker_rejects_bad_history():
    # a read that returns a value nobody wrote, and a lost update
    assert not oracles.linearizable([(0, 1, ("get", 1, 0), 7)], {})
    h = [(0, 1, ("insert", 1, 5), None), (2, 3, ("get", 1, 0), None)]
    assert not oracles.linearizable(h, {})
    ok = [(0, 3, ("insert", 1, 5), None), (1, 2, ("get", 1, 0), None)]
    assert oracles.linearizable(ok, {})


# ---------------------------------------------------------------------------
# 10. metadata overhead

@criterion("C10", title="managed layouts add exactly 1 byte per internal node, 3 per leaf")
def test_c10_metadata_overhead():
    for order in (4, 16, 64):
        plain, managed = btree_layouts(order, managed=False), btree_layouts(order)
        assert sum(managed["internal"].values()) - sum(plain["internal"].values()) == 1
        assert sum(managed["leaf"].values()) - sum(plain["leaf"].values()) == 3
    plain, managed = art_layouts(managed=False), art_layouts()
    for kind in ("node4", "node16", "node48", "node256"):
        assert sum(managed[kind].values()) - sum(plain[kind].values()) == 1
    assert sum(managed["leaf"].values()) - sum(plain["leaf"].values()) == 3


# ---------------------------------------------------------------------------
# 11. generality: no index-specific code in the generic layers

GENERIC = ("placement.py", "engine.py")


@criterion("C11", title="criteria 1-6 pass on both indexes; generic layers never name an index")
def test_c11_generic_layers_do_not_dispatch_on_index():
    src = Path(nodetier.__file__).parent
    banned = {"btree", "art", "BPlusTree", "ART", "Leaf", "Internal", "Node4", "Node16",
              "Node48", "Node256"}
    for name in GENERIC:
        tree = ast.parse((src / name).read_text())
        for node in ast.walk(tree):
            if isinstance(node, ast.ImportFrom):
                assert (node.module or "").split(".")[-1] not in banned, (name, node.module)
            elif isinstance(node, ast.Import):
                assert all(a.name.split(".")[-1] not in banned for a in node.names), name
            elif isinstance(node, ast.Name):
                assert node.id not in banned, (name, node.id)
    heap = TieredHeap(TierBudget(fast_capacity=1 << 20))
    assert isinstance(BPlusTree(heap), TreeAdapter)
    assert isinstance(ART(heap), TreeAdapter)


# ---------------------------------------------------------------------------
# 12. background work is cheap on a wall clock

@pytest.mark.slow
@criterion("C12", title="wall-clock worker CPU share < 2% of total CPU")
def test_c12_background_overhead(record_property):
    cfg = RunConfig(index="btree", clock="wall", threads=4, distribution="zipfian",
                    n_records=30_000, warmup_ops=5_000, measure_ops=1_000_000)
    report = run(cfg)
    record_property("measured", f"worker share {report.worker_cpu_share:.2%} of "
                                f"{report.cpu_total_s:.1f}s CPU")
    assert report.worker_cpu_share < 0.02
