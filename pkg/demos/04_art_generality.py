# The same placement machinery on an adaptive radix tree.
#
# Nothing in the engine knows which index it drives.  It talks to a small
# adapter surface (walk the leaves, find a parent, relocate a node), so the
# radix tree gets layer-aware placement and migration without any
# index-specific policy code.

import collections

from nodetier import ART, FAST, Engine, PlacementParams, TickKind, TierBudget, TieredHeap
from nodetier.placement import single_boundary_violations
from nodetier.workloads import SkewedPartition

N = 30_000
heap = TieredHeap(TierBudget(fast_capacity=1))
params = PlacementParams()
tree = ART(heap, params=params)
tree.bulk_load(((k, k) for k in range(N)),
               on_footprint=lambda nbytes: heap.resize_fast(nbytes // 10))

# Inner nodes grow from 4 to 16, 48 and 256 slots as they fill, so the
# levels differ in size far more than in a B+tree.

kinds = collections.Counter()
fast_by_depth = collections.Counter()
for node in tree.nodes(include_leaves=False):
    kinds[type(node).__name__] += 1
    if tree.tier_of(node) is FAST:
        fast_by_depth[tree.depth_of(node)] += 1
print("inner node kinds:", dict(kinds))
print("fast inner nodes by depth:", dict(sorted(fast_by_depth.items())))
print(f"max depth {tree.max_depth()}, fast usage {heap.usage_ratio():.3f}")

# # Driving the engine by hand
#
# Each tick kind can be run directly.  A scan rebuilds the frequency
# histogram and queues work; the executors then move nodes.  The first
# rounds only make room; promotion starts once the counters of the hot keys
# clear the hot threshold.

engine = Engine(tree, heap, params)
start, length = SkewedPartition(0.05, 0.9, N // 3).hot_range(N)
hot = range(start, start + length)
for round_ in range(8):
    for k in hot:
        tree.get(k)
    engine.tick(TickKind.TRIGGER)
    engine.tick(TickKind.WATERMARK)
    fast_hot = sum(tree.tier_of(leaf) is FAST for leaf in tree.leaves() if leaf.key in hot)
    print(f"round {round_}: hot leaves fast {fast_hot}/{length}, "
          f"usage {heap.usage_ratio():.3f}, promoted {engine.promoted}, demoted {engine.demoted}")

print("boundary violations:", len(single_boundary_violations(tree)))
tree.check()
