# Layer-aware placement in a B+tree.
#
# Upper levels of a tree are touched by every lookup, leaves only by the
# lookups that land on them.  Given a fast budget well below the tree's
# footprint, placement fills fast memory from the root down and keeps the
# rule that a fast node never hangs under a slow one.

import collections

from nodetier import FAST, BPlusTree, PlacementParams, TierBudget, TieredHeap
from nodetier.placement import single_boundary_violations

N = 50_000

heap = TieredHeap(TierBudget(fast_capacity=1))
params = PlacementParams()
tree = BPlusTree(heap, params=params, order=16)

# The bulk loader reports the footprint before it allocates anything, which
# gives us the chance to size the fast tier at a tenth of it.


def size_budget(nbytes):
    heap.resize_fast(nbytes // 10)
    print(f"footprint {nbytes:,} B -> fast budget {heap.fast_capacity:,} B")


tree.bulk_load(((k, k * 10) for k in range(N)), on_footprint=size_budget)
print("calibrated:", params)

# # Where did each level go?

by_depth = collections.defaultdict(lambda: [0, 0])
for node in tree.nodes():
    by_depth[tree.depth_of(node)][tree.tier_of(node) is not FAST] += 1
print("depth  fast  slow")
for d in sorted(by_depth):
    fast, slow = by_depth[d]
    print(f"{d:5d} {fast:5d} {slow:5d}")
print("fast usage", round(heap.usage_ratio(), 3))
print("boundary violations:", len(single_boundary_violations(tree)))

# # Lookups pay per node visited
#
# A lookup walks root to leaf.  The cost model charges each visit to the
# tier of the node, so the fast upper levels already pay off before any
# migration has happened.

before = heap.stats()
for k in range(0, N, 7):
    assert tree.get(k) == k * 10
after = heap.stats()
fast = after.accesses_fast - before.accesses_fast
slow = after.accesses_slow - before.accesses_slow
print(f"node visits fast {fast:,} slow {slow:,} -> fast share {fast / (fast + slow):.3f}")
