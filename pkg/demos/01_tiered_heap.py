# A tour of the simulated two-tier heap.
#
# Every block lives in exactly one tier.  The fast tier has a byte budget;
# the slow tier is unbounded unless told otherwise.  Each access is charged
# to the tier the block sits in, which is what the cost model later reads.

from nodetier import FAST, SLOW, DoubleFree, FastExhausted, TierBudget, TieredHeap

heap = TieredHeap(TierBudget(fast_capacity=4096))

# # Allocating in either tier

a = heap.alloc(1024, FAST)
b = heap.alloc(1024, SLOW)
print("a in", a.tier.name, "| b in", b.tier.name)
print("fast usage", heap.usage_ratio())

# # The budget is a hard limit

try:
    heap.alloc(8192, FAST)
except FastExhausted as err:
    print("refused:", err)

# # Charging accesses

for _ in range(10):
    heap.record_access(a)
for _ in range(3):
    heap.record_access(b, leaf=True)
st = heap.stats()
print("accesses fast/slow:", st.accesses_fast, st.accesses_slow,
      "| fast share", round(st.fast_access_ratio, 3))

# # Moving a block between tiers

heap.relocate(b, FAST)
print("b moved to", b.tier.name, "| usage now", heap.usage_ratio())

# # Retired blocks
#
# An index that unlinks a block cannot free it while readers may still hold
# it.  Retiring takes the bytes out of the usage ratio straight away; the
# space itself comes back on free.

heap.retire(a)
print("after retire: usage", heap.usage_ratio(), "| physical fast bytes", heap.used_fast)
heap.free(a)
try:
    heap.free(a)
except DoubleFree:
    print("second free of a refused")
heap.free(b)
print("empty again:", heap.used_fast, "fast bytes,", heap.used_slow, "slow bytes")
