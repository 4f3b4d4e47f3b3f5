# Migration under a skewed workload, and the watermark loop keeping fast
# memory inside its band.
#
# The engine runs on simulated time here: every operation advances the clock
# by a fixed step, so a run is reproducible and the background work
# (frequency scans, cooling, watermark checks) fires at fixed op counts.

from nodetier.bench import RunConfig, build, run

cfg = RunConfig(index="btree", distribution="skewed", hot_frac=0.05, hot_prob=0.9,
                hot_start=10_000, n_records=40_000, fast_budget_frac=0.1,
                warmup_ops=0, measure_ops=60_000, seed=3)
setup = build(cfg)
print(f"loaded {cfg.n_records:,} keys, fast usage {setup.heap.usage_ratio():.3f}")

# At load time the leaves holding the hot range sit in slow memory like any
# other leaf.  Scans count accesses per leaf, promote hot leaves together
# with their path, and demote cold ones bottom-up.

report = run(cfg, setup)

# # The timeline
#
# One row per watermark check: usage of the fast budget, the cumulative
# migration counts, and the share of node visits served from fast memory.

print("   t_ms  usage  promoted  demoted  fast_share")
for row in report.timeline[::40]:
    print(f"{row.t_ms:7.0f}  {row.usage_ratio:.3f}  {row.promoted_cum:8d}  "
          f"{row.demoted_cum:7d}  {row.fast_access_ratio:.3f}")

lo, hi = cfg.u_low, cfg.u_high
print(f"band [{lo}, {hi}], final usage {report.final_usage_ratio:.3f}")
print(f"leaf accesses served fast: {report.fast_leaf_access_ratio:.3f}")
print(f"strain episodes: {report.strain_exits}, params restored exactly: "
      f"{report.strain_restored_exact}")

# # Shrinking the budget
#
# Cutting the fast tier down to what it holds right now pushes usage over
# the high watermark.  The next
# check enters the strain loop: it tightens the hot and cold shares step by
# step and demotes until usage is back under the high watermark (stopping
# early should it sink below the low one), then puts the parameters back
# exactly as they were.

heap, engine = setup.heap, setup.engine
before = engine.params.snapshot()
heap.resize_fast(int(heap.used_fast / 0.99))
print(f"\nbudget cut to {heap.fast_capacity:,} B: usage {heap.usage_ratio():.3f}")
acts = engine.watermark_step()
print(f"strain loop: {acts.iterations} steps, {acts.demoted} demotions, "
      f"usage now {heap.usage_ratio():.3f}")
print("parameters unchanged afterwards:", engine.params == before)
