# Comparing placement policies on one operation stream.
#
# Three policies share the same tree, budget and workload:
#   sinlk                      layer-aware placement plus migration
#   internode_fast             every internal node fast, every leaf slow
#   weighted_interleave(0.2)   a fixed share of nodes fast, chosen at random
# Cost per operation weighs each node visit by the price of its tier.

import json
import tempfile
from pathlib import Path

from nodetier.bench import RunConfig, compare, read_timeline, run

base = RunConfig(index="btree", distribution="zipfian", theta=0.99, n_records=20_000,
                 fast_budget_frac=0.2, warmup_ops=10_000, measure_ops=20_000, seed=11)

for policy in ("sinlk", "internode_fast", "weighted_interleave(0.2)"):
    r = run(base.replace(policy=policy))
    print(f"{policy:<26} cost/op {r.cost_per_op:6.3f}   fast visits {r.fast_access_ratio:.3f}"
          f"   fast leaf hits {r.fast_leaf_access_ratio:.3f}")

# # A side-by-side table
#
# compare() refuses configs whose workloads differ, so any gap in the table
# comes from placement alone.

cmp = compare(base.replace(policy="weighted_interleave(0.2)"), base)
print()
print(cmp.table())

# # Reports on disk
#
# The command line writes the same two files: report.json with the run's
# numbers and timeline.csv with one row per watermark check.  The run below
# matches
#     python3 -m nodetier run --config <file> --out <dir>

with tempfile.TemporaryDirectory() as tmp:
    report = run(base)
    report_path, timeline_path = report.write(tmp)
    core = json.loads(Path(report_path).read_text())
    print()
    print("report.json keys:", ", ".join(sorted(core)[:8]), "...")
    rows = read_timeline(timeline_path)
    print("timeline.csv columns:", ", ".join(rows[0]))
    print("last row:", rows[-1])
