"""Benchmark harness: build heap, index, policy and engine from a config,
drive a workload through it and report cost, latency and placement metrics.

Configs are flat JSON objects or ``key = value`` lines.  With the virtual
clock everything runs on the calling thread and one operation stands for
``virtual_ms_per_op`` milliseconds, so the background ticks fire every
500/2000/100 operations by default and a run is exactly repeatable.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .art import ART
from .btree import BPlusTree
from .engine import Clock, ClockMode, Engine, EngineConfig, TickKind
from .heap import FAST, SLOW, TierBudget, TieredHeap
from .placement import LayerAwarePolicy, PlacementParams
from .workloads import (
    YCSB,
    Latest,
    Mix,
    OpKind,
    OpStream,
    Shift,
    SkewedPartition,
    Trace,
    Uniform,
    WorkloadSpec,
    Zipfian,
    shift_hot_region,
)

TIMELINE_FIELDS = ("t_ms", "usage_ratio", "promoted_cum", "demoted_cum", "fast_access_ratio")


class ConfigError(ValueError):
    pass


class RunFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# baseline policies

class WeightedInterleavePolicy:
    """Each new node goes fast with probability ``fast_frac`` while the fast
    arena has room, otherwise slow.  No structural rule is kept."""

    preserve_boundary = False

    def __init__(self, heap: TieredHeap, fast_frac: float, seed: int = 0):
        if not 0 <= fast_frac <= 1:
            raise ValueError("fast_frac must be in [0, 1]")
        self.heap = heap
        self.fast_frac = fast_frac
        self._rng = random.Random(seed)
        self._lock = threading.Lock()

    def tier_for(self, depth, parent_tier, is_leaf, size):
        with self._lock:
            draw = self._rng.random()
        if draw < self.fast_frac and self.heap.fast_headroom() >= size:
            return FAST
        return SLOW

    def prepare(self, max_depth, total_leaves, leaf_size):
        pass


class InternodeFastPolicy:
    """Internal nodes fast while the fast arena has room; leaves always slow."""

    preserve_boundary = False

    def __init__(self, heap: TieredHeap):
        self.heap = heap

    def tier_for(self, depth, parent_tier, is_leaf, size):
        if not is_leaf and self.heap.fast_headroom() >= size:
            return FAST
        return SLOW

    def prepare(self, max_depth, total_leaves, leaf_size):
        pass


# ---------------------------------------------------------------------------
# config

_POLICY_RE = re.compile(r"^\s*(sinlk|internode_fast|weighted_interleave)\s*(?:\(\s*([0-9.eE+-]+)\s*\))?\s*$")
_DISTRIBUTIONS = ("zipfian", "skewed", "uniform", "latest", "trace")


@dataclass
class RunConfig:
    index: str = "btree"
    policy: str = "sinlk"
    fast_frac: float = 0.2
    # budget: an absolute size, or a share of the loaded tree's footprint
    fast_capacity_bytes: Optional[int] = None
    fast_budget_frac: Optional[float] = 0.2
    c_fast: float = 1.0
    c_slow: float = 2.0
    delay_inject: Any = "off"
    order: int = 16
    mix: Any = "C"
    distribution: str = "zipfian"
    theta: float = 0.99
    hot_frac: float = 0.05
    hot_prob: float = 0.90
    hot_start: int = 0
    latest_window: float = 0.01
    trace: Optional[str] = None
    n_records: int = 100_000
    key_width: int = 8
    value_size: int = 8
    shift_period: Optional[int] = None
    shift_displacement: int = 0
    threads: int = 1
    warmup_ops: int = 10_000
    measure_ops: int = 100_000
    seed: int = 0
    clock: str = "virtual"
    trigger_interval_ms: float = 500
    cooler_interval_ms: float = 2000
    watermark_interval_ms: float = 100
    virtual_ms_per_op: float = 1.0
    u_high: float = 0.95
    u_low: float = 0.85
    wake_threshold: int = 1024
    cold_slow_fraction: float = 0.1
    strain_p_step: float = 0.05
    strain_level_step: int = 1
    abundant_p_step: float = 0.025
    abundant_level_step: int = 1
    residency_floor: float = 0.5
    out: Optional[str] = None

    def __post_init__(self):
        self.validate()

    # -- parsing --------------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(names))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = _coerce(key, value, names[key].default)
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from None
        return cls.from_mapping(parse_config_text(text))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- checks ---------------------------------------------------------
    def policy_kind(self) -> tuple[str, Optional[float]]:
        m = _POLICY_RE.match(str(self.policy))
        if not m:
            raise ConfigError(f"unknown policy {self.policy!r}")
        name, arg = m.group(1), m.group(2)
        if arg is not None and name != "weighted_interleave":
            raise ConfigError(f"policy {name} takes no argument")
        if name == "weighted_interleave":
            frac = float(arg) if arg is not None else self.fast_frac
            if not 0 <= frac <= 1:
                raise ConfigError("weighted_interleave fraction must be in [0, 1]")
            return name, frac
        return name, None

    def validate(self) -> None:
        if self.index not in ("btree", "art"):
            raise ConfigError(f"index must be btree or art, not {self.index!r}")
        self.policy_kind()
        if (self.fast_capacity_bytes is None) == (self.fast_budget_frac is None):
            if self.fast_capacity_bytes is not None:
                raise ConfigError("give fast_capacity_bytes or fast_budget_frac, not both")
            raise ConfigError("one of fast_capacity_bytes / fast_budget_frac is required")
        if self.fast_capacity_bytes is not None and self.fast_capacity_bytes <= 0:
            raise ConfigError("fast_capacity_bytes must be > 0")
        if self.fast_budget_frac is not None and not 0 < self.fast_budget_frac <= 1:
            raise ConfigError("fast_budget_frac must be in (0, 1]")
        if not self.c_slow >= self.c_fast > 0:
            raise ConfigError("need c_slow >= c_fast > 0")
        self.delay_ns()
        if self.distribution not in _DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {', '.join(_DISTRIBUTIONS)}")
        if self.distribution == "trace" and not self.trace:
            raise ConfigError("distribution trace needs a trace path")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.warmup_ops < 0 or self.measure_ops <= 0:
            raise ConfigError("need warmup_ops >= 0 and measure_ops > 0")
        if self.clock not in ("virtual", "wall"):
            raise ConfigError("clock must be virtual or wall")
        for name in ("trigger_interval_ms", "cooler_interval_ms", "watermark_interval_ms",
                     "virtual_ms_per_op"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 <= self.u_low < self.u_high <= 1:
            raise ConfigError("need 0 <= u_low < u_high <= 1")
        if self.shift_period is not None:
            if self.distribution != "skewed":
                raise ConfigError("shift_period needs the skewed distribution")
            if self.shift_period <= 0:
                raise ConfigError("shift_period must be > 0")
        try:
            spec = self.workload()
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.index == "art" and spec.mix.scan > 0:
            raise ConfigError("the art index has no range scan; use a mix without scans")

    def delay_ns(self) -> Optional[tuple[int, int]]:
        d = self.delay_inject
        if d in (None, "off", False):
            return None
        try:
            fast, slow = (int(x) for x in d)
        except (TypeError, ValueError):
            raise ConfigError("delay_inject must be 'off' or [ns_fast, ns_slow]") from None
        if fast < 0 or slow < 0:
            raise ConfigError("delay_inject values must be >= 0")
        return fast, slow

    def workload(self) -> WorkloadSpec:
        mix = self.mix
        if isinstance(mix, str):
            if mix.upper() not in YCSB:
                raise ConfigError(f"unknown mix {mix!r}; use A-F or a percentage table")
            mix = YCSB[mix.upper()]
        elif isinstance(mix, dict):
            bad = set(mix) - {"read", "update", "insert", "scan", "rmw"}
            if bad:
                raise ConfigError(f"unknown mix entries: {', '.join(sorted(bad))}")
            mix = Mix(**mix)
        else:
            raise ConfigError("mix must be a YCSB letter or a percentage table")
        dist = {
            "zipfian": lambda: Zipfian(self.theta),
            "skewed": lambda: SkewedPartition(self.hot_frac, self.hot_prob, self.hot_start),
            "uniform": Uniform,
            "latest": lambda: Latest(self.theta, self.latest_window),
            "trace": lambda: Trace(str(self.trace)),
        }[self.distribution]()
        shift = None
        if self.shift_period is not None:
            shift = Shift(self.shift_period, self.shift_displacement)
        return WorkloadSpec(mix=mix, distribution=dist, n_records=self.n_records,
                            key_width=self.key_width, value_size=self.value_size,
                            shift=shift)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            wake_threshold=self.wake_threshold,
            cold_slow_fraction=self.cold_slow_fraction,
            strain_p_step=self.strain_p_step,
            strain_level_step=self.strain_level_step,
            abundant_p_step=self.abundant_p_step,
            abundant_level_step=self.abundant_level_step,
            residency_floor=self.residency_floor,
        )

    def ticks_every(self) -> dict[TickKind, int]:
        """Operations between virtual ticks of each kind."""
        per = self.virtual_ms_per_op
        return {
            TickKind.WATERMARK: max(1, round(self.watermark_interval_ms / per)),
            TickKind.TRIGGER: max(1, round(self.trigger_interval_ms / per)),
            TickKind.COOLER: max(1, round(self.cooler_interval_ms / per)),
        }


def _coerce(key: str, value, default):
    if key in ("mix", "delay_inject"):
        return value
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} must be true or false")
    if isinstance(default, int) or key in ("fast_capacity_bytes", "shift_period"):
        if value is None:
            return None
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} must be an integer")
        return value
    if isinstance(default, float) or key == "fast_budget_frac":
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number")
        return float(value)
    if value is not None and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string")
    return value


def parse_config_text(text: str) -> dict:
    """A JSON object, or ``key = value`` lines whose values are read as JSON
    when they parse and as bare strings otherwise.  ``#`` starts a comment."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as err:
            raise ConfigError(f"bad JSON config: {err}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return data
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in data:
            raise ConfigError(f"config line {lineno}: duplicate key {key}")
        try:
            data[key] = json.loads(value)
        except json.JSONDecodeError:
            data[key] = value
    return data


# ---------------------------------------------------------------------------
# latency sketch

class LogHistogram:
    """Log-bucketed sketch; quantiles are within ``rel_err`` of the exact
    order statistic ``sorted(xs)[floor(q * (n - 1))]``."""

    def __init__(self, rel_err: float = 0.01):
        self.rel_err = rel_err
        self._gamma = (1 + rel_err) / (1 - rel_err)
        self._log_gamma = math.log(self._gamma)
        self.buckets: dict[int, int] = {}
        self.zeros = 0
        self.count = 0
        self.total = 0.0

    def add(self, x: float) -> None:
        if x < 0:
            raise ValueError("values must be >= 0")
        self.count += 1
        self.total += x
        if x == 0:
            self.zeros += 1
            return
        i = math.ceil(math.log(x) / self._log_gamma)
        self.buckets[i] = self.buckets.get(i, 0) + 1

    def merge(self, other: "LogHistogram") -> None:
        for i, c in other.buckets.items():
            self.buckets[i] = self.buckets.get(i, 0) + c
        self.zeros += other.zeros
        self.count += other.count
        self.total += other.total

    def quantile(self, q: float) -> float:
        if not self.count:
            return 0.0
        rank = math.floor(q * (self.count - 1))
        seen = self.zeros
        if rank < seen:
            return 0.0
        for i in sorted(self.buckets):
            seen += self.buckets[i]
            if seen > rank:
                return 2 * self._gamma ** i / (self._gamma + 1)
        raise AssertionError("rank beyond count")

    def summary(self) -> dict:
        return {
            "p50": self.quantile(0.50),
            "p90": self.quantile(0.90),
            "p99": self.quantile(0.99),
            "avg": self.total / self.count if self.count else 0.0,
            "count": self.count,
        }


# ---------------------------------------------------------------------------
# reports

@dataclass
class TimelineSample:
    t_ms: float
    usage_ratio: float
    promoted_cum: int
    demoted_cum: int
    fast_access_ratio: float
    # not in the CSV: leaf-only ratio over the same window
    fast_leaf_access_ratio: float = 0.0


@dataclass
class RunReport:
    config: dict
    ops: int
    ops_by_kind: dict
    wall_s: float
    throughput_ops_s: float
    latency_ns: dict
    cost_units: dict
    total_cost: float
    cost_per_op: float
    accesses_fast: int
    accesses_slow: int
    node_visits: int
    fast_access_ratio: float
    fast_leaf_access_ratio: float
    promoted: int
    demoted: int
    strain_exits: int
    strain_restored_exact: bool
    footprint_bytes: int
    fast_capacity: int
    final_usage_ratio: float
    worker_cpu_s: dict
    worker_cpu_share: float
    cpu_total_s: float
    timeline: list = field(default_factory=list)

    CORE = ("ops", "ops_by_kind", "cost_units", "total_cost", "cost_per_op",
            "accesses_fast", "accesses_slow", "node_visits", "fast_access_ratio",
            "fast_leaf_access_ratio", "promoted", "demoted", "strain_exits",
            "strain_restored_exact", "footprint_bytes", "fast_capacity",
            "final_usage_ratio", "timeline")

    def core(self) -> dict:
        """Metrics that do not depend on wall time."""
        d = self.to_dict()
        return {k: d[k] for k in self.CORE}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rp, tp = out / "report.json", out / "timeline.csv"
        rp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                      encoding="utf-8")
        with open(tp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TIMELINE_FIELDS)
            for s in self.timeline:
                row = s if isinstance(s, dict) else dataclasses.asdict(s)
                w.writerow([row[k] for k in TIMELINE_FIELDS])
        return rp, tp


def read_timeline(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != TIMELINE_FIELDS:
            raise ValueError(f"unexpected timeline header {r.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in r]


@dataclass
class ComparisonReport:
    a: RunReport
    b: RunReport
    deltas: dict
    #: b's cost per op over a's
    cost_ratio: float

    def to_dict(self) -> dict:
        return {"a": self.a.to_dict(), "b": self.b.to_dict(), "deltas": self.deltas,
                "cost_ratio": self.cost_ratio}

    def table(self) -> str:
        rows = [f"{'metric':<24}{'a':>16}{'b':>16}{'rel (b-a)/a':>14}"]
        for name, d in self.deltas.items():
            rel = "n/a" if d["rel"] is None else f"{d['rel']:+.4f}"
            rows.append(f"{name:<24}{d['a']:>16.6g}{d['b']:>16.6g}{rel:>14}")
        rows.append(f"{'cost ratio b/a':<24}{self.cost_ratio:>46.4f}")
        return "\n".join(rows)


COMPARED = ("cost_per_op", "total_cost", "fast_access_ratio", "fast_leaf_access_ratio",
            "promoted", "demoted", "final_usage_ratio")


# ---------------------------------------------------------------------------
# running

@dataclass
class Setup:
    heap: TieredHeap
    tree: Any
    params: PlacementParams
    engine: Optional[Engine]
    footprint: int


def build(config: RunConfig) -> Setup:
    """Create the heap, the index under the configured policy, bulk-load
    ``range(n_records)`` and (for sinlk) attach an engine."""
    cap = config.fast_capacity_bytes or 1
    heap = TieredHeap(TierBudget(fast_capacity=cap, c_fast=config.c_fast,
                                 c_slow=config.c_slow, delay_ns=config.delay_ns()))
    params = PlacementParams(u_high=config.u_high, u_low=config.u_low)
    name, frac = config.policy_kind()
    if name == "sinlk":
        policy = LayerAwarePolicy(params, heap)
    elif name == "weighted_interleave":
        policy = WeightedInterleavePolicy(heap, frac, config.seed)
    else:
        policy = InternodeFastPolicy(heap)
    if config.index == "btree":
        tree = BPlusTree(heap, params=params, policy=policy, order=config.order,
                         value_size=config.value_size)
    else:
        tree = ART(heap, params=params, policy=policy, value_size=config.value_size)
    footprint = [0]

    def on_footprint(nbytes):
        footprint[0] = nbytes
        if config.fast_budget_frac is not None:
            heap.resize_fast(max(1, heap.used_fast, int(nbytes * config.fast_budget_frac)))

    tree.bulk_load(((k, k) for k in range(config.n_records)), on_footprint=on_footprint)
    engine = None
    if name == "sinlk":
        mode = ClockMode.VIRTUAL if config.clock == "virtual" else ClockMode.WALL
        clock = Clock(mode, config.trigger_interval_ms, config.cooler_interval_ms,
                      config.watermark_interval_ms)
        engine = Engine(tree, heap, params, clock, config.engine_config())
    return Setup(heap, tree, params, engine, footprint[0])


def execute(tree, op) -> None:
    kind = op.kind
    if kind is OpKind.READ:
        tree.get(op.key)
    elif kind is OpKind.UPDATE:
        tree.update(op.key, op.value)
    elif kind is OpKind.INSERT:
        tree.insert(op.key, op.value)
    elif kind is OpKind.SCAN:
        tree.scan(op.key, op.scan_len)
    else:
        tree.get(op.key)
        tree.update(op.key, op.value)


class _Meter:
    """Per-thread latency and cost sketches."""

    def __init__(self):
        self.latency = {k: LogHistogram() for k in OpKind}
        self.cost = {k: LogHistogram() for k in OpKind}
        self.visits = 0
        self.ops = 0

    def merge(self, other: "_Meter") -> None:
        for k in OpKind:
            self.latency[k].merge(other.latency[k])
            self.cost[k].merge(other.cost[k])
        self.visits += other.visits
        self.ops += other.ops


class _Timeline:
    def __init__(self, heap: TieredHeap, engine: Optional[Engine]):
        self.heap, self.engine = heap, engine
        self.samples: list[TimelineSample] = []
        s = heap.stats()
        self._last = (s.accesses_fast, s.accesses_slow, s.leaf_accesses_fast,
                      s.leaf_accesses_slow)

    def sample(self, t_ms: float) -> None:
        s = self.heap.stats()
        cur = (s.accesses_fast, s.accesses_slow, s.leaf_accesses_fast, s.leaf_accesses_slow)
        d = [c - p for c, p in zip(cur, self._last)]
        self._last = cur
        e = self.engine
        self.samples.append(TimelineSample(
            t_ms=round(t_ms, 6),
            usage_ratio=self.heap.usage_ratio(),
            promoted_cum=e.promoted if e else 0,
            demoted_cum=e.demoted if e else 0,
            fast_access_ratio=d[0] / (d[0] + d[1]) if d[0] + d[1] else 0.0,
            fast_leaf_access_ratio=d[2] / (d[2] + d[3]) if d[2] + d[3] else 0.0,
        ))


def _timed(tree, heap, op, meter: _Meter) -> None:
    f0, s0 = heap.thread_accesses()
    t0 = time.perf_counter_ns()
    execute(tree, op)
    dt = time.perf_counter_ns() - t0
    f1, s1 = heap.thread_accesses()
    df, ds = f1 - f0, s1 - s0
    meter.latency[op.kind].add(dt)
    meter.cost[op.kind].add(df * heap.c_fast + ds * heap.c_slow)
    meter.visits += df + ds
    meter.ops += 1


def run(config: RunConfig, setup: Optional[Setup] = None) -> RunReport:
    """Load, warm up, measure.  Counters cover the measured phase only."""
    config.validate()
    try:
        setup = setup or build(config)
        if config.clock == "virtual":
            return _run_virtual(config, setup)
        return _run_wall(config, setup)
    except (ConfigError, RunFailure):
        raise
    except Exception as err:
        raise RunFailure(f"{type(err).__name__}: {err}") from err


def _run_virtual(config: RunConfig, st: Setup) -> RunReport:
    spec = config.workload()
    n = config.threads
    streams = [OpStream(spec, config.seed, i, n) for i in range(n)]
    every = config.ticks_every()
    wm, trig, cool = every[TickKind.WATERMARK], every[TickKind.TRIGGER], every[TickKind.COOLER]
    eng, tree, heap = st.engine, st.tree, st.heap
    meter = _Meter()
    timeline = None
    start = None
    total = config.warmup_ops + config.measure_ops
    exhausted = set()
    i = 0
    cpu0 = time.process_time()
    while i < total and len(exhausted) < n:
        if i == config.warmup_ops:
            start = _Snapshot.take(st)
            timeline = _Timeline(heap, eng)
            meter = _Meter()
        w = i % n
        op = streams[w].next_op()
        if op is None:
            exhausted.add(w)
            i += 1
            continue
        _timed(tree, heap, op, meter)
        i += 1
        if eng is not None:
            if i % wm == 0:
                eng.tick(TickKind.WATERMARK)
            if i % trig == 0:
                eng.tick(TickKind.TRIGGER)
            if i % cool == 0:
                eng.tick(TickKind.COOLER)
            if eng.pressure.is_set():
                eng.tick(TickKind.WATERMARK)
        if timeline is not None and i % wm == 0:
            timeline.sample((i - config.warmup_ops) * config.virtual_ms_per_op)
        if config.shift_period is not None and i % config.shift_period == 0:
            spec = shift_hot_region(spec)
            for s in streams:
                s.set_spec(spec)
    if start is None:
        start = _Snapshot.take(st)
        timeline = _Timeline(heap, eng)
    wall = time.perf_counter() - start.wall
    return _report(config, st, start, meter, timeline, wall,
                   cpu_total=time.process_time() - cpu0)


class _SpecBox:
    # current workload spec shared with wall-clock workers
    def __init__(self, spec):
        self.spec = spec
        self.version = 0


def _run_wall(config: RunConfig, st: Setup) -> RunReport:
    spec_box = _SpecBox(config.workload())
    n = config.threads
    eng, tree, heap = st.engine, st.tree, st.heap
    meters = [_Meter() for _ in range(n)]
    warm = threading.Barrier(n + 1)
    go = threading.Barrier(n + 1)
    done = threading.Event()
    errors: list[BaseException] = []

    def share(total, i):
        return total // n + (1 if i < total % n else 0)

    def worker(i):
        stream = OpStream(spec_box.spec, config.seed, i, n)
        seen = 0
        try:
            for phase, count in ((0, share(config.warmup_ops, i)),
                                 (1, share(config.measure_ops, i))):
                if phase == 1:
                    warm.wait()
                    go.wait()
                meter = meters[i] if phase == 1 else _Meter()
                for _ in range(count):
                    if spec_box.version != seen:
                        seen = spec_box.version
                        stream.set_spec(spec_box.spec)
                    op = stream.next_op()
                    if op is None:
                        break
                    _timed(tree, heap, op, meter)
        except BaseException as err:
            errors.append(err)
            warm.abort()
            go.abort()

    cpu0 = time.process_time()
    if eng is not None:
        eng.start()
    threads = [threading.Thread(target=worker, args=(i,), name=f"bench-{i}")
               for i in range(n)]
    for t in threads:
        t.start()
    timeline = None
    start = None
    try:
        warm.wait()
        start = _Snapshot.take(st)
        timeline = _Timeline(heap, eng)
        go.wait()
    except threading.BrokenBarrierError:
        pass

    def sampler():
        t0 = time.perf_counter()
        last_shift = t0
        step = config.watermark_interval_ms / 1000
        while not done.wait(step):
            now = time.perf_counter()
            timeline.sample((now - t0) * 1000)
            if config.shift_period is not None and (now - last_shift) * 1000 >= config.shift_period:
                last_shift = now
                spec_box.spec = shift_hot_region(spec_box.spec)
                spec_box.version += 1

    samp = None
    if timeline is not None:
        samp = threading.Thread(target=sampler, name="bench-sampler", daemon=True)
        samp.start()
    for t in threads:
        t.join()
    done.set()
    if samp is not None:
        samp.join()
    wall = time.perf_counter() - start.wall if start else 0.0
    if eng is not None:
        eng.stop()
    cpu_total = time.process_time() - cpu0
    if errors:
        raise RunFailure(f"worker failed: {errors[0]!r}") from errors[0]
    meter = _Meter()
    for m in meters:
        meter.merge(m)
    return _report(config, st, start, meter, timeline, wall, cpu_total=cpu_total)


@dataclass
class _Snapshot:
    stats: Any
    promoted: int
    demoted: int
    strain_exits: int
    wall: float

    @classmethod
    def take(cls, st: Setup) -> "_Snapshot":
        e = st.engine
        return cls(st.heap.stats(), e.promoted if e else 0, e.demoted if e else 0,
                   len(e.strain_exits) if e else 0, time.perf_counter())


def _report(config, st: Setup, start: _Snapshot, meter: _Meter, timeline: _Timeline,
            wall: float, cpu_total: float) -> RunReport:
    end = st.heap.stats()
    af = end.accesses_fast - start.stats.accesses_fast
    asl = end.accesses_slow - start.stats.accesses_slow
    lf = end.leaf_accesses_fast - start.stats.leaf_accesses_fast
    ls = end.leaf_accesses_slow - start.stats.leaf_accesses_slow
    e = st.engine
    exits = e.strain_exits[start.strain_exits:] if e else []
    worker_cpu = dict(e.worker_cpu) if e else {}
    cost = af * st.heap.c_fast + asl * st.heap.c_slow
    ops = meter.ops
    return RunReport(
        config=config.to_dict(),
        ops=ops,
        ops_by_kind={k.value: meter.cost[k].count for k in OpKind if meter.cost[k].count},
        wall_s=wall,
        throughput_ops_s=ops / wall if wall > 0 else 0.0,
        latency_ns={k.value: meter.latency[k].summary() for k in OpKind
                    if meter.latency[k].count},
        cost_units={k.value: meter.cost[k].summary() for k in OpKind if meter.cost[k].count},
        total_cost=cost,
        cost_per_op=cost / ops if ops else 0.0,
        accesses_fast=af,
        accesses_slow=asl,
        node_visits=meter.visits,
        fast_access_ratio=af / (af + asl) if af + asl else 0.0,
        fast_leaf_access_ratio=lf / (lf + ls) if lf + ls else 0.0,
        promoted=(e.promoted - start.promoted) if e else 0,
        demoted=(e.demoted - start.demoted) if e else 0,
        strain_exits=len(exits),
        strain_restored_exact=all(a == b for a, b in exits),
        footprint_bytes=st.footprint,
        fast_capacity=st.heap.fast_capacity,
        final_usage_ratio=st.heap.usage_ratio(),
        worker_cpu_s=worker_cpu,
        worker_cpu_share=sum(worker_cpu.values()) / cpu_total if cpu_total > 0 else 0.0,
        cpu_total_s=cpu_total,
        timeline=list(timeline.samples) if timeline else [],
    )


def _same_workload(a: RunConfig, b: RunConfig) -> list[str]:
    keys = ("seed", "threads", "warmup_ops", "measure_ops", "n_records", "key_width",
            "value_size", "shift_period", "shift_displacement", "clock")
    diff = [k for k in keys if getattr(a, k) != getattr(b, k)]
    if a.workload() != b.workload():
        diff.append("workload")
    return diff


def compare(config_a: RunConfig, config_b: RunConfig) -> ComparisonReport:
    """Run both configs on the same operation stream and tabulate deltas."""
    diff = _same_workload(config_a, config_b)
    if diff:
        raise ConfigError(f"configs differ in workload settings: {', '.join(diff)}")
    ra, rb = run(config_a), run(config_b)
    names = COMPARED
    if config_a.clock == "wall":
        # throughput only means something when ops take real time
        names = names + ("throughput_ops_s",)
    deltas = {}
    for name in names:
        va, vb = float(getattr(ra, name)), float(getattr(rb, name))
        rel = (vb - va) / va if va else (0.0 if vb == va else None)
        deltas[name] = {"a": va, "b": vb, "rel": rel}
    ratio = rb.cost_per_op / ra.cost_per_op if ra.cost_per_op else float("nan")
    return ComparisonReport(ra, rb, deltas, ratio)
