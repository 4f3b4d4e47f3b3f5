"""Operation streams for driving the indexes.

Each worker owns an :class:`OpStream` seeded from ``(seed, thread_id)``.  The
same spec and seed always give the same operations, which is what makes
paired policy comparisons fair.  Keys are integers in ``[0, n_records)`` for
the loaded set; inserts append past the end.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

SCAN_MAX = 100
BLOCK = 4096
_SCRAMBLE_SEED = 0x5EED


class OpKind(enum.Enum):
    READ = "read"
    UPDATE = "update"
    INSERT = "insert"
    SCAN = "scan"
    RMW = "rmw"


class WrongDistribution(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, text: str = ""):
        super().__init__(f"line {line}: cannot parse {text!r}")
        self.line = line


@dataclass(frozen=True)
class Mix:
    """Percentages of each operation kind; they must add up to 100."""

    read: float = 0
    update: float = 0
    insert: float = 0
    scan: float = 0
    rmw: float = 0

    def __post_init__(self):
        parts = self.as_tuple()
        if any(p < 0 for p in parts):
            raise ValueError("mix percentages must be >= 0")
        if not math.isclose(sum(parts), 100, abs_tol=1e-9):
            raise ValueError(f"mix percentages sum to {sum(parts)}, not 100")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.read, self.update, self.insert, self.scan, self.rmw)


_KINDS = (OpKind.READ, OpKind.UPDATE, OpKind.INSERT, OpKind.SCAN, OpKind.RMW)

# the six standard YCSB mixes
YCSB = {
    "A": Mix(read=50, update=50),
    "B": Mix(read=95, update=5),
    "C": Mix(read=100),
    "D": Mix(read=95, insert=5),
    "E": Mix(scan=95, insert=5),
    "F": Mix(read=50, rmw=50),
}


@dataclass(frozen=True)
class Zipfian:
    theta: float = 0.99

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be > 0")


@dataclass(frozen=True)
class SkewedPartition:
    """``hot_prob`` of requests land uniformly in a contiguous run of
    ``hot_frac`` of the keys starting at ``hot_start``; the rest go
    uniformly to the other keys."""

    hot_frac: float = 0.05
    hot_prob: float = 0.90
    hot_start: int = 0

    def __post_init__(self):
        if not 0 < self.hot_frac < 1:
            raise ValueError("need 0 < hot_frac < 1")
        if not 0 < self.hot_prob <= 1:
            raise ValueError("need 0 < hot_prob <= 1")
        if self.hot_start < 0:
            raise ValueError("hot_start must be >= 0")

    def hot_range(self, n: int) -> tuple[int, int]:
        """``(start, length)`` of the hot run over ``n`` keys."""
        return self.hot_start % n, max(1, round(self.hot_frac * n))


@dataclass(frozen=True)
class Uniform:
    pass


@dataclass(frozen=True)
class Latest:
    """Zipfian over the most recently inserted ``window`` share of keys,
    newest first."""

    theta: float = 0.99
    window: float = 0.01


@dataclass(frozen=True)
class Trace:
    path: str


Distribution = Union[Zipfian, SkewedPartition, Uniform, Latest, Trace]


@dataclass(frozen=True)
class Shift:
    """Move the hot region by ``displacement`` keys every ``period``
    operations (or milliseconds, on a wall clock)."""

    period: int
    displacement: int

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("shift period must be > 0")


@dataclass(frozen=True)
class WorkloadSpec:
    mix: Mix = field(default_factory=lambda: Mix(read=100))
    distribution: Distribution = field(default_factory=Zipfian)
    n_records: int = 1_000_000
    key_width: int = 8
    value_size: int = 8
    shift: Optional[Shift] = None

    def __post_init__(self):
        if self.n_records <= 0:
            raise ValueError("n_records must be > 0")
        if not 1 <= self.key_width <= 8:
            raise ValueError("key_width must be 1..8 bytes")
        if self.n_records > 1 << (8 * self.key_width):
            raise ValueError("n_records does not fit key_width")
        if self.value_size <= 0:
            raise ValueError("value_size must be > 0")
        if self.shift is not None and not isinstance(self.distribution, SkewedPartition):
            raise WrongDistribution("a hot-region shift needs SkewedPartition")


@dataclass(frozen=True)
class Operation:
    kind: OpKind
    key: int
    value: int = 0
    scan_len: int = 0


def shift_hot_region(spec: WorkloadSpec, displacement: Optional[int] = None) -> WorkloadSpec:
    """Return ``spec`` with its hot region moved forward, wrapping at the
    end of the key space.  ``displacement`` defaults to ``spec.shift.displacement``."""
    dist = spec.distribution
    if not isinstance(dist, SkewedPartition):
        raise WrongDistribution(f"cannot shift {type(dist).__name__}")
    if displacement is None:
        if spec.shift is None:
            raise ValueError("no displacement given and spec has no shift")
        displacement = spec.shift.displacement
    start = (dist.hot_start + displacement) % spec.n_records
    return replace(spec, distribution=replace(dist, hot_start=start))


# ---------------------------------------------------------------------------
# trace files

_TRACE_KINDS = {"R": OpKind.READ, "W": OpKind.UPDATE, "S": OpKind.SCAN}


@dataclass(frozen=True)
class TraceRecord:
    kind: OpKind
    key: int
    size: Optional[int] = None


def load_trace(path, key_width: int = 8) -> Iterator[TraceRecord]:
    """Stream ``<R|W|S> <key> [size]`` lines.  Blank lines are skipped."""
    limit = 1 << (8 * key_width)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) > 3 or parts[0] not in _TRACE_KINDS:
                raise ParseError(lineno, line.rstrip("\n"))
            try:
                key = int(parts[1]) if len(parts) > 1 else None
                size = int(parts[2]) if len(parts) > 2 else None
            except ValueError:
                raise ParseError(lineno, line.rstrip("\n")) from None
            if key is None or not 0 <= key < limit or (size is not None and size <= 0):
                raise ParseError(lineno, line.rstrip("\n"))
            yield TraceRecord(_TRACE_KINDS[parts[0]], key, size)


# ---------------------------------------------------------------------------
# sampling

@functools.lru_cache(maxsize=8)
def zipf_cdf(n: int, theta: float) -> np.ndarray:
    """Cumulative Zipf(theta) mass over ranks 1..n."""
    w = np.arange(1, n + 1, dtype=np.float64) ** -theta
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return cdf


def zipf_mass(n: int, theta: float, rank: int) -> float:
    """Probability of 1-based ``rank`` under Zipf(theta) over ``n`` items."""
    return rank ** -theta / float(np.sum(np.arange(1, n + 1, dtype=np.float64) ** -theta))


@functools.lru_cache(maxsize=8)
def scramble(n: int) -> np.ndarray:
    """Fixed permutation of ``range(n)`` mapping Zipf ranks to keys, so the
    popular keys are spread over the key space rather than bunched at 0."""
    return np.random.default_rng(_SCRAMBLE_SEED).permutation(n)


def zipf_key(n: int, theta: float, rank: int) -> int:
    """Key that receives the 1-based ``rank``-th most requests."""
    return int(scramble(n)[rank - 1])


def _zipf_ranks(rng: np.random.Generator, n: int, theta: float, size: int) -> np.ndarray:
    cdf = zipf_cdf(n, theta)
    r = np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(r, n - 1)


def draw_keys(dist: Distribution, n: int, rng: np.random.Generator, size: int,
              top: Optional[int] = None) -> np.ndarray:
    """``size`` keys from ``dist`` over ``n`` loaded keys.  ``top`` is one
    past the newest key, used by :class:`Latest`."""
    if isinstance(dist, Uniform):
        return rng.integers(0, n, size)
    if isinstance(dist, Zipfian):
        return scramble(n)[_zipf_ranks(rng, n, dist.theta, size)]
    if isinstance(dist, SkewedPartition):
        start, hot = dist.hot_range(n)
        u = rng.random(size)
        if hot >= n:
            return rng.integers(0, n, size)
        hot_keys = start + rng.integers(0, hot, size)
        cold_keys = start + hot + rng.integers(0, n - hot, size)
        return np.where(u < dist.hot_prob, hot_keys, cold_keys) % n
    if isinstance(dist, Latest):
        top = n if top is None else top
        w = max(1, math.ceil(dist.window * n))
        w = min(w, top)
        return top - 1 - _zipf_ranks(rng, w, dist.theta, size)
    raise WrongDistribution(f"cannot sample {type(dist).__name__}")


def _rng(seed: int, thread_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, thread_id]))


class OpStream:
    """Deterministic operation source for one worker.

    Inserts take fresh keys ``n_records + k * n_threads + thread_id`` so
    workers never collide.  With a :class:`Trace` distribution the worker
    replays every ``n_threads``-th record of the file starting at its id.
    """

    def __init__(self, spec: WorkloadSpec, seed: int = 0, thread_id: int = 0,
                 n_threads: int = 1):
        self.spec = spec
        self.thread_id = thread_id
        self.n_threads = n_threads
        self.rng = _rng(seed, thread_id)
        self.inserted = 0
        self._buf: list[Operation] = []
        self._pos = 0
        self._cum = np.cumsum(spec.mix.as_tuple()) / 100.0
        self._trace = None
        if isinstance(spec.distribution, Trace):
            self._trace = self._replay(Path(spec.distribution.path))

    def set_spec(self, spec: WorkloadSpec) -> None:
        """Switch distributions mid-stream (used for hot-region shifts).
        Buffered operations drawn under the old spec are discarded."""
        if spec.n_records != self.spec.n_records or spec.mix != self.spec.mix:
            raise ValueError("only the distribution may change mid-stream")
        self.spec = spec
        self._buf, self._pos = [], 0

    def _replay(self, path: Path) -> Iterator[Operation]:
        for i, rec in enumerate(load_trace(path, self.spec.key_width)):
            if i % self.n_threads != self.thread_id:
                continue
            if rec.kind is OpKind.SCAN:
                yield Operation(rec.kind, rec.key, scan_len=int(self.rng.integers(1, SCAN_MAX + 1)))
            else:
                yield Operation(rec.kind, rec.key, value=int(self.rng.integers(0, 1 << 62)))

    def _fill(self, size: int) -> None:
        spec, rng = self.spec, self.rng
        kind_idx = np.searchsorted(self._cum, rng.random(size), side="right")
        kind_idx = np.minimum(kind_idx, len(_KINDS) - 1)
        top = spec.n_records + self.inserted * self.n_threads
        keys = draw_keys(spec.distribution, spec.n_records, rng, size, top=top)
        values = rng.integers(0, 1 << 62, size)
        lens = rng.integers(1, SCAN_MAX + 1, size)
        out = []
        for ki, key, val, ln in zip(kind_idx.tolist(), keys.tolist(), values.tolist(),
                                    lens.tolist()):
            kind = _KINDS[ki]
            if kind is OpKind.INSERT:
                key = spec.n_records + self.inserted * self.n_threads + self.thread_id
                self.inserted += 1
            out.append(Operation(kind, key, val, ln if kind is OpKind.SCAN else 0))
        self._buf, self._pos = out, 0

    def next_op(self) -> Optional[Operation]:
        """The next operation, or ``None`` once a trace is exhausted."""
        if self._trace is not None:
            return next(self._trace, None)
        if self._pos >= len(self._buf):
            self._fill(BLOCK)
        op = self._buf[self._pos]
        self._pos += 1
        return op

    def __iter__(self):
        while True:
            op = self.next_op()
            if op is None:
                return
            yield op

    def take(self, n: int) -> list[Operation]:
        out = []
        for _ in range(n):
            op = self.next_op()
            if op is None:
                break
            out.append(op)
        return out


def next_op(spec: WorkloadSpec, stream: OpStream) -> Optional[Operation]:
    """Draw the next operation of ``spec`` from ``stream``'s state."""
    if stream.spec != spec:
        stream.set_spec(spec)
    return stream.next_op()
