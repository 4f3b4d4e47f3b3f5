"""Node-grained placement of tree indexes on simulated two-tier memory."""
from .heap import (
    FAST,
    SLOW,
    DoubleFree,
    FastExhausted,
    HeapStats,
    SlowExhausted,
    TierBudget,
    TierHandle,
    TierId,
    TieredHeap,
)
from .placement import (
    DegenerateHistogram,
    FreqHistogram,
    LayerAwarePolicy,
    LeafMeta,
    NodeMeta,
    PlacementParams,
    TreeAdapter,
    choose_tier,
    single_boundary_violations,
    update_thresholds,
)
from .engine import Clock, ClockMode, Engine, EngineConfig, TickKind, WatermarkMode, WrongMode
from .btree import BPlusTree
from .art import ART

__version__ = "0.1.0"
