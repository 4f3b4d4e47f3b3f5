"""Shared fixtures: a minimal in-memory tree that satisfies the engine's
adapter contract, plus random tree generators used by several suites."""
from __future__ import annotations

import random
from typing import Optional

import pytest

from nodetier.heap import FAST, SLOW, TierBudget, TieredHeap
from nodetier.placement import LeafMeta, NodeMeta

LEAF_SIZE = 16
INNER_SIZE = 32


class ToyNode:
    __slots__ = ("name", "children", "parent", "handle", "meta", "dead")

    def __init__(self, name, handle, meta, children=None):
        self.name = name
        self.children = children if children is not None else []
        self.parent = None
        self.handle = handle
        self.meta = meta
        self.dead = False

    @property
    def is_leaf(self):
        return not self.children

    def __repr__(self):
        return f"<Toy {self.name} {self.handle.tier.name}>"


class ToyTree:
    """Unbalanced tree with explicit parent links.  ``relocate`` copies the
    node like the real indexes do, so stale references become dead."""

    def __init__(self, heap: TieredHeap, root: ToyNode):
        self.heap = heap
        self._root = root
        self.relocations = []

    # construction ----------------------------------------------------
    @classmethod
    def from_shape(cls, heap, shape, tiers, freqs=None):
        """``shape`` maps node name -> list of child names (root is 0);
        ``tiers`` maps name -> tier; ``freqs`` maps leaf name -> count."""
        freqs = freqs or {}

        def make(name, depth):
            kids = shape.get(name, [])
            size = INNER_SIZE if kids else LEAF_SIZE
            h = heap.alloc(size, tiers[name])
            meta = NodeMeta(depth, tiers[name]) if kids else LeafMeta(depth, tiers[name],
                                                                        freqs.get(name, 0))
            node = ToyNode(name, h, meta, [make(k, depth + 1) for k in kids])
            for c in node.children:
                c.parent = node
            return node

        return cls(heap, make(0, 0))

    def by_name(self) -> dict:
        return {n.name: n for n in self.nodes()}

    def placement(self) -> dict:
        return {n.name: n.handle.tier for n in self.nodes()}

    # adapter ---------------------------------------------------------
    def root(self):
        return self._root

    def leaves(self):
        return (n for n in self.nodes() if n.is_leaf)

    def nodes(self, include_leaves=True):
        stack = [self._root]
        while stack:
            n = stack.pop()
            if include_leaves or not n.is_leaf:
                yield n
            stack.extend(reversed(n.children))

    def children(self, node):
        return list(node.children)

    def parent_of(self, node):
        return node.parent

    def path_to(self, node):
        if node.dead:
            return None
        path = [node]
        while path[-1].parent is not None:
            path.append(path[-1].parent)
        return path[::-1]

    def has_fast_child(self, node):
        return any(c.handle.tier is FAST for c in node.children)

    def depth_of(self, node):
        return node.meta.level

    def is_leaf(self, node):
        return node.is_leaf

    def is_live(self, node):
        return not node.dead and node.handle.live

    def meta(self, node):
        return node.meta

    def tier_of(self, node):
        return node.handle.tier

    def size_of(self, node):
        return node.handle.size

    def max_depth(self):
        return max(n.meta.level for n in self.nodes())

    def leaf_size(self):
        return LEAF_SIZE

    def relocate(self, node, tier, guard=None):
        if node.dead or node.handle.tier is tier:
            return None
        if guard is not None and not guard(node, node.parent):
            return None
        h = self.heap.alloc(node.handle.size, tier)
        new = ToyNode(node.name, h, node.meta, node.children)
        new.parent = node.parent
        for c in new.children:
            c.parent = new
        if node.parent is None:
            self._root = new
        else:
            sib = node.parent.children
            sib[sib.index(node)] = new
        node.meta.tier = tier
        node.dead = True
        self.heap.free(node.handle)
        self.relocations.append((node.name, tier))
        return new


def random_shape(rng: random.Random, max_nodes: int = 64, max_fanout: int = 5) -> dict:
    """Random rooted tree as ``{name: [child names]}`` with 2..max_nodes nodes."""
    n = rng.randint(2, max_nodes)
    shape = {0: []}
    frontier = [0]
    made = 1
    while made < n:
        parent = rng.choice(frontier)
        shape[parent].append(made)
        shape[made] = []
        frontier.append(made)
        if len(shape[parent]) >= max_fanout:
            frontier.remove(parent)
        made += 1
    return {k: v for k, v in shape.items()}


def random_tiers(rng: random.Random, shape: dict, p_fast: Optional[float] = None) -> dict:
    """Tiers that respect the single boundary: a node may be fast only if
    its parent is."""
    p = rng.random() if p_fast is None else p_fast
    tiers = {}

    def walk(name, parent_fast):
        tiers[name] = FAST if parent_fast and rng.random() < p else SLOW
        for c in shape[name]:
            walk(c, tiers[name] is FAST)

    walk(0, True)
    return tiers


def depths(shape: dict) -> dict:
    out = {0: 0}
    stack = [0]
    while stack:
        n = stack.pop()
        for c in shape[n]:
            out[c] = out[n] + 1
            stack.append(c)
    return out


@pytest.fixture
def big_heap():
    return TieredHeap(TierBudget(fast_capacity=1 << 40))


def make_heap(fast_capacity: int = 1 << 40, **kw) -> TieredHeap:
    return TieredHeap(TierBudget(fast_capacity=fast_capacity, **kw))


# -- acceptance summary ------------------------------------------------------
# Tests tagged ``@pytest.mark.criterion("C<n>", ...)`` feed one pass/fail line
# per criterion into the terminal summary; ``record_property("measured", x)``
# adds the observed value to the line.

_CRITERIA: dict[str, dict] = {}
_TAGS: dict[str, tuple] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(*ids, title=''): acceptance criterion tags")


def pytest_collection_modifyitems(items):
    for item in items:
        for mark in item.iter_markers("criterion"):
            _TAGS[item.nodeid] = mark.args
            title = mark.kwargs.get("title")
            for cid in mark.args:
                entry = _CRITERIA.setdefault(cid, {"title": "", "tests": {}, "measured": []})
                if title and cid == mark.args[0]:
                    entry["title"] = title
                entry["tests"][item.nodeid] = "not run"


def pytest_runtest_logreport(report):
    tags = _TAGS.get(report.nodeid)
    if not tags:
        return
    failed = report.outcome == "failed"
    if report.when == "call" or failed or report.skipped:
        for cid in tags:
            tests = _CRITERIA[cid]["tests"]
            if tests[report.nodeid] in ("not run", "passed"):
                tests[report.nodeid] = report.outcome
        if report.when == "call":
            for name, value in report.user_properties:
                if name == "measured":
                    _CRITERIA[tags[0]]["measured"].append(f"{value}")


def _order(cid):
    return int(cid.lstrip("C")) if cid.lstrip("C").isdigit() else 99


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=_order):
        entry = _CRITERIA[cid]
        states = list(entry["tests"].values())
        if all(s == "passed" for s in states):
            verdict = "PASS"
        elif any(s == "failed" for s in states):
            verdict = "FAIL"
        else:
            verdict = "INCOMPLETE"
        line = f"{cid:<4} {verdict:<10} {entry['title']}"
        if entry["measured"]:
            line += " | " + "; ".join(entry["measured"])
        tr.write_line(line)
