"""Adaptive radix tree over 8-byte big-endian keys, placed on a TieredHeap.

Inner nodes come in four widths (4/16/48/256 children) and carry a
pessimistic compressed prefix; values live in single-key leaves.  The root
is a Node256 that never grows, shrinks or splits, so only migration ever
replaces it.

A node's level is the index of the first key byte it consumes (its prefix
start).  Levels only grow along a path and do not change when an unrelated
ancestor is split, which makes them usable as placement depth.

Concurrency follows the B+tree: optimistic readers, writers coupling
parent/child mutexes, migration locking parent then node.
"""
from __future__ import annotations

import threading
from bisect import bisect_left
from collections import deque
from itertools import groupby
from typing import Any, Iterable, Iterator, Optional

from ._olc import LOCKED, MIGRATING, OBSOLETE, backoff, begin_write, end_write, mark_obsolete
from .epoch import EpochManager
from .heap import FAST, SLOW, FastExhausted, TierId, TieredHeap
from .placement import (
    AllocationPolicy,
    LayerAwarePolicy,
    LeafMeta,
    NodeMeta,
    PlacementParams,
    alloc_node,
    managed_layout,
    track_leaf_access,
)

KEY_BYTES = 8
MAX_LEVEL = KEY_BYTES

_HEADER = {"version": 8, "type": 1, "count": 2, "prefix_len": 1, "prefix": 8}


class UnsupportedOperation(NotImplementedError):
    pass


def node_layouts(value_size: int = 8, managed: bool = True) -> dict:
    """Logical byte layout per node kind."""
    out = {
        "node4": {**_HEADER, "keys": 4, "children": 8 * 4},
        "node16": {**_HEADER, "keys": 16, "children": 8 * 16},
        "node48": {**_HEADER, "index": 256, "children": 8 * 48},
        "node256": {**_HEADER, "children": 8 * 256},
        "leaf": {"version": 8, "key": 8, "value": value_size},
    }
    if managed:
        out = {k: managed_layout(v, leaf=(k == "leaf")) for k, v in out.items()}
    return out


# ---------------------------------------------------------------------------
# nodes

class Leaf:
    __slots__ = ("version", "lock", "key", "kb", "value", "handle", "meta")
    is_leaf = True
    kind = "leaf"

    def __init__(self, key, kb, value, handle=None, meta=None):
        self.version = 0
        self.lock = threading.Lock()
        self.key = key
        self.kb = kb
        self.value = value
        self.handle = handle
        self.meta = meta

    def __repr__(self):
        return f"<Leaf {self.key} l={self.meta.level} {self.handle.tier.name}>"


class Inner:
    __slots__ = ("version", "lock", "prefix", "handle", "meta")
    is_leaf = False
    kind = ""
    CAP = 0
    SHRINK_AT = 0

    def _init(self, prefix, handle, meta):
        self.version = 0
        self.lock = threading.Lock()
        self.prefix = prefix
        self.handle = handle
        self.meta = meta

    def full(self) -> bool:
        return self.count >= self.CAP

    def __repr__(self):
        return (f"<{self.kind} l={self.meta.level} prefix={self.prefix.hex()} "
                f"n={self.count} {self.handle.tier.name}>")


class _Sorted(Inner):
    __slots__ = ("keys", "children")

    def __init__(self, prefix=b"", handle=None, meta=None):
        self._init(prefix, handle, meta)
        self.keys: list[int] = []
        self.children: list = []

    @property
    def count(self):
        return len(self.keys)

    def find(self, b):
        try:
            return self.children[self.keys.index(b)]
        except ValueError:
            return None

    def add(self, b, child):
        i = bisect_left(self.keys, b)
        self.children.insert(i, child)
        self.keys.insert(i, b)

    def set(self, b, child):
        self.children[self.keys.index(b)] = child

    def remove(self, b):
        i = self.keys.index(b)
        del self.keys[i]
        del self.children[i]

    def items(self):
        return list(zip(self.keys, self.children))


class Node4(_Sorted):
    __slots__ = ()
    kind = "node4"
    CAP = 4
    SHRINK_AT = 1


class Node16(_Sorted):
    __slots__ = ()
    kind = "node16"
    CAP = 16
    SHRINK_AT = 3


class Node48(Inner):
    __slots__ = ("index", "slots", "count")
    kind = "node48"
    CAP = 48
    SHRINK_AT = 12

    def __init__(self, prefix=b"", handle=None, meta=None):
        self._init(prefix, handle, meta)
        self.index = bytearray(256)  # slot + 1, 0 = empty
        self.slots: list = [None] * 48
        self.count = 0

    def find(self, b):
        s = self.index[b]
        return self.slots[s - 1] if s else None

    def add(self, b, child):
        j = self.slots.index(None)
        self.slots[j] = child
        self.index[b] = j + 1
        self.count += 1

    def set(self, b, child):
        self.slots[self.index[b] - 1] = child

    def remove(self, b):
        j = self.index[b] - 1
        self.index[b] = 0
        self.slots[j] = None
        self.count -= 1

    def items(self):
        idx, slots = self.index, self.slots
        return [(b, slots[idx[b] - 1]) for b in range(256) if idx[b]]


class Node256(Inner):
    __slots__ = ("children", "count")
    kind = "node256"
    CAP = 256
    SHRINK_AT = 37

    def __init__(self, prefix=b"", handle=None, meta=None):
        self._init(prefix, handle, meta)
        self.children: list = [None] * 256
        self.count = 0

    def find(self, b):
        return self.children[b]

    def add(self, b, child):
        self.children[b] = child
        self.count += 1

    def set(self, b, child):
        self.children[b] = child

    def remove(self, b):
        self.children[b] = None
        self.count -= 1

    def items(self):
        ch = self.children
        return [(b, c) for b, c in enumerate(ch) if c is not None]


_BY_SIZE = ((4, Node4), (16, Node16), (48, Node48), (256, Node256))
_GROW = {Node4: Node16, Node16: Node48, Node48: Node256}
_SHRINK = {Node16: Node4, Node48: Node16, Node256: Node48}


def _kind_for(n: int):
    for cap, cls in _BY_SIZE:
        if n <= cap:
            return cls
    raise ValueError(n)


class _Anchor:
    __slots__ = ("root", "lock", "version")

    def __init__(self, root):
        self.root = root
        self.lock = threading.Lock()
        self.version = 0


def _mismatch(prefix: bytes, kb: bytes, start: int) -> int:
    for i, p in enumerate(prefix):
        if kb[start + i] != p:
            return i
    return len(prefix)


# ---------------------------------------------------------------------------
# tree

class ART:
    """Adaptive radix tree mapping 64-bit unsigned keys to values."""

    def __init__(self, heap: TieredHeap, params: Optional[PlacementParams] = None,
                 policy: Optional[AllocationPolicy] = None, value_size: int = 8):
        self.heap = heap
        self.params = params if params is not None else PlacementParams()
        self.policy = policy if policy is not None else LayerAwarePolicy(self.params, heap)
        self.value_size = value_size
        layouts = node_layouts(value_size)
        self.sizes = {k: sum(v.values()) for k, v in layouts.items()}
        self.epoch = EpochManager()
        root = self._new_inner(Node256, b"", 0, FAST)
        self._anchor = _Anchor(root)

    # ------------------------------------------------------------------
    # allocation helpers

    def _alloc(self, size, depth, parent_tier, is_leaf, children=(), held=()):
        handle, demote = alloc_node(self.heap, self.policy, size, depth, parent_tier,
                                    is_leaf, children, self.tier_of)
        for child in demote:
            self._demote_subtree(child, held)
        return handle

    def _new_inner(self, cls, prefix, level, parent_tier, items=(), held=()):
        items = list(items)
        h = self._alloc(self.sizes[cls.kind], level, parent_tier, False,
                        [c for _, c in items], held)
        node = cls(prefix, h, NodeMeta(level, h.tier))
        for b, c in items:
            node.add(b, c)
        return node

    def _new_leaf(self, key, kb, value, level, parent_tier):
        h = self._alloc(self.sizes["leaf"], level, parent_tier, True)
        return Leaf(key, kb, value, h, LeafMeta(level, h.tier))

    def _set_tier(self, node, tier: TierId) -> None:
        self.heap.relocate(node.handle, tier)
        node.meta.tier = tier

    def _demote_subtree(self, node, held=()) -> None:
        mine = node not in held
        if mine:
            node.lock.acquire()
        try:
            if not node.is_leaf:
                for _, c in node.items():
                    if c.handle.tier is FAST:
                        self._demote_subtree(c, held)
            if node.handle.tier is FAST:
                self._set_tier(node, SLOW)
        finally:
            if mine:
                node.lock.release()

    def _replace(self, parent, pb, new) -> None:
        if parent is self._anchor:
            parent.root = new
        else:
            parent.set(pb, new)

    @staticmethod
    def _encode(key) -> bytes:
        try:
            return key.to_bytes(KEY_BYTES, "big")
        except (OverflowError, AttributeError):
            raise ValueError(f"key {key!r} is not a 64-bit unsigned integer") from None

    # ------------------------------------------------------------------
    # reads

    def _charge(self, path, leaf) -> None:
        rec = self.heap.record_access
        for n in path:
            rec(n.handle)
        if leaf is not None:
            rec(leaf.handle, True)
            track_leaf_access(leaf.meta)

    def _lookup(self, kb):
        """Optimistic descent.  Returns ``(leaf_or_None, path)`` or ``None``
        on a version conflict; ``leaf`` is where the search ended."""
        anchor = self._anchor
        av = anchor.version
        if av & LOCKED:
            return None
        node = anchor.root
        v = node.version
        if v & (LOCKED | OBSOLETE) or anchor.version != av:
            return None
        path = []
        while True:
            if node.is_leaf:
                if node.version != v:
                    return None
                return node, path
            try:
                prefix = node.prefix
                d = node.meta.level + len(prefix)
                if kb[node.meta.level:d] != prefix:
                    child = None
                else:
                    child = node.find(kb[d])
            except IndexError:
                return None
            cv = child.version if child is not None else 0
            if cv & (LOCKED | OBSOLETE) or node.version != v:
                return None
            path.append(node)
            if child is None:
                return None if node.version != v else (None, path)
            node, v = child, cv

    def get(self, key, default=None):
        kb = self._encode(key)
        with self.epoch:
            while True:
                got = self._lookup(kb)
                if got is None:
                    backoff()
                    continue
                leaf, path = got
                if leaf is None:
                    self._charge(path, None)
                    return default
                v = leaf.version
                k, value = leaf.key, leaf.value
                if v & (LOCKED | OBSOLETE) or leaf.version != v:
                    backoff()
                    continue
                self._charge(path, leaf)
                return value if k == key else default

    def __contains__(self, key):
        sentinel = object()
        return self.get(key, sentinel) is not sentinel

    def scan(self, start, count):
        raise UnsupportedOperation("the radix tree has no range scan")

    # ------------------------------------------------------------------
    # writes

    def _lock_descend(self, kb):
        """Couple locks down ``kb``'s path to the last inner node.  Returns
        ``(parent, pb, node, child, b, held, path)`` with parent and node
        locked; ``child`` is the leaf or gap the key leads to."""
        anchor = self._anchor
        anchor.lock.acquire()
        parent, pb = anchor, None
        node = anchor.root
        node.lock.acquire()
        held = [anchor, node]
        path = [node]
        while True:
            level = node.meta.level
            prefix = node.prefix
            d = level + len(prefix)
            if kb[level:d] != prefix:
                return parent, pb, node, None, None, held, path
            b = kb[d]
            child = node.find(b)
            if child is None or child.is_leaf:
                return parent, pb, node, child, b, held, path
            child.lock.acquire()
            parent.lock.release()
            held.remove(parent)
            held.append(child)
            path.append(child)
            parent, pb, node = node, b, child

    def insert(self, key, value) -> None:
        """Insert or overwrite."""
        kb = self._encode(key)
        retired = []
        with self.epoch:
            parent, pb, node, child, b, held, path = self._lock_descend(kb)
            written = []
            try:
                level = node.meta.level
                m = _mismatch(node.prefix, kb, level)
                if m < len(node.prefix):
                    leaf = self._split_prefix(parent, pb, node, key, kb, value, m, written,
                                              set(held))
                elif child is None:
                    leaf = self._add_leaf(parent, pb, node, b, key, kb, value, written,
                                          retired, set(held))
                else:
                    child.lock.acquire()
                    held.append(child)
                    if child.key == key:
                        begin_write(child)
                        written.append(child)
                        child.value = value
                        leaf = child
                    else:
                        leaf = self._expand_leaf(node, b, child, key, kb, value, written,
                                                 set(held))
                self._charge(path, leaf)
            finally:
                for n in written:
                    end_write(n)
                for n in held:
                    n.lock.release()
            for h in retired:
                self._retire(h)
        self.epoch.reclaim()

    def _split_prefix(self, parent, pb, node, key, kb, value, m, written, held):
        level = node.meta.level
        old_prefix = node.prefix
        ptier = FAST if parent is self._anchor else parent.handle.tier
        top = self._new_inner(Node4, old_prefix[:m], level, ptier,
                              [(old_prefix[m], node)], held)
        leaf = self._new_leaf(key, kb, value, level + m + 1, top.handle.tier)
        begin_write(node)
        written.append(node)
        node.prefix = old_prefix[m + 1:]
        node.meta.level = level + m + 1
        top.add(kb[level + m], leaf)
        begin_write(parent)
        written.append(parent)
        self._replace(parent, pb, top)
        return leaf

    def _add_leaf(self, parent, pb, node, b, key, kb, value, written, retired, held):
        level = node.meta.level + len(node.prefix) + 1
        if not node.full():
            leaf = self._new_leaf(key, kb, value, level, node.handle.tier)
            begin_write(node)
            written.append(node)
            node.add(b, leaf)
            return leaf
        ptier = FAST if parent is self._anchor else parent.handle.tier
        grown = self._new_inner(_GROW[type(node)], node.prefix, node.meta.level, ptier,
                                node.items(), held)
        leaf = self._new_leaf(key, kb, value, level, grown.handle.tier)
        grown.add(b, leaf)
        begin_write(parent)
        written.append(parent)
        self._replace(parent, pb, grown)
        begin_write(node)
        mark_obsolete(node)
        written.append(node)
        retired.append(node.handle)
        return leaf

    def _expand_leaf(self, node, b, old, key, kb, value, written, held):
        level = old.meta.level
        okb = old.kb
        c = 0
        while okb[level + c] == kb[level + c]:
            c += 1
        mid = self._new_inner(Node4, kb[level:level + c], level, node.handle.tier,
                              [(okb[level + c], old)], held)
        leaf = self._new_leaf(key, kb, value, level + c + 1, mid.handle.tier)
        begin_write(old)
        written.append(old)
        old.meta.level = level + c + 1
        mid.add(kb[level + c], leaf)
        begin_write(node)
        written.append(node)
        node.set(b, mid)
        return leaf

    def update(self, key, value) -> bool:
        kb = self._encode(key)
        with self.epoch:
            parent, pb, node, child, b, held, path = self._lock_descend(kb)
            try:
                leaf = child
                if leaf is not None:
                    leaf.lock.acquire()
                    held.append(leaf)
                found = leaf is not None and leaf.key == key
                if found:
                    begin_write(leaf)
                    leaf.value = value
                    end_write(leaf)
                self._charge(path, leaf)
            finally:
                for n in held:
                    n.lock.release()
        return found

    def remove(self, key) -> bool:
        kb = self._encode(key)
        retired = []
        with self.epoch:
            parent, pb, node, child, b, held, path = self._lock_descend(kb)
            written = []
            try:
                found = child is not None and child.key == key
                if child is not None:
                    self._charge(path, child)
                else:
                    self._charge(path, None)
                if found:
                    child.lock.acquire()
                    held.append(child)
                    begin_write(child)
                    mark_obsolete(child)
                    written.append(child)
                    retired.append(child.handle)
                    begin_write(node)
                    written.append(node)
                    node.remove(b)
                    if node is not self._anchor.root and node.count <= node.SHRINK_AT:
                        self._shrink(parent, pb, node, written, retired, held)
            finally:
                for n in written:
                    end_write(n)
                for n in held:
                    n.lock.release()
            for h in retired:
                self._retire(h)
        self.epoch.reclaim()
        return found

    def _shrink(self, parent, pb, node, written, retired, held):
        held_set = set(held)
        if isinstance(node, Node4):
            (rb, rest), = node.items()
            rest.lock.acquire()
            held.append(rest)
            begin_write(rest)
            written.append(rest)
            if rest.is_leaf:
                rest.meta.level = node.meta.level
            else:
                rest.prefix = node.prefix + bytes([rb]) + rest.prefix
                rest.meta.level = node.meta.level
            replacement = rest
        else:
            ptier = FAST if parent is self._anchor else parent.handle.tier
            replacement = self._new_inner(_SHRINK[type(node)], node.prefix, node.meta.level,
                                          ptier, node.items(), held_set)
        begin_write(parent)
        written.append(parent)
        self._replace(parent, pb, replacement)
        mark_obsolete(node)
        retired.append(node.handle)

    # ------------------------------------------------------------------
    # bulk load

    def bulk_load(self, items: Iterable[tuple[int, Any]], on_footprint=None) -> None:
        """Build the tree from key-sorted unique pairs; see
        :meth:`BPlusTree.bulk_load` for ``on_footprint``."""
        root = self._anchor.root
        if root.count:
            raise ValueError("bulk_load needs an empty tree")
        recs = [(k, self._encode(k), v) for k, v in items]
        for a, b in zip(recs, recs[1:]):
            if a[0] >= b[0]:
                raise ValueError("bulk_load input must be strictly increasing by key")
        sizes = self.sizes
        footprint = [sizes["node256"]]
        n_leaves = len(recs)

        # structure first: (cls, prefix, level, [(byte, spec)]) for inner nodes,
        # (None, record, level, None) for leaves
        def build(group, level):
            if len(group) == 1:
                footprint[0] += sizes["leaf"]
                return (None, group[0], level, None)
            first, last = group[0][1], group[-1][1]
            m = _mismatch(first[level:], last, level)
            d = level + m
            kids = [(b, build(list(g), d + 1)) for b, g in groupby(group, key=lambda r: r[1][d])]
            cls = _kind_for(len(kids))
            footprint[0] += sizes[cls.kind]
            return (cls, first[level:d], level, kids)

        top = [(b, build(list(g), 1)) for b, g in groupby(recs, key=lambda r: r[1][0])]
        if on_footprint is not None:
            on_footprint(footprint[0])
        self.policy.prepare(MAX_LEVEL, n_leaves, sizes["leaf"])

        # then allocate top-down so every node sees its parent's tier
        self.heap.free(root.handle)
        size = sizes["node256"]
        tier = self.policy.tier_for(0, FAST, False, size)
        new_root = Node256(b"", self._alloc_direct(size, tier), None)
        new_root.meta = NodeMeta(0, new_root.handle.tier)
        queue = deque((new_root, b, spec) for b, spec in top)
        while queue:
            parent, b, spec = queue.popleft()
            ptier = parent.handle.tier
            cls, data, level, kids = spec
            if cls is None:
                size = sizes["leaf"]
                tier = self.policy.tier_for(level, ptier, True, size)
                h = self._alloc_direct(size, tier)
                k, kb, v = data
                parent.add(b, Leaf(k, kb, v, h, LeafMeta(level, h.tier)))
                continue
            prefix = data
            size = sizes[cls.kind]
            tier = self.policy.tier_for(level, ptier, False, size)
            h = self._alloc_direct(size, tier)
            node = cls(prefix, h, NodeMeta(level, h.tier))
            parent.add(b, node)
            for cb, cspec in kids:
                queue.append((node, cb, cspec))
        self._anchor.root = new_root
        self._anchor.version += 8

    def _alloc_direct(self, size, tier):
        try:
            return self.heap.alloc(size, tier)
        except FastExhausted:
            return self.heap.alloc(size, SLOW)

    # ------------------------------------------------------------------
    # tree adapter

    def root(self):
        return self._anchor.root

    def leaves(self) -> Iterator[Leaf]:
        stack = [self._anchor.root]
        pop, extend = stack.pop, stack.extend
        while stack:
            node = pop()
            if node.is_leaf:
                if node.version & OBSOLETE:
                    node = self._current_leaf(node.kb)
                    if node is None:
                        continue
                yield node
            else:
                extend([c for _, c in node.items()])

    def _current_leaf(self, kb):
        for _ in range(16):
            got = self._lookup(kb)
            if got is not None:
                leaf = got[0]
                if leaf is not None and leaf.kb == kb and not leaf.version & OBSOLETE:
                    return leaf
                return None
            backoff()
        return None

    def nodes(self, include_leaves: bool = True) -> Iterator:
        stack = [self._anchor.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                if include_leaves:
                    yield node
            else:
                yield node
                stack.extend(c for _, c in node.items())

    def children(self, node) -> list:
        return [] if node.is_leaf else [c for _, c in node.items()]

    def _some_key(self, node):
        while not node.is_leaf:
            items = node.items()
            if not items:
                return None
            node = items[0][1]
        return node.kb

    def path_to(self, node) -> Optional[list]:
        cur = self._anchor.root
        if cur is node:
            return [cur]
        kb = self._some_key(node)
        if kb is None:
            return None
        path = [cur]
        while cur is not node:
            if cur.is_leaf:
                return None
            level = cur.meta.level
            d = level + len(cur.prefix)
            if d >= KEY_BYTES or kb[level:d] != cur.prefix:
                return None
            try:
                cur = cur.find(kb[d])
            except IndexError:
                return None
            if cur is None:
                return None
            path.append(cur)
        return path

    def parent_of(self, node):
        path = self.path_to(node)
        if path is None or len(path) < 2:
            return None
        return path[-2]

    def has_fast_child(self, node) -> bool:
        if node.is_leaf:
            return False
        return any(c.handle.tier is FAST for _, c in node.items())

    def depth_of(self, node) -> int:
        return node.meta.level

    def is_leaf(self, node) -> bool:
        return node.is_leaf

    def is_live(self, node) -> bool:
        return node.handle.live and not node.version & OBSOLETE

    def meta(self, node):
        return node.meta

    def tier_of(self, node) -> TierId:
        return node.handle.tier

    def size_of(self, node) -> int:
        return node.handle.size

    def max_depth(self) -> int:
        return MAX_LEVEL

    def leaf_size(self) -> int:
        return self.sizes["leaf"]

    def _retire(self, h) -> None:
        self.heap.retire(h)
        self.epoch.retire(lambda: self.heap.free(h))

    def relocate(self, node, tier: TierId, guard=None):
        """Copy ``node`` to a new block in ``tier`` and swap it into its parent."""
        new = None
        anchor = self._anchor
        with self.epoch:
            for _ in range(8):
                if not self.is_live(node):
                    return None
                path = self.path_to(node)
                if path is None:
                    return None
                parent = path[-2] if len(path) > 1 else anchor
                parent.lock.acquire()
                try:
                    if parent is anchor:
                        pb = None
                        ok = anchor.root is node
                    else:
                        kb = self._some_key(node)
                        if kb is None or parent.version & OBSOLETE:
                            continue
                        pb = kb[parent.meta.level + len(parent.prefix)]
                        ok = parent.find(pb) is node
                    if not ok:
                        continue
                    node.lock.acquire()
                    try:
                        if node.version & OBSOLETE or node.handle.tier is tier:
                            return None
                        if guard is not None and not guard(
                                node, None if parent is anchor else parent):
                            return None
                        h = self.heap.alloc(node.handle.size, tier)
                        node.version |= MIGRATING
                        if node.is_leaf:
                            new = Leaf(node.key, node.kb, node.value, h, node.meta)
                        else:
                            new = type(node)(node.prefix, h, node.meta)
                            for b, c in node.items():
                                new.add(b, c)
                        begin_write(parent)
                        self._replace(parent, pb, new)
                        node.meta.tier = tier
                        mark_obsolete(node)
                        end_write(parent)
                        old = node.handle
                        self._retire(old)
                        break
                    finally:
                        node.lock.release()
                finally:
                    parent.lock.release()
        self.epoch.reclaim()
        return new

    # ------------------------------------------------------------------
    # inspection

    def items(self) -> list[tuple[int, Any]]:
        return sorted((leaf.key, leaf.value) for leaf in self.leaves())

    def __len__(self):
        return sum(1 for _ in self.leaves())

    def check(self) -> None:
        """Assert structural invariants; call only while quiescent."""
        root = self._anchor.root
        assert isinstance(root, Node256) and root.meta.level == 0 and root.prefix == b""

        def walk(node, level, known: bytes):
            assert not node.version & (LOCKED | OBSOLETE), node
            assert node.handle.live, node
            assert node.meta.tier is node.handle.tier, node
            assert node.meta.level == level, (node, level)
            if node.is_leaf:
                assert node.kb[:level] == known, node
                assert node.kb == node.key.to_bytes(KEY_BYTES, "big")
                return
            items = node.items()
            if node is not root:
                assert node.SHRINK_AT < len(items) <= node.CAP, node
                assert type(node) is not Node4 or len(items) >= 2, node
            assert node.count == len(items)
            d = level + len(node.prefix)
            assert d < KEY_BYTES, node
            here = known + node.prefix
            for b, c in items:
                walk(c, d + 1, here + bytes([b]))

        walk(root, 0, b"")
