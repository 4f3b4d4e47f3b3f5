"""Concurrent B+tree whose nodes live on a :class:`TieredHeap`.

Readers descend optimistically and validate version words; writers couple
node mutexes top-down and keep only the ancestors a split or merge could
reach.  Each node's metadata stores its height above the leaves, which does
not change when the root splits; depth is derived from the tree height.

The tree also implements the :class:`~nodetier.placement.TreeAdapter`
methods the background engine drives.
"""
from __future__ import annotations

import threading
from bisect import bisect_left, bisect_right
from collections import deque
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

KEY_LIMIT = 1 << 64


def node_layouts(order: int = 16, value_size: int = 8, managed: bool = True) -> dict:
    """Logical byte layout of internal and leaf nodes."""
    internal = {"version": 8, "nkeys": 2, "keys": 8 * order, "children": 8 * (order + 1)}
    leaf = {"version": 8, "nkeys": 2, "keys": 8 * order, "values": value_size * order,
            "next": 8}
    if managed:
        internal = managed_layout(internal, leaf=False)
        leaf = managed_layout(leaf, leaf=True)
    return {"internal": internal, "leaf": leaf}


class _Anchor:
    """Holds the root pointer so the root can be replaced like any child."""

    __slots__ = ("root", "height", "lock", "version")

    def __init__(self, root, height):
        self.root = root
        self.height = height
        self.lock = threading.Lock()
        self.version = 0


class _LeafLink:
    """Stable hop in the leaf chain; survives relocation of its leaf."""

    __slots__ = ("leaf", "next")

    def __init__(self, leaf, nxt=None):
        self.leaf = leaf
        self.next = nxt


class Node:
    __slots__ = ("version", "lock", "keys", "handle", "meta")
    is_leaf = False

    def __repr__(self):
        kind = "Leaf" if self.is_leaf else "Internal"
        lo = self.keys[0] if self.keys else None
        return f"<{kind} h={self.meta.level} first={lo} {self.handle.tier.name}>"


class Internal(Node):
    __slots__ = ("children",)

    def __init__(self, keys, children, handle=None, meta=None):
        self.version = 0
        self.lock = threading.Lock()
        self.keys = keys
        self.children = children
        self.handle = handle
        self.meta = meta


class Leaf(Node):
    __slots__ = ("values", "link")
    is_leaf = True

    def __init__(self, keys, values, link=None, handle=None, meta=None):
        self.version = 0
        self.lock = threading.Lock()
        self.keys = keys
        self.values = values
        self.link = link
        self.handle = handle
        self.meta = meta


def _partition(n: int, fill: int, lo: int) -> list[int]:
    """Split ``n`` items into groups of about ``fill``, none smaller than ``lo``."""
    m = max(1, -(-n // fill))
    while m > 1 and n // m < lo:
        m -= 1
    base, extra = divmod(n, m)
    return [base + (1 if j < extra else 0) for j in range(m)]


class BPlusTree:
    """Order-``order`` B+tree mapping 64-bit unsigned keys to values."""

    def __init__(self, heap: TieredHeap, params: Optional[PlacementParams] = None,
                 policy: Optional[AllocationPolicy] = None, order: int = 16,
                 value_size: int = 8):
        if order < 4 or order % 2:
            raise ValueError("order must be an even number >= 4")
        self.heap = heap
        self.params = params if params is not None else PlacementParams()
        self.policy = policy if policy is not None else LayerAwarePolicy(self.params, heap)
        self.order = order
        self.min_keys = order // 2
        self.value_size = value_size
        layouts = node_layouts(order, value_size)
        self.internal_size = sum(layouts["internal"].values())
        self.leaf_bytes = sum(layouts["leaf"].values())
        self.epoch = EpochManager()
        root = self._new_leaf([], [], depth=0, parent_tier=FAST)
        root.link = _LeafLink(root)
        self._anchor = _Anchor(root, 1)

    # ------------------------------------------------------------------
    # allocation helpers

    def _alloc(self, size, depth, parent_tier, is_leaf, children=(), held=()):
        handle, demote = alloc_node(self.heap, self.policy, size, depth, parent_tier,
                                    is_leaf, children, self.tier_of)
        for child in demote:
            self._demote_subtree(child, held)
        return handle

    def _new_leaf(self, keys, values, depth, parent_tier, link=None):
        h = self._alloc(self.leaf_bytes, depth, parent_tier, True)
        return Leaf(keys, values, link, h, LeafMeta(0, h.tier))

    def _new_internal(self, keys, children, height, depth, parent_tier, held=()):
        h = self._alloc(self.internal_size, depth, parent_tier, False, children, held)
        return Internal(keys, children, h, NodeMeta(height, h.tier))

    def _set_tier(self, node, tier: TierId) -> None:
        self.heap.relocate(node.handle, tier)
        node.meta.tier = tier

    def _demote_subtree(self, node, held=()) -> None:
        """Move ``node`` and its fast descendants to slow memory in place.
        The caller holds (or owns) ``node``'s parent."""
        mine = node not in held
        if mine:
            node.lock.acquire()
        try:
            if not node.is_leaf:
                for c in node.children:
                    if c.handle.tier is FAST:
                        self._demote_subtree(c, held)
            if node.handle.tier is FAST:
                self._set_tier(node, SLOW)
        finally:
            if mine:
                node.lock.release()

    def _adopt_fix(self, node, parent_tier, kids, held) -> None:
        # keep a slow node from acquiring fast children
        if node.handle.tier is FAST or not self.policy.preserve_boundary:
            return
        fast = [c for c in kids if c.handle.tier is FAST]
        if not fast:
            return
        if parent_tier is FAST:
            try:
                self._set_tier(node, FAST)
                return
            except FastExhausted:
                pass
        for c in fast:
            self._demote_subtree(c, held)

    # ------------------------------------------------------------------
    # reads

    def _check_key(self, key):
        if not 0 <= key < KEY_LIMIT:
            raise ValueError(f"key {key} outside 64-bit range")

    def _descend(self, key):
        """Optimistic root-to-leaf walk.  Returns ``(leaf, version, path)`` or
        ``None`` when a concurrent writer forces a restart."""
        anchor = self._anchor
        av = anchor.version
        if av & LOCKED:
            return None
        node = anchor.root
        v = node.version
        if v & (LOCKED | OBSOLETE) or anchor.version != av:
            return None
        path = []
        while not node.is_leaf:
            try:
                child = node.children[bisect_right(node.keys, key)]
            except IndexError:
                return None
            cv = child.version
            if cv & (LOCKED | OBSOLETE) or node.version != v:
                return None
            path.append(node)
            node, v = child, cv
        return node, v, path

    def _charge(self, path, leaf) -> None:
        rec = self.heap.record_access
        for n in path:
            rec(n.handle)
        rec(leaf.handle, True)
        track_leaf_access(leaf.meta)

    def get(self, key, default=None):
        self._check_key(key)
        with self.epoch:
            while True:
                got = self._descend(key)
                if got is None:
                    backoff()
                    continue
                leaf, v, path = got
                keys = leaf.keys
                i = bisect_left(keys, key)
                try:
                    found = i < len(keys) and keys[i] == key
                    value = leaf.values[i] if found else default
                except IndexError:
                    backoff()
                    continue
                if leaf.version != v:
                    backoff()
                    continue
                self._charge(path, leaf)
                return value

    def __contains__(self, key):
        sentinel = object()
        return self.get(key, sentinel) is not sentinel

    def scan(self, start, count: int) -> list[tuple[int, Any]]:
        """Up to ``count`` pairs with key >= ``start`` in key order.

        Each leaf is read atomically; the scan as a whole is not a snapshot.
        """
        self._check_key(start)
        out: list = []
        if count <= 0:
            return out
        lo = start
        rec = self.heap.record_access
        with self.epoch:
            leaf = None
            while len(out) < count:
                if leaf is None:
                    got = self._descend(lo)
                    if got is None:
                        backoff()
                        continue
                    leaf, _, path = got
                    for n in path:
                        rec(n.handle)
                v = leaf.version
                if v & OBSOLETE:
                    leaf = None
                    continue
                if v & LOCKED:
                    backoff()
                    continue
                keys, values = leaf.keys, leaf.values
                i = bisect_left(keys, lo)
                try:
                    chunk = [(keys[j], values[j])
                             for j in range(i, min(len(keys), i + count - len(out)))]
                except IndexError:
                    backoff()
                    continue
                nxt = leaf.link.next
                if leaf.version != v:
                    backoff()
                    continue
                rec(leaf.handle, True)
                track_leaf_access(leaf.meta)
                out.extend(chunk)
                if chunk:
                    lo = chunk[-1][0] + 1
                if nxt is None or lo >= KEY_LIMIT:
                    break
                leaf = nxt.leaf
        return out

    # ------------------------------------------------------------------
    # writes

    def _lock_path(self, key, safe):
        """Couple mutexes from the anchor down to ``key``'s leaf, keeping only
        ancestors of unsafe nodes.  Returns ``(held, path)``; ``held`` is a
        suffix of ``[anchor] + path``."""
        anchor = self._anchor
        anchor.lock.acquire()
        held = [anchor]
        node = anchor.root
        node.lock.acquire()
        held.append(node)
        path = [node]
        if safe(node, True):
            anchor.lock.release()
            held = [node]
        while not node.is_leaf:
            child = node.children[bisect_right(node.keys, key)]
            child.lock.acquire()
            path.append(child)
            if safe(child, False):
                for n in held:
                    n.lock.release()
                held = [child]
            else:
                held.append(child)
            node = child
        return held, path

    def _parent_tier(self, path, k):
        return path[k - 1].handle.tier if k > 0 else FAST

    def _depth(self, node):
        return self._anchor.height - 1 - node.meta.level

    def insert(self, key, value) -> None:
        """Insert or overwrite."""
        self._check_key(key)
        order = self.order

        def safe(node, is_root):
            return len(node.keys) < order

        with self.epoch:
            held, path = self._lock_path(key, safe)
            written = []
            try:
                leaf = path[-1]
                keys = leaf.keys
                i = bisect_left(keys, key)
                begin_write(leaf)
                written.append(leaf)
                if i < len(keys) and keys[i] == key:
                    leaf.values[i] = value
                else:
                    keys.insert(i, key)
                    leaf.values.insert(i, value)
                    if len(keys) > order:
                        self._split_up(path, held, written)
                self._charge(path[:-1], leaf)
            finally:
                for n in written:
                    end_write(n)
                for n in held:
                    n.lock.release()
        self.epoch.reclaim()

    def _split_up(self, path, held, written):
        held_set = set(held)
        k = len(path) - 1
        node = path[k]
        while len(node.keys) > self.order:
            depth = self._anchor.height - 1 - node.meta.level
            ptier = self._parent_tier(path, k)
            mid = len(node.keys) // 2
            if node.is_leaf:
                right = self._new_leaf(node.keys[mid:], node.values[mid:], depth, ptier)
                right.link = _LeafLink(right, node.link.next)
                sep = right.keys[0]
                del node.keys[mid:]
                del node.values[mid:]
                node.link.next = right.link
            else:
                sep = node.keys[mid]
                right = self._new_internal(node.keys[mid + 1:], node.children[mid + 1:],
                                           node.meta.level, depth, ptier, held_set)
                del node.keys[mid:]
                del node.children[mid + 1:]
            if k == 0:
                anchor = self._anchor
                begin_write(anchor)
                written.append(anchor)
                root = self._new_internal([sep], [node, right], node.meta.level + 1, 0,
                                          FAST, held_set)
                anchor.root = root
                anchor.height += 1
                return
            parent = path[k - 1]
            begin_write(parent)
            written.append(parent)
            j = bisect_right(parent.keys, sep)
            parent.keys.insert(j, sep)
            parent.children.insert(j + 1, right)
            node = parent
            k -= 1

    def update(self, key, value) -> bool:
        self._check_key(key)
        with self.epoch:
            held, path = self._lock_path(key, lambda n, r: True)
            leaf = path[-1]
            try:
                i = bisect_left(leaf.keys, key)
                found = i < len(leaf.keys) and leaf.keys[i] == key
                if found:
                    begin_write(leaf)
                    leaf.values[i] = value
                    end_write(leaf)
                self._charge(path[:-1], leaf)
            finally:
                for n in held:
                    n.lock.release()
        return found

    def remove(self, key) -> bool:
        self._check_key(key)
        min_keys = self.min_keys

        def safe(node, is_root):
            if is_root:
                return node.is_leaf or len(node.keys) > 1
            return len(node.keys) > min_keys

        retired = []
        with self.epoch:
            held, path = self._lock_path(key, safe)
            written = []
            try:
                leaf = path[-1]
                i = bisect_left(leaf.keys, key)
                found = i < len(leaf.keys) and leaf.keys[i] == key
                if found:
                    begin_write(leaf)
                    written.append(leaf)
                    del leaf.keys[i]
                    del leaf.values[i]
                    if len(path) > 1 and len(leaf.keys) < min_keys:
                        self._rebalance_up(path, held, written, retired)
                self._charge(path[:-1], leaf)
            finally:
                for n in written:
                    end_write(n)
                for n in held:
                    n.lock.release()
            for h in retired:
                self._retire(h)
        self.epoch.reclaim()
        return found

    def _rebalance_up(self, path, held, written, retired):
        # ``held`` gains the sibling locks taken here; the caller releases them
        held_set = set(held)
        k = len(path) - 1
        while k > 0 and len(path[k].keys) < self.min_keys:
            node = path[k]
            parent = path[k - 1]
            if parent not in written:
                begin_write(parent)
                written.append(parent)
            i = next(j for j, c in enumerate(parent.children) if c is node)
            si = i - 1 if i > 0 else i + 1
            sib = parent.children[si]
            sib.lock.acquire()
            held.append(sib)
            held_set.add(sib)
            begin_write(sib)
            written.append(sib)
            ptier = self._parent_tier(path, k)
            if len(sib.keys) > self.min_keys:
                self._borrow(node, sib, parent, i, si, ptier, held_set)
                return
            li, ri = min(i, si), max(i, si)
            left, right = parent.children[li], parent.children[ri]
            merged = self._merge(left, right, parent.keys[li], ptier, held_set)
            parent.children[li] = merged
            del parent.children[ri]
            del parent.keys[li]
            for old in (left, right):
                mark_obsolete(old)
                retired.append(old.handle)
            path[k] = merged
            k -= 1
        root = path[0]
        if k == 0 and not root.is_leaf and not root.keys:
            anchor = self._anchor
            begin_write(anchor)
            written.append(anchor)
            anchor.root = root.children[0]
            anchor.height -= 1
            mark_obsolete(root)
            retired.append(root.handle)

    def _borrow(self, node, sib, parent, i, si, ptier, held):
        if node.is_leaf:
            if si < i:
                node.keys.insert(0, sib.keys.pop())
                node.values.insert(0, sib.values.pop())
                parent.keys[si] = node.keys[0]
            else:
                node.keys.append(sib.keys.pop(0))
                node.values.append(sib.values.pop(0))
                parent.keys[i] = sib.keys[0]
            return
        if si < i:
            node.keys.insert(0, parent.keys[si])
            moved = sib.children.pop()
            node.children.insert(0, moved)
            parent.keys[si] = sib.keys.pop()
        else:
            node.keys.append(parent.keys[i])
            moved = sib.children.pop(0)
            node.children.append(moved)
            parent.keys[i] = sib.keys.pop(0)
        self._adopt_fix(node, ptier, [moved], held)

    def _merge(self, left, right, sep, ptier, held):
        depth = self._depth(left)
        if left.is_leaf:
            m = self._new_leaf(left.keys + right.keys, left.values + right.values,
                               depth, ptier, left.link)
            left.link.leaf = m
            left.link.next = right.link.next
            right.link.leaf = None
            return m
        return self._new_internal(left.keys + [sep] + right.keys,
                                  left.children + right.children,
                                  left.meta.level, depth, ptier, held)

    # ------------------------------------------------------------------
    # bulk load

    def bulk_load(self, items: Iterable[tuple[int, Any]], on_footprint=None) -> None:
        """Build the tree bottom-up from key-sorted unique pairs.

        ``on_footprint(total_bytes)`` is called once the node count is known
        and before any block is allocated, so a caller can size the fast
        budget relative to the tree.
        """
        old = self._anchor.root
        if not old.is_leaf or old.keys:
            raise ValueError("bulk_load needs an empty tree")
        items = list(items)
        for a, b in zip(items, items[1:]):
            if a[0] >= b[0]:
                raise ValueError("bulk_load input must be strictly increasing by key")
        for k, _ in items[:1] + items[-1:]:
            self._check_key(k)
        fill = max(self.min_keys, (3 * self.order) // 4)
        sizes = _partition(len(items), fill, self.min_keys) if items else [0]
        level = []
        pos = 0
        for s in sizes:
            chunk = items[pos:pos + s]
            pos += s
            level.append(Leaf([k for k, _ in chunk], [v for _, v in chunk]))
        for leaf in level:
            leaf.link = _LeafLink(leaf)
        for a, b in zip(level, level[1:]):
            a.link.next = b.link
        n_leaves = len(level)
        levels = [level]
        while len(level) > 1:
            groups = _partition(len(level), fill + 1, self.min_keys + 1)
            up = []
            pos = 0
            for g in groups:
                kids = level[pos:pos + g]
                pos += g
                up.append(Internal([self._min_key(c) for c in kids[1:]], kids))
            level = up
            levels.append(level)
        height = len(levels)
        footprint = n_leaves * self.leaf_bytes + sum(
            len(lv) for lv in levels[1:]) * self.internal_size
        if on_footprint is not None:
            on_footprint(footprint)
        self.policy.prepare(height - 1, n_leaves, self.leaf_bytes)
        self.heap.free(old.handle)
        root = levels[-1][0]
        queue = deque([(root, 0, FAST)])
        while queue:
            node, depth, ptier = queue.popleft()
            leaf = node.is_leaf
            size = self.leaf_bytes if leaf else self.internal_size
            tier = self.policy.tier_for(depth, ptier, leaf, size)
            try:
                h = self.heap.alloc(size, tier)
            except FastExhausted:
                h = self.heap.alloc(size, SLOW)
            node.handle = h
            if leaf:
                node.meta = LeafMeta(0, h.tier)
            else:
                node.meta = NodeMeta(height - 1 - depth, h.tier)
                for c in node.children:
                    queue.append((c, depth + 1, h.tier))
        self._anchor.root = root
        self._anchor.height = height
        self._anchor.version += 8

    @staticmethod
    def _min_key(node):
        while not node.is_leaf:
            node = node.children[0]
        return node.keys[0]

    # ------------------------------------------------------------------
    # tree adapter

    def root(self):
        return self._anchor.root

    def leaves(self) -> Iterator[Leaf]:
        node = self._anchor.root
        while not node.is_leaf:
            node = node.children[0]
        link = node.link
        while link is not None:
            leaf = link.leaf
            if leaf is not None and not leaf.version & OBSOLETE:
                yield leaf
            link = link.next

    def nodes(self, include_leaves: bool = True) -> Iterator[Node]:
        stack = [self._anchor.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                if include_leaves:
                    yield node
            else:
                yield node
                stack.extend(node.children)

    def children(self, node) -> list:
        return [] if node.is_leaf else list(node.children)

    def path_to(self, node) -> Optional[list]:
        """Root-to-``node`` path found by key descent, or ``None``."""
        cur = self._anchor.root
        if not node.keys:
            return [cur] if cur is node else None
        key = node.keys[0]
        path = [cur]
        target_level = node.meta.level
        while cur is not node:
            if cur.is_leaf or cur.meta.level <= target_level:
                return None
            try:
                cur = cur.children[bisect_right(cur.keys, key)]
            except IndexError:
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
        return any(c.handle.tier is FAST for c in node.children)

    def depth_of(self, node) -> int:
        return self._anchor.height - 1 - node.meta.level

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
        return self._anchor.height - 1

    def leaf_size(self) -> int:
        return self.leaf_bytes

    @property
    def height(self) -> int:
        return self._anchor.height

    def _retire(self, h) -> None:
        self.heap.retire(h)
        self.epoch.retire(lambda: self.heap.free(h))

    def relocate(self, node, tier: TierId, guard=None):
        """Copy ``node`` into a fresh block in ``tier`` and swap it in.

        Locks parent then node.  Returns the new node, or ``None`` when the
        node is gone, already in ``tier``, or ``guard(node, parent)`` says no.
        """
        new = None
        with self.epoch:
            for _ in range(8):
                if not self.is_live(node):
                    return None
                path = self.path_to(node)
                if path is None:
                    return None
                anchor = self._anchor
                parent = path[-2] if len(path) > 1 else anchor
                parent.lock.acquire()
                try:
                    if parent is anchor:
                        ok = anchor.root is node
                    else:
                        ok = (not parent.version & OBSOLETE
                              and any(c is node for c in parent.children))
                    if not ok:
                        continue
                    node.lock.acquire()
                    try:
                        if node.version & OBSOLETE:
                            return None
                        if node.handle.tier is tier:
                            return None
                        if guard is not None and not guard(
                                node, None if parent is anchor else parent):
                            return None
                        h = self.heap.alloc(node.handle.size, tier)
                        node.version |= MIGRATING
                        if node.is_leaf:
                            new = Leaf(list(node.keys), list(node.values), node.link, h,
                                       node.meta)
                        else:
                            new = Internal(list(node.keys), list(node.children), h,
                                           node.meta)
                        begin_write(parent)
                        if parent is anchor:
                            anchor.root = new
                        else:
                            idx = next(j for j, c in enumerate(parent.children) if c is node)
                            parent.children[idx] = new
                        if new.is_leaf:
                            new.link.leaf = new
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
        out = []
        for leaf in self.leaves():
            out.extend(zip(leaf.keys, leaf.values))
        return out

    def __len__(self):
        return sum(len(leaf.keys) for leaf in self.leaves())

    def check(self) -> None:
        """Assert structural invariants; call only while quiescent."""
        root = self._anchor.root
        height = self._anchor.height
        chain = list(self.leaves())
        found = []

        def walk(node, lo, hi, depth):
            assert not node.version & (LOCKED | OBSOLETE), node
            assert node.handle.live, node
            assert node.meta.tier is node.handle.tier, node
            assert node.meta.level == height - 1 - depth, node
            keys = node.keys
            assert keys == sorted(keys) and len(set(keys)) == len(keys), node
            assert all((lo is None or k >= lo) and (hi is None or k < hi) for k in keys), node
            assert len(keys) <= self.order, node
            if node is not root:
                assert len(keys) >= self.min_keys, node
            if node.is_leaf:
                assert depth == height - 1, node
                assert len(node.values) == len(keys)
                assert node.link.leaf is node
                found.append(node)
                return
            assert len(node.children) == len(keys) + 1, node
            if node is root:
                assert keys, "internal root without keys"
            bounds = [lo] + keys + [hi]
            for j, c in enumerate(node.children):
                walk(c, bounds[j], bounds[j + 1], depth + 1)

        walk(root, None, None, 0)
        assert len(chain) == len(found) and all(a is b for a, b in zip(chain, found)), \
            "leaf chain out of order"
