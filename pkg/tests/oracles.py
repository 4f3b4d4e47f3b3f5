"""Reference models the suites compare the implementation against.  Each one
works from plain data (dicts, lists, the frequency multiset) and shares no
code with the package beyond tier constants."""
from __future__ import annotations

from collections import deque

from nodetier.heap import FAST, SLOW

NUM_BINS = 16
BIN_FLOORS = [0] + [1 << b for b in range(1, NUM_BINS)]


def thresholds(freqs, p_hot, p_cold):
    """``(t_hot, t_cold)`` by scanning the explicit multiset at each bin
    floor: the hot cut is the highest floor with more than ``p_hot`` of the
    leaves at or above it, the cold cut the lowest floor with at least
    ``p_cold`` of the leaves below it; the two are kept one bin apart."""
    n = len(freqs)

    def at_or_above(b):
        return sum(1 for f in freqs if f >= BIN_FLOORS[b])

    def below(b):
        return sum(1 for f in freqs if f < BIN_FLOORS[b])

    hot = next((b for b in range(NUM_BINS - 1, -1, -1) if at_or_above(b) > p_hot * n), 0)
    cold = next((b for b in range(NUM_BINS - 1) if below(b) >= p_cold * n), NUM_BINS - 2)
    if cold >= hot:
        if hot > 0:
            cold = hot - 1
        else:
            hot = cold + 1
    return BIN_FLOORS[hot], BIN_FLOORS[cold]


def demotion(shape, tiers, depth, freqs, queue, l_demote, t_cold):
    """Final tiers after draining ``queue`` with the demotion procedure.

    ``shape`` maps a node to its children, ``tiers`` and ``depth`` give the
    starting tier and depth of every node, ``freqs`` the leaf counters.
    Nodes shallower than ``l_demote`` and internal nodes with a fast child
    are passed over; anything else is made slow and its parent queued
    unless already waiting.
    """
    tiers = dict(tiers)
    parent = {c: p for p, kids in shape.items() for c in kids}
    q = deque()
    waiting = set()
    for n in queue:
        if n not in waiting:
            q.append(n)
            waiting.add(n)
    while q:
        cur = q.popleft()
        waiting.discard(cur)
        if l_demote is not None and depth[cur] < l_demote:
            continue
        kids = shape.get(cur, [])
        if kids and any(tiers[c] is FAST for c in kids):
            continue
        if not kids and tiers[cur] is FAST and freqs.get(cur, 0) >= t_cold:
            continue
        tiers[cur] = SLOW
        p = parent.get(cur)
        if p is not None and p not in waiting:
            q.append(p)
            waiting.add(p)
    return tiers


def boundary_ok(shape, tiers, root=0):
    """True when every fast node's parent is fast."""
    stack = [root]
    while stack:
        n = stack.pop()
        for c in shape.get(n, []):
            if tiers[c] is FAST and tiers[n] is not FAST:
                return False
            stack.append(c)
    return True


# -- linearizability ----------------------------------------------------------

class MapModel:
    """Sequential map: ``insert`` upserts, ``update``/``remove`` report
    whether the key was present, ``get`` returns the value or ``None``."""

    @staticmethod
    def step(state, op):
        name, key, arg = op
        d = dict(state)
        if name == "insert":
            d[key] = arg
            out = None
        elif name == "update":
            out = key in d
            if out:
                d[key] = arg
        elif name == "remove":
            out = key in d
            d.pop(key, None)
        elif name == "get":
            out = d.get(key)
        else:
            raise ValueError(name)
        return frozenset(d.items()), out


def linearizable(history, initial, model=MapModel):
    """Wing-Gong search with memoised (done-set, state) pairs.

    ``history`` holds ``(call, ret, op, result)`` with ``call < ret`` taken
    from one global counter.  An operation may be linearised next when its
    call precedes the earliest return among those not yet linearised.
    """
    ops = sorted(history, key=lambda h: h[0])
    n = len(ops)
    full = (1 << n) - 1
    start = (0, frozenset(initial.items()))
    seen = {start}
    stack = [start]
    while stack:
        mask, state = stack.pop()
        if mask == full:
            return True
        pending = [i for i in range(n) if not mask >> i & 1]
        horizon = min(ops[i][1] for i in pending)
        for i in pending:
            call, _, op, result = ops[i]
            if call > horizon:
                break
            nxt, out = model.step(state, op)
            if out != result:
                continue
            node = (mask | 1 << i, nxt)
            if node not in seen:
                seen.add(node)
                stack.append(node)
    return False
