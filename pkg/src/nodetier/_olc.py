"""Version-word helpers shared by the concurrent indexes.

Writers take a node's mutex, set ``LOCKED`` in its version word while they
change it, and bump the counter when they are done.  Readers never lock:
they remember the version, read, and check the version again.
"""
from __future__ import annotations

import time

LOCKED = 1
OBSOLETE = 2
MIGRATING = 4
STEP = 8


class Restart(Exception):
    """Raised inside an optimistic read when a version check fails."""


def begin_write(node) -> None:
    node.version |= LOCKED


def end_write(node) -> None:
    node.version = (node.version & ~LOCKED) + STEP


def mark_obsolete(node) -> None:
    node.version |= OBSOLETE


def backoff() -> None:
    # give the writer holding the node a chance to run
    time.sleep(0)


def release_all(nodes) -> None:
    for n in nodes:
        n.lock.release()
