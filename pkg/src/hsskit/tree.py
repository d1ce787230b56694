"""Fully populated binary trees of contiguous index intervals.

Nodes are labelled ``(level, position)`` with level ``0..P`` and position
``1..2**level``; the children of ``(p, j)`` are ``(p+1, 2j-1)`` and
``(p+1, 2j)``. Index intervals are zero-based half-open ranges over
``range(N)``.
"""
from dataclasses import dataclass
from math import ceil

import numpy as np

from .exceptions import InvalidInputError

ROOT = (0, 1)


@dataclass(frozen=True)
class HssTree:
    """Binary tree over ``range(n)`` with ``2**depth`` leaves.

    ``leaf_bounds`` holds the ``2**depth + 1`` leaf boundaries; every other
    interval is derived from them.
    """

    n: int
    depth: int
    leaf_bounds: tuple

    def __post_init__(self):
        b = self.leaf_bounds
        if len(b) != 2**self.depth + 1 or b[0] != 0 or b[-1] != self.n:
            raise InvalidInputError("leaf bounds do not partition range(n)")
        if any(hi <= lo for lo, hi in zip(b[:-1], b[1:])):
            raise InvalidInputError("leaf intervals must be nonempty")

    # navigation

    def check(self, node):
        p, j = node
        if not (0 <= p <= self.depth and 1 <= j <= 2**p):
            raise InvalidInputError(f"node {node} outside a depth-{self.depth} tree")
        return node

    def is_leaf(self, node):
        return self.check(node)[0] == self.depth

    def children(self, node):
        p, j = self.check(node)
        if p == self.depth:
            raise InvalidInputError(f"leaf {node} has no children")
        return (p + 1, 2 * j - 1), (p + 1, 2 * j)

    def parent(self, node):
        p, j = self.check(node)
        if p == 0:
            raise InvalidInputError("the root has no parent")
        return (p - 1, (j + 1) // 2)

    def sibling(self, node):
        p, j = self.check(node)
        if p == 0:
            raise InvalidInputError("the root has no sibling")
        return (p, j + 1 if j % 2 else j - 1)

    def nodes_at_level(self, p):
        if not 0 <= p <= self.depth:
            raise InvalidInputError(f"level {p} outside 0..{self.depth}")
        return [(p, j) for j in range(1, 2**p + 1)]

    def nodes(self):
        """All nodes ordered by (level, position)."""
        return [nd for p in range(self.depth + 1) for nd in self.nodes_at_level(p)]

    def leaves(self):
        return self.nodes_at_level(self.depth)

    # index sets

    def interval(self, node):
        p, j = self.check(node)
        width = 2 ** (self.depth - p)
        return self.leaf_bounds[(j - 1) * width], self.leaf_bounds[j * width]

    def indices(self, node):
        lo, hi = self.interval(node)
        return np.arange(lo, hi)

    def size(self, node):
        lo, hi = self.interval(node)
        return hi - lo

    def leaf_sizes(self):
        b = self.leaf_bounds
        return [hi - lo for lo, hi in zip(b[:-1], b[1:])]

    def leaf_of(self, i):
        """Leaf node containing global index ``i``."""
        j = int(np.searchsorted(self.leaf_bounds, i, side="right"))
        return (self.depth, j)


def _split(lo, hi, levels):
    if levels == 0:
        return [lo]
    mid = lo + ceil((hi - lo) / 2)
    return _split(lo, mid, levels - 1) + _split(mid, hi, levels - 1)


def build_uniform_tree(n, max_leaf):
    """Shallowest balanced tree whose leaves hold at most ``max_leaf`` indices.

    Every split gives the left child the ceiling half.
    """
    if n < 2:
        raise InvalidInputError("n must be at least 2")
    if max_leaf < 1:
        raise InvalidInputError("max_leaf must be positive")
    depth = 0
    while ceil(n / 2**depth) > max_leaf:
        depth += 1
    # guard against empty leaves when splitting tiny intervals
    while depth and 2**depth > n:
        depth -= 1
    bounds = tuple(_split(0, n, depth)) + (n,)
    return HssTree(n, depth, bounds)
