"""Point quadtree built down to an epsilon-dependent entry level.

Leaves keep a stack of catalog row indices; internal nodes keep nothing.
Splitting stops when a node reaches the entry level or holds fewer than
three points.  Below the entry level, leaves can still be split lazily
(``split_node``) while pairs of nodes are descended during filtering.
"""

from __future__ import annotations

import sys
import threading
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .catalog import Catalog
from .errors import ContractError
from .geometry import Rect, distances_from

DEFAULT_MAX_DEPTH = 24
MIN_SPLIT_POINTS = 3


class QuadNode:
    __slots__ = ("quadrant", "level", "children", "points", "count", "_centroid", "_diameter")

    def __init__(self, quadrant: Rect, level: int, points: np.ndarray):
        self.quadrant = quadrant
        self.level = level
        self.children: tuple[QuadNode, ...] = ()
        self.points = points
        self.count = len(points)
        self._centroid = quadrant.center
        self._diameter = quadrant.diagonal

    @property
    def centroid(self) -> tuple[float, float]:
        return self._centroid

    @property
    def diameter(self) -> float:
        return self._diameter

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def point_indices(self) -> np.ndarray:
        """Catalog rows stored in this subtree, in Z-order of the leaves."""
        if self.is_leaf:
            return self.points
        parts = [c.point_indices() for c in self.children]
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)

    def leaves(self) -> Iterator["QuadNode"]:
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()

    def __repr__(self) -> str:
        return f"QuadNode(level={self.level}, count={self.count}, quadrant={self.quadrant})"


def _partition(node: QuadNode, xy: np.ndarray) -> tuple[QuadNode, ...]:
    """Four children tiling ``node.quadrant`` with its points redistributed."""
    cx, cy = node.quadrant.center
    pts = node.points
    px = xy[pts, 0]
    py = xy[pts, 1]
    west = px <= cx
    north = py > cy
    masks = (west & north, ~west & north, west & ~north, ~west & ~north)
    return tuple(
        QuadNode(rect, node.level + 1, pts[m]) for rect, m in zip(node.quadrant.quadrants(), masks)
    )


def compute_entry_level(root_diameter: float, eps: float, max_depth: int = DEFAULT_MAX_DEPTH) -> int:
    """Smallest level whose node diameter ``root_diameter / 2**L`` is ``<= eps``, capped."""
    if root_diameter <= eps:
        return 0
    if eps <= 0:
        return max_depth
    level = 0
    d = root_diameter
    while d > eps and level < max_depth:
        level += 1
        d = root_diameter / 2.0**level
    return level


@dataclass
class BuildStats:
    height: int = 0
    entry_level: int = 0
    node_count: int = 0
    leaf_count: int = 0
    max_leaf_points: int = 0
    build_ms: float = 0.0
    bytes_estimate: int = 0
    capped: bool = False

    def as_dict(self) -> dict:
        return {
            "height": self.height,
            "entry_level": self.entry_level,
            "node_count": self.node_count,
            "leaf_count": self.leaf_count,
            "max_leaf_points": self.max_leaf_points,
            "build_ms": self.build_ms,
            "bytes_estimate": self.bytes_estimate,
            "capped": self.capped,
        }


@dataclass(eq=False)
class Quadtree:
    root: QuadNode
    entry_level: int
    height: int
    catalog: Catalog
    max_depth: int = DEFAULT_MAX_DEPTH
    capped: bool = False
    stats: BuildStats = field(default_factory=BuildStats)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def xy(self) -> np.ndarray:
        return self.catalog.xy

    @property
    def slack(self) -> float:
        """Absolute margin covering rounding in centroid and quadrant arithmetic."""
        b = self.root.quadrant
        mag = max(abs(b.xmin), abs(b.xmax), abs(b.ymin), abs(b.ymax), b.diagonal)
        return 1e-12 * (1.0 + mag)

    # -- traversal -----------------------------------------------------

    def nodes(self) -> Iterator[QuadNode]:
        stack = [self.root]
        while stack:
            n = stack.pop()
            yield n
            stack.extend(reversed(n.children))

    def leaves(self) -> Iterator[QuadNode]:
        return self.root.leaves()

    def nodes_at_level(self, level: int) -> list[QuadNode]:
        """Nodes at depth ``level`` plus shallower leaves standing in for their subtree.

        Levels up to ``max(height, entry_level)`` are accepted; for a sparse
        catalog the tree may stop short of the entry level.
        """
        if not 0 <= level <= max(self.height, self.entry_level):
            raise ContractError(f"level {level} outside 0..{max(self.height, self.entry_level)}")
        out: list[QuadNode] = []

        def walk(n: QuadNode) -> None:
            if n.level == level or n.is_leaf:
                out.append(n)
                return
            for c in n.children:
                walk(c)

        walk(self.root)
        return out

    def entry_nodes(self) -> list[QuadNode]:
        return self.nodes_at_level(self.entry_level)

    def neighbors(self, n: QuadNode, radius: float, nonempty: bool = False) -> list[QuadNode]:
        """Entry-level nodes whose quadrant comes within ``radius`` of ``n``'s centroid.

        The result always contains ``n``.  Order follows the Z-order
        traversal of ``nodes_at_level``.  With ``nonempty`` empty subtrees
        are skipped.
        """
        cx, cy = n.centroid
        level = self.entry_level
        out: list[QuadNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if nonempty and node.count == 0:
                continue
            if node is not n and node.quadrant.min_distance(cx, cy) > radius:
                continue
            if node.level == level or node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def points_in_annulus(self, x: float, y: float, rmin: float, rmax: float) -> np.ndarray:
        """Catalog rows whose distance to (x, y) lies in ``[rmin, rmax]``."""
        found: list[np.ndarray] = []
        xy = self.catalog.xy
        slack = self.slack
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.count == 0:
                continue
            q = node.quadrant
            if q.min_distance(x, y) > rmax + slack or q.max_distance(x, y) < rmin - slack:
                continue
            if node.is_leaf:
                pts = node.points
                d = distances_from(x, y, xy[pts])
                found.append(pts[(d >= rmin) & (d <= rmax)])
            else:
                stack.extend(reversed(node.children))
        if not found:
            return np.zeros(0, dtype=np.intp)
        return np.sort(np.concatenate(found))

    # -- lazy splitting ------------------------------------------------

    def can_split(self, n: QuadNode) -> bool:
        return n.is_leaf and n.count >= MIN_SPLIT_POINTS and n.level < self.max_depth

    def split_node(self, n: QuadNode) -> tuple[QuadNode, ...]:
        """Children of ``n``, materialising them first if ``n`` is a leaf.

        Materialisation is guarded by a lock so concurrent callers observe
        one set of children.
        """
        if n.children:
            return n.children
        with self._lock:
            if not n.children:
                children = _partition(n, self.catalog.xy)
                n.children = children
                n.points = np.zeros(0, dtype=np.intp)
        return n.children


def build(catalog: Catalog, eps: float, max_depth: int = DEFAULT_MAX_DEPTH) -> Quadtree:
    if len(catalog) == 0:
        raise ContractError("cannot index an empty catalog")
    t0 = time.perf_counter()
    bounds = catalog.bounds
    entry = compute_entry_level(bounds.diagonal, eps, max_depth)
    capped = bounds.diagonal / 2.0**entry > eps
    root = QuadNode(bounds, 0, np.arange(len(catalog), dtype=np.intp))
    stack = [root]
    height = 0
    xy = catalog.xy
    while stack:
        node = stack.pop()
        height = max(height, node.level)
        if node.level >= entry or node.count < MIN_SPLIT_POINTS:
            continue
        node.children = _partition(node, xy)
        node.points = np.zeros(0, dtype=np.intp)
        stack.extend(node.children)

    tree = Quadtree(root, entry, height, catalog, max_depth=max_depth, capped=capped)
    tree.stats = _collect_stats(tree, (time.perf_counter() - t0) * 1000.0)
    return tree


def _collect_stats(tree: Quadtree, build_ms: float) -> BuildStats:
    node_count = leaf_count = max_pts = 0
    nbytes = 0
    for n in tree.nodes():
        node_count += 1
        nbytes += sys.getsizeof(n) + 4 * 8
        if n.is_leaf:
            leaf_count += 1
            max_pts = max(max_pts, n.count)
            nbytes += n.points.nbytes
    return BuildStats(
        height=tree.height,
        entry_level=tree.entry_level,
        node_count=node_count,
        leaf_count=leaf_count,
        max_leaf_points=max_pts,
        build_ms=round(build_ms, 3),
        bytes_estimate=nbytes,
        capped=bool(tree.capped),
    )


def brute_force_neighbors(tree: Quadtree, n: QuadNode, radius: float) -> list[QuadNode]:
    """Reference for ``neighbors``: scan every entry-level node."""
    cx, cy = n.centroid
    return [m for m in tree.entry_nodes() if m is n or m.quadrant.min_distance(cx, cy) <= radius]
