"""Per-anchor candidate generation over the quadtree.

For every entry-level anchor node the filter finds the entry-level nodes
close enough to hold matching stars, tests each (anchor node, neighbour
node) pair against every anchor-to-element distance of the pattern and,
for surviving pairs, walks down both subtrees while that still prunes
child pairs.  Star pairs that pass the exact distance and attribute tests
land in one ``BucketSet`` per anchor star.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog
from .geometry import QueryPattern, euclidean_distance, pairwise_distances, property_mask
from .quadtree import MIN_SPLIT_POINTS, QuadNode, Quadtree

# Pair counts below this are scanned with plain floats; numpy call overhead dominates there.
_SMALL_SCAN = 64


@dataclass
class BucketSet:
    """Candidate stars for each non-anchor element, given one anchor star.

    ``anchor`` and bucket entries are catalog row indices.
    """

    anchor: int
    anchor_element: int
    buckets: dict[int, list[int]]
    catalog: Catalog | None = field(default=None, repr=False, compare=False)

    def sizes(self) -> dict[int, int]:
        return {i: len(b) for i, b in self.buckets.items()}

    @property
    def complete(self) -> bool:
        return all(len(b) > 0 for b in self.buckets.values())

    @property
    def entries(self) -> int:
        return sum(len(b) for b in self.buckets.values())


@dataclass
class FilterCounters:
    comparisons: int = 0
    node_pairs: int = 0
    descents: int = 0
    candidate_pairs: int = 0


def node_pair_compatible(n1: QuadNode, n2: QuadNode, target: float, eps_eff: float, slack: float = 0.0) -> bool:
    """Can some star of ``n1`` and some star of ``n2`` lie ``target +/- eps_eff`` apart?

    Every star sits within half a diameter of its node centroid, so the
    centroid distance may differ from a star distance by at most the two
    half-diameters.
    """
    d = euclidean_distance(n1.centroid, n2.centroid)
    return abs(d - target) <= eps_eff + (n1.diameter + n2.diameter) / 2.0 + slack


class PairFilter:
    """Filtering state for one query over one tree.

    Holds the attribute masks, the effective distance tolerance and the
    comparison counters.  One instance per worker; the tree itself is
    shared.
    """

    def __init__(
        self,
        tree: Quadtree,
        q: QueryPattern,
        eps_eff: float,
        theta: float | None = None,
        descend: bool = True,
        masks: list[np.ndarray] | None = None,
    ):
        self.tree = tree
        self.q = q
        self.eps_eff = float(eps_eff)
        self.theta = q.theta if theta is None else float(theta)
        self.descend = descend
        self.xy = tree.catalog.xy
        self.slack = tree.slack
        if masks is None:
            masks = [property_mask(tree.catalog.attrs, e, self.theta) for e in q.elements]
        self.masks = masks
        self.anchor_mask = masks[q.anchor_index]
        self._mask_lists = [m.tolist() for m in masks]
        self.counters = FilterCounters()
        self._row_cache: dict = {}
        a = q.anchor_index
        self._targets = [(i, float(q.dist_matrix[a, i])) for i in range(q.k) if i != a]

    # -- FilterNeighbors -----------------------------------------------

    def search_radius(self, node: QuadNode) -> float:
        # Anchor stars may sit anywhere in the node, hence the half diameter.
        return self.q.max_anchor_distance + self.eps_eff + node.diameter / 2.0 + self.slack

    def filter_neighbors(self, node: QuadNode, level_nodes: list[QuadNode] | None = None) -> list[QuadNode]:
        if node.count == 0 or len(self._rows(node, -1)[0]) == 0:
            return []
        ne = self.tree.neighbors(node, self.search_radius(node), nonempty=True)
        if level_nodes is not None:
            allowed = {id(m) for m in level_nodes}
            ne = [m for m in ne if id(m) in allowed]
        return ne

    # -- FindMatchingStars ---------------------------------------------

    def find_matching_stars(
        self, acc: dict[int, BucketSet], anchor_node: QuadNode, neighbor_node: QuadNode
    ) -> dict[int, BucketSet]:
        q = self.q
        a = q.anchor_index
        # node_pair_compatible for every element at once: the centroid distance is shared.
        d = euclidean_distance(anchor_node.centroid, neighbor_node.centroid)
        allow = self.eps_eff + (anchor_node.diameter + neighbor_node.diameter) / 2.0 + self.slack
        live = []
        for i, target in self._targets:
            self.counters.node_pairs += 1
            if abs(d - target) <= allow:
                live.append((i, target))
        if not live:
            return acc
        if self._terminal(anchor_node) and self._terminal(neighbor_node):
            # No descent possible: one star scan serves every element.
            found = self._leaf_pairs(anchor_node, neighbor_node, live)
        else:
            found = [(i, s1, s2) for i, target in live
                     for s1, s2 in self.tree_descend(anchor_node, neighbor_node, target, i)]
        for i, s1, s2 in found:
            bs = acc.get(s1)
            if bs is None:
                bs = BucketSet(s1, a, {j: [] for j in range(q.k) if j != a}, self.tree.catalog)
                acc[s1] = bs
            bs.buckets[i].append(s2)
        return acc

    def _terminal(self, n: QuadNode) -> bool:
        return not n.children and (n.count < MIN_SPLIT_POINTS or n.level >= self.tree.max_depth)

    def _leaf_pairs(self, n1: QuadNode, n2: QuadNode, live: list[tuple[int, float]]) -> list[tuple[int, int, int]]:
        """``star_pairs`` for several elements over two leaves, sharing the distances."""
        if not self.descend or len(live) == 1 or n1.count * n2.count > _SMALL_SCAN:
            return [(i, s1, s2) for i, t in live for s1, s2 in self.star_pairs(n1, n2, t, i)]
        _, pa = self._rows(n1, -1)
        if not pa:
            return []
        _, pb = self._rows(n2, -2)
        eps = self.eps_eff
        masks = self._mask_lists
        out = []
        for i, _t in live:
            self.counters.comparisons += len(pa) * len(self._rows(n2, i)[1])
        for ra, xa, ya in pa:
            for rb, xb, yb in pb:
                if ra == rb:
                    continue
                dx = xa - xb
                dy = ya - yb
                dist = math.sqrt(dx * dx + dy * dy)
                for i, t in live:
                    if abs(dist - t) <= eps and masks[i][rb]:
                        out.append((i, ra, rb))
        self.counters.candidate_pairs += len(out)
        return out

    # -- TreeDescend ---------------------------------------------------

    def _children(self, n: QuadNode) -> tuple[QuadNode, ...] | None:
        if n.children:
            return n.children
        if n.count >= MIN_SPLIT_POINTS and n.level < self.tree.max_depth:
            return self.tree.split_node(n)
        return None

    def tree_descend(self, n1: QuadNode, n2: QuadNode, target: float, qi: int) -> list[tuple[int, int]]:
        """Star pairs (anchor row, candidate row) from ``n1 x n2`` matching ``target``.

        Goes one level down whenever some pair of non-empty children can be
        ruled out by ``node_pair_compatible``; otherwise scans the stars.
        """
        if self.descend:
            k1 = self._children(n1)
            k2 = self._children(n2)
            if k1 is not None or k2 is not None:
                c1 = [c for c in (k1 or (n1,)) if c.count]
                c2 = [c for c in (k2 or (n2,)) if c.count]
                pairs = [(x, y) for x in c1 for y in c2]
                eps, slack = self.eps_eff, self.slack
                keep = [
                    (x, y) for x, y in pairs
                    if node_pair_compatible(x, y, target, eps, slack)
                ]
                if len(keep) < len(pairs):
                    self.counters.descents += 1
                    out: list[tuple[int, int]] = []
                    for x, y in keep:
                        out.extend(self.tree_descend(x, y, target, qi))
                    return out
        return self.star_pairs(n1, n2, target, qi)

    def _rows(self, n: QuadNode, mask_key: int) -> tuple[np.ndarray, list[tuple[int, float, float]]]:
        """Rows of ``n`` passing mask ``mask_key`` (-1 = anchor, -2 = all), cached per node."""
        key = (id(n), mask_key)
        hit = self._row_cache.get(key)
        if hit is None:
            rows = n.point_indices()
            if mask_key != -2:
                mask = self.anchor_mask if mask_key == -1 else self.masks[mask_key]
                rows = rows[mask[rows]]
            pts = [(int(r), float(self.xy[r, 0]), float(self.xy[r, 1])) for r in rows]
            hit = (rows, pts)
            self._row_cache[key] = hit
        return hit

    def star_pairs(self, n1: QuadNode, n2: QuadNode, target: float, qi: int) -> list[tuple[int, int]]:
        a, pa = self._rows(n1, -1)
        b, pb = self._rows(n2, qi)
        na, nb = len(a), len(b)
        if na == 0 or nb == 0:
            return []
        self.counters.comparisons += na * nb
        eps = self.eps_eff
        if na * nb <= _SMALL_SCAN:
            out = []
            for ra, xa, ya in pa:
                for rb, xb, yb in pb:
                    dx = xa - xb
                    dy = ya - yb
                    if ra != rb and abs(math.sqrt(dx * dx + dy * dy) - target) <= eps:
                        out.append((ra, rb))
            self.counters.candidate_pairs += len(out)
            return out
        d = pairwise_distances(self.xy[a], self.xy[b])
        hit = (np.abs(d - target) <= eps) & (a[:, None] != b[None, :])
        r, c = np.nonzero(hit)
        self.counters.candidate_pairs += len(r)
        return list(zip(a[r].tolist(), b[c].tolist()))

    # -- per anchor node -----------------------------------------------

    def bucket_sets(self, node: QuadNode, level_nodes: list[QuadNode] | None = None) -> list[BucketSet]:
        """All BucketSets for anchor stars in ``node``, sorted by anchor row.

        Anchors passing the attribute screen but without any candidate get
        an empty BucketSet, so callers can count them.
        """
        acc: dict[int, BucketSet] = {}
        for nb in self.filter_neighbors(node, level_nodes):
            self.find_matching_stars(acc, node, nb)
        q = self.q
        out = []
        rows = node.point_indices()
        for r in sorted(rows[self.anchor_mask[rows]].tolist()):
            bs = acc.get(r)
            if bs is None:
                bs = BucketSet(r, q.anchor_index, {j: [] for j in range(q.k) if j != q.anchor_index},
                               self.tree.catalog)
            out.append(bs)
        return out


def filter_neighbors(
    q: QueryPattern,
    t: Quadtree,
    node: QuadNode,
    level_nodes: list[QuadNode],
    theta: float | None = None,
    eps_eff: float | None = None,
) -> list[QuadNode]:
    eps = q.epsilon if eps_eff is None else eps_eff
    return PairFilter(t, q, eps, theta).filter_neighbors(node, level_nodes)


def find_matching_stars(
    bs: dict[int, BucketSet],
    q: QueryPattern,
    t: Quadtree,
    anchor_node: QuadNode,
    neighbor_node: QuadNode,
    theta: float | None = None,
    eps_eff: float | None = None,
) -> dict[int, BucketSet]:
    eps = q.epsilon if eps_eff is None else eps_eff
    return PairFilter(t, q, eps, theta).find_matching_stars(bs, anchor_node, neighbor_node)


def tree_descend(
    t: Quadtree,
    n1: QuadNode,
    n2: QuadNode,
    target: float,
    qi: int,
    eps_eff: float,
    q: QueryPattern,
    theta: float | None = None,
    descend: bool = True,
) -> list[tuple[int, int]]:
    return PairFilter(t, q, eps_eff, theta, descend=descend).tree_descend(n1, n2, target, qi)
