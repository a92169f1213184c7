"""Exhaustive reference answers for small catalogs.

These enumerate ordered assignments of distinct catalog rows to pattern
elements directly from the full distance matrix.  A partial assignment is
dropped once one of its pairs fails, which never changes the answer
because a failing pair fails in every extension.  Nothing here touches the
quadtree, the buckets or the matrix filters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog
from .errors import OracleCapError
from .geometry import QueryPattern, distance_match, euclidean_distance, pairwise_distances, property_match

DEFAULT_CAP = 200


@dataclass
class OracleResult:
    solutions: list[tuple[int, ...]]
    subsets_examined: int = 0
    scales: dict[tuple[int, ...], tuple[float, float]] = field(default_factory=dict)


def _check_cap(catalog: Catalog, cap: int | None) -> None:
    if cap is not None and len(catalog) > cap:
        raise OracleCapError(f"oracle refuses catalogs above {cap} points (got {len(catalog)})")


def _element_masks(catalog: Catalog, q: QueryPattern, theta: float) -> list[np.ndarray]:
    pts = catalog.points
    return [np.array([property_match(p, e, theta) for p in pts], dtype=bool) for e in q.elements]


def brute_pure(
    catalog: Catalog,
    q: QueryPattern,
    eps: float | None = None,
    theta: float | None = None,
    cap: int | None = DEFAULT_CAP,
) -> OracleResult:
    """All ordered k-tuples whose pairwise distances match within ``eps``."""
    _check_cap(catalog, cap)
    eps = q.epsilon if eps is None else eps
    theta = q.theta if theta is None else theta
    n, k = len(catalog), q.k
    if k > n:
        return OracleResult([])
    dist = pairwise_distances(catalog.xy)
    masks = _element_masks(catalog, q, theta)
    dm = q.dist_matrix
    found: list[tuple[int, ...]] = []
    examined = 0
    chosen: list[int] = []

    def rec(t: int) -> None:
        nonlocal examined
        cand = masks[t].copy()
        for u, r in enumerate(chosen):
            cand[r] = False
            cand &= np.abs(dist[r] - dm[u, t]) <= eps
        examined += int(cand.sum())
        for c in np.flatnonzero(cand):
            chosen.append(int(c))
            if t + 1 == k:
                found.append(tuple(chosen))
            else:
                rec(t + 1)
            chosen.pop()

    rec(0)
    ids = catalog.ids
    sols = sorted(tuple(int(ids[r]) for r in rows) for rows in found)
    return OracleResult(sols, examined)


def brute_general(
    catalog: Catalog,
    q: QueryPattern,
    eps: float | None = None,
    relative_e: float | None = None,
    scale_range: tuple[float, float] = (0.5, 2.0),
    theta: float | None = None,
    cap: int | None = DEFAULT_CAP,
) -> OracleResult:
    """All ordered k-tuples admitting one scale factor in ``scale_range``.

    The admissible scales of a tuple are the intersection of the per-pair
    windows; a tuple is kept iff that intersection (clipped to the range)
    is non-empty.  Scales are computed against the pattern normalised to
    unit largest distance and reported relative to the original pattern.
    """
    _check_cap(catalog, cap)
    theta = q.theta if theta is None else theta
    eps = q.epsilon if eps is None else eps
    n, k = len(catalog), q.k
    if k > n:
        return OracleResult([])
    dm_raw = q.dist_matrix
    dmax = float(dm_raw.max())
    p = dm_raw / dmax
    i_max = np.unravel_index(int(np.argmax(np.triu(dm_raw, 1))), dm_raw.shape)
    p[i_max] = p[i_max[::-1]] = 1.0
    lo0, hi0 = scale_range[0] * dmax, scale_range[1] * dmax

    dist = pairwise_distances(catalog.xy)
    masks = _element_masks(catalog, q, theta)
    found: list[tuple[tuple[int, ...], float, float]] = []
    examined = 0
    chosen: list[int] = []

    def windows(d: np.ndarray, pij: float) -> tuple[np.ndarray, np.ndarray]:
        if relative_e is not None:
            e = relative_e
            return d / ((1.0 + e) * pij), d / ((1.0 - e) * pij)
        return (d - eps) / pij, (d + eps) / pij

    def rec(t: int, lo: float, hi: float) -> None:
        nonlocal examined
        cand = masks[t].copy()
        lo_v = np.full(n, lo)
        hi_v = np.full(n, hi)
        for u, r in enumerate(chosen):
            cand[r] = False
            wl, wh = windows(dist[r], float(p[u, t]))
            lo_v = np.maximum(lo_v, wl)
            hi_v = np.minimum(hi_v, wh)
        cand &= lo_v <= hi_v
        examined += int(cand.sum())
        for c in np.flatnonzero(cand):
            chosen.append(int(c))
            if t + 1 == k:
                found.append((tuple(chosen), float(lo_v[c]), float(hi_v[c])))
            else:
                rec(t + 1, float(lo_v[c]), float(hi_v[c]))
            chosen.pop()

    rec(0, lo0, hi0)
    ids = catalog.ids
    out = {}
    for rows, lo, hi in found:
        out[tuple(int(ids[r]) for r in rows)] = (lo / dmax, hi / dmax)
    return OracleResult(sorted(out), examined, out)


def brute_pairs(rows1, rows2, xy: np.ndarray, target: float, eps: float) -> list[tuple[int, int]]:
    """Every (r1, r2) with r1 != r2 whose distance matches ``target +/- eps``."""
    out = []
    for r1 in rows1:
        for r2 in rows2:
            if r1 != r2 and distance_match(euclidean_distance(xy[r1], xy[r2]), target, eps):
                out.append((int(r1), int(r2)))
    return out


def verify_pure(catalog: Catalog, q: QueryPattern, ids: tuple[int, ...], eps: float | None = None,
                theta: float | None = None) -> bool:
    """Independent full recheck of one pure solution with the scalar predicates."""
    eps = q.epsilon if eps is None else eps
    theta = q.theta if theta is None else theta
    if len(set(ids)) != len(ids) or len(ids) != q.k:
        return False
    row = catalog.row_of()
    pts = [catalog.point(row[i]) for i in ids]
    for i, p in enumerate(pts):
        if not property_match(p, q.elements[i], theta):
            return False
        for j in range(i + 1, len(pts)):
            if not distance_match(euclidean_distance(p.position, pts[j].position), q.dist_matrix[i, j], eps):
                return False
    return True
