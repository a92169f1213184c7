"""Scale-invariant ("general") constellation queries.

The pattern is normalised so its two most distant elements ``a`` and
``b`` are exactly 1 apart.  Every ordered star pair (s1, s2) whose
distance falls in the admissible band posits ``scalebasic = dist(s1, s2)``;
the remaining buckets are filled using twice the tolerance, which loses no
true match, and each joined candidate is then validated by intersecting
its per-pair scale windows.

Scale factors exposed to users are relative to the *original* pattern
(``f = 1`` means same size).  Internally everything runs on the normalised
pattern, where the scale equals the distance of the star pair playing
``(a, b)``; the two differ by the factor ``dmax``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .catalog import Catalog
from .composition import ScaleInterval, Solution
from .errors import ContractError
from .filtering import BucketSet
from .geometry import (
    QueryPattern,
    distance_match,
    distances_from,
    euclidean_distance,
    property_mask,
    property_match,
)
from .quadtree import Quadtree


@dataclass(frozen=True)
class ConstantTolerance:
    """Absolute tolerance ``eps`` at every scale."""

    eps: float

    def search_epsilon(self, scalebasic: float) -> float:
        return 2.0 * self.eps

    def window(self, d: float, p: float) -> tuple[float, float]:
        return ((d - self.eps) / p, (d + self.eps) / p)

    def tolerance(self, f: float, p: float) -> float:
        return self.eps

    def band(self, low: float, high: float) -> tuple[float, float]:
        return (low - self.eps, high + self.eps)


@dataclass(frozen=True)
class ProportionalTolerance:
    """Tolerance ``e`` times the scaled target distance, ``e < 1``."""

    e: float

    def __post_init__(self):
        if not 0.0 <= self.e < 1.0:
            raise ContractError(f"relative tolerance must lie in [0, 1), got {self.e}")

    def search_epsilon(self, scalebasic: float) -> float:
        return 2.0 * (self.e * scalebasic / (1.0 - self.e))

    def window(self, d: float, p: float) -> tuple[float, float]:
        return (d / ((1.0 + self.e) * p), d / ((1.0 - self.e) * p))

    def tolerance(self, f: float, p: float) -> float:
        return self.e * f * p

    def band(self, low: float, high: float) -> tuple[float, float]:
        return (low * (1.0 - self.e), high * (1.0 + self.e))


ToleranceMode = ConstantTolerance | ProportionalTolerance


def effective_epsilon(scalebasic: float, mode: ToleranceMode) -> float:
    """Search tolerance used while filling buckets and joining."""
    return mode.search_epsilon(scalebasic)


def scale_window(d: float, pij: float, mode: ToleranceMode) -> tuple[float, float]:
    """Smallest and largest scale at which distance ``d`` still matches ``pij``."""
    if pij <= 0:
        raise ContractError("pattern distance must be positive")
    return mode.window(d, pij)


def normalize_pattern(q: QueryPattern) -> tuple[QueryPattern, tuple[int, int]]:
    """Divide all pattern distances by the largest one.

    Returns the normalised pattern and its farthest pair (lowest index pair
    on ties); that pair's entry is exactly 1.
    """
    dm = q.dist_matrix
    k = q.k
    best, pair = -1.0, (0, 1)
    for i in range(k):
        for j in range(i + 1, k):
            if dm[i, j] > best:
                best, pair = float(dm[i, j]), (i, j)
    if best == 1.0:
        return q, pair
    ndm = dm / best
    a, b = pair
    ndm[a, b] = ndm[b, a] = 1.0
    ndm.setflags(write=False)
    off = ndm[~np.eye(k, dtype=bool)]
    pos = q.positions / best
    norm = QueryPattern(
        elements=tuple(
            type(e)((float(x), float(y)), e.attrs) for e, (x, y) in zip(q.elements, pos)
        ),
        anchor_index=q.anchor_index,
        dist_matrix=ndm,
        # Tolerances stay in catalog units: normalised scales are star distances.
        epsilon=q.epsilon,
        theta=q.theta,
        min_pair_distance=float(off.min()),
        max_anchor_distance=float(ndm[q.anchor_index].max()),
        attr_names=q.attr_names,
    )
    return norm, pair


def post_process(
    rows: tuple[int, ...] | list[int],
    xy: np.ndarray,
    q_norm: QueryPattern,
    mode: ToleranceMode,
    scale_range: tuple[float, float] | None = None,
) -> ScaleInterval:
    """Intersect the per-pair scale windows of a candidate assignment.

    ``rows[i]`` plays pattern element ``i``.  All quantities are in
    normalised units.  When ``scale_range`` is given the window is clipped
    to it as well.
    """
    k = len(rows)
    dm = q_norm.dist_matrix
    max_min, min_max = -np.inf, np.inf
    for i in range(k):
        xi, yi = xy[rows[i]]
        for j in range(i + 1, k):
            xj, yj = xy[rows[j]]
            dx = float(xi) - float(xj)
            dy = float(yi) - float(yj)
            d = math.sqrt(dx * dx + dy * dy)
            lo, hi = scale_window(d, float(dm[i, j]), mode)
            if lo > max_min:
                max_min = lo
            if hi < min_max:
                min_max = hi
    if scale_range is not None:
        max_min = max(max_min, scale_range[0])
        min_max = min(min_max, scale_range[1])
    return ScaleInterval(float(max_min), float(min_max))


def post_process_distances(dists: dict[tuple[int, int], float], q_norm: QueryPattern, mode: ToleranceMode) -> ScaleInterval:
    """``post_process`` on explicit pairwise star distances ``{(i, j): d}``."""
    max_min, min_max = -np.inf, np.inf
    for (i, j), d in dists.items():
        lo, hi = scale_window(d, float(q_norm.dist_matrix[i, j]), mode)
        max_min = max(max_min, lo)
        min_max = min(min_max, hi)
    return ScaleInterval(float(max_min), float(min_max))


def verify_at_scale(rows, xy: np.ndarray, q_norm: QueryPattern, mode: ToleranceMode, f: float) -> bool:
    """Every pair matches ``f * p_ij`` within the mode's tolerance at ``f``."""
    k = len(rows)
    for i in range(k):
        for j in range(i + 1, k):
            d = euclidean_distance(xy[rows[i]], xy[rows[j]])
            p = float(q_norm.dist_matrix[i, j])
            tol = mode.tolerance(f, p)
            # Rounding of the midpoint itself: a few ulps of the target.
            if not distance_match(d, f * p, tol + 1e-12 * (f * p + tol)):
                return False
    return True


@dataclass
class GeneralQuery:
    """A normalised general query with its tolerance mode and scale range.

    ``scale_range`` is given relative to the original pattern; the
    normalised range is ``scale_range * dmax``.
    """

    q: QueryPattern
    q_norm: QueryPattern
    pair: tuple[int, int]
    dmax: float
    mode: ToleranceMode
    scale_range: tuple[float, float]

    @classmethod
    def create(
        cls,
        q: QueryPattern,
        epsilon: float | None = None,
        relative_e: float | None = None,
        scale_range: tuple[float, float] = (0.5, 2.0),
    ) -> "GeneralQuery":
        low, high = scale_range
        if not 0 < low <= high:
            raise ContractError("scale range must satisfy 0 < low <= high")
        q_norm, pair = normalize_pattern(q)
        dmax = float(q.dist_matrix[pair])
        if relative_e is not None:
            mode: ToleranceMode = ProportionalTolerance(float(relative_e))
        else:
            eps = q.epsilon if epsilon is None else float(epsilon)
            if eps < 0:
                raise ContractError("epsilon must be non-negative")
            mode = ConstantTolerance(eps)
        return cls(q, q_norm, pair, dmax, mode, (float(low), float(high)))

    @property
    def norm_range(self) -> tuple[float, float]:
        return (self.scale_range[0] * self.dmax, self.scale_range[1] * self.dmax)

    def to_user_scale(self, s: ScaleInterval) -> ScaleInterval:
        return ScaleInterval(s.max_min / self.dmax, s.min_max / self.dmax)


def general_candidates(
    catalog: Catalog,
    gq: GeneralQuery,
    t: Quadtree,
    theta: float | None = None,
    s1_rows: np.ndarray | None = None,
    masks: list[np.ndarray] | None = None,
) -> Iterator[tuple[int, int, float, BucketSet]]:
    """Yield ``(s1, s2, scalebasic, BucketSet)`` for every admissible star pair.

    ``s1`` plays element ``a`` and ``s2`` element ``b`` of the farthest
    pair.  Bucket ``i`` holds stars (other than s1, s2) within twice the
    tolerance of ``scalebasic * p_ai`` from s1 and ``scalebasic * p_bi``
    from s2.
    """
    q_norm = gq.q_norm
    a, b = gq.pair
    th = q_norm.theta if theta is None else theta
    if masks is None:
        masks = [property_mask(catalog.attrs, e, th) for e in q_norm.elements]
    dm = q_norm.dist_matrix
    lo_n, hi_n = gq.norm_range
    band_lo, band_hi = gq.mode.band(lo_n, hi_n)
    band_lo = max(band_lo, 0.0)
    reach = band_hi + gq.mode.search_epsilon(band_hi)
    others = [i for i in range(q_norm.k) if i not in (a, b)]
    xy = catalog.xy
    if s1_rows is None:
        s1_rows = np.flatnonzero(masks[a])
    for s1 in s1_rows:
        s1 = int(s1)
        if not masks[a][s1]:
            continue
        x1, y1 = float(xy[s1, 0]), float(xy[s1, 1])
        near = t.points_in_annulus(x1, y1, 0.0, reach)
        near = near[near != s1]
        if len(near) == 0:
            continue
        d1 = distances_from(x1, y1, xy[near])
        sel = (d1 >= band_lo) & (d1 <= band_hi) & masks[b][near]
        for k2 in np.flatnonzero(sel):
            s2 = int(near[k2])
            sb = float(d1[k2])
            e2 = gq.mode.search_epsilon(sb)
            d2 = distances_from(float(xy[s2, 0]), float(xy[s2, 1]), xy[near])
            base = near != s2
            buckets: dict[int, list[int]] = {b: [s2]}
            for i in others:
                m = (
                    base
                    & masks[i][near]
                    & (np.abs(d1 - sb * dm[a, i]) <= e2)
                    & (np.abs(d2 - sb * dm[b, i]) <= e2)
                )
                buckets[i] = near[m].tolist()
            yield s1, s2, sb, BucketSet(s1, a, dict(sorted(buckets.items())), catalog)


def brute_force_buckets(catalog: Catalog, gq: GeneralQuery, s1: int, s2: int, theta: float | None = None) -> dict[int, list[int]]:
    """Reference bucket contents for one star pair by scanning every star."""
    q_norm = gq.q_norm
    a, b = gq.pair
    th = q_norm.theta if theta is None else theta
    xy = catalog.xy
    dx, dy = xy[s1] - xy[s2]
    sb = float(np.sqrt(dx * dx + dy * dy))
    e2 = gq.mode.search_epsilon(sb)
    out: dict[int, list[int]] = {b: [s2]}
    for i in range(q_norm.k):
        if i in (a, b):
            continue
        bucket = []
        for r in range(len(catalog)):
            if r in (s1, s2):
                continue
            if not property_match(catalog.point(r), q_norm.elements[i], th):
                continue
            if distance_match(euclidean_distance(xy[s1], xy[r]), sb * q_norm.dist_matrix[a, i], e2) and \
                    distance_match(euclidean_distance(xy[s2], xy[r]), sb * q_norm.dist_matrix[b, i], e2):
                bucket.append(r)
        out[i] = bucket
    return dict(sorted(out.items()))


def accept(rows: tuple[int, ...], catalog: Catalog, gq: GeneralQuery) -> Solution | None:
    """Validate a joined candidate; returns a Solution with its user-unit scale window."""
    s = post_process(rows, catalog.xy, gq.q_norm, gq.mode, gq.norm_range)
    if not s.satisfiable:
        return None
    ids = tuple(int(catalog.ids[r]) for r in rows)
    return Solution(ids, gq.to_user_scale(s), tuple(rows))


def reverify(solutions, catalog: Catalog, gq: GeneralQuery) -> list[Solution]:
    """Solutions that fail to match at the midpoint of their own scale window."""
    row = catalog.row_of()
    bad = []
    for sol in solutions:
        rows = [row[i] for i in sol.ids]
        f = sol.scale.midpoint * gq.dmax
        if not verify_at_scale(rows, catalog.xy, gq.q_norm, gq.mode, f):
            bad.append(sol)
    return bad
