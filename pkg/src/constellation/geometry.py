"""Query patterns, distances and the two matching predicates.

Every distance in the package goes through the same arithmetic,
``sqrt(dx*dx + dy*dy)``, whether computed on Python floats or on numpy
arrays.  Both evaluate to the same IEEE double, so the inclusive ``<= eps``
boundary is decided identically by the engine, the oracle and the
verification code.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class Rect:
    """Closed axis-aligned rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diagonal(self) -> float:
        w, h = self.width, self.height
        return math.sqrt(w * w + h * h)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def min_distance(self, x: float, y: float) -> float:
        """Distance from (x, y) to the nearest point of the rectangle."""
        dx = max(self.xmin - x, 0.0, x - self.xmax)
        dy = max(self.ymin - y, 0.0, y - self.ymax)
        return math.sqrt(dx * dx + dy * dy)

    def max_distance(self, x: float, y: float) -> float:
        dx = max(abs(x - self.xmin), abs(x - self.xmax))
        dy = max(abs(y - self.ymin), abs(y - self.ymax))
        return math.sqrt(dx * dx + dy * dy)

    def quadrants(self) -> tuple["Rect", "Rect", "Rect", "Rect"]:
        """Children in Z-order: NW, NE, SW, SE."""
        cx, cy = self.center
        return (
            Rect(self.xmin, cy, cx, self.ymax),
            Rect(cx, cy, self.xmax, self.ymax),
            Rect(self.xmin, self.ymin, cx, cy),
            Rect(cx, self.ymin, self.xmax, cy),
        )

    @classmethod
    def bounding(cls, xs: np.ndarray, ys: np.ndarray) -> "Rect":
        return cls(float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max()))


def euclidean_distance(a: Sequence[float], b: Sequence[float]) -> float:
    dx = float(a[0]) - float(b[0])
    dy = float(a[1]) - float(b[1])
    return math.sqrt(dx * dx + dy * dy)


def pairwise_distances(xy: np.ndarray, other: np.ndarray | None = None) -> np.ndarray:
    """Distance matrix between the rows of ``xy`` and ``other`` (default: itself)."""
    other = xy if other is None else other
    dx = xy[:, None, 0] - other[None, :, 0]
    dy = xy[:, None, 1] - other[None, :, 1]
    return np.sqrt(dx * dx + dy * dy)


def distances_from(x: float, y: float, xy: np.ndarray) -> np.ndarray:
    dx = x - xy[:, 0]
    dy = y - xy[:, 1]
    return np.sqrt(dx * dx + dy * dy)


def distance_match(observed: float, target: float, eps: float) -> bool:
    """Inclusive additive-tolerance test ``|observed - target| <= eps``."""
    return abs(observed - target) <= eps


def property_match(e, q: "PatternElement", theta: float) -> bool:
    """Chebyshev similarity of attribute vectors, vacuous for attribute-free queries.

    ``e`` is anything with an ``attrs`` sequence (a catalog ``Point`` or
    another ``PatternElement``).
    """
    if len(q.attrs) == 0:
        return True
    if len(e.attrs) != len(q.attrs):
        raise ContractError(
            f"attribute length mismatch: element has {len(e.attrs)}, query has {len(q.attrs)}"
        )
    return max(abs(float(a) - float(b)) for a, b in zip(e.attrs, q.attrs)) <= theta


def property_mask(attrs: np.ndarray, q: "PatternElement", theta: float) -> np.ndarray:
    """Vectorised ``property_match`` over an (n, m) attribute array."""
    n = attrs.shape[0]
    if len(q.attrs) == 0:
        return np.ones(n, dtype=bool)
    if attrs.shape[1] != len(q.attrs):
        raise ContractError(
            f"attribute length mismatch: catalog has {attrs.shape[1]}, query has {len(q.attrs)}"
        )
    if n == 0:
        return np.zeros(0, dtype=bool)
    return np.max(np.abs(attrs - np.asarray(q.attrs, dtype=float)), axis=1) <= theta


@dataclass(frozen=True)
class PatternElement:
    position: tuple[float, float]
    attrs: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class QueryPattern:
    """A k-element constellation query.

    ``dist_matrix`` is the k x k table of element distances that every
    matching predicate compares against.  ``epsilon`` is the additive
    distance tolerance and ``theta`` the attribute threshold.
    """

    elements: tuple[PatternElement, ...]
    anchor_index: int
    dist_matrix: np.ndarray
    epsilon: float
    theta: float
    min_pair_distance: float
    max_anchor_distance: float
    attr_names: tuple[str, ...] = field(default=())

    @property
    def k(self) -> int:
        return len(self.elements)

    @property
    def positions(self) -> np.ndarray:
        return np.array([e.position for e in self.elements], dtype=float)

    @property
    def has_attrs(self) -> bool:
        return any(len(e.attrs) for e in self.elements)

    def with_tolerances(self, epsilon: float | None = None, theta: float | None = None) -> "QueryPattern":
        return build_pattern(
            [e.position for e in self.elements],
            [e.attrs for e in self.elements],
            self.epsilon if epsilon is None else epsilon,
            self.theta if theta is None else theta,
            anchor=self.anchor_index,
            attr_names=self.attr_names,
        )

    def to_json(self) -> dict:
        return {
            "elements": [
                {"x": e.position[0], "y": e.position[1], "attrs": list(e.attrs)} for e in self.elements
            ],
            "epsilon": self.epsilon,
            "theta": self.theta,
            "anchor": self.anchor_index,
        }


def build_pattern(
    positions: Sequence[Sequence[float]],
    attrs: Sequence[Sequence[float]] | None = None,
    epsilon: float = 0.0,
    theta: float = 0.0,
    anchor: int | None = None,
    attr_names: Sequence[str] = (),
) -> QueryPattern:
    """Build a ``QueryPattern`` and fill in its distance table.

    Unless ``anchor`` is given, the anchor is the most central element: the
    one whose largest distance to any other element is smallest (lowest
    index on ties).  That choice minimises the neighbour search radius.
    """
    k = len(positions)
    if k < 2:
        raise ContractError(f"a pattern needs at least 2 elements, got {k}")
    if epsilon < 0:
        raise ContractError("epsilon must be non-negative")
    if attrs is None:
        attrs = [()] * k
    if len(attrs) != k:
        raise ContractError("one attribute vector per element is required")
    attr_lens = {len(a) for a in attrs}
    if len(attr_lens) > 1:
        raise ContractError("attribute vectors must all have the same length")

    xy = np.array([[float(p[0]), float(p[1])] for p in positions], dtype=float)
    if not np.all(np.isfinite(xy)):
        raise ContractError("pattern positions must be finite")
    dm = pairwise_distances(xy)
    off = dm[~np.eye(k, dtype=bool)]
    if np.any(off == 0.0):
        raise ContractError("pattern contains coincident positions")

    row_max = dm.max(axis=1)
    if anchor is None:
        anchor = int(np.argmin(row_max))
    elif not 0 <= anchor < k:
        raise ContractError(f"anchor index {anchor} out of range for k={k}")

    min_pair = float(off.min())
    if epsilon >= min_pair:
        warnings.warn(
            f"epsilon={epsilon} is not below the smallest pattern distance {min_pair}",
            stacklevel=2,
        )
    elements = tuple(
        PatternElement((float(x), float(y)), tuple(float(v) for v in a))
        for (x, y), a in zip(xy, attrs)
    )
    return QueryPattern(
        elements=elements,
        anchor_index=int(anchor),
        dist_matrix=dm,
        epsilon=float(epsilon),
        theta=float(theta),
        min_pair_distance=min_pair,
        max_anchor_distance=float(row_max[anchor]),
        attr_names=tuple(attr_names),
    )


def load_pattern(path: str | Path) -> QueryPattern:
    """Read a pattern JSON document ``{elements: [{x, y, attrs}], epsilon, theta, anchor}``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return pattern_from_json(doc)


def pattern_from_json(doc: dict) -> QueryPattern:
    try:
        elements = doc["elements"]
    except KeyError:
        raise ContractError("pattern document has no 'elements' list") from None
    positions = [(float(e["x"]), float(e["y"])) for e in elements]
    attrs = [tuple(float(v) for v in e.get("attrs", ())) for e in elements]
    return build_pattern(
        positions,
        attrs,
        epsilon=float(doc.get("epsilon", 0.0)),
        theta=float(doc.get("theta", 0.0)),
        anchor=doc.get("anchor"),
        attr_names=doc.get("attr_names", ()),
    )


def save_pattern(q: QueryPattern, path: str | Path) -> None:
    Path(path).write_text(json.dumps(q.to_json(), indent=2) + "\n", encoding="utf-8")


# Einstein cross (Q2237+030) images A, B, C, D in degrees, fitted by least
# squares to the six published pairwise distances (max relative residual 2.3e-4).
EINSTEIN_CROSS = {
    "A": (0.0, 0.0),
    "B": (0.76128525e-5, 2.14194769e-5),
    "C": (0.92005816e-5, 0.0),
    "D": (-1.85987646e-5, 2.02241894e-5),
}

EINSTEIN_CROSS_DISTANCES = {
    ("A", "D"): 2.748e-5,
    ("D", "B"): 2.624e-5,
    ("B", "C"): 2.148e-5,
    ("A", "C"): 9.201e-6,
    ("C", "D"): 3.437e-5,
    ("A", "B"): 2.273e-5,
}


def einstein_cross(epsilon: float = 1e-6, theta: float = 0.0, origin=(0.0, 0.0)) -> QueryPattern:
    ox, oy = origin
    pos = [(ox + x, oy + y) for x, y in EINSTEIN_CROSS.values()]
    return build_pattern(pos, None, epsilon, theta)
