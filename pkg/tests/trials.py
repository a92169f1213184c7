"""Random small instances shared by the equivalence tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from constellation.catalog import Catalog, generate_dense
from constellation.geometry import QueryPattern, build_pattern

PATTERN_SIZE = 0.15
EPS_DECADES = (-4.5, -1.5)
THETA = 0.3


@dataclass
class Trial:
    seed: int
    catalog: Catalog
    pattern: QueryPattern
    eps: float
    with_attrs: bool


def random_pattern(rng: np.random.Generator, k: int, eps: float, with_attrs: bool) -> QueryPattern:
    while True:
        pos = rng.uniform(0.0, PATTERN_SIZE, size=(k, 2))
        d = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1))
        if d[~np.eye(k, dtype=bool)].min() > 0.04:
            break
    attrs = rng.uniform(0.2, 0.8, size=(k, 2)).tolist() if with_attrs else None
    return build_pattern(pos.tolist(), attrs, eps, THETA if with_attrs else 0.0)


def make_trial(seed: int) -> Trial:
    """20-200 points in the unit square, k in {3,4,5}, eps log-uniform over three decades.

    Odd seeds carry two attributes.  Zero to three copies of the pattern are
    planted at near-unit scale, some of them rotated.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, 6))
    n = int(rng.integers(20, 201))
    eps = float(10.0 ** rng.uniform(*EPS_DECADES))
    with_attrs = bool(seed % 2)
    q = random_pattern(rng, k, eps, with_attrs)
    planted = int(rng.integers(0, 4))
    cat = generate_dense(
        n, q, scale_interval=(1.0, 1.0 + eps / 4.0), planted=planted, seed=seed,
        attr_ranges=[(0.0, 1.0), (0.0, 1.0)] if with_attrs else None,
        rotate=bool(rng.integers(0, 2)),
    )
    return Trial(seed, cat, q, eps, with_attrs)


def trials(count: int, start: int = 0) -> list[Trial]:
    return [make_trial(s) for s in range(start, start + count)]


def ids(solutions) -> list[tuple[int, ...]]:
    return [s.ids for s in solutions]
