import math

import numpy as np
import pytest

from constellation.catalog import Catalog, generate_uniform
from constellation.errors import OracleCapError
from constellation.geometry import build_pattern
from constellation.oracle import brute_general, brute_pairs, brute_pure, verify_pure


def catalog_of(xy) -> Catalog:
    xy = np.asarray(xy, dtype=float)
    return Catalog(np.arange(1, len(xy) + 1), xy, np.zeros((len(xy), 0)))


def test_pattern_itself():
    pos = [(0, 0), (3, 0), (0, 1)]
    res = brute_pure(catalog_of(pos), build_pattern(pos), 0.0)
    assert res.solutions == [(1, 2, 3)]


def test_equilateral_has_six_assignments():
    pos = [(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)]
    res = brute_pure(catalog_of(pos), build_pattern(pos), 1e-12)
    assert len(res.solutions) == 6


def test_k_larger_than_catalog():
    q = build_pattern([(0, 0), (1, 0), (0, 1), (1, 1)])
    assert brute_pure(catalog_of([(0, 0), (1, 0)]), q).solutions == []
    assert brute_general(catalog_of([(0, 0), (1, 0)]), q).solutions == []


def test_cap():
    q = build_pattern([(0, 0), (1, 0), (0, 1)])
    big = generate_uniform(201, seed=0)
    with pytest.raises(OracleCapError):
        brute_pure(big, q)
    with pytest.raises(OracleCapError):
        brute_general(big, q)
    assert brute_pure(big, q, 1e-9, cap=None).solutions == []


def test_general_examples():
    eq = build_pattern([(0, 0), (1, 0), (0.5, math.sqrt(3) / 2)])
    ok = catalog_of([(0, 0), (8.5, 0), (4.25, math.sqrt(144 - 4.25**2))])
    assert len(brute_general(ok, eq, 2.0, scale_range=(5, 15)).solutions) == 6
    x = (36 + 100 - 196) / 12
    bad = catalog_of([(0, 0), (6, 0), (x, math.sqrt(100 - x * x))])
    assert brute_general(bad, eq, 2.0, scale_range=(5, 15)).solutions == []
    assert brute_general(ok, eq, 2.0, scale_range=(11, 15)).solutions == []


def test_brute_pairs():
    xy = np.array([(0, 0), (1, 0), (5, 5)], dtype=float)
    assert brute_pairs([], [1, 2], xy, 1.0, 0.0) == []
    assert brute_pairs([0], [1, 2], xy, 1.0, 0.0) == [(0, 1)]
    assert brute_pairs([0, 1], [0, 1], xy, 0.0, 0.5) == []


def test_verify_pure():
    pos = [(0, 0), (3, 0), (0, 4)]
    cat = catalog_of(pos)
    q = build_pattern(pos)
    assert verify_pure(cat, q, (1, 2, 3), 0.0)
    assert not verify_pure(cat, q, (2, 1, 3), 0.0)
    assert not verify_pure(cat, q, (1, 1, 3), 10.0)
