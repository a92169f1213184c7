import csv
import json
import math

import numpy as np
import pytest

from constellation.bench import (
    BenchReport,
    cmd_bench,
    cmd_scaleup,
    confidence_interval,
    default_planted,
)
from constellation.catalog import generate_dense
from constellation.errors import ConstellationError, ContractError
from constellation.geometry import einstein_cross


@pytest.fixture(scope="module")
def dense():
    q = einstein_cross()
    return generate_dense(2000, q, planted=20, seed=1, region=(0, 0, 1e-3, 1e-3)), q


def test_confidence_interval():
    xs = [10.0, 12.0, 11.0, 13.0, 9.0]
    expect = 0.05 * float(np.std(xs, ddof=1)) / math.sqrt(5)
    assert confidence_interval(xs, 0.95) == pytest.approx(expect)
    assert confidence_interval([4.0]) == 0.0


def test_reps_must_be_at_least_three(dense):
    cat, q = dense
    with pytest.raises(ContractError):
        cmd_bench(cat, q, [1e-6], ["bucket_nl"], reps=2)


def test_one_cell_report(dense, tmp_path):
    cat, q = dense
    rep = cmd_bench(cat, q, [1e-6], ["bucket-nl"], reps=3)
    assert len(rep.cells) == 1
    c = rep.cell(1e-6, "bucket_nl")
    assert len(c.times_ms) == 3 and c.solutions >= 20
    assert c.ci_ms == pytest.approx(confidence_interval(c.times_ms, 0.95))
    rep.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["cells"][0]["algorithm"] == "bucket_nl" and "environment" in doc
    rep.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert rows[0]["reps"] == "3"
    assert "yerrorlines" in rep.gnuplot_script("r.csv")


def test_sweep_counts_grow_with_epsilon(dense):
    cat, q = dense
    eps = [1e-7, 3e-7, 1e-6, 3e-6]
    rep = cmd_bench(cat, q, eps, ["bucket_nl", "mm_nl", "mmm_nl"], reps=3)
    assert rep.consistent()
    counts = [rep.cell(e, "bucket_nl").solutions for e in eps]
    assert counts == sorted(counts)
    assert set(rep.summary()["fastest"]) == {repr(e) for e in eps}


def test_failing_cell_is_named(dense):
    cat, q = dense
    with pytest.raises(ConstellationError, match="epsilon=-1.0"):
        cmd_bench(cat, q, [-1.0], ["bucket_nl"], reps=3)


def test_scaleup_first_size_without_copies():
    q = einstein_cross()
    rep = cmd_scaleup([1000, 5000], q, 1e-6, planted=[0, 4], seed=3)
    assert rep.rows[0].solutions == 0
    assert rep.rows[1].solutions == 4 * rep.per_copy > 0
    assert rep.ok
    again = cmd_scaleup([1000, 5000], q, 1e-6, planted=[0, 4], seed=3)
    assert [r.solutions for r in again.rows] == [r.solutions for r in rep.rows]


def test_default_planted():
    assert [default_planted(n) for n in (1000, 5000, 10000, 20000)] == [0, 4, 9, 19]
    with pytest.raises(ContractError):
        cmd_scaleup([1000], einstein_cross(), 1e-6, planted=[0, 1])
