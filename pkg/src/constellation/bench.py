"""Benchmark harness: epsilon x algorithm sweeps and the scale-up study.

Timings cover composition only.  Filtering does not depend on the
composition algorithm, so it runs once per epsilon and is reported in a
separate column; every algorithm in a cell then joins the very same
BucketSets.  Repetitions of different algorithms are interleaved so slow
drift in machine load hits all of them alike.
"""

from __future__ import annotations

import csv
import gc
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import Catalog, generate_dense
from .engine import QueryConfig, compose_all, execute_query, prepare_bucket_sets
from .errors import ConstellationError, ContractError
from .geometry import QueryPattern
from .oracle import brute_pure

DEFAULT_CONFIDENCE = 0.95


def confidence_interval(samples: Sequence[float], confidence: float = DEFAULT_CONFIDENCE) -> float:
    """Half-width ``alpha * sigma / sqrt(n)`` with ``alpha = 1 - confidence``.

    ``sigma`` is the sample standard deviation.  Note that this shrinks as
    the confidence level grows; it is kept as the conventional definition
    used by the original experiments, not a Student-t interval.
    """
    n = len(samples)
    if n < 2:
        return 0.0
    alpha = 1.0 - confidence
    return alpha * float(np.std(samples, ddof=1)) / math.sqrt(n)


def environment() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpus": os.cpu_count(),
    }


@dataclass
class BenchCell:
    epsilon: float
    algorithm: str
    times_ms: list[float]
    solutions: int
    anchors_productive: int
    comparisons: int
    mm_deleted: int
    bucket_sets: int
    mean_occupancy: float
    filter_ms: float
    confidence: float = DEFAULT_CONFIDENCE

    @property
    def median_ms(self) -> float:
        return float(np.median(self.times_ms))

    @property
    def mean_ms(self) -> float:
        return float(np.mean(self.times_ms))

    @property
    def std_ms(self) -> float:
        return float(np.std(self.times_ms, ddof=1)) if len(self.times_ms) > 1 else 0.0

    @property
    def ci_ms(self) -> float:
        return confidence_interval(self.times_ms, self.confidence)

    def row(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "algorithm": self.algorithm,
            "reps": len(self.times_ms),
            "median_ms": round(self.median_ms, 4),
            "mean_ms": round(self.mean_ms, 4),
            "std_ms": round(self.std_ms, 4),
            "ci_ms": round(self.ci_ms, 4),
            "solutions": self.solutions,
            "anchors_productive": self.anchors_productive,
            "comparisons": self.comparisons,
            "mm_deleted": self.mm_deleted,
            "bucket_sets": self.bucket_sets,
            "mean_occupancy": round(self.mean_occupancy, 4),
            "filter_ms": round(self.filter_ms, 3),
        }


CSV_FIELDS = (
    "epsilon", "algorithm", "reps", "median_ms", "mean_ms", "std_ms", "ci_ms", "solutions",
    "anchors_productive", "comparisons", "mm_deleted", "bucket_sets", "mean_occupancy", "filter_ms",
)


@dataclass
class BenchReport:
    cells: list[BenchCell]
    reps: int
    confidence: float
    catalog_size: int
    k: int
    environment: dict = field(default_factory=environment)

    def cell(self, epsilon: float, algorithm: str) -> BenchCell:
        for c in self.cells:
            if c.epsilon == epsilon and c.algorithm == algorithm:
                return c
        raise KeyError((epsilon, algorithm))

    @property
    def epsilons(self) -> list[float]:
        return sorted({c.epsilon for c in self.cells})

    @property
    def algorithms(self) -> list[str]:
        seen: list[str] = []
        for c in self.cells:
            if c.algorithm not in seen:
                seen.append(c.algorithm)
        return seen

    def consistent(self) -> bool:
        """All algorithms report the same solution count at every epsilon."""
        return all(len({c.solutions for c in self.cells if c.epsilon == e}) == 1 for e in self.epsilons)

    def crossover(self, challenger: str = "mm_nl", baseline: str = "bucket_nl") -> float | None:
        """Smallest epsilon at which ``challenger`` has the lower median time."""
        algos = self.algorithms
        if challenger not in algos or baseline not in algos:
            return None
        for e in self.epsilons:
            if self.cell(e, challenger).median_ms < self.cell(e, baseline).median_ms:
                return e
        return None

    def summary(self) -> dict:
        out: dict = {"consistent": self.consistent(), "crossover_epsilon": self.crossover()}
        fastest = {}
        for e in self.epsilons:
            cells = [c for c in self.cells if c.epsilon == e]
            fastest[repr(e)] = min(cells, key=lambda c: c.median_ms).algorithm
        out["fastest"] = fastest
        return out

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "confidence": self.confidence,
            "catalog_size": self.catalog_size,
            "k": self.k,
            "environment": self.environment,
            "cells": [dict(c.row(), times_ms=[round(t, 4) for t in c.times_ms]) for c in self.cells],
            "summary": self.summary(),
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for c in self.cells:
                w.writerow(c.row())

    def gnuplot_script(self, csv_path: str) -> str:
        lines = [
            "set datafile separator ','",
            "set logscale x",
            "set xlabel 'epsilon'",
            "set ylabel 'composition time (ms)'",
            "set key left top",
        ]
        plots = []
        for a in self.algorithms:
            plots.append(
                f"'{csv_path}' using 1:(strcol(2) eq '{a}' ? $4 : 1/0):7 with yerrorlines title '{a}'"
            )
        lines.append("plot " + ", \\\n     ".join(plots))
        return "\n".join(lines) + "\n"


def cmd_bench(
    catalog: Catalog,
    pattern: QueryPattern,
    epsilons: Sequence[float],
    algos: Sequence[str],
    reps: int = 5,
    confidence: float = DEFAULT_CONFIDENCE,
    theta: float | None = None,
) -> BenchReport:
    """Time every (epsilon, algorithm) cell ``reps`` times on shared BucketSets."""
    if reps < 3:
        raise ContractError("reps must be at least 3")
    if not epsilons or not algos:
        raise ContractError("need at least one epsilon and one algorithm")
    algos = [a.replace("-", "_") for a in algos]
    cells: list[BenchCell] = []
    for eps in epsilons:
        cfg = QueryConfig(epsilon=float(eps), theta=theta)
        try:
            sets, fst = prepare_bucket_sets(catalog, pattern, cfg)
            times: dict[str, list[float]] = {a: [] for a in algos}
            last = {}
            for _ in range(reps):
                for a in algos:
                    last.pop(a, None)
                    gc.collect()
                    # As timeit does: keep collector pauses out of the measurement.
                    gc.disable()
                    try:
                        sols, st = compose_all(sets, pattern, cfg, a)
                    finally:
                        gc.enable()
                    times[a].append(st.compose_ms)
                    last[a] = (sols, st)
        except ConstellationError as exc:
            raise ConstellationError(f"bench cell epsilon={eps!r} failed: {exc}") from exc
        occ = fst.mean_bucket_occupancy(pattern.k)
        for a in algos:
            sols, st = last[a]
            cells.append(BenchCell(
                epsilon=float(eps),
                algorithm=a,
                times_ms=times[a],
                solutions=len(sols),
                anchors_productive=st.anchors_productive,
                comparisons=fst.comparisons,
                mm_deleted=st.mm_deleted,
                bucket_sets=fst.bucket_sets,
                mean_occupancy=occ,
                filter_ms=fst.filter_ms,
                confidence=confidence,
            ))
    return BenchReport(cells, reps, confidence, len(catalog), pattern.k)


# -- scale-up ---------------------------------------------------------------


def default_planted(size: int) -> int:
    """One copy per thousand points beyond the first thousand."""
    return max(size // 1000 - 1, 0)


@dataclass
class ScaleupRow:
    size: int
    planted: int
    solutions: int
    expected: int
    elapsed_ms: float

    @property
    def ok(self) -> bool:
        return self.solutions == self.expected


@dataclass
class ScaleupReport:
    rows: list[ScaleupRow]
    epsilon: float
    seed: int
    per_copy: int
    oracle_size: int
    oracle_solutions: int
    engine_solutions_at_oracle_size: int

    @property
    def ok(self) -> bool:
        counts = [r.solutions for r in sorted(self.rows, key=lambda r: r.planted)]
        nondecreasing = all(a <= b for a, b in zip(counts, counts[1:]))
        return (
            nondecreasing
            and all(r.ok for r in self.rows)
            and self.oracle_solutions == self.engine_solutions_at_oracle_size
        )

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "seed": self.seed,
            "per_copy": self.per_copy,
            "oracle_size": self.oracle_size,
            "oracle_solutions": self.oracle_solutions,
            "engine_solutions_at_oracle_size": self.engine_solutions_at_oracle_size,
            "ok": self.ok,
            "rows": [dict(asdict(r), ok=r.ok) for r in self.rows],
        }


def cmd_scaleup(
    sizes: Sequence[int],
    pattern: QueryPattern,
    eps: float,
    planted: Sequence[int] | None = None,
    seed: int = 0,
    region=(0.0, 0.0, 1e-2, 1e-2),
    workers: int = 1,
    calibration_copies: int = 3,
) -> ScaleupReport:
    """Pure queries over dense catalogs of growing size.

    Expected counts are ``planted * per_copy``, where ``per_copy`` is the
    number of solutions a single planted copy produces.  It is measured by
    the brute-force oracle on a catalog of the smallest size holding
    ``calibration_copies`` copies, and the engine must agree with the
    oracle on that catalog too.
    """
    sizes = list(sizes)
    if not sizes:
        raise ContractError("need at least one size")
    planted = [default_planted(s) for s in sizes] if planted is None else list(planted)
    if len(planted) != len(sizes):
        raise ContractError("one planted count per size")
    cfg = QueryConfig(epsilon=eps, algo="bucket_nl", workers=workers)

    n0 = min(sizes)
    calib = generate_dense(n0, pattern, planted=calibration_copies, seed=seed, region=region)
    oracle = brute_pure(calib, pattern, eps, cap=None).solutions
    engine_sols, _ = execute_query(calib, pattern, cfg)
    if len(oracle) % calibration_copies:
        raise ConstellationError(
            f"calibration catalog yields {len(oracle)} solutions for {calibration_copies} copies; "
            "noise points match the pattern, use a sparser region or smaller epsilon"
        )
    per_copy = len(oracle) // calibration_copies

    rows = []
    for size, p in zip(sizes, planted):
        cat = generate_dense(size, pattern, planted=p, seed=seed + size, region=region)
        t0 = time.perf_counter()
        sols, _ = execute_query(cat, pattern, cfg)
        elapsed = (time.perf_counter() - t0) * 1000.0
        rows.append(ScaleupRow(size, p, len(sols), p * per_copy, round(elapsed, 3)))
    return ScaleupReport(rows, eps, seed, per_copy, n0, len(oracle), len(engine_sols))
