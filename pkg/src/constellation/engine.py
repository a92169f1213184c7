"""Query execution: tree build, per-anchor filtering, composition and merging.

Anchor work (entry-level nodes for pure queries, first stars of the
farthest pair for general ones) is split into ``workers`` groups and run
on a thread pool.  Each group owns its BucketSets, counters and partial
results; the merge sorts solutions by id sequence, so the output does not
depend on the number of workers or on scheduling.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import composition as comp
from .catalog import Catalog
from .composition import CompositionCounters, Solution
from .errors import ContractError
from .filtering import BucketSet, PairFilter
from .general import GeneralQuery, accept, general_candidates
from .geometry import QueryPattern, distance_match, property_mask, property_match
from .quadtree import Quadtree, build

log = logging.getLogger(__name__)

MODES = ("pure", "general", "existential")
ALGOS = ("bucket_nl", "mm_nl", "mmm_nl", "auto")
DEFAULT_SELECTION_THRESHOLD = 0.003


@dataclass
class QueryConfig:
    mode: str = "pure"
    algo: str = "auto"
    epsilon: float | None = None
    theta: float | None = None
    scale_range: tuple[float, float] = (0.5, 2.0)
    relative_e: float | None = None
    workers: int = 1
    selection_threshold: float = DEFAULT_SELECTION_THRESHOLD
    cycle_order: str = "index"
    descend: bool = True
    max_depth: int = 24

    def __post_init__(self):
        self.algo = self.algo.replace("-", "_")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.algo not in ALGOS:
            raise ContractError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if self.workers < 1:
            raise ContractError("workers must be >= 1")
        if self.relative_e is not None and not 0.0 <= self.relative_e < 1.0:
            raise ContractError("relative_e must lie in [0, 1)")
        if self.scale_range[0] <= 0 or self.scale_range[0] > self.scale_range[1]:
            raise ContractError("scale_range must satisfy 0 < low <= high")


@dataclass
class QueryStats:
    anchors_total: int = 0
    anchors_productive: int = 0
    bucket_sets: int = 0
    bucket_entries: int = 0
    candidate_pairs: int = 0
    candidates: int = 0
    rejected: int = 0
    solutions: int = 0
    comparisons: int = 0
    mm_deleted: int = 0
    build_ms: float = 0.0
    filter_ms: float = 0.0
    compose_ms: float = 0.0
    algorithm: str = ""
    exists: bool | None = None

    COUNTERS = (
        "anchors_total", "anchors_productive", "bucket_sets", "bucket_entries", "candidate_pairs",
        "candidates", "rejected", "solutions", "comparisons", "mm_deleted",
    )

    def __iadd__(self, other: "QueryStats") -> "QueryStats":
        for name in self.COUNTERS:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.filter_ms += other.filter_ms
        self.compose_ms += other.compose_ms
        return self

    def counters(self) -> dict:
        return {name: getattr(self, name) for name in self.COUNTERS}

    def mean_bucket_occupancy(self, k: int) -> float:
        if self.bucket_sets == 0 or k < 2:
            return 0.0
        return self.bucket_entries / (self.bucket_sets * (k - 1))

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("build_ms", "filter_ms", "compose_ms"):
            d[key] = round(d[key], 3)
        return d


def select_algorithm(cfg: QueryConfig, eps: float) -> str:
    """Resolve ``auto``: nested loop up to the threshold, MM filtering above it."""
    if cfg.algo != "auto":
        return cfg.algo
    return "bucket_nl" if eps <= cfg.selection_threshold else "mm_nl"


def verify_solution(catalog: Catalog, q: QueryPattern, rows: Sequence[int], eps: float, theta: float) -> bool:
    """Full pairwise re-check of a pure candidate with the scalar predicates."""
    if len(set(rows)) != len(rows):
        return False
    if q.has_attrs:
        for i, r in enumerate(rows):
            if not property_match(catalog.point(r), q.elements[i], theta):
                return False
    pts = catalog.xy[list(rows)].tolist()
    dm = q.dist_matrix.tolist()
    for i, (xi, yi) in enumerate(pts):
        for j in range(i + 1, len(pts)):
            dx = xi - pts[j][0]
            dy = yi - pts[j][1]
            if not distance_match(math.sqrt(dx * dx + dy * dy), dm[i][j], eps):
                return False
    return True


def compose(
    bs: BucketSet,
    q: QueryPattern,
    cfg: QueryConfig,
    eps: float | None = None,
    algo: str | None = None,
    counters: CompositionCounters | None = None,
    check: Callable[[tuple[int, ...]], Solution | None] | None = None,
    targets=None,
    eps_eff: float | None = None,
) -> list[Solution]:
    """Run the selected composition algorithm and keep candidates passing the final check.

    Pure queries re-verify every pair at ``eps``; general queries pass a
    ``check`` that performs scale validation.
    """
    eps = (q.epsilon if cfg.epsilon is None else cfg.epsilon) if eps is None else eps
    theta = q.theta if cfg.theta is None else cfg.theta
    algo = algo or select_algorithm(cfg, eps)
    cycle = comp.default_cycle(bs, cfg.cycle_order)
    tm = q if targets is None else targets
    e_eff = eps if eps_eff is None else eps_eff
    cands = comp.COMPOSERS[algo](bs, tm, e_eff, cycle, counters=counters)
    out = []
    for c in cands:
        if check is not None:
            s = check(c.rows)
            if s is not None:
                out.append(s)
        elif verify_solution(bs.catalog, q, c.rows, eps, theta):
            out.append(c)
    return out


def _chunks(items: list, workers: int) -> list[list]:
    return [items[w::workers] for w in range(workers) if items[w::workers]]


def run_parallel(tasks: list, workers: int, fn: Callable[[list], tuple[list, QueryStats]]):
    """Partition ``tasks`` over ``workers`` threads and merge results.

    Returns ``(solutions, stats, per_worker_stats)``.  Solutions are sorted
    by id sequence; counters are summed.  An exception in any worker
    propagates to the caller.
    """
    if workers < 1:
        raise ContractError("workers must be >= 1")
    groups = _chunks(tasks, workers)
    if workers == 1 or len(groups) <= 1:
        results = [fn(g) for g in groups]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, groups))
    merged = QueryStats()
    sols: list[Solution] = []
    per_worker = []
    for s, st in results:
        sols.extend(s)
        merged += st
        per_worker.append(st)
    sols.sort(key=lambda s: s.ids)
    return sols, merged, per_worker


class _Trace:
    def __init__(self, sink: Callable[[dict], None] | None):
        self.sink = sink
        self.lock = threading.Lock()

    def __call__(self, record: dict) -> None:
        if self.sink is not None:
            with self.lock:
                self.sink(record)


def _resolve(q: QueryPattern, cfg: QueryConfig) -> tuple[float, float]:
    eps = q.epsilon if cfg.epsilon is None else float(cfg.epsilon)
    theta = q.theta if cfg.theta is None else float(cfg.theta)
    if eps < 0:
        raise ContractError("epsilon must be non-negative")
    return eps, theta


def execute_query(
    catalog: Catalog,
    q: QueryPattern,
    cfg: QueryConfig | None = None,
    trace: Callable[[dict], None] | None = None,
    tree: Quadtree | None = None,
) -> tuple[list[Solution], QueryStats]:
    """Answer a pure, existential or general constellation query.

    Existential runs return no solutions; ``stats.exists`` holds the answer
    and ``stats.anchors_productive`` the number of anchors with a match.
    """
    cfg = cfg or QueryConfig()
    if len(catalog) == 0:
        raise ContractError("catalog is empty")
    if cfg.mode == "general":
        return _execute_general(catalog, q, cfg, trace, tree)
    return _execute_pure(catalog, q, cfg, trace, tree)


def _execute_pure(catalog, q, cfg, trace, tree):
    eps, theta = _resolve(q, cfg)
    existential = cfg.mode == "existential"
    t0 = time.perf_counter()
    if tree is None:
        tree = build(catalog, eps, cfg.max_depth)
    build_ms = (time.perf_counter() - t0) * 1000.0
    masks = [property_mask(catalog.attrs, e, theta) for e in q.elements]
    level_nodes = [n for n in tree.entry_nodes() if n.count > 0]
    algo = select_algorithm(cfg, eps)
    tracer = _Trace(trace)

    def work(nodes: list) -> tuple[list[Solution], QueryStats]:
        st = QueryStats()
        pf = PairFilter(tree, q, eps, theta, descend=cfg.descend, masks=masks)
        cc = CompositionCounters()
        sols: list[Solution] = []
        for node in nodes:
            ta = time.perf_counter()
            sets = pf.bucket_sets(node)
            tb = time.perf_counter()
            st.filter_ms += (tb - ta) * 1000.0
            for bs in sets:
                st.anchors_total += 1
                if trace is not None:
                    tracer({"anchor": int(catalog.ids[bs.anchor]), "buckets": {str(i): n for i, n in bs.sizes().items()}})
                if not bs.complete:
                    continue
                st.bucket_sets += 1
                st.bucket_entries += bs.entries
                if existential:
                    if comp.existential(bs, q, eps, comp.default_cycle(bs, cfg.cycle_order), cc):
                        st.anchors_productive += 1
                    continue
                found = compose(bs, q, cfg, eps, algo, cc)
                if found:
                    st.anchors_productive += 1
                    sols.extend(found)
            st.compose_ms += (time.perf_counter() - tb) * 1000.0
        st.comparisons = pf.counters.comparisons
        st.candidate_pairs = pf.counters.candidate_pairs
        st.mm_deleted = cc.mm_deleted
        st.solutions = len(sols)
        return sols, st

    sols, stats, _ = run_parallel(level_nodes, cfg.workers, work)
    stats.build_ms = build_ms
    stats.algorithm = "existential" if existential else algo
    if existential:
        stats.exists = stats.anchors_productive > 0
        sols = []
    return sols, stats


def _execute_general(catalog, q, cfg, trace, tree):
    eps, theta = _resolve(q, cfg)
    gq = GeneralQuery.create(q, eps, cfg.relative_e, cfg.scale_range)
    t0 = time.perf_counter()
    if tree is None:
        lo_n = gq.norm_range[0]
        build_eps = eps if cfg.relative_e is None else cfg.relative_e * lo_n
        tree = build(catalog, build_eps, cfg.max_depth)
    build_ms = (time.perf_counter() - t0) * 1000.0
    masks = [property_mask(catalog.attrs, e, theta) for e in q.elements]
    s1_rows = np.flatnonzero(masks[gq.pair[0]]).tolist()
    algo = select_algorithm(cfg, eps)
    tracer = _Trace(trace)

    def work(rows: list) -> tuple[list[Solution], QueryStats]:
        st = QueryStats()
        cc = CompositionCounters()
        sols: list[Solution] = []
        productive: set[int] = set()
        for s1 in rows:
            st.anchors_total += 1
            ta = time.perf_counter()
            for _, s2, sb, bs in general_candidates(catalog, gq, tree, theta, np.array([s1]), masks):
                tb = time.perf_counter()
                st.filter_ms += (tb - ta) * 1000.0
                st.candidate_pairs += 1
                if trace is not None:
                    tracer({"anchor": int(catalog.ids[s1]), "partner": int(catalog.ids[s2]),
                            "buckets": {str(i): n for i, n in bs.sizes().items()}})
                if bs.complete:
                    st.bucket_sets += 1
                    st.bucket_entries += bs.entries
                    e2 = gq.mode.search_epsilon(sb)
                    targets = sb * gq.q_norm.dist_matrix
                    cands = comp.COMPOSERS[algo](
                        bs, targets, e2, comp.default_cycle(bs, cfg.cycle_order), counters=cc
                    )
                    st.candidates += len(cands)
                    for c in cands:
                        s = accept(c.rows, catalog, gq)
                        if s is None:
                            st.rejected += 1
                        else:
                            sols.append(s)
                            productive.add(s1)
                ta = time.perf_counter()
                st.compose_ms += (ta - tb) * 1000.0
            st.filter_ms += (time.perf_counter() - ta) * 1000.0
        st.anchors_productive = len(productive)
        st.mm_deleted = cc.mm_deleted
        st.solutions = len(sols)
        return sols, st

    sols, stats, _ = run_parallel(s1_rows, cfg.workers, work)
    stats.build_ms = build_ms
    stats.algorithm = algo
    return sols, stats


def prepare_bucket_sets(catalog: Catalog, q: QueryPattern, cfg: QueryConfig | None = None) -> tuple[list[BucketSet], QueryStats]:
    """Pure-mode filtering only: every complete BucketSet, in anchor order.

    Used by the benchmark harness to time composition algorithms on
    identical input.
    """
    cfg = cfg or QueryConfig()
    eps, theta = _resolve(q, cfg)
    st = QueryStats()
    t0 = time.perf_counter()
    tree = build(catalog, eps, cfg.max_depth)
    st.build_ms = (time.perf_counter() - t0) * 1000.0
    pf = PairFilter(tree, q, eps, theta, descend=cfg.descend)
    out = []
    t1 = time.perf_counter()
    for node in tree.entry_nodes():
        if node.count == 0:
            continue
        for bs in pf.bucket_sets(node):
            st.anchors_total += 1
            if bs.complete:
                st.bucket_sets += 1
                st.bucket_entries += bs.entries
                out.append(bs)
    st.filter_ms = (time.perf_counter() - t1) * 1000.0
    st.comparisons = pf.counters.comparisons
    st.candidate_pairs = pf.counters.candidate_pairs
    return out, st


def compose_all(bucket_sets: list[BucketSet], q: QueryPattern, cfg: QueryConfig, algo: str) -> tuple[list[Solution], QueryStats]:
    eps, _ = _resolve(q, cfg)
    st = QueryStats(algorithm=algo)
    cc = CompositionCounters()
    sols: list[Solution] = []
    t0 = time.perf_counter()
    for bs in bucket_sets:
        found = compose(bs, q, cfg, eps, algo, cc)
        if found:
            st.anchors_productive += 1
            sols.extend(found)
    st.compose_ms = (time.perf_counter() - t0) * 1000.0
    st.mm_deleted = cc.mm_deleted
    st.solutions = len(sols)
    sols.sort(key=lambda s: s.ids)
    return sols, st
