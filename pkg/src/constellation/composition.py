"""Joining per-anchor buckets into complete solutions.

``bucket_nl`` is the reference nested-loop join.  ``mm_nl`` and ``mmm_nl``
first run boolean matrix products around the cycle of buckets and delete
bucket entries whose diagonal entry is zero; such entries cannot close a
cycle, so the join on the reduced buckets returns the same solutions.

Distance targets are passed as a k x k matrix so the same code serves
pure queries (the pattern's own distances) and general queries (the
pattern distances times a posited scale).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError
from .filtering import BucketSet
from .geometry import QueryPattern, distances_from, pairwise_distances

ALGORITHMS = ("bucket_nl", "mm_nl", "mmm_nl")

# Products up to this many (row, inner, word) cells run as one masked reduction.
_VECTOR_LIMIT = 1 << 20


@dataclass(frozen=True)
class ScaleInterval:
    """Window ``[max_min, min_max]`` of scale factors satisfying every pair."""

    max_min: float
    min_max: float

    @property
    def satisfiable(self) -> bool:
        return self.max_min <= self.min_max

    @property
    def midpoint(self) -> float:
        return (self.max_min + self.min_max) / 2.0


@dataclass(frozen=True, order=True)
class Solution:
    """Point ids in pattern-element order, plus the scale window for general queries."""

    ids: tuple[int, ...]
    scale: ScaleInterval | None = field(default=None, compare=False)
    rows: tuple[int, ...] = field(default=(), compare=False, repr=False)


class BitMatrix:
    """Boolean matrix stored as rows of little-endian 64-bit words."""

    __slots__ = ("shape", "words")

    def __init__(self, shape: tuple[int, int], words: np.ndarray):
        self.shape = shape
        self.words = words

    @staticmethod
    def n_words(cols: int) -> int:
        return (cols + 63) // 64

    @classmethod
    def from_bool(cls, m: np.ndarray) -> "BitMatrix":
        m = np.asarray(m, dtype=bool)
        r, c = m.shape
        w = cls.n_words(c)
        packed = np.packbits(m, axis=1, bitorder="little")
        buf = np.zeros((r, w * 8), dtype=np.uint8)
        buf[:, : packed.shape[1]] = packed
        return cls((r, c), buf.view("<u8").reshape(r, w))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_bool(np.eye(n, dtype=bool))

    def to_bool(self) -> np.ndarray:
        r, c = self.shape
        if r == 0 or c == 0:
            return np.zeros((r, c), dtype=bool)
        bits = np.unpackbits(self.words.view(np.uint8).reshape(r, -1), axis=1, bitorder="little")
        return bits[:, :c].astype(bool)

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        """Product over the (OR, AND) semiring."""
        r, n = self.shape
        n2, c = other.shape
        if n != n2:
            raise ContractError(f"cannot multiply {self.shape} by {other.shape}")
        out = np.zeros((r, self.n_words(c)), dtype=np.uint64)
        if r == 0 or n == 0 or c == 0:
            return BitMatrix((r, c), out)
        return BitMatrix.bool_times(self.to_bool(), other)

    @staticmethod
    def bool_times(a: np.ndarray, other: "BitMatrix") -> "BitMatrix":
        """``A @ other`` for a plain boolean ``A``: OR of the packed rows ``A`` selects."""
        r, n = a.shape
        n2, c = other.shape
        if n != n2:
            raise ContractError(f"cannot multiply {a.shape} by {other.shape}")
        out = np.zeros((r, BitMatrix.n_words(c)), dtype=np.uint64)
        if r == 0 or n == 0 or c == 0:
            return BitMatrix((r, c), out)
        if r * n * out.shape[1] <= _VECTOR_LIMIT:
            picked = np.where(a[:, :, None], other.words[None, :, :], np.uint64(0))
            return BitMatrix((r, c), np.bitwise_or.reduce(picked, axis=1))
        if r <= n:
            for i in range(r):
                idx = np.flatnonzero(a[i])
                if len(idx):
                    out[i] = np.bitwise_or.reduce(other.words[idx], axis=0)
        else:
            for j in range(n):
                rows = a[:, j]
                if rows.any():
                    out[rows] |= other.words[j]
        return BitMatrix((r, c), out)

    def diagonal(self) -> np.ndarray:
        r, c = self.shape
        if r != c:
            raise ContractError(f"diagonal of non-square matrix {self.shape}")
        i = np.arange(r)
        words = self.words[i, i // 64]
        return ((words >> (i % 64).astype(np.uint64)) & np.uint64(1)).astype(bool)

    def select(self, rows: np.ndarray | None = None, cols: np.ndarray | None = None) -> "BitMatrix":
        m = self.to_bool()
        if rows is not None:
            m = m[rows]
        if cols is not None:
            m = m[:, cols]
        return BitMatrix.from_bool(m)

    def any(self) -> bool:
        return bool(self.words.any())


@dataclass
class PairMatrix:
    rows_bucket: int
    cols_bucket: int
    bits: BitMatrix


@dataclass
class CompositionCounters:
    tuples_extended: int = 0
    mm_deleted: int = 0
    mm_products: int = 0


def _targets(q) -> np.ndarray:
    return q.dist_matrix if isinstance(q, QueryPattern) else np.asarray(q, dtype=float)


def default_cycle(bs: BucketSet, order: str = "index") -> list[int]:
    idx = sorted(bs.buckets)
    if order == "size":
        idx.sort(key=lambda i: (len(bs.buckets[i]), i))
    elif order != "index":
        raise ContractError(f"unknown cycle order {order!r}")
    return idx


def _compat(xy, rows_i, rows_j, target, eps) -> np.ndarray:
    d = pairwise_distances(xy[rows_i], xy[rows_j])
    return (np.abs(d - target) <= eps) & (rows_i[:, None] != rows_j[None, :])


class _JoinState:
    """Candidate rows, anchor tests and pairwise compat matrices for one BucketSet.

    ``comp[(u, v)]`` (``u < v``, positions in the cycle order) says which
    star of bucket ``order[u]`` can sit next to which star of ``order[v]``.
    The MM filters reuse these matrices and shrink them in place, so the
    final nested loop never recomputes a distance.
    """

    def __init__(self, bs: BucketSet, tm: np.ndarray, eps_eff: float, order: Sequence[int]):
        xy = bs.catalog.xy
        self.bs = bs
        self.order = list(order)
        a = bs.anchor_element
        ax, ay = xy[bs.anchor]
        self.rows = [np.asarray(bs.buckets[i], dtype=np.intp) for i in self.order]
        self.base = []
        for i, r in zip(self.order, self.rows):
            d = distances_from(float(ax), float(ay), xy[r])
            self.base.append((np.abs(d - tm[a, i]) <= eps_eff) & (r != bs.anchor))
        m = len(self.order)
        self.comp = {}
        for u in range(m):
            for v in range(u + 1, m):
                self.comp[(u, v)] = _compat(xy, self.rows[u], self.rows[v], tm[self.order[u], self.order[v]], eps_eff)

    def cycle_matrices(self) -> list[np.ndarray]:
        """Boolean M_t between cycle positions t and t+1, the last one wrapping to 0."""
        m = len(self.order)
        ms = [self.comp[(t, t + 1)] for t in range(m - 1)]
        ms.append(self.comp[(0, m - 1)].T)
        return ms

    def keep(self, u: int, idx: np.ndarray) -> None:
        """Restrict cycle position ``u`` to the bucket entries ``idx``."""
        self.rows[u] = self.rows[u][idx]
        self.base[u] = self.base[u][idx]
        for (v, w), c in self.comp.items():
            if v == u:
                self.comp[(v, w)] = c[idx]
            elif w == u:
                self.comp[(v, w)] = c[:, idx]

    def join(self, first_only: bool = False, counters: CompositionCounters | None = None) -> list[Solution]:
        bs = self.bs
        cat = bs.catalog
        order, rows, base, comp = self.order, self.rows, self.base, self.comp
        a = bs.anchor_element
        k = len(order) + 1
        out: list[Solution] = []
        chosen = [0] * len(order)

        def emit():
            ids_by_elem = [0] * k
            rows_by_elem = [0] * k
            ids_by_elem[a] = int(cat.ids[bs.anchor])
            rows_by_elem[a] = bs.anchor
            for u, i in enumerate(order):
                r = int(rows[u][chosen[u]])
                rows_by_elem[i] = r
                ids_by_elem[i] = int(cat.ids[r])
            out.append(Solution(tuple(ids_by_elem), None, tuple(rows_by_elem)))

        def extend(t: int) -> bool:
            mask = base[t].copy()
            for u in range(t):
                mask &= comp[(u, t)][chosen[u]]
            for c in np.flatnonzero(mask):
                chosen[t] = int(c)
                if counters is not None:
                    counters.tuples_extended += 1
                if t + 1 == len(order):
                    emit()
                    if first_only:
                        return True
                elif extend(t + 1) and first_only:
                    return True
            return False

        extend(0)
        return out


def _state(bs: BucketSet, q, eps_eff: float, cycle) -> _JoinState | None:
    order = list(cycle) if cycle is not None else default_cycle(bs)
    if any(len(bs.buckets[i]) == 0 for i in order):
        return None
    return _JoinState(bs, _targets(q), eps_eff, order)


def bucket_nl(
    bs: BucketSet,
    q,
    eps_eff: float,
    cycle: Sequence[int] | None = None,
    first_only: bool = False,
    counters: CompositionCounters | None = None,
) -> list[Solution]:
    """Nested-loop join over the buckets in cycle order.

    Each new element is checked against every element already placed
    (anchor included), so a partial tuple is abandoned as soon as one
    pairwise distance fails.  Returned solutions list ids in element order.
    """
    st = _state(bs, q, eps_eff, cycle)
    if st is None:
        return []
    return st.join(first_only, counters)


def build_pair_matrices(bs: BucketSet, q, eps_eff: float, cycle: Sequence[int]) -> list[PairMatrix]:
    """One boolean matrix per consecutive pair of the cycle, wrapping around."""
    xy = bs.catalog.xy
    tm = _targets(q)
    out = []
    m = len(cycle)
    for t in range(m):
        i, j = cycle[t], cycle[(t + 1) % m]
        ri = np.asarray(bs.buckets[i], dtype=np.intp)
        rj = np.asarray(bs.buckets[j], dtype=np.intp)
        out.append(PairMatrix(i, j, BitMatrix.from_bool(_compat(xy, ri, rj, tm[i, j], eps_eff))))
    return out


def chain_product(ms: Sequence[PairMatrix]) -> BitMatrix:
    for t in range(len(ms)):
        nxt = ms[(t + 1) % len(ms)]
        if ms[t].bits.shape[1] != nxt.bits.shape[0]:
            raise ContractError(
                f"matrix {t} has {ms[t].bits.shape[1]} columns but matrix {(t + 1) % len(ms)} "
                f"has {nxt.bits.shape[0]} rows"
            )
    p = ms[0].bits
    for pm in ms[1:]:
        p = p @ pm.bits
    return p


def mm_diagonal_filter(ms: Sequence[PairMatrix]) -> np.ndarray:
    """Head-bucket indices whose diagonal entry of ``M1 M2 ... Mm`` is set."""
    if not ms:
        raise ContractError("empty matrix chain")
    return np.flatnonzero(chain_product(ms).diagonal())


def _cycle_diagonal(ms: Sequence[np.ndarray]) -> np.ndarray:
    """Diagonal of ``M_0 M_1 ... M_{m-1}``, evaluated right to left on packed rows."""
    p = BitMatrix.from_bool(ms[-1])
    for m in reversed(ms[:-1]):
        p = BitMatrix.bool_times(m, p)
    return p.diagonal()


def _mm_step(st: _JoinState, counters: CompositionCounters | None) -> bool:
    """Diagonal filter on the head bucket; False once it empties."""
    if len(st.order) < 2:
        return True
    ms = st.cycle_matrices()
    surv = np.flatnonzero(_cycle_diagonal(ms))
    if counters is not None:
        counters.mm_products += len(ms) - 1
        counters.mm_deleted += len(st.rows[0]) - len(surv)
    if len(surv) == 0:
        return False
    if len(surv) < len(st.rows[0]):
        st.keep(0, surv)
    return True


def mm_nl(
    bs: BucketSet,
    q,
    eps_eff: float,
    cycle: Sequence[int] | None = None,
    counters: CompositionCounters | None = None,
) -> list[Solution]:
    """Single diagonal filter on the head bucket, then ``bucket_nl``."""
    st = _state(bs, q, eps_eff, cycle)
    if st is None or not _mm_step(st, counters):
        return []
    return st.join(counters=counters)


def _mmm_steps(st: _JoinState, counters: CompositionCounters | None) -> bool:
    m = len(st.order)
    if m < 2:
        return True
    for t in range(m):
        ms = st.cycle_matrices()
        rot = ms[t:] + ms[:t]
        surv = np.flatnonzero(_cycle_diagonal(rot))
        if counters is not None:
            counters.mm_products += m - 1
            counters.mm_deleted += len(st.rows[t]) - len(surv)
        if len(surv) == 0:
            return False
        if len(surv) < len(st.rows[t]):
            st.keep(t, surv)
    return True


def mmm_filter(
    bs: BucketSet,
    q,
    eps_eff: float,
    cycle: Sequence[int],
    counters: CompositionCounters | None = None,
) -> BucketSet | None:
    """Run the diagonal filter once per rotation of the cycle, deleting as it goes.

    Returns the reduced BucketSet, or None once some bucket empties.
    """
    st = _state(bs, q, eps_eff, cycle)
    if st is None or not _mmm_steps(st, counters):
        return None
    buckets = dict(bs.buckets)
    for i, r in zip(st.order, st.rows):
        buckets[i] = r.tolist()
    return BucketSet(bs.anchor, bs.anchor_element, buckets, bs.catalog)


def mmm_nl(
    bs: BucketSet,
    q,
    eps_eff: float,
    cycle: Sequence[int] | None = None,
    counters: CompositionCounters | None = None,
) -> list[Solution]:
    """Diagonal filter on every rotation of the cycle, then ``bucket_nl``."""
    st = _state(bs, q, eps_eff, cycle)
    if st is None or not _mmm_steps(st, counters):
        return []
    return st.join(counters=counters)


def existential(
    bs: BucketSet,
    q,
    eps_eff: float,
    cycle: Sequence[int] | None = None,
    counters: CompositionCounters | None = None,
) -> bool:
    """Whether this anchor has any solution.

    A zero diagonal refutes the anchor without a join; otherwise the join
    stops at the first complete tuple.
    """
    st = _state(bs, q, eps_eff, cycle)
    if st is None or not _mm_step(st, counters):
        return False
    return bool(st.join(first_only=True, counters=counters))


COMPOSERS = {"bucket_nl": bucket_nl, "mm_nl": mm_nl, "mmm_nl": mmm_nl}
