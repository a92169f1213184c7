"""Point catalogs: in-memory model, CSV ingestion and synthetic generators."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import GenerationError, IntegrityError, ParseError, SchemaError
from .geometry import QueryPattern, Rect

# Accepted header spellings, matched case-insensitively.
ID_COLUMNS = ("id", "objid", "obj_id")
X_COLUMNS = ("x", "ra")
Y_COLUMNS = ("y", "dec")


@dataclass(frozen=True)
class Point:
    id: int
    x: float
    y: float
    attrs: tuple[float, ...] = ()

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True, eq=False)
class Catalog:
    """Immutable column store of catalog points.

    Rows are addressed by position (``0..n-1``); ``ids`` carries the user
    identifiers.  ``planted`` is only filled by the synthetic generators and
    lists the id tuples of embedded pattern copies, in pattern-element order.
    """

    ids: np.ndarray
    xy: np.ndarray
    attrs: np.ndarray
    attr_names: tuple[str, ...] = ()
    planted: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.uint64)
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        n = len(ids)
        attrs = np.asarray(self.attrs, dtype=float).reshape(n, -1) if n else np.zeros(
            (0, len(self.attr_names))
        )
        if len(xy) != n or len(attrs) != n:
            raise IntegrityError("ids, positions and attributes differ in length")
        if n and len(np.unique(ids)) != n:
            dup = _first_duplicate(ids)
            raise IntegrityError(f"duplicate id {dup}")
        for arr in (ids, xy, attrs):
            arr.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "attrs", attrs)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_attrs(self) -> int:
        return self.attrs.shape[1]

    @property
    def bounds(self) -> Rect | None:
        if len(self) == 0:
            return None
        return Rect.bounding(self.xy[:, 0], self.xy[:, 1])

    def point(self, row: int) -> Point:
        return Point(
            int(self.ids[row]),
            float(self.xy[row, 0]),
            float(self.xy[row, 1]),
            tuple(float(v) for v in self.attrs[row]),
        )

    @property
    def points(self) -> list[Point]:
        return [self.point(i) for i in range(len(self))]

    def __iter__(self) -> Iterator[Point]:
        for i in range(len(self)):
            yield self.point(i)

    def row_of(self) -> dict[int, int]:
        return {int(v): i for i, v in enumerate(self.ids)}

    @classmethod
    def from_points(cls, points: Sequence[Point], attr_names: Sequence[str] = ()) -> "Catalog":
        n_attrs = len(points[0].attrs) if points else len(attr_names)
        if any(len(p.attrs) != n_attrs for p in points):
            raise IntegrityError("points carry attribute vectors of different lengths")
        return cls(
            ids=np.array([p.id for p in points], dtype=np.uint64),
            xy=np.array([[p.x, p.y] for p in points], dtype=float).reshape(-1, 2),
            attrs=np.array([p.attrs for p in points], dtype=float).reshape(len(points), n_attrs),
            attr_names=tuple(attr_names),
        )


def _first_duplicate(ids: np.ndarray) -> int:
    seen = set()
    for v in ids:
        if int(v) in seen:
            return int(v)
        seen.add(int(v))
    return -1


def _find_column(header: list[str], names: Sequence[str], label: str, path) -> int:
    lowered = [h.strip().lower() for h in header]
    for name in names:
        if name.lower() in lowered:
            return lowered.index(name.lower())
    raise SchemaError(label, str(path) if path else None)


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(v):
        raise ParseError(row, column, text)
    return v


def load_csv(path: str | Path, attr_columns: Sequence[str] = ()) -> Catalog:
    """Read a comma-separated catalog with header ``id,x,y[,attr...]``.

    ``objID``/``ra``/``dec`` are accepted in place of ``id``/``x``/``y``.
    Lines starting with ``#`` are ignored.  Row numbers in errors count
    physical lines of the file, header included, starting at 1.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        return _read_catalog(fh, attr_columns, path)


def read_csv_text(text: str, attr_columns: Sequence[str] = ()) -> Catalog:
    return _read_catalog(io.StringIO(text), attr_columns, None)


def _read_catalog(fh, attr_columns, path) -> Catalog:
    lines = ((lineno, line) for lineno, line in enumerate(fh, start=1))
    content = ((no, ln) for no, ln in lines if ln.strip() and not ln.lstrip().startswith("#"))
    try:
        _, header_line = next(content)
    except StopIteration:
        raise SchemaError("id", str(path) if path else None) from None
    header = next(csv.reader([header_line]))
    i_id = _find_column(header, ID_COLUMNS, "id", path)
    i_x = _find_column(header, X_COLUMNS, "x", path)
    i_y = _find_column(header, Y_COLUMNS, "y", path)
    i_attrs = [_find_column(header, [a], a, path) for a in attr_columns]

    ids, xy, attrs = [], [], []
    seen: dict[int, int] = {}
    for lineno, line in content:
        row = next(csv.reader([line]))
        try:
            raw_id = row[i_id].strip()
            try:
                pid = int(raw_id)
            except ValueError:
                raise ParseError(lineno, header[i_id], raw_id) from None
            if pid < 0:
                raise ParseError(lineno, header[i_id], raw_id)
            x = _parse_float(row[i_x], lineno, header[i_x])
            y = _parse_float(row[i_y], lineno, header[i_y])
            a = [_parse_float(row[j], lineno, header[j]) for j in i_attrs]
        except IndexError:
            raise ParseError(lineno, "<row>", line.rstrip("\r\n")) from None
        if pid in seen:
            raise IntegrityError(f"duplicate id {pid} on rows {seen[pid]} and {lineno}")
        seen[pid] = lineno
        ids.append(pid)
        xy.append((x, y))
        attrs.append(a)
    n = len(ids)
    return Catalog(
        ids=np.array(ids, dtype=np.uint64),
        xy=np.array(xy, dtype=float).reshape(n, 2),
        attrs=np.array(attrs, dtype=float).reshape(n, len(i_attrs)),
        attr_names=tuple(attr_columns),
    )


def write_csv(catalog: Catalog, path: str | Path, precision: int | None = None) -> None:
    """Write ``catalog`` in the format ``load_csv`` reads.

    With ``precision=None`` floats are written with ``repr`` and round-trip
    exactly; otherwise they are rounded to ``precision`` significant digits.
    """
    fmt = repr if precision is None else (lambda v: f"{v:.{precision}g}")
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["id", "x", "y", *catalog.attr_names]) + "\n")
        for i in range(len(catalog)):
            vals = [str(int(catalog.ids[i])), fmt(float(catalog.xy[i, 0])), fmt(float(catalog.xy[i, 1]))]
            vals += [fmt(float(v)) for v in catalog.attrs[i]]
            fh.write(",".join(vals) + "\n")


def _as_rect(region) -> Rect:
    if isinstance(region, Rect):
        return region
    xmin, ymin, xmax, ymax = region
    return Rect(float(xmin), float(ymin), float(xmax), float(ymax))


def generate_uniform(
    n: int,
    region=(0.0, 0.0, 1.0, 1.0),
    attr_ranges: Sequence[tuple[float, float]] = (),
    seed: int | None = 0,
    attr_names: Sequence[str] | None = None,
    first_id: int = 1,
) -> Catalog:
    if n < 0:
        raise GenerationError("n must be non-negative")
    rect = _as_rect(region)
    if n > 1 and rect.area <= 0:
        raise GenerationError("cannot place more than one point in a zero-area region")
    rng = np.random.default_rng(seed)
    xy = np.column_stack(
        [rng.uniform(rect.xmin, rect.xmax, n), rng.uniform(rect.ymin, rect.ymax, n)]
    )
    attrs = np.column_stack([rng.uniform(lo, hi, n) for lo, hi in attr_ranges]) if attr_ranges else np.zeros((n, 0))
    names = tuple(attr_names) if attr_names is not None else tuple(f"a{i}" for i in range(len(attr_ranges)))
    return Catalog(
        ids=np.arange(first_id, first_id + n, dtype=np.uint64),
        xy=xy.reshape(n, 2),
        attrs=attrs.reshape(n, len(attr_ranges)),
        attr_names=names,
    )


def generate_dense(
    n: int,
    base_pattern: QueryPattern,
    scale_interval=(1.00000001, 1.0000009),
    planted: int = 1,
    seed: int | None = 0,
    region=(0.0, 0.0, 1.0, 1.0),
    attr_ranges: Sequence[tuple[float, float]] | None = None,
    rotate: bool = False,
    shuffle: bool = True,
) -> Catalog:
    """Embed ``planted`` scaled copies of a pattern among uniform filler points.

    Each copy is scaled about the pattern's first element by a factor drawn
    uniformly from ``scale_interval`` and translated to a uniform location
    that keeps the whole copy inside ``region``.  Ids are ``1..n``; the id
    tuples of the copies are recorded in ``Catalog.planted``.
    """
    k = base_pattern.k
    low, high = scale_interval
    if not 0 < low <= high:
        raise GenerationError("scale interval must satisfy 0 < low <= high")
    if k < 3:
        raise GenerationError("base pattern must have at least 3 elements")
    if n < planted * k:
        raise GenerationError(f"n={n} cannot hold {planted} copies of a {k}-element pattern")
    rect = _as_rect(region)
    rng = np.random.default_rng(seed)

    rel = base_pattern.positions - base_pattern.positions[0]
    n_attrs = len(base_pattern.elements[0].attrs)
    pattern_attrs = np.array([e.attrs for e in base_pattern.elements], dtype=float).reshape(k, n_attrs)
    if attr_ranges is None:
        attr_ranges = [(float(c.min()) - 1.0, float(c.max()) + 1.0) for c in pattern_attrs.T]

    blocks_xy, blocks_attrs = [], []
    for _ in range(planted):
        f = rng.uniform(low, high)
        shape = rel * f
        if rotate:
            a = rng.uniform(0.0, 2.0 * math.pi)
            rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            shape = shape @ rot.T
        span_x = shape[:, 0].max() - shape[:, 0].min()
        span_y = shape[:, 1].max() - shape[:, 1].min()
        if span_x > rect.width or span_y > rect.height:
            raise GenerationError("region too small to contain a scaled pattern copy")
        ox = rng.uniform(rect.xmin - shape[:, 0].min(), rect.xmax - shape[:, 0].max())
        oy = rng.uniform(rect.ymin - shape[:, 1].min(), rect.ymax - shape[:, 1].max())
        blocks_xy.append(shape + np.array([ox, oy]))
        blocks_attrs.append(pattern_attrs)

    n_fill = n - planted * k
    fill_xy = np.column_stack(
        [rng.uniform(rect.xmin, rect.xmax, n_fill), rng.uniform(rect.ymin, rect.ymax, n_fill)]
    )
    fill_attrs = (
        np.column_stack([rng.uniform(lo, hi, n_fill) for lo, hi in attr_ranges])
        if n_attrs
        else np.zeros((n_fill, 0))
    )
    xy = np.vstack(blocks_xy + [fill_xy.reshape(n_fill, 2)])
    attrs = np.vstack(blocks_attrs + [fill_attrs.reshape(n_fill, n_attrs)])

    order = rng.permutation(n) if shuffle else np.arange(n)
    ids = np.empty(n, dtype=np.uint64)
    ids[order] = np.arange(1, n + 1, dtype=np.uint64)
    planted_ids = tuple(
        tuple(int(ids[c * k + j]) for j in range(k)) for c in range(planted)
    )
    # Rows are stored in id order.
    rows = np.argsort(ids, kind="stable")
    return Catalog(
        ids=ids[rows],
        xy=xy[rows],
        attrs=attrs[rows],
        attr_names=tuple(base_pattern.attr_names) or tuple(f"a{i}" for i in range(n_attrs)),
        planted=planted_ids,
    )
