"""Pure and general constellation queries over 2-D point catalogs."""

__version__ = "0.1.0"

from .catalog import Catalog, Point, generate_dense, generate_uniform, load_csv, write_csv
from .composition import ScaleInterval, Solution, bucket_nl, existential, mm_nl, mmm_nl
from .engine import QueryConfig, QueryStats, execute_query, select_algorithm
from .general import GeneralQuery, normalize_pattern, post_process, scale_window
from .geometry import (
    PatternElement,
    QueryPattern,
    build_pattern,
    distance_match,
    einstein_cross,
    euclidean_distance,
    load_pattern,
    property_match,
)
from .quadtree import Quadtree, build, compute_entry_level

__all__ = [
    "Catalog", "Point", "generate_dense", "generate_uniform", "load_csv", "write_csv",
    "ScaleInterval", "Solution", "bucket_nl", "existential", "mm_nl", "mmm_nl",
    "QueryConfig", "QueryStats", "execute_query", "select_algorithm",
    "GeneralQuery", "normalize_pattern", "post_process", "scale_window",
    "PatternElement", "QueryPattern", "build_pattern", "distance_match", "einstein_cross",
    "euclidean_distance", "load_pattern", "property_match",
    "Quadtree", "build", "compute_entry_level",
]
