"""Command-line driver: ``cq index|query|generate|oracle|bench|scaleup``.

Settings resolve as command-line flag, then ``CQ_<NAME>`` environment
variable, then a ``key = value`` config file given with ``--config``,
then the built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .bench import cmd_bench, cmd_scaleup, default_planted
from .catalog import Catalog, generate_dense, generate_uniform, load_csv, write_csv
from .composition import ScaleInterval, Solution
from .engine import QueryConfig, execute_query
from .errors import ConstellationError
from .geometry import QueryPattern, einstein_cross, load_pattern, save_pattern
from .oracle import brute_general, brute_pure
from .quadtree import build

log = logging.getLogger("constellation")

ENV_PREFIX = "CQ_"

DEFAULTS: dict[str, Any] = {
    "epsilon": None,
    "theta": None,
    "mode": "pure",
    "algo": "auto",
    "workers": 1,
    "seed": 0,
    "scale_min": 0.5,
    "scale_max": 2.0,
    "relative_e": None,
    "max_depth": 24,
    "cycle_order": "index",
    "reps": 5,
    "confidence": 0.95,
}

CONVERTERS: dict[str, Callable[[str], Any]] = {
    "epsilon": float,
    "theta": float,
    "workers": int,
    "seed": int,
    "scale_min": float,
    "scale_max": float,
    "relative_e": float,
    "max_depth": int,
    "reps": int,
    "confidence": float,
}


def read_config(path: str | Path | None) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, quotes are stripped."""
    if path is None:
        return {}
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConstellationError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_").lower()] = value.strip("'\"")
    return out


class Settings:
    """Flag > environment > config file > default lookup."""

    def __init__(self, args: argparse.Namespace, env: dict[str, str] | None = None):
        self.args = args
        self.env = os.environ if env is None else env
        self.file = read_config(getattr(args, "config", None))

    def get(self, name: str, default: Any = None) -> Any:
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        conv = CONVERTERS.get(name, str)
        env_val = self.env.get(ENV_PREFIX + name.upper())
        if env_val not in (None, ""):
            return conv(env_val)
        if name in self.file:
            return conv(self.file[name])
        return DEFAULTS.get(name, default)


# -- helpers -------------------------------------------------------------


def _pattern(source: str, epsilon: float | None = None) -> QueryPattern:
    if source == "einstein":
        return einstein_cross(epsilon if epsilon is not None else 1e-6)
    return load_pattern(source)


def _catalog(path: str, q: QueryPattern | None, attrs: str | None) -> Catalog:
    cols: Sequence[str] = ()
    if attrs:
        cols = [c.strip() for c in attrs.split(",") if c.strip()]
    elif q is not None and q.attr_names:
        cols = q.attr_names
    return load_csv(path, cols)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def write_solutions(sols: Sequence[Solution], k: int, path: str | None, with_scale: bool) -> None:
    fh, close = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"id_{i}" for i in range(k)]
        if with_scale:
            header += ["scale_min", "scale_max"]
        w.writerow(header)
        for s in sols:
            row: list = list(s.ids)
            if with_scale:
                row += [repr(s.scale.max_min), repr(s.scale.min_max)]
            w.writerow(row)
    finally:
        if close:
            fh.close()


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _region(text: str | None, default=(0.0, 0.0, 1.0, 1.0)) -> tuple[float, ...]:
    if text is None:
        return default
    vals = _floats(text)
    if len(vals) != 4:
        raise ConstellationError("region needs xmin,ymin,xmax,ymax")
    return tuple(vals)


def _query_config(s: Settings, mode: str) -> QueryConfig:
    return QueryConfig(
        mode=mode,
        algo=s.get("algo"),
        epsilon=s.get("epsilon"),
        theta=s.get("theta"),
        scale_range=(s.get("scale_min"), s.get("scale_max")),
        relative_e=s.get("relative_e"),
        workers=s.get("workers"),
        cycle_order=s.get("cycle_order"),
        descend=not getattr(s.args, "no_descend", False),
        max_depth=s.get("max_depth"),
    )


# -- subcommands ---------------------------------------------------------


def cmd_index(args: argparse.Namespace) -> int:
    s = Settings(args)
    cat = load_csv(args.catalog)
    eps = s.get("epsilon")
    if eps is None:
        raise ConstellationError("index needs --epsilon")
    tree = build(cat, eps, s.get("max_depth"))
    stats = tree.stats.as_dict()
    if args.stats:
        _write_json(stats, args.out)
    else:
        print(f"indexed {len(cat)} points: height {stats['height']}, entry level {stats['entry_level']}, "
              f"{stats['node_count']} nodes")
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    s = Settings(args)
    mode = "existential" if args.existential else s.get("mode")
    q = _pattern(args.pattern, s.get("epsilon"))
    cat = _catalog(args.catalog, q, args.attrs)
    cfg = _query_config(s, mode)

    trace_fh = open(args.trace_filter, "w", encoding="utf-8") if args.trace_filter else None
    sink = (lambda rec: trace_fh.write(json.dumps(rec) + "\n")) if trace_fh else None
    try:
        sols, stats = execute_query(cat, q, cfg, trace=sink)
    finally:
        if trace_fh:
            trace_fh.close()

    if mode == "existential":
        _write_json({"exists": bool(stats.exists), "productive_anchors": stats.anchors_productive}, args.out)
    else:
        write_solutions(sols, q.k, args.out, mode == "general")
    if args.stats:
        doc = stats.as_dict()
        doc["mean_bucket_occupancy"] = round(stats.mean_bucket_occupancy(q.k), 6)
        _write_json(doc, args.stats)
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    s = Settings(args)
    q = _pattern(args.pattern, s.get("epsilon"))
    cat = _catalog(args.catalog, q, args.attrs)
    mode = s.get("mode")
    eps = s.get("epsilon")
    cap = None if args.cap == 0 else args.cap
    if mode == "general":
        res = brute_general(cat, q, eps, s.get("relative_e"), (s.get("scale_min"), s.get("scale_max")),
                            s.get("theta"), cap=cap)
        sols = [Solution(ids, ScaleInterval(*res.scales[ids])) for ids in res.solutions]
        write_solutions(sols, q.k, args.out, True)
    elif mode == "pure":
        res = brute_pure(cat, q, eps, s.get("theta"), cap=cap)
        write_solutions([Solution(ids) for ids in res.solutions], q.k, args.out, False)
    else:
        raise ConstellationError("oracle supports --mode pure or general")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    s = Settings(args)
    seed = s.get("seed")
    if args.kind == "pattern":
        q = _pattern(args.pattern or "einstein", s.get("epsilon"))
        save_pattern(q, args.out)
        return 0
    region = _region(args.region)
    if args.kind == "uniform":
        ranges = [tuple(_floats(r)) for r in args.attr_range] if args.attr_range else ()
        cat = generate_uniform(args.n, region, ranges, seed=seed)
    else:
        q = _pattern(args.pattern or "einstein", s.get("epsilon"))
        cat = generate_dense(
            args.n, q, (args.scale_lo, args.scale_hi), planted=args.planted, seed=seed,
            region=region, rotate=args.rotate,
        )
        if args.planted_out:
            with open(args.planted_out, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow([f"id_{i}" for i in range(q.k)])
                w.writerows(cat.planted)
    write_csv(cat, args.out)
    return 0


def _bench_catalog(args: argparse.Namespace, s: Settings, q: QueryPattern) -> Catalog:
    if args.catalog:
        return _catalog(args.catalog, q, args.attrs)
    return generate_dense(args.n, q, planted=args.planted, seed=s.get("seed"),
                          region=_region(args.region, (0.0, 0.0, 1.4e-3, 1.4e-3)))


def cmd_bench_cli(args: argparse.Namespace) -> int:
    s = Settings(args)
    q = _pattern(args.pattern)
    cat = _bench_catalog(args, s, q)
    report = cmd_bench(cat, q, _floats(args.epsilons), args.algos.split(","), s.get("reps"),
                       s.get("confidence"), s.get("theta"))
    if args.csv:
        report.write_csv(args.csv)
        if args.gnuplot:
            Path(args.gnuplot).write_text(report.gnuplot_script(args.csv), encoding="utf-8")
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_scaleup_cli(args: argparse.Namespace) -> int:
    s = Settings(args)
    q = _pattern(args.pattern)
    sizes = _ints(args.sizes)
    planted = _ints(args.planted) if args.planted else [default_planted(n) for n in sizes]
    report = cmd_scaleup(sizes, q, s.get("epsilon") if s.get("epsilon") is not None else q.epsilon,
                         planted, s.get("seed"), _region(args.region, (0.0, 0.0, 1e-2, 1e-2)),
                         s.get("workers"))
    _write_json(report.to_dict(), args.out)
    return 0 if report.ok else 1


# -- parser --------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--seed", type=int, help="random seed (env CQ_SEED)")


def _query_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--catalog", required=True, help="catalog CSV (id,x,y[,attrs])")
    p.add_argument("--pattern", required=True, help="pattern JSON, or 'einstein'")
    p.add_argument("--attrs", help="comma-separated attribute columns to load")
    p.add_argument("--epsilon", type=float, help="distance tolerance (default: the pattern's)")
    p.add_argument("--theta", type=float, help="attribute tolerance (default: the pattern's)")
    p.add_argument("--scale-min", type=float, dest="scale_min", help="general mode lower scale")
    p.add_argument("--scale-max", type=float, dest="scale_max", help="general mode upper scale")
    p.add_argument("--relative-e", type=float, dest="relative_e", help="proportional tolerance e < 1")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cq", description="Constellation queries over 2-D point catalogs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build the quadtree and report its shape")
    _common(p)
    p.add_argument("--catalog", required=True)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--stats", action="store_true", help="emit JSON statistics")
    p.add_argument("--out")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("query", help="run a constellation query")
    _common(p)
    _query_flags(p)
    p.add_argument("--mode", choices=("pure", "general", "existential"))
    p.add_argument("--algo", choices=("bucket-nl", "mm-nl", "mmm-nl", "auto", "bucket_nl", "mm_nl", "mmm_nl"))
    p.add_argument("--workers", type=int, help="worker threads (env CQ_WORKERS)")
    p.add_argument("--existential", action="store_true", help="only report whether a match exists")
    p.add_argument("--stats", help="write query statistics JSON here")
    p.add_argument("--trace-filter", dest="trace_filter", help="write per-anchor bucket sizes (JSON lines)")
    p.add_argument("--cycle-order", dest="cycle_order", choices=("index", "size"))
    p.add_argument("--no-descend", action="store_true", dest="no_descend")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("oracle", help="brute-force reference answer (small catalogs)")
    _common(p)
    _query_flags(p)
    p.add_argument("--mode", choices=("pure", "general"))
    p.add_argument("--cap", type=int, default=200, help="refuse larger catalogs; 0 disables")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("generate", help="write a synthetic catalog or a pattern")
    _common(p)
    p.add_argument("kind", choices=("uniform", "dense", "pattern"))
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--pattern", help="pattern JSON or 'einstein' (dense, pattern)")
    p.add_argument("--epsilon", type=float, help="tolerance stored in a generated pattern")
    p.add_argument("--planted", type=int, default=1)
    p.add_argument("--region", help="xmin,ymin,xmax,ymax")
    p.add_argument("--scale-lo", type=float, default=1.00000001, dest="scale_lo")
    p.add_argument("--scale-hi", type=float, default=1.0000009, dest="scale_hi")
    p.add_argument("--rotate", action="store_true")
    p.add_argument("--attr-range", action="append", dest="attr_range", help="lo,hi (uniform; repeatable)")
    p.add_argument("--planted-out", dest="planted_out", help="CSV of planted id tuples (dense)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="time composition algorithms over an epsilon sweep")
    _common(p)
    p.add_argument("--catalog", help="catalog CSV; omitted: generate a dense one")
    p.add_argument("--attrs")
    p.add_argument("--pattern", default="einstein")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--planted", type=int, default=500)
    p.add_argument("--region")
    p.add_argument("--epsilons", default="1e-7,3e-7,1e-6,3e-6")
    p.add_argument("--algos", default="bucket_nl,mm_nl,mmm_nl")
    p.add_argument("--reps", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.add_argument("--csv", help="also write the grid as CSV")
    p.add_argument("--gnuplot", help="also write a gnuplot script plotting the CSV")
    p.set_defaults(func=cmd_bench_cli)

    p = sub.add_parser("scaleup", help="pure queries over dense catalogs of growing size")
    _common(p)
    p.add_argument("--pattern", default="einstein")
    p.add_argument("--sizes", default="1000,5000,10000,20000")
    p.add_argument("--planted", help="planted copies per size (default size/1000 - 1)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--region")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scaleup_cli)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConstellationError, OSError) as exc:
        print(f"cq: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
