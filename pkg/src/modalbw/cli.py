"""Command-line interface: ``modalbw select | modes | simulate``.

Exit codes: 0 success, 2 usage, 3 file or parse error, 4 invalid input,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .density import Bandwidths, Sample, weight_window
from .errors import DatasetError, InvalidInputError, ModalBWError
from .modes import STATUS_TEXT, MeanShiftConfig, ModeSet, mode_sets_at
from .selectors import DATA_METHODS, METHODS, SelectorOptions, run_selector
from .simulation import TAGS, SimulationConfig, run_experiment, write_mode_curves

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3, 4, 5

BUNDLED = {"geyser": "geyser.csv"}


# --------------------------------------------------------------------------
# dataset I/O
# --------------------------------------------------------------------------


def _delimiter(header: str) -> str | None:
    for d in (",", "\t", ";"):
        if d in header:
            return d
    return None  # whitespace


def read_dataset(path, columns: tuple[str, str] | None = None, min_rows: int = 2) -> tuple[Sample, tuple[str, str]]:
    """Read a delimited two-column file with a header row.

    ``columns`` names the (x, y) columns; by default the first two are used.
    Returns the sample and the column names actually used.
    """
    name = str(path)
    if name in BUNDLED:
        text = resources.files("modalbw").joinpath("data", BUNDLED[name]).read_text(encoding="utf-8")
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except FileNotFoundError:
            raise DatasetError(f"file not found: {path}") from None
        except OSError as exc:
            raise DatasetError(f"cannot read {path}: {exc}") from None
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DatasetError(f"{path}: missing header line")
    delim = _delimiter(lines[0])

    def split(line):
        return [c.strip().strip('"') for c in (line.split(delim) if delim else line.split())]

    header = split(lines[0])
    if columns is None:
        if len(header) < 2:
            raise DatasetError(f"{path}: header must name at least two columns")
        columns = (header[0], header[1])
    try:
        ix, iy = header.index(columns[0]), header.index(columns[1])
    except ValueError:
        raise DatasetError(f"{path}: columns {columns} not found in header {header}") from None
    xs, ys, bad = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = split(line)
        try:
            x, y = float(cells[ix]), float(cells[iy])
        except (ValueError, IndexError):
            bad.append(lineno)
            continue
        if not (math.isfinite(x) and math.isfinite(y)):
            bad.append(lineno)
            continue
        xs.append(x)
        ys.append(y)
    if bad:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise DatasetError(f"{path}: unparseable or non-finite values on line(s) {shown}")
    if len(xs) < min_rows:
        raise DatasetError(f"{path}: need at least {min_rows} data rows, found {len(xs)}")
    sample = Sample(xs, ys) if len(xs) >= 2 else Sample.unchecked(xs, ys)
    return sample, columns


def write_dataset(sample: Sample, path, columns: tuple[str, str] = ("x", "y")) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for x, y in zip(sample.x, sample.y):
            w.writerow([repr(float(x)), repr(float(y))])


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

_CONFIG_KEYS = {"selector", "mean_shift", "eval_grid"}


def load_run_config(path) -> tuple[SelectorOptions, MeanShiftConfig, dict]:
    """Parse a JSON run configuration.

    Layout: ``{"selector": {SelectorOptions fields}, "mean_shift":
    {MeanShiftConfig fields}, "eval_grid": {"dx": ..., "n_y": ...}}``.
    Every section is optional; unknown keys are rejected.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise InvalidInputError(f"{path}: top level must be an object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise InvalidInputError(f"{path}: unknown sections {sorted(unknown)}")
    return parse_run_config(raw)


def _build(cls, section: dict, label: str):
    names = {f.name for f in fields(cls)}
    unknown = set(section) - names
    if unknown:
        raise InvalidInputError(f"unknown {label} keys {sorted(unknown)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in section.items()}
    try:
        return cls(**vals)
    except TypeError as exc:
        raise InvalidInputError(f"bad {label} settings: {exc}") from None


def parse_run_config(raw: dict) -> tuple[SelectorOptions, MeanShiftConfig, dict]:
    opts = _build(SelectorOptions, raw.get("selector", {}), "selector")
    _validate_options(opts)
    cfg = _build(MeanShiftConfig, raw.get("mean_shift", {}), "mean_shift")
    grid = dict(raw.get("eval_grid", {}))
    if set(grid) - {"dx", "n_y"}:
        raise InvalidInputError(f"unknown eval_grid keys {sorted(set(grid) - {'dx', 'n_y'})}")
    if not grid.get("dx", 0.05) > 0 or int(grid.get("n_y", 201)) < 2:
        raise InvalidInputError("eval_grid needs dx > 0 and n_y >= 2")
    return opts, cfg, grid


def _validate_options(o: SelectorOptions) -> None:
    lo, hi = o.window_pct
    if not 0 <= lo < hi <= 100:
        raise InvalidInputError("window_pct must satisfy 0 <= lo < hi <= 100")
    if not 0 < o.search_lo <= o.search_hi:
        raise InvalidInputError("search range must satisfy 0 < search_lo <= search_hi")
    if o.grid_points_per_axis < 4 or o.refine_rounds < 0:
        raise InvalidInputError("grid_points_per_axis >= 4 and refine_rounds >= 0 required")
    if o.L < 1 or o.y_grid_points < 2 or o.max_degree < 0 or o.em_restarts < 1:
        raise InvalidInputError("L >= 1, y_grid_points >= 2, max_degree >= 0, em_restarts >= 1 required")
    if not o.mixture_k or not o.mixture_j or min(o.mixture_k) < 1 or min(o.mixture_j) < 1:
        raise InvalidInputError("mixture_k and mixture_j must list positive integers")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _emit(text: str, out: str | None, filename: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    (target / filename).write_text(text, encoding="utf-8")


def _options(args) -> tuple[SelectorOptions, MeanShiftConfig, dict]:
    if args.config:
        opts, cfg, grid = load_run_config(args.config)
    else:
        opts, cfg, grid = SelectorOptions(), MeanShiftConfig(), {}
    if args.seed is not None:
        opts = replace(opts, seed=args.seed)
    return opts, cfg, grid


def _columns(spec: str | None):
    if spec is None:
        return None
    parts = [p.strip() for p in spec.split(",")]
    if len(parts) != 2 or not all(parts):
        raise InvalidInputError("--columns takes two names: x,y")
    return tuple(parts)


def cmd_select(args) -> int:
    opts, cfg, _ = _options(args)
    if args.method not in DATA_METHODS:
        raise InvalidInputError(f"method must be one of {', '.join(DATA_METHODS)}")
    sample, cols = read_dataset(args.dataset, _columns(args.columns))
    window = weight_window(sample, *opts.window_pct)
    t0 = time.perf_counter()
    res = run_selector(args.method, sample, window, opts, cfg)
    elapsed = time.perf_counter() - t0
    doc = res.to_dict()
    doc["dataset"] = {"source": str(args.dataset), "columns": list(cols), "n": sample.n}
    doc["window"] = [window.x_lo, window.x_hi]
    doc["seed"] = opts.seed
    if not args.no_timing:
        doc["timing"] = {"seconds": round(elapsed, 3)}
    _emit(_dump_json(doc), args.out, f"select_{args.method}.json")
    return EXIT_OK


def _x_grid(spec: str | None, sample: Sample) -> np.ndarray:
    if spec is None:
        lo, hi = float(sample.x.min()), float(sample.x.max())
        return np.linspace(lo, hi, 50) if lo < hi else np.array([lo])
    try:
        lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError:
        raise InvalidInputError("--x-grid takes lo:hi:count") from None
    if count < 1 or (count > 1 and not lo < hi):
        raise InvalidInputError("--x-grid needs count >= 1 and lo < hi")
    return np.linspace(lo, hi, count)


def cmd_modes(args) -> int:
    _, cfg, _ = _options(args)
    if args.h1 is None or args.h2 is None:
        raise InvalidInputError("modes needs both --h1 and --h2")
    h = Bandwidths(args.h1, args.h2)
    sample, _ = read_dataset(args.dataset, _columns(args.columns), min_rows=1)
    xs = _x_grid(args.x_grid, sample)
    batch = mode_sets_at(sample, h, xs, cfg)
    curves = [ModeSet(batch.locations(q), xs[q]) if batch.ok[q] else None for q in range(xs.size)]
    reasons = [STATUS_TEXT[int(s)] for s in batch.status]
    buf = io.StringIO()
    write_mode_curves(buf, curves, xs, reasons)
    _emit(buf.getvalue(), args.out, "modes.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    opts, cfg, grid = _options(args)
    if args.tag not in TAGS:
        raise InvalidInputError(f"tag must be one of {', '.join(TAGS)}")
    methods = tuple(m.strip() for m in (args.method or "reference").split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    config = SimulationConfig(args.tag, n=args.n)
    seed = 0 if args.seed is None else args.seed

    def progress(row):
        if args.verbose:
            print(f"rep {row['replicate']} {row['method']}: eise_m={row['eise_m']} failed={row['failed']}", file=sys.stderr)

    report = run_experiment(
        config, methods, args.replicates, seed=seed, options=opts, cfg=cfg,
        dx=grid.get("dx", 0.05), n_y=int(grid.get("n_y", 201)), progress=progress,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{args.tag}_n{config.n}_r{args.replicates}_s{seed}"
    report.write_csv(out / f"{stem}_replicates.csv")
    report.write_json(out / f"{stem}_summary.json")
    report.write_timings(out / f"{stem}_timings.csv")
    print(_dump_json(report.to_dict()["aggregates"]), end="")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modalbw", description="Bandwidth selection for kernel modal regression.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (default: stdout where possible)")

    s = sub.add_parser("select", help="select bandwidths for a dataset")
    s.add_argument("dataset", help="delimited file with header, or 'geyser'")
    s.add_argument("--method", required=True, choices=DATA_METHODS)
    s.add_argument("--columns", help="x,y column names")
    s.add_argument("--no-timing", action="store_true", help="omit the timing field")
    common(s)
    s.set_defaults(func=cmd_select)

    m = sub.add_parser("modes", help="estimate conditional mode curves at given bandwidths")
    m.add_argument("dataset")
    m.add_argument("--h1", type=float)
    m.add_argument("--h2", type=float)
    m.add_argument("--x-grid", help="lo:hi:count (default: 50 points over the x-range)")
    m.add_argument("--columns")
    common(m)
    m.set_defaults(func=cmd_modes)

    r = sub.add_parser("simulate", help="Monte Carlo comparison on a simulation model")
    r.add_argument("tag", help="C1..C5")
    r.add_argument("--method", help="comma-separated methods (default: reference)")
    r.add_argument("--replicates", type=int, default=1)
    r.add_argument("--n", type=int, default=500)
    r.add_argument("--verbose", action="store_true")
    r.add_argument("--config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="simulation_out")
    r.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ModalBWError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
