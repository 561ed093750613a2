"""Simulation models C1-C5, true mode curves, EISE metrics and the Monte Carlo runner."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .density import SQRT_2PI, MIN_DENOMINATOR, Bandwidths, Sample, WeightWindow
from .errors import InvalidInputError, ModalBWError, UndefinedEstimateError
from .modes import MeanShiftConfig, ModeSet, mode_curves
from .parametric import gaussian_mixture_modes

TAGS = ("C1", "C2", "C3", "C4", "C5")

# gamma noise in C1: shape 3, rate 2 (mean 1.5, mode 1)
GAMMA_SHAPE = 3.0
GAMMA_RATE = 2.0


def m1(x):
    x = np.asarray(x, dtype=float)
    return x + x * x


# offsets from m1, weights and standard deviations of the Gaussian mixtures
_MIXTURES = {
    "C2": ((0.0, -6.0), (0.5, 0.5), (1.0, 1.0)),
    "C4": ((0.0, -3.0, -6.0), (0.5, 0.3, 0.2), (0.5, 0.5, 0.5)),
    "C5": (tuple(-1.5 * j for j in range(5)), (0.2,) * 5, (0.2,) * 5),
}


@dataclass(frozen=True)
class SimulationConfig:
    """One of the five true models.  X ~ N(0, 1) throughout."""

    tag: str
    n: int = 500
    x_window: tuple[float, float] = (-2.0, 2.0)

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InvalidInputError(f"unknown configuration {self.tag!r}; choose from {', '.join(TAGS)}")
        if self.n < 2:
            raise InvalidInputError("n must be at least 2")
        if not self.x_window[0] < self.x_window[1]:
            raise InvalidInputError("x_window must be increasing")
        for offsets, weights, sds in _MIXTURES.values():
            assert abs(sum(weights) - 1) < 1e-12 and min(sds) > 0

    def _branch(self, x):
        """Mixture tag used at each x, or None where the gamma model applies."""
        if self.tag == "C1":
            return None
        if self.tag == "C3":
            return "C2" if x > 0 else None
        return self.tag

    def mixture(self, tag: str):
        return _MIXTURES[tag]

    def conditional_density(self, x, y):
        """True p(y|x); broadcasts over x and y."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = np.zeros(x.shape)
        gamma_part = stats.gamma.pdf(y - m1(x) + 1, GAMMA_SHAPE, scale=1 / GAMMA_RATE)
        if self.tag == "C1":
            return gamma_part
        mix_tag = "C2" if self.tag == "C3" else self.tag
        offsets, weights, sds = _MIXTURES[mix_tag]
        base = m1(x)
        for o, w, s in zip(offsets, weights, sds):
            out = out + w * np.exp(-0.5 * ((y - base - o) / s) ** 2) / (SQRT_2PI * s)
        if self.tag == "C3":
            out = np.where(x > 0, out, gamma_part)
        return out


def generate(config: SimulationConfig, seed) -> Sample:
    """Draw (X, Y); ``seed`` is anything accepted by ``numpy.random.default_rng``."""
    rng = np.random.default_rng(seed)
    n = config.n
    x = rng.standard_normal(n)
    # numpy's gamma sampler is Marsaglia-Tsang
    gamma_y = m1(x) - 1 + rng.gamma(GAMMA_SHAPE, 1 / GAMMA_RATE, n)
    if config.tag == "C1":
        return Sample(x, gamma_y)
    mix_tag = "C2" if config.tag == "C3" else config.tag
    offsets, weights, sds = _MIXTURES[mix_tag]
    comp = np.minimum(np.searchsorted(np.cumsum(weights), rng.random(n), side="right"), len(weights) - 1)
    mix_y = m1(x) + np.asarray(offsets)[comp] + np.asarray(sds)[comp] * rng.standard_normal(n)
    if config.tag == "C3":
        return Sample(x, np.where(x > 0, mix_y, gamma_y))
    return Sample(x, mix_y)


def true_modes(config: SimulationConfig, x: float) -> ModeSet:
    """Exact local maxima of p(.|x)."""
    x = float(x)
    branch = config._branch(x)
    if branch is None:
        # gamma mode (shape - 1) / rate = 1 cancels the -1 shift
        return ModeSet([float(m1(x))], x)
    offsets, weights, sds = _MIXTURES[branch]
    means = float(m1(x)) + np.asarray(offsets)
    return ModeSet(gaussian_mixture_modes(weights, means, sds, merge_tol=1e-6), x)


@dataclass(frozen=True)
class EvalGrid:
    """x-grid with step dx over [x_lo, x_hi] and an n_y-point y-grid over [y_lo, y_hi]."""

    x_lo: float
    x_hi: float
    dx: float
    y_lo: float
    y_hi: float
    n_y: int = 201

    def __post_init__(self):
        if not (self.dx > 0 and self.x_lo < self.x_hi and self.y_lo < self.y_hi and self.n_y >= 2):
            raise InvalidInputError("evaluation grid needs positive steps and increasing bounds")

    @classmethod
    def for_sample(cls, sample: Sample, x_window=(-2.0, 2.0), dx: float = 0.05, n_y: int = 201) -> "EvalGrid":
        return cls(float(x_window[0]), float(x_window[1]), dx, float(sample.y.min()), float(sample.y.max()), n_y)

    @property
    def xs(self) -> np.ndarray:
        m = int(round((self.x_hi - self.x_lo) / self.dx))
        return self.x_lo + self.dx * np.arange(m + 1)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, self.n_y)

    @property
    def dy(self) -> float:
        return (self.y_hi - self.y_lo) / (self.n_y - 1)

    @property
    def x_weights(self) -> np.ndarray:
        """p(x_k) dx with p the standard normal density."""
        xs = self.xs
        return np.exp(-0.5 * xs * xs) / SQRT_2PI * self.dx


def true_mode_curves(config: SimulationConfig, grid: EvalGrid) -> list[ModeSet]:
    return [true_modes(config, x) for x in grid.xs]


def estimated_mode_curves(sample: Sample, h: Bandwidths, grid: EvalGrid, cfg: MeanShiftConfig | None = None):
    return mode_curves(sample, h, grid.xs, cfg)


@dataclass(frozen=True)
class EiseM:
    value: float
    n_missing: int


def eise_m_detail(estimated, config: SimulationConfig, grid: EvalGrid, truth_sets=None) -> EiseM:
    """EISE_M with the number of grid points lacking an estimate.

    A missing estimate (``None`` or empty) costs the squared y-range.
    """
    xs = grid.xs
    if len(estimated) != xs.size:
        raise InvalidInputError(f"expected {xs.size} mode sets, got {len(estimated)}")
    truth_sets = truth_sets if truth_sets is not None else true_mode_curves(config, grid)
    penalty = (grid.y_hi - grid.y_lo) ** 2
    pw = grid.x_weights
    total = 0.0
    missing = 0
    for k, est in enumerate(estimated):
        loc = None if est is None else np.asarray(getattr(est, "locations", est), dtype=float)
        if loc is None or loc.size == 0:
            total += penalty * pw[k]
            missing += 1
            continue
        d = np.abs(loc[:, None] - truth_sets[k].locations[None, :])
        total += max(d.min(axis=1).max(), d.min(axis=0).max()) ** 2 * pw[k]
    return EiseM(float(total), missing)


def eise_m(estimated, config: SimulationConfig, grid: EvalGrid, truth_sets=None) -> float:
    """Sum over the x-grid of Haus^2(estimated, true) p(x_k) dx."""
    return eise_m_detail(estimated, config, grid, truth_sets).value


def true_density_grid(config: SimulationConfig, grid: EvalGrid) -> np.ndarray:
    """p(y_j | x_k), shape (len(xs), n_y)."""
    return config.conditional_density(grid.xs[:, None], grid.ys[None, :])


def kernel_density_grid(sample: Sample, h: Bandwidths, grid: EvalGrid) -> np.ndarray:
    """Kernel estimate on the evaluation grid, shape (len(xs), n_y)."""
    xs, ys = grid.xs, grid.ys
    kx = np.exp(-0.5 * ((sample.x[None, :] - xs[:, None]) / h.h1) ** 2)
    den = kx.sum(axis=1)
    bad = np.nonzero(den / SQRT_2PI < MIN_DENOMINATOR)[0]
    if bad.size:
        raise UndefinedEstimateError(f"kernel estimate undefined at x={xs[bad[0]]}", index=int(bad[0]))
    ky = np.exp(-0.5 * ((sample.y[:, None] - ys[None, :]) / h.h2) ** 2) / (SQRT_2PI * h.h2)
    return (kx / den[:, None]) @ ky


def eise_d(estimate, config: SimulationConfig, grid: EvalGrid, truth_grid=None) -> float:
    """Sum over both grids of (estimate - truth)^2 p(x_k) dx dy.

    ``estimate`` is either a precomputed (len(xs), n_y) array or a callable
    ``f(x, ys)`` returning the estimated density at one x over the y-grid.
    """
    if callable(estimate):
        est = np.vstack([np.asarray(estimate(x, grid.ys), dtype=float) for x in grid.xs])
    else:
        est = np.asarray(estimate, dtype=float)
    truth_grid = truth_grid if truth_grid is not None else true_density_grid(config, grid)
    if est.shape != truth_grid.shape:
        raise InvalidInputError(f"estimate grid shape {est.shape} does not match {truth_grid.shape}")
    return float(np.sum((est - truth_grid) ** 2 * grid.x_weights[:, None]) * grid.dy)


# --------------------------------------------------------------------------
# experiment runner
# --------------------------------------------------------------------------

ROW_FIELDS = ("replicate", "method", "h1", "h2", "eise_m", "eise_d", "n_missing_modes", "failed", "reason")


@dataclass
class ExperimentReport:
    """Per replicate x method rows plus Monte Carlo aggregates.

    Standard errors are raw (not multiplied by 10).  Wall times live in
    ``timings`` and are written to a separate file so the data outputs stay
    byte-identical across reruns.
    """

    tag: str
    n: int
    seed: int
    replicates: int
    methods: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([r[metric] for r in self.rows if r["method"] == method and not r["failed"]], dtype=float)

    def aggregates(self) -> dict:
        out = {}
        for m in self.methods:
            cell = {"n_ok": 0, "n_failed": sum(r["failed"] for r in self.rows if r["method"] == m)}
            for metric in ("eise_m", "eise_d", "h1", "h2"):
                v = self.values(m, metric)
                v = v[np.isfinite(v)]
                cell["n_ok"] = max(cell["n_ok"], int(v.size))
                cell[f"{metric}_mean"] = float(v.mean()) if v.size else None
                cell[f"{metric}_se"] = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
            out[m] = cell
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tag": self.tag,
            "n": self.n,
            "seed": self.seed,
            "replicates": self.replicates,
            "methods": list(self.methods),
            "standard_error_scale": "raw (multiply by 10 for the x10 convention)",
            "aggregates": self.aggregates(),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: ("" if r[k] is None else repr(r[k]) if isinstance(r[k], float) else r[k]) for k in ROW_FIELDS})

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def write_timings(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=("replicate", "method", "seconds"), lineterminator="\n")
            w.writeheader()
            w.writerows(self.timings)


def write_mode_curves_csv(curves, xs, path, reasons=None) -> None:
    """x, status, count, mode_1..mode_k (padded).  Failed points keep their row."""
    width = max([len(c) for c in curves if c is not None] or [1])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_mode_curves(fh, curves, xs, reasons, width)


def write_mode_curves(fh, curves, xs, reasons=None, width=None) -> None:
    width = width or max([len(c) for c in curves if c is not None] or [1])
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "status", "count"] + [f"mode_{i + 1}" for i in range(width)])
    for q, (x, c) in enumerate(zip(xs, curves)):
        locs = [] if c is None else [repr(float(v)) for v in c.locations]
        status = "ok" if c is not None else (reasons[q] if reasons else "failed")
        w.writerow([repr(float(x)), status, "" if c is None else len(locs)] + locs + [""] * (width - len(locs)))


def run_experiment(
    config: SimulationConfig,
    methods,
    replicates: int,
    n: int | None = None,
    seed: int = 0,
    options=None,
    cfg: MeanShiftConfig | None = None,
    dx: float = 0.05,
    n_y: int = 201,
    progress=None,
) -> ExperimentReport:
    """Monte Carlo comparison of selectors on one configuration.

    Replicate r uses the RNG stream ``(seed, r)``.  Selector failures are
    recorded in the row and never abort the run.
    """
    from .selectors import METHODS, SelectorOptions, run_selector

    if replicates < 1:
        raise InvalidInputError("replicates must be at least 1")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    if n is not None:
        config = replace(config, n=n)
    options = options or SelectorOptions()
    cfg = cfg or MeanShiftConfig()
    report = ExperimentReport(config.tag, config.n, seed, replicates, methods)
    window = WeightWindow(*config.x_window)
    for r in range(replicates):
        sample = generate(config, [seed, r])
        grid = EvalGrid.for_sample(sample, config.x_window, dx, n_y)
        truth_sets = true_mode_curves(config, grid)
        truth_d = true_density_grid(config, grid)
        opts = replace(options, seed=int(np.random.SeedSequence([seed, r]).generate_state(1)[0]))
        for m in methods:
            t0 = time.perf_counter()
            row = dict.fromkeys(ROW_FIELDS)
            row.update(replicate=r, method=m, failed=False, reason="")
            try:
                res = run_selector(m, sample, window, opts, cfg, truth=config, grid=grid)
                row["h1"], row["h2"] = res.h.h1, res.h.h2
                curves = estimated_mode_curves(sample, res.h, grid, cfg)
                em = eise_m_detail(curves, config, grid, truth_sets)
                row["eise_m"], row["n_missing_modes"] = em.value, em.n_missing
                row["eise_d"] = eise_d(kernel_density_grid(sample, res.h, grid), config, grid, truth_d)
            except ModalBWError as exc:
                row["failed"] = True
                row["reason"] = f"{type(exc).__name__}: {exc}"
            report.rows.append(row)
            report.timings.append({"replicate": r, "method": m, "seconds": round(time.perf_counter() - t0, 3)})
            if progress:
                progress(row)
    return report
