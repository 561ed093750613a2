"""Bandwidth selection for conditional density and conditional mode estimation.

Six data-driven selectors are implemented:

========================  ===========================================
``reference``             normal reference rule (closed form)
``regression``            penalised prediction error, h2 fixed by the reference rule
``boot_density``          parametric bootstrap of the density ISE (polynomial pilot)
``cv_density``            least-squares leave-one-out CV for the density
``cv_mode``               leave-one-out CV built on mode-set residuals
``boot_mode``             parametric bootstrap of the mode Hausdorff loss (mixture pilot)
========================  ===========================================

plus ``oracle_density`` / ``oracle_mode`` which minimise the true-model
error metrics and are only available in simulation.

All searched selectors share :func:`minimize_criterion`, a log-scale grid
search with local refinement.  Criteria are piecewise constant in places
(mode counts jump with h), which rules out gradient or simplex searches.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.special import roots_legendre

from .density import SQRT_2PI, Bandwidths, Sample, WeightWindow, loo_x_weights
from .errors import InfeasibleSearchError, InvalidInputError, ModalBWError, UndefinedEstimateError
from .modes import OK, MeanShiftConfig, mode_sets_at
from .parametric import (
    EMConfig,
    MixtureModel,
    fit_mixture_bspline,
    fit_polynomial_aic,
    mixture_conditional_modes,
    simulate_mixture,
    simulate_polynomial,
)

SCHEMA_VERSION = 1

METHODS = (
    "reference",
    "regression",
    "boot_density",
    "cv_density",
    "cv_mode",
    "boot_mode",
    "oracle_density",
    "oracle_mode",
)
DATA_METHODS = METHODS[:6]


# --------------------------------------------------------------------------
# search machinery
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpec:
    """Log-scale search box.  A range with lo == hi pins that bandwidth."""

    h1_range: tuple[float, float]
    h2_range: tuple[float, float]
    grid_points_per_axis: int = 12
    refine_rounds: int = 3

    def __post_init__(self):
        for name in ("h1_range", "h2_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi and math.isfinite(hi)):
                raise InvalidInputError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.grid_points_per_axis < 4:
            raise InvalidInputError("grid_points_per_axis must be at least 4")
        if self.refine_rounds < 0:
            raise InvalidInputError("refine_rounds must be non-negative")

    @classmethod
    def default_for(cls, sample: Sample, lo: float = 0.02, hi: float = 2.0, **kw) -> "SearchSpec":
        """Box [lo, hi] * sd on each axis."""
        sx, sy = float(np.std(sample.x, ddof=1)), float(np.std(sample.y, ddof=1))
        if not (sx > 0 and sy > 0):
            raise InvalidInputError("cannot scale a search box for constant data")
        return cls((lo * sx, hi * sx), (lo * sy, hi * sy), **kw)

    def with_h2_fixed(self, h2: float) -> "SearchSpec":
        return SearchSpec(self.h1_range, (h2, h2), self.grid_points_per_axis, self.refine_rounds)


@dataclass(frozen=True)
class TraceEntry:
    h1: float
    h2: float
    value: float
    note: str | None = None


@dataclass
class SelectionResult:
    method: str
    h: Bandwidths
    criterion_value: float
    trace: list[TraceEntry] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def num(v):
            return float(v) if np.isfinite(v) else None

        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "h": {"h1": self.h.h1, "h2": self.h.h2},
            "criterion_value": num(self.criterion_value),
            "diagnostics": self.diagnostics,
            "trace": [{"h1": t.h1, "h2": t.h2, "value": num(t.value), "note": t.note} for t in self.trace],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _axis(lo: float, hi: float, n: int) -> tuple[np.ndarray, float]:
    if lo == hi:
        return np.array([math.log(lo)]), 0.0
    pts = np.linspace(math.log(lo), math.log(hi), n)
    return pts, float(pts[1] - pts[0])


def minimize_criterion(criterion: Callable, spec: SearchSpec):
    """Grid search in log-bandwidth followed by local refinement.

    ``criterion(h)`` returns a float or a ``(float, note)`` pair; raising a
    package error or returning a non-finite value marks the point infeasible.
    Each refinement round evaluates a 5x5 stencil spanning one current step
    either side of the incumbent, then halves the step (the searched area
    shrinks fourfold per round).  Ties go to the smaller h1, then h2.

    Returns ``(h, value, trace, diagnostics)``.
    """
    l1, d1 = _axis(*spec.h1_range, spec.grid_points_per_axis)
    l2, d2 = _axis(*spec.h2_range, spec.grid_points_per_axis)
    bounds1 = (math.log(spec.h1_range[0]), math.log(spec.h1_range[1]))
    bounds2 = (math.log(spec.h2_range[0]), math.log(spec.h2_range[1]))
    cache: dict[tuple[float, float], TraceEntry] = {}

    def evaluate(a: float, b: float):
        a = min(max(a, bounds1[0]), bounds1[1])
        b = min(max(b, bounds2[0]), bounds2[1])
        key = (round(a, 10), round(b, 10))
        if key in cache:
            return
        h = Bandwidths(math.exp(a), math.exp(b))
        note = None
        try:
            out = criterion(h)
            value, note = out if isinstance(out, tuple) else (out, None)
            value = float(value)
        except ModalBWError as exc:
            value, note = math.inf, f"infeasible: {exc}"
        if not math.isfinite(value):
            value = math.inf
            note = note or "infeasible"
        cache[key] = TraceEntry(h.h1, h.h2, value, note)

    def best_key():
        return min(cache, key=lambda k: (cache[k].value, cache[k].h1, cache[k].h2))

    for a in l1:
        for b in l2:
            evaluate(a, b)
    for _ in range(spec.refine_rounds):
        k = best_key()
        if not math.isfinite(cache[k].value):
            break
        c1, c2 = math.log(cache[k].h1), math.log(cache[k].h2)
        offs = (-1.0, -0.5, 0.0, 0.5, 1.0)
        for o1 in offs if d1 else (0.0,):
            for o2 in offs if d2 else (0.0,):
                evaluate(c1 + o1 * d1, c2 + o2 * d2)
        d1, d2 = d1 / 2, d2 / 2
    k = best_key()
    best = cache[k]
    if not math.isfinite(best.value):
        raise InfeasibleSearchError("every candidate bandwidth was infeasible")
    trace = list(cache.values())
    on_boundary = {
        "h1": bool(spec.h1_range[0] < spec.h1_range[1] and k[0] in (round(bounds1[0], 10), round(bounds1[1], 10))),
        "h2": bool(spec.h2_range[0] < spec.h2_range[1] and k[1] in (round(bounds2[0], 10), round(bounds2[1], 10))),
    }
    if on_boundary["h1"] or on_boundary["h2"]:
        idx = trace.index(best)
        trace[idx] = TraceEntry(best.h1, best.h2, best.value, ((best.note + "; ") if best.note else "") + "boundary")
    diag = {
        "n_evaluations": len(trace),
        "n_infeasible": sum(not math.isfinite(t.value) for t in trace),
        "on_boundary": on_boundary,
    }
    return Bandwidths(best.h1, best.h2), best.value, trace, diag


def _search(method: str, criterion: Callable, spec: SearchSpec, **extra) -> SelectionResult:
    h, value, trace, diag = minimize_criterion(criterion, spec)
    diag.update(extra)
    return SelectionResult(method, h, value, trace, diag)


@dataclass(frozen=True)
class YGrid:
    """Equally spaced response grid."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.size < 2 or np.any(np.diff(p) <= 0):
            raise InvalidInputError("y-grid must hold at least two strictly increasing points")
        object.__setattr__(self, "points", p)

    @classmethod
    def over(cls, y, m: int = 101) -> "YGrid":
        y = np.asarray(y, dtype=float)
        return cls(np.linspace(y.min(), y.max(), m))

    @property
    def spacing(self) -> float:
        return float(self.points[1] - self.points[0])


def _kernel_y(ys: np.ndarray, grid: np.ndarray, h2: float) -> np.ndarray:
    """K_h2(Y_j - y_k), shape (len(ys), len(grid))."""
    u = (ys[:, None] - grid[None, :]) / h2
    return np.exp(-0.5 * u * u) / (SQRT_2PI * h2)


def _full_x_weights(x_rows: np.ndarray, x: np.ndarray, h1: float) -> np.ndarray:
    d = (x[None, :] - x_rows[:, None]) / h1
    k = np.exp(-0.5 * d * d)
    return k / k.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# normal reference rule
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalWorkingModel:
    """X ~ N(mu_x, sd_x^2); Y | X=x ~ N(a + b x, (c + d x)^2)."""

    mu_x: float
    sd_x: float
    a: float
    b: float
    c: float
    d: float

    def cond_sd(self, x):
        return self.c + self.d * np.asarray(x, dtype=float)


def fit_normal_working_model(sample: Sample) -> NormalWorkingModel:
    """Maximum-likelihood fit of the normal working model.

    The conditional scale is parameterised by its (log) values at the two
    ends of the observed x-range, which keeps it positive on the data.
    """
    x, y = sample.x, sample.y
    lo, hi = float(x.min()), float(x.max())
    t = (x - lo) / (hi - lo)
    b0, a0 = np.polyfit(t, y, 1)
    s0 = max(float(np.std(y - a0 - b0 * t)), 1e-8 * max(1.0, float(np.max(np.abs(y)))))

    def nll(p):
        a, b, ls0, ls1 = p
        s = np.exp(ls0) * (1 - t) + np.exp(ls1) * t
        z = (y - a - b * t) / s
        return float(np.sum(0.5 * z * z + np.log(s)))

    res = optimize.minimize(nll, [a0, b0, math.log(s0), math.log(s0)], method="BFGS", options={"gtol": 1e-9})
    a, b, ls0, ls1 = res.x
    sl, sh = math.exp(ls0), math.exp(ls1)
    slope_s = (sh - sl) / (hi - lo)
    slope_m = b / (hi - lo)
    return NormalWorkingModel(
        mu_x=float(x.mean()), sd_x=float(x.std()),
        a=float(a - slope_m * lo), b=float(slope_m),
        c=float(sl - slope_s * lo), d=float(slope_s),
    )


def _working_model_derivatives(model: NormalWorkingModel, x: np.ndarray, y: np.ndarray):
    """(p(x), p_x(x)/p(x), p, p_x, p_xx, p_yy) of the working model at paired points."""
    m = model.a + model.b * x
    s = model.c + model.d * x
    mp, sp = model.b, model.d
    z = (y - m) / s
    p = np.exp(-0.5 * z * z) / (SQRT_2PI * s)
    g = (z * mp + (z * z - 1) * sp) / s  # p_x = p g
    zx = -(mp + z * sp) / s
    gx = zx * (mp + 2 * z * sp) / s - g * sp / s
    px = p * g
    pxx = p * (g * g + gx)
    pyy = p * (z * z - 1) / (s * s)
    fx = np.exp(-0.5 * ((x - model.mu_x) / model.sd_x) ** 2) / (SQRT_2PI * model.sd_x)
    score = -(x - model.mu_x) / model.sd_x**2
    return fx, score, p, px, pxx, pyy


def reference_constants(model: NormalWorkingModel, window: WeightWindow, nodes: int = 200) -> np.ndarray:
    """c1..c5 of the asymptotic IMSE expansion for the normal kernel.

    Integrals use Gauss-Legendre in x over the window and in the standardised
    response z = (y - m(x)) / s(x) over [-12, 12].
    """
    nu0 = 1.0 / (2.0 * math.sqrt(math.pi))
    mu2 = 1.0
    gx, wx = roots_legendre(nodes)
    gz, wz = roots_legendre(nodes)
    xs = window.x_lo + (gx + 1) * window.width / 2
    wx = wx * window.width / 2
    zs, wz = 12.0 * gz, 12.0 * wz
    s = model.cond_sd(xs)
    if np.any(s <= 0):
        raise UndefinedEstimateError("working-model scale is non-positive inside the weight window")
    X = np.repeat(xs, nodes)
    Y = (model.a + model.b * xs)[:, None] + s[:, None] * zs[None, :]
    W = (wx * s)[:, None] * wz[None, :]
    fx, score, p, px, pxx, pyy = _working_model_derivatives(model, X, Y.ravel())
    W = W.ravel()
    T = 2 * score * px + pxx
    c1 = nu0**2 * window.width
    c2 = float(np.sum(W * nu0 * p * p))
    c3 = float(np.sum(W * mu2**2 * fx / 4 * T * T))
    c4 = float(np.sum(W * mu2**2 * fx / 4 * pyy * pyy))
    c5 = float(np.sum(W * mu2**2 * fx / 2 * T * pyy))
    return np.array([c1, c2, c3, c4, c5])


def imse_approximation(h: Bandwidths, c, n: int) -> float:
    c1, c2, c3, c4, c5 = c
    h1, h2 = h.h1, h.h2
    return c1 / (n * h1 * h2) - c2 / (n * h1) + c3 * h1**4 + c4 * h2**4 + c5 * h1**2 * h2**2


def reference_bandwidths_from_constants(c, n: int) -> Bandwidths:
    """Minimiser of the leading IMSE terms given c1..c5.

    h2 = h1 (c3/c4)^(1/4) and
    h1 = c1^(1/6) [4 (c3^5/c4)^(1/4) + 2 c5 (c3/c4)^(3/4)]^(-1/6) n^(-1/6).
    """
    c1, _, c3, c4, c5 = (float(v) for v in c)
    if not (c3 > 0 and c4 > 0):
        raise UndefinedEstimateError(f"degenerate curvature constants c3={c3}, c4={c4}")
    ratio = c3 / c4
    brace = 4 * (c3**5 / c4) ** 0.25 + 2 * c5 * ratio**0.75
    if not brace > 0:
        raise UndefinedEstimateError("reference-rule bracket is non-positive")
    h1 = c1 ** (1 / 6) * brace ** (-1 / 6) * n ** (-1 / 6)
    return Bandwidths(h1, h1 * ratio**0.25)


def reference_rule(sample: Sample, window: WeightWindow) -> Bandwidths:
    """Normal reference bandwidths."""
    if sample.n < 10:
        raise InvalidInputError("the reference rule needs at least 10 observations")
    model = fit_normal_working_model(sample)
    return reference_bandwidths_from_constants(reference_constants(model, window), sample.n)


def select_reference(sample: Sample, window: WeightWindow) -> SelectionResult:
    if sample.n < 10:
        raise InvalidInputError("the reference rule needs at least 10 observations")
    model = fit_normal_working_model(sample)
    c = reference_constants(model, window)
    h = reference_bandwidths_from_constants(c, sample.n)
    value = imse_approximation(h, c, sample.n)
    diag = {"constants": c.tolist(), "working_model": model.__dict__}
    return SelectionResult("reference", h, value, [TraceEntry(h.h1, h.h2, value)], diag)


# --------------------------------------------------------------------------
# regression-based selection
# --------------------------------------------------------------------------


def akaike_penalty(u):
    """(1 + u) / (1 - u); infinite for u >= 1."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(u < 1, (1 + u) / (1 - u), np.inf)


def regression_criterion(sample: Sample, h: Bandwidths, window: WeightWindow, ygrid: YGrid) -> float:
    """Penalised mean squared prediction error Q_{h2}(h1)."""
    w = window(sample.x)
    idx = np.nonzero(w)[0]
    d = (sample.x[None, :] - sample.x[idx, None]) / h.h1
    k = np.exp(-0.5 * d * d)
    rows = k.sum(axis=1)
    u = 1.0 / rows  # K_h1(0) / sum_j K_h1(X_j - X_i)
    pen = akaike_penalty(u)
    if not np.all(np.isfinite(pen)):
        return math.inf
    ky = _kernel_y(sample.y, ygrid.points, h.h2)
    phat = (k / rows[:, None]) @ ky
    sq = np.sum((phat - ky[idx]) ** 2, axis=1)
    return float(ygrid.spacing / sample.n * np.sum(sq * pen))


def regression_select(
    sample: Sample, window: WeightWindow, ygrid: YGrid | None = None, spec: SearchSpec | None = None
) -> SelectionResult:
    """Select h1 by the penalised criterion with h2 fixed at the reference rule."""
    ygrid = ygrid or YGrid.over(sample.y)
    spec = spec or SearchSpec.default_for(sample)
    h2 = reference_rule(sample, window).h2
    return _search(
        "regression",
        lambda h: regression_criterion(sample, h, window, ygrid),
        spec.with_h2_fixed(h2),
        h2_reference=h2,
    )


# --------------------------------------------------------------------------
# cross-validation for the density
# --------------------------------------------------------------------------


def cv_density(sample: Sample, h: Bandwidths, window: WeightWindow) -> float:
    """Least-squares leave-one-out CV criterion CV_D(h).

    The squared-density integral uses the Gaussian convolution identity
    int K_h(a - y) K_h(b - y) dy = phi((a - b) / (sqrt(2) h)) / (sqrt(2) h).
    """
    w = window(sample.x)
    A, bad = loo_x_weights(sample.x, h.h1)
    retained_bad = np.nonzero(bad & (w > 0))[0]
    if retained_bad.size:
        i = int(retained_bad[0])
        raise UndefinedEstimateError(f"leave-one-out estimate undefined at observation {i}", index=i)
    idx = np.nonzero(w)[0]
    A = A[idx]
    dy = sample.y[:, None] - sample.y[None, :]
    s2 = math.sqrt(2.0) * h.h2
    G = np.exp(-0.5 * (dy / s2) ** 2) / (SQRT_2PI * s2)
    sq_int = np.einsum("ij,ij->i", A @ G, A)
    at_obs = np.einsum("ij,ij->i", A, np.exp(-0.5 * (dy[idx] / h.h2) ** 2) / (SQRT_2PI * h.h2))
    return float((np.sum(sq_int) - 2 * np.sum(at_obs)) / sample.n)


def select_cv_density(sample: Sample, window: WeightWindow, spec: SearchSpec | None = None) -> SelectionResult:
    spec = spec or SearchSpec.default_for(sample)
    return _search("cv_density", lambda h: cv_density(sample, h, window), spec)


# --------------------------------------------------------------------------
# cross-validation for modes
# --------------------------------------------------------------------------


def cv_mode_terms(sample: Sample, h: Bandwidths, window: WeightWindow, cfg: MeanShiftConfig | None = None):
    """Per-observation terms d^2(M_-i(X_i), Y_i) N_-i(X_i)^2 w(X_i).

    Entries are ``inf`` where the leave-one-out mode set could not be formed.
    """
    cfg = cfg or MeanShiftConfig()
    w = window(sample.x)
    idx = np.nonzero(w)[0]
    batch = mode_sets_at(sample, h, sample.x[idx], cfg, exclude=idx)
    terms = np.zeros(sample.n)
    for q, i in enumerate(idx):
        if batch.status[q] != OK:
            terms[i] = math.inf
            continue
        loc = batch.locations(q)
        terms[i] = np.min(np.abs(loc - sample.y[i])) ** 2 * loc.size**2 * w[i]
    return terms


def _cv_mode_eval(sample, h, window, cfg):
    terms = cv_mode_terms(sample, h, window, cfg)
    bad = int(np.sum(~np.isfinite(terms)))
    if bad:
        return math.inf, f"{bad} empty leave-one-out mode sets"
    return float(np.sum(terms) / sample.n), None


def cv_mode(sample: Sample, h: Bandwidths, window: WeightWindow, cfg: MeanShiftConfig | None = None) -> float:
    """Mode-set CV criterion CV_M(h); ``inf`` when some retained LOO mode set is empty."""
    return _cv_mode_eval(sample, h, window, cfg)[0]


def select_cv_mode(
    sample: Sample, window: WeightWindow, spec: SearchSpec | None = None, cfg: MeanShiftConfig | None = None
) -> SelectionResult:
    spec = spec or SearchSpec.default_for(sample)
    return _search("cv_mode", lambda h: _cv_mode_eval(sample, h, window, cfg), spec)


# --------------------------------------------------------------------------
# bootstrap selectors
# --------------------------------------------------------------------------


def density_bootstrap_loss(
    sample: Sample, h: Bandwidths, window: WeightWindow, ygrid: YGrid, boot_ys, reference: np.ndarray
) -> float:
    """Bootstrap average of the empirical density ISE against a reference density.

    ``reference[i, k]`` is the pilot density at (X_i, y_k) for retained rows i
    (in the order of ``np.nonzero(window(sample.x))``).
    """
    idx = np.nonzero(window(sample.x))[0]
    A = _full_x_weights(sample.x[idx], sample.x, h.h1)
    total = 0.0
    for yb in boot_ys:
        phat = A @ _kernel_y(np.asarray(yb), ygrid.points, h.h2)
        total += ygrid.spacing / sample.n * float(np.sum((phat - reference) ** 2))
    return total / len(boot_ys)


def bootstrap_density_select(
    sample: Sample,
    window: WeightWindow,
    ygrid: YGrid | None = None,
    L: int = 25,
    spec: SearchSpec | None = None,
    seed: int = 0,
    max_degree: int = 5,
) -> SelectionResult:
    """Parametric bootstrap bandwidths with an AIC polynomial pilot."""
    if L < 1:
        raise InvalidInputError("L must be at least 1")
    ygrid = ygrid or YGrid.over(sample.y)
    spec = spec or SearchSpec.default_for(sample)
    pilot = fit_polynomial_aic(sample, max_degree)
    idx = np.nonzero(window(sample.x))[0]
    reference = pilot.density(sample.x[idx, None], ygrid.points[None, :])
    boot = [simulate_polynomial(pilot, sample.x, [seed, ell]) for ell in range(L)]
    return _search(
        "boot_density",
        lambda h: density_bootstrap_loss(sample, h, window, ygrid, boot, reference),
        spec,
        pilot=pilot.to_dict(),
        L=L,
        seed=seed,
    )


def mode_bootstrap_loss(
    x: np.ndarray,
    h: Bandwidths,
    window: WeightWindow,
    boot_ys,
    proxy_modes: list[np.ndarray],
    cfg: MeanShiftConfig | None = None,
    y_range: float | None = None,
):
    """Bootstrap average of squared Hausdorff losses against proxy mode sets.

    ``proxy_modes`` holds one array per retained observation.  A bootstrap
    mode set that cannot be formed costs ``y_range**2``.  Returns
    ``(value, n_empty)``.
    """
    cfg = cfg or MeanShiftConfig()
    idx = np.nonzero(window(x))[0]
    n = x.size
    penalty = y_range**2
    total = 0.0
    n_empty = 0
    for yb in boot_ys:
        bs = Sample(x, yb)
        batch = mode_sets_at(bs, h, x[idx], cfg, y_range=y_range)
        acc = 0.0
        for q in range(idx.size):
            if batch.status[q] != OK:
                acc += penalty
                n_empty += 1
                continue
            est, ref = batch.locations(q), proxy_modes[q]
            d = np.abs(est[:, None] - ref[None, :])
            acc += max(d.min(axis=1).max(), d.min(axis=0).max()) ** 2
        total += acc / n
    return total / len(boot_ys), n_empty


def bootstrap_mode_select(
    sample: Sample,
    window: WeightWindow,
    L: int = 25,
    spec: SearchSpec | None = None,
    cfg: MeanShiftConfig | None = None,
    seed: int = 0,
    k_candidates=range(1, 6),
    j_candidates=range(3, 8),
    em_cfg: EMConfig | None = None,
    pilot: MixtureModel | None = None,
) -> SelectionResult:
    """Parametric bootstrap bandwidths targeting the mode-set Hausdorff loss."""
    if L < 1:
        raise InvalidInputError("L must be at least 1")
    spec = spec or SearchSpec.default_for(sample)
    cfg = cfg or MeanShiftConfig()
    if pilot is None:
        pilot = fit_mixture_bspline(sample, k_candidates, j_candidates, em_cfg or EMConfig(seed=seed))
    idx = np.nonzero(window(sample.x))[0]
    proxy = [mixture_conditional_modes(pilot, float(sample.x[i]), cfg).locations for i in idx]
    boot = [simulate_mixture(pilot, sample.x, [seed, ell]) for ell in range(L)]
    y_range = sample.y_range

    def crit(h):
        value, n_empty = mode_bootstrap_loss(sample.x, h, window, boot, proxy, cfg, y_range)
        return value, (f"{n_empty} empty bootstrap mode sets penalised" if n_empty else None)

    return _search("boot_mode", crit, spec, pilot=pilot.to_dict(), L=L, seed=seed)


# --------------------------------------------------------------------------
# oracles (simulation only)
# --------------------------------------------------------------------------


def oracle_bandwidths(
    sample: Sample,
    truth,
    metric: str,
    spec: SearchSpec | None = None,
    cfg: MeanShiftConfig | None = None,
    grid=None,
) -> SelectionResult:
    """Bandwidths minimising EISE_D (``metric='EISE_D'``) or EISE_M against the truth."""
    from . import simulation

    spec = spec or SearchSpec.default_for(sample)
    cfg = cfg or MeanShiftConfig()
    grid = grid or simulation.EvalGrid.for_sample(sample, truth.x_window)
    metric = metric.upper()
    if metric == "EISE_D":
        truth_d = simulation.true_density_grid(truth, grid)

        def crit(h):
            return simulation.eise_d(simulation.kernel_density_grid(sample, h, grid), truth, grid, truth_grid=truth_d)

        method = "oracle_density"
    elif metric == "EISE_M":
        true_sets = simulation.true_mode_curves(truth, grid)

        def crit(h):
            curves = simulation.estimated_mode_curves(sample, h, grid, cfg)
            return simulation.eise_m(curves, truth, grid, truth_sets=true_sets)

        method = "oracle_mode"
    else:
        raise InvalidInputError(f"unknown metric {metric!r}")
    return _search(method, crit, spec, metric=metric)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectorOptions:
    """Settings shared by every selector invocation."""

    window_pct: tuple[float, float] = (2.5, 97.5)
    search_lo: float = 0.02
    search_hi: float = 2.0
    grid_points_per_axis: int = 12
    refine_rounds: int = 3
    L: int = 25
    y_grid_points: int = 101
    max_degree: int = 5
    mixture_k: tuple[int, ...] = (1, 2, 3, 4, 5)
    mixture_j: tuple[int, ...] = (3, 4, 5, 6, 7)
    em_restarts: int = 5
    seed: int = 0

    def spec_for(self, sample: Sample) -> SearchSpec:
        return SearchSpec.default_for(
            sample, self.search_lo, self.search_hi,
            grid_points_per_axis=self.grid_points_per_axis, refine_rounds=self.refine_rounds,
        )


def run_selector(
    method: str,
    sample: Sample,
    window: WeightWindow,
    options: SelectorOptions | None = None,
    cfg: MeanShiftConfig | None = None,
    truth=None,
    grid=None,
) -> SelectionResult:
    """Run a selector by its method tag."""
    opts = options or SelectorOptions()
    cfg = cfg or MeanShiftConfig()
    spec = opts.spec_for(sample)
    ygrid = YGrid.over(sample.y, opts.y_grid_points)
    if method == "reference":
        return select_reference(sample, window)
    if method == "regression":
        return regression_select(sample, window, ygrid, spec)
    if method == "boot_density":
        return bootstrap_density_select(sample, window, ygrid, opts.L, spec, opts.seed, opts.max_degree)
    if method == "cv_density":
        return select_cv_density(sample, window, spec)
    if method == "cv_mode":
        return select_cv_mode(sample, window, spec, cfg)
    if method == "boot_mode":
        em = EMConfig(restarts=opts.em_restarts, seed=opts.seed)
        return bootstrap_mode_select(sample, window, opts.L, spec, cfg, opts.seed, opts.mixture_k, opts.mixture_j, em)
    if method in ("oracle_density", "oracle_mode"):
        if truth is None:
            raise InvalidInputError(f"{method} needs the true simulation model")
        return oracle_bandwidths(sample, truth, "EISE_D" if method == "oracle_density" else "EISE_M", spec, cfg, grid)
    raise InvalidInputError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
