"""Conditional mode-set estimation by Gaussian mean shift.

The public single-point functions work directly on a :class:`Sample`; the
batch engine :func:`mode_sets_at` runs many (possibly leave-one-out) queries
inside a compiled loop and is what the selectors and the simulation harness
use.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numba
import numpy as np

from .density import MIN_DENOMINATOR, SQRT_2PI, Bandwidths, Sample
from .errors import ConvergenceError, InvalidInputError, NoModesError, UndefinedEstimateError

# status codes returned by the compiled engine
OK = 0
NO_SUPPORT = 1
NO_CONVERGENCE = 2
NO_MODES = 3

STATUS_TEXT = {
    OK: "ok",
    NO_SUPPORT: "no kernel support",
    NO_CONVERGENCE: "no start converged",
    NO_MODES: "no local maximum passed the curvature check",
}


@dataclass(frozen=True)
class MeanShiftConfig:
    """Mean-shift settings.

    ``conv_tol`` and ``merge_tol`` are in y-units.  Left as ``None`` they are
    resolved against the y-range of the data (1e-7 and 1e-2 of the range).
    """

    max_iter: int = 2000
    conv_tol: float | None = None
    merge_tol: float | None = None
    n_starts: int = 30
    conv_tol_rel: float = 1e-7
    merge_tol_rel: float = 1e-2

    def __post_init__(self):
        if self.max_iter < 1 or self.n_starts < 1:
            raise InvalidInputError("max_iter and n_starts must be positive")
        for name in ("conv_tol", "merge_tol"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.conv_tol is not None and self.merge_tol is not None and not self.conv_tol < self.merge_tol:
            raise InvalidInputError("conv_tol must be smaller than merge_tol")

    def resolved(self, y_range: float) -> "MeanShiftConfig":
        scale = y_range if y_range > 0 else 1.0
        conv = self.conv_tol if self.conv_tol is not None else self.conv_tol_rel * scale
        merge = self.merge_tol if self.merge_tol is not None else self.merge_tol_rel * scale
        return replace(self, conv_tol=conv, merge_tol=merge)


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Sorted, deduplicated mode locations of p(.|x) at one covariate value."""

    locations: np.ndarray
    at_x: float

    def __post_init__(self):
        loc = np.sort(np.asarray(self.locations, dtype=float).ravel())
        loc.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "at_x", float(self.at_x))

    def __len__(self):
        return self.locations.size

    def __iter__(self):
        return iter(self.locations.tolist())

    def __eq__(self, other):
        if not isinstance(other, ModeSet):
            return NotImplemented
        return self.at_x == other.at_x and np.array_equal(self.locations, other.locations)


def mean_shift_update(sample: Sample, h: Bandwidths, x: float, y: float) -> float:
    """One mean-shift step: kernel-weighted average of the responses."""
    w = np.exp(-0.5 * ((sample.x - x) / h.h1) ** 2 - 0.5 * ((sample.y - y) / h.h2) ** 2)
    den = w.sum() / (2.0 * np.pi)
    if den < MIN_DENOMINATOR:
        raise UndefinedEstimateError(f"no local support for mean shift at (x={x}, y={y})")
    return float(w @ sample.y / w.sum())


def mean_shift_path(sample: Sample, h: Bandwidths, x: float, y0: float, cfg: MeanShiftConfig) -> np.ndarray:
    """Full iterate trajectory from ``y0`` (diagnostic, unoptimised)."""
    cfg = cfg.resolved(sample.y_range)
    path = [float(y0)]
    for _ in range(cfg.max_iter):
        nxt = mean_shift_update(sample, h, x, path[-1])
        path.append(nxt)
        if abs(nxt - path[-2]) < cfg.conv_tol:
            break
    return np.asarray(path)


def start_points(y: np.ndarray, n_starts: int) -> np.ndarray:
    lo, hi = float(np.min(y)), float(np.max(y))
    if n_starts == 1 or lo == hi:
        return np.array([0.5 * (lo + hi)] * (1 if lo == hi else n_starts))
    return np.linspace(lo, hi, n_starts)


@numba.njit(cache=True)
def _shift(y, ys, lw, inv2, conv_tol, max_iter, buf):
    """Mean shift from y on log-scaled weights; returns (converged, y)."""
    m = ys.shape[0]
    for _ in range(max_iter):
        emax = -np.inf
        for j in range(m):
            d = ys[j] - y
            e = lw[j] - d * d * inv2
            buf[j] = e
            if e > emax:
                emax = e
        num = 0.0
        den = 0.0
        cut = emax - 46.0
        for j in range(m):
            if buf[j] > cut:
                w = np.exp(buf[j] - emax)
                num += w * ys[j]
                den += w
        ynew = num / den
        if abs(ynew - y) < conv_tol:
            return True, ynew
        y = ynew
    return False, y


@numba.njit(cache=True)
def _modes_one(x0, excl, X, Y, h1, h2, starts, conv_tol, merge_tol, max_iter, out):
    """Modes of the (leave-``excl``-out) estimate at x0.

    Writes sorted modes into ``out`` and returns (status, count).

    In one dimension the mean-shift map is nondecreasing in y, so iterates
    from ordered starts stay ordered.  When two starts reach the same limit,
    every start between them does too and is not run.
    """
    n = X.shape[0]
    lx = np.empty(n)
    mx = -np.inf
    for j in range(n):
        if j == excl:
            lx[j] = -np.inf
        else:
            t = (X[j] - x0) / h1
            lx[j] = -0.5 * t * t
            if lx[j] > mx:
                mx = lx[j]
    # raw denominator sum_j K1 must not underflow
    if mx == -np.inf or np.exp(mx) / 2.5066282746310002 < 1e-300:
        return 1, 0
    # keep points whose relative x-weight exceeds e^-46
    m = 0
    for j in range(n):
        if lx[j] > mx - 46.0:
            m += 1
    ys = np.empty(m)
    lw = np.empty(m)
    k = 0
    for j in range(n):
        if lx[j] > mx - 46.0:
            ys[k] = Y[j]
            lw[k] = lx[j] - mx
            k += 1
    buf = np.empty(m)
    S = starts.shape[0]
    inv2 = 0.5 / (h2 * h2)
    step = h2 / 10.0
    snap = min(0.5 * merge_tol, 1000.0 * conv_tol)
    lim = np.empty(S)
    conv = np.zeros(S, dtype=np.bool_)
    run = np.zeros(S, dtype=np.bool_)
    conv[0], lim[0] = _shift(starts[0], ys, lw, inv2, conv_tol, max_iter, buf)
    run[0] = True
    if S > 1:
        conv[S - 1], lim[S - 1] = _shift(starts[S - 1], ys, lw, inv2, conv_tol, max_iter, buf)
        run[S - 1] = True
    stack = np.empty((2 * S + 2, 2), dtype=np.int64)
    top = 0
    if S > 2:
        stack[0, 0] = 0
        stack[0, 1] = S - 1
        top = 1
    while top > 0:
        top -= 1
        a = stack[top, 0]
        b = stack[top, 1]
        if b - a <= 1:
            continue
        if conv[a] and conv[b] and abs(lim[b] - lim[a]) <= snap:
            continue
        c = (a + b) // 2
        conv[c], lim[c] = _shift(starts[c], ys, lw, inv2, conv_tol, max_iter, buf)
        run[c] = True
        stack[top, 0] = a
        stack[top, 1] = c
        stack[top + 1, 0] = c
        stack[top + 1, 1] = b
        top += 2
    cand = np.empty(S)
    dens = np.empty(S)
    nconv = 0
    ncand = 0
    for s in range(S):
        if not (run[s] and conv[s]):
            continue
        nconv += 1
        y = lim[s]
        # curvature check: central difference of the y-derivative, common scaling
        emax = -np.inf
        for j in range(m):
            d = ys[j] - y
            e = lw[j] - d * d * inv2
            if e > emax:
                emax = e
        gp = 0.0
        gm = 0.0
        f = 0.0
        for j in range(m):
            u = (ys[j] - y - step) / h2
            gp += np.exp(lw[j] - 0.5 * u * u - emax) * u
            u = (ys[j] - y + step) / h2
            gm += np.exp(lw[j] - 0.5 * u * u - emax) * u
            u = (ys[j] - y) / h2
            f += np.exp(lw[j] - 0.5 * u * u - emax)
        if gp - gm >= 0.0:
            continue
        cand[ncand] = y
        dens[ncand] = f
        ncand += 1
    if nconv == 0:
        return 2, 0
    if ncand == 0:
        return 3, 0
    order = np.argsort(cand[:ncand])
    count = 0
    best = order[0]
    prev = cand[order[0]]
    for r in range(1, ncand):
        idx = order[r]
        if cand[idx] - prev < merge_tol:
            if dens[idx] > dens[best]:
                best = idx
        else:
            out[count] = cand[best]
            count += 1
            best = idx
        prev = cand[idx]
    out[count] = cand[best]
    count += 1
    return 0, count


@numba.njit(cache=True)
def _modes_batch(xq, excl, X, Y, h1, h2, starts, conv_tol, merge_tol, max_iter, out, counts, status):
    for q in range(xq.shape[0]):
        st, c = _modes_one(xq[q], excl[q], X, Y, h1, h2, starts, conv_tol, merge_tol, max_iter, out[q])
        status[q] = st
        counts[q] = c


@dataclass(frozen=True)
class ModeBatch:
    """Raw output of :func:`mode_sets_at`: padded modes plus per-query status."""

    xq: np.ndarray
    modes: np.ndarray
    counts: np.ndarray
    status: np.ndarray

    def locations(self, q: int) -> np.ndarray:
        return self.modes[q, : self.counts[q]]

    @property
    def ok(self) -> np.ndarray:
        return self.status == OK


def mode_sets_at(
    sample: Sample,
    h: Bandwidths,
    xq,
    cfg: MeanShiftConfig,
    exclude=None,
    y_range: float | None = None,
) -> ModeBatch:
    """Estimate mode sets at every query x, optionally leaving one point out per query.

    ``exclude[q]`` is the index of the observation dropped for query q, or -1.
    Tolerances are resolved against ``y_range`` (default: the sample's).
    """
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    if exclude is None:
        exclude = np.full(xq.size, -1, dtype=np.int64)
    exclude = np.asarray(exclude, dtype=np.int64)
    cfg = cfg.resolved(sample.y_range if y_range is None else y_range)
    starts = start_points(sample.y, cfg.n_starts)
    out = np.zeros((xq.size, starts.size))
    counts = np.zeros(xq.size, dtype=np.int64)
    status = np.zeros(xq.size, dtype=np.int64)
    _modes_batch(
        xq, exclude, np.ascontiguousarray(sample.x), np.ascontiguousarray(sample.y),
        h.h1, h.h2, starts, cfg.conv_tol, cfg.merge_tol, cfg.max_iter, out, counts, status,
    )
    return ModeBatch(xq, out, counts, status)


def estimate_modes(sample: Sample, h: Bandwidths, x: float, cfg: MeanShiftConfig | None = None) -> ModeSet:
    """Mode set of the kernel estimate p(.|x) via multi-start mean shift."""
    cfg = cfg or MeanShiftConfig()
    batch = mode_sets_at(sample, h, [x], cfg)
    st = int(batch.status[0])
    if st == NO_SUPPORT:
        raise UndefinedEstimateError(f"no kernel support at x={x}")
    if st == NO_CONVERGENCE:
        raise ConvergenceError(f"no mean-shift start converged at x={x}", partial=ModeSet([], x))
    if st == NO_MODES:
        raise NoModesError(f"no mode passed the curvature check at x={x}")
    return ModeSet(batch.locations(0), x)


def mode_curves(sample: Sample, h: Bandwidths, xs, cfg: MeanShiftConfig | None = None) -> list[ModeSet | None]:
    """Mode sets along a grid of x; failed grid points come back as ``None``."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    if xs.size == 0:
        raise InvalidInputError("xs must be non-empty")
    batch = mode_sets_at(sample, h, xs, cfg or MeanShiftConfig())
    return [ModeSet(batch.locations(q), xs[q]) if batch.status[q] == OK else None for q in range(xs.size)]
