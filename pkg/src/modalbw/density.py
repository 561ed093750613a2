"""Gaussian product-kernel estimator of a conditional density p(y|x).

Both kernels are the standard normal density.  The estimator is the ratio of
a bivariate kernel density to a univariate one, so for every x with a
positive smoothing denominator it integrates to one over y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWindowError, InvalidInputError, UndefinedEstimateError

SQRT_2PI = np.sqrt(2.0 * np.pi)

# Denominators below this are treated as an undefined estimate, not 0/0.
MIN_DENOMINATOR = 1e-300


@dataclass(frozen=True, eq=False)
class Sample:
    """Paired regression observations (x_i, y_i)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        y = np.array(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise InvalidInputError(f"x and y lengths differ: {x.size} vs {y.size}")
        if x.size < 2:
            raise InvalidInputError("a sample needs at least two observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInputError("sample contains non-finite values")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def unchecked(cls, x, y) -> "Sample":
        """Build a sample that may hold a single point (toy/test constructions)."""
        obj = object.__new__(cls)
        x = np.array(x, dtype=float).ravel()
        y = np.array(y, dtype=float).ravel()
        if x.shape != y.shape or x.size == 0:
            raise InvalidInputError("x and y must be non-empty and of equal length")
        object.__setattr__(obj, "x", x)
        object.__setattr__(obj, "y", y)
        return obj

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def y_range(self) -> float:
        return float(self.y.max() - self.y.min())

    def with_y(self, y) -> "Sample":
        return type(self)(self.x, y)

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.y, other.y)

    def __len__(self):
        return self.n


@dataclass(frozen=True, order=True)
class Bandwidths:
    """Smoothing pair: h1 in units of x, h2 in units of y."""

    h1: float
    h2: float

    def __post_init__(self):
        h1, h2 = float(self.h1), float(self.h2)
        if not (np.isfinite(h1) and np.isfinite(h2) and h1 > 0 and h2 > 0):
            raise InvalidInputError(f"bandwidths must be positive and finite, got ({h1}, {h2})")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)

    def as_tuple(self) -> tuple[float, float]:
        return (self.h1, self.h2)


@dataclass(frozen=True)
class WeightWindow:
    """Indicator weight w(x) = 1 on [x_lo, x_hi], 0 elsewhere."""

    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise DegenerateWindowError(f"empty weight window [{self.x_lo}, {self.x_hi}]")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return ((x >= self.x_lo) & (x <= self.x_hi)).astype(float)

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo


def gaussian_kernel(t):
    """Standard normal density."""
    t = np.asarray(t, dtype=float)
    out = np.exp(-0.5 * t * t) / SQRT_2PI
    return out if out.ndim else float(out)


def weight_window(sample: Sample, lo_pct: float = 2.5, hi_pct: float = 97.5) -> WeightWindow:
    """Window between two empirical percentiles of the covariate.

    Percentiles interpolate linearly between order statistics.
    """
    if not 0 <= lo_pct < hi_pct <= 100:
        raise InvalidInputError(f"need 0 <= lo_pct < hi_pct <= 100, got ({lo_pct}, {hi_pct})")
    lo, hi = np.percentile(sample.x, [lo_pct, hi_pct])
    if not lo < hi:
        raise DegenerateWindowError("covariate values give a zero-width weight window")
    return WeightWindow(float(lo), float(hi))


def _x_weights(sample: Sample, h: Bandwidths, x: float) -> np.ndarray:
    kx = gaussian_kernel((sample.x - x) / h.h1)
    if kx.sum() < MIN_DENOMINATOR:
        raise UndefinedEstimateError(f"no kernel support at x={x}: smoothing denominator underflows")
    return kx


def conditional_density(sample: Sample, h: Bandwidths, x: float, y):
    """Kernel estimate of p(y|x); ``y`` may be a scalar or an array."""
    kx = _x_weights(sample, h, x)
    y_arr = np.asarray(y, dtype=float)
    u = (sample.y[:, None] - y_arr.reshape(1, -1)) / h.h2
    dens = kx @ gaussian_kernel(u) / (h.h2 * kx.sum())
    return dens.reshape(y_arr.shape) if y_arr.ndim else float(dens[0])


def conditional_density_dy(sample: Sample, h: Bandwidths, x: float, y):
    """Partial derivative in y of :func:`conditional_density`."""
    kx = _x_weights(sample, h, x)
    y_arr = np.asarray(y, dtype=float)
    u = (sample.y[:, None] - y_arr.reshape(1, -1)) / h.h2
    # d/dy phi((Y - y)/h2)/h2 = phi(u) u / h2^2
    deriv = kx @ (gaussian_kernel(u) * u) / (h.h2**2 * kx.sum())
    return deriv.reshape(y_arr.shape) if y_arr.ndim else float(deriv[0])


def loo_x_weights(x: np.ndarray, h1: float) -> np.ndarray:
    """Row-normalised leave-one-out covariate weights, shape (n, n).

    Row i holds K1((X_j - X_i)/h1) / sum_{k != i} K1((X_k - X_i)/h1) with a
    zero diagonal.  Rows whose denominator underflows are left as zeros and
    reported through the second return value.
    """
    d = (x[None, :] - x[:, None]) / h1
    k = np.exp(-0.5 * d * d)
    np.fill_diagonal(k, 0.0)
    den = k.sum(axis=1) / SQRT_2PI
    bad = den < MIN_DENOMINATOR
    k[~bad] /= k[~bad].sum(axis=1, keepdims=True)
    k[bad] = 0.0
    return k, bad
