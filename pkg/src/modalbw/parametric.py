"""Parametric pilot models for the bootstrap bandwidth selectors.

Two pilots are provided:

* a Gaussian polynomial regression whose degree is chosen by AIC, and
* a K-component Gaussian mixture of regressions whose component means are
  B-spline expansions in x, fitted by EM with (K, J) chosen by AIC.

Both can simulate new responses at fixed covariates from a seeded stream and
serialise to plain JSON-compatible dictionaries.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .density import SQRT_2PI, Sample
from .errors import InvalidInputError, ModelFitError, NoModesError
from .modes import MeanShiftConfig, ModeSet

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# polynomial pilot
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialModel:
    degree: int
    coefficients: tuple[float, ...]  # beta_0 .. beta_k, monomial basis
    sigma: float
    aic: float = float("nan")

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError("sigma must be positive")
        if len(self.coefficients) != self.degree + 1:
            raise InvalidInputError("need degree + 1 coefficients")

    def mean(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coefficients)

    def density(self, x, y):
        """p*(y|x), broadcasting x against y."""
        z = (np.asarray(y, dtype=float) - self.mean(x)) / self.sigma
        return np.exp(-0.5 * z * z) / (SQRT_2PI * self.sigma)

    def to_dict(self) -> dict:
        return {
            "kind": "polynomial",
            "degree": self.degree,
            "coefficients": list(self.coefficients),
            "sigma": self.sigma,
            "aic": self.aic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolynomialModel":
        return cls(int(d["degree"]), tuple(float(c) for c in d["coefficients"]), float(d["sigma"]), float(d["aic"]))


def _sigma_floor(y: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(y))))


def polynomial_aic(x: np.ndarray, y: np.ndarray, degree: int) -> tuple[float, np.ndarray, float]:
    """(AIC, monomial coefficients, MLE sigma) of a Gaussian degree-k fit."""
    n = x.size
    poly = np.polynomial.Polynomial.fit(x, y, degree)
    coef = poly.convert().coef
    coef = np.pad(coef, (0, degree + 1 - coef.size))
    resid = y - poly(x)
    sigma = max(float(np.sqrt(np.mean(resid**2))), _sigma_floor(y))
    loglik = -0.5 * n * (np.log(2 * np.pi * sigma**2) + np.mean(resid**2) / sigma**2)
    return 2 * (degree + 2) - 2 * loglik, coef, sigma


def fit_polynomial_aic(sample: Sample, max_degree: int = 5) -> PolynomialModel:
    """Gaussian polynomial regression with AIC-selected degree in 0..max_degree."""
    if max_degree < 0:
        raise InvalidInputError("max_degree must be non-negative")
    if sample.n <= max_degree + 2:
        raise InvalidInputError(f"need n > max_degree + 2, got n={sample.n}, max_degree={max_degree}")
    if np.unique(sample.x).size <= max_degree:
        raise ModelFitError("rank-deficient polynomial design: too few distinct x values")
    best = None
    for k in range(max_degree + 1):
        aic, coef, sigma = polynomial_aic(sample.x, sample.y, k)
        if best is None or aic < best[0]:
            best = (aic, k, coef, sigma)
    aic, k, coef, sigma = best
    return PolynomialModel(k, tuple(float(c) for c in coef), sigma, float(aic))


def simulate_polynomial(model: PolynomialModel, x, rng_seed) -> np.ndarray:
    """Responses poly(x) + sigma * z with z from a seeded standard normal stream."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(rng_seed)
    return model.mean(x) + model.sigma * rng.standard_normal(x.shape)


# --------------------------------------------------------------------------
# B-splines
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """B-spline basis on a clamped knot vector.

    ``knots`` is the full knot vector (boundary knots repeated degree + 1
    times); the basis has ``len(knots) - degree - 1`` functions.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        if self.degree < 0:
            raise InvalidInputError("degree must be non-negative")
        if t.size < self.degree + 2 or np.any(np.diff(t) < 0):
            raise InvalidInputError("knots must be non-decreasing with at least degree + 2 entries")
        if not t[self.degree] < t[-self.degree - 1]:
            raise InvalidInputError("knot span is empty")
        object.__setattr__(self, "knots", t)

    @classmethod
    def uniform(cls, lo: float, hi: float, n_functions: int, degree: int = 3) -> "BSplineBasis":
        """Clamped basis on [lo, hi] with equally spaced interior knots."""
        degree = min(degree, n_functions - 1)
        n_interior = n_functions - degree - 1
        if n_interior < 0:
            raise InvalidInputError("need at least degree + 1 basis functions")
        inner = np.linspace(lo, hi, n_interior + 2)
        knots = np.concatenate([[lo] * degree, inner, [hi] * degree])
        return cls(degree, knots)

    @property
    def J(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])

    def design(self, x) -> np.ndarray:
        """Basis values, shape (len(x), J), by the Cox-de Boor recursion."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = self.span
        if np.any(x < lo) or np.any(x > hi):
            raise InvalidInputError(f"x outside the knot span [{lo}, {hi}]")
        t, k = self.knots, self.degree
        B = ((t[:-1] <= x[:, None]) & (x[:, None] < t[1:])).astype(float)
        # right end of the span belongs to the last non-empty interval
        last = np.nonzero(t[:-1] < t[1:])[0][-1]
        B[x == hi, :] = 0.0
        B[x == hi, last] = 1.0
        for d in range(1, k + 1):
            left_den = t[d : d + B.shape[1] - 1] - t[: B.shape[1] - 1]
            right_den = t[d + 1 : d + B.shape[1]] - t[1 : B.shape[1]]
            with np.errstate(divide="ignore", invalid="ignore"):
                left = np.where(left_den > 0, (x[:, None] - t[: B.shape[1] - 1]) / left_den, 0.0)
                right = np.where(right_den > 0, (t[d + 1 : d + B.shape[1]] - x[:, None]) / right_den, 0.0)
            B = left * B[:, :-1] + right * B[:, 1:]
        return B

    def to_dict(self) -> dict:
        return {"degree": self.degree, "knots": self.knots.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BSplineBasis":
        return cls(int(d["degree"]), np.asarray(d["knots"], dtype=float))


def bspline_basis_eval(basis: BSplineBasis, x: float) -> np.ndarray:
    """Values of every basis function at a single x."""
    return basis.design([x])[0]


# --------------------------------------------------------------------------
# mixture of B-spline regressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EMConfig:
    restarts: int = 5
    tol: float = 1e-8
    max_iter: int = 500
    sigma_floor_rel: float = 1e-4
    seed: int = 0
    degree: int = 3

    def __post_init__(self):
        if self.restarts < 1 or self.max_iter < 1 or not self.tol > 0:
            raise InvalidInputError("invalid EM configuration")


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Y | X=x ~ sum_k pi_k N(B(x) beta_k, sigma_k^2) with B a B-spline basis.

    ``J`` counts the non-constant regressors, so each component has J + 1
    coefficients and the basis has J + 1 functions (their span contains the
    intercept).
    """

    weights: np.ndarray
    coeffs: np.ndarray
    sigmas: np.ndarray
    basis: BSplineBasis
    y_range: float
    loglik: float = float("nan")
    aic: float = float("nan")
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        s = np.asarray(self.sigmas, dtype=float)
        if abs(w.sum() - 1.0) > 1e-10 or np.any(w <= 0):
            raise InvalidInputError("mixture weights must be positive and sum to one")
        if np.any(s <= 0):
            raise InvalidInputError("component scales must be positive")
        if c.shape != (w.size, self.basis.J) or s.size != w.size:
            raise InvalidInputError("inconsistent mixture parameter shapes")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "sigmas", s)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def J(self) -> int:
        return self.basis.J - 1

    @property
    def n_params(self) -> int:
        return self.K * (self.J + 2) + self.K - 1

    def component_means(self, x) -> np.ndarray:
        """Shape (len(x), K)."""
        return self.basis.design(x) @ self.coeffs.T

    def density(self, x, y):
        """Mixture density at paired (x, y) arrays."""
        mu = self.component_means(np.atleast_1d(x))
        z = (np.atleast_1d(np.asarray(y, dtype=float))[:, None] - mu) / self.sigmas
        return (np.exp(-0.5 * z * z) / (SQRT_2PI * self.sigmas)) @ self.weights

    def to_dict(self) -> dict:
        return {
            "kind": "bspline_mixture",
            "weights": self.weights.tolist(),
            "coeffs": self.coeffs.tolist(),
            "sigmas": self.sigmas.tolist(),
            "basis": self.basis.to_dict(),
            "y_range": self.y_range,
            "loglik": self.loglik,
            "aic": self.aic,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureModel":
        return cls(
            np.asarray(d["weights"]), np.asarray(d["coeffs"]), np.asarray(d["sigmas"]),
            BSplineBasis.from_dict(d["basis"]), float(d["y_range"]), float(d["loglik"]), float(d["aic"]),
        )


def _component_loglik(y, mu, sigmas):
    z = (y[:, None] - mu) / sigmas
    return -0.5 * z * z - np.log(SQRT_2PI * sigmas)


def _initial_responsibilities(y, B, K, restart, rng):
    n = y.size
    if K == 1:
        return np.ones((n, 1))
    if restart == 1:
        score = y
    else:
        beta, *_ = np.linalg.lstsq(B, y, rcond=None)
        score = y - B @ beta
    if restart <= 1:
        cuts = np.quantile(score, np.arange(1, K) / K)
    else:
        cuts = np.quantile(score, np.sort(rng.uniform(0.05, 0.95, K - 1)))
    labels = np.searchsorted(cuts, score)
    R = np.full((n, K), 0.05 / K)
    R[np.arange(n), labels] += 0.95
    if restart >= 2:
        R *= rng.uniform(0.5, 1.5, R.shape)
    return R / R.sum(axis=1, keepdims=True)


def _em(y, B, K, restart, rng, cfg: EMConfig, sigma_floor):
    """One EM run; returns (weights, coeffs, sigmas, loglik_trace) or None if degenerate."""
    n, p = B.shape
    R = _initial_responsibilities(y, B, K, restart, rng)
    trace = []
    coeffs = np.zeros((K, p))
    sigmas = np.ones(K)
    weights = np.full(K, 1.0 / K)
    for it in range(cfg.max_iter):
        nk = R.sum(axis=0)
        if np.any(nk < p + 1):
            return None
        weights = nk / n
        for k in range(K):
            sw = np.sqrt(R[:, k])
            coeffs[k], *_ = np.linalg.lstsq(B * sw[:, None], y * sw, rcond=None)
            r = y - B @ coeffs[k]
            sigmas[k] = max(np.sqrt(R[:, k] @ (r * r) / nk[k]), sigma_floor)
        logp = _component_loglik(y, B @ coeffs.T, sigmas) + np.log(weights)
        lse = logsumexp(logp, axis=1)
        ll = float(lse.sum())
        if not np.isfinite(ll):
            return None
        trace.append(ll)
        R = np.exp(logp - lse[:, None])
        if it > 0 and ll - trace[-2] < cfg.tol * max(1.0, abs(ll)):
            break
    return weights.copy(), coeffs.copy(), sigmas.copy(), trace


def fit_mixture_em(sample: Sample, K: int, J: int, cfg: EMConfig | None = None) -> MixtureModel:
    """Best-of-restarts EM fit for a fixed number of components and basis size."""
    cfg = cfg or EMConfig()
    lo, hi = float(sample.x.min()), float(sample.x.max())
    basis = BSplineBasis.uniform(lo, hi, J + 1, cfg.degree)
    B = basis.design(sample.x)
    y_range = sample.y_range
    sigma_floor = cfg.sigma_floor_rel * (y_range if y_range > 0 else 1.0)
    best = None
    for r in range(cfg.restarts if K > 1 else 1):
        rng = np.random.default_rng([cfg.seed, K, J, r])
        fit = _em(sample.y, B, K, r, rng, cfg, sigma_floor)
        if fit is None:
            log.debug("EM restart %d degenerate for K=%d J=%d", r, K, J)
            continue
        if best is None or fit[3][-1] > best[3][-1]:
            best = fit
    if best is None:
        raise ModelFitError(f"every EM restart degenerated for K={K}, J={J}")
    w, c, s, trace = best
    order = np.argsort(c @ basis.design([(lo + hi) / 2])[0])[::-1]
    ll = trace[-1]
    n_params = K * (J + 2) + K - 1
    return MixtureModel(w[order] / w.sum(), c[order], s[order], basis, y_range, ll, 2 * n_params - 2 * ll, tuple(trace))


def fit_mixture_bspline(
    sample: Sample,
    k_candidates=range(1, 6),
    j_candidates=range(3, 8),
    em_cfg: EMConfig | None = None,
) -> MixtureModel:
    """AIC-best mixture of B-spline regressions over the (K, J) candidate grid.

    Candidates with fewer than 5 K (J + 1) observations are skipped.
    """
    ks, js = sorted(set(k_candidates)), sorted(set(j_candidates))
    if not ks or not js:
        raise InvalidInputError("empty candidate set for K or J")
    best = None
    for K, J in itertools.product(ks, js):
        if sample.n <= 5 * K * (J + 1):
            continue
        try:
            m = fit_mixture_em(sample, K, J, em_cfg)
        except ModelFitError:
            continue
        if best is None or (m.aic, m.K, m.J) < (best.aic, best.K, best.J):
            best = m
    if best is None:
        raise ModelFitError("no feasible (K, J) mixture candidate could be fitted")
    return best


def simulate_mixture(model: MixtureModel, x, rng_seed) -> np.ndarray:
    """Draw a component per x from the weights, then a normal response."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(rng_seed)
    u = rng.random(x.size)
    comp = np.minimum(np.searchsorted(np.cumsum(model.weights), u, side="right"), model.K - 1)
    mu = model.component_means(x)[np.arange(x.size), comp]
    return mu + model.sigmas[comp] * rng.standard_normal(x.size)


def gaussian_mixture_modes(weights, means, sds, merge_tol: float) -> np.ndarray:
    """Local maxima of a univariate Gaussian mixture by grid scan plus Newton.

    The grid step is at most min(sd)/50 and never coarser than 2e4 points
    over the scanned interval.
    """
    w, m, s = (np.asarray(a, dtype=float).ravel() for a in (weights, means, sds))

    def derivs(y):
        z = (y[:, None] - m) / s
        f = np.exp(-0.5 * z * z) / (SQRT_2PI * s) * w
        return f.sum(axis=1), (f * (-z / s)).sum(axis=1), (f * (z * z - 1) / s**2).sum(axis=1)

    lo, hi = float(np.min(m - 5 * s)), float(np.max(m + 5 * s))
    npts = int(min(max((hi - lo) / (s.min() / 50), 2001), 200001))
    grid = np.linspace(lo, hi, npts)
    f, _, _ = derivs(grid)
    peak = np.nonzero((f[1:-1] > f[:-2]) & (f[1:-1] >= f[2:]))[0] + 1
    found = []
    for y in grid[peak]:
        for _ in range(100):
            _, d1, d2 = derivs(np.array([y]))
            if d2[0] >= 0:
                break
            step = d1[0] / d2[0]
            y -= step
            if abs(step) < 1e-13 * max(1.0, abs(y)):
                break
        _, d1, d2 = derivs(np.array([y]))
        if d2[0] < 0:
            found.append(y)
    if not found:
        return np.array([])
    found = np.sort(found)
    keep = [found[0]]
    for y in found[1:]:
        if y - keep[-1] >= merge_tol:
            keep.append(y)
    return np.asarray(keep)


def mixture_conditional_modes(
    model: MixtureModel, x: float, cfg: MeanShiftConfig | None = None
) -> ModeSet:
    """Modes in y of the fitted mixture density at covariate value x."""
    cfg = (cfg or MeanShiftConfig()).resolved(model.y_range)
    means = model.component_means([x])[0]
    modes = gaussian_mixture_modes(model.weights, means, model.sigmas, cfg.merge_tol)
    if modes.size == 0:
        raise NoModesError(f"mixture density has no local maximum at x={x}")
    return ModeSet(modes, x)
