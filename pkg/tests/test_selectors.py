import math

import numpy as np
import pytest
from scipy import integrate, optimize

from modalbw.density import Bandwidths, Sample, WeightWindow, conditional_density, weight_window
from modalbw.errors import InfeasibleSearchError, InvalidInputError, UndefinedEstimateError
from modalbw.modes import MeanShiftConfig, estimate_modes
from modalbw.parametric import PolynomialModel
from modalbw.selectors import (
    NormalWorkingModel,
    SearchSpec,
    YGrid,
    _working_model_derivatives,
    bootstrap_density_select,
    cv_density,
    cv_mode,
    cv_mode_terms,
    density_bootstrap_loss,
    fit_normal_working_model,
    imse_approximation,
    minimize_criterion,
    mode_bootstrap_loss,
    reference_bandwidths_from_constants,
    reference_constants,
    reference_rule,
    regression_criterion,
    regression_select,
    select_cv_density,
)
from modalbw.setdist import hausdorff

WIDE = WeightWindow(-1e9, 1e9)


# -- minimiser -----------------------------------------------------------------


def test_quadratic_minimum_found():
    spec = SearchSpec((0.1, 10), (0.1, 10))
    h, v, trace, diag = minimize_criterion(lambda h: (h.h1 - 1) ** 2 + (h.h2 - 2) ** 2, spec)
    cell = math.log(100) / 11 / 2**spec.refine_rounds
    assert abs(math.log(h.h1)) < cell and abs(math.log(h.h2 / 2)) < cell
    assert v <= min(t.value for t in trace)
    assert not diag["on_boundary"]["h1"] and not diag["on_boundary"]["h2"]


def test_constant_criterion_ties_to_smallest():
    h, _, _, _ = minimize_criterion(lambda h: 1.0, SearchSpec((0.1, 10), (0.2, 5)))
    assert (h.h1, h.h2) == pytest.approx((0.1, 0.2))


def test_boundary_minimum_is_flagged():
    h, _, trace, diag = minimize_criterion(lambda h: h.h1 + h.h2, SearchSpec((0.1, 10), (0.1, 10)))
    assert (h.h1, h.h2) == pytest.approx((0.1, 0.1))
    assert diag["on_boundary"] == {"h1": True, "h2": True}
    flagged = [t for t in trace if t.note and "boundary" in t.note]
    assert len(flagged) == 1 and flagged[0].h1 == h.h1


def test_infeasible_points_skipped_and_all_infeasible_raises():
    h, _, trace, diag = minimize_criterion(
        lambda h: math.inf if h.h1 < 1 else (h.h1 - 2) ** 2, SearchSpec((0.1, 10), (1, 1))
    )
    assert h.h1 == pytest.approx(2, rel=0.06)
    assert diag["n_infeasible"] > 0
    with pytest.raises(InfeasibleSearchError):
        minimize_criterion(lambda h: math.nan, SearchSpec((0.1, 10), (0.1, 10)))


def test_fixed_axis_and_spec_validation():
    h, _, trace, _ = minimize_criterion(lambda h: (h.h1 - 3) ** 2, SearchSpec((1, 9), (0.5, 0.5)))
    assert all(t.h2 == 0.5 for t in trace)
    with pytest.raises(InvalidInputError):
        SearchSpec((0, 1), (1, 2))
    with pytest.raises(InvalidInputError):
        SearchSpec((1, 2), (1, 2), grid_points_per_axis=3)


# -- reference rule ------------------------------------------------------------


def test_symmetric_curvature_gives_equal_bandwidths():
    h = reference_bandwidths_from_constants([1.0, 0.3, 2.0, 2.0, 0.5], 400)
    assert h.h1 == pytest.approx(h.h2, rel=1e-14)


def test_closed_form_minimises_surrogate():
    c = [0.8, 0.1, 0.05, 0.3, 0.07]
    n = 700
    h = reference_bandwidths_from_constants(c, n)
    # drop c2 (lower order); minimise the rest numerically
    f = lambda t: imse_approximation(Bandwidths(*np.exp(t)), [c[0], 0.0, *c[2:]], n)
    res = optimize.minimize(f, np.log([h.h1 * 1.3, h.h2 * 0.7]), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 5000})
    assert np.exp(res.x) == pytest.approx([h.h1, h.h2], rel=1e-5)


def test_degenerate_constants_raise():
    with pytest.raises(UndefinedEstimateError):
        reference_bandwidths_from_constants([1, 0, 0.0, 1, 0], 100)


def test_working_model_derivatives_match_finite_differences():
    m = NormalWorkingModel(0.3, 1.2, 0.5, -0.7, 0.9, 0.2)
    x, y = np.array([0.1, 0.8, -0.5]), np.array([0.2, -0.1, 1.4])

    def p(x, y):
        s = m.c + m.d * x
        return np.exp(-0.5 * ((y - m.a - m.b * x) / s) ** 2) / (np.sqrt(2 * np.pi) * s)

    e = 1e-4
    _, score, pv, px, pxx, pyy = _working_model_derivatives(m, x, y)
    assert pv == pytest.approx(p(x, y), rel=1e-14)
    assert px == pytest.approx((p(x + e, y) - p(x - e, y)) / (2 * e), rel=1e-6)
    assert pxx == pytest.approx((p(x + e, y) - 2 * p(x, y) + p(x - e, y)) / e**2, rel=1e-5)
    assert pyy == pytest.approx((p(x, y + e) - 2 * p(x, y) + p(x, y - e)) / e**2, rel=1e-5)
    assert score == pytest.approx(-(x - 0.3) / 1.44)


def test_c4_closed_form_constant_scale():
    m = NormalWorkingModel(0.0, 1.0, 0.2, 0.5, 0.8, 0.0)
    win = WeightWindow(-1.5, 2.0)
    c = reference_constants(m, win)
    fx_mass = 0.5 * (math.erf(2.0 / math.sqrt(2)) - math.erf(-1.5 / math.sqrt(2)))
    # int (p_yy)^2 dy = 3 / (8 sqrt(pi) s^5) for a normal with scale s
    assert c[3] == pytest.approx(fx_mass / 4 * 3 / (8 * math.sqrt(math.pi) * 0.8**5), rel=1e-10)
    assert c[0] == pytest.approx(3.5 / (4 * math.pi), rel=1e-14)
    assert c[1] == pytest.approx(3.5 / (2 * math.sqrt(math.pi)) / (2 * math.sqrt(math.pi) * 0.8), rel=1e-10)


def test_reference_rule_matches_surrogate_minimiser_on_normal_data():
    rng = np.random.default_rng(2024)
    n = 5000
    x = rng.normal(size=n)
    y = 1 + 0.5 * x + 0.8 * rng.normal(size=n)
    s = Sample(x, y)
    win = weight_window(s)
    truth = NormalWorkingModel(0.0, 1.0, 1.0, 0.5, 0.8, 0.0)
    c = reference_constants(truth, win)
    f = lambda t: imse_approximation(Bandwidths(*np.exp(t)), c, n)
    res = optimize.minimize(f, np.log([0.3, 0.3]), method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-14})
    h = reference_rule(s, win)
    assert h.h1 == pytest.approx(np.exp(res.x[0]), rel=0.15)
    assert h.h2 == pytest.approx(np.exp(res.x[1]), rel=0.15)


def test_working_model_mle_recovers_linear_scale():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 4, 4000)
    y = 2 - x + (0.5 + 0.25 * x) * rng.normal(size=x.size)
    m = fit_normal_working_model(Sample(x, y))
    assert (m.a, m.b, m.c, m.d) == pytest.approx((2, -1, 0.5, 0.25), abs=0.06)


# -- regression criterion ------------------------------------------------------


def test_regression_two_equal_x_by_hand():
    s = Sample([0.0, 0.0], [0.0, 1.0])
    h = Bandwidths(0.7, 0.5)
    grid = YGrid(np.array([0.0, 1.0]))
    k = lambda t: math.exp(-0.5 * (t / 0.5) ** 2) / (math.sqrt(2 * math.pi) * 0.5)
    total = 0.0
    for yi in (0.0, 1.0):
        for yk in (0.0, 1.0):
            phat = 0.5 * (k(0.0 - yk) + k(1.0 - yk))
            total += (phat - k(yi - yk)) ** 2 * 3.0  # u = 1/2 so the penalty is 3
    assert regression_criterion(s, h, WIDE, grid) == pytest.approx(1.0 / 2 * total, rel=1e-13)


def test_regression_penalty_singularity_is_infeasible():
    s = Sample([0.0, 10.0, 20.0], [0.0, 1.0, 2.0])
    assert regression_criterion(s, Bandwidths(0.01, 1.0), WIDE, YGrid.over(s.y)) == math.inf


def test_regression_select_contract(rng):
    s = Sample(rng.normal(size=150), rng.normal(size=150))
    win = weight_window(s)
    res = regression_select(s, win)
    assert res.h.h2 == pytest.approx(reference_rule(s, win).h2)
    assert all(res.criterion_value <= t.value for t in res.trace)
    again = regression_criterion(s, res.h, win, YGrid.over(s.y))
    assert again == pytest.approx(res.criterion_value, abs=1e-10, rel=0)


# -- CV for the density --------------------------------------------------------


def test_cv_density_two_point_value():
    v = cv_density(Sample([0.0, 0.0], [0.0, 0.0]), Bandwidths(1, 1), WIDE)
    assert v == pytest.approx(1 / (2 * math.sqrt(math.pi)) - 2 / math.sqrt(2 * math.pi), abs=1e-12)
    assert v == pytest.approx(-0.51579, abs=5e-6)


def _cv_density_quadrature(s, h, win):
    total = 0.0
    for i in range(s.n):
        if not win(s.x[i]):
            continue
        keep = np.arange(s.n) != i
        red = Sample.unchecked(s.x[keep], s.y[keep])
        f = lambda y: conditional_density(red, h, s.x[i], y) ** 2
        lo, hi = red.y.min() - 15 * h.h2, red.y.max() + 15 * h.h2
        sq, _ = integrate.quad(f, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=500, points=sorted(set(red.y)))
        total += sq - 2 * conditional_density(red, h, s.x[i], s.y[i])
    return total / s.n


def test_cv_density_closed_form_vs_quadrature():
    rng = np.random.default_rng(99)
    for _ in range(50):
        n = int(rng.integers(3, 9))
        s = Sample(rng.normal(size=n), rng.normal(size=n) * 2)
        h = Bandwidths(rng.uniform(0.3, 2), rng.uniform(0.2, 1.5))
        win = WeightWindow(-1.0, 1.0)
        assert cv_density(s, h, win) == pytest.approx(_cv_density_quadrature(s, h, win), abs=1e-8)


def test_cv_density_translation_invariance(rng):
    s = Sample(rng.normal(size=40), rng.normal(size=40))
    h = Bandwidths(0.6, 0.4)
    win = WeightWindow(-1.0, 1.2)
    v = cv_density(s, h, win)
    assert cv_density(Sample(s.x, s.y + 7.5), h, win) == pytest.approx(v, rel=1e-12)
    assert cv_density(Sample(s.x + 3.0, s.y), h, WeightWindow(2.0, 4.2)) == pytest.approx(v, rel=1e-9)


def test_cv_density_undefined_loo_names_index():
    s = Sample([0.0, 0.1, 50.0], [0.0, 1.0, 2.0])
    with pytest.raises(UndefinedEstimateError) as err:
        cv_density(s, Bandwidths(0.05, 1.0), WIDE)
    assert err.value.index == 2


def test_select_cv_density_contract(rng):
    s = Sample(rng.normal(size=80), rng.normal(size=80))
    win = weight_window(s)
    res = select_cv_density(s, win, SearchSpec.default_for(s, grid_points_per_axis=6, refine_rounds=1))
    assert all(res.criterion_value <= t.value for t in res.trace)
    assert cv_density(s, res.h, win) == pytest.approx(res.criterion_value, abs=1e-10, rel=0)
    lo1, hi1 = SearchSpec.default_for(s).h1_range
    assert lo1 <= res.h.h1 <= hi1


# -- CV for modes --------------------------------------------------------------


def test_cv_mode_zero_when_twins_predict_each_other():
    s = Sample([0.0, 0.0, 10.0, 10.0], [1.0, 1.0, 5.0, 5.0])
    assert cv_mode(s, Bandwidths(0.5, 0.3), WIDE) == 0.0


def test_cv_mode_count_factor():
    h = Bandwidths(1.0, 0.1)
    two = Sample([0.0] * 5, [0.0, -1.0, -1.0, 1.0, 1.0])
    one = Sample([0.0] * 5, [0.0, 1.0, 1.0, 1.0, 1.0])
    t2 = cv_mode_terms(two, h, WIDE)[0]
    t1 = cv_mode_terms(one, h, WIDE)[0]
    assert t1 == pytest.approx(1.0, abs=1e-6)
    assert t2 == pytest.approx(4 * t1, abs=1e-5)


def test_cv_mode_wide_bandwidths_give_loo_means():
    y = np.array([0.3, -1.2, 2.0, 0.7, 1.1])
    s = Sample([0.0, 0.1, 0.2, 0.3, 0.4], y)
    v = cv_mode(s, Bandwidths(1e3, 1e3), WIDE)
    loo = (y.sum() - y) / 4
    assert v == pytest.approx(np.mean((y - loo) ** 2), rel=1e-6)


def test_cv_mode_permutation_invariant(rng):
    s = Sample(rng.normal(size=60), rng.normal(size=60))
    h = Bandwidths(0.5, 0.4)
    win = WeightWindow(-1.5, 1.5)
    p = rng.permutation(60)
    assert cv_mode(Sample(s.x[p], s.y[p]), h, win) == pytest.approx(cv_mode(s, h, win), rel=1e-9)


# -- bootstrap criteria --------------------------------------------------------


def test_density_bootstrap_sharpens_toward_degenerate_pilot():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 100)
    pilot = PolynomialModel(0, (2.0,), 0.01)
    s = Sample(x, pilot.mean(x) + 0.5 * rng.normal(size=100))
    grid = YGrid(np.linspace(1.0, 3.0, 101))  # 2.0 is a grid point
    win = WeightWindow(-1, 1)
    ref = pilot.density(x[:, None], grid.points[None, :])
    boot = [pilot.mean(x) + 0.01 * rng.normal(size=100)]
    losses = [density_bootstrap_loss(s, Bandwidths(0.5, h2), win, grid, boot, ref) for h2 in (1.0, 0.5, 0.2, 0.1, 0.05)]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_bootstrap_density_is_deterministic(rng):
    s = Sample(rng.normal(size=60), rng.normal(size=60))
    win = weight_window(s)
    spec = SearchSpec.default_for(s, grid_points_per_axis=5, refine_rounds=1)
    a = bootstrap_density_select(s, win, L=3, spec=spec, seed=11)
    b = bootstrap_density_select(s, win, L=3, spec=spec, seed=11)
    assert a.to_json() == b.to_json()
    assert all(a.criterion_value <= t.value for t in a.trace)


def test_mode_bootstrap_loss_matches_brute_force():
    rng = np.random.default_rng(4)
    x = rng.normal(size=10)
    win = WeightWindow(-1.0, 1.0)
    boots = [x + rng.normal(size=10), x - 2 + rng.normal(size=10)]
    idx = np.nonzero(win(x))[0]
    proxy = [np.array([x[i], x[i] - 2]) for i in idx]
    h = Bandwidths(0.6, 0.5)
    cfg = MeanShiftConfig()
    yr = 4.0
    value, n_empty = mode_bootstrap_loss(x, h, win, boots, proxy, cfg, yr)
    brute = 0.0
    for yb in boots:
        s = Sample(x, yb)
        c = cfg.resolved(yr)
        for q, i in enumerate(idx):
            brute += hausdorff(estimate_modes(s, h, x[i], c), proxy[q]) ** 2 / 10
    assert n_empty == 0
    assert value == pytest.approx(brute / 2, rel=1e-12)


def test_mode_bootstrap_zero_when_proxy_equals_estimate():
    rng = np.random.default_rng(6)
    x = rng.normal(size=12)
    win = WeightWindow(-5, 5)
    yb = x + 0.3 * rng.normal(size=12)
    h = Bandwidths(0.8, 0.4)
    s = Sample(x, yb)
    cfg = MeanShiftConfig()
    yr = s.y_range
    proxy = [estimate_modes(s, h, xi, cfg.resolved(yr)).locations for xi in x]
    assert mode_bootstrap_loss(x, h, win, [yb], proxy, cfg, yr) == (0.0, 0)
