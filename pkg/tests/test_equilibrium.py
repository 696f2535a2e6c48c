from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossfv.grid import Field, build_uniform_grid_1d
from crossfv.model import ScalarModelParams, TheoryParams
from crossfv.scheme import State, evolve, step, suggest_dt
from crossfv.equilibrium import (
    StationaryNotConverged,
    compute_stationary,
    default_fit_window,
    fit_decay_rate,
    l2_distance,
    theory_params,
    theory_report,
    verify_decay_bound,
)

from oracles import discrete_zero_flux_profile, gibbs_cell_averages

G = build_uniform_grid_1d(-5, 5, 10)


def well(x):
    return 0.5 * x * x


# distances


def test_l2_distance_examples(rng):
    a = Field(rng.normal(size=10), G)
    assert l2_distance(a, a) == 0.0
    assert l2_distance(a.with_values(a.values + 0.3), a) == pytest.approx(0.3 * math.sqrt(10), rel=1e-14)
    g8 = build_uniform_grid_1d(0, 2, 8)
    x, y = rng.normal(size=8), rng.normal(size=8)
    direct = math.sqrt(sum(0.25 * (p - q) ** 2 for p, q in zip(x, y)))
    assert l2_distance(Field(x, g8), Field(y, g8)) == pytest.approx(direct, rel=1e-14)
    with pytest.raises(ValueError):
        l2_distance(Field(x, g8), a)


# decay fits


def test_fit_exact_exponentials():
    t = np.linspace(0, 5, 60)
    f = fit_decay_rate(t, np.exp(-2 * t), window=(0, 5))
    assert f.slope == pytest.approx(-2.0, abs=1e-10)
    assert f.residual < 1e-12
    f = fit_decay_rate(t, 3 * np.exp(-0.5 * t), window=(0, 5))
    assert f.slope == pytest.approx(-0.5, rel=1e-8)
    assert f.intercept == pytest.approx(math.log(3), rel=1e-8)
    assert f.n_samples == 60 and f.fit_window == (0.0, 5.0)


@given(st.floats(0.05, 20), st.floats(-5, 5))
def test_fit_recovers_any_rate(rate, log_c):
    t = np.linspace(0, 1, 40)
    f = fit_decay_rate(t, np.exp(log_c - rate * t), window=(0, 1))
    assert f.slope == pytest.approx(-rate, rel=1e-8)


def test_fit_window_default_and_floor():
    t = np.linspace(0, 10, 101)
    d = np.exp(-5 * t)
    ta, tb = default_fit_window(t, d)
    assert ta == pytest.approx(1.0)
    assert tb == pytest.approx(4.6)  # last t with e^{-5t} > 1e-10
    d2 = d.copy()
    d2[60:] = 0.0
    f = fit_decay_rate(t, d2, window=(0, 10))
    assert f.fit_window[1] == pytest.approx(5.9)
    assert f.slope == pytest.approx(-5, rel=1e-8)
    with pytest.raises(ValueError):
        fit_decay_rate(t[:5], d[:5], window=(0, 10))
    with pytest.raises(ValueError):
        fit_decay_rate(t, d[:-1])


# stationary states


def test_stationary_pure_diffusion_is_uniform():
    p = ScalarModelParams.build(G)
    r = compute_stationary(p, G, 2.0, tol=1e-11)
    np.testing.assert_allclose(r.values, 0.2, rtol=1e-12)


def test_stationary_gibbs_matches_quadrature_oracle():
    g = build_uniform_grid_1d(-5, 5, 100)
    p = ScalarModelParams.build(g, V=well)
    r = compute_stationary(p, g, 1.0, tol=1e-11)
    ref = np.array(gibbs_cell_averages(well, list(g.x_faces)))
    # first-order agreement with the continuous Gibbs state; the separately
    # upwinded potential term gives a constant close to 1.5 here
    err = np.sum(g.dx * np.abs(r.values - ref))
    assert err <= 2 * 0.1 * ref.max()
    assert r.mass() == pytest.approx(1.0, rel=1e-12)
    # and close agreement with the exact discrete zero-flux profile
    disc = np.array(discrete_zero_flux_profile(well(g.x_centers), 0.1))
    assert np.abs(r.values - disc).max() <= 1e-5 * disc.max()


def test_stationary_is_a_fixed_point():
    g = build_uniform_grid_1d(-5, 5, 100)
    p = ScalarModelParams.build(
        g, 0.1, 0.1, 0.1, b=lambda x: np.exp(-x * x / 0.02) / math.sqrt(0.02 * math.pi), V=well
    )
    tol = 1e-11
    r = compute_stationary(p, g, 1.0, tol=tol)
    s = State.initial(r)
    dt = suggest_dt(s, p)
    moved = l2_distance(step(s, dt, p).fields[0], r)
    assert moved < 2 * tol * dt


def test_stationary_non_convergence_reports_residual():
    p = ScalarModelParams.build(G, V=well)
    with pytest.raises(StationaryNotConverged) as e:
        compute_stationary(p, G, 1.0, tol=1e-14, t_max=0.05)
    assert e.value.residual > 1e-14
    assert e.value.state.t >= 0.05
    with pytest.raises(ValueError):
        compute_stationary(p, G, 1.0, tol=0)


def test_distance_decreases_after_transient():
    g = build_uniform_grid_1d(-5, 5, 80)
    p = ScalarModelParams.build(g, 0.1, 0.0, 0.1, b=lambda x: np.exp(-x * x), V=well)
    rstar = compute_stationary(p, g, 1.0)
    x = g.x_centers
    r0 = np.exp(-((x + 3) ** 2)) + np.exp(-((x - 3) ** 2))
    r0 *= 1 / np.sum(r0 * g.dx)
    dists = []
    evolve(State.initial(Field(r0, g)), p, 6.0, callback=lambda s, f: dists.append(l2_distance(s.fields[0], rstar)))
    d = np.array(dists)
    start = np.argmax(d < 0.5 * d[0])
    assert np.all(np.diff(d[start:]) <= 1e-15)


# theory constants


def _tp(**kw):
    base = dict(lam=1.0, Lam=1.0, C_P=10 / math.pi, V_inf_norm=0.0, grad_V_inf_norm=0.0, V_l=0.0, V_u=0.0, M=1.0)
    base.update(kw)
    return TheoryParams(**base)


def test_theory_report_examples():
    p = ScalarModelParams.build(G, 0.1)
    assert theory_params(p, 1.0).C_P == pytest.approx(3.18310, abs=1e-5)
    rep = theory_report(_tp(Gamma_M=1.0), p)
    assert rep.delta_threshold_thm31 == pytest.approx(0.5, rel=1e-15)
    assert rep.lambda_over_2CP2 == pytest.approx(math.pi**2 / 200, rel=1e-14)
    assert rep.lambda_over_2CP2 == pytest.approx(0.049348, abs=1e-6)
    assert rep.rate_scalar == rep.lambda_over_2CP2
    assert rep.general_applicable and rep.general_hypotheses_met
    rep = theory_report(_tp(V_l=-1.0, V_u=1.0, V_inf_norm=1.0), p)
    assert rep.prefactor_scalar == pytest.approx(20.0855, abs=1e-4)
    assert rep.prefactor_general == pytest.approx(math.exp(3), rel=1e-15)


def test_theory_report_inapplicable_branch():
    p = ScalarModelParams.build(G, 0.1)
    rep = theory_report(_tp(grad_V_inf_norm=1.0, Gamma_M=1.0), p)
    assert not rep.general_applicable and not rep.general_hypotheses_met
    assert math.isnan(rep.delta_threshold_thm31)
    assert math.isnan(rep.K_delta) and not rep.K_condition_met
    d = rep.to_dict()
    assert d["scalar_hypotheses_met"] is False


def test_theory_report_with_stationary_state():
    g = build_uniform_grid_1d(-5, 5, 100)
    p = ScalarModelParams.build(g, 0.1, 0.1, 0.1, b=lambda x: 0.1 + 0 * x)
    r = compute_stationary(p, g, 1.0)
    tp = theory_params(p, 0.2, stationary=r)
    assert tp.Gamma_M >= 0 and tp.V_l == tp.V_u == 0
    rep = theory_report(tp, p, stationary=r, parabolic_norm=1.0)
    # w* = r* is uniform and V = 0: K1 reduces to C_P sup|grad b| = 0, K2 = 0
    assert rep.K1 == pytest.approx(0.0, abs=1e-10)
    assert rep.K2 == 0.0
    assert rep.K_condition_met


# bound verification


def test_verify_decay_bound_cases():
    t = np.linspace(0, 10, 50)
    assert verify_decay_bound(t, np.zeros(50), 1.0, 0.5).ok
    fast = verify_decay_bound(t, np.exp(-1.4 * t), 1.0, 0.049348)
    # tightest pair: neighbouring samples
    assert fast.ok and fast.margin == pytest.approx((1.4 - 0.049348) * 10 / 49, rel=1e-12)
    assert verify_decay_bound(t, np.exp(-1.4 * t), math.exp(3), 0.049348).margin == pytest.approx(3.0 + fast.margin, rel=1e-12)
    bad = np.array([1.0, 2 * math.exp(3)])
    res = verify_decay_bound([0.0, 1.0], bad, math.exp(3), 0.1)
    assert not res.ok and res.margin < 0
