"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

The preset runs are shared through a module-scoped fixture; together they
take several minutes on one core.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import pytest

from crossfv.cli.presets import PRESETS, load_preset
from crossfv.cli.runner import RunResult, run_scenario
from crossfv.diagnostics import check_entropy_dissipation, check_max_principle, is_gradient_flow
from crossfv.equilibrium import compute_stationary
from crossfv.grid import Field, build_uniform_grid_1d
from crossfv.model import RegimeWarning, ScalarModelParams, TwoSpeciesParams
from crossfv.scheme import State, StepRejected, step_explicit, step_two_species, suggest_dt

from oracles import gibbs_cell_averages, scalar_step_oracle


@dataclass
class Monitor:
    """Per-step mass and positivity tracking for one run."""

    m0: tuple
    max_drift: list = field(default_factory=list)
    min_value: float = math.inf
    steps: int = 0
    rejected_steps: int = 0

    def __post_init__(self):
        self.max_drift = [0.0] * len(self.m0)

    def __call__(self, state: State, flags) -> None:
        self.steps += 1
        if "dt_rejected" in flags:
            self.rejected_steps += 1
        for k, (f, m0) in enumerate(zip(state.fields, self.m0)):
            self.max_drift[k] = max(self.max_drift[k], abs(f.mass() - m0) / m0)
            self.min_value = min(self.min_value, float(f.values.min()))


@dataclass
class PresetRun:
    name: str
    result: RunResult
    monitor: Monitor
    seconds: float


@pytest.fixture(scope="module")
def preset_runs() -> dict[str, PresetRun]:
    runs = {}
    for name in PRESETS:
        sc = load_preset(name)
        mon = Monitor(tuple(f.mass() for f in sc.initial_fields()))
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            # the delta = 0.3 presets leave the ellipticity regime on purpose
            warnings.simplefilter("ignore", RegimeWarning)
            res = run_scenario(sc, None, on_step=mon)
        runs[name] = PresetRun(name, res, mon, time.perf_counter() - t0)
    return runs


def _delta(params) -> float:
    return params.delta if isinstance(params, ScalarModelParams) else params.max_delta


# 1, 2: conservation and positivity on every preset


def test_criterion_01_mass_conservation(preset_runs, criterion_line):
    worst = max((max(r.monitor.max_drift), n) for n, r in preset_runs.items())
    ok = worst[0] <= 1e-13 and all(r.monitor.steps == r.result.final.step_count for r in preset_runs.values())
    criterion_line(1, ok, f"max relative mass drift over every step of {len(preset_runs)} presets "
                          f"{worst[0]:.2e} ({worst[1]}), bound 1e-13")
    assert ok


def test_criterion_02_positivity(preset_runs, criterion_line):
    lo = min((r.monitor.min_value, n) for n, r in preset_runs.items())
    rej = sum(r.monitor.rejected_steps for r in preset_runs.values())
    ok = lo[0] >= 0
    criterion_line(2, ok, f"smallest cell value over every accepted step {lo[0]:.3e} ({lo[1]}); "
                          f"steps that needed dt halving: {rej}")
    assert ok


# 3, 4: fitted decay rates against the reference slopes


def _slope_line(n, run: PresetRun, target: float, budget_s: float, criterion_line):
    fit = run.result.fit
    slope = fit.slope if fit is not None else float("nan")
    rel = abs(slope - target) / abs(target)
    ok = fit is not None and rel <= 0.25 and run.seconds <= budget_s
    window = f"[{fit.fit_window[0]:.3g}, {fit.fit_window[1]:.3g}]" if fit is not None else "none"
    criterion_line(n, ok, f"{run.name}: fitted slope {slope:.4f} on {window} vs {target} +/- 25% "
                          f"(off by {100 * rel:.1f}%); runtime {run.seconds:.0f} s, budget {budget_s:.0f} s")
    return ok


def test_criterion_03_1d_exponential_rate(preset_runs, criterion_line):
    assert _slope_line(3, preset_runs["fig_expconv_1d"], -1.4, 120, criterion_line)


def test_criterion_04_2d_exponential_rate(preset_runs, criterion_line):
    assert _slope_line(4, preset_runs["fig_porous_2d"], -2.5, 900, criterion_line)


# 5: Gibbs state against adaptive quadrature


def test_criterion_05_gibbs_oracle(criterion_line):
    V = lambda x: 0.5 * x * x
    errs, bounds = {}, {}
    for n in (100, 200, 400):
        g = build_uniform_grid_1d(-5, 5, n)
        r = compute_stationary(ScalarModelParams.build(g, V=V), g, 1.0, tol=1e-11)
        ref = np.array(gibbs_cell_averages(V, list(g.x_faces)))
        errs[n] = float(np.sum(g.dx * np.abs(r.values - ref)))
        bounds[n] = 0.5 * (10 / n) * float(ref.max())
    within = all(errs[n] <= bounds[n] for n in errs)
    ratios = [errs[100] / errs[200], errs[200] / errs[400]]
    halves = all(abs(q - 2) <= 0.4 for q in ratios)
    ok = within and halves
    criterion_line(
        5, ok,
        "L1 error vs 0.5 dx |r*|_inf: "
        + ", ".join(f"N={n} {errs[n]:.3e}/{bounds[n]:.3e}" for n in errs)
        + f"; halving ratios {ratios[0]:.3f}, {ratios[1]:.3f} (need 2 +/- 0.4)",
    )
    assert ok


# 6: one step against an independent evaluation


def test_criterion_06_scheme_oracle(criterion_line):
    rng = np.random.default_rng(6)
    g = build_uniform_grid_1d(-1, 1, 4)
    worst = 0.0
    for k in range(100):
        delta = 0.0 if k < 50 else 0.3
        r = rng.uniform(0, 2, 4)
        b = rng.uniform(0, 1.5, 4)
        V = rng.normal(size=4)
        p = ScalarModelParams.build(g, delta, delta, delta, b=b, V=V)
        s = State.initial(Field(r, g))
        dt = 0.5 * suggest_dt(s, p)
        got = step_explicit(s, dt, p).fields[0].values
        ref, _ = scalar_step_oracle(
            list(r), list(b), list(p.b_faces[0]), list(V), list(g.x_centers), list(g.dx),
            delta, delta, delta, p.epsilon, dt,
        )
        ref = np.array(ref)
        worst = max(worst, float(np.max(np.abs(got - ref)) / np.max(np.abs(ref))))
    ok = worst <= 1e-14
    criterion_line(6, ok, f"100 random N=4 states (50 with delta 0, 50 with delta 0.3): "
                          f"max relative deviation {worst:.2e}, bound 1e-14")
    assert ok


# 7: entropy dissipation in the gradient-flow regimes


def test_criterion_07_entropy_dissipation(preset_runs, criterion_line):
    parts, ok = [], True
    gf = [n for n, r in preset_runs.items() if is_gradient_flow(_params_of(r.result))]
    for n in gf:
        rep = check_entropy_dissipation(preset_runs[n].result.records, gradient_flow=False)
        ok &= rep.monotone
        parts.append(f"{n} max increase {rep.max_increase:.2e} (tol {rep.tolerance:.1e})")
    ok &= any(isinstance(_params_of(preset_runs[n].result), TwoSpeciesParams) for n in gf)
    criterion_line(7, ok, "; ".join(parts))
    assert ok


# 8: two-species stepper reduces to the scalar one


def test_criterion_08_two_species_reduction(criterion_line):
    sc = load_preset("fig_inhibition_1d_a")
    grid = sc.grid()
    base = sc.build_params(grid)
    # the frozen species only enters through its cell values in the two-species scheme
    scalar = ScalarModelParams.build(grid, base.delta1, base.delta2, base.delta3, b=base.b, V=base.V)
    two = TwoSpeciesParams.build(
        grid, 1.0, 0.0, [[base.delta1, base.delta2, base.delta3], [0.0, 0.0, 0.0]], base.V, None, 1
    )
    (r0,) = sc.initial_fields(grid)
    a, b = State.initial(r0), State.initial(r0, base.b)
    worst, steps = 0.0, 0
    t0 = time.perf_counter()
    while a.t < sc.t_end:
        dt = min(suggest_dt(a, scalar), sc.t_end - a.t)
        while True:
            try:
                a2 = step_explicit(a, dt, scalar)
                b2 = step_two_species(b, dt, two)
                break
            except StepRejected:
                dt *= 0.5
        a, b = a2, b2
        ra, rb = a.fields[0].values, b.fields[0].values
        worst = max(worst, float(np.max(np.abs(ra - rb)) / np.max(ra)))
        steps += 1
    frozen = np.array_equal(b.fields[1].values, base.b.values)
    ok = worst <= 1e-12 and frozen
    criterion_line(8, ok, f"fig_inhibition_1d_a to t={sc.t_end}: {steps} steps, max per-step relative "
                          f"deviation {worst:.2e} (bound 1e-12), frozen species unchanged: {frozen} "
                          f"({time.perf_counter() - t0:.0f} s)")
    assert ok


# 9: decay bounds where the hypotheses hold


def test_criterion_09_theory_bounds(preset_runs, criterion_line):
    parts, ok, n_checked = [], True, 0
    for n, r in preset_runs.items():
        res = r.result
        if res.theory is None or not res.bound_checks:
            continue
        for branch, chk in res.bound_checks.items():
            n_checked += 1
            slope = res.fit.slope if res.fit is not None else float("nan")
            fast = abs(slope) >= chk["rate"]
            ok &= chk["ok"] and fast
            parts.append(f"{n}/{branch}: margin {chk['margin']:.3g}, |slope| {abs(slope):.3f} >= rate {chk['rate']:.4f}")
    ok &= n_checked > 0
    criterion_line(9, ok, f"{n_checked} checks; " + "; ".join(parts))
    assert ok


# 10: maximum-principle monitor


def test_criterion_10_max_principle(preset_runs, criterion_line):
    parts, ok = [], True
    for n, r in preset_runs.items():
        res = r.result
        delta = _delta(_params_of(res))
        if delta > 0.1 + 1e-15:
            continue
        rep = check_max_principle(res.records, delta)
        good = rep.bounded and math.isfinite(rep.sup_ratio)
        ok &= good
        parts.append(f"{n} sup {rep.sup_ratio:.3g} ({'ok' if good else 'grows'}, C {rep.empirical_C:.3g})")
    criterion_line(10, ok, "; ".join(parts))
    assert ok


def _params_of(res: RunResult):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        return res.scenario.build_params()
