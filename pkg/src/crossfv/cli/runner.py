"""Run orchestration and output files.

A run directory holds, depending on ``outputs``:

* ``diagnostics.csv``: one row per recorded step, columns as in
  :data:`crossfv.diagnostics.CSV_COLUMNS`;
* ``snapshots.csv`` (index) and ``snapshot_NNN.csv`` (cell centres and values);
* ``stationary.csv``;
* ``decay_fit.json``: decay fit, theory report and bound checks;
* ``summary.json``: mass drift, positivity, flags, monitors;
* ``plot.gp``: gnuplot script over the files above.

Floats are written with 17 significant digits; nothing depends on the clock,
so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    check_entropy_dissipation,
    check_max_principle,
    is_gradient_flow,
    mark_entropy_increase,
    mass_drift,
    parabolic_norm,
    record,
)
from ..equilibrium import (
    DecayFit,
    StationaryNotConverged,
    TheoryReport,
    compute_stationary,
    default_fit_window,
    fit_decay_rate,
    theory_params,
    theory_report,
    verify_decay_bound,
)
from ..grid import Field
from ..model import ScalarModelParams
from ..scheme import State, StepControlError, evolve
from .scenario import Scenario


class NumericalAbort(RuntimeError):
    """The run stopped early; partial outputs were written."""

    def __init__(self, message: str, result: Optional["RunResult"] = None):
        super().__init__(message)
        self.result = result


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _write_fields(path: Path, fields: tuple[Field, ...]) -> None:
    grid = fields[0].grid
    coords = [c.ravel() for c in grid.centers()]
    names = ["x", "y"][: grid.ndim]
    vnames = ["r"] if len(fields) == 1 else [f"u{i + 1}" for i in range(len(fields))]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + vnames)
        cols = coords + [f.values.ravel() for f in fields]
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])


def _write_diagnostics(path: Path, records: list[DiagnosticsRecord]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([fmt(v) for v in r.row()])


@dataclass
class RunResult:
    scenario: Scenario
    out_dir: Optional[Path]
    records: list
    final: State
    stationary: Optional[tuple]
    fit: Optional[DecayFit] = None
    theory: Optional[TheoryReport] = None
    summary: dict = field(default_factory=dict)
    bound_checks: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)
    aborted: bool = False


def _bound_checks(times, dists, report: TheoryReport) -> dict:
    """Decay-bound checks for every result whose hypotheses are flagged as met."""
    out = {}
    t = np.asarray(times)
    d = np.asarray(dists)
    if d.size < 2 or not d[0] > 0:
        return out
    _, t_last = default_fit_window(t, d)
    sel = t <= t_last
    branches = []
    if report.general_hypotheses_met:
        branches.append(("general", report.prefactor_general, report.lambda_over_2CP2))
    if report.K_condition_met:
        branches.append(("scalar", report.prefactor_scalar, report.rate_scalar))
    for name, pre, rate in branches:
        chk = verify_decay_bound(t[sel], d[sel], pre, rate)
        out[name] = {"ok": chk.ok, "margin": chk.margin, "n_samples": chk.n_samples, "prefactor": pre, "rate": rate}
    return out


def run_scenario(
    scenario: Scenario,
    out_dir=None,
    verbose: bool = False,
    on_step: Optional[Callable[[State, frozenset], None]] = None,
) -> RunResult:
    """Execute ``scenario`` and (if ``out_dir`` is given) write the run directory.

    ``on_step(state, flags)`` is called after every accepted step.
    """
    doc = scenario.document
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    grid = scenario.grid()
    params = scenario.build_params(grid)
    fields0 = scenario.initial_fields(grid)
    control = scenario.step_control()
    outputs = set(doc["outputs"])
    log = print if verbose else (lambda *a, **k: None)

    stationary = None
    if doc["stationary"] is not None:
        st = doc["stationary"]
        masses = [f.mass() for f in fields0]
        log(f"[{doc['name']}] computing stationary state")
        try:
            res = compute_stationary(
                params, grid, masses if scenario.is_two_species else masses[0],
                tol=st.get("tol", 1e-11), t_max=st.get("t_max", 200.0), control=control,
            )
        except StationaryNotConverged as e:
            if out is not None:
                _write_json(out / "summary.json", {"name": doc["name"], "aborted": True, "reason": str(e)})
            raise NumericalAbort(str(e)) from e
        stationary = res if isinstance(res, tuple) else (res,)
        if out is not None:
            _write_fields(out / "stationary.csv", stationary)

    r0_sup = [float(f.values.max()) for f in fields0]
    ref = stationary
    stride = doc["stride"]
    snap_times = doc["snapshot_times"]
    records: list[DiagnosticsRecord] = []
    snapshots: list[tuple[float, tuple]] = []
    pending: set = set()

    state = State.initial(*fields0)
    records.append(record(state, params, ref, r0_sup))
    if snap_times and snap_times[0] == 0.0:
        snapshots.append((0.0, state.fields))
    snap_set = [t for t in snap_times if t > 0]
    next_snap = [0]

    def callback(s: State, flags) -> None:
        if on_step is not None:
            on_step(s, flags)
        pending.update(flags)
        while next_snap[0] < len(snap_set) and s.t >= snap_set[next_snap[0]]:
            snapshots.append((snap_set[next_snap[0]], s.fields))
            next_snap[0] += 1
        if s.step_count % stride == 0:
            records.append(record(s, params, ref, r0_sup, pending))
            pending.clear()

    log(f"[{doc['name']}] evolving to t={doc['t_end']}")
    aborted = False
    reason = ""
    try:
        state = evolve(state, params, doc["t_end"], control, callback, stop_times=snap_set)
    except StepControlError as e:
        aborted = True
        reason = str(e)
        state = e.state
    if records[-1].step != state.step_count:
        records.append(record(state, params, ref, r0_sup, pending))
    records = mark_entropy_increase(records)

    result = RunResult(scenario, out, records, state, stationary, snapshots=snapshots, aborted=aborted)
    _summarise(result, params)
    if out is not None:
        _emit(result, outputs)
    if aborted:
        raise NumericalAbort(reason, result)
    return result


def _summarise(result: RunResult, params) -> None:
    records = result.records
    doc = result.scenario.document
    times = [r.t for r in records]
    drift = mass_drift(records)
    gf = is_gradient_flow(params)
    ent = check_entropy_dissipation(records, gradient_flow=False)
    delta = params.delta if isinstance(params, ScalarModelParams) else params.max_delta
    mp = check_max_principle(records, delta) if len(records) >= 4 else None
    flag_counts = {}
    for r in records:
        for f in r.flags:
            flag_counts[f] = flag_counts.get(f, 0) + 1
    summary = {
        "name": doc["name"],
        "aborted": result.aborted,
        "t_final": result.final.t,
        "steps": result.final.step_count,
        "n_records": len(records),
        "mass_initial": list(records[0].masses),
        "mass_relative_drift": list(drift),
        "min_value": min(r.min_value for r in records),
        "gradient_flow_regime": gf,
        "entropy": {
            "initial": records[0].entropy,
            "final": records[-1].entropy,
            "monotone": ent.monotone,
            "max_increase": ent.max_increase,
            "tolerance": ent.tolerance,
            "n_violations": len(ent.violations),
        },
        "max_principle": None if mp is None else mp.__dict__,
        "flag_counts": dict(sorted(flag_counts.items())),
    }
    if result.stationary is not None:
        dists = [r.l2_to_reference for r in records]
        M = max(r.max_value for r in records)
        scalar_star = result.stationary[0] if isinstance(params, ScalarModelParams) else None
        tp = theory_params(params, M, result.stationary if len(result.stationary) > 1 else result.stationary[0])
        rep = theory_report(tp, params, scalar_star, parabolic_norm=parabolic_norm(records))
        result.theory = rep
        fit_cfg = doc["decay_fit"]
        try:
            result.fit = fit_decay_rate(times, dists, fit_cfg.get("window"))
        except ValueError as e:
            summary["decay_fit_error"] = str(e)
        result.bound_checks = _bound_checks(times, dists, rep)
        summary["final_l2_to_stationary"] = dists[-1]
    result.summary = summary


def _emit(result: RunResult, outputs: set) -> None:
    out = result.out_dir
    doc = result.scenario.document
    if "diagnostics" in outputs:
        _write_diagnostics(out / "diagnostics.csv", result.records)
    snap_files = []
    if "trajectory" in outputs:
        with (out / "snapshots.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "t", "file"])
            for k, (t, fields) in enumerate(result.snapshots):
                name = f"snapshot_{k:03d}.csv"
                _write_fields(out / name, fields)
                w.writerow([k, fmt(t), name])
                snap_files.append((t, name))
    if "decay_fit" in outputs and result.theory is not None:
        _write_json(
            out / "decay_fit.json",
            {
                "fit": None if result.fit is None else result.fit.to_dict(),
                "reference_slope": doc["decay_fit"].get("reference_slope"),
                "theory": result.theory.to_dict(),
                "bound_checks": result.bound_checks,
            },
        )
    _write_json(out / "summary.json", result.summary)
    (out / "scenario.json").write_text(result.scenario.to_json() + "\n")
    if "plot_script" in outputs:
        (out / "plot.gp").write_text(
            plot_script(result, "diagnostics" in outputs, snap_files, result.stationary is not None)
        )


def plot_script(result: RunResult, with_diag: bool, snap_files, with_stationary: bool) -> str:
    """gnuplot script: semi-log distance with a reference slope, and density snapshots."""
    doc = result.scenario.document
    ndim = result.scenario.ndim
    lines = [
        f"# {doc['name']}: {doc['description']}",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
    ]
    ref = doc["decay_fit"].get("reference_slope")
    if with_diag and with_stationary:
        lines += [
            "set output 'distance.png'",
            "set logscale y",
            "set format y '10^{%T}'",
            "set xlabel 't'",
            "set ylabel 'L2 distance to stationary state'",
        ]
        col = CSV_COLUMNS.index("l2_to_reference") + 1
        plot = [f"'diagnostics.csv' using 1:{col} with lines lw 2 lc rgb 'blue' title 'distance'"]
        if ref is not None and result.fit is not None:
            ta = result.fit.fit_window[0]
            a = result.fit.intercept + result.fit.slope * ta
            plot.append(f"exp({a:.17g} + ({ref:.17g})*(x - {ta:.17g})) lw 2 lc rgb 'dark-green' title 'slope {ref:g}'")
        lines.append("plot " + ", \\\n     ".join(plot))
        lines += ["unset logscale y", "set format y '%g'"]
    if snap_files:
        if ndim == 1:
            lines += ["set output 'snapshots.png'", "set xlabel 'x'", "set ylabel 'density'"]
            parts = [f"'{name}' using 1:2 with lines title 't = {t:g}'" for t, name in snap_files]
            if with_stationary:
                parts.append("'stationary.csv' using 1:2 with lines dt 2 lc rgb 'black' title 'stationary'")
            lines.append("plot " + ", \\\n     ".join(parts))
        else:
            n = len(snap_files)
            cols = min(4, n)
            rows = (n + cols - 1) // cols
            lines += [
                f"set terminal pngcairo size {300 * cols},{280 * rows}",
                "set output 'snapshots.png'",
                "set size ratio -1",
                "unset key",
                f"set multiplot layout {rows},{cols}",
            ]
            for t, name in snap_files:
                lines += [f"set title 't = {t:g}'", f"plot '{name}' using 1:2:3 with image"]
            lines.append("unset multiplot")
    lines.append("")
    return "\n".join(lines)
