"""Command line interface: ``crossfv run|list|stationary|theory|export``.

Exit codes: 0 success, 2 validation error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from ..equilibrium import StationaryNotConverged, compute_stationary
from ..scheme import StepControlError
from .catalog import ScenarioError
from .presets import PRESETS, list_presets, load_preset, preset_document
from .runner import NumericalAbort, RunResult, _clean, _write_fields, run_scenario
from .scenario import Scenario, load_scenario

__all__ = [
    "NumericalAbort",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "list_presets",
    "load_preset",
    "load_scenario",
    "main",
    "run_scenario",
]

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 2, 3


def resolve(target: str) -> Scenario:
    """A preset name or a path to a scenario file."""
    if target in PRESETS:
        return load_preset(target)
    if Path(target).exists():
        return load_scenario(target)
    raise ScenarioError(target, "neither a preset name nor an existing file")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossfv", description="finite-volume solver for small cross-diffusion models")
    sub = ap.add_subparsers(dest="verb", required=True)

    def overrides(p):
        p.add_argument("target", help="preset name or scenario JSON file")
        p.add_argument("--resolution", type=int, help="cells per axis")
        p.add_argument("--t-end", type=float, help="final time")
        p.add_argument("--stride", type=int, help="record every STRIDE steps")

    p = sub.add_parser("run", help="run a scenario and write its output directory")
    overrides(p)
    p.add_argument("--out", type=Path, help="output directory (default: runs/<name>)")
    p.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="list built-in presets")
    p = sub.add_parser("stationary", help="compute the stationary state only")
    overrides(p)
    p.add_argument("--out", type=Path, help="output directory (default: runs/<name>)")
    p = sub.add_parser("theory", help="run in memory and print the theory report")
    overrides(p)
    p = sub.add_parser("export", help="print a preset as a scenario file")
    p.add_argument("name")
    return ap


def _scenario(args) -> Scenario:
    return resolve(args.target).with_overrides(args.resolution, args.t_end, args.stride)


def _run(args) -> int:
    sc = _scenario(args)
    out = args.out or Path("runs") / sc.name
    t0 = time.perf_counter()
    res = run_scenario(sc, out, verbose=not args.quiet)
    s = res.summary
    print(f"{sc.name}: t={s['t_final']:.6g} steps={s['steps']} mass drift={max(s['mass_relative_drift']):.2e} "
          f"min={s['min_value']:.3e} ({time.perf_counter() - t0:.1f} s) -> {out}")
    if res.fit is not None:
        print(f"  fitted slope {res.fit.slope:.4f} on [{res.fit.fit_window[0]:.3g}, {res.fit.fit_window[1]:.3g}]")
    return EXIT_OK


def _stationary(args) -> int:
    sc = _scenario(args)
    grid = sc.grid()
    params = sc.build_params(grid)
    masses = [f.mass() for f in sc.initial_fields(grid)]
    st = sc.stationary or {}
    res = compute_stationary(
        params, grid, masses if sc.is_two_species else masses[0],
        tol=st.get("tol", 1e-11), t_max=st.get("t_max", 200.0), control=sc.step_control(),
    )
    fields = res if isinstance(res, tuple) else (res,)
    out = args.out or Path("runs") / sc.name
    out.mkdir(parents=True, exist_ok=True)
    _write_fields(out / "stationary.csv", fields)
    print(f"{sc.name}: stationary state written to {out / 'stationary.csv'}")
    return EXIT_OK


def _theory(args) -> int:
    sc = _scenario(args)
    if sc.stationary is None:
        raise ScenarioError("stationary", "the theory report needs a stationary state")
    res = run_scenario(sc, None)
    report = {"theory": res.theory.to_dict(), "bound_checks": res.bound_checks}
    if res.fit is not None:
        report["fit"] = res.fit.to_dict()
    print(json.dumps(_clean(report), indent=2, sort_keys=True))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "list":
            for name, desc in list_presets():
                print(f"{name:26s} {desc}")
            return EXIT_OK
        if args.verb == "export":
            print(json.dumps(preset_document(args.name), indent=2, sort_keys=True))
            return EXIT_OK
        return {"run": _run, "stationary": _stationary, "theory": _theory}[args.verb](args)
    except ScenarioError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalAbort, StepControlError, StationaryNotConverged) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_ABORT
