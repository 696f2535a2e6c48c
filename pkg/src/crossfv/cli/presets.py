"""Built-in scenarios: the figure experiments plus validation demos.

Grid sizes, end times and stationary tolerances are free choices here:
400 cells in 1D, 100 x 100 in 2D, CFL safety 0.5.
"""

from __future__ import annotations

import copy
import math

from .catalog import ScenarioError
from .scenario import Scenario

SQRT_HALF = math.sqrt(0.5)


def _gauss(center, sigma, amplitude=None):
    out = {"kind": "gaussian", "center": center, "sigma": sigma}
    if amplitude is not None:
        out["amplitude"] = amplitude
    return out


def _scaled(factor, of):
    return {"kind": "scaled", "factor": factor, "of": of}


# one-dimensional experiments on [-5, 5]
_B_1D = _gauss(0.0, 0.1)
_R0_1D = _gauss(-3.0, SQRT_HALF)
_V_INHIBITION = {
    "kind": "piecewise_power",
    "breakpoint": 3.5,
    "left_coef": 1.0,
    "left_power": 2.0,
    "right_coef": 1.0,
    "right_power": 5.0,
}
# bumps at -3 and +3 (see README for the reading of the shifted sum)
_R0_TWOBUMP = {"kind": "sum", "terms": [_scaled(0.5, _gauss(-3.0, SQRT_HALF)), _scaled(0.5, _gauss(3.0, SQRT_HALF))]}
_V_WELL_1D = {"kind": "quadratic_well", "center": 0.0, "scale": 0.5}


def _scalar_1d(name, description, d23, V, r0, t_end, snapshots, budget, **extra):
    doc = {
        "name": name,
        "description": description,
        "model": "scalar",
        "domain": [[-5.0, 5.0]],
        "resolution": [400],
        "params": {"delta1": 0.1, "delta2": d23, "delta3": d23, "b": _B_1D, "V": V},
        "initial": r0,
        "t_end": t_end,
        "step_control": {"cfl_safety": 0.5},
        "stride": 10,
        "snapshot_times": snapshots,
        "stationary": {"tol": 1e-11, "t_max": 200.0},
        "runtime_budget_s": budget,
    }
    doc.update(extra)
    return doc


_SNAP_1D = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0]

# two-dimensional experiments on (-1.75, 1.75)^2
_DOM_2D = [[-1.75, 1.75], [-1.75, 1.75]]
# 1 + cos 5x + cos 5y dips below zero; a frozen density keeps only its positive part
_B_POROUS = {
    "kind": "normalized",
    "mass": 1.0,
    "of": {"kind": "positive_part", "of": {"kind": "cosine_sum", "offset": 1.0, "frequency": 5.0}},
}
# the 1D prefactor (2 pi sigma^2)^(-1/2) is kept in two dimensions
_R0_POROUS = _gauss([0.0, 0.0], SQRT_HALF, 1 / math.sqrt(2 * math.pi * 0.5))
_R0_BARRIER = _gauss([-0.75, -0.75], 0.3, 1 / math.sqrt(2 * math.pi * 0.09))
_B_BARRIER = {
    "kind": "normalized",
    "mass": 1.0,
    "of": {
        "kind": "ring_sine_barrier",
        "center": [-1.75, -1.75],
        "frequency": 5.0,
        "rho_min": -1.75 + 7 * math.pi / 5,
        "rho_max": -1.75 + 7.5 * math.pi / 5,
        "modulation": {
            "kind": "cosine_product",
            "offset": 1.0,
            "frequency": 4 * math.pi / 3,
            "shift": [1.0, 1.0],
            "support": [[-1.0, 1.0], [-1.0, 1.0]],
        },
    },
}
_V_STRONG = {"kind": "quadratic_well", "center": [1.75, 1.75], "scale": 1 / 20}
_V_WEAK = {"kind": "quadratic_well", "center": [1.75, 1.75], "scale": 1 / 200}


def _scalar_2d(name, description, d1, b, V, r0, t_end, snapshots, budget, **extra):
    doc = {
        "name": name,
        "description": description,
        "model": "scalar",
        "domain": copy.deepcopy(_DOM_2D),
        "resolution": [100, 100],
        "params": {"delta1": d1, "delta2": 0.1, "delta3": 0.1, "b": b, "V": V},
        "initial": r0,
        "t_end": t_end,
        "step_control": {"cfl_safety": 0.5},
        "stride": 10,
        "snapshot_times": snapshots,
        "stationary": {"tol": 1e-11, "t_max": 200.0},
        "runtime_budget_s": budget,
    }
    doc.update(extra)
    return doc


def _build() -> dict[str, dict]:
    p: dict[str, dict] = {}
    for tag, d in zip("abc", (0.1, 0.2, 0.3)):
        p[f"fig_inhibition_1d_{tag}"] = _scalar_1d(
            f"fig_inhibition_1d_{tag}",
            f"1D obstacle crossing, piecewise power potential, delta2 = delta3 = {d}",
            d, _V_INHIBITION, _R0_1D, 2.0, _SNAP_1D, 120,
        )
    for tag, d in zip("abc", (0.1, 0.2, 0.3)):
        p[f"fig_twobump_1d_{tag}"] = _scalar_1d(
            f"fig_twobump_1d_{tag}",
            f"1D two bumps in a quadratic well, delta2 = delta3 = {d}",
            d, _V_WELL_1D, _R0_TWOBUMP, 2.0, _SNAP_1D, 120,
        )
    p["fig_expconv_1d"] = _scalar_1d(
        "fig_expconv_1d",
        "1D decay to equilibrium for the two-bump setup with delta2 = delta3 = 0.1",
        0.1, _V_WELL_1D, _R0_TWOBUMP, 12.0, [0.0, 1.0, 12.0], 120,
        decay_fit={"window": None, "reference_slope": -1.4},
    )
    p["fig_porous_2d"] = _scalar_2d(
        "fig_porous_2d",
        "2D spreading through a periodic obstacle field without potential",
        0.1, _B_POROUS, {"kind": "constant", "value": 0.0}, _R0_POROUS, 8.0, [0.0, 0.1, 0.5, 1.0, 8.0], 900,
        decay_fit={"window": None, "reference_slope": -2.5},
    )
    p["fig_barrier_strong_2d"] = _scalar_2d(
        "fig_barrier_strong_2d",
        "2D transport around a ring-shaped barrier, strong potential",
        0.01, _B_BARRIER, _V_STRONG, _R0_BARRIER, 0.5,
        [0.0, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5], 600,
    )
    p["fig_barrier_weak_2d"] = _scalar_2d(
        "fig_barrier_weak_2d",
        "2D transport around a ring-shaped barrier, weak potential",
        0.01, _B_BARRIER, _V_WEAK, _R0_BARRIER, 1.3,
        [0.0, 0.1, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3], 600,
    )

    # validation demos
    p["demo_gibbs_1d"] = _scalar_1d(
        "demo_gibbs_1d",
        "linear Fokker-Planck in a quadratic well (Gibbs stationary state)",
        0.0, _V_WELL_1D, _R0_1D, 10.0, [0.0, 1.0, 10.0], 60,
        params={"delta1": 0.0, "delta2": 0.0, "delta3": 0.0, "b": {"kind": "constant", "value": 0.0}, "V": _V_WELL_1D},
        decay_fit={"window": None, "reference_slope": -1.0},
    )
    p["demo_entropy_1d"] = _scalar_1d(
        "demo_entropy_1d",
        "scalar model with delta2 = 0 (exact gradient flow)",
        0.0, _V_WELL_1D, _R0_TWOBUMP, 5.0, [0.0, 1.0, 5.0], 60,
        params={"delta1": 0.1, "delta2": 0.0, "delta3": 0.1, "b": _B_1D, "V": _V_WELL_1D},
    )
    p["demo_equal_particles_1d"] = {
        "name": "demo_equal_particles_1d",
        "description": "two identical species, gradient-flow regime (G = 0)",
        "model": "two_species",
        "domain": [[-5.0, 5.0]],
        "resolution": [200],
        "params": {
            "D1": 1.0,
            "D2": 1.0,
            "delta": [[0.0, 0.1, 0.1], [0.0, 0.1, 0.1]],
            "V1": _V_WELL_1D,
            "V2": {"kind": "quadratic_well", "center": 1.0, "scale": 0.25},
        },
        "initial": [_scaled(0.5, _gauss(-2.0, 0.5)), _scaled(0.5, _gauss(2.0, 0.7))],
        "t_end": 5.0,
        "step_control": {"cfl_safety": 0.5},
        "stride": 10,
        "snapshot_times": [0.0, 1.0, 5.0],
        "stationary": {"tol": 1e-11, "t_max": 200.0},
        "runtime_budget_s": 60,
    }
    return p


PRESETS: dict[str, dict] = _build()

FIGURE_PRESET_NAMES = tuple(n for n in PRESETS if n.startswith("fig_"))


def list_presets() -> list[tuple[str, str]]:
    """``(name, one-line description)`` for every built-in scenario."""
    return [(name, doc["description"]) for name, doc in PRESETS.items()]


def preset_document(name: str) -> dict:
    if name not in PRESETS:
        raise ScenarioError(name, "unknown preset")
    return copy.deepcopy(PRESETS[name])


def load_preset(name: str) -> Scenario:
    return Scenario(preset_document(name))
