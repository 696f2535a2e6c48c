"""Scenario documents: validation, loading and construction of run inputs.

A scenario is a JSON object with these top-level keys (unknown keys are
rejected)::

    name            str
    description     str, optional
    model           "scalar" | "two_species"
    domain          [[lo, hi]] or [[x_lo, x_hi], [y_lo, y_hi]]
    resolution      int or list of ints, one per axis
    params          scalar:      delta1, delta2, delta3, epsilon?, b, V
                    two_species: D1, D2, delta (2x3), d?, epsilon?, V1, V2
    initial         function (scalar) or [function, function]
    t_end           positive number
    step_control    {cfl_safety?, dt_fixed?, dt_min?, max_halvings?}, optional
    stride          records every ``stride`` accepted steps (default 10)
    snapshot_times  list of times in [0, t_end], optional
    stationary      {tol?, t_max?} or null; null skips the stationary state
    decay_fit       {window?, reference_slope?}, optional
    outputs         subset of trajectory, diagnostics, decay_fit, plot_script;
                    defaults to all (decay_fit only with a stationary state)
    runtime_budget_s  documented wall-clock budget, optional
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from ..grid import Field, Grid, build_uniform_grid_1d, build_uniform_grid_2d, cell_average
from ..model import ScalarModelParams, TwoSpeciesParams
from ..scheme import StepControl
from .catalog import ScenarioError, check_function, compile_function

OUTPUTS = ("trajectory", "diagnostics", "decay_fit", "plot_script")

_TOP = {
    "name",
    "description",
    "model",
    "domain",
    "resolution",
    "params",
    "initial",
    "t_end",
    "step_control",
    "stride",
    "snapshot_times",
    "stationary",
    "decay_fit",
    "outputs",
    "runtime_budget_s",
}
_REQUIRED = ("name", "model", "domain", "resolution", "params", "initial", "t_end")
_SCALAR_PARAMS = {"delta1", "delta2", "delta3", "epsilon", "b", "V"}
_TWO_PARAMS = {"D1", "D2", "delta", "d", "epsilon", "V1", "V2"}
_STEP_KEYS = {"cfl_safety", "dt_fixed", "dt_min", "max_halvings"}
_STAT_KEYS = {"tol", "t_max"}
_FIT_KEYS = {"window", "reference_slope"}


def _num(v, path, positive=False, nonneg=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(path, "must be a finite number")
    if positive and not v > 0:
        raise ScenarioError(path, "must be positive")
    if nonneg and v < 0:
        raise ScenarioError(path, "must be non-negative")
    return float(v)


def _int(v, path, minimum) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ScenarioError(path, f"must be an integer >= {minimum}")
    return v


def _obj(v, path, allowed) -> Mapping:
    if not isinstance(v, Mapping):
        raise ScenarioError(path, "must be an object")
    extra = sorted(set(v) - allowed)
    if extra:
        raise ScenarioError(f"{path}.{extra[0]}", "unknown key")
    return v


def validate_document(doc: Any) -> dict:
    """Check a parsed scenario and return a normalised deep copy."""
    doc = copy.deepcopy(_obj(doc, "scenario", _TOP))
    for key in _REQUIRED:
        if key not in doc:
            raise ScenarioError(key, "missing")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ScenarioError("name", "must be a non-empty string")
    doc.setdefault("description", "")
    if not isinstance(doc["description"], str):
        raise ScenarioError("description", "must be a string")
    if doc["model"] not in ("scalar", "two_species"):
        raise ScenarioError("model", "must be 'scalar' or 'two_species'")

    dom = doc["domain"]
    if not isinstance(dom, list) or len(dom) not in (1, 2):
        raise ScenarioError("domain", "must list one or two [lo, hi] intervals")
    for i, iv in enumerate(dom):
        if not isinstance(iv, list) or len(iv) != 2:
            raise ScenarioError(f"domain[{i}]", "must be [lo, hi]")
        lo, hi = (_num(x, f"domain[{i}][{k}]") for k, x in enumerate(iv))
        if not lo < hi:
            raise ScenarioError(f"domain[{i}]", "needs lo < hi")
    ndim = len(dom)
    res = doc["resolution"]
    if not isinstance(res, list):
        res = [res] * ndim
    if len(res) != ndim:
        raise ScenarioError("resolution", f"must give {ndim} cell counts")
    doc["resolution"] = [_int(n, f"resolution[{i}]", 2) for i, n in enumerate(res)]

    two = doc["model"] == "two_species"
    p = _obj(doc["params"], "params", _TWO_PARAMS if two else _SCALAR_PARAMS)
    if two:
        for k in ("D1", "D2"):
            p.setdefault(k, 1.0)
            _num(p[k], f"params.{k}", nonneg=True)
        dl = p.get("delta")
        if not (isinstance(dl, list) and len(dl) == 2 and all(isinstance(r, list) and len(r) == 3 for r in dl)):
            raise ScenarioError("params.delta", "must be a 2x3 list")
        for i in range(2):
            for j in range(3):
                v = _num(dl[i][j], f"params.delta[{i}][{j}]", nonneg=True)
                if v > 1:
                    raise ScenarioError(f"params.delta[{i}][{j}]", "must not exceed 1")
        if "d" in p and p["d"] not in (1, 2):
            raise ScenarioError("params.d", "must be 1 or 2")
        for k in ("V1", "V2"):
            p.setdefault(k, {"kind": "constant", "value": 0.0})
            check_function(p[k], ndim, f"params.{k}")
        init = doc["initial"]
        if not isinstance(init, list) or len(init) != 2:
            raise ScenarioError("initial", "two_species needs a list of two functions")
        for i, f in enumerate(init):
            check_function(f, ndim, f"initial[{i}]")
    else:
        for k in ("delta1", "delta2", "delta3"):
            if k not in p:
                raise ScenarioError(f"params.{k}", "missing")
            v = _num(p[k], f"params.{k}", nonneg=True)
            if v > 1:
                raise ScenarioError(f"params.{k}", "must not exceed 1")
        for k in ("b", "V"):
            p.setdefault(k, {"kind": "constant", "value": 0.0})
            check_function(p[k], ndim, f"params.{k}")
        check_function(doc["initial"], ndim, "initial")
    if "epsilon" in p:
        _num(p["epsilon"], "params.epsilon", positive=True)

    t_end = _num(doc["t_end"], "t_end", positive=True)
    sc = _obj(doc.get("step_control", {}), "step_control", _STEP_KEYS)
    for k in ("cfl_safety", "dt_fixed", "dt_min"):
        if k in sc and sc[k] is not None:
            _num(sc[k], f"step_control.{k}", positive=True)
    if "cfl_safety" in sc and sc["cfl_safety"] > 1:
        raise ScenarioError("step_control.cfl_safety", "must lie in (0, 1]")
    if "max_halvings" in sc:
        _int(sc["max_halvings"], "step_control.max_halvings", 0)
    doc["step_control"] = dict(sc)
    doc["stride"] = _int(doc.get("stride", 10), "stride", 1)

    snaps = doc.get("snapshot_times", [])
    if not isinstance(snaps, list):
        raise ScenarioError("snapshot_times", "must be a list")
    for i, t in enumerate(snaps):
        if not 0 <= _num(t, f"snapshot_times[{i}]") <= t_end:
            raise ScenarioError(f"snapshot_times[{i}]", "must lie in [0, t_end]")
    doc["snapshot_times"] = sorted(float(t) for t in snaps)

    st = doc.get("stationary", {})
    if st is not None:
        st = dict(_obj(st, "stationary", _STAT_KEYS))
        for k in ("tol", "t_max"):
            if k in st:
                _num(st[k], f"stationary.{k}", positive=True)
    doc["stationary"] = st

    fit = dict(_obj(doc.get("decay_fit", {}), "decay_fit", _FIT_KEYS))
    w = fit.get("window")
    if w is not None:
        if not isinstance(w, list) or len(w) != 2:
            raise ScenarioError("decay_fit.window", "must be [t_a, t_b] or null")
        a, b = (_num(x, f"decay_fit.window[{i}]", nonneg=True) for i, x in enumerate(w))
        if not a < b:
            raise ScenarioError("decay_fit.window", "needs t_a < t_b")
    if fit.get("reference_slope") is not None:
        _num(fit["reference_slope"], "decay_fit.reference_slope")
    doc["decay_fit"] = fit

    default = [o for o in OUTPUTS if o != "decay_fit" or doc["stationary"] is not None]
    outs = doc.get("outputs", default)
    if not isinstance(outs, list):
        raise ScenarioError("outputs", "must be a list")
    for i, o in enumerate(outs):
        if o not in OUTPUTS:
            raise ScenarioError(f"outputs[{i}]", f"unknown output {o!r}; expected one of {', '.join(OUTPUTS)}")
    doc["outputs"] = [o for o in OUTPUTS if o in outs]
    if "runtime_budget_s" in doc:
        _num(doc["runtime_budget_s"], "runtime_budget_s", positive=True)
    if doc["stationary"] is None and "decay_fit" in doc["outputs"]:
        raise ScenarioError("outputs", "decay_fit needs a stationary state")
    return doc


@dataclass(frozen=True, eq=False)
class Scenario:
    """Validated scenario; ``document`` is the normalised JSON object."""

    document: dict

    def __post_init__(self) -> None:
        object.__setattr__(self, "document", validate_document(self.document))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Scenario) and self.document == other.document

    def __getattr__(self, key: str):
        doc = self.__dict__.get("document", {})
        if key in doc:
            return doc[key]
        raise AttributeError(key)

    @property
    def ndim(self) -> int:
        return len(self.document["domain"])

    @property
    def is_two_species(self) -> bool:
        return self.document["model"] == "two_species"

    def to_json(self) -> str:
        return json.dumps(self.document, indent=2, sort_keys=True)

    def with_overrides(
        self,
        resolution: Optional[int] = None,
        t_end: Optional[float] = None,
        stride: Optional[int] = None,
    ) -> "Scenario":
        doc = copy.deepcopy(self.document)
        if resolution is not None:
            doc["resolution"] = [int(resolution)] * self.ndim
        if t_end is not None:
            doc["t_end"] = float(t_end)
            doc["snapshot_times"] = [t for t in doc["snapshot_times"] if t <= t_end]
        if stride is not None:
            doc["stride"] = int(stride)
        return Scenario(doc)

    # construction of run inputs

    def grid(self) -> Grid:
        dom, res = self.document["domain"], self.document["resolution"]
        if self.ndim == 1:
            return build_uniform_grid_1d(dom[0][0], dom[0][1], res[0])
        return build_uniform_grid_2d(dom[0][0], dom[0][1], dom[1][0], dom[1][1], res[0], res[1])

    def step_control(self) -> StepControl:
        return StepControl(**self.document["step_control"])

    def build_params(self, grid: Optional[Grid] = None) -> Union[ScalarModelParams, TwoSpeciesParams]:
        grid = self.grid() if grid is None else grid
        p = self.document["params"]
        if self.is_two_species:
            extra = {"epsilon": p["epsilon"]} if "epsilon" in p else {}
            V = [compile_function(p[k], grid, f"params.{k}") for k in ("V1", "V2")]
            params = TwoSpeciesParams.build(grid, p["D1"], p["D2"], p["delta"], V[0], V[1], p.get("d"), **extra)
            for k, Vf in (("V1", params.V1), ("V2", params.V2)):
                if not np.all(np.isfinite(Vf.values)):
                    raise ScenarioError(f"params.{k}", "is not finite on the grid")
            return params
        extra = {"epsilon": p["epsilon"]} if "epsilon" in p else {}
        b = compile_function(p["b"], grid, "params.b")
        V = compile_function(p["V"], grid, "params.V")
        try:
            params = ScalarModelParams.build(grid, p["delta1"], p["delta2"], p["delta3"], b, V, **extra)
        except ValueError as e:
            raise ScenarioError("params", str(e)) from e
        if np.any(params.b.values < 0) or any(np.any(bf < 0) for bf in params.b_faces):
            raise ScenarioError("params.b", "the frozen density must be non-negative")
        return params

    def initial_fields(self, grid: Optional[Grid] = None) -> tuple[Field, ...]:
        grid = self.grid() if grid is None else grid
        init = self.document["initial"]
        descs = init if self.is_two_species else [init]
        paths = [f"initial[{i}]" for i in range(len(descs))] if self.is_two_species else ["initial"]
        out = []
        for desc, path in zip(descs, paths):
            f = cell_average(compile_function(desc, grid, path), grid)
            if f.values.min() < 0:
                raise ScenarioError(path, "initial density must be non-negative")
            out.append(f)
        return tuple(out)


def load_scenario(source: Union[str, Path, Mapping]) -> Scenario:
    """Read and validate a scenario from a JSON file (or an already parsed mapping)."""
    if isinstance(source, Mapping):
        return Scenario(dict(source))
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(str(path), f"cannot read file ({e.strerror})") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(str(path), f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    return Scenario(doc)
