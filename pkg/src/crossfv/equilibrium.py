"""Stationary states, distance to equilibrium, decay fits and decay-rate bounds."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .grid import Field, Grid
from .model import (
    ScalarModelParams,
    TheoryParams,
    TwoSpeciesParams,
    face_gradient,
    gamma_M,
    lipschitz_bounds,
    poincare_constant,
)
from .scheme import State, StepControl, step, suggest_dt

# Ladyzhenskaya's inequality constant bound on rectangles
DEFAULT_C_GN = 2.0**0.5


class StationaryNotConverged(RuntimeError):
    def __init__(self, message: str, residual: float, state: State):
        super().__init__(message)
        self.residual = residual
        self.state = state


def l2_distance(a: Field, b: Field) -> float:
    """``sqrt(sum |C_i| (a_i - b_i)^2)``."""
    if not a.grid.same_as(b.grid):
        raise ValueError("fields live on different grids")
    return float(np.sqrt(np.sum(a.grid.cell_volumes * (a.values - b.values) ** 2)))


def compute_stationary(
    params: Union[ScalarModelParams, TwoSpeciesParams],
    grid: Grid,
    mass: Union[float, Sequence[float]],
    tol: float = 1e-11,
    t_max: float = 200.0,
    control: StepControl = StepControl(),
    check_every: int = 10,
) -> Union[Field, tuple[Field, ...]]:
    """March from uniform densities of the given mass(es) until stationary.

    Stops once ``||r^{n+1} - r^n||_{L2} / dt < tol`` (summed over species).
    Returns a Field for scalar models and a tuple of Fields otherwise.
    """
    two = isinstance(params, TwoSpeciesParams)
    masses = tuple(np.atleast_1d(np.asarray(mass, dtype=float)))
    if two and len(masses) != 2:
        raise ValueError("two-species stationary states need two masses")
    if not tol > 0:
        raise ValueError("tol must be positive")
    state = State.initial(*(Field.constant(grid, m / grid.measure) for m in masses))
    residual = np.inf
    vol = grid.cell_volumes
    while state.t < t_max:
        dt = suggest_dt(state, params, control)
        new = step(state, dt, params)
        if new.step_count % check_every == 0:
            residual = sum(
                float(np.sqrt(np.sum(vol * (f1.values - f0.values) ** 2)))
                for f0, f1 in zip(state.fields, new.fields)
            ) / dt
            if residual < tol:
                state = new
                break
        state = new
    else:
        raise StationaryNotConverged(
            f"no stationary state by t={t_max} (residual {residual:.3e})", residual, state
        )
    return state.fields if two else state.fields[0]


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    fit_window: tuple[float, float]
    residual: float
    n_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def default_fit_window(times, distances, floor: float = 1e-10) -> tuple[float, float]:
    """``[0.1 T, T']`` with ``T'`` the last time the distance exceeds ``floor * d(0)``."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    above = np.nonzero(d > floor * d[0])[0]
    t_last = t[above[-1]] if above.size else t[0]
    return 0.1 * t[-1], float(t_last)


def fit_decay_rate(times, distances, window: Optional[Sequence[float]] = None, min_samples: int = 10) -> DecayFit:
    """Least-squares line through ``(t, log d)`` inside ``window``."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if t.shape != d.shape or t.ndim != 1:
        raise ValueError("times and distances must be equal-length 1D sequences")
    ta, tb = default_fit_window(t, d) if window is None else map(float, window)
    sel = np.nonzero((t >= ta) & (t <= tb))[0]
    nonpos = sel[d[sel] <= 0]
    if nonpos.size:
        # the floor was reached: keep the positive prefix
        sel = sel[sel < nonpos[0]]
    if sel.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples in the fit window, got {sel.size}")
    ts, ls = t[sel], np.log(d[sel])
    slope, intercept = np.polyfit(ts, ls, 1)
    res = float(np.sqrt(np.mean((ls - (slope * ts + intercept)) ** 2)))
    return DecayFit(float(slope), float(intercept), (float(ts[0]), float(ts[-1])), res, int(sel.size))


@dataclass(frozen=True)
class TheoryReport:
    C_P: float
    lambda_over_2CP2: float
    prefactor_general: float
    prefactor_scalar: float
    rate_scalar: float
    delta: float
    delta_threshold_thm31: float
    general_applicable: bool
    general_hypotheses_met: bool
    Gamma_M: float
    K1: float
    K2: float
    K_delta: float
    K_condition_met: bool
    C_GN: float
    parabolic_norm: float

    @property
    def scalar_hypotheses_met(self) -> bool:
        return self.K_condition_met

    def to_dict(self) -> dict:
        out = asdict(self)
        out["scalar_hypotheses_met"] = self.scalar_hypotheses_met
        return out


def _sup_face_gradient(values: np.ndarray, grid: Grid) -> float:
    out = 0.0
    for k in range(grid.ndim):
        out = max(out, float(np.max(np.abs(face_gradient(values, grid, k)), initial=0.0)))
    return out


def theory_params(
    params: Union[ScalarModelParams, TwoSpeciesParams], M: float, stationary=None
) -> TheoryParams:
    """Constants read off the discretised coefficients.

    ``stationary`` (a Field, or a tuple for two species) feeds Gamma_M through
    the sup norms of ``u*`` and its gradient.
    """
    grid = params.grid
    if isinstance(params, ScalarModelParams):
        V_vals = params.V.values
        lam = Lam = 1.0
        two = params.as_two_species()
        gV = (_sup_face_gradient(V_vals, grid), 0.0)
    else:
        V_vals = np.stack([params.V1.values, params.V2.values])
        lam, Lam = min(params.D), max(params.D)
        two = params
        gV = (_sup_face_gradient(params.V1.values, grid), _sup_face_gradient(params.V2.values, grid))
    C_P = poincare_constant(grid)
    tp = TheoryParams(
        lam, Lam, C_P, float(np.abs(V_vals).max()), max(gV), float(V_vals.min()), float(V_vals.max()), float(M)
    )
    if stationary is None:
        return tp
    fields = stationary if isinstance(stationary, tuple) else (stationary,)
    u_sup = max(float(f.values.max()) for f in fields)
    gu_sup = max(_sup_face_gradient(f.values, grid) for f in fields)
    bounds = lipschitz_bounds(two, M, gV)
    return TheoryParams(**{**asdict(tp), "Gamma_M": gamma_M(tp, bounds, u_sup, gu_sup)})


def theory_report(
    theory: TheoryParams,
    params: Union[ScalarModelParams, TwoSpeciesParams],
    stationary: Optional[Field] = None,
    parabolic_norm: float = 0.0,
    C_GN: float = DEFAULT_C_GN,
    sobolev_branch: bool = False,
    C_S: float = 1.0,
) -> TheoryReport:
    """Decay-rate constants of the general and the scalar convergence results.

    ``stationary`` is the scalar stationary density used for ``w* = r* e^V``.
    The K2 term follows the Ladyzhenskaya (d <= 2) branch unless
    ``sobolev_branch`` selects the ``2 e^{-2 V_l} |grad V| C_S M`` form.
    """
    C_P = theory.C_P
    cpg = C_P * theory.grad_V_inf_norm
    applicable = cpg < 1 and theory.lam > 0
    if applicable and theory.Gamma_M > 0:
        thr = theory.lam * (1 - cpg) / (2 * theory.Lam * np.exp(theory.V_inf_norm) * theory.Gamma_M * (1 + cpg))
    elif applicable:
        thr = np.inf
    else:
        thr = float("nan")
    if isinstance(params, ScalarModelParams):
        delta = params.delta
    else:
        delta = params.max_delta
    met31 = bool(applicable and delta <= thr)

    K1 = K2 = float("nan")
    K_delta = float("nan")
    K_met = False
    if isinstance(params, ScalarModelParams) and stationary is not None:
        grid = params.grid
        e_l = np.exp(-theory.V_l)
        w = stationary.values * np.exp(params.V.values)
        K1 = C_P * (
            e_l * _sup_face_gradient(w, grid)
            + 2 * e_l * float(w.max()) * theory.grad_V_inf_norm
            + _sup_face_gradient(params.b.values, grid)
        )
        if sobolev_branch:
            K2 = 2 * np.exp(-2 * theory.V_l) * theory.grad_V_inf_norm * C_S * theory.M
        else:
            K2 = np.exp(-2 * theory.V_l) * theory.grad_V_inf_norm * C_GN * parabolic_norm
        K_delta = delta * (K1 + K2)
        K_met = bool(K_delta < 0.5 - params.delta2 * params.b_max)

    return TheoryReport(
        C_P=C_P,
        lambda_over_2CP2=theory.lam / (2 * C_P**2),
        prefactor_general=float(np.exp(3 * theory.V_inf_norm)),
        prefactor_scalar=float(np.exp(1.5 * (theory.V_u - theory.V_l))),
        rate_scalar=1 / (2 * C_P**2),
        delta=float(delta),
        delta_threshold_thm31=float(thr),
        general_applicable=bool(applicable),
        general_hypotheses_met=met31,
        Gamma_M=theory.Gamma_M,
        K1=float(K1),
        K2=float(K2),
        K_delta=float(K_delta),
        K_condition_met=K_met,
        C_GN=C_GN,
        parabolic_norm=float(parabolic_norm),
    )


@dataclass(frozen=True)
class BoundCheck:
    ok: bool
    margin: float
    n_samples: int


def verify_decay_bound(times, distances, prefactor: float, rate: float) -> BoundCheck:
    """Check ``d(t2) <= prefactor exp(-rate (t2 - t1)) d(t1)`` for all sampled t1 < t2.

    ``margin`` is the smallest ``log(bound) - log(d(t2))`` over all pairs
    (``inf`` when nothing can be violated).
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    order = np.argsort(t, kind="stable")
    t, d = t[order], d[order]
    logP = np.log(prefactor)
    with np.errstate(divide="ignore"):
        logd = np.log(d)
    # the worst t1 for a given t2 minimises rate*t1 + log d(t1) over earlier samples
    key = rate * t + logd
    prefix_min = np.minimum.accumulate(key)
    worst = prefix_min[:-1]
    later = logd[1:]
    with np.errstate(invalid="ignore"):
        m = logP - rate * t[1:] + worst - later
    # d(t2) = 0 can never violate the bound
    m = np.where(np.isneginf(later), np.inf, m)
    margin = float(np.min(m)) if m.size else float("inf")
    return BoundCheck(bool(margin >= 0), margin, int(t.size))
