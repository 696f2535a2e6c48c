"""Explicit upwind finite-volume scheme with no-flux boundaries.

Face flux between cells L and R (positive means flow from L to R)::

    F = r_L [(-dxi)_+ + (1 - d2 b_f)(-dV)_+]
      + r_R [(-dxi)_- + (1 - d2 b_f)(-dV)_-]
      + d2 b_f (r_R - r_L) / dx_half

and ``r_i <- r_i - dt / dx_i (F_{i+1/2} - F_{i-1/2})`` with zero boundary
fluxes. In 2D the x and y fluxes are both evaluated at the old time level and
applied in one unsplit update.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .grid import Field, Grid
from .model import ScalarModelParams, TwoSpeciesParams, face_gradient, face_values

Params = Union[ScalarModelParams, TwoSpeciesParams]


class StepRejected(RuntimeError):
    """The explicit update produced a negative density."""


class StepControlError(RuntimeError):
    """Time step fell below the configured minimum."""

    def __init__(self, message: str, state: "State"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True, eq=False)
class State:
    """Densities at time ``t``; ``tail_limited`` counts cells limited in the last step."""

    t: float
    fields: tuple
    step_count: int = 0
    tail_limited: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise ValueError("a state needs at least one field")

    @property
    def grid(self) -> Grid:
        return self.fields[0].grid

    @property
    def masses(self) -> tuple[float, ...]:
        return tuple(f.mass() for f in self.fields)

    @classmethod
    def initial(cls, *fields: Field) -> "State":
        return cls(0.0, fields)


@dataclass(frozen=True)
class StepControl:
    dt_fixed: Optional[float] = None
    cfl_safety: float = 0.5
    dt_min: float = 1e-12
    max_halvings: int = 30

    def __post_init__(self) -> None:
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.dt_fixed is not None and not self.dt_fixed > 0:
            raise ValueError("dt_fixed must be positive")


def _pos(z):
    return np.maximum(z, 0.0)


def _neg(z):
    return np.minimum(z, 0.0)


def _donor_flux(rl, rr, mdxi, drift, diff_coef, dr):
    """Upwinded transport plus centred remainder; shared by every stepper."""
    return rl * (_pos(mdxi) + _pos(drift)) + rr * (_neg(mdxi) + _neg(drift)) + diff_coef * dr


def numerical_flux_1d(
    r_left, r_right, xi_left, xi_right, b_face, V_left, V_right, dx_half, params: ScalarModelParams
):
    """Flux through one interior face (vectorises over numpy arrays)."""
    mdxi = -(np.asarray(xi_right) - xi_left) / dx_half
    mdV = -(np.asarray(V_right) - V_left) / dx_half
    d2b = params.delta2 * np.asarray(b_face)
    return _donor_flux(r_left, r_right, mdxi, (1 - d2b) * mdV, d2b, (np.asarray(r_right) - r_left) / dx_half)


def _lo_hi(ndim: int, axis: int):
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def _pad_boundary(F: np.ndarray, axis: int) -> np.ndarray:
    """Append the zero no-flux boundary faces along ``axis``."""
    shape = list(F.shape)
    shape[axis] += 2
    out = np.zeros(shape)
    out[_interior(F.ndim, axis)] = F
    return out


def _scalar_axis_flux(r: np.ndarray, xi_r: np.ndarray, params: ScalarModelParams, axis: int) -> np.ndarray:
    grid = params.grid
    lo, hi = _lo_hi(r.ndim, axis)
    bf = params.b_faces[axis]
    d2b = params.delta2 * bf
    mdxi = -face_gradient(xi_r, grid, axis)
    drift = (1 - d2b) * (-params.grad_V_faces[axis])
    dr = face_gradient(r, grid, axis)
    return _donor_flux(r[lo], r[hi], mdxi, drift, d2b, dr)


def scalar_fluxes(r: np.ndarray, params: ScalarModelParams) -> tuple[np.ndarray, ...]:
    """Face fluxes per axis including the zero boundary faces."""
    x = np.log(r + params.epsilon) + params.delta1 * r + params.delta3 * params.b.values
    return tuple(_pad_boundary(_scalar_axis_flux(r, x, params, k), k) for k in range(r.ndim))


def assemble_fluxes_1d(state: State, params: ScalarModelParams) -> np.ndarray:
    """Length N+1 face fluxes; ``flux[0] == flux[N] == 0``."""
    if state.grid.ndim != 1:
        raise ValueError("assemble_fluxes_1d needs a 1D state")
    return scalar_fluxes(state.fields[0].values, params)[0]


def _divergence(fluxes: Sequence[np.ndarray], grid: Grid) -> np.ndarray:
    out = None
    for k, F in enumerate(fluxes):
        h = grid.axes[k].dx
        shape = [1] * len(fluxes)
        shape[k] = h.size
        lo, hi = _lo_hi(F.ndim, k)
        dF = (F[hi] - F[lo]) / h.reshape(shape)
        out = dF if out is None else out + dF
    return out


def _outflow_factors(r, fluxes, dt, grid, mask):
    """Scale factors limiting each masked cell's outflow to its content."""
    out = np.zeros_like(r)
    for k, F in enumerate(fluxes):
        lo, hi = _lo_hi(r.ndim, k)
        h = grid.axes[k].dx
        shape = [1] * r.ndim
        shape[k] = h.size
        # F[hi] is the right face of each cell, F[lo] the left one
        out += (_pos(F[hi]) + _pos(-F[lo])) / h.reshape(shape)
    out *= dt
    s = np.ones_like(r)
    over = mask & (out > r)
    # the margin keeps roundoff from overshooting the cell content
    s[over] = (1 - 1e-12) * r[over] / out[over]
    return s


def _limit(fluxes, s):
    limited = []
    for k, F in enumerate(fluxes):
        inner_lo, inner_hi = _lo_hi(s.ndim, k)
        Fi = F[_interior(F.ndim, k)]
        # donor cell: left one for positive flux, right one otherwise
        scale = np.where(Fi > 0, s[inner_lo], s[inner_hi])
        limited.append(_pad_boundary(Fi * scale, k))
    return limited


def _interior(ndim, axis):
    idx = [slice(None)] * ndim
    idx[axis] = slice(1, -1)
    return tuple(idx)


def apply_fluxes(r: np.ndarray, fluxes, dt: float, grid: Grid, tail: float) -> tuple[np.ndarray, int]:
    """Conservative update; returns the new values and the number of limited cells.

    If the plain update goes negative only in cells whose old value is below
    ``tail``, the outflow of those cells is scaled down so that they empty at
    most. This keeps mass conservation and leaves every other flux intact.
    Any other negativity raises :class:`StepRejected`.
    """
    new = r - dt * _divergence(fluxes, grid)
    if new.min() >= 0:
        return new, 0
    bad = new < 0
    if np.any(r[bad] >= tail):
        raise StepRejected(f"negative density {new.min():.3e}")
    s = _outflow_factors(r, fluxes, dt, grid, r < tail)
    n_limited = int(np.count_nonzero(s < 1))
    new = r - dt * _divergence(_limit(fluxes, s), grid)
    if new.min() < 0:
        raise StepRejected(f"negative density {new.min():.3e} after tail limiting")
    return new, n_limited


def step_explicit(state: State, dt: float, params: ScalarModelParams) -> State:
    """One explicit Euler step of the scalar scheme (1D or 2D)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    r = state.fields[0].values
    new, n_lim = apply_fluxes(r, scalar_fluxes(r, params), dt, state.grid, params.epsilon)
    return State(state.t + dt, (Field(new, state.grid),), state.step_count + 1, n_lim)


def step_2d(state: State, dt: float, params: ScalarModelParams) -> State:
    if state.grid.ndim != 2:
        raise ValueError("step_2d needs a 2D state")
    return step_explicit(state, dt, params)


def _cross_index(params: TwoSpeciesParams):
    # species i uses delta_{i,2} against the other species' density
    return params.delta[0, 1], params.delta[1, 1]


def two_species_fluxes(u1: np.ndarray, u2: np.ndarray, params: TwoSpeciesParams):
    """Per-species, per-axis face fluxes in transport/remainder form.

    Species i with partner j::

        xi_i    = log(u_i + eps) + delta_{i,1} u_i + delta_{i,3} u_j
        drift_i = (1 - c_i u_j) (-dV_i) + c_j u_j (-dV_j)
        remainder coefficient c_i u_j,   c_1 = delta_{1,2}, c_2 = delta_{2,2}

    scaled by ``D_i``; partner densities at faces are neighbour means.
    """
    grid = params.grid
    dl = params.delta
    eps = params.epsilon
    c = _cross_index(params)
    us = (u1, u2)
    out = []
    for i in (0, 1):
        j = 1 - i
        ui, uj = us[i], us[j]
        Di = params.D[i]
        if Di == 0:
            out.append(tuple(_pad_boundary(np.zeros_like(face_values(ui, k)), k) for k in range(ui.ndim)))
            continue
        x = np.log(ui + eps) + dl[i, 0] * ui + dl[i, 2] * uj
        per_axis = []
        for k in range(ui.ndim):
            lo, hi = _lo_hi(ui.ndim, k)
            ujf = face_values(uj, k)
            cf = c[i] * ujf
            gVi = params.grad_V_faces[i][k]
            gVj = params.grad_V_faces[j][k]
            drift = (1 - cf) * (-gVi) + c[j] * ujf * (-gVj)
            mdxi = -face_gradient(x, grid, k)
            F = _donor_flux(ui[lo], ui[hi], mdxi, drift, cf, face_gradient(ui, grid, k))
            per_axis.append(_pad_boundary(Di * F, k))
        out.append(tuple(per_axis))
    return out


def step_two_species(state: State, dt: float, params: TwoSpeciesParams) -> State:
    if not dt > 0:
        raise ValueError("dt must be positive")
    u1, u2 = (f.values for f in state.fields)
    fl = two_species_fluxes(u1, u2, params)
    new1, n1 = apply_fluxes(u1, fl[0], dt, state.grid, params.epsilon)
    new2, n2 = apply_fluxes(u2, fl[1], dt, state.grid, params.epsilon)
    g = state.grid
    return State(state.t + dt, (Field(new1, g), Field(new2, g)), state.step_count + 1, n1 + n2)


def step(state: State, dt: float, params: Params) -> State:
    if isinstance(params, TwoSpeciesParams):
        return step_two_species(state, dt, params)
    return step_explicit(state, dt, params)


def _stability_rate(diff_coef: float, speeds: Sequence[np.ndarray], grid: Grid) -> float:
    """``sum_axes max_faces (2 D / h^2 + |v| / h)``; its inverse is the 1D-style CFL step."""
    total = 0.0
    for k, v in enumerate(speeds):
        h = grid.axes[k].dx_half
        shape = [1] * grid.ndim
        shape[k] = h.size
        h = h.reshape(shape)
        total += float(np.max(2.0 * diff_coef / h**2 + np.abs(v) / h))
    return total


def suggest_dt(state: State, params: Params, control: StepControl = StepControl()) -> float:
    """CFL-limited step ``safety / sum_axes max(2 D / h^2 + |v| / h)``.

    In 1D this is ``safety * min h^2 / (2 D + h |v|)`` with
    ``D = 1 + d1 max r + d2 max b`` and ``|v|`` the sum of the face speeds
    ``|dxi|`` and ``|(1 - d2 b) dV|``.
    """
    if control.dt_fixed is not None:
        return control.dt_fixed
    grid = state.grid
    if isinstance(params, TwoSpeciesParams):
        rate = 0.0
        u1, u2 = (f.values for f in state.fields)
        dl = params.delta
        c = _cross_index(params)
        us = (u1, u2)
        for i in (0, 1):
            if params.D[i] == 0:
                continue
            j = 1 - i
            ui, uj = us[i], us[j]
            x = np.log(ui + params.epsilon) + dl[i, 0] * ui + dl[i, 2] * uj
            coef = 1 + dl[i, 0] * ui.max() + c[i] * uj.max()
            speeds = []
            for k in range(grid.ndim):
                ujf = face_values(uj, k)
                drift = (1 - c[i] * ujf) * params.grad_V_faces[i][k] - c[j] * ujf * params.grad_V_faces[j][k]
                speeds.append(np.abs(face_gradient(x, grid, k)) + np.abs(drift))
            rate = max(rate, params.D[i] * _stability_rate(coef, speeds, grid))
    else:
        r = state.fields[0].values
        x = np.log(r + params.epsilon) + params.delta1 * r + params.delta3 * params.b.values
        coef = 1 + params.delta1 * r.max() + params.delta2 * params.b_max
        speeds = [
            np.abs(face_gradient(x, grid, k))
            + np.abs((1 - params.delta2 * params.b_faces[k]) * params.grad_V_faces[k])
            for k in range(grid.ndim)
        ]
        rate = _stability_rate(coef, speeds, grid)
    dt = control.cfl_safety / rate if rate > 0 else np.inf
    if dt < control.dt_min:
        raise StepControlError(f"suggested dt {dt:.3e} below dt_min {control.dt_min:.3e}", state)
    return dt


def evolve(
    state: State,
    params: Params,
    t_end: float,
    control: StepControl = StepControl(),
    callback: Optional[Callable[[State, frozenset], None]] = None,
    stop_times: Iterable[float] = (),
) -> State:
    """March to ``t_end``; ``callback(state, flags)`` runs after each accepted step.

    Steps are shortened to land exactly on every time in ``stop_times``.
    A rejected step is retried with half the step size.
    """
    stops = sorted(t for t in stop_times if state.t < t < t_end) + [t_end]
    k = 0
    while state.t < t_end:
        while stops[k] <= state.t:
            k += 1
        target = stops[k]
        dt = suggest_dt(state, params, control)
        flags = set()
        last = dt >= target - state.t
        if last:
            dt = target - state.t
        for _ in range(control.max_halvings + 1):
            try:
                new = step(state, dt, params)
                break
            except StepRejected:
                flags.add("dt_rejected")
                dt *= 0.5
                last = False
                if dt < control.dt_min:
                    raise StepControlError(f"dt {dt:.3e} below dt_min after rejection", state)
        else:
            raise StepControlError("too many step rejections", state)
        if last:
            # avoid drifting past an output time by rounding
            new = replace(new, t=target)
        if new.tail_limited:
            flags.add("tail_limited")
        state = new
        if callback is not None:
            callback(state, frozenset(flags))
    return state
