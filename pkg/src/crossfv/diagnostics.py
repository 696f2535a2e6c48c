"""Run monitors: mass, positivity, entropy, and the L-infinity bound ratio."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .grid import Field
from .model import (
    ScalarModelParams,
    TwoSpeciesParams,
    entropy_scalar,
    entropy_two_species,
    face_gradient,
)
from .scheme import State

FLAGS = ("ellipticity_violation", "dt_rejected", "entropy_increase", "tail_limited")

# column order of diagnostics.csv
CSV_COLUMNS = (
    "t",
    "step",
    "mass_1",
    "mass_2",
    "entropy",
    "min_value",
    "max_value",
    "l2_to_reference",
    "max_principle_ratio",
    "l2_norm",
    "grad_l2",
    "flags",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    step: int
    masses: tuple[float, ...]
    entropy: float
    min_value: float
    max_value: float
    l2_to_reference: Optional[float]
    max_principle_ratio: float
    l2_norm: float
    grad_l2: float
    flags: frozenset = frozenset()

    def row(self) -> list:
        m2 = self.masses[1] if len(self.masses) > 1 else None
        return [
            self.t,
            self.step,
            self.masses[0],
            m2,
            self.entropy,
            self.min_value,
            self.max_value,
            self.l2_to_reference,
            self.max_principle_ratio,
            self.l2_norm,
            self.grad_l2,
            ";".join(sorted(self.flags)),
        ]


def _potentials(params) -> tuple[np.ndarray, ...]:
    if isinstance(params, ScalarModelParams):
        return (params.V.values,)
    return (params.V1.values, params.V2.values)


def ellipticity_violated(state: State, params) -> bool:
    """Scalar: ``1 - d2 max b <= 0``. Two species: ``I + delta Phi`` loses definiteness."""
    if isinstance(params, ScalarModelParams):
        return not params.ellipticity_ok
    u1, u2 = (f.values for f in state.fields)
    dl = params.delta
    a = 1 + dl[0, 0] * u1 - dl[0, 1] * u2
    d = 1 + dl[1, 0] * u2 - dl[1, 1] * u1
    off = 0.5 * (dl[0, 2] * u1 + dl[1, 2] * u2)
    # symmetric 2x2 part is positive definite iff a > 0 and a d > off^2
    return bool(np.any(a <= 0) or np.any(a * d <= off**2))


def _grad_l2(values: np.ndarray, grid) -> float:
    total = 0.0
    for k in range(grid.ndim):
        g = face_gradient(values, grid, k)
        # face-area weights: volume of the dual cell ~ dx_half times the transverse width
        w = grid.axes[k].dx_half
        if grid.ndim == 2:
            other = grid.axes[1 - k].dx
            w = np.multiply.outer(w, other) if k == 0 else np.multiply.outer(other, w)
        total += float(np.sum(w * g**2))
    return float(np.sqrt(total))


def record(
    state: State,
    params: Union[ScalarModelParams, TwoSpeciesParams],
    reference: Optional[Union[Field, Sequence[Field]]] = None,
    r0_sup: Optional[Sequence[float]] = None,
    flags: Iterable[str] = (),
) -> DiagnosticsRecord:
    """Diagnostics of one state.

    ``r0_sup`` holds ``||r_0||_inf`` per species (defaults to the current
    sup, giving ratio ``<= 1``). The ratio is the maximum over species of
    ``sup_x r e^{V - ||V||_inf} / ||r_0||_inf``; a zero initial sup gives 0.
    ``l2_norm`` and ``grad_l2`` are discrete ``L2`` norms of the first species
    and of its gradient.
    """
    fields = state.fields
    grid = state.grid
    if isinstance(params, ScalarModelParams):
        entropy = entropy_scalar(fields[0], params)
    else:
        entropy = entropy_two_species(fields[0], fields[1], params)
    vals = [f.values for f in fields]
    sups = [float(v.max()) for v in vals] if r0_sup is None else list(r0_sup)
    ratio = 0.0
    for v, V, s in zip(vals, _potentials(params), sups):
        if s > 0:
            w = np.exp(V - np.abs(V).max())
            ratio = max(ratio, float(np.max(v * w)) / s)
    l2 = None
    if reference is not None:
        refs = (reference,) if isinstance(reference, Field) else tuple(reference)
        l2 = float(
            np.sqrt(sum(np.sum(grid.cell_volumes * (f.values - g.values) ** 2) for f, g in zip(fields, refs)))
        )
    fl = set(flags)
    if ellipticity_violated(state, params):
        fl.add("ellipticity_violation")
    unknown = fl - set(FLAGS)
    if unknown:
        raise ValueError(f"unknown flags {sorted(unknown)}")
    return DiagnosticsRecord(
        t=float(state.t),
        step=int(state.step_count),
        masses=state.masses,
        entropy=entropy,
        min_value=float(min(v.min() for v in vals)),
        max_value=float(max(v.max() for v in vals)),
        l2_to_reference=l2,
        max_principle_ratio=ratio,
        l2_norm=float(np.sqrt(np.sum(grid.cell_volumes * vals[0] ** 2))),
        grad_l2=_grad_l2(vals[0], grid),
        flags=frozenset(fl),
    )


def is_gradient_flow(params) -> bool:
    """Exact gradient-flow regimes: scalar with ``d2 = 0``; two species with ``G = 0``."""
    if isinstance(params, ScalarModelParams):
        return params.delta2 == 0
    dl = params.delta
    k = params.kappa
    return bool(
        np.isclose(dl[0, 0], k)
        and np.isclose(dl[1, 0], k)
        and np.allclose(dl[0], dl[1])
    )


@dataclass(frozen=True)
class EntropyReport:
    monotone: bool
    asserted: bool
    tolerance: float
    max_increase: float
    violations: tuple[int, ...]


def check_entropy_dissipation(records: Sequence[DiagnosticsRecord], gradient_flow: bool) -> EntropyReport:
    """``E(t_{n+1}) <= E(t_n) + 1e-10 (1 + |E(0)|)`` over consecutive records.

    Raises AssertionError on a violation when ``gradient_flow`` is true;
    otherwise the violations are only reported.
    """
    E = np.array([r.entropy for r in records], dtype=float)
    tol = 1e-10 * (1 + abs(E[0])) if E.size else 0.0
    inc = np.diff(E)
    bad = tuple(int(i) + 1 for i in np.nonzero(inc > tol)[0])
    report = EntropyReport(
        monotone=not bad,
        asserted=bool(gradient_flow),
        tolerance=tol,
        max_increase=float(inc.max()) if inc.size else 0.0,
        violations=bad,
    )
    if gradient_flow and bad:
        raise AssertionError(
            f"entropy increased by {report.max_increase:.3e} (> {tol:.3e}) at record {bad[0]}"
        )
    return report


def mark_entropy_increase(records: Sequence[DiagnosticsRecord]) -> list[DiagnosticsRecord]:
    """Copy of ``records`` with ``entropy_increase`` set where E grew past the tolerance."""
    if not records:
        return []
    tol = 1e-10 * (1 + abs(records[0].entropy))
    out = [records[0]]
    for prev, cur in zip(records, records[1:]):
        if cur.entropy > prev.entropy + tol:
            cur = DiagnosticsRecord(**{**cur.__dict__, "flags": cur.flags | {"entropy_increase"}})
        out.append(cur)
    return out


@dataclass(frozen=True)
class MaxPrincipleReport:
    sup_ratio: float
    first_quarter_max: float
    last_quarter_max: float
    bounded: bool
    empirical_C: float


def check_max_principle(records: Sequence[DiagnosticsRecord], delta: float) -> MaxPrincipleReport:
    """Uniform-in-time boundedness of the ratio.

    ``bounded`` means the ratio is finite and its maximum over the last quarter
    of the records does not exceed that over the first quarter by more than
    1e-8. ``empirical_C = (sup - 1) / delta^{1/2}`` (``nan`` for ``delta = 0``).
    """
    q = np.array([r.max_principle_ratio for r in records], dtype=float)
    if q.size < 4:
        raise ValueError("need at least 4 records")
    n4 = max(1, q.size // 4)
    first, last = float(q[:n4].max()), float(q[-n4:].max())
    sup = float(q.max())
    C = (sup - 1) / np.sqrt(delta) if delta > 0 else float("nan")
    return MaxPrincipleReport(sup, first, last, bool(np.isfinite(sup) and last <= first + 1e-8), float(C))


def mass_drift(records: Sequence[DiagnosticsRecord]) -> tuple[float, ...]:
    """Largest relative deviation of each species' mass from its initial value."""
    m = np.array([r.masses for r in records], dtype=float)
    m0 = m[0]
    scale = np.where(m0 != 0, np.abs(m0), 1.0)
    return tuple(float(x) for x in np.max(np.abs(m - m0), axis=0) / scale)


def parabolic_norm(records: Sequence[DiagnosticsRecord]) -> float:
    """``(sup_t ||r||^2 + int ||grad r||^2 dt)^{1/2}`` from the recorded samples (trapezoid rule)."""
    t = np.array([r.t for r in records], dtype=float)
    n2 = np.array([r.l2_norm for r in records], dtype=float) ** 2
    g2 = np.array([r.grad_l2 for r in records], dtype=float) ** 2
    integral = float(np.sum(0.5 * (g2[1:] + g2[:-1]) * np.diff(t))) if t.size > 1 else 0.0
    return float(np.sqrt(n2.max(initial=0.0) + integral))
