"""Model coefficients for the frozen-species equation and the two-species system.

Scalar model (mobile density ``r``, frozen density ``b``, potential ``V``)::

    r_t = div((1 + d1 r - d2 b) grad r + d3 r grad b + r (1 - d2 b) grad V)

Two-species model: diffusion matrix ``A = diag(D) (I + Phi(u))`` and drift
matrix ``B`` with the small coefficients ``delta[i, j]`` (row = species,
column = 1, 2, 3).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .grid import Field, Grid, sample_at_centers

DEFAULT_EPSILON = 1e-7


class DomainError(ValueError):
    """A density argument was negative."""


class RegimeWarning(UserWarning):
    """Parameters outside the small cross-diffusion regime."""


def _check_nonnegative(*arrays) -> None:
    for a in arrays:
        if np.any(np.asarray(a) < 0):
            raise DomainError("densities must be non-negative")


def face_values(values: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic mean of neighbouring cells along ``axis`` (interior faces)."""
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (values[tuple(lo)] + values[tuple(hi)])


def face_gradient(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """``(v[i+1] - v[i]) / dx_half[i]`` along ``axis``."""
    h = grid.axes[axis].dx_half
    shape = [1] * values.ndim
    shape[axis] = h.size
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return (values[tuple(hi)] - values[tuple(lo)]) / h.reshape(shape)


def _faces_of(f: Callable, grid: Grid) -> tuple[np.ndarray, ...]:
    if grid.ndim == 1:
        return (np.asarray(f(grid.x_faces[1:-1]), dtype=float),)
    xc, yc = grid.x.x_centers, grid.y.x_centers
    xf, yf = grid.x.x_faces[1:-1], grid.y.x_faces[1:-1]
    bx = np.broadcast_to(f(xf[:, None], yc[None, :]), (xf.size, yc.size))
    by = np.broadcast_to(f(xc[:, None], yf[None, :]), (xc.size, yf.size))
    return (np.array(bx, dtype=float), np.array(by, dtype=float))


FieldSource = Union[Callable, Field, np.ndarray, float, None]


def _as_field(src: FieldSource, grid: Grid) -> Field:
    if src is None:
        return Field.constant(grid, 0.0)
    if isinstance(src, Field):
        return src
    if callable(src):
        return Field(sample_at_centers(src, grid), grid)
    return Field(np.broadcast_to(np.asarray(src, dtype=float), grid.shape), grid)


@dataclass(frozen=True, eq=False)
class ScalarModelParams:
    """Coefficients of the frozen-species equation on a fixed grid.

    ``b_faces`` and ``grad_V_faces`` hold one array per axis, sized like the
    interior faces normal to that axis.
    """

    delta1: float
    delta2: float
    delta3: float
    b: Field
    V: Field
    b_faces: tuple
    epsilon: float = DEFAULT_EPSILON
    grad_V_faces: tuple = field(init=False)

    def __post_init__(self) -> None:
        for name in ("delta1", "delta2", "delta3"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.b.grid.same_as(self.V.grid):
            raise ValueError("b and V live on different grids")
        if np.any(self.b.values < 0) or any(np.any(bf < 0) for bf in self.b_faces):
            raise ValueError("frozen density b must be non-negative")
        grid = self.grid
        object.__setattr__(
            self,
            "grad_V_faces",
            tuple(face_gradient(self.V.values, grid, k) for k in range(grid.ndim)),
        )
        if not self.ellipticity_ok:
            warnings.warn(
                f"1 - delta2 * max(b) = {1 - self.delta2 * self.b_max:.3g} <= 0",
                RegimeWarning,
                stacklevel=3,
            )

    @property
    def grid(self) -> Grid:
        return self.b.grid

    @property
    def b_max(self) -> float:
        return float(max(self.b.values.max(), *(bf.max() for bf in self.b_faces if bf.size)))

    @property
    def delta(self) -> float:
        return max(self.delta1, self.delta2, self.delta3)

    @property
    def ellipticity_ok(self) -> bool:
        return 1.0 - self.delta2 * self.b_max > 0

    @classmethod
    def build(
        cls,
        grid: Grid,
        delta1: float = 0.0,
        delta2: float = 0.0,
        delta3: float = 0.0,
        b: FieldSource = None,
        V: FieldSource = None,
        epsilon: float = DEFAULT_EPSILON,
        b_faces: Optional[tuple] = None,
    ) -> "ScalarModelParams":
        """Sample ``b`` and ``V`` on ``grid``.

        A callable ``b`` is evaluated at the cell centres and at the interior
        faces. For a ``b`` given as cell values the face values default to the
        mean of the two neighbouring cells.
        """
        bfield = _as_field(b, grid)
        if b_faces is None:
            if callable(b) and not isinstance(b, Field):
                b_faces = _faces_of(b, grid)
            else:
                b_faces = tuple(face_values(bfield.values, k) for k in range(grid.ndim))
        return cls(
            float(delta1), float(delta2), float(delta3), bfield, _as_field(V, grid),
            tuple(np.asarray(bf, dtype=float) for bf in b_faces), float(epsilon),
        )

    def as_two_species(self) -> "TwoSpeciesParams":
        """The same equation written as species 1 next to an immobile species 2."""
        delta = np.zeros((2, 3))
        delta[0] = self.delta1, self.delta2, self.delta3
        return TwoSpeciesParams(1.0, 0.0, delta, self.V, Field.constant(self.grid, 0.0), epsilon=self.epsilon)


def xi(r, b_center, params: ScalarModelParams):
    """Entropy variable ``log(r + eps) + d1 r + d3 b``."""
    r = np.asarray(r, dtype=float)
    _check_nonnegative(r)
    out = np.log(r + params.epsilon) + params.delta1 * r + params.delta3 * np.asarray(b_center, dtype=float)
    return out if out.ndim else float(out)


def entropy_scalar(r: Field, params: ScalarModelParams) -> float:
    """Cell quadrature of ``r log r + d1 r^2 / 2 + d3 r b + r V`` (eps-regularised log)."""
    v = r.values
    _check_nonnegative(v)
    dens = (
        v * np.log(v + params.epsilon)
        + 0.5 * params.delta1 * v**2
        + params.delta3 * v * params.b.values
        + v * params.V.values
    )
    return float(np.sum(dens * r.grid.cell_volumes))


@dataclass(frozen=True, eq=False)
class TwoSpeciesParams:
    """Two mobile (or one frozen, when ``D2 = 0``) species with potentials.

    ``delta[i-1, j-1]`` is the coefficient delta_{i,j}; ``d`` is the space
    dimension entering the entropy's cross term.
    """

    D1: float
    D2: float
    delta: np.ndarray
    V1: Field
    V2: Field
    d: Optional[int] = None
    epsilon: float = DEFAULT_EPSILON
    grad_V_faces: tuple = field(init=False)

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=float)
        if delta.shape != (2, 3):
            raise ValueError("delta must be a 2x3 array")
        if np.any(delta < 0) or self.D1 < 0 or self.D2 < 0:
            raise ValueError("diffusivities and delta coefficients must be non-negative")
        if delta.max(initial=0.0) > 1:
            raise ValueError("max delta must not exceed 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        grid = self.V1.grid
        if not grid.same_as(self.V2.grid):
            raise ValueError("V1 and V2 live on different grids")
        d = grid.ndim if self.d is None else int(self.d)
        if d not in (1, 2):
            raise ValueError("space dimension must be 1 or 2")
        object.__setattr__(self, "d", d)
        object.__setattr__(
            self,
            "grad_V_faces",
            tuple(
                tuple(face_gradient(V.values, grid, k) for k in range(grid.ndim))
                for V in (self.V1, self.V2)
            ),
        )

    @property
    def grid(self) -> Grid:
        return self.V1.grid

    @property
    def D(self) -> tuple[float, float]:
        return (self.D1, self.D2)

    @property
    def max_delta(self) -> float:
        return float(self.delta.max())

    @property
    def kappa(self) -> float:
        """Cross coefficient ``(d-1)(delta_12 + delta_22)`` of the entropy."""
        return (self.d - 1) * (self.delta[0, 1] + self.delta[1, 1])

    @classmethod
    def build(
        cls,
        grid: Grid,
        D1: float = 1.0,
        D2: float = 1.0,
        delta=None,
        V1: FieldSource = None,
        V2: FieldSource = None,
        d: Optional[int] = None,
        epsilon: float = DEFAULT_EPSILON,
    ) -> "TwoSpeciesParams":
        delta = np.zeros((2, 3)) if delta is None else delta
        return cls(float(D1), float(D2), delta, _as_field(V1, grid), _as_field(V2, grid), d, float(epsilon))

    @classmethod
    def equal_particles(
        cls, grid: Grid, a: float, D: float = 1.0, V1: FieldSource = None, V2: FieldSource = None,
        d: Optional[int] = None, epsilon: float = DEFAULT_EPSILON,
    ) -> "TwoSpeciesParams":
        """Identical species: ``delta_{i,1} = kappa``, ``delta_{1,j} = delta_{2,j}``.

        ``delta_{i,3} = kappa + a`` makes the first-order cross-diffusion of
        the system coincide with that of the entropy's gradient flow.
        """
        d = grid.ndim if d is None else d
        kappa = (d - 1) * 2 * a
        row = [kappa, a, kappa + a]
        return cls.build(grid, D, D, [row, row], V1, V2, d, epsilon)


def entropy_two_species(u1: Field, u2: Field, params: TwoSpeciesParams) -> float:
    a, c = u1.values, u2.values
    _check_nonnegative(a, c)
    dl = params.delta
    eps = params.epsilon
    dens = (
        a * np.log(a + eps)
        + c * np.log(c + eps)
        + a * params.V1.values
        + c * params.V2.values
        + 0.5 * (dl[0, 0] * a**2 + 2 * params.kappa * a * c + dl[1, 0] * c**2)
    )
    return float(np.sum(dens * u1.grid.cell_volumes))


def mobility_matrix(u1, u2, params: TwoSpeciesParams) -> np.ndarray:
    """Mobility of the gradient-flow form; shape ``(..., 2, 2)``."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    _check_nonnegative(u1, u2)
    d12, d22 = params.delta[0, 1], params.delta[1, 1]
    D1, D2 = params.D1, params.D2
    m = np.empty(np.broadcast(u1, u2).shape + (2, 2))
    m[..., 0, 0] = D1 * u1 * (1 - d12 * u2)
    m[..., 0, 1] = D1 * d22 * u1 * u2
    m[..., 1, 0] = D2 * d12 * u1 * u2
    m[..., 1, 1] = D2 * u2 * (1 - d22 * u1)
    return m


def perturbation_matrices(u1, u2, grad_V1, grad_V2, params: TwoSpeciesParams):
    """``delta * Phi(u)`` and ``delta * Psi(u)`` (the parts vanishing at u = 0)."""
    dl = params.delta
    phi = np.array(
        [
            [dl[0, 0] * u1 - dl[0, 1] * u2, dl[0, 2] * u1],
            [dl[1, 2] * u2, dl[1, 0] * u2 - dl[1, 1] * u1],
        ]
    )
    psi = np.array(
        [
            [0.0, (dl[1, 1] * grad_V2 - dl[0, 1] * grad_V1) * u1],
            [(dl[0, 1] * grad_V1 - dl[1, 1] * grad_V2) * u2, 0.0],
        ]
    )
    return phi, psi


def coefficients_A_B(u1: float, u2: float, grad_V1: float, grad_V2: float, params: TwoSpeciesParams):
    """Diffusion matrix ``A`` and drift matrix ``B`` at one point (one direction).

    Warns with :class:`RegimeWarning` when the symmetric part of
    ``I + delta Phi(u)`` is not positive definite.
    """
    _check_nonnegative(u1, u2)
    phi, psi = perturbation_matrices(float(u1), float(u2), float(grad_V1), float(grad_V2), params)
    Dm = np.diag(params.D)
    core = np.eye(2) + phi
    if np.linalg.eigvalsh(0.5 * (core + core.T)).min() <= 0:
        warnings.warn("I + delta*Phi(u) is not positive definite", RegimeWarning, stacklevel=2)
    A = Dm @ core
    B = Dm @ (np.diag([float(grad_V1), float(grad_V2)]) + psi)
    return A, B


def g_correction(u1, u2, grad_u1, grad_u2, params: TwoSpeciesParams) -> np.ndarray:
    """Second-order correction ``G`` separating the system from its gradient flow.

    Returns shape ``(2, d)`` for gradients of length ``d``.
    """
    _check_nonnegative(u1, u2)
    g1 = np.atleast_1d(np.asarray(grad_u1, dtype=float))
    g2 = np.atleast_1d(np.asarray(grad_u2, dtype=float))
    dl = params.delta
    d11, d12, d21, d22 = dl[0, 0], dl[0, 1], dl[1, 0], dl[1, 1]
    k = params.kappa
    uu = float(u1) * float(u2)
    row1 = params.D1 * uu * ((d11 * d12 - k * d12) * g1 + (d12 * k - d21 * d22) * g2)
    row2 = params.D2 * uu * ((d21 * d22 - k * d22) * g2 + (d22 * k - d11 * d12) * g1)
    return np.vstack([row1, row2])


@dataclass(frozen=True)
class LipschitzBounds:
    """Sup-norm bounds of ``Phi``, ``Psi`` and their derivatives over ``|u| <= M``."""

    L0_phi: float
    L1_phi: float
    L0_psi: float
    L1_psi: float
    M: float


def lipschitz_bounds(params: TwoSpeciesParams, M: float, grad_V_sup: tuple[float, float], n: int = 101) -> LipschitzBounds:
    """Maximise the spectral norms of ``Phi``, ``Psi`` over the box ``[-M, M]^2``.

    ``Phi`` and ``Psi`` are the perturbation matrices divided by the largest
    delta. Both are linear in ``u``, so the sup is attained at box corners,
    which are grid nodes, and ``L1`` is the norm of the linear map over the
    unit box.
    """
    dmax = params.max_delta
    if dmax == 0 or M == 0:
        return LipschitzBounds(0.0, 0.0, 0.0, 0.0, float(M))
    s = np.linspace(-1.0, 1.0, n)
    U1, U2 = (a.ravel() for a in np.meshgrid(s, s, indexing="ij"))
    g1, g2 = grad_V_sup
    dl = params.delta
    # worst-case sign of the potential gradients
    c = abs(dl[1, 1] * g2) + abs(dl[0, 1] * g1)
    phi = np.empty((U1.size, 2, 2))
    phi[:, 0, 0] = dl[0, 0] * U1 - dl[0, 1] * U2
    phi[:, 0, 1] = dl[0, 2] * U1
    phi[:, 1, 0] = dl[1, 2] * U2
    phi[:, 1, 1] = dl[1, 0] * U2 - dl[1, 1] * U1
    psi = np.zeros_like(phi)
    psi[:, 0, 1] = c * U1
    psi[:, 1, 0] = c * U2
    l1_phi = float(np.linalg.norm(phi, ord=2, axis=(1, 2)).max()) / dmax
    l1_psi = float(np.linalg.norm(psi, ord=2, axis=(1, 2)).max()) / dmax
    return LipschitzBounds(M * l1_phi, l1_phi, M * l1_psi, l1_psi, float(M))


@dataclass(frozen=True)
class TheoryParams:
    """Analytical constants entering the decay estimates."""

    lam: float
    Lam: float
    C_P: float
    V_inf_norm: float
    grad_V_inf_norm: float
    V_l: float
    V_u: float
    M: float
    Gamma_M: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.lam <= self.Lam:
            raise ValueError("need 0 <= lambda <= Lambda")
        if not self.V_l <= self.V_u:
            raise ValueError("need V_l <= V_u")
        if not self.C_P > 0:
            raise ValueError("Poincare constant must be positive")


def poincare_constant(grid: Grid) -> float:
    """``diam / pi``, valid on convex domains (every grid here is a box)."""
    return grid.diameter / np.pi


def gamma_M(theory: TheoryParams, bounds: LipschitzBounds, u_star_sup: float, grad_u_star_sup: float) -> float:
    C_P = theory.C_P
    return float(
        max(
            bounds.L0_phi,
            bounds.L1_phi * grad_u_star_sup * C_P,
            bounds.L0_psi * C_P,
            bounds.L1_psi * u_star_sup * C_P,
        )
    )
