"""Independent reference implementations used by the tests.

Everything here is written with plain Python loops and ``math`` so that it
shares no code with the package under test.
"""

from __future__ import annotations

import math

from scipy import integrate


def flux_oracle(rl, rr, xl, xr, bf, vl, vr, h, d2):
    dxi = (xr - xl) / h
    dv = (vr - vl) / h
    a = -dxi
    c = (1.0 - d2 * bf) * (-dv)
    plus = max(a, 0.0) + max(c, 0.0)
    minus = min(a, 0.0) + min(c, 0.0)
    return rl * plus + rr * minus + d2 * bf * (rr - rl) / h


def scalar_step_oracle(r, b, b_face, V, centers, widths, d1, d2, d3, eps, dt):
    """One explicit step of the 1D scheme; returns ``(new_values, face_fluxes)``."""
    n = len(r)
    xi = [math.log(r[i] + eps) + d1 * r[i] + d3 * b[i] for i in range(n)]
    F = [0.0] * (n + 1)
    for i in range(n - 1):
        h = centers[i + 1] - centers[i]
        F[i + 1] = flux_oracle(r[i], r[i + 1], xi[i], xi[i + 1], b_face[i], V[i], V[i + 1], h, d2)
    new = [r[i] - dt / widths[i] * (F[i + 1] - F[i]) for i in range(n)]
    return new, F


def gibbs_cell_averages(V, faces):
    """Cell averages of ``exp(-V) / Z`` by adaptive quadrature."""
    Z = integrate.quad(lambda x: math.exp(-V(x)), faces[0], faces[-1], epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    out = []
    for a, b in zip(faces[:-1], faces[1:]):
        m = integrate.quad(lambda x: math.exp(-V(x)), a, b, epsabs=1e-15, epsrel=1e-13)[0]
        out.append(m / Z / (b - a))
    return out


def discrete_zero_flux_profile(V_centers, h, eps=1e-7):
    """Scalar (all deltas zero) stationary profile with zero flux at every face.

    Marches face by face, solving ``F(r_left, r_right) = 0`` for ``r_right``;
    the result is normalised to unit mass.
    """
    from scipy.optimize import brentq

    q = [1.0]
    for i in range(len(V_centers) - 1):
        mdv = -(V_centers[i + 1] - V_centers[i]) / h
        rl = q[-1]

        def F(rr, rl=rl, mdv=mdv):
            a = -(math.log(rr + eps) - math.log(rl + eps)) / h
            return rl * (max(a, 0.0) + max(mdv, 0.0)) + rr * (min(a, 0.0) + min(mdv, 0.0))

        q.append(brentq(F, rl * 1e-6, rl * 1e6, xtol=1e-300, rtol=1e-15))
    total = sum(q) * h
    return [v / total for v in q]
