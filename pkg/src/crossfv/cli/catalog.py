"""Named analytic functions used by scenario files.

A function is a JSON object ``{"kind": <name>, ...parameters}``. Each
compiles to a numpy callable taking one coordinate array per axis.

=================  ==========================================================
kind               value
=================  ==========================================================
constant           ``value``
gaussian           ``amplitude * exp(-|x - center|^2 / (2 sigma^2))``;
                   ``amplitude`` defaults to ``(2 pi sigma^2)^(-d/2)``
sum                sum of ``terms``
scaled             ``factor * of``
piecewise_power    ``left_coef (c - x)^left_power`` for ``x < c``, else
                   ``right_coef (x - c)^right_power`` (``c = breakpoint``)
quadratic_well     ``scale * |x - center|^2``
cosine_sum         ``offset + sum_a cos(frequency x_a)``
cosine_product     ``prod_a (offset + cos(frequency (x_a + shift_a)))``
                   times the indicator of the optional ``support`` box
ring_sine_barrier  ``sin(frequency rho)`` on ``rho_min <= rho <= rho_max``,
                   ``rho = |x - center|``, times the optional ``modulation``
positive_part      ``max(of, 0)``
normalized         ``of`` rescaled to total ``mass`` by midpoint quadrature
=================  ==========================================================
"""

from __future__ import annotations

from typing import Any, Callable, Mapping

import numpy as np

from ..grid import Grid, sample_at_centers

Func = Callable[..., np.ndarray]


class ScenarioError(ValueError):
    """Invalid scenario content; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _number(desc, key, path, default=None, positive=False):
    if key not in desc:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "missing")
        return default
    v = desc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ScenarioError(f"{path}.{key}", "must be a finite number")
    if positive and not v > 0:
        raise ScenarioError(f"{path}.{key}", "must be positive")
    return float(v)


def _vector(desc, key, path, ndim, default=None):
    if key not in desc:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "missing")
        return np.full(ndim, float(default))
    v = desc[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v] * ndim
    if not isinstance(v, list) or len(v) != ndim:
        raise ScenarioError(f"{path}.{key}", f"must be a number or a list of {ndim} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not np.isfinite(x):
            raise ScenarioError(f"{path}.{key}[{i}]", "must be a finite number")
        out.append(float(x))
    return np.array(out)


_KEYS: dict[str, set] = {
    "constant": {"value"},
    "gaussian": {"center", "sigma", "amplitude"},
    "sum": {"terms"},
    "scaled": {"factor", "of"},
    "piecewise_power": {"breakpoint", "left_coef", "left_power", "right_coef", "right_power"},
    "quadratic_well": {"center", "scale"},
    "cosine_sum": {"offset", "frequency"},
    "cosine_product": {"offset", "frequency", "shift", "support"},
    "ring_sine_barrier": {"center", "frequency", "rho_min", "rho_max", "modulation"},
    "positive_part": {"of"},
    "normalized": {"of", "mass"},
}

KINDS = tuple(_KEYS)


def _sum(parts):
    def f(*x):
        return sum(p(*x) for p in parts)

    return f


def compile_function(desc: Any, grid: Grid, path: str = "function") -> Func:
    """Validate ``desc`` and return the callable it describes on ``grid``."""
    if not isinstance(desc, Mapping):
        raise ScenarioError(path, "a function must be an object with a 'kind'")
    kind = desc.get("kind")
    if kind not in _KEYS:
        raise ScenarioError(f"{path}.kind", f"unknown function kind {kind!r}; expected one of {', '.join(KINDS)}")
    extra = set(desc) - _KEYS[kind] - {"kind"}
    if extra:
        raise ScenarioError(f"{path}.{sorted(extra)[0]}", f"unknown key for kind {kind!r}")
    d = grid.ndim

    if kind == "constant":
        value = _number(desc, "value", path)
        return lambda *x: np.full(np.broadcast(*x).shape, value)

    if kind == "gaussian":
        center = _vector(desc, "center", path, d)
        sigma = _number(desc, "sigma", path, positive=True)
        amp = _number(desc, "amplitude", path, default=(2 * np.pi * sigma**2) ** (-d / 2))

        def gauss(*x):
            q = sum((xi - c) ** 2 for xi, c in zip(x, center))
            return amp * np.exp(-q / (2 * sigma**2))

        return gauss

    if kind == "sum":
        terms = desc.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ScenarioError(f"{path}.terms", "must be a non-empty list of functions")
        return _sum([compile_function(t, grid, f"{path}.terms[{i}]") for i, t in enumerate(terms)])

    if kind == "scaled":
        factor = _number(desc, "factor", path)
        inner = compile_function(desc.get("of"), grid, f"{path}.of")
        return lambda *x: factor * inner(*x)

    if kind == "piecewise_power":
        if d != 1:
            raise ScenarioError(f"{path}.kind", "piecewise_power is one-dimensional")
        c = _number(desc, "breakpoint", path)
        al, pl = _number(desc, "left_coef", path), _number(desc, "left_power", path)
        ar, pr = _number(desc, "right_coef", path), _number(desc, "right_power", path)
        if pl < 0 or pr < 0:
            raise ScenarioError(f"{path}.left_power" if pl < 0 else f"{path}.right_power", "must be >= 0")

        def pw(x):
            left = np.maximum(c - x, 0.0)
            right = np.maximum(x - c, 0.0)
            return np.where(x < c, al * left**pl, ar * right**pr)

        return pw

    if kind == "quadratic_well":
        center = _vector(desc, "center", path, d, default=0.0)
        scale = _number(desc, "scale", path, default=0.5)
        return lambda *x: scale * sum((xi - c) ** 2 for xi, c in zip(x, center))

    if kind == "cosine_sum":
        offset = _number(desc, "offset", path, default=1.0)
        freq = _number(desc, "frequency", path)
        return lambda *x: offset + sum(np.cos(freq * xi) for xi in x)

    if kind == "cosine_product":
        offset = _number(desc, "offset", path, default=1.0)
        freq = _number(desc, "frequency", path)
        shift = _vector(desc, "shift", path, d, default=0.0)
        support = None
        if "support" in desc:
            sup = desc["support"]
            if not isinstance(sup, list) or len(sup) != d:
                raise ScenarioError(f"{path}.support", f"must list {d} [lo, hi] intervals")
            support = []
            for i, iv in enumerate(sup):
                lohi = _vector({"iv": iv}, "iv", f"{path}.support[{i}]", 2)
                if not lohi[0] < lohi[1]:
                    raise ScenarioError(f"{path}.support[{i}]", "needs lo < hi")
                support.append(lohi)

        def cp(*x):
            out = 1.0
            for a, xi in enumerate(x):
                fac = offset + np.cos(freq * (xi + shift[a]))
                if support is not None:
                    lo, hi = support[a]
                    fac = np.where((xi >= lo) & (xi <= hi), fac, 0.0)
                out = out * fac
            return out

        return cp

    if kind == "ring_sine_barrier":
        center = _vector(desc, "center", path, d)
        freq = _number(desc, "frequency", path)
        lo, hi = _number(desc, "rho_min", path), _number(desc, "rho_max", path)
        if not lo < hi:
            raise ScenarioError(f"{path}.rho_max", "must exceed rho_min")
        mod = compile_function(desc["modulation"], grid, f"{path}.modulation") if "modulation" in desc else None

        def ring(*x):
            rho = np.sqrt(sum((xi - c) ** 2 for xi, c in zip(x, center)))
            out = np.where((rho >= lo) & (rho <= hi), np.sin(freq * rho), 0.0)
            return out * mod(*x) if mod is not None else out

        return ring

    if kind == "positive_part":
        inner = compile_function(desc.get("of"), grid, f"{path}.of")
        return lambda *x: np.maximum(inner(*x), 0.0)

    # normalized
    inner = compile_function(desc.get("of"), grid, f"{path}.of")
    mass = _number(desc, "mass", path, default=1.0, positive=True)
    total = float(np.sum(sample_at_centers(inner, grid) * grid.cell_volumes))
    if not total > 0:
        raise ScenarioError(f"{path}.of", "has non-positive total mass on the grid")
    factor = mass / total
    return lambda *x: factor * inner(*x)


def check_function(desc: Any, ndim: int, path: str) -> None:
    """Structural validation without the run grid (compiles on a tiny mesh)."""
    from ..grid import build_uniform_grid_1d, build_uniform_grid_2d

    g = build_uniform_grid_1d(-1, 1, 4) if ndim == 1 else build_uniform_grid_2d(-1, 1, -1, 1, 4, 4)
    try:
        compile_function(desc, g, path)
    except ScenarioError as e:
        if "non-positive total mass" in str(e):
            return
        raise
