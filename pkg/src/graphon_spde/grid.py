"""Uniform partitions of I = [0,1], step functions, and L^p moduli of continuity.

Cells are half-open on the left, (x_{i-1}, x_i] with x_i = i/n, so the
partition covers I exactly and evaluation at 0 maps to the first cell.
All L^2 quantities are h-weighted so that a coefficient vector and the
step function it represents have the same norm.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import IncommensurableGridsError

__all__ = [
    "Partition",
    "GridFunction",
    "Modulus",
    "project_to_grid",
    "l2_distance",
    "l2_norm",
    "modulus_of_continuity",
    "grid_function_to_csv",
    "grid_function_from_csv",
]


@dataclass(frozen=True)
class Partition:
    """Uniform n-cell partition of [0,1]."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"cell count must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def edges(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) / self.n

    def cell_index(self, x) -> np.ndarray:
        """Index of the cell containing x; x = 0 maps to cell 0."""
        x = np.asarray(x, dtype=float)
        idx = np.ceil(x * self.n).astype(int) - 1
        return np.clip(idx, 0, self.n - 1)


@dataclass(frozen=True)
class GridFunction:
    """Piecewise-constant function: one value per cell of a uniform partition."""

    partition: Partition
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1 or len(vals) != self.partition.n:
            raise ValueError(
                f"expected {self.partition.n} cell values, got shape {vals.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.partition.n

    def __call__(self, x) -> np.ndarray:
        return self.values[self.partition.cell_index(x)]

    @staticmethod
    def from_values(values) -> "GridFunction":
        values = np.asarray(values, dtype=float)
        return GridFunction(Partition(len(values)), values)


@dataclass(frozen=True)
class Modulus:
    """A numerically evaluated L^p modulus of continuity at shift bound delta.

    The reported value is a supremum over a finite shift grid, hence an
    under-approximation of the true modulus.
    """

    p: float
    delta: float
    value: float


# Gauss-Legendre nodes used for cell averages of evaluable functions.
_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(order: int):
    if order not in _GL_CACHE:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = (nodes, weights)
    return _GL_CACHE[order]


def project_to_grid(f, n: int, quad_points: int = 32) -> GridFunction:
    """L^2 projection onto the n-cell step functions, i.e. cell averages.

    Accepts either an evaluable function on [0,1] (must broadcast over
    numpy arrays) or a GridFunction whose resolution is divisible by n.
    Cell averages of evaluable inputs use composite Gauss-Legendre with
    ``quad_points`` nodes per cell, exact for polynomials of degree
    < 2*quad_points.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"target resolution must be a positive integer, got {n!r}")
    n = int(n)
    if isinstance(f, GridFunction):
        m = f.n
        if m % n != 0:
            raise IncommensurableGridsError(
                f"incommensurable grids: cannot project resolution {m} onto {n}"
            )
        block = m // n
        vals = f.values.reshape(n, block).mean(axis=1)
        return GridFunction(Partition(n), vals)
    if not callable(f):
        raise TypeError("input must be a GridFunction or an evaluable function")
    nodes, weights = _gauss_legendre(quad_points)
    h = 1.0 / n
    edges = np.arange(n)[:, None] * h
    x = edges + (nodes[None, :] + 1.0) * (h / 2.0)
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    vals = fx @ weights / 2.0
    return GridFunction(Partition(n), vals)


def _common_refinement(u: GridFunction, v: GridFunction, refinement=None) -> int:
    nu, nv = u.n, v.n
    if refinement is not None:
        refinement = int(refinement)
        if refinement % nu or refinement % nv:
            raise IncommensurableGridsError(
                f"stated refinement {refinement} is not a multiple of both "
                f"{nu} and {nv}"
            )
        return refinement
    if nu % nv == 0:
        return nu
    if nv % nu == 0:
        return nv
    raise IncommensurableGridsError(
        f"incommensurable grids: neither of {nu}, {nv} divides the other and "
        "no common refinement was stated"
    )


def _refine_values(u: GridFunction, n: int) -> np.ndarray:
    return np.repeat(u.values, n // u.n)


def l2_distance(u: GridFunction, v: GridFunction, refinement=None) -> float:
    """Exact L^2(I) distance between two step functions.

    Both functions are refined to a common grid (one resolution must divide
    the other, or both must divide a stated refinement), so the integral is
    a finite sum with no quadrature error.
    """
    n = _common_refinement(u, v, refinement)
    diff = _refine_values(u, n) - _refine_values(v, n)
    return math.sqrt(float(diff @ diff) / n)


def l2_norm(u: GridFunction) -> float:
    """L^2(I) norm of a step function (h-weighted coefficient norm)."""
    return math.sqrt(float(u.values @ u.values) / u.n)


def modulus_of_continuity(f, p: float, delta: float, n_samples: int = 2048) -> Modulus:
    """Grid evaluation of the L^p modulus of continuity.

    Takes the supremum of ||f(.+h) - f||_{L^p([0,1-h])} over the uniform
    shift grid h = delta*j/n_samples, j = 1..n_samples; each shifted norm
    uses a midpoint rule with n_samples points.  Shift signs are immaterial
    by the change of variables x -> x - h, so only positive shifts are
    scanned.  The result under-approximates the true supremum.
    """
    if p < 1:
        raise ValueError(f"integrability exponent must satisfy p >= 1, got {p}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"shift bound must lie in (0,1), got {delta}")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    evaluate = f if callable(f) else None
    if evaluate is None:
        raise TypeError("input must be a GridFunction or an evaluable function")
    best = 0.0
    base = (np.arange(n_samples) + 0.5) / n_samples
    for j in range(1, n_samples + 1):
        shift = delta * j / n_samples
        width = 1.0 - shift
        x = width * base
        diff = np.abs(np.asarray(evaluate(x + shift), dtype=float)
                      - np.asarray(evaluate(x), dtype=float))
        integral = width * float(np.mean(diff ** p))
        best = max(best, integral ** (1.0 / p))
    return Modulus(p=float(p), delta=float(delta), value=best)


def grid_function_to_csv(u: GridFunction) -> str:
    """Serialize with full-precision decimals; round-trips IEEE doubles."""
    out = io.StringIO()
    out.write("n,h\n")
    out.write(f"{u.n},{u.partition.h!r}\n")
    for v in u.values:
        out.write(f"{float(v)!r}\n")
    return out.getvalue()


def grid_function_from_csv(text: str) -> GridFunction:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if len(lines) < 2 or lines[0].strip() != "n,h":
        raise ValueError("malformed grid-function CSV: missing 'n,h' header")
    n_str, _h_str = lines[1].split(",")
    n = int(n_str)
    values = [float(ln) for ln in lines[2:]]
    if len(values) != n:
        raise ValueError(f"expected {n} values, found {len(values)}")
    return GridFunction(Partition(n), np.array(values))
