"""Interaction kernels on the unit square and their Galerkin coefficient matrices.

A kernel is projected onto the n x n piecewise-constant basis by normalized
cell-pair integrals.  Band and the other structured kinds use closed-form
geometry so that convergence studies carry no quadrature error in their
reference chain; custom kernels fall back to adaptive Gauss-Kronrod.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import IncommensurableGridsError, QuadratureConvergenceError
from .quadrature import integrate_rectangle

__all__ = [
    "Graphon",
    "KernelMatrix",
    "project_kernel",
    "kernel_bounds",
    "projection_error",
    "graphon_from_name",
    "kernel_matrix_to_csv",
    "kernel_matrix_from_csv",
]


def _band_indicator(r):
    def evaluate(x, y):
        d = np.abs(np.asarray(x) - np.asarray(y))
        return (np.minimum(d, 1.0 - d) < r).astype(float)

    return evaluate


@dataclass(frozen=True)
class Graphon:
    """Bounded symmetric kernel K(x,y) on [0,1]^2 with regularity metadata.

    ``beta`` is the declared Lipschitz exponent in L^2 of the square;
    ``analytic`` marks kinds whose cell integrals have closed form;
    ``translation_invariant`` marks K(x,y) = kappa(x-y mod 1), whose
    coefficient matrices are circulant.
    """

    kind: str
    evaluator: Callable
    beta: Optional[float] = None
    analytic: bool = False
    translation_invariant: bool = False
    params: tuple = ()

    def __call__(self, x, y):
        return self.evaluator(x, y)

    @property
    def label(self) -> str:
        if self.params:
            inner = ",".join(f"{k}={v!r}" for k, v in self.params)
            return f"{self.kind}:{inner}"
        return self.kind

    @staticmethod
    def band(r: float) -> "Graphon":
        """Indicator of the periodic band min(|x-y|, 1-|x-y|) < r."""
        if not (0.0 < r < 1.0):
            raise ValueError(f"band radius must lie in (0,1), got {r}")
        return Graphon(
            kind="band",
            evaluator=_band_indicator(r),
            beta=0.5,
            analytic=True,
            translation_invariant=True,
            params=(("r", float(r)),),
        )

    @staticmethod
    def constant(c: float) -> "Graphon":
        return Graphon(
            kind="constant",
            evaluator=lambda x, y: np.broadcast_arrays(
                np.full_like(np.asarray(x, dtype=float), c), np.asarray(y)
            )[0],
            beta=1.0,
            analytic=True,
            translation_invariant=True,
            params=(("c", float(c)),),
        )

    @staticmethod
    def product() -> "Graphon":
        return Graphon(
            kind="product",
            evaluator=lambda x, y: np.asarray(x, dtype=float) * np.asarray(y, dtype=float),
            beta=1.0,
            analytic=True,
            translation_invariant=False,
        )

    @staticmethod
    def custom(evaluator: Callable, beta=None, translation_invariant=False) -> "Graphon":
        return Graphon(
            kind="custom",
            evaluator=evaluator,
            beta=beta,
            analytic=False,
            translation_invariant=translation_invariant,
        )


@dataclass(frozen=True)
class KernelMatrix:
    """Projected kernel coefficients: coeffs[i,j] = n^2 * integral over cell_i x cell_j."""

    n: int
    coeffs: np.ndarray
    source_beta: Optional[float] = None
    circulant: bool = False
    source_kind: str = "custom"

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True)
        if c.shape != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("kernel coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    def row_mass_bound(self) -> float:
        """max_i h * sum_j coeffs[i,j]^2, a discrete ess-sup row bound."""
        return float(np.max(np.sum(self.coeffs ** 2, axis=1))) / self.n


def _clamp_antiderivative(z, w):
    # antiderivative of t -> clamp(t, 0, w), vectorized
    z = np.asarray(z, dtype=float)
    return 0.5 * np.clip(z, 0.0, w) ** 2 + w * np.maximum(z - w, 0.0)


def _halfplane_area(c, x0, x1, y0, y1):
    """Area of {(x,y) in [x0,x1]x[y0,y1] : x - y <= c}."""
    w = x1 - x0
    lo = y0 + c - x0
    hi = y1 + c - x0
    return _clamp_antiderivative(hi, w) - _clamp_antiderivative(lo, w)


def _band_cell_area(r, x0, x1, y0, y1):
    """Exact area of the periodic band inside an axis-aligned rectangle."""
    full = np.asarray((x1 - x0) * (y1 - y0), dtype=float)
    if r >= 0.5:
        return full
    near = _halfplane_area(r, x0, x1, y0, y1) - _halfplane_area(-r, x0, x1, y0, y1)
    far = (full - _halfplane_area(1.0 - r, x0, x1, y0, y1)) + _halfplane_area(
        -(1.0 - r), x0, x1, y0, y1
    )
    return near + far


def _circulant_from_column(col: np.ndarray) -> np.ndarray:
    n = len(col)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return col[idx]


def project_kernel(K: Graphon, n: int, tol: float = 1e-10) -> KernelMatrix:
    """Project a kernel onto the n x n cell basis (normalized cell-pair integrals).

    Analytic kinds (band, constant, product) use closed-form integrals, exact
    to rounding.  Custom kernels use adaptive Gauss-Kronrod per cell pair with
    absolute coefficient tolerance ``tol`` and a budget of 10^3 panels per pair.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"resolution must be a positive integer, got {n!r}")
    if tol <= 0:
        raise ValueError("quadrature tolerance must be positive")
    n = int(n)
    h = 1.0 / n
    if K.kind == "constant":
        c = dict(K.params)["c"]
        coeffs = np.full((n, n), c)
        return KernelMatrix(n, coeffs, K.beta, circulant=True, source_kind=K.kind)
    if K.kind == "band":
        r = dict(K.params)["r"]
        i = np.arange(n, dtype=float)
        col = _band_cell_area(r, i * h, (i + 1) * h, 0.0, h) / (h * h)
        return KernelMatrix(
            n, _circulant_from_column(col), K.beta, circulant=True, source_kind=K.kind
        )
    if K.kind == "product":
        mid = (np.arange(n) + 0.5) * h  # cell average of the identity
        return KernelMatrix(n, np.outer(mid, mid), K.beta, circulant=False,
                            source_kind=K.kind)
    # custom kernel: adaptive quadrature, coefficient tolerance tol
    cell_tol = tol * h * h
    if K.translation_invariant:
        col = np.empty(n)
        for i in range(n):
            try:
                integral, _ = integrate_rectangle(
                    K.evaluator, i * h, (i + 1) * h, 0.0, h, cell_tol
                )
            except QuadratureConvergenceError as exc:
                raise QuadratureConvergenceError(
                    f"cell pair ({i},0): {exc}", cell_pair=(i, 0),
                    error_estimate=exc.error_estimate,
                ) from exc
            col[i] = integral / (h * h)
        coeffs = _circulant_from_column(col)
        return KernelMatrix(n, coeffs, K.beta, circulant=True, source_kind=K.kind)
    coeffs = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            try:
                integral, _ = integrate_rectangle(
                    K.evaluator, i * h, (i + 1) * h, j * h, (j + 1) * h, cell_tol
                )
            except QuadratureConvergenceError as exc:
                raise QuadratureConvergenceError(
                    f"cell pair ({i},{j}): {exc}", cell_pair=(i, j),
                    error_estimate=exc.error_estimate,
                ) from exc
            coeffs[i, j] = integral / (h * h)
    return KernelMatrix(n, coeffs, K.beta, circulant=False, source_kind=K.kind)


def kernel_bounds(K: Graphon, resolution: int = 1024) -> tuple[float, float]:
    """Row/column square-mass bounds: ess-sup_x int K(x,y)^2 dy and its transpose.

    Exact for analytic kinds; otherwise a midpoint-grid under-approximation
    of the essential supremum at the given resolution.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    if K.kind == "band":
        r = dict(K.params)["r"]
        mass = min(2.0 * r, 1.0)
        return mass, mass
    if K.kind == "constant":
        c = dict(K.params)["c"]
        return c * c, c * c
    if K.kind == "product":
        return 1.0 / 3.0, 1.0 / 3.0
    xs = (np.arange(resolution) + 0.5) / resolution
    vals = np.asarray(K.evaluator(xs[:, None], xs[None, :]), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("unbounded evaluator: non-finite kernel sample detected")
    sq = vals ** 2
    k1 = float(np.max(sq.mean(axis=1)))
    k2 = float(np.max(sq.mean(axis=0)))
    return k1, k2


def _band_l1_slice_errors(r, Kn: KernelMatrix, resolution: int) -> np.ndarray:
    """Exact int |K(x,.) - (P_n K)(x,.)| dy for each fine-grid midpoint x."""
    n = Kn.n
    h = 1.0 / n
    edges = np.arange(n + 1) * h
    left, right = edges[:-1], edges[1:]
    xs = (np.arange(resolution) + 0.5) / resolution
    out = np.empty(resolution)
    for k, x in enumerate(xs):
        if r >= 0.5:
            parts = [(0.0, 1.0)]
        else:
            a, b = x - r, x + r
            if a < 0.0:
                parts = [(0.0, b), (a + 1.0, 1.0)]
            elif b > 1.0:
                parts = [(0.0, b - 1.0), (a, 1.0)]
            else:
                parts = [(a, b)]
        overlap = np.zeros(n)
        for lo, hi in parts:
            overlap += np.clip(np.minimum(right, hi) - np.maximum(left, lo), 0.0, None)
        row = Kn.coeffs[min(int(math.ceil(x * n)) - 1, n - 1)]
        out[k] = float(np.sum(overlap * (1.0 - row) + (h - overlap) * row))
    return out


def projection_error(K: Graphon, Kn: KernelMatrix, norm: str = "L2xy",
                     resolution: int | None = None, tol: float = 1e-10) -> float:
    """Measure the kernel projection error in the requested norm.

    ``L2xy`` compares the fine-grid projection against Kn in L^2 of the
    square (a slight under-approximation of the true error, exact up to the
    fine grid's own projection loss).  ``L1y_Linfx`` takes the supremum over
    fine-grid cell midpoints x of the y-integral of the absolute error.
    """
    n = Kn.n
    if resolution is None:
        resolution = 8 * n
    if resolution % n != 0:
        raise IncommensurableGridsError(
            f"comparison resolution {resolution} is not a multiple of {n}"
        )
    if resolution < 8 * n:
        raise ValueError(f"comparison resolution must be at least 8*n = {8 * n}")
    if norm == "L2xy":
        fine = project_kernel(K, resolution, tol)
        blow = resolution // n
        coarse = np.repeat(np.repeat(Kn.coeffs, blow, axis=0), blow, axis=1)
        diff = fine.coeffs - coarse
        return math.sqrt(float(np.mean(diff ** 2)))
    if norm == "L1y_Linfx":
        if K.kind == "band":
            r = dict(K.params)["r"]
            return float(np.max(_band_l1_slice_errors(r, Kn, resolution)))
        xs = (np.arange(resolution) + 0.5) / resolution
        vals = np.asarray(K.evaluator(xs[:, None], xs[None, :]), dtype=float)
        blow = resolution // n
        coarse = np.repeat(np.repeat(Kn.coeffs, blow, axis=0), blow, axis=1)
        return float(np.max(np.mean(np.abs(vals - coarse), axis=1)))
    raise ValueError(f"unknown norm {norm!r}; expected 'L2xy' or 'L1y_Linfx'")


def graphon_from_name(name: str) -> Graphon:
    """Parse kernel names like 'band:r=0.25', 'constant:c=1.0', 'product'."""
    kind, _, rest = name.partition(":")
    kind = kind.strip()
    opts = {}
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            if not value:
                raise ValueError(f"malformed kernel option {item!r} in {name!r}")
            opts[key.strip()] = float(value)
    if kind == "band":
        return Graphon.band(opts.get("r", 0.25))
    if kind == "constant":
        return Graphon.constant(opts.get("c", 1.0))
    if kind == "product":
        return Graphon.product()
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_matrix_to_csv(Kn: KernelMatrix) -> str:
    out = io.StringIO()
    out.write(f"{Kn.n}\n")
    for row in Kn.coeffs:
        out.write(",".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()


def kernel_matrix_from_csv(text: str) -> KernelMatrix:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    n = int(lines[0])
    if len(lines) != n + 1:
        raise ValueError(f"expected {n} coefficient rows, found {len(lines) - 1}")
    coeffs = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return KernelMatrix(n, coeffs)
