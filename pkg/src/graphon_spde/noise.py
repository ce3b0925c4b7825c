"""Trace-class Q-Wiener processes: spectral synthesis, coupled coarsening, and
the noise-regularity rate functional.

The covariance operator is described by an ordered eigenpair family.  Two
trigonometric families are built in:

* ``dirichlet_sine``: eigenfunctions sqrt(2) sin(pi k x), eigenvalues
  (pi k)^(-s), k = 1..M.
* ``periodic_fourier``: paired cos/sin eigenfunctions sqrt(2) cos(2 pi k x),
  sqrt(2) sin(2 pi k x) with eigenvalues (2 pi k)^(-s), k = 1..M/2.  The
  constant mode is excluded: the fractional inverse Laplacian is defined on
  the zero-mean complement only.

Increments are synthesized directly in the Galerkin coefficient space: the
eigenfunctions enter only through their exact cell averages, so projected
increments carry no sampling bias at cell scale.  The per-mode cell-average
attenuation of a trigonometric mode with angular frequency w over cells of
width h is sin(w h / 2) / (w h / 2).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import AliasingError, IncommensurableGridsError

__all__ = [
    "QWienerSpec",
    "NoisePath",
    "trace",
    "sample_increments",
    "coarsen_increments",
    "psi",
    "psi_from_spectrum",
    "qwiener_from_name",
]

_FFT_CHUNK = 4096  # rows per batched inverse FFT; affects memory only


@dataclass(frozen=True)
class QWienerSpec:
    """Truncated spectral description of a trace-class covariance operator."""

    family: str
    s: float
    M: int

    def __post_init__(self):
        if self.family not in ("dirichlet_sine", "periodic_fourier"):
            raise ValueError(f"unknown spectral family {self.family!r}")
        if self.s <= 1.0:
            raise ValueError(f"decay exponent must exceed 1 (trace class), got {self.s}")
        if self.M < 0:
            raise ValueError("truncation level must be nonnegative")
        if self.family == "periodic_fourier" and self.M % 2:
            raise ValueError("periodic family pairs cos/sin modes; M must be even")

    @property
    def label(self) -> str:
        name = "periodic" if self.family == "periodic_fourier" else "dirichlet"
        return f"{name}:s={self.s!r},M={self.M}"

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues in decreasing order counting multiplicity."""
        if self.M == 0:
            return np.empty(0)
        if self.family == "dirichlet_sine":
            k = np.arange(1, self.M + 1, dtype=float)
            return (math.pi * k) ** (-self.s)
        k = np.arange(1, self.M // 2 + 1, dtype=float)
        return np.repeat((2.0 * math.pi * k) ** (-self.s), 2)

    def frequencies(self) -> np.ndarray:
        """Angular frequency of each eigenfunction, aligned with eigenvalues()."""
        if self.M == 0:
            return np.empty(0)
        if self.family == "dirichlet_sine":
            return math.pi * np.arange(1, self.M + 1, dtype=float)
        k = np.arange(1, self.M // 2 + 1, dtype=float)
        return np.repeat(2.0 * math.pi * k, 2)

    def tail_bound(self) -> float:
        """Integral-comparison bound on the eigenvalue sum beyond the truncation."""
        if self.M == 0:
            return 0.0  # empty spectrum means the zero process
        s = self.s
        if self.family == "dirichlet_sine":
            return math.pi ** (-s) * self.M ** (1.0 - s) / (s - 1.0)
        half = self.M // 2
        return 2.0 * (2.0 * math.pi) ** (-s) * half ** (1.0 - s) / (s - 1.0)

    def cell_average_basis(self, n: int) -> np.ndarray:
        """Exact cell averages of every eigenfunction on the n-cell grid, shape (M, n)."""
        mids = (np.arange(n) + 0.5) / n
        if self.M == 0:
            return np.empty((0, n))
        if self.family == "dirichlet_sine":
            k = np.arange(1, self.M + 1, dtype=float)
            half = math.pi * k / (2.0 * n)
            atten = np.sinc(half / math.pi)  # sin(half)/half
            return math.sqrt(2.0) * atten[:, None] * np.sin(
                math.pi * k[:, None] * mids[None, :]
            )
        half_count = self.M // 2
        k = np.arange(1, half_count + 1, dtype=float)
        atten = np.sinc(k / n)  # sin(pi k / n) / (pi k / n)
        phase = 2.0 * math.pi * k[:, None] * mids[None, :]
        basis = np.empty((self.M, n))
        basis[0::2] = math.sqrt(2.0) * atten[:, None] * np.cos(phase)
        basis[1::2] = math.sqrt(2.0) * atten[:, None] * np.sin(phase)
        return basis


def trace(spec: QWienerSpec) -> float:
    """Sum of the retained eigenvalues."""
    return float(spec.eigenvalues().sum())


@dataclass(frozen=True)
class NoisePath:
    """Projected Q-Wiener increments on a fine space-time grid.

    ``increments[k]`` holds the cell values of P_n (W(t_{k+1}) - W(t_k));
    slices are mutually independent under the seed-stream discipline.
    """

    n_fine: int
    dt_fine: float
    steps: int
    increments: np.ndarray
    seed: int

    def __post_init__(self):
        arr = np.asarray(self.increments, dtype=float)
        if arr.shape != (self.steps, self.n_fine):
            raise ValueError(
                f"expected increments of shape ({self.steps}, {self.n_fine}), "
                f"got {arr.shape}"
            )
        arr = arr.copy() if arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "increments", arr)

    def duration(self) -> float:
        return self.steps * self.dt_fine

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<qdqQ", self.n_fine, self.dt_fine, self.steps,
                                 self.seed % (1 << 64)))
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "NoisePath":
        with open(path, "rb") as fh:
            n_fine, dt_fine, steps, seed = struct.unpack("<qdqQ", fh.read(32))
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(steps, n_fine)
        return NoisePath(n_fine, dt_fine, steps, data.astype(float), seed)


def _generator(seed: int) -> np.random.Generator:
    # counter-based stream: the same key reproduces the same path regardless
    # of thread schedule or platform
    return np.random.Generator(np.random.Philox(key=int(seed) % (1 << 128)))


def sample_increments(spec: QWienerSpec, n_fine: int, dt_fine: float, steps: int,
                      seed: int) -> NoisePath:
    """Synthesize independent projected increments of the Q-Wiener process.

    Each slice equals sum_k sqrt(lambda_k dt) xi_k (P_n e_k) with i.i.d.
    standard normal xi.  The periodic family is evaluated by batched inverse
    FFT over the trigonometric modes with exact cell-average attenuation; the
    Dirichlet family contracts the normal draws against the closed-form
    cell-average basis.  Output is a deterministic function of all arguments.
    """
    if dt_fine <= 0.0:
        raise ValueError(f"time step must be positive, got {dt_fine}")
    if steps < 0:
        raise ValueError("step count must be nonnegative")
    if n_fine < 1:
        raise ValueError("synthesis resolution must be positive")
    if spec.M > 0 and n_fine < 2 * spec.M:
        raise AliasingError(
            f"synthesis resolution {n_fine} is below 2*M = {2 * spec.M}; "
            "increase n_fine or truncate the spectrum"
        )
    if spec.family == "periodic_fourier" and n_fine & (n_fine - 1):
        raise ValueError(
            f"FFT synthesis needs a power-of-two resolution, got {n_fine}"
        )
    if steps == 0 or spec.M == 0:
        return NoisePath(n_fine, dt_fine, steps, np.zeros((steps, n_fine)), seed)

    gen = _generator(seed)
    draws = gen.standard_normal((steps, spec.M))
    lam = spec.eigenvalues()

    if spec.family == "dirichlet_sine":
        basis = spec.cell_average_basis(n_fine)
        weights = np.sqrt(lam * dt_fine)
        out = np.empty((steps, n_fine))
        for lo in range(0, steps, _FFT_CHUNK):
            hi = min(lo + _FFT_CHUNK, steps)
            out[lo:hi] = (draws[lo:hi] * weights[None, :]) @ basis
        return NoisePath(n_fine, dt_fine, steps, out, seed)

    # periodic family: columns 0..K-1 drive cos modes, K..M-1 drive sin modes
    half = spec.M // 2
    k = np.arange(1, half + 1, dtype=float)
    atten = np.sinc(k / n_fine)
    amp = np.sqrt(lam[0::2] * dt_fine) * math.sqrt(2.0) * atten
    phase = np.exp(1j * math.pi * k / n_fine)  # midpoint offset of the first cell
    coeff = (0.5 * n_fine) * amp * phase
    out = np.empty((steps, n_fine))
    spectrum_cols = 1 + half
    for lo in range(0, steps, _FFT_CHUNK):
        hi = min(lo + _FFT_CHUNK, steps)
        block = np.zeros((hi - lo, n_fine // 2 + 1), dtype=complex)
        block[:, 1:spectrum_cols] = coeff[None, :] * (
            draws[lo:hi, :half] - 1j * draws[lo:hi, half:]
        )
        out[lo:hi] = np.fft.irfft(block, n_fine, axis=1)
    return NoisePath(n_fine, dt_fine, steps, out, seed)


def _exact_ratio(coarse: float, fine: float, what: str) -> int:
    ratio = coarse / fine
    rounded = round(ratio)
    if rounded < 1 or abs(ratio - rounded) > 1e-9 * max(1.0, abs(rounded)):
        raise IncommensurableGridsError(
            f"{what} ratio {coarse}/{fine} = {ratio} is not a positive integer"
        )
    return int(rounded)


def coarsen_increments(path: NoisePath, n: int, dt: float) -> NoisePath:
    """Project a fine path to resolution n and step dt.

    Spatial coarsening block-averages cells (the L^2 projection of a step
    function); temporal coarsening sums consecutive fine increments.  All
    resolutions derived from one path therefore share a single underlying
    Brownian motion, which is what makes pairwise errors strong errors.
    Trailing fine increments short of a full coarse step are dropped.
    """
    if path.n_fine % n != 0:
        raise IncommensurableGridsError(
            f"target resolution {n} does not divide synthesis resolution {path.n_fine}"
        )
    stride = _exact_ratio(dt, path.dt_fine, "time-step")
    if stride == 1 and n == path.n_fine:
        return path
    steps = path.steps // stride
    arr = path.increments[: steps * stride]
    arr = arr.reshape(steps, stride, path.n_fine).sum(axis=1)
    if n != path.n_fine:
        arr = arr.reshape(steps, n, path.n_fine // n).mean(axis=2)
    return NoisePath(n, dt, steps, arr, path.seed)


def psi_from_spectrum(lambdas, omegas, tail: float = 0.0) -> float:
    """Rate functional from explicit eigenvalues and modulus bounds.

    Evaluates sqrt(min over split points m of: head modes contribute
    lambda_k * omega_k^2, remaining modes contribute lambda_k; ``tail`` is
    added for eigenvalue mass beyond the listed spectrum).
    """
    lam = np.asarray(lambdas, dtype=float)
    om = np.asarray(omegas, dtype=float)
    if lam.size == 0:
        return math.sqrt(tail) if tail > 0 else 0.0
    if lam.shape != om.shape:
        raise ValueError("eigenvalues and modulus bounds must align")
    head = np.concatenate([[0.0], np.cumsum(lam * om ** 2)])
    remaining = np.concatenate([[lam.sum()], lam.sum() - np.cumsum(lam)])
    return math.sqrt(float(np.min(head + remaining)) + tail)


def psi(spec: QWienerSpec, n: int) -> float:
    """Noise-regularity rate functional at grid resolution n.

    Bounds the root-mean-square projection loss of the process onto the
    n-cell space.  The per-mode modulus uses the analytic trigonometric
    bound min(frequency / n, 2); eigenvalue mass beyond the truncation
    enters through the exact series remainder bound.
    """
    if n < 1:
        raise ValueError("resolution must be positive")
    omegas = np.minimum(spec.frequencies() / n, 2.0)
    return psi_from_spectrum(spec.eigenvalues(), omegas, tail=spec.tail_bound())


def qwiener_from_name(name: str) -> QWienerSpec:
    """Parse noise names like 'periodic:s=2.0,M=4096' or 'dirichlet:s=2.0,M=512'."""
    kind, _, rest = name.partition(":")
    kind = kind.strip()
    family = {"periodic": "periodic_fourier", "dirichlet": "dirichlet_sine"}.get(kind)
    if family is None:
        raise ValueError(f"unknown noise family {kind!r}")
    s, M = 2.0, 4096
    if rest:
        for item in rest.split(","):
            key, _, value = item.partition("=")
            key = key.strip()
            if key == "s":
                s = float(value)
            elif key == "M":
                M = int(value)
            else:
                raise ValueError(f"unknown noise option {key!r} in {name!r}")
    return QWienerSpec(family, s, M)
