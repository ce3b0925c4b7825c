"""Semidiscrete nonlocal vector field and the Euler-Maruyama time stepper.

State is the coefficient vector of a step function; all norms are h-weighted
so discrete and continuum L^2 agree.  The nonlocal term is the dense
h * sum_j K_ij S(u_i, u_j); for the sine interaction with a circulant
coefficient matrix an FFT evaluation produces the same values.  Phases are
not wrapped mod 1: the continuum model is real-valued and the sine
interaction is periodic anyway, while wrapping would corrupt L^2 error
comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteStateError
from .grid import GridFunction, Partition, project_to_grid
from .kernels import Graphon, KernelMatrix, project_kernel
from .noise import NoisePath, QWienerSpec, coarsen_increments, _exact_ratio

__all__ = [
    "Drift",
    "Interaction",
    "Problem",
    "Trajectory",
    "NonlocalOperator",
    "apply_nonlocal",
    "em_step",
    "integrate",
    "coupled_solve",
    "drift_from_name",
    "interaction_from_name",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Drift:
    """Intrinsic per-site dynamics f(t, u) with declared growth/Lipschitz data."""

    kind: str
    evaluator: Optional[Callable] = None
    lipschitz: float = 0.0
    growth: tuple[float, float] = (0.0, 0.0)  # (A_f, B_f)
    params: tuple = ()

    def __call__(self, t, u):
        if self.kind == "zero":
            return 0.0
        if self.kind == "linear":
            a, b = dict(self.params)["a"], dict(self.params)["b"]
            return a + b * u
        return self.evaluator(t, u)

    @staticmethod
    def zero() -> "Drift":
        return Drift(kind="zero")

    @staticmethod
    def linear(a: float, b: float) -> "Drift":
        return Drift(
            kind="linear",
            lipschitz=abs(b),
            growth=(abs(a), abs(b)),
            params=(("a", float(a)), ("b", float(b))),
        )

    @staticmethod
    def custom(evaluator: Callable, lipschitz: float, growth) -> "Drift":
        return Drift(kind="custom", evaluator=evaluator, lipschitz=lipschitz,
                     growth=tuple(growth))


@dataclass(frozen=True)
class Interaction:
    """Pairwise coupling S(u, v); bound = A_S, B_S must be 0 for rate theory."""

    kind: str
    evaluator: Optional[Callable] = None
    bound: float = 0.0
    lipschitz: float = 0.0
    B_S: float = 0.0

    def pairwise(self, u, v):
        if self.kind == "zero":
            return np.zeros(np.broadcast_shapes(np.shape(u), np.shape(v)))
        if self.kind == "kuramoto_sine":
            return np.sin(TWO_PI * (np.asarray(u) - np.asarray(v)))
        return self.evaluator(u, v)

    @staticmethod
    def kuramoto_sine() -> "Interaction":
        return Interaction(kind="kuramoto_sine", bound=1.0, lipschitz=TWO_PI)

    @staticmethod
    def none() -> "Interaction":
        return Interaction(kind="zero")

    @staticmethod
    def custom(evaluator: Callable, bound: float, lipschitz: float,
               B_S: float = 0.0) -> "Interaction":
        return Interaction(kind="custom", evaluator=evaluator, bound=bound,
                           lipschitz=lipschitz, B_S=B_S)


@dataclass(frozen=True)
class Problem:
    """Full model: drift, pairwise coupling, kernel, forcing, data, horizon."""

    drift: Drift
    interaction: Interaction
    kernel: Graphon
    noise: QWienerSpec
    initial: Callable
    horizon: float

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError(f"time horizon must be positive, got {self.horizon}")


class NonlocalOperator:
    """Evaluates u -> h * sum_j K_ij S(u_i, u_j) on raw coefficient vectors.

    For the sine interaction the double sum factors through
    sin(a-b) = sin a cos b - cos a sin b, giving two kernel matvecs; with a
    circulant coefficient matrix those matvecs run through the FFT.  The FFT
    route is gated on the kernel's circulant flag, never auto-detected.
    """

    def __init__(self, Kn: KernelMatrix, S: Interaction, use_fft: Optional[bool] = None):
        self.Kn = Kn
        self.S = S
        self.h = Kn.h
        if use_fft is None:
            use_fft = Kn.circulant
        if use_fft and not Kn.circulant:
            raise ValueError("FFT evaluation requires a circulant kernel matrix")
        self.use_fft = use_fft and S.kind == "kuramoto_sine"
        self._kfft = np.fft.fft(Kn.coeffs[:, 0]) if self.use_fft else None

    def __call__(self, values: np.ndarray) -> np.ndarray:
        if self.S.kind == "zero":
            return np.zeros_like(values)
        if self.S.kind == "kuramoto_sine":
            if self._kfft is not None:
                # one complex transform carries both trigonometric matvecs:
                # ifft(fft(e^{2 pi i u}) * fft(col)) = K cos(2 pi u) + i K sin(2 pi u)
                z = np.exp((2j * math.pi) * values)
                w = np.fft.ifft(np.fft.fft(z) * self._kfft)
                return self.h * (z.imag * w.real - z.real * w.imag)
            s = np.sin(TWO_PI * values)
            c = np.cos(TWO_PI * values)
            return self.h * (s * (self.Kn.coeffs @ c) - c * (self.Kn.coeffs @ s))
        mat = self.S.pairwise(values[:, None], values[None, :])
        return self.h * np.einsum("ij,ij->i", self.Kn.coeffs, mat)


def apply_nonlocal(Kn: KernelMatrix, S: Interaction, u: GridFunction,
                   use_fft: Optional[bool] = None) -> GridFunction:
    """Nonlocal interaction term of the semidiscrete field at state u."""
    if u.n != Kn.n:
        raise ValueError(f"state resolution {u.n} does not match kernel {Kn.n}")
    out = NonlocalOperator(Kn, S, use_fft=use_fft)(u.values)
    return GridFunction(u.partition, out)


def _first_bad_cell(values: np.ndarray) -> int:
    return int(np.flatnonzero(~np.isfinite(values))[0])


def em_step(u: GridFunction, t: float, dt: float, f: Drift, S: Interaction,
            Kn: KernelMatrix, dW: GridFunction) -> GridFunction:
    """One Euler-Maruyama update u + f dt + (nonlocal term) dt + dW."""
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    if u.n != Kn.n or dW.n != u.n:
        raise ValueError("state, kernel, and increment resolutions must agree")
    if not np.all(np.isfinite(dW.values)):
        raise NonFiniteStateError(
            f"non-finite noise increment at cell {_first_bad_cell(dW.values)}",
            cell=_first_bad_cell(dW.values),
        )
    nl = NonlocalOperator(Kn, S)(u.values)
    new = u.values + (f(t, u.values) + nl) * dt + dW.values
    if not np.all(np.isfinite(new)):
        raise NonFiniteStateError(
            f"non-finite state at cell {_first_bad_cell(new)}",
            cell=_first_bad_cell(new),
        )
    return GridFunction(u.partition, new)


@dataclass(frozen=True)
class Trajectory:
    """Recorded states: times[j] holds the step time of states[j]."""

    times: np.ndarray
    states: np.ndarray
    partition: Partition

    @property
    def final(self) -> GridFunction:
        return GridFunction(self.partition, self.states[-1])

    def at_time(self, t: float) -> GridFunction:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} was not recorded")
        return GridFunction(self.partition, self.states[idx])


def integrate(prob: Problem, n: int, dt: float, path: NoisePath,
              record: str = "final", record_stride: int = 1,
              Kn: Optional[KernelMatrix] = None, check_bounds: bool = True):
    """Advance the fully discrete scheme from P_n(initial) to the horizon.

    The step count T/dt must be an integer; increments are exact coarsenings
    of the supplied path, so solves at different (n, dt) driven by one path
    share a single Brownian motion.  Returns the final GridFunction, or a
    Trajectory when record='trajectory'.
    """
    steps = _exact_ratio(prob.horizon, dt, "horizon/step")
    coarse = coarsen_increments(path, n, dt)
    if coarse.steps < steps:
        raise ValueError(
            f"path too short: covers {coarse.steps} steps of {dt}, need {steps}"
        )
    if not np.all(np.isfinite(coarse.increments[:steps])):
        raise NonFiniteStateError("non-finite values in noise increments")
    if Kn is None:
        Kn = project_kernel(prob.kernel, n)
    elif Kn.n != n:
        raise ValueError("precomputed kernel matrix has wrong resolution")
    op = NonlocalOperator(Kn, prob.interaction)
    u = project_to_grid(prob.initial, n).values.copy()
    check_nl = check_bounds and prob.interaction.B_S == 0.0
    nl_limit = prob.interaction.bound * math.sqrt(Kn.row_mass_bound()) * (1.0 + 1e-9)
    inc = coarse.increments
    drift = prob.drift
    recording = record == "trajectory"
    if recording:
        saved = [u.copy()]
        saved_t = [0.0]
    t = 0.0
    for k in range(steps):
        nl = op(u)
        if check_nl:
            norm = math.sqrt(float(nl @ nl) / n)
            if norm > nl_limit + 1e-12:
                raise RuntimeError(
                    f"nonlocal bound violated at step {k}: {norm} > {nl_limit}"
                )
        u = u + (drift(t, u) + nl) * dt + inc[k]
        t = (k + 1) * dt
        if not np.all(np.isfinite(u)):
            raise NonFiniteStateError(
                f"non-finite state at step {k + 1}, cell {_first_bad_cell(u)}",
                cell=_first_bad_cell(u), step=k + 1,
            )
        if recording and ((k + 1) % record_stride == 0 or k + 1 == steps):
            saved.append(u.copy())
            saved_t.append(t)
    part = Partition(n)
    if recording:
        return Trajectory(np.array(saved_t), np.array(saved), part)
    return GridFunction(part, u)


def coupled_solve(prob: Problem, resolutions, dts, path: NoisePath,
                  record: str = "final", checkpoints: Optional[int] = None,
                  kernel_cache: Optional[dict] = None):
    """Solve at every (n, dt) pair under coarsenings of one shared path.

    Singleton lists broadcast against the other axis; otherwise the lists are
    zipped pairwise.  Returns a dict keyed by (n, dt).  With
    record='trajectory' and ``checkpoints`` set, each solve records that many
    evenly spaced states (the step count of every pair must divide evenly).
    ``kernel_cache`` lets repeated calls reuse projected kernel matrices.
    """
    resolutions = list(resolutions)
    dts = list(dts)
    if len(resolutions) == 1 and len(dts) > 1:
        resolutions = resolutions * len(dts)
    if len(dts) == 1 and len(resolutions) > 1:
        dts = dts * len(resolutions)
    if len(resolutions) != len(dts):
        raise ValueError("resolution and step lists must zip (or broadcast)")
    kernels = kernel_cache if kernel_cache is not None else {}
    results = {}
    for n, dt in zip(resolutions, dts):
        key = (n, dt)
        if key in results:
            continue
        if n not in kernels:
            kernels[n] = project_kernel(prob.kernel, n)
        stride = 1
        if record == "trajectory" and checkpoints is not None:
            steps = _exact_ratio(prob.horizon, dt, "horizon/step")
            if steps % checkpoints:
                raise ValueError(
                    f"step count {steps} at dt={dt} does not split into "
                    f"{checkpoints} checkpoints"
                )
            stride = steps // checkpoints
        results[key] = integrate(prob, n, dt, path, record=record,
                                 record_stride=stride, Kn=kernels[n])
    return results


def drift_from_name(name: str) -> Drift:
    """Parse drift names: 'zero' or 'linear:a=0.0,b=-1.0'."""
    kind, _, rest = name.partition(":")
    kind = kind.strip()
    if kind == "zero":
        return Drift.zero()
    if kind == "linear":
        opts = {"a": 0.0, "b": 0.0}
        if rest:
            for item in rest.split(","):
                key, _, value = item.partition("=")
                opts[key.strip()] = float(value)
        return Drift.linear(opts["a"], opts["b"])
    raise ValueError(f"unknown drift kind {kind!r}")


def interaction_from_name(name: str) -> Interaction:
    """Parse interaction names: 'kuramoto' or 'none'."""
    if name.strip() == "kuramoto":
        return Interaction.kuramoto_sine()
    if name.strip() == "none":
        return Interaction.none()
    raise ValueError(f"unknown interaction kind {name!r}")
