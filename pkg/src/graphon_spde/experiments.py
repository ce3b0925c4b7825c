"""Monte Carlo ensembles, strong-error statistics, and convergence studies.

Every trial owns a counter-based random stream (root seed plus trial index),
synthesizes one fine noise path, and solves all requested discretizations on
coarsenings of that path, so pairwise distances are strong errors.  Trials
run serially or in a forked worker pool; aggregation is ordered by trial
index either way, making results bitwise independent of the schedule.
"""

from __future__ import annotations

import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import linregress

from .dynamics import Problem, coupled_solve
from .errors import ConfigError
from .grid import l2_distance
from .noise import (
    QWienerSpec,
    _exact_ratio,
    coarsen_increments,
    sample_increments,
)

__all__ = [
    "ExperimentConfig",
    "EnsembleStats",
    "RateFit",
    "GuardReport",
    "ConvergenceResult",
    "run_ensemble",
    "convergence_in_n",
    "convergence_in_dt",
    "fit_rate",
    "sine_moment_check",
    "results_to_csv",
]

GUARD_FACTOR = 5.0
MAX_ERROR_CHECKPOINTS = 10


def _next_pow2(x: int) -> int:
    return 1 << max(0, (int(x) - 1).bit_length())


@dataclass(frozen=True)
class ExperimentConfig:
    """One convergence experiment: a problem, a sweep axis, and trial budget."""

    problem: Problem
    mode: str  # 'vary_n' | 'vary_dt'
    trials: int
    seed: int
    s: float  # noise decay exponent, echoed into reports
    dt: Optional[float] = None         # vary_n: shared time step
    n_list: tuple = ()                 # vary_n: resolutions to measure
    n_star: Optional[int] = None       # vary_n: reference resolution
    n: Optional[int] = None            # vary_dt: shared resolution
    dt_list: tuple = ()                # vary_dt: steps to measure
    dt_star: Optional[float] = None    # vary_dt: reference step
    threads: int = 1
    error_mode: str = "final"          # 'final' | 'max10'

    def __post_init__(self):
        if self.mode not in ("vary_n", "vary_dt"):
            raise ConfigError(f"unknown experiment mode {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trial count must be positive")
        if self.error_mode not in ("final", "max10"):
            raise ConfigError(f"unknown error mode {self.error_mode!r}")
        T = self.problem.horizon
        if self.mode == "vary_n":
            if self.dt is None or not self.n_list or self.n_star is None:
                raise ConfigError("vary_n needs dt, n_list, and n_star")
            object.__setattr__(self, "n_list", tuple(int(v) for v in self.n_list))
            if self.n_star <= max(self.n_list):
                raise ConfigError("reference resolution must exceed every measured n")
            for v in self.n_list:
                if self.n_star % v:
                    raise ConfigError(f"measured n={v} does not divide n_star")
            _exact_ratio(T, self.dt, "horizon/step")
        else:
            if self.n is None or not self.dt_list or self.dt_star is None:
                raise ConfigError("vary_dt needs n, dt_list, and dt_star")
            object.__setattr__(self, "dt_list", tuple(float(v) for v in self.dt_list))
            if self.dt_star >= min(self.dt_list):
                raise ConfigError("reference step must be below every measured dt")
            for v in self.dt_list:
                _exact_ratio(v, self.dt_star, "step/reference-step")
                _exact_ratio(T, v, "horizon/step")
            _exact_ratio(T, self.dt_star, "horizon/reference-step")
        plan = self._synthesis_plan()
        base = self.n_star if self.mode == "vary_n" else self.n
        if plan.n_fine % base:
            raise ConfigError(
                f"synthesis resolution {plan.n_fine} is not a multiple of {base}; "
                "use a power-of-two reference resolution"
            )

    @property
    def reference_point(self) -> tuple:
        if self.mode == "vary_n":
            return (int(self.n_star), float(self.dt))
        return (int(self.n), float(self.dt_star))

    def measurement_points(self) -> list:
        if self.mode == "vary_n":
            return [(int(v), float(self.dt)) for v in self.n_list]
        return [(int(self.n), float(v)) for v in self.dt_list]

    def _synthesis_plan(self) -> "_SynthesisPlan":
        spec = self.problem.noise
        if self.mode == "vary_n":
            n_fine = _next_pow2(max(self.n_star, 2 * spec.M, 2))
            dt_fine = float(self.dt)
        else:
            n_fine = _next_pow2(max(self.n, 2 * spec.M, 2))
            dt_fine = float(self.dt_star)
        steps = _exact_ratio(self.problem.horizon, dt_fine, "horizon/step")
        return _SynthesisPlan(n_fine, dt_fine, steps)


@dataclass(frozen=True)
class _SynthesisPlan:
    n_fine: int
    dt_fine: float
    steps: int


@dataclass(frozen=True)
class EnsembleStats:
    """Per-point strong-error statistics across an ensemble of trials.

    ``std`` is the sample standard deviation of the squared errors, matching
    one-standard-deviation error bars; ``stderr`` = std / sqrt(trials).
    """

    n: int
    dt: float
    errors: tuple
    mse: float
    std: float
    stderr: float

    @staticmethod
    def from_errors(n, dt, errors) -> "EnsembleStats":
        errors = np.asarray(errors, dtype=float)
        sq = errors ** 2
        mse = float(sq.mean())
        std = float(sq.std(ddof=1)) if len(sq) > 1 else 0.0
        return EnsembleStats(
            n=int(n), dt=float(dt), errors=tuple(float(e) for e in errors),
            mse=mse, std=std, stderr=std / math.sqrt(len(sq)),
        )


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of log y against log x."""

    slope: float
    intercept: float
    stderr_slope: float
    points: tuple


@dataclass(frozen=True)
class GuardReport:
    """Reference-validity check: the coarsest measured error must dominate
    the reference's own error scale by GUARD_FACTOR."""

    ok: bool
    ratio: Optional[float]
    detail: str


@dataclass(frozen=True)
class ConvergenceResult:
    stats: tuple
    guard: GuardReport
    mode: str


class TrialFailure(RuntimeError):
    def __init__(self, trial, seed, cause):
        super().__init__(
            f"trial {trial} failed (replay with seed {seed}): {cause}"
        )
        self.trial = trial
        self.seed = seed


def _trial_errors(cfg: ExperimentConfig, points, plan, trial: int, kernels: dict):
    seed = cfg.seed + trial
    try:
        path = sample_increments(cfg.problem.noise, plan.n_fine, plan.dt_fine,
                                 plan.steps, seed)
        ref = cfg.reference_point
        pairs = points + [ref]
        ns = [p[0] for p in pairs]
        dts = [p[1] for p in pairs]
        if cfg.error_mode == "max10":
            sols = coupled_solve(cfg.problem, ns, dts, path, record="trajectory",
                                 checkpoints=MAX_ERROR_CHECKPOINTS,
                                 kernel_cache=kernels)
            taus = [cfg.problem.horizon * (j + 1) / MAX_ERROR_CHECKPOINTS
                    for j in range(MAX_ERROR_CHECKPOINTS)]
            ref_traj = sols[ref]
            out = []
            for p in points:
                traj = sols[p]
                out.append(max(
                    l2_distance(traj.at_time(tau), ref_traj.at_time(tau))
                    for tau in taus
                ))
        else:
            sols = coupled_solve(cfg.problem, ns, dts, path, kernel_cache=kernels)
            ref_sol = sols[ref]
            out = [l2_distance(sols[p], ref_sol) for p in points]
        errors = np.asarray(out, dtype=float)
        if not np.all(np.isfinite(errors)):
            raise FloatingPointError("non-finite trial error")
        return errors
    except Exception as exc:  # noqa: BLE001 - annotate with replay info
        if isinstance(exc, TrialFailure):
            raise
        raise TrialFailure(trial, seed, exc) from exc


_POOL_STATE: dict = {}


def _pool_init(cfg, points, plan):
    _POOL_STATE["args"] = (cfg, points, plan)
    _POOL_STATE["kernels"] = {}


def _pool_trial(trial: int):
    cfg, points, plan = _POOL_STATE["args"]
    return trial, _trial_errors(cfg, points, plan, trial, _POOL_STATE["kernels"])


def _ensemble_error_matrix(cfg: ExperimentConfig, points) -> np.ndarray:
    """(trials, len(points)) strong errors, deterministic in cfg alone."""
    plan = cfg._synthesis_plan()
    threads = max(1, int(cfg.threads))
    rows: list = [None] * cfg.trials
    if threads == 1 or cfg.trials == 1:
        kernels: dict = {}
        for trial in range(cfg.trials):
            rows[trial] = _trial_errors(cfg, points, plan, trial, kernels)
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=min(threads, cfg.trials), mp_context=ctx,
            initializer=_pool_init, initargs=(cfg, points, plan),
        ) as pool:
            for trial, errs in pool.map(_pool_trial, range(cfg.trials)):
                rows[trial] = errs
    return np.vstack(rows)


def run_ensemble(cfg: ExperimentConfig, point) -> EnsembleStats:
    """Strong errors between one discretization point and the reference."""
    point = (int(point[0]), float(point[1]))
    matrix = _ensemble_error_matrix(cfg, [point])
    return EnsembleStats.from_errors(point[0], point[1], matrix[:, 0])


def _guard_from_mses(coarse_label, coarse_mse, ref_label, ref_mse) -> GuardReport:
    if ref_mse < 1e-24:
        # below squared-roundoff scale the ratio is meaningless noise
        return GuardReport(
            ok=True, ratio=None,
            detail=f"reference self-error is at roundoff ({ref_label})",
        )
    ratio = coarse_mse / ref_mse
    ok = ratio > GUARD_FACTOR
    return GuardReport(
        ok=ok, ratio=ratio,
        detail=(
            f"mse({coarse_label}) / mse({ref_label}) = {ratio:.2f} "
            f"(must exceed {GUARD_FACTOR:g})"
        ),
    )


def convergence_in_n(cfg: ExperimentConfig) -> ConvergenceResult:
    """One EnsembleStats per measured n, all against the n_star reference.

    All points of a trial share that trial's path.  The guard compares the
    coarsest measured error against the (n_star/2 vs n_star) error; a failed
    guard flags the reference as too coarse but does not abort the run.
    """
    if cfg.mode != "vary_n":
        raise ConfigError("convergence_in_n needs mode='vary_n'")
    points = cfg.measurement_points()
    guard_point = None
    if cfg.n_star % 2 == 0 and cfg.n_star // 2 >= 1:
        guard_point = (cfg.n_star // 2, float(cfg.dt))
    all_points = points + ([guard_point] if guard_point not in (None, *points) else [])
    matrix = _ensemble_error_matrix(cfg, all_points)
    stats = [
        EnsembleStats.from_errors(p[0], p[1], matrix[:, i])
        for i, p in enumerate(points)
    ]
    if guard_point is None:
        guard = GuardReport(ok=True, ratio=None, detail="guard skipped (odd n_star)")
    else:
        col = all_points.index(guard_point)
        guard_mse = float((matrix[:, col] ** 2).mean())
        largest = max(points, key=lambda p: p[0])
        largest_mse = next(s.mse for s in stats if s.n == largest[0])
        guard = _guard_from_mses(
            f"n={largest[0]}", largest_mse,
            f"n={cfg.n_star // 2} vs n_star={cfg.n_star}", guard_mse,
        )
    return ConvergenceResult(stats=tuple(stats), guard=guard, mode="vary_n")


def convergence_in_dt(cfg: ExperimentConfig) -> ConvergenceResult:
    """One EnsembleStats per measured dt, all against the dt_star reference.

    Mirrors the vary_n guard: the coarsest measured error must dominate the
    (2*dt_star vs dt_star) error.
    """
    if cfg.mode != "vary_dt":
        raise ConfigError("convergence_in_dt needs mode='vary_dt'")
    points = cfg.measurement_points()
    guard_point = None
    steps_star = _exact_ratio(cfg.problem.horizon, cfg.dt_star, "horizon/step")
    if steps_star % 2 == 0:
        guard_point = (int(cfg.n), 2.0 * cfg.dt_star)
    all_points = points + ([guard_point] if guard_point not in (None, *points) else [])
    matrix = _ensemble_error_matrix(cfg, all_points)
    stats = [
        EnsembleStats.from_errors(p[0], p[1], matrix[:, i])
        for i, p in enumerate(points)
    ]
    if guard_point is None:
        guard = GuardReport(ok=True, ratio=None,
                            detail="guard skipped (odd reference step count)")
    else:
        col = all_points.index(guard_point)
        guard_mse = float((matrix[:, col] ** 2).mean())
        coarsest = max(points, key=lambda p: p[1])
        coarsest_mse = next(s.mse for s in stats if s.dt == coarsest[1])
        guard = _guard_from_mses(
            f"dt={coarsest[1]:g}", coarsest_mse,
            f"dt={2 * cfg.dt_star:g} vs dt_star={cfg.dt_star:g}", guard_mse,
        )
    return ConvergenceResult(stats=tuple(stats), guard=guard, mode="vary_dt")


def fit_rate(points) -> RateFit:
    """Ordinary least squares on (log x, log y); needs >= 3 positive points."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"rate fit needs at least 3 points, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("rate fit needs strictly positive coordinates")
    logs = [(math.log(x), math.log(y)) for x, y in pts]
    res = linregress([p[0] for p in logs], [p[1] for p in logs])
    return RateFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr_slope=float(res.stderr),
        points=tuple(logs),
    )


def sine_moment_check(spec: QWienerSpec, t: float, n: int, trials: int,
                      seed: int = 0) -> tuple[float, float]:
    """Mean-zero test for sin(2 pi W(t)) against its Monte Carlo threshold.

    Averages sin(2 pi W(t)) cellwise over independent samples of W(t) and
    returns the L^2 norm of that mean field together with a 4-sigma bound
    computed from the exact per-cell Gaussian variances.
    """
    if trials < 1000:
        raise ValueError("sine-moment check needs at least 10^3 trials")
    if t <= 0.0:
        raise ValueError("time must be positive")
    if spec.M == 0:
        return 0.0, 0.0
    n_synth = _next_pow2(max(n, 2 * spec.M))
    if n_synth % n:
        raise ConfigError(f"resolution {n} must divide the synthesis grid {n_synth}")
    path = sample_increments(spec, n_synth, t, trials, seed)
    samples = coarsen_increments(path, n, t).increments
    mean_field = np.sin(2.0 * math.pi * samples).mean(axis=0)
    norm = math.sqrt(float(mean_field @ mean_field) / n)
    basis = spec.cell_average_basis(n)
    var_cell = t * (spec.eigenvalues()[:, None] * basis ** 2).sum(axis=0)
    sin_var = 0.5 * (1.0 - np.exp(-8.0 * math.pi ** 2 * var_cell))
    threshold = 4.0 * math.sqrt(float(sin_var.mean()) / trials)
    return norm, threshold


def results_to_csv(result: ConvergenceResult, cfg: ExperimentConfig,
                   fit: Optional[RateFit] = None) -> str:
    """Experiment table: mode,s,n,dt,trials,mse,std,stderr,seed per point."""
    lines = ["mode,s,n,dt,trials,mse,std,stderr,seed"]
    for st in result.stats:
        lines.append(
            f"{result.mode},{cfg.s!r},{st.n},{st.dt!r},{cfg.trials},"
            f"{st.mse!r},{st.std!r},{st.stderr!r},{cfg.seed}"
        )
    if fit is not None:
        lines.append(f"# slope={fit.slope!r},stderr={fit.stderr_slope!r}")
    return "\n".join(lines) + "\n"
