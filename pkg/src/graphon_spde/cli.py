"""Command-line front end: simulate, converge-n, converge-dt, check, psi, kernel-info.

Exit codes are stable API: 0 ok, 1 runtime failure, 2 config error,
3 reference-validity guard tripped, 4 diagnostic check failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, experiment_config, parse_config
from .dynamics import Trajectory, integrate
from .errors import ConfigError, IncommensurableGridsError
from .experiments import (
    TrialFailure,
    _next_pow2,
    convergence_in_dt,
    convergence_in_n,
    fit_rate,
    results_to_csv,
    sine_moment_check,
)
from .grid import grid_function_to_csv
from .kernels import kernel_bounds, project_kernel, projection_error
from .noise import QWienerSpec, _exact_ratio, psi, sample_increments, trace
from .svgplot import loglog_plot

ENV_THREADS = "GRAPHON_SPDE_THREADS"


def _resolve_threads(flag_value):
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get(ENV_THREADS)
    if env:
        return int(env)
    return None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _sidecar(path: Path, cfg: RunConfig, command: str, overrides: dict) -> None:
    meta = {
        "command": command,
        "config_text": cfg.raw_text,
        "overrides": {k: v for k, v in overrides.items() if v is not None},
        "resolved": cfg.resolved,
        "seed": cfg.seed,
        "version": __version__,
    }
    _write(path, json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _trajectory_csv(traj: Trajectory) -> str:
    n = traj.states.shape[1]
    lines = ["t," + ",".join(f"cell_{i}" for i in range(n))]
    for t, row in zip(traj.times, traj.states):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig, overrides: dict) -> int:
    if cfg.n is None or cfg.dt is None:
        raise ConfigError("simulate needs n and dt in [experiment]")
    spec = cfg.problem.noise
    n_fine = _next_pow2(max(cfg.n, 2 * spec.M, 2))
    if n_fine % cfg.n:
        raise ConfigError(
            f"resolution {cfg.n} must divide the synthesis grid {n_fine}; "
            "use a power of two"
        )
    try:
        steps = _exact_ratio(cfg.problem.horizon, cfg.dt, "horizon/step")
    except IncommensurableGridsError as exc:
        raise ConfigError(str(exc)) from exc
    path = sample_increments(spec, n_fine, cfg.dt, steps, cfg.seed)
    out = Path(cfg.out_dir)
    if cfg.record == "trajectory":
        traj = integrate(cfg.problem, cfg.n, cfg.dt, path, record="trajectory",
                         record_stride=cfg.stride)
        target = out / "trajectory.csv"
        _write(target, _trajectory_csv(traj))
    else:
        final = integrate(cfg.problem, cfg.n, cfg.dt, path)
        target = out / "final.csv"
        _write(target, grid_function_to_csv(final))
    _sidecar(target.with_suffix(".meta.json"), cfg, "simulate", overrides)
    print(f"wrote {target}")
    return 0


def _converge(cfg: RunConfig, overrides: dict, mode: str, max_error: bool) -> int:
    exp = experiment_config(cfg, mode, error_mode="max10" if max_error else "final")
    result = convergence_in_n(exp) if mode == "vary_n" else convergence_in_dt(exp)
    xs = [s.n for s in result.stats] if mode == "vary_n" else [s.dt for s in result.stats]
    fit = None
    if len(result.stats) >= 3 and all(s.mse > 0 for s in result.stats):
        fit = fit_rate(list(zip(xs, [s.mse for s in result.stats])))
    out = Path(cfg.out_dir)
    stem = "converge_n" if mode == "vary_n" else "converge_dt"
    csv_path = out / f"{stem}.csv"
    _write(csv_path, results_to_csv(result, exp, fit))
    written = [csv_path]
    if "svg" in cfg.formats:
        svg_path = out / f"{stem}.svg"
        axis = "n" if mode == "vary_n" else "dt"
        _write(svg_path, loglog_plot(
            [(x, s.mse, s.std) for x, s in zip(xs, result.stats)],
            fit=fit,
            title=f"{stem} (s={cfg.s:g}, {cfg.trials} trials)",
            xlabel=axis, ylabel="mean square error",
        ))
        written.append(svg_path)
    _sidecar(csv_path.with_suffix(".meta.json"), cfg, stem, overrides)
    for p in written:
        print(f"wrote {p}")
    if fit is not None:
        print(f"fitted MSE slope vs {'n' if mode == 'vary_n' else 'dt'}: "
              f"{fit.slope:.3f} +/- {fit.stderr_slope:.3f}")
    if not result.guard.ok:
        advice = ("raise n_star" if mode == "vary_n" else "lower dt_star")
        print(f"reference-validity guard tripped: {result.guard.detail}; {advice}",
              file=sys.stderr)
        return 3
    print(f"reference guard ok: {result.guard.detail}")
    return 0


def _check_rows(cfg: RunConfig, trials: int):
    prob = cfg.problem
    spec = prob.noise
    rows = []

    k1, k2 = kernel_bounds(prob.kernel, resolution=2048)
    if prob.kernel.kind == "band":
        r = dict(prob.kernel.params)["r"]
        expected = min(2.0 * r, 1.0)
        err = max(abs(k1 - expected), abs(k2 - expected))
        rows.append(("kernel_bounds", f"K1={k1:g} K2={k2:g}",
                     f"|err|<=1e-9 vs 2r={expected:g}", err <= 1e-9))
    else:
        ok = math.isfinite(k1) and math.isfinite(k2)
        rows.append(("kernel_bounds", f"K1={k1:g} K2={k2:g}", "finite", ok))

    tr = trace(spec)
    rows.append(("trace", f"{tr:g}", "finite and >= 0",
                 math.isfinite(tr) and tr >= 0.0))

    n_psi = cfg.n or cfg.n_star or 256
    p1, p2 = psi(spec, n_psi), psi(spec, 2 * n_psi)
    rows.append(("psi_monotone", f"psi({n_psi})={p1:g} psi({2 * n_psi})={p2:g}",
                 "nonincreasing", p2 <= p1 + 1e-12))

    # Monte Carlo identities run on a capped spectrum to stay seconds-fast
    m_chk = min(spec.M, 256)
    if spec.family == "periodic_fourier":
        m_chk -= m_chk % 2
    chk = QWienerSpec(spec.family, spec.s, m_chk)
    if chk.M == 0:
        rows.append(("increment_energy", "0", "trace 0", True))
        rows.append(("sine_moment", "0", "<= 0 (trace-zero)", True))
        rows.append(("slice_independence", "skipped", "trace-zero", True))
        return rows
    n_mc = _next_pow2(max(2 * chk.M, 64))
    dt_mc = 0.01
    path = sample_increments(chk, n_mc, dt_mc, trials, cfg.seed)
    energy = (path.increments ** 2).sum(axis=1) / n_mc / dt_mc
    observed = float(energy.mean())
    stderr = float(energy.std(ddof=1)) / math.sqrt(trials)
    tol = 4.0 * stderr
    rows.append(("increment_energy", f"{observed:g}",
                 f"|obs-{trace(chk):g}| <= {tol:g}",
                 abs(observed - trace(chk)) <= tol))

    norm, threshold = sine_moment_check(chk, 1.0, 64, max(trials, 1000),
                                        seed=cfg.seed)
    rows.append(("sine_moment", f"{norm:g}", f"<= {threshold:g}", norm <= threshold))

    basis = chk.cell_average_basis(n_mc)
    coeff = path.increments @ basis[0] / n_mc
    corr = float(np.corrcoef(coeff[:-1], coeff[1:])[0, 1])
    bound = 4.0 / math.sqrt(trials - 1)
    rows.append(("slice_independence", f"corr={corr:g}", f"|corr| <= {bound:g}",
                 abs(corr) <= bound))
    return rows


def cmd_check(cfg: RunConfig, trials: int) -> int:
    rows = _check_rows(cfg, trials)
    width = max(len(r[0]) for r in rows)
    failures = 0
    for name, observed, threshold, ok in rows:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  observed: {observed}  "
              f"criterion: {threshold}")
        failures += not ok
    return 4 if failures else 0


def cmd_psi(cfg: RunConfig) -> int:
    spec = cfg.problem.noise
    ns = list(cfg.n_list) or [16, 32, 64, 128, 256, 512, 1024, 2048, 4096]
    values = [psi(spec, n) for n in ns]
    lines = ["n,psi"]
    for n, v in zip(ns, values):
        lines.append(f"{n},{v!r}")
        print(f"psi({n}) = {v:.6g}")
    if len(ns) >= 3 and all(v > 0 for v in values):
        fit = fit_rate(list(zip(ns, values)))
        lines.append(f"# slope={fit.slope!r},stderr={fit.stderr_slope!r}")
        print(f"fitted slope: {fit.slope:.3f} +/- {fit.stderr_slope:.3f} "
              f"(theory: -(s-1)/2 = {-(spec.s - 1) / 2:.3f})")
    target = Path(cfg.out_dir) / "psi.csv"
    _write(target, "\n".join(lines) + "\n")
    print(f"wrote {target}")
    return 0


def cmd_kernel_info(cfg: RunConfig) -> int:
    K = cfg.problem.kernel
    k1, k2 = kernel_bounds(K, resolution=2048)
    print(f"kernel: {K.label}")
    print(f"declared Lipschitz exponent beta: {K.beta}")
    print(f"K1 = {k1:.6g}, K2 = {k2:.6g}")
    Kn = project_kernel(K, 16)
    print(f"projected at n=16: entries in [{Kn.coeffs.min():.6g}, "
          f"{Kn.coeffs.max():.6g}], circulant={Kn.circulant}")
    ns = [16, 32, 64]
    for norm in ("L2xy", "L1y_Linfx"):
        errs = [projection_error(K, project_kernel(K, n), norm) for n in ns]
        parts = ", ".join(f"n={n}: {e:.4g}" for n, e in zip(ns, errs))
        if all(e > 0 for e in errs):
            slope = fit_rate(list(zip(ns, errs))).slope
            print(f"projection error {norm}: {parts} (slope {slope:.2f})")
        else:
            print(f"projection error {norm}: {parts}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphon-spde",
        description="Galerkin + Euler-Maruyama solver and convergence harness "
                    "for graphon-coupled dynamics with Q-Wiener forcing",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate one realization and write its state"),
        ("converge-n", "spatial-resolution convergence study"),
        ("converge-dt", "time-step convergence study"),
        ("check", "run statistical and analytic diagnostics"),
        ("psi", "tabulate the noise rate functional"),
        ("kernel-info", "report kernel bounds and projection errors"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment file path")
        p.add_argument("--seed", type=int, default=None, help="override root seed")
        p.add_argument("--trials", type=int, default=None, help="override trial count")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker count (fallback: ${ENV_THREADS})")
        p.add_argument("--max-error", action="store_true",
                       help="measure max error over 10 checkpoints, not final time")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "out": args.out,
        "threads": _resolve_threads(args.threads),
    }
    try:
        cfg = parse_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg, overrides)
        if args.command == "converge-n":
            return _converge(cfg, overrides, "vary_n", args.max_error)
        if args.command == "converge-dt":
            return _converge(cfg, overrides, "vary_dt", args.max_error)
        if args.command == "check":
            return cmd_check(cfg, max(cfg.trials, 1000))
        if args.command == "psi":
            return cmd_psi(cfg)
        if args.command == "kernel-info":
            return cmd_kernel_info(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrialFailure as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure (replay with --seed): {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
