import math

import numpy as np
import pytest

from graphon_spde.dynamics import Drift, Interaction, Problem
from graphon_spde.errors import ConfigError
from graphon_spde.experiments import (
    EnsembleStats,
    ExperimentConfig,
    TrialFailure,
    convergence_in_dt,
    convergence_in_n,
    fit_rate,
    results_to_csv,
    run_ensemble,
    sine_moment_check,
)
from graphon_spde.kernels import Graphon
from graphon_spde.noise import QWienerSpec

from conftest import fit_loglog_slope


def parabola(x):
    return x * (1.0 - x)


def zero_init(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def make_problem(interaction="kuramoto", M=16, s=2.0, T=1.0, initial=parabola,
                 family="periodic_fourier"):
    inter = Interaction.kuramoto_sine() if interaction == "kuramoto" else Interaction.none()
    return Problem(
        drift=Drift.zero(),
        interaction=inter,
        kernel=Graphon.band(0.25),
        noise=QWienerSpec(family, s, M),
        initial=initial,
        horizon=T,
    )


def vary_n_cfg(problem, n_list, n_star, dt, trials, seed=1234, threads=1,
               error_mode="final"):
    return ExperimentConfig(
        problem=problem, mode="vary_n", trials=trials, seed=seed, s=problem.noise.s,
        dt=dt, n_list=tuple(n_list), n_star=n_star, threads=threads,
        error_mode=error_mode,
    )


def vary_dt_cfg(problem, n, dt_list, dt_star, trials, seed=1234, threads=1,
                error_mode="final"):
    return ExperimentConfig(
        problem=problem, mode="vary_dt", trials=trials, seed=seed, s=problem.noise.s,
        n=n, dt_list=tuple(dt_list), dt_star=dt_star, threads=threads,
        error_mode=error_mode,
    )


class TestConfigValidation:
    def test_reference_must_dominate(self):
        prob = make_problem()
        with pytest.raises(ConfigError):
            vary_n_cfg(prob, [16, 32], 32, 0.1, 4)

    def test_measured_must_divide_reference(self):
        prob = make_problem()
        with pytest.raises(ConfigError):
            vary_n_cfg(prob, [24], 64, 0.1, 4)

    def test_dt_ratios_must_be_integer(self):
        prob = make_problem()
        with pytest.raises(Exception):
            vary_dt_cfg(prob, 32, [0.25e-1], 0.3e-2, 4)

    def test_mode_typo(self):
        prob = make_problem()
        with pytest.raises(ConfigError):
            ExperimentConfig(problem=prob, mode="vary_q", trials=1, seed=0, s=2.0)


class TestRunEnsemble:
    def test_single_trial_stderr_zero(self):
        prob = make_problem(M=8)
        cfg = vary_n_cfg(prob, [16], 64, 0.25, trials=1)
        stats = run_ensemble(cfg, (16, 0.25))
        assert len(stats.errors) == 1
        assert stats.stderr == 0.0
        assert stats.mse == pytest.approx(stats.errors[0] ** 2)

    def test_noise_only_projection_variance_oracle(self):
        # E||P_ns W(T) - P_n W(T)||^2 = T sum_k lambda_k (||P_ns e_k||^2 - ||P_n e_k||^2)
        spec = QWienerSpec("periodic_fourier", 1.5, 32)
        prob = Problem(Drift.zero(), Interaction.none(), Graphon.band(0.25),
                       spec, zero_init, 1.0)
        cfg = vary_n_cfg(prob, [16], 64, 0.125, trials=400, seed=77)
        stats = run_ensemble(cfg, (16, 0.125))
        lam = spec.eigenvalues()
        norm_ref = (spec.cell_average_basis(64) ** 2).sum(axis=1) / 64
        norm_coarse = (spec.cell_average_basis(16) ** 2).sum(axis=1) / 16
        oracle = float(prob.horizon * (lam * (norm_ref - norm_coarse)).sum())
        assert abs(stats.mse - oracle) < 4.0 * stats.stderr

    def test_rerun_bitwise_identical(self):
        prob = make_problem(M=8)
        cfg = vary_n_cfg(prob, [16], 64, 0.25, trials=3, seed=5)
        a = run_ensemble(cfg, (16, 0.25))
        b = run_ensemble(cfg, (16, 0.25))
        assert a.mse == b.mse
        assert a.errors == b.errors

    def test_thread_count_does_not_change_results(self):
        prob = make_problem(M=8)
        serial = vary_n_cfg(prob, [16], 64, 0.25, trials=4, seed=5, threads=1)
        forked = vary_n_cfg(prob, [16], 64, 0.25, trials=4, seed=5, threads=2)
        a = run_ensemble(serial, (16, 0.25))
        b = run_ensemble(forked, (16, 0.25))
        assert a.errors == b.errors


class TestConvergenceInN:
    def test_table_matches_run_ensemble(self):
        prob = make_problem(M=8)
        cfg = vary_n_cfg(prob, [8, 16], 64, 0.25, trials=3, seed=9)
        table = convergence_in_n(cfg)
        single = run_ensemble(cfg, (16, 0.25))
        by_n = {s.n: s for s in table.stats}
        assert by_n[16].errors == single.errors

    def test_shared_path_mse_monotone(self):
        prob = make_problem(interaction="none", M=32, s=1.5, initial=zero_init)
        cfg = vary_n_cfg(prob, [8, 16, 32], 128, 0.25, trials=64, seed=3)
        table = convergence_in_n(cfg)
        stats = sorted(table.stats, key=lambda s: s.n)
        for coarse, fine in zip(stats, stats[1:]):
            slack = 2.0 * (coarse.stderr + fine.stderr)
            assert coarse.mse >= fine.mse - slack

    def test_guard_flags_marginal_reference(self):
        # measuring at n_star/2 itself forces ratio 1 < 5
        prob = make_problem(interaction="none", M=16, initial=zero_init)
        cfg = vary_n_cfg(prob, [32], 64, 0.25, trials=8, seed=3)
        table = convergence_in_n(cfg)
        assert not table.guard.ok
        assert table.guard.ratio == pytest.approx(1.0)

    def test_deterministic_degenerate_slope(self):
        # trace-zero noise, smooth data, band kernel: squared spatial error ~ n^-2
        prob = make_problem(M=0, T=0.5)
        cfg = vary_n_cfg(prob, [8, 16, 32, 64], 256, 0.025, trials=2, seed=1)
        table = convergence_in_n(cfg)
        slope = fit_loglog_slope([s.n for s in table.stats],
                                 [s.mse for s in table.stats])
        assert abs(slope - (-2.0)) < 0.3


class TestConvergenceInDt:
    def test_zero_dynamics_telescopes_exactly(self):
        prob = make_problem(interaction="none", M=16, initial=zero_init)
        cfg = vary_dt_cfg(prob, 32, [0.25, 0.125], 0.03125, trials=4, seed=2)
        table = convergence_in_dt(cfg)
        for st in table.stats:
            # telescoping is exact up to float addition order (~1 ulp per step)
            assert all(e <= 1e-13 for e in st.errors)
        assert table.guard.ok  # tiny reference self-error is not a guard failure

    def test_max_error_dominates_final_error(self):
        prob = make_problem(M=8)
        base = vary_dt_cfg(prob, 16, [0.1], 0.01, trials=3, seed=4)
        maxed = vary_dt_cfg(prob, 16, [0.1], 0.01, trials=3, seed=4,
                            error_mode="max10")
        final_stats = convergence_in_dt(base).stats[0]
        max_stats = convergence_in_dt(maxed).stats[0]
        for e_final, e_max in zip(final_stats.errors, max_stats.errors):
            assert e_max >= e_final - 1e-15


class TestFitRate:
    def test_exact_power_law(self):
        xs = [1.0, 2.0, 4.0, 8.0]
        fit = fit_rate([(x, 3.0 / x) for x in xs])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.stderr_slope == pytest.approx(0.0, abs=1e-10)

    def test_perturbed_power_law(self, rng):
        xs = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        ys = 2.0 / xs * (1.0 + rng.uniform(-0.01, 0.01, size=len(xs)))
        fit = fit_rate(list(zip(xs, ys)))
        assert -1.05 <= fit.slope <= -0.95

    def test_two_points_rejected(self):
        with pytest.raises(ValueError):
            fit_rate([(1.0, 1.0), (2.0, 0.5)])

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            fit_rate([(1.0, 1.0), (2.0, 0.5), (3.0, 0.0)])

    def test_residual_orthogonality(self, rng):
        xs = np.exp(rng.uniform(0.0, 3.0, size=12))
        ys = np.exp(rng.normal(size=12))
        fit = fit_rate(list(zip(xs, ys)))
        lx = np.array([p[0] for p in fit.points])
        ly = np.array([p[1] for p in fit.points])
        resid = ly - (fit.slope * lx + fit.intercept)
        assert abs(resid.sum()) < 1e-10
        assert abs(resid @ lx) < 1e-10


class TestSineMoment:
    def test_trace_zero_exact(self):
        spec = QWienerSpec("periodic_fourier", 2.0, 0)
        norm, threshold = sine_moment_check(spec, 1.0, 64, 2000)
        assert norm == 0.0 and threshold == 0.0

    def test_mean_zero_within_threshold(self):
        spec = QWienerSpec("periodic_fourier", 2.0, 32)
        norm, threshold = sine_moment_check(spec, 1.0, 64, 4000, seed=6)
        assert norm <= threshold

    def test_minimum_trials_enforced(self):
        spec = QWienerSpec("periodic_fourier", 2.0, 8)
        with pytest.raises(ValueError):
            sine_moment_check(spec, 1.0, 16, 100)

    def test_cosine_mean_characteristic_function_oracle(self):
        # E cos(2 pi W_i(t)) = exp(-2 pi^2 sigma_i^2) from E cos(aZ) = e^{-a^2 s^2/2}
        from graphon_spde.noise import coarsen_increments, sample_increments

        spec = QWienerSpec("periodic_fourier", 2.0, 16)
        t, n, trials = 0.5, 32, 6000
        path = sample_increments(spec, 64, t, trials, seed=13)
        samples = coarsen_increments(path, n, t).increments
        basis = spec.cell_average_basis(n)
        var_cell = t * (spec.eigenvalues()[:, None] * basis ** 2).sum(axis=0)
        expected = np.exp(-2.0 * math.pi ** 2 * var_cell)
        per_slice = np.cos(2.0 * math.pi * samples).mean(axis=1)
        stderr = float(per_slice.std(ddof=1)) / math.sqrt(trials)
        assert abs(float(per_slice.mean()) - float(expected.mean())) < 4.0 * stderr


class TestCsv:
    def test_layout_and_footer(self):
        prob = make_problem(M=8)
        cfg = vary_n_cfg(prob, [4, 8, 16], 64, 0.25, trials=2, seed=9)
        table = convergence_in_n(cfg)
        fit = fit_rate([(s.n, max(s.mse, 1e-30)) for s in table.stats])
        text = results_to_csv(table, cfg, fit)
        lines = text.strip().splitlines()
        assert lines[0] == "mode,s,n,dt,trials,mse,std,stderr,seed"
        assert len(lines) == 5
        assert lines[-1].startswith("# slope=")
        assert lines[1].split(",")[0] == "vary_n"
