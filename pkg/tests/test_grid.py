import math

import numpy as np
import pytest

from graphon_spde.errors import IncommensurableGridsError
from graphon_spde.grid import (
    GridFunction,
    Partition,
    grid_function_from_csv,
    grid_function_to_csv,
    l2_distance,
    l2_norm,
    modulus_of_continuity,
    project_to_grid,
)

from conftest import fit_loglog_slope, indicator_cell_averages

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TestPartition:
    def test_mesh_width(self):
        p = Partition(8)
        assert p.h * p.n == 1.0
        assert np.allclose(p.edges(), np.arange(9) / 8)

    @pytest.mark.parametrize("bad", [0, -1, 2.5])
    def test_rejects_bad_cell_count(self, bad):
        with pytest.raises(ValueError):
            Partition(bad)

    def test_half_open_cells(self):
        p = Partition(4)
        # cell i is (x_{i-1}, x_i]; evaluation at 0 maps to the first cell
        assert p.cell_index(0.0) == 0
        assert p.cell_index(0.25) == 0
        assert p.cell_index(0.25 + 1e-12) == 1
        assert p.cell_index(1.0) == 3


class TestProjection:
    def test_preserves_constants(self):
        for n in (1, 3, 16):
            u = project_to_grid(lambda x: np.full_like(x, 2.75), n)
            assert np.allclose(u.values, 2.75, atol=1e-14)

    def test_parabola_cell_averages(self):
        # exact cell averages of x(1-x) at n=2 are (1/6, 1/6):
        # int_0^{1/2} x(1-x) dx / (1/2) = (1/8 - 1/24) * 2 = 1/6
        u = project_to_grid(lambda x: x * (1.0 - x), 2)
        assert np.allclose(u.values, [1.0 / 6.0, 1.0 / 6.0], atol=1e-15)

    def test_block_averaging(self):
        u = GridFunction.from_values([1.0, 2.0, 3.0, 4.0])
        v = project_to_grid(u, 2)
        assert np.allclose(v.values, [1.5, 3.5], atol=0)

    def test_idempotent_at_same_resolution(self):
        u = GridFunction.from_values([0.5, -1.0, 2.0])
        v = project_to_grid(u, 3)
        assert np.array_equal(v.values, u.values)

    def test_incommensurable_rejected(self):
        u = GridFunction.from_values([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(IncommensurableGridsError):
            project_to_grid(u, 3)

    def test_zero_resolution_rejected(self):
        with pytest.raises(ValueError):
            project_to_grid(lambda x: x, 0)

    def test_contraction(self, rng):
        # orthogonal projection cannot increase the L2 norm
        for n in (1, 2, 4):
            u = GridFunction.from_values(rng.normal(size=16))
            assert l2_norm(project_to_grid(u, n)) <= l2_norm(u) + 1e-14

    def test_nesting_consistency(self, rng):
        u = GridFunction.from_values(rng.normal(size=8))
        two_hops = project_to_grid(project_to_grid(u, 4), 2)
        one_hop = project_to_grid(u, 2)
        assert np.allclose(two_hops.values, one_hop.values, atol=1e-15)


class TestL2Distance:
    def test_identity(self, rng):
        u = GridFunction.from_values(rng.normal(size=8))
        assert l2_distance(u, u) == 0.0

    def test_hand_integral(self):
        u = GridFunction.from_values([0.0])
        v = GridFunction.from_values([1.0, -1.0])
        assert abs(l2_distance(u, v) - 1.0) < 1e-15

    def test_against_fine_riemann_sum(self, rng):
        u = GridFunction.from_values(rng.normal(size=4))
        v = GridFunction.from_values(rng.normal(size=8))
        m = 10_000
        x = (np.arange(m) + 0.5) / m
        brute = math.sqrt(np.mean((u(x) - v(x)) ** 2))
        assert abs(l2_distance(u, v) - brute) < 1e-12

    def test_incommensurable_rejected(self):
        u = GridFunction.from_values(np.ones(4))
        v = GridFunction.from_values(np.ones(6))
        with pytest.raises(IncommensurableGridsError):
            l2_distance(u, v)
        # a stated common refinement makes the pair commensurable
        assert l2_distance(u, v, refinement=12) == 0.0

    def test_stated_refinement_must_divide(self):
        u = GridFunction.from_values(np.ones(4))
        v = GridFunction.from_values(np.ones(6))
        with pytest.raises(IncommensurableGridsError):
            l2_distance(u, v, refinement=8)


class TestModulus:
    def test_lipschitz_bound(self):
        L = 3.0
        mod = modulus_of_continuity(lambda x: L * x, p=2.0, delta=0.1, n_samples=512)
        assert mod.value <= L * 0.1 * (1.0 + 1e-12)
        # sup attained at the largest shift; restricted domain gives sqrt(1-delta)
        assert mod.value == pytest.approx(L * 0.1 * math.sqrt(0.9), rel=1e-9)

    def test_indicator_step(self):
        h = 1.0 / 64.0
        f = lambda x: (x <= 0.5).astype(float)
        mod = modulus_of_continuity(f, p=2.0, delta=h, n_samples=4096)
        assert mod.value == pytest.approx(math.sqrt(h), rel=5e-2)

    @pytest.mark.parametrize("k", [1, 2, 4])
    def test_sine_mode_bound(self, k):
        delta = 0.05
        f = lambda x: math.sqrt(2.0) * np.sin(math.pi * k * x)
        mod = modulus_of_continuity(f, p=2.0, delta=delta, n_samples=2048)
        assert mod.value <= math.pi * k * delta * (1.0 + 1e-9)

    def test_monotone_in_delta(self):
        f = lambda x: np.sin(7.0 * x) + x ** 2
        vals = [
            modulus_of_continuity(f, p=2.0, delta=d, n_samples=256).value
            for d in (0.05, 0.1, 0.2)
        ]
        assert vals[0] <= vals[1] <= vals[2]

    def test_rejects_bad_exponent(self):
        with pytest.raises(ValueError):
            modulus_of_continuity(lambda x: x, p=0.5, delta=0.1)


class TestProjectionRates:
    def test_smooth_rate(self):
        # Lipschitz function: projection error decays like 1/n
        fine = project_to_grid(lambda x: x * (1.0 - x), 4096)
        ns = [8, 16, 32, 64, 128, 256, 512]
        errs = [l2_distance(fine, project_to_grid(fine, n)) for n in ns]
        slope = fit_loglog_slope(ns, errs)
        assert abs(slope - (-1.0)) < 0.15

    def test_half_order_rate(self):
        # indicator of a union of intervals with quasi-random endpoints lies
        # in Lip(1/2, L^2); many jumps keep the cell-alignment fluctuation small
        pts = np.sort(np.array([math.modf(m * GOLDEN)[0] for m in range(1, 33)]))
        intervals = [(pts[2 * i], pts[2 * i + 1]) for i in range(16)]
        N = 2 ** 14
        fine = GridFunction.from_values(indicator_cell_averages(intervals, N))
        total_length = sum(b - a for a, b in intervals)
        ns = [8, 16, 32, 64, 128, 256, 512]
        errs = []
        for n in ns:
            coarse = GridFunction.from_values(indicator_cell_averages(intervals, n))
            # exact error via Pythagoras: ||f - P_n f||^2 = ||f||^2 - ||P_n f||^2
            exact = math.sqrt(total_length - float(coarse.values @ coarse.values) / n)
            proxy = l2_distance(fine, project_to_grid(fine, n))
            assert proxy <= exact + 1e-12
            errs.append(exact)
        slope = fit_loglog_slope(ns, errs)
        assert abs(slope - (-0.5)) < 0.15


class TestCsv:
    def test_round_trip_bit_exact(self, rng):
        u = GridFunction.from_values(rng.normal(size=7))
        again = grid_function_from_csv(grid_function_to_csv(u))
        assert again.n == u.n
        assert np.array_equal(again.values, u.values)

    def test_header_required(self):
        with pytest.raises(ValueError):
            grid_function_from_csv("4,0.25\n1\n2\n3\n4\n")
