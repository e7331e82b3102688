import math

import numpy as np
import pytest

from oracle_1f1 import oracle_1f1, rel_err
from nonfick.grid import UniformGrid, symmetric_grid
from nonfick.special import (AccuracyError, grid_moment, kummer_1f1,
                             kummer_1f1_grid, normalize_on_grid)


class TestKummerIdentities:
    def test_z_zero_is_one(self):
        assert kummer_1f1(1.75, 3.3125, 0.0) == 1.0

    def test_a_equals_b_is_exp(self):
        for z in (-2.0, -0.3, 0.7, 5.0, -40.0):
            assert kummer_1f1(1.0, 1.0, z) == pytest.approx(
                math.exp(z), rel=1e-14)
            assert kummer_1f1(3.25, 3.25, z) == pytest.approx(
                math.exp(z), rel=1e-14)

    def test_e_minus_two(self):
        assert kummer_1f1(1.0, 1.0, -2.0) == pytest.approx(
            math.exp(-2.0), rel=1e-14)

    def test_invalid_b(self):
        for b in (0.0, -1.0, -7.0):
            with pytest.raises(ValueError, match="invalid b"):
                kummer_1f1(1.5, b, 0.3)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            kummer_1f1(math.nan, 2.0, 1.0)


class TestKummerVsOracle:
    def test_reference_point(self):
        # the equilibrium-PDF argument set at x ~ 1
        got = kummer_1f1(1.75, 3.3125, -0.9)
        exact = oracle_1f1(1.75, 3.3125, -0.9, target_digits=30)
        assert rel_err(got, exact) < 1e-12

    @pytest.mark.parametrize("args", [
        (0.3, 7.5, -120.0), (12.0, 0.25, 55.0), (1.1, 2.1, -720.0),
        (3.0, 1.5, 100.0), (50.0, 49.5, -200.0), (100.0, 0.2, -35.0),
        (2.0, 3.0, -1e4), (0.01, 0.02, -500.0), (7.3, 7.4, 95.0),
    ])
    def test_hard_points(self, args):
        got = kummer_1f1(*args)
        exact = oracle_1f1(*args, target_digits=20)
        assert rel_err(got, exact) < 1e-10

    def test_transform_self_consistency(self):
        # direct high-precision alternating series vs the transformed path
        rng = np.random.default_rng(42)
        for _ in range(25):
            a = rng.uniform(0.1, 20.0)
            b = rng.uniform(0.1, 20.0)
            z = -(10 ** rng.uniform(-2, 1.8))
            got = kummer_1f1(a, b, z)
            exact = oracle_1f1(a, b, z, target_digits=20)
            assert rel_err(got, exact) < 1e-9, (a, b, z)

    def test_contiguity_recurrence(self):
        # 1F1(a;b;z) = 1F1(a-1;b;z) + (z/b) 1F1(a;b+1;z)
        rng = np.random.default_rng(3)
        for _ in range(60):
            a = rng.uniform(0.5, 30.0)
            b = rng.uniform(0.3, 30.0)
            z = rng.uniform(-60.0, 30.0)
            lhs = kummer_1f1(a, b, z)
            rhs = kummer_1f1(a - 1.0, b, z) + z / b * kummer_1f1(a, b + 1.0, z)
            assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs)), (a, b, z)

    def test_underflow_returns_zero(self):
        # true value ~ 1e-400: below the float64 normal range
        val = kummer_1f1(100.0, 50.0, -1e4)
        assert abs(val) < 1e-290


class TestKummerGrid:
    def test_matches_scalar(self):
        a, b = 1.75, 3.3125
        z = -0.9 * np.linspace(0.0, 38.0, 300) ** 2
        vec = kummer_1f1_grid(a, b, z)
        for i in range(0, len(z), 17):
            assert vec[i] == pytest.approx(kummer_1f1(a, b, float(z[i])),
                                           rel=1e-10)

    def test_fallback_for_general_args(self):
        z = np.array([-0.5, -120.0])
        vec = kummer_1f1_grid(5.0, 1.25, z)  # a > b: scalar fallback
        for zi, vi in zip(z, vec):
            assert vi == pytest.approx(kummer_1f1(5.0, 1.25, float(zi)),
                                       rel=1e-10)

    def test_rejects_positive_z(self):
        with pytest.raises(ValueError):
            kummer_1f1_grid(1.0, 2.0, np.array([0.5]))


def _center_spanning_grid(x_lo, x_hi, n):
    # grid whose cell centers span exactly [x_lo, x_hi]
    dx = (x_hi - x_lo) / (n - 1)
    return UniformGrid(x_lo - dx / 2, x_hi + dx / 2, n)


class TestNormalizeOnGrid:
    def test_gaussian_already_normalized(self):
        grid = _center_spanning_grid(-8.0, 8.0, 4097)
        x = grid.centers
        f = np.exp(-x**2 / 2) / math.sqrt(2 * math.pi)
        norm, pdf = normalize_on_grid(f, grid, math.inf)
        assert norm == pytest.approx(1.0, abs=1e-10)
        assert pdf.tail_mass == 0.0

    def test_rectangle_area(self):
        grid = _center_spanning_grid(-1.0, 1.0, 2001)
        f = np.full(grid.n_cells, 2.0)
        norm, pdf = normalize_on_grid(f, grid, math.inf)
        assert norm == pytest.approx(4.0, rel=1e-12)

    def test_fig3a_norm_against_refined_grid(self, fig3a):
        params, scales = fig3a
        a = 0.5 * (scales.gamma_tau / scales.delta**2 + 1.0)
        b = 0.5 * (1.0 / scales.big_r + 1.0)
        beta = 1.0 / (2.0 * params.d_f * scales.theta)

        def norm_at(n):
            grid = symmetric_grid(40.0, n)
            f = kummer_1f1_grid(a, b, -beta * grid.centers**2)
            return normalize_on_grid(f, grid, scales.alpha_tail)[0]

        coarse, fine = norm_at(4096), norm_at(8192)
        assert coarse == pytest.approx(fine, rel=1e-8)

    def test_negative_values_rejected(self):
        grid = symmetric_grid(1.0, 64)
        f = np.ones(64)
        f[3] = -1e-6
        with pytest.raises(ValueError, match="negative"):
            normalize_on_grid(f, grid, math.inf)

    def test_nonintegrable_tail_rejected(self):
        grid = symmetric_grid(1.0, 64)
        with pytest.raises(ValueError, match="non-integrable"):
            normalize_on_grid(np.ones(64), grid, 0.9)

    def test_asymmetric_grid_rejected(self):
        grid = UniformGrid(-1.0, 2.0, 64)
        with pytest.raises(ValueError, match="symmetric"):
            normalize_on_grid(np.ones(64), grid, math.inf)


class TestGridMoment:
    def test_gaussian_second_moment(self):
        grid = _center_spanning_grid(-10.0, 10.0, 4097)
        x = grid.centers
        f = np.exp(-x**2 / 2) / math.sqrt(2 * math.pi)
        _, pdf = normalize_on_grid(f, grid, math.inf)
        assert grid_moment(pdf, 2, math.inf) == pytest.approx(1.0, rel=1e-9)

    def test_student_t_with_tail_completion(self):
        # nu=3 student-t: variance nu/(nu-2) = 3, tail exponent 4
        nu = 3.0
        grid = symmetric_grid(60.0, 8192)
        x = grid.centers
        f = (1 + x**2 / nu) ** (-(nu + 1) / 2)
        _, pdf = normalize_on_grid(f, grid, nu + 1.0)
        assert grid_moment(pdf, 2, nu + 1.0) == pytest.approx(3.0, rel=2e-3)

    def test_divergent_moment_flagged(self):
        grid = symmetric_grid(30.0, 1024)
        f = (1 + grid.centers**2) ** (-1.1)
        _, pdf = normalize_on_grid(f, grid, 2.2)
        assert math.isinf(grid_moment(pdf, 2, 2.2))
