import math

import numpy as np
import pytest

from cdch.errors import EllipticityViolation
from cdch.geometry import DomainSpec, build_grid
from cdch.homogenize import (
    PeriodicCoefficient,
    cell_gradients,
    check_envelope,
    corrector_regularity,
    flux_corrector,
    homogenized_matrix,
    oscillating_coefficient,
    solve_cell,
    solve_cell_problem,
)


def layered(n=128):
    return PeriodicCoefficient.layered(lambda y: 2.0 + np.sin(2.0 * np.pi * y), n=n)


class TestCellProblem:
    def test_constant_coefficient_zero_corrector(self):
        A = PeriodicCoefficient.constant(np.diag([2.0, 3.0]), n=32)
        for i in (0, 1):
            chi = solve_cell_problem(A, i)
            assert np.abs(chi).max() <= 1e-10

    def test_corrector_is_mean_zero(self):
        chi = solve_cell_problem(layered(64), 0)
        assert abs(chi.mean()) <= 1e-12

    def test_layered_homogenized_oracle(self):
        # harmonic mean sqrt(3) across the layers, arithmetic mean 2 along
        A = layered(256)
        chis = [solve_cell_problem(A, i) for i in (0, 1)]
        A0 = homogenized_matrix(A, chis)
        assert A0[0, 0] == pytest.approx(math.sqrt(3.0), rel=1e-3)
        assert A0[1, 1] == pytest.approx(2.0, rel=1e-10)
        assert abs(A0[0, 1]) <= 1e-10
        assert abs(A0[1, 0]) <= 1e-10

    def test_constant_homogenizes_to_itself(self):
        mat = np.array([[2.0, 0.3], [0.3, 1.0]])
        A = PeriodicCoefficient.constant(mat, n=32)
        cell = solve_cell(A)
        assert np.abs(cell.A0 - mat).max() <= 1e-10

    def test_checkerboard_geometric_mean(self):
        # two-phase checkerboard homogenizes to sqrt(ab) I
        A = PeriodicCoefficient.checkerboard(1.0, 4.0, n=256)
        cell = solve_cell(A)
        assert cell.A0[0, 0] == pytest.approx(2.0, rel=0.01)
        assert cell.A0[1, 1] == pytest.approx(2.0, rel=0.01)

    def test_checkerboard_duality_product(self):
        a, b = 1.0, 4.0
        A0 = solve_cell(PeriodicCoefficient.checkerboard(a, b, n=128)).A0
        B0 = solve_cell(PeriodicCoefficient.checkerboard(b, a, n=128)).A0
        prod = A0 @ B0
        assert np.abs(prod - a * b * np.eye(2)).max() <= 0.1 * a * b

    def test_homogenized_tensor_in_envelope(self):
        A = layered(64)
        cell = solve_cell(A)
        check_envelope(cell.A0, A.lam, A.L, rtol=1e-6)

    def test_envelope_violation_detected(self):
        with pytest.raises(EllipticityViolation):
            check_envelope(np.diag([0.1, 1.0]), lam=1.0, L=3.0)

    def test_cell_gradients_of_linear_torus_function(self):
        n = 32
        ys = (np.arange(n)) / n
        chi = np.sin(2.0 * np.pi * ys)[None, :].repeat(n, axis=0)  # varies in x
        g = cell_gradients(chi)
        xs = (np.arange(n) + 0.5) / n
        expect = 2.0 * np.pi * np.cos(2.0 * np.pi * xs) * np.sinc(1.0 / n)
        assert np.allclose(g[0, :, 0], expect, rtol=1e-2)
        assert np.abs(g[..., 1]).max() <= 1e-10


class TestFluxCorrectors:
    def test_skew_symmetry_exact(self):
        A = layered(64)
        chi = solve_cell_problem(A, 0)
        V, d, _ = flux_corrector(A, chi, 0)
        assert np.array_equal(V[0, 1], -V[1, 0])
        assert not np.any(V[0, 0])
        assert not np.any(V[1, 1])

    def test_divergence_reproduces_flux_fluctuation(self):
        A = PeriodicCoefficient.checkerboard(1.0, 4.0, n=128)
        chi = solve_cell_problem(A, 0)
        _, _, err = flux_corrector(A, chi, 0)
        assert np.max(err) <= 0.06

    def test_flux_fluctuation_is_mean_zero(self):
        A = layered(64)
        chi = solve_cell_problem(A, 0)
        _, d, _ = flux_corrector(A, chi, 0)
        assert np.abs(d.mean(axis=(0, 1))).max() <= 1e-8

    def test_potential_magnitude_stable_under_refinement(self):
        vals = []
        for n in (64, 128):
            A = PeriodicCoefficient.checkerboard(1.0, 4.0, n=n)
            cell = solve_cell(A)
            vals.append(cell.V_inf / A.L)
        assert abs(vals[1] - vals[0]) <= 0.2 * max(vals)


class TestCorrectorRegularity:
    def test_smooth_coefficient_near_lipschitz(self):
        chi = solve_cell_problem(layered(128), 0)
        alpha, seminorm, seps, mods = corrector_regularity(chi)
        assert alpha >= 0.85
        assert seminorm > 0
        assert len(seps) == len(mods)

    def test_high_contrast_lowers_exponent(self):
        smooth, _, _, _ = corrector_regularity(solve_cell_problem(layered(128), 0))
        rough, _, _, _ = corrector_regularity(
            solve_cell_problem(PeriodicCoefficient.checkerboard(1.0, 100.0, n=128), 0)
        )
        assert rough < smooth


class TestOscillatingCoefficient:
    def test_periodicity_on_matching_grid(self):
        A = layered(32)
        grid = build_grid(DomainSpec.unit_square(), 128)
        Ae = oscillating_coefficient(A, 0.25, grid)
        v = Ae.values[..., 0, 0]
        assert np.allclose(v[:, :32], v[:, 32:64])

    def test_envelope_carried_over(self):
        A = layered(32)
        grid = build_grid(DomainSpec.unit_square(), 64)
        Ae = oscillating_coefficient(A, 0.5, grid)
        assert Ae.lam == A.lam
        assert Ae.L == A.L
        Ae.check_envelope()

    def test_epsilon_out_of_range(self):
        A = layered(32)
        grid = build_grid(DomainSpec.unit_square(), 64)
        with pytest.raises(ValueError):
            oscillating_coefficient(A, 0.0, grid)
