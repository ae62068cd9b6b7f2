import math

import numpy as np
import pytest

from cdch.elliptic import (
    CoefficientField,
    assemble,
    comparison_check,
    discrete_energy,
    load_vector,
    solve,
    solve_poisson,
)
from cdch.errors import EllipticityViolation, NoConvergence
from cdch.geometry import DomainSpec, build_grid
from cdch.measures import MeasureSpec


def manufactured_exp():
    """u = sin(pi x) sin(pi y) e^x on the unit square with f = -Laplace(u).

    The plain product of sines is a discrete eigenvector of the five-point
    stencil and superconverges, so the e^x factor keeps the test honest.
    """
    u = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(x)
    f = lambda x, y: np.exp(x) * np.sin(np.pi * y) * (
        (2.0 * np.pi**2 - 1.0) * np.sin(np.pi * x) - 2.0 * np.pi * np.cos(np.pi * x)
    )
    return u, f


class TestCoefficientField:
    def test_identity_envelope(self):
        grid = build_grid(DomainSpec.unit_square(), 32)
        A = CoefficientField.identity(grid)
        assert A.lam == pytest.approx(1.0)
        assert A.L == pytest.approx(1.0)
        A.check_envelope()

    def test_envelope_violation_raises(self):
        grid = build_grid(DomainSpec.unit_square(), 32)
        A = CoefficientField.identity(grid)
        bad = CoefficientField(A.values * 3.0, lam=1.0, L=1.0)
        with pytest.raises(EllipticityViolation):
            bad.check_envelope()

    def test_scalar_function_sampling(self):
        grid = build_grid(DomainSpec.unit_square(), 32)
        A = CoefficientField.from_scalar_function(grid, lambda x, y: 2.0 + x)
        assert A.lam >= 2.0
        assert A.L <= 3.0
        assert A.values[0, 0, 0, 0] == pytest.approx(2.0 + grid.h / 2.0)

    def test_scaled(self):
        grid = build_grid(DomainSpec.unit_square(), 32)
        A = CoefficientField.identity(grid).scaled(4.0)
        assert A.lam == pytest.approx(4.0)
        assert np.allclose(A.values[..., 0, 0], 4.0)


class TestManufactured:
    def test_max_error_at_128(self):
        u, f = manufactured_exp()
        grid = build_grid(DomainSpec.unit_square(), 128)
        sol = solve_poisson(grid, CoefficientField.identity(grid), MeasureSpec.density(f))
        X, Y = grid.node_coords()
        err = np.abs(sol.values - u(X, Y))[grid.interior].max()
        assert err <= 1e-3

    def test_second_order_slope(self):
        u, f = manufactured_exp()
        errs = []
        for res in (32, 64, 128):
            grid = build_grid(DomainSpec.unit_square(), res)
            sol = solve_poisson(grid, CoefficientField.identity(grid), MeasureSpec.density(f))
            X, Y = grid.node_coords()
            errs.append(np.abs(sol.values - u(X, Y))[grid.interior].max())
        slope, _ = np.polyfit(np.log([1 / 32, 1 / 64, 1 / 128]), np.log(errs), 1)
        assert slope == pytest.approx(2.0, abs=0.15)

    def test_disk_green_function_value(self):
        # -Laplace u = delta_0 on the unit disk: u(x) = log(1/|x|) / (2 pi)
        grid = build_grid(DomainSpec.disk(1.0), 256)
        sol = solve_poisson(
            grid, CoefficientField.identity(grid), MeasureSpec.point_mass((0.0, 0.0))
        )
        X, Y = grid.node_coords()
        r = np.hypot(X, Y)
        probe = grid.interior & (np.abs(r - 0.5) < grid.h / 2.0)
        got = sol.values[probe].mean()
        exact = math.log(2.0) / (2.0 * math.pi)
        assert got == pytest.approx(exact, rel=0.05)


class TestSolverProperties:
    tol = 1e-10

    def test_zero_load_zero_solution(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        sol = solve_poisson(grid, CoefficientField.identity(grid), MeasureSpec.zero())
        assert not np.any(sol.values)
        assert sol.iterations == 0

    def test_linearity(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        system = assemble(grid, CoefficientField.identity(grid))
        mu1 = MeasureSpec.density(1.0)
        mu2 = MeasureSpec.point_mass((0.3, 0.7), 2.0)
        u1 = solve(system, load_vector(grid, mu1), tol=self.tol)
        u2 = solve(system, load_vector(grid, mu2), tol=self.tol)
        u12 = solve(system, load_vector(grid, mu1 + mu2), tol=self.tol)
        scale = np.abs(u12.values).max()
        assert np.abs(u1.values + u2.values - u12.values).max() <= 10 * self.tol * scale

    def test_maximum_principle(self):
        # nonnegative data gives a nonnegative solution
        grid = build_grid(DomainSpec.disk(1.0), 64)
        sol = solve_poisson(
            grid, CoefficientField.identity(grid), MeasureSpec.density(1.0), tol=self.tol
        )
        assert sol.values.min() >= -10 * self.tol * sol.values.max()

    def test_comparison_with_larger_data(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        A = CoefficientField.identity(grid)
        u = solve_poisson(grid, A, MeasureSpec.density(1.0), tol=self.tol)
        v = solve_poisson(grid, A, MeasureSpec.density(2.0), tol=self.tol)
        assert comparison_check(u, v, tol=10 * self.tol)

    def test_energy_identity(self):
        # u^T K u = u^T b at the solution
        grid = build_grid(DomainSpec.unit_square(), 64)
        system = assemble(grid, CoefficientField.identity(grid))
        b = load_vector(grid, MeasureSpec.density(1.0))
        sol = solve(system, b, tol=self.tol)
        lhs = discrete_energy(system, sol.values)
        rhs = float(sol.values[grid.interior] @ b[grid.interior])
        assert lhs == pytest.approx(rhs, rel=10 * self.tol)
        assert sol.energy == pytest.approx(lhs, rel=1e-12)

    def test_solution_scales_inversely_with_coefficient(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        mu = MeasureSpec.density(1.0)
        u1 = solve_poisson(grid, CoefficientField.identity(grid), mu, tol=self.tol)
        u2 = solve_poisson(grid, CoefficientField.identity(grid).scaled(2.0), mu, tol=self.tol)
        assert np.allclose(u2.values, u1.values / 2.0, atol=1e-12)

    def test_anisotropic_constant_coefficient(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        A = CoefficientField.constant(grid, np.array([[2.0, 0.5], [0.5, 1.0]]))
        sol = solve_poisson(grid, A, MeasureSpec.density(1.0), tol=self.tol)
        assert sol.values.max() > 0

    def test_residual_reported_below_tol(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        sol = solve_poisson(grid, CoefficientField.identity(grid), MeasureSpec.density(1.0), tol=1e-8)
        assert sol.residual_norm <= 1e-8

    def test_iteration_budget_enforced(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        system = assemble(grid, CoefficientField.identity(grid))
        b = load_vector(grid, MeasureSpec.density(1.0))
        with pytest.raises(NoConvergence):
            solve(system, b, tol=1e-12, maxiter=2)

    def test_tol_must_be_small(self):
        grid = build_grid(DomainSpec.unit_square(), 64)
        system = assemble(grid, CoefficientField.identity(grid))
        b = load_vector(grid, MeasureSpec.density(1.0))
        with pytest.raises(ValueError):
            solve(system, b, tol=1e-3)

    @pytest.mark.parametrize("precond", ["jacobi", "ssor", "amg"])
    def test_preconditioners_agree(self, precond):
        grid = build_grid(DomainSpec.disk(1.0), 64)
        sol = solve_poisson(
            grid, CoefficientField.identity(grid), MeasureSpec.density(1.0),
            tol=1e-10, precond=precond,
        )
        # Poisson on the unit disk with f = 1: max u = 1/4 at the center
        # (the rasterized boundary contributes an O(h) bias)
        assert sol.values.max() == pytest.approx(0.25, rel=0.03)

    def test_masked_domain_boundary_values_zero(self):
        grid = build_grid(DomainSpec.koch_prefractal(2), 128)
        sol = solve_poisson(grid, CoefficientField.identity(grid), MeasureSpec.density(1.0))
        assert not np.any(sol.values[~grid.interior])
