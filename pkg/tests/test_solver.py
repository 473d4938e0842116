import io
import math
from fractions import Fraction

import numpy as np
import pytest

from liouville.coupling import CouplingMatrix, RhoVector, SingularMatrixError, symmetrize
from liouville.counting import OnCriticalSetError, SingularProfile
from liouville.fields import ScalarField, TorusGrid, build_weights, quadrature
from liouville.solver import (
    NonConvergenceError,
    SolveConfig,
    energy,
    fixed_point_map,
    linear_rho_path,
    local_masses,
    reconstruct_original,
    residual,
    solve,
    sweep,
    sweep_csv,
)

CROSS = CouplingMatrix.from_rows([["0", "2"], ["2", "0"]])
ONES = CouplingMatrix.from_rows([["1", "1"], ["1", "1"]])
MIXED = CouplingMatrix.from_rows([["1", "3"], ["2", "2"]])

CENTER = SingularProfile(((0.5, 0.5),), (Fraction(1),))
EMPTY = SingularProfile((), ())


def ones_weights(n):
    grid = TorusGrid(n)
    one = ScalarField.constant(grid, 1.0)
    return grid, (one, one)


def test_config_guards():
    with pytest.raises(ValueError):
        SolveConfig(n=8)
    with pytest.raises(ValueError):
        SolveConfig(damping=0.0)
    with pytest.raises(ValueError):
        SolveConfig(tol=-1.0)
    with pytest.raises(ValueError):
        SolveConfig(mass_radius=0.3)


def test_map_is_zero_for_zero_rho():
    grid, weights = ones_weights(32)
    rng = np.random.default_rng(1)
    u = ScalarField(grid, rng.standard_normal((32, 32)))
    t1, t2 = fixed_point_map(u, u, (0.0, 0.0), CROSS, weights)
    assert t1.max_norm == 0.0
    assert t2.max_norm == 0.0


def test_map_output_is_mean_zero():
    grid = TorusGrid(32)
    weights = build_weights((1.0, 1.0), CENTER, grid)
    rng = np.random.default_rng(2)
    u1 = ScalarField(grid, 0.3 * rng.standard_normal((32, 32)))
    u2 = ScalarField(grid, 0.3 * rng.standard_normal((32, 32)))
    t1, t2 = fixed_point_map(u1, u2, RhoVector(2, 2), CROSS, weights)
    assert abs(float(t1.values.mean())) < 1e-14
    assert abs(float(t2.values.mean())) < 1e-14


def test_residual_zero_at_trivial_fixed_point():
    grid, weights = ones_weights(32)
    zero = ScalarField.constant(grid, 0.0)
    assert residual(zero, zero, RhoVector(1, 1), CROSS, weights) == 0.0


def test_residual_grows_with_perturbation():
    grid, weights = ones_weights(32)
    base = ScalarField.from_function(
        grid, lambda x1, x2: np.cos(2 * np.pi * x1) + np.sin(2 * np.pi * x2)
    )
    rho = RhoVector(1, 1)
    values = []
    for eps in (1e-3, 1e-2, 1e-1):
        u = ScalarField(grid, eps * base.values)
        values.append(residual(u, u, rho, CROSS, weights))
    assert 0.0 < values[0] < values[1] < values[2]


def test_trivial_solve_needs_no_iterations():
    for matrix in (CROSS, ONES, MIXED):
        sol = solve(RhoVector(1, 1), matrix, EMPTY, config=SolveConfig(n=32))
        assert sol.iterations == 0
        assert sol.residual == 0.0
        assert sol.u1.max_norm == 0.0
        assert sol.normalizations == (1.0, 1.0)
        assert sol.constants == (0.0, 0.0)


def test_solve_converges_and_reports_consistent_residual():
    cfg = SolveConfig(n=64, tol=1e-9)
    sol = solve(RhoVector(2, 2), CROSS, CENTER, config=cfg)
    assert sol.residual < 1e-9
    check = residual(sol.u1, sol.u2, RhoVector(2, 2), CROSS, sol.weights)
    assert check == pytest.approx(sol.residual, abs=1e-12)
    assert sol.residual_history[0] > sol.residual


def test_newton_and_picard_agree():
    rho = RhoVector(2, 1)
    newton_cfg = SolveConfig(n=32, tol=1e-10, newton_threshold=1e9)
    picard_cfg = SolveConfig(n=32, tol=1e-10, use_newton=False, max_iter=5000)
    by_newton = solve(rho, MIXED, CENTER, config=newton_cfg)
    by_picard = solve(rho, MIXED, CENTER, config=picard_cfg)
    assert by_newton.newton_used
    assert not by_picard.newton_used
    assert by_newton.iterations < by_picard.iterations
    assert np.max(np.abs(by_newton.u1.values - by_picard.u1.values)) < 1e-8
    assert np.max(np.abs(by_newton.u2.values - by_picard.u2.values)) < 1e-8


def test_degenerate_matrix_components_coincide():
    sol = solve(RhoVector(2, 2), ONES, CENTER, config=SolveConfig(n=32))
    assert np.max(np.abs(sol.u1.values - sol.u2.values)) < 1e-9


def test_symmetrized_shadow_solves_b_system():
    # A converged pair solves the symmetric system with the first
    # parameter rescaled by a21/a12: the two right-hand sides are the
    # same expression, so the residual carries over.
    rho = RhoVector(2, 1)
    sol = solve(rho, MIXED, CENTER, config=SolveConfig(n=32, tol=1e-10))
    sym = symmetrize(MIXED)
    b_matrix = CouplingMatrix(sym.b11, sym.b12, sym.b12, sym.b22)
    rho_b = RhoVector(sym.ratio * rho.rho1, rho.rho2)
    assert residual(sol.u1, sol.u2, rho_b, b_matrix, sol.weights) < 1e-9


def test_solve_rejects_critical_rho():
    with pytest.raises(OnCriticalSetError):
        solve(RhoVector(4, 4), CROSS, CENTER, config=SolveConfig(n=32))


def test_solve_requires_exact_rho():
    with pytest.raises(TypeError):
        solve((2.0, 2.0), CROSS, CENTER, config=SolveConfig(n=32))


def test_nonconvergence_carries_history_and_iterate():
    cfg = SolveConfig(n=32, max_iter=2, use_newton=False)
    with pytest.raises(NonConvergenceError) as info:
        solve(RhoVector(2, 2), CROSS, CENTER, config=cfg)
    err = info.value
    assert len(err.residual_history) >= 1
    assert err.residual > 0
    assert err.last_u1.values.shape == (32, 32)


def test_local_masses_bounds_and_symmetry():
    prof = SingularProfile(((0.25, 0.25), (0.75, 0.75)), (Fraction(1), Fraction(1)))
    rho = RhoVector(2, 2)
    sol = solve(rho, CROSS, prof, config=SolveConfig(n=64))
    report = local_masses(sol, rho, CROSS, prof, radius=0.125)
    assert len(report.masses) == 2
    r1, _ = rho.as_floats()
    bound = float(symmetrize(CROSS).ratio) * r1 / (2 * math.pi)
    for m in report.masses:
        assert 0.0 < m.sigma1 < bound
        assert 0.0 < m.sigma2 < bound
    a, b = report.masses
    assert a.sigma1 == pytest.approx(b.sigma1, rel=0.05)
    assert report.rank.kind == "full_rank"
    assert report.proportional_gap is None


def test_local_masses_requires_disjoint_balls():
    prof = SingularProfile(((0.4, 0.5), (0.6, 0.5)), (Fraction(1), Fraction(1)))
    rho = RhoVector(2, 2)
    sol = solve(rho, CROSS, prof, config=SolveConfig(n=64))
    with pytest.raises(ValueError):
        local_masses(sol, rho, CROSS, prof, radius=0.125)


def test_local_masses_degenerate_gap():
    rho = RhoVector(2, 2)
    sol = solve(rho, ONES, CENTER, config=SolveConfig(n=32))
    report = local_masses(sol, rho, ONES, CENTER, radius=0.125)
    assert report.rank.kind == "degenerate_equal"
    assert report.proportional_gap < 1e-9


def test_energy_zero_at_origin_with_unit_weights():
    grid, weights = ones_weights(32)
    zero = ScalarField.constant(grid, 0.0)
    assert energy(zero, zero, RhoVector(1, 1), CROSS, weights) == 0.0


def test_energy_rho_scaling_identity():
    # The Dirichlet half does not involve rho, so doubling rho changes
    # the energy by exactly the log-normalization terms.
    grid = TorusGrid(32)
    weights = build_weights((1.0, 1.0), CENTER, grid)
    rng = np.random.default_rng(5)
    u1 = ScalarField(grid, 0.2 * rng.standard_normal((32, 32)))
    u2 = ScalarField(grid, 0.2 * rng.standard_normal((32, 32)))
    rho = RhoVector(2, 3)
    j1 = energy(u1, u2, rho, CROSS, weights)
    j2 = energy(u1, u2, rho.scaled(2), CROSS, weights)
    i1 = float((weights[0].values * np.exp(u1.values)).mean())
    i2 = float((weights[1].values * np.exp(u2.values)).mean())
    r1, r2 = rho.as_floats()
    assert j2 - j1 == pytest.approx(-r1 * math.log(i1) - r2 * math.log(i2), rel=1e-12)


def test_energy_rejects_singular_matrix():
    grid, weights = ones_weights(32)
    zero = ScalarField.constant(grid, 0.0)
    with pytest.raises(SingularMatrixError):
        energy(zero, zero, RhoVector(1, 1), ONES, weights)


def test_energy_critical_at_solution():
    rho = RhoVector(2, 2)
    sol = solve(rho, CROSS, CENTER, config=SolveConfig(n=32, tol=1e-11))
    rng = np.random.default_rng(11)
    h = 1e-4
    for _ in range(3):
        direction = rng.standard_normal((32, 32))
        direction -= direction.mean()
        direction /= np.max(np.abs(direction))
        grid = sol.u1.grid
        up = ScalarField(grid, sol.u1.values + h * direction)
        dn = ScalarField(grid, sol.u1.values - h * direction)
        j_up = energy(up, sol.u2, rho, CROSS, sol.weights)
        j_dn = energy(dn, sol.u2, rho, CROSS, sol.weights)
        assert abs(j_up - j_dn) / (2 * h) < 1e-5


def test_reconstruction_round_trip():
    from liouville.fields import green

    rho = RhoVector(2, 2)
    sol = solve(rho, CROSS, CENTER, config=SolveConfig(n=64))
    u1s, u2s = reconstruct_original(sol, CENTER)
    grid = sol.u1.grid
    shift = 4 * math.pi * green(grid, (0.5, 0.5)).values
    diff = u1s.values + shift - sol.u1.values
    assert diff.max() - diff.min() < 1e-10
    assert float(np.mean(diff)) == pytest.approx(sol.constants[0], abs=1e-12)
    # the recovered constants normalize the reconstructed pair
    assert quadrature(ScalarField(grid, np.exp(u1s.values))) == pytest.approx(
        1.0, abs=1e-7
    )
    assert quadrature(ScalarField(grid, np.exp(u2s.values))) == pytest.approx(
        1.0, abs=1e-7
    )


def test_linear_rho_path_exact():
    path = linear_rho_path(RhoVector(1, 2), RhoVector(3, 2), 5)
    assert len(path) == 5
    assert path[0][1] == RhoVector(1, 2)
    assert path[-1][1] == RhoVector(3, 2)
    assert path[2][0] == Fraction(1, 2)
    assert path[2][1].rho1 == Fraction(2)


def test_sweep_records_critical_step_and_continues():
    cfg = SolveConfig(n=32)
    path = linear_rho_path(RhoVector(3, 3), RhoVector(5, 5), 3)
    records = sweep(path, CROSS, CENTER, config=cfg)
    assert [r.converged for r in records] == [True, False, True]
    assert records[1].critical_index == 1
    assert records[1].region is None
    assert records[0].region == 0
    assert records[2].region == 1
    assert records[2].max_u1 > records[0].max_u1


def test_sweep_records_nonconvergence_without_raising():
    cfg = SolveConfig(n=32, max_iter=1, use_newton=False)
    path = linear_rho_path(RhoVector(2, 2), RhoVector("5/2", "5/2"), 2)
    records = sweep(path, CROSS, CENTER, config=cfg)
    assert all(not r.converged for r in records)
    assert all(r.residual is not None for r in records)
    assert all(r.message for r in records)


def test_sweep_csv_layout():
    cfg = SolveConfig(n=32)
    path = linear_rho_path(RhoVector(1, 1), RhoVector("6/5", "6/5"), 3)
    records = sweep(path, CROSS, CENTER, config=cfg)
    buf = io.StringIO()
    sweep_csv(records, buf, CENTER.size)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,rho1,rho2,region,converged,residual,max_u1,max_u2,J,sigma_11,sigma_21"
    assert len(lines) == 4
    cells = lines[1].split(",")
    assert len(cells) == 11
    assert cells[3] == "0"
    assert cells[4] == "true"
    assert float(cells[1]) == pytest.approx(math.pi)


def test_sweep_parallel_matches_serial():
    cfg = SolveConfig(n=32)
    path = linear_rho_path(RhoVector(1, 1), RhoVector("3/2", "3/2"), 2)
    serial = sweep(path, CROSS, CENTER, config=cfg)
    parallel = sweep(path, CROSS, CENTER, config=cfg, parallel=True)
    for a, b in zip(serial, parallel):
        assert a.rho == b.rho
        assert a.region == b.region
        assert b.converged
        assert a.max_u1 == pytest.approx(b.max_u1, abs=1e-8)
