import math

import numpy as np
import pytest

from normcrit.functional import StatePair, energy, multipliers_pohozaev, random_smooth_field
from normcrit.minsolve import (
    SolverOptions,
    in_ball,
    kinetic_of,
    limit_params,
    relative_pohozaev,
    solve_limit_ground_state,
    solve_local_min,
)
from normcrit.params import derive_constants
from normcrit.radial import build_grid

from .conftest import C_GN


def test_default_minimiser(minimizer, default_instance):
    _, c = default_instance
    m = minimizer
    assert m.converged
    assert m.level < 0
    assert m.kinetic < c.rho0**2
    assert m.grad_residual < 1e-6
    assert m.poho_residual < 1e-4
    lam = m.multipliers
    assert lam.lambda1 > 0 and lam.lambda2 > 0
    lp = m.diagnostics["multipliers_pohozaev"]
    assert abs(lam.lambda1 - lp[0]) / lam.lambda1 < 1e-3
    assert abs(lam.lambda2 - lp[1]) / lam.lambda2 < 1e-3


def test_minimiser_masses_and_ball(minimizer, default_instance):
    _, c = default_instance
    s = minimizer.state
    mu, mv = s.masses()
    assert abs(mu - 1.0) < 1e-10 and abs(mv - 1.0) < 1e-10
    assert in_ball(s, c)
    assert kinetic_of(s) == pytest.approx(minimizer.kinetic, rel=1e-12)
    assert energy(s) == pytest.approx(minimizer.level, rel=1e-12)
    assert relative_pohozaev(s) < 1e-4


def test_minimiser_is_positive_and_decreasing(minimizer):
    for f in (minimizer.state.u.values, minimizer.state.v.values):
        assert np.all(f >= -1e-12)
        assert np.all(np.diff(f) <= 1e-12)


def test_minimiser_stable_under_grid_doubling(minimizer, default_instance):
    p, c = default_instance
    fine = solve_local_min(p, build_grid(3, M=8000), c)
    assert fine.converged
    assert abs(fine.level - minimizer.level) / abs(minimizer.level) < 1e-3


def test_energy_history_monotone(minimizer):
    assert minimizer.diagnostics["energy_monotone"]


def test_random_starts_reach_the_same_level(minimizer, default_instance, grid):
    p, c = default_instance
    rng = np.random.default_rng(7)
    for _ in range(3):
        u = np.abs(random_smooth_field(grid, rng, scale=3.0))
        v = np.abs(random_smooth_field(grid, rng, scale=3.0))
        res = solve_local_min(p, grid, c, init=(u, v))
        assert res.converged
        assert res.level == pytest.approx(minimizer.level, rel=1e-6)


def test_unequal_masses(default_instance, grid):
    p, _ = default_instance
    q = p.replace(a=1.0, b=0.7, nu=0.0)
    c = derive_constants(q, C_GN)
    q = q.replace(nu=0.1 * c.nu_bar0)
    c = derive_constants(q, C_GN)
    res = solve_local_min(q, grid, c)
    assert res.converged and res.level < 0
    mu, mv = res.state.masses()
    assert abs(mu - 1.0) < 1e-10 and abs(mv - 0.7) < 1e-10
    lp = multipliers_pohozaev(res.state)
    assert abs(res.multipliers.lambda1 - lp.lambda1) / res.multipliers.lambda1 < 1e-3


def test_zero_coupling_is_not_attained(default_instance, grid):
    p, c = default_instance
    res = solve_local_min(p.replace(nu=0.0), grid, c)
    assert not res.converged
    assert res.diagnostics["not_attained"]
    assert res.level > 0


def test_grid_dimension_mismatch(default_instance):
    p, c = default_instance
    with pytest.raises(ValueError):
        solve_local_min(p, build_grid(4), c)


def test_limit_ground_state(grid, minimizer):
    gs = solve_limit_ground_state(3, 1.0, 1.0, 1.2, 1.2, grid)
    assert gs.converged
    assert gs.level < 0
    assert gs.multipliers.lambda1 > 0 and gs.multipliers.lambda2 > 0
    assert gs.state.params == limit_params(3, 1.0, 1.0, 1.2, 1.2)
    assert gs.poho_residual < 1e-4


def test_limit_ground_state_minimises_over_random_states(grid):
    gs = solve_limit_ground_state(3, 1.0, 1.0, 1.2, 1.2, grid)
    p = gs.state.params
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = random_smooth_field(grid, rng)
        v = random_smooth_field(grid, rng)
        u *= 1.0 / math.sqrt(grid.mass_sq(u))
        v *= 1.0 / math.sqrt(grid.mass_sq(v))
        assert energy(StatePair.from_arrays(grid, u, v, p)) >= gs.level - 1e-12


def test_iteration_budget_reports_unconverged(default_instance, grid):
    p, c = default_instance
    opts = SolverOptions(max_iter=2, newton=False, init_scale=False)
    res = solve_local_min(p, grid, c, opts)
    assert not res.converged
    assert res.iterations <= 2
