import math

import numpy as np
import pytest

from normcrit.functional import energy
from normcrit.minsolve import kinetic_of, solve_local_min
from normcrit.mountain import (
    BubbleQuadrature,
    MountainOptions,
    PathError,
    bubble_path,
    choose_T,
    default_component,
    default_t_grid,
    deform,
    initial_path,
    level_bound_check,
    level_bound_curve,
    solve_mountain_pass,
)
from normcrit.params import level_bound_gap
from normcrit.radial import build_grid

N_LIST = [16, 64, 256, 1024, 4096, 8192]


@pytest.fixture(scope="module")
def reports(minimizer):
    return level_bound_check(minimizer, N_LIST)


def test_choose_T_is_a_power_of_two_below_twice_the_level(minimizer):
    T = choose_T(minimizer)
    assert math.log2(T) == int(math.log2(T))
    path = initial_path(minimizer, T, 32)
    assert path.levels[-1] < 2 * minimizer.level


def test_initial_path_leaves_the_ball(minimizer, default_instance):
    _, c = default_instance
    path = initial_path(minimizer, choose_T(minimizer))
    assert path.K == 64
    assert path.levels[0] == pytest.approx(minimizer.level, rel=1e-12)
    assert path.max_level >= c.k0
    ks = [kinetic_of(s) for s in path.points]
    assert ks[0] < c.rho0**2 < ks[-1]
    for s in path.points:
        mu, mv = s.masses()
        assert abs(mu - 1) < 1e-10 and abs(mv - 1) < 1e-10


def test_initial_path_rejects_few_vertices(minimizer):
    with pytest.raises(ValueError):
        initial_path(minimizer, 4.0, K=8)


def test_deformation_never_raises_the_path_maximum(minimizer):
    path = initial_path(minimizer, choose_T(minimizer))
    new, hist, info = deform(path, MountainOptions(deform_iter=40), minimizer.level)
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert new.max_level <= path.max_level
    assert new.levels[0] == path.levels[0] and new.levels[-1] == path.levels[-1]
    assert info["stop"] in ("tol", "budget", "stalled")


def test_deformation_needs_an_admissible_endpoint(minimizer):
    path = initial_path(minimizer, 2.0, 32)
    with pytest.raises(PathError):
        deform(path, MountainOptions(), minimizer.level)


def test_bubble_path_endpoints(minimizer):
    path = bubble_path(minimizer, 64)
    assert path.levels[0] == pytest.approx(minimizer.level, rel=1e-9)
    assert path.levels[-1] < 2 * minimizer.level


def test_default_component_follows_the_larger_coupling(base_params):
    assert default_component(base_params) == "u"
    assert default_component(base_params.replace(mu2=2.0)) == "v"


def test_mountain_pass_level_ordering(mp_solution, minimizer, default_instance):
    p, c = default_instance
    mp = mp_solution
    assert mp.converged
    bound = minimizer.level + level_bound_gap(p)
    assert minimizer.level < 0 < c.k0 <= mp.level < bound
    assert mp.poho_residual < 1e-3
    assert mp.multipliers.lambda1 > 0 and mp.multipliers.lambda2 > 0
    assert mp.grad_residual < 1e-6


def test_mountain_pass_state(mp_solution, default_instance):
    _, c = default_instance
    s = mp_solution.state
    mu, mv = s.masses()
    assert abs(mu - 1) < 1e-10 and abs(mv - 1) < 1e-10
    assert kinetic_of(s) > c.rho0**2
    assert energy(s) == pytest.approx(mp_solution.level, rel=1e-12)
    assert mp_solution.diagnostics["tail_ratio"] < 1e-3


def test_mountain_pass_needs_a_converged_minimiser(minimizer, default_instance, grid):
    p, c = default_instance
    bad = solve_local_min(p.replace(nu=0.0), grid, c)
    with pytest.raises(ValueError):
        solve_mountain_pass(p, bad, grid, c)
    with pytest.raises(ValueError):
        solve_mountain_pass(p, minimizer, build_grid(3, M=2000), c)


@pytest.mark.slow
def test_mountain_pass_stable_under_grid_doubling(mp_solution, default_instance):
    p, c = default_instance
    g2 = build_grid(3, M=8000)
    m2 = solve_local_min(p, g2, c)
    mp2 = solve_mountain_pass(p, m2, g2, c)
    assert mp2.converged
    assert abs(mp2.level - mp_solution.level) / mp_solution.level < 1e-2


def test_H_at_zero_is_the_minimum_level(minimizer):
    direct = level_bound_curve(minimizer, 64, [0.0])[0][1]
    assert direct == pytest.approx(minimizer.level, abs=1e-12)
    quad = BubbleQuadrature(minimizer.state, 64)
    assert quad.H(0.0) == pytest.approx(minimizer.level, abs=1e-6)


def test_level_bound_holds_for_large_n(reports, minimizer, default_instance):
    p, _ = default_instance
    bound = minimizer.level + level_bound_gap(p)
    largest = max(reports, key=lambda r: r.n)
    assert largest.bound == pytest.approx(bound, rel=1e-12)
    assert largest.satisfied
    assert largest.H_max < bound


def test_level_bound_maxima_decrease_in_n(reports):
    hs = [r.H_max for r in reports]
    assert all(b < a for a, b in zip(hs, hs[1:]))


def test_argmax_stays_in_a_fixed_bracket(reports):
    ts = [r.t_max for r in reports]
    assert min(ts) > 0.5 and max(ts) < 2.0


def test_cross_term_order(reports):
    ct = reports[0].cross_terms
    assert ct["u_U_slope"] == pytest.approx(-0.5, rel=0.2)
    assert ct["u_U_crit_slope"] == pytest.approx(-0.5, rel=0.2)


@pytest.mark.parametrize("n", [64, 256])
def test_quadrature_matches_grid_energy(reports, n):
    r = next(r for r in reports if r.n == n)
    assert r.H_direct is not None
    assert abs(r.H_direct - r.H_max) / abs(r.H_max) < 1e-3


def test_t_grid_is_geometric():
    ts = default_t_grid(10, 0.1, 10.0)
    assert ts[0] == pytest.approx(0.1) and ts[-1] == pytest.approx(10.0)
    assert np.allclose(ts[1:] / ts[:-1], ts[1] / ts[0])


def test_flat_scan_is_rejected(minimizer):
    with pytest.raises(ValueError):
        level_bound_check(minimizer, [64], t_grid=np.geomspace(0.01, 0.2, 8))
