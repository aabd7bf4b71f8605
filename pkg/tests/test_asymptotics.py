import csv
import math

import numpy as np
import pytest

from normcrit.asymptotics import (
    SWEEP_COLUMNS,
    SweepOptions,
    bubble_distance,
    default_nu_list,
    extract_epsilon,
    fit_exponent,
    ground_state_distance,
    profile_scale,
    sweep,
    sweep_exponents,
    write_sweep_csv,
)
from normcrit.bubbles import bubble_profile
from normcrit.functional import StatePair
from normcrit.minsolve import solve_limit_ground_state
from normcrit.radial import RadialField, build_grid, dilate, fiber_scale

from .conftest import C_GN


@pytest.fixture(scope="module")
def wide():
    return build_grid(3, R=1000.0, M=8000)


def test_fit_exponent_recovers_power_laws():
    xs = [2.0**-k for k in range(3, 9)]
    s, c, r2 = fit_exponent([(x, 3.0 * x**1.75) for x in xs])
    assert s == pytest.approx(1.75, abs=1e-12)
    assert c == pytest.approx(math.log(3.0), abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_exponent_needs_three_points():
    with pytest.raises(ValueError):
        fit_exponent([(1, 1), (2, 2)])


def test_profile_scale_solves_the_scaled_equation():
    # -Delta(cU) = c U^5 must equal mu (cU)^5, so mu c^4 = 1 in three dimensions
    for mu in (0.5, 1.0, 2.0):
        assert mu * profile_scale(3, mu) ** 4 == pytest.approx(1.0)


@pytest.mark.parametrize("mu", [1.0, 2.0])
@pytest.mark.parametrize("eps", [0.05, 0.3, 2.0])
def test_epsilon_of_a_dilated_bubble(wide, mu, eps):
    base = RadialField(wide, profile_scale(3, mu) * bubble_profile(3, wide.nodes))
    f = dilate(base, 1.0 / eps)
    assert extract_epsilon(f, mu) == pytest.approx(eps, rel=1e-6)
    # the fixed point: a field already at scale one reports one
    assert extract_epsilon(base, mu) == pytest.approx(1.0, rel=1e-12)


def test_epsilon_rejects_a_zero_field(wide):
    with pytest.raises(ValueError):
        extract_epsilon(RadialField(wide, np.zeros(wide.M)), 1.0)


def _concentrated(grid, eps, mu=1.0):
    # built from the closed form so no tail is lost past the ball
    c = profile_scale(3, mu)
    return RadialField(grid, c * eps**-0.5 * bubble_profile(3, grid.nodes / eps))


@pytest.mark.parametrize("mu", [1.0, 2.0])
def test_bubble_distance_vanishes_on_bubbles(wide, mu):
    for eps in (0.01, 0.1, 0.5):
        f = _concentrated(wide, eps, mu)
        assert extract_epsilon(f, mu) == pytest.approx(eps, rel=1e-12)
        assert bubble_distance(f, mu) < 1e-3


def test_bubble_distance_responds_linearly(wide):
    r = wide.nodes
    U = bubble_profile(3, r)
    bump = np.exp(-((r - 1.0) ** 2)) * r**2 * np.exp(-r)
    bump[0] = 0.0
    ds = [bubble_distance(RadialField(wide, U + d * bump), 1.0) for d in (1e-3, 2e-3, 4e-3)]
    assert ds[0] > 0
    assert ds[1] / ds[0] == pytest.approx(2.0, rel=0.05)
    assert ds[2] / ds[1] == pytest.approx(2.0, rel=0.05)


def test_ground_state_distance_identity_and_fiber(grid):
    gs = solve_limit_ground_state(3, 1.0, 1.0, 1.2, 1.2, grid)
    t, d = ground_state_distance(gs.state, gs.state)
    assert t == 1.0 and d == 0.0
    s = gs.state
    moved = StatePair(fiber_scale(s.u, 1.5), fiber_scale(s.v, 1.5), s.params)
    t, d = ground_state_distance(moved, gs.state)
    assert t == pytest.approx(1 / 1.5, rel=1e-4)
    assert d < 1e-3


def test_ground_state_distance_needs_a_common_grid(grid):
    gs = solve_limit_ground_state(3, 1.0, 1.0, 1.2, 1.2, grid)
    other = solve_limit_ground_state(3, 1.0, 1.0, 1.2, 1.2, build_grid(3, M=2000))
    with pytest.raises(ValueError):
        ground_state_distance(other.state, gs.state)


def test_default_nu_list():
    nus = default_nu_list(8.0)
    assert nus == [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]


def test_sweep_rejects_unsorted_couplings(base_params, grid):
    opts = SweepOptions(C_gn=C_GN, mountain=False)
    with pytest.raises(ValueError):
        sweep(base_params, [0.1, 0.2], grid, opts)
    with pytest.raises(ValueError):
        sweep(base_params, [], grid, opts)


@pytest.fixture(scope="module")
def small_sweep(base_params, grid, default_instance):
    _, c = default_instance
    nus = default_nu_list(c.nu_bar0, range(3, 6))
    return sweep(base_params, nus, grid, SweepOptions(C_gn=C_GN, mountain=False))


def test_sweep_records(small_sweep):
    assert len(small_sweep) == 3
    for r in small_sweep:
        assert r.converged_min
        assert r.min_summary["level"] < 0
        assert math.isfinite(r.t_nu) and math.isfinite(r.gs_distance)
        assert math.isnan(r.eps_nu)
    levels = [r.min_summary["level"] for r in small_sweep]
    assert all(b > a for a, b in zip(levels, levels[1:]))
    assert small_sweep[0].cold_start["m_level_gap"] < 1e-8
    ex = sweep_exponents(small_sweep)
    assert set(ex) == {"lambda_sum", "kinetic", "t_nu"}


def test_sweep_csv(small_sweep, tmp_path):
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, small_sweep)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 4
    assert rows[1][SWEEP_COLUMNS.index("converged_min")] == "true"
    assert rows[1][SWEEP_COLUMNS.index("mp_level")] == "nan"
    assert float(rows[1][0]) == small_sweep[0].nu


def test_sweep_is_deterministic(base_params, grid, small_sweep, default_instance, tmp_path):
    _, c = default_instance
    nus = default_nu_list(c.nu_bar0, range(3, 6))
    again = sweep(base_params, nus, grid, SweepOptions(C_gn=C_GN, mountain=False))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(a, small_sweep)
    write_sweep_csv(b, again)
    assert a.read_bytes() == b.read_bytes()
