import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normcrit.params import (
    ParamError,
    ProblemParams,
    derive_constants,
    h_profile,
    level_bound_gap,
    sobolev_constant,
    talenti_constant,
    validate,
)

from .conftest import C_GN


def test_default_instance_is_accepted():
    p = ProblemParams(N=3, a=1, b=1, mu1=1, mu2=1, alpha=1.2, beta=1.2, nu=0.01)
    assert validate(p) is p


def test_exponent_sum_at_limit_rejected():
    with pytest.raises(ParamError) as err:
        validate(ProblemParams(N=4, alpha=1.6, beta=1.6))
    assert err.value.key == "alpha/beta"


@pytest.mark.parametrize(
    "changes, key",
    [
        ({"N": 5}, "N"),
        ({"N": 2}, "N"),
        ({"a": 0.0}, "a"),
        ({"b": -1.0}, "b"),
        ({"mu1": 0.0}, "mu1"),
        ({"mu2": float("nan")}, "mu2"),
        ({"nu": -0.1}, "nu"),
        ({"alpha": 1.0}, "alpha"),
        ({"beta": 0.5}, "beta"),
    ],
)
def test_rejections_name_the_field(changes, key):
    with pytest.raises(ParamError) as err:
        validate(ProblemParams().replace(**changes))
    assert err.value.key == key


@pytest.mark.parametrize("N, value", [(3, 5.4779), (4, 10.2604)])
def test_sobolev_constant_matches_talenti(N, value):
    assert sobolev_constant(N) == pytest.approx(talenti_constant(N), rel=1e-14)
    assert sobolev_constant(N) == pytest.approx(value, abs=1e-4)


def test_sobolev_constant_unsupported_dimension():
    with pytest.raises(ParamError):
        sobolev_constant(5)


def test_default_constants():
    c = derive_constants(ProblemParams(), C_GN)
    assert c.gamma == pytest.approx(0.6)
    assert c.two_star == 6.0
    assert c.nu_bar0 == pytest.approx(5.20144, rel=1e-5)
    assert c.rho0 == pytest.approx(3.3626, rel=1e-4)
    assert c.k0 == pytest.approx(2.0939, rel=1e-4)
    assert c.nu0 == pytest.approx(0.5 * c.nu_bar0)
    assert c.A == pytest.approx(C_GN * 2 ** ((2.4 - 0.6) / 2))
    assert c.B == pytest.approx(c.S**-3 * 1.0 / 6.0)


def test_h_vanishes_at_rho0_on_the_threshold():
    c = derive_constants(ProblemParams(), C_GN)
    assert abs(h_profile(c, c.nu_bar0, c.rho0)) < 1e-12


def test_h_is_stationary_at_rho_nu():
    p = ProblemParams(nu=0.7)
    c = derive_constants(p, C_GN)
    d = 1e-6 * c.rho_nu
    slope = (h_profile(c, p.nu, c.rho_nu + d) - h_profile(c, p.nu, c.rho_nu - d)) / (2 * d)
    assert abs(slope) < 1e-8


def test_h_max_matches_dense_scan():
    p = ProblemParams(nu=0.7)
    c = derive_constants(p, C_GN)
    rho = np.linspace(0.5 * c.rho_nu, 1.5 * c.rho_nu, 200001)
    scan = h_profile(c, p.nu, rho)
    assert abs(scan.max() - h_profile(c, p.nu, c.rho_nu)) < 1e-10
    wide = h_profile(c, p.nu, np.geomspace(1e-3, 1e3, 20001))
    assert np.all(wide <= h_profile(c, p.nu, c.rho_nu) + 1e-15)


def test_h_limits():
    c = derive_constants(ProblemParams(), C_GN)
    assert h_profile(c, 0.0, 1e-8) == pytest.approx(0.5, abs=1e-12)
    assert h_profile(c, 1.0, 1e-8) < -1e3
    with pytest.raises(ValueError):
        h_profile(c, 1.0, 0.0)


def test_threshold_decreases_with_masses():
    small = derive_constants(ProblemParams(a=1, b=1), C_GN).nu_bar0
    big = derive_constants(ProblemParams(a=2, b=2), C_GN).nu_bar0
    assert big <= small


def test_threshold_decreases_with_gn_constant():
    p = ProblemParams()
    assert derive_constants(p, 0.3).nu_bar0 < derive_constants(p, 0.2).nu_bar0


def test_nu_above_threshold_is_flagged_not_rejected():
    c = derive_constants(ProblemParams(nu=10.0), C_GN)
    assert not c.geometry_ok
    assert math.isfinite(c.k0)


def test_level_bound_gap_uses_smaller_coefficient_power():
    p = ProblemParams(mu1=1.0, mu2=2.0)
    S = sobolev_constant(3)
    assert level_bound_gap(p) == pytest.approx(S**1.5 / 3 / math.sqrt(2))


def test_constants_round_trip():
    c = derive_constants(ProblemParams(nu=0.3), C_GN)
    assert type(c).from_dict(c.to_dict()) == c


@st.composite
def valid_params(draw):
    N = draw(st.sampled_from([3, 4]))
    limit = 2 + 4 / N
    alpha = draw(st.floats(1.01, limit - 1.02))
    beta = draw(st.floats(1.01, limit - alpha - 0.005))
    return ProblemParams(
        N=N,
        a=draw(st.floats(0.1, 5)),
        b=draw(st.floats(0.1, 5)),
        mu1=draw(st.floats(0.1, 5)),
        mu2=draw(st.floats(0.1, 5)),
        alpha=alpha,
        beta=beta,
        nu=0.0,
    )


@settings(max_examples=200, deadline=None)
@given(valid_params(), st.floats(0.05, 0.95))
def test_random_instances_have_mass_mixed_geometry(p, frac):
    validate(p)
    c = derive_constants(p, C_GN, nu0_fraction=frac)
    assert 0 < c.gamma < 2 < c.two_star
    assert c.gamma < c.two_star
    assert c.k0 > 0
    assert c.nu0 < c.nu_bar0
    assert abs(h_profile(c, c.nu_bar0, c.rho0)) < 1e-9
