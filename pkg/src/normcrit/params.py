"""Problem instances and the closed-form constants of the energy geometry."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np


class ParamError(ValueError):
    """Raised when a problem instance violates an admissibility constraint.

    ``key`` names the offending field (or ``"alpha/beta"`` for the joint
    exponent condition) so that config loaders can point at it.
    """

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ProblemParams:
    N: int = 3
    a: float = 1.0
    b: float = 1.0
    mu1: float = 1.0
    mu2: float = 1.0
    alpha: float = 1.2
    beta: float = 1.2
    nu: float = 0.0

    @property
    def two_star(self) -> float:
        return 2.0 * self.N / (self.N - 2)

    @property
    def gamma(self) -> float:
        return self.N * (self.alpha + self.beta - 2.0) / 2.0

    @property
    def mu_max(self) -> float:
        return max(self.mu1, self.mu2)

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def validate(raw: ProblemParams) -> ProblemParams:
    """Return ``raw`` unchanged if it is an admissible mass-mixed instance."""
    if raw.N not in (3, 4):
        raise ParamError("N", f"dimension must be 3 or 4, got {raw.N}")
    for key in ("a", "b", "mu1", "mu2"):
        val = getattr(raw, key)
        if not (np.isfinite(val) and val > 0):
            raise ParamError(key, f"must be positive, got {val}")
    if not (np.isfinite(raw.nu) and raw.nu >= 0):
        raise ParamError("nu", f"must be nonnegative, got {raw.nu}")
    for key in ("alpha", "beta"):
        val = getattr(raw, key)
        if not (np.isfinite(val) and val > 1):
            raise ParamError(key, f"must exceed 1, got {val}")
    limit = 2.0 + 4.0 / raw.N
    if raw.alpha + raw.beta >= limit:
        raise ParamError(
            "alpha/beta",
            f"alpha + beta = {raw.alpha + raw.beta:g} must be < 2 + 4/N = {limit:g}",
        )
    return raw


# Talenti closed form pi*N*(N-2)*(Gamma(N/2)/Gamma(N))**(2/N), evaluated once
# and cross-checked against the Rayleigh quotient of the bubble in the tests.
_SOBOLEV = {
    3: 5.477904089531332,
    4: 10.260398641294913,
}


def talenti_constant(N: int) -> float:
    return math.pi * N * (N - 2) * (math.gamma(N / 2) / math.gamma(N)) ** (2.0 / N)


def sobolev_constant(N: int) -> float:
    """Sharp constant S in ``S * |u|_{2*}^2 <= |grad u|_2^2`` on R^N."""
    try:
        return _SOBOLEV[N]
    except KeyError:
        raise ParamError("N", f"no Sobolev constant for dimension {N}") from None


@dataclass(frozen=True)
class DerivedConstants:
    gamma: float
    two_star: float
    S: float
    C_gn: float
    A: float
    B: float
    rho_nu: float
    nu_bar0: float
    rho0: float
    nu0: float
    k0: float
    nu: float = 0.0
    geometry_ok: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DerivedConstants":
        return cls(**data)

    def h(self, nu: float, rho):
        return h_profile(self, nu, rho)

    @property
    def C1(self) -> float:
        return (self.A * (2 - self.gamma) / (self.B * (self.two_star - 2))) ** (
            1.0 / (self.two_star - self.gamma)
        )


def h_profile(c: DerivedConstants, nu: float, rho):
    """``1/2 - nu*A*rho**(gamma-2) - B*rho**(2*-2)``; vectorised over ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("rho must be positive")
    out = 0.5 - nu * c.A * rho ** (c.gamma - 2.0) - c.B * rho ** (c.two_star - 2.0)
    return float(out) if out.ndim == 0 else out


def nu_bar0_closed(p: ProblemParams, S: float, C_gn: float) -> float:
    """Threshold below which ``max_rho h_nu(rho) > 0``, in expanded form."""
    g, q = p.gamma, p.two_star
    mass = (p.a**2 + p.b**2) ** ((p.alpha + p.beta - g) / 2.0)
    return (
        p.mu_max ** ((g - 2) / (q - 2))
        * (q - 2)
        * (q * (2 - g)) ** ((2 - g) / (q - 2))
        / (2 * (q - g)) ** ((q - g) / (q - 2))
        * S ** (q * (2 - g) / (2 * (q - 2)))
        / (C_gn * mass)
    )


def derive_constants(
    p: ProblemParams, C_gn: float, nu0_fraction: float = 0.5
) -> DerivedConstants:
    validate(p)
    if not C_gn > 0:
        raise ValueError("C_gn must be positive")
    if not 0 < nu0_fraction < 1:
        raise ValueError("nu0_fraction must lie in (0, 1)")
    g, q = p.gamma, p.two_star
    S = sobolev_constant(p.N)
    A = C_gn * (p.a**2 + p.b**2) ** ((p.alpha + p.beta - g) / 2.0)
    B = S ** (-q / 2.0) * p.mu_max / q
    C1 = (A * (2 - g) / (B * (q - 2))) ** (1.0 / (q - g))
    nu_bar0 = nu_bar0_closed(p, S, C_gn)
    rho0 = nu_bar0 ** (1.0 / (q - g)) * C1
    nu0 = nu0_fraction * nu_bar0
    rho_nu = p.nu ** (1.0 / (q - g)) * C1
    k0 = rho0**2 * (0.5 - nu0 * A * rho0 ** (g - 2) - B * rho0 ** (q - 2))
    return DerivedConstants(
        gamma=g,
        two_star=q,
        S=S,
        C_gn=C_gn,
        A=A,
        B=B,
        rho_nu=rho_nu,
        nu_bar0=nu_bar0,
        rho0=rho0,
        nu0=nu0,
        k0=k0,
        nu=p.nu,
        geometry_ok=p.nu < nu_bar0,
    )


def level_bound_gap(p: ProblemParams) -> float:
    """``(1/N) * min(mu1, mu2)**((2-N)/2) * S**(N/2)``: the critical bubble level."""
    S = sobolev_constant(p.N)
    e = (2.0 - p.N) / 2.0
    return min(p.mu1**e, p.mu2**e) * S ** (p.N / 2.0) / p.N
