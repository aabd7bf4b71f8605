"""Constrained energy of the coupled critical system and related functionals.

Sign convention: both critical terms enter the energy with a minus sign,

    I(u, v) = 1/2 (|u'|^2 + |v'|^2) - mu1/2* |u|_{2*}^{2*} - mu2/2* |v|_{2*}^{2*}
              - nu * int |u|^alpha |v|^beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import ProblemParams
from .radial import (
    GridMismatch,
    RadialField,
    RadialGrid,
    ScaleWindowError,
    fiber_scale,
    grad_sq_values,
    interaction_values,
)


class NotOnTorus(ValueError):
    pass


@dataclass(eq=False)
class StatePair:
    u: RadialField
    v: RadialField
    params: ProblemParams

    def __post_init__(self):
        if not self.u.grid.same_as(self.v.grid):
            raise GridMismatch("u and v must share a grid")

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid

    @classmethod
    def from_arrays(cls, grid: RadialGrid, u, v, params: ProblemParams) -> "StatePair":
        return cls(RadialField(grid, u), RadialField(grid, v), params)

    def copy(self) -> "StatePair":
        return StatePair(self.u.copy(), self.v.copy(), self.params)

    def with_params(self, params: ProblemParams) -> "StatePair":
        return StatePair(self.u, self.v, params)

    def masses(self) -> tuple[float, float]:
        g = self.grid
        return math.sqrt(g.mass_sq(self.u.values)), math.sqrt(g.mass_sq(self.v.values))

    def on_torus(self, tol_mass: float = 1e-6) -> bool:
        ma, mb = self.masses()
        p = self.params
        return abs(ma - p.a) <= tol_mass * p.a and abs(mb - p.b) <= tol_mass * p.b

    def swapped(self) -> "StatePair":
        p = self.params
        q = p.replace(a=p.b, b=p.a, mu1=p.mu2, mu2=p.mu1, alpha=p.beta, beta=p.alpha)
        return StatePair(self.v, self.u, q)


@dataclass(frozen=True)
class MultiplierPair:
    lambda1: float
    lambda2: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.lambda1, self.lambda2)


@dataclass(frozen=True)
class PairNorms:
    """Every integral the closed-form functionals need, evaluated once."""

    Ku: float
    Kv: float
    Cu: float
    Cv: float
    D: float
    mass_u: float
    mass_v: float

    @property
    def K(self) -> float:
        return self.Ku + self.Kv


def pair_norms(grid: RadialGrid, u: np.ndarray, v: np.ndarray, p: ProblemParams) -> PairNorms:
    q = p.two_star
    ug, vg = grid.at_gauss(u), grid.at_gauss(v)
    au, av = np.abs(ug), np.abs(vg)
    return PairNorms(
        Ku=grad_sq_values(grid, u),
        Kv=grad_sq_values(grid, v),
        Cu=grid.gauss_integrate(au**q),
        Cv=grid.gauss_integrate(av**q),
        D=grid.gauss_integrate(au**p.alpha * av**p.beta),
        mass_u=grid.gauss_integrate(ug * ug),
        mass_v=grid.gauss_integrate(vg * vg),
    )


def state_norms(s: StatePair) -> PairNorms:
    return pair_norms(s.grid, s.u.values, s.v.values, s.params)


def energy_from_norms(n: PairNorms, p: ProblemParams) -> float:
    q = p.two_star
    return 0.5 * n.K - (p.mu1 * n.Cu + p.mu2 * n.Cv) / q - p.nu * n.D


def pohozaev_from_norms(n: PairNorms, p: ProblemParams) -> float:
    return n.K - p.mu1 * n.Cu - p.mu2 * n.Cv - p.nu * p.gamma * n.D


def fiber_from_norms(n: PairNorms, p: ProblemParams, t):
    q = p.two_star
    t = np.asarray(t, dtype=float)
    out = 0.5 * t**2 * n.K - t**q * (p.mu1 * n.Cu + p.mu2 * n.Cv) / q - p.nu * t**p.gamma * n.D
    return float(out) if out.ndim == 0 else out


def energy(s: StatePair) -> float:
    return energy_from_norms(state_norms(s), s.params)


def pohozaev(s: StatePair) -> float:
    return pohozaev_from_norms(state_norms(s), s.params)


def fiber_energy_closed(s: StatePair, t) -> float:
    """``I(t * s)`` from the norms of ``s``; no interpolation involved."""
    return fiber_from_norms(state_norms(s), s.params, t)


def aux_energy(sigma: float, s: StatePair, window=(1e-3, 1e3)) -> float:
    t = math.exp(sigma)
    if not (window[0] <= t <= window[1]):
        raise ScaleWindowError(f"exp(sigma)={t:g} outside fiber window")
    return fiber_energy_closed(s, t)


def _signed_pow(x: np.ndarray, e: float) -> np.ndarray:
    """``sign(x) |x|**e``, zero at zero (``e > 0``)."""
    return np.sign(x) * np.abs(x) ** e


def energy_derivative(grid: RadialGrid, u: np.ndarray, v: np.ndarray, p: ProblemParams):
    """Euclidean partial derivatives ``dI/du_i``, ``dI/dv_i`` of the discrete energy."""
    q = p.two_star
    ug, vg = grid.at_gauss(u), grid.at_gauss(v)
    fu = p.mu1 * _signed_pow(ug, q - 1)
    fv = p.mu2 * _signed_pow(vg, q - 1)
    if p.nu != 0.0:
        au, av = np.abs(ug), np.abs(vg)
        fu = fu + p.nu * p.alpha * _signed_pow(ug, p.alpha - 1) * av**p.beta
        fv = fv + p.nu * p.beta * au**p.alpha * _signed_pow(vg, p.beta - 1)
    du = grid.stiffness_apply(u) - grid.gauss_adjoint(fu)
    dv = grid.stiffness_apply(v) - grid.gauss_adjoint(fv)
    return du, dv


def gradient_arrays(grid: RadialGrid, u: np.ndarray, v: np.ndarray, p: ProblemParams):
    """L2 gradient of the energy: ``(1/w) dI/df`` nodewise, for both components."""
    du, dv = energy_derivative(grid, u, v, p)
    return du / grid.weights, dv / grid.weights


def gradient(s: StatePair) -> StatePair:
    gu, gv = gradient_arrays(s.grid, s.u.values, s.v.values, s.params)
    return StatePair.from_arrays(s.grid, gu, gv, s.params)


def l2_inner(grid: RadialGrid, f: np.ndarray, g: np.ndarray) -> float:
    return float(np.dot(grid.weights, f * g))


def _require_torus(s: StatePair, tol_mass: float):
    if not s.on_torus(tol_mass):
        ma, mb = s.masses()
        raise NotOnTorus(f"masses ({ma:.6g}, {mb:.6g}) not on T({s.params.a:g}, {s.params.b:g})")


def multipliers_residual(s: StatePair, tol_mass: float = 1e-6, check_torus: bool = True) -> MultiplierPair:
    """Frequencies from projecting the gradient on the state itself."""
    if check_torus:
        _require_torus(s, tol_mass)
    p = s.params
    gu, gv = gradient_arrays(s.grid, s.u.values, s.v.values, p)
    return MultiplierPair(
        -l2_inner(s.grid, gu, s.u.values) / p.a**2,
        -l2_inner(s.grid, gv, s.v.values) / p.b**2,
    )


def multipliers_pohozaev(s: StatePair, tol_mass: float = 1e-6, check_torus: bool = True) -> MultiplierPair:
    """Frequencies from the Nehari-type identities combined with ``P = 0``."""
    if check_torus:
        _require_torus(s, tol_mass)
    p = s.params
    n = state_norms(s)
    g = p.gamma
    lam1 = (n.Kv - p.mu2 * n.Cv - (g - p.alpha) * p.nu * n.D) / p.a**2
    lam2 = (n.Ku - p.mu1 * n.Cu - (g - p.beta) * p.nu * n.D) / p.b**2
    return MultiplierPair(lam1, lam2)


def tangential_arrays(grid: RadialGrid, u, v, gu, gv):
    """Remove the constraint normal from an L2 gradient pair.

    The masses are the exact integrals of the interpolants, so the normal of
    ``{int u_h^2 = a^2}`` in the node metric is ``(M u) / w``.
    """
    w = grid.weights
    Mu, Mv = grid.mass_apply(u), grid.mass_apply(v)
    mu_, mv_ = float(np.dot(u, Mu)), float(np.dot(v, Mv))
    lam1 = -l2_inner(grid, gu, u) / mu_ if mu_ > 0 else 0.0
    lam2 = -l2_inner(grid, gv, v) / mv_ if mv_ > 0 else 0.0
    return gu + lam1 * Mu / w, gv + lam2 * Mv / w, lam1, lam2


def projected_gradient_arrays(grid, u, v, p: ProblemParams):
    """Tangential part of the L2 gradient on the mass torus, plus multipliers."""
    gu, gv = gradient_arrays(grid, u, v, p)
    return tangential_arrays(grid, u, v, gu, gv)


def projected_gradient_norm(s: StatePair, dirichlet: bool = True) -> float:
    ru, rv, _, _ = projected_gradient_arrays(s.grid, s.u.values, s.v.values, s.params)
    w = s.grid.weights
    if dirichlet:
        ru, rv = ru[:-1], rv[:-1]
        w = w[:-1]
    return math.sqrt(float(np.dot(w, ru * ru) + np.dot(w, rv * rv)))


# ---------------------------------------------------------------------------
# Gagliardo-Nirenberg ratio

def _gn_exponents(N: int, alpha: float, beta: float):
    g = N * (alpha + beta - 2.0) / 2.0
    return g, (alpha + beta - g) / 2.0, g / 2.0


def gn_ratio_arrays(grid: RadialGrid, u, v, alpha: float, beta: float) -> float:
    _, e_mass, e_kin = _gn_exponents(grid.N, alpha, beta)
    mu_, mv_ = grid.mass_sq(u), grid.mass_sq(v)
    if mu_ == 0 or mv_ == 0:
        raise ZeroDivisionError("gn_ratio needs nontrivial u and v")
    D = interaction_values(grid, u, v, alpha, beta)
    m = mu_ + mv_
    K = grad_sq_values(grid, u) + grad_sq_values(grid, v)
    if K == 0:
        raise ZeroDivisionError("gn_ratio needs nonconstant u and v")
    return D / (m**e_mass * K**e_kin)


def gn_ratio(s: StatePair) -> float:
    p = s.params
    return gn_ratio_arrays(s.grid, s.u.values, s.v.values, p.alpha, p.beta)


def random_smooth_field(grid: RadialGrid, rng: np.random.Generator, n_bumps: int = 3, scale: float = 1.0) -> np.ndarray:
    """Nonnegative sum of a few Gaussian shells; vanishes (to roundoff) at R."""
    r = grid.nodes
    out = np.zeros_like(r)
    for _ in range(n_bumps):
        c = rng.uniform(0.0, 3.0) * scale
        width = rng.uniform(0.5, 2.5) * scale
        out += rng.uniform(0.2, 1.0) * np.exp(-(((r - c) / width) ** 2))
    out[-1] = 0.0
    return out


def _log_gn_grad(grid, u, v, alpha, beta):
    _, e_mass, e_kin = _gn_exponents(grid.N, alpha, beta)
    w = grid.weights
    ug, vg = grid.at_gauss(u), grid.at_gauss(v)
    au, av = np.abs(ug), np.abs(vg)
    D = grid.gauss_integrate(au**alpha * av**beta)
    Mu, Mv = grid.mass_apply(u), grid.mass_apply(v)
    m = float(np.dot(u, Mu) + np.dot(v, Mv))
    Ku_vec, Kv_vec = grid.stiffness_apply(u), grid.stiffness_apply(v)
    K = float(np.dot(u, Ku_vec) + np.dot(v, Kv_vec))
    val = math.log(D) - e_mass * math.log(m) - e_kin * math.log(K)
    dDu = grid.gauss_adjoint(alpha * _signed_pow(ug, alpha - 1) * av**beta)
    dDv = grid.gauss_adjoint(beta * au**alpha * _signed_pow(vg, beta - 1))
    gu = (dDu / D - 2 * e_mass * Mu / m - 2 * e_kin * Ku_vec / K) / w
    gv = (dDv / D - 2 * e_mass * Mv / m - 2 * e_kin * Kv_vec / K) / w
    return val, gu, gv


def _h1_quad(grid: RadialGrid, f: np.ndarray) -> float:
    return float(np.dot(f, grid.stiffness_apply(f)) + np.dot(grid.weights, f * f))


def gn_ascent(grid: RadialGrid, u, v, alpha: float, beta: float, iters: int = 400, tol: float = 1e-12):
    """Local ascent of ``log gn_ratio`` with an H1-preconditioned BB step."""
    w = grid.weights
    u, v = np.array(u, dtype=float), np.array(v, dtype=float)
    val, gu, gv = _log_gn_grad(grid, u, v, alpha, beta)
    step = 0.05
    for _ in range(iters):
        du = grid.helmholtz_solve(gu, 1.0)
        dv = grid.helmholtz_solve(gv, 1.0)
        while True:
            nu_, nv_ = u + step * du, v + step * dv
            try:
                nval, ngu, ngv = _log_gn_grad(grid, nu_, nv_, alpha, beta)
            except (ValueError, ZeroDivisionError):
                nval = -np.inf
            if np.isfinite(nval) and nval >= val - 1e-15:
                break
            step *= 0.5
            if step < 1e-14:
                return u, v, math.exp(val)
        # the ratio is invariant under a joint amplitude change; pin it
        scale = 1.0 / math.sqrt(grid.mass_sq(nu_) + grid.mass_sq(nv_))
        nu_, nv_ = nu_ * scale, nv_ * scale
        nval, ngu, ngv = _log_gn_grad(grid, nu_, nv_, alpha, beta)
        su, sv = nu_ - u, nv_ - v
        curv = -float(np.dot(w, su * (ngu - gu)) + np.dot(w, sv * (ngv - gv)))
        gain = nval - val
        u, v, val, gu, gv = nu_, nv_, nval, ngu, ngv
        if curv > 0:
            step = min(max((_h1_quad(grid, su) + _h1_quad(grid, sv)) / curv, 1e-6), 1e4)
        if 0 <= gain < tol:
            break
    return u, v, math.exp(val)


def gn_estimate(grid: RadialGrid, alpha: float, beta: float, trials: int = 6, seed: int = 0, iters: int = 400) -> float:
    """Supremum of ``gn_ratio`` over ``trials`` random states after local ascent."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        u = random_smooth_field(grid, rng)
        v = random_smooth_field(grid, rng)
        _, _, val = gn_ascent(grid, u, v, alpha, beta, iters=iters)
        best = max(best, val)
    return best


def fiber_scaled_state(s: StatePair, t: float, window=(1e-3, 1e3)) -> StatePair:
    return StatePair(fiber_scale(s.u, t, window), fiber_scale(s.v, t, window), s.params)
