"""Constrained minimisation on the mass torus.

Two problems share one engine:

* the local minimiser of the full energy inside the kinetic ball of radius
  ``rho0`` (``solve_local_min``), and
* the ground state of the limit functional ``1/2 K - int |u|^alpha |v|^beta``
  (``solve_limit_ground_state``), which is the full energy with both critical
  coefficients switched off and unit coupling.

The engine is a Sobolev-preconditioned projected gradient descent with
Barzilai-Borwein steps and monotone backtracking, followed by a Newton
polish of the Lagrange system once the residual is small.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import minimize_scalar

from .functional import (
    MultiplierPair,
    StatePair,
    energy_derivative,
    energy_from_norms,
    gradient_arrays,
    multipliers_pohozaev,
    multipliers_residual,
    pair_norms,
    pohozaev_from_norms,
    tangential_arrays,
)
from .params import DerivedConstants, ProblemParams, validate
from .radial import RadialField, RadialGrid, fiber_scale, grad_sq_values, schwartz_rearrange

SINGULAR_FLOOR = 1e-300


@dataclass
class SolverOptions:
    max_iter: int = 20000
    tol_grad: float = 1e-6
    tol_mass: float = 1e-10
    tol_poho: float = 1e-4
    rearrange_every: int = 50
    newton: bool = True
    newton_switch: float = 1e-3
    newton_max: int = 30
    init: str = "gaussian"
    init_scale: bool = True

    def replace(self, **changes) -> "SolverOptions":
        return dataclasses.replace(self, **changes)


@dataclass(eq=False)
class SolveResult:
    state: StatePair
    level: float
    multipliers: MultiplierPair
    grad_residual: float
    poho_residual: float
    kinetic: float
    iterations: int
    converged: bool
    constants: DerivedConstants | None
    diagnostics: dict = field(default_factory=dict)

    @property
    def sup_norms(self) -> tuple[float, float]:
        return self.state.u.sup, self.state.v.sup

    def summary(self) -> dict:
        lam = self.multipliers
        return {
            "level": self.level,
            "lambda1": lam.lambda1,
            "lambda2": lam.lambda2,
            "grad_residual": self.grad_residual,
            "poho_residual": self.poho_residual,
            "kinetic": self.kinetic,
            "supnorm_u": self.sup_norms[0],
            "supnorm_v": self.sup_norms[1],
            "iterations": self.iterations,
            "converged": self.converged,
        }


def kinetic_of(s: StatePair) -> float:
    n = pair_norms(s.grid, s.u.values, s.v.values, s.params)
    return n.K


def in_ball(s: StatePair, c: DerivedConstants) -> bool:
    """Strict membership ``sqrt(K) < rho0``."""
    return kinetic_of(s) < c.rho0**2


# ---------------------------------------------------------------------------
# residuals


def _normalise(grid: RadialGrid, f: np.ndarray, mass: float) -> np.ndarray:
    return f * (mass / math.sqrt(grid.mass_sq(f)))


def _tangential(grid, u, v, gu, gv):
    """Tangential L2 residuals (Dirichlet node dropped) and multipliers."""
    w = grid.weights
    ru, rv, lam1, lam2 = tangential_arrays(grid, u, v, gu, gv)
    ru[-1] = 0.0
    rv[-1] = 0.0
    res = math.sqrt(float(np.dot(w, ru * ru) + np.dot(w, rv * rv)))
    return ru, rv, lam1, lam2, res


def _residuals(grid, u, v, p: ProblemParams):
    gu, gv = gradient_arrays(grid, u, v, p)
    return _tangential(grid, u, v, gu, gv)


class EnergyObjective:
    """The energy itself, optionally restricted to the open ball ``K < ball``."""

    def __init__(self, grid: RadialGrid, p: ProblemParams, ball: float | None = None):
        self.grid, self.p, self.ball = grid, p, ball

    def value(self, u, v) -> float:
        n = pair_norms(self.grid, u, v, self.p)
        if self.ball is not None and n.K >= self.ball:
            return math.inf
        return energy_from_norms(n, self.p)

    def gradient(self, u, v):
        return gradient_arrays(self.grid, u, v, self.p)


def relative_pohozaev(s: StatePair) -> float:
    n = pair_norms(s.grid, s.u.values, s.v.values, s.params)
    return abs(pohozaev_from_norms(n, s.params)) / max(1.0, n.K)


# ---------------------------------------------------------------------------
# Newton polish of the Lagrange system


def _newton_step(grid: RadialGrid, u, v, lam1, lam2, p: ProblemParams, a: float, b: float):
    """One Newton step for ``dI + lam * d(mass)/2 = 0`` with masses fixed.

    Unknowns are the free nodes of both components (the node at R is pinned
    to zero) and the two multipliers.
    """
    M = grid.M
    n = M - 1
    q = p.two_star
    ug, vg = grid.at_gauss(u), grid.at_gauss(v)
    au = np.maximum(np.abs(ug), SINGULAR_FLOOR)
    av = np.maximum(np.abs(vg), SINGULAR_FLOOR)
    du_e, dv_e = energy_derivative(grid, u, v, p)
    Mu, Mv = grid.mass_apply(u), grid.mass_apply(v)
    Fu = du_e + lam1 * Mu
    Fv = dv_e + lam2 * Mv
    Fm1 = 0.5 * (float(np.dot(u, Mu)) - a * a)
    Fm2 = 0.5 * (float(np.dot(v, Mv)) - b * b)

    c = grid.kappa / grid.h
    kd = np.zeros(M)
    kd[:-1] += c
    kd[1:] += c
    md, mo = grid.gauss_tridiag(np.ones_like(ug))
    huu = (q - 1) * p.mu1 * au ** (q - 2) + p.nu * p.alpha * (p.alpha - 1) * au ** (p.alpha - 2) * av**p.beta
    hvv = (q - 1) * p.mu2 * av ** (q - 2) + p.nu * p.beta * (p.beta - 1) * au**p.alpha * av ** (p.beta - 2)
    huv = p.nu * p.alpha * p.beta * au ** (p.alpha - 1) * av ** (p.beta - 1)
    uu_d, uu_o = grid.gauss_tridiag(huu)
    vv_d, vv_o = grid.gauss_tridiag(hvv)
    uv_d, uv_o = grid.gauss_tridiag(huv)
    # interleave (u_i, v_i): the Jacobian becomes a 7-band matrix, and the two
    # mass constraints are eliminated through a 2x2 Schur complement
    ab = np.zeros((7, 2 * n))
    diag = np.empty(2 * n)
    diag[0::2] = (kd + lam1 * md - uu_d)[:n]
    diag[1::2] = (kd + lam2 * md - vv_d)[:n]
    d1 = np.zeros(2 * n - 1)
    d1[0::2] = -uv_d[:n]
    d1[1::2] = -uv_o[: n - 1]
    d2 = np.zeros(2 * n - 2)
    d2[0::2] = (-c + lam1 * mo - uu_o)[: n - 1]
    d2[1::2] = (-c + lam2 * mo - vv_o)[: n - 1]
    d3 = np.zeros(2 * n - 3)
    d3[0::2] = -uv_o[: n - 1]
    # symmetric: each band fills both the upper and the lower half
    for k, band in ((1, d1), (2, d2), (3, d3)):
        ab[3 - k, k:] = band
        ab[3 + k, :-k] = band
    ab[3] = diag
    rhs = np.zeros((2 * n, 3))
    rhs[0::2, 0] = -Fu[:n]
    rhs[1::2, 0] = -Fv[:n]
    rhs[0::2, 1] = Mu[:n]
    rhs[1::2, 2] = Mv[:n]
    try:
        sol = solve_banded((3, 3), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(sol)):
        return None
    Cm = np.stack([rhs[:, 1], rhs[:, 2]], axis=1)
    schur = Cm.T @ sol[:, 1:]
    g_rhs = Cm.T @ sol[:, 0] + np.array([Fm1, Fm2])
    try:
        dlam = np.linalg.solve(schur, g_rhs)
    except np.linalg.LinAlgError:
        return None
    x = sol[:, 0] - sol[:, 1:] @ dlam
    dx = np.concatenate([x[0::2], x[1::2], dlam])
    du = np.zeros(M)
    dv = np.zeros(M)
    du[:n] = dx[:n]
    dv[:n] = dx[n : 2 * n]
    return du, dv, dx[2 * n], dx[2 * n + 1]


def newton_polish(grid, u, v, p: ProblemParams, a, b, opts: SolverOptions, ball: float | None, hist: list):
    _, _, lam1, lam2, res = _residuals(grid, u, v, p)
    for _ in range(opts.newton_max):
        if res <= 0.1 * opts.tol_grad:
            break
        step = _newton_step(grid, u, v, lam1, lam2, p, a, b)
        if step is None:
            break
        du, dv, dl1, dl2 = step
        accepted = False
        tau = 1.0
        for _ in range(8):
            nu_ = _normalise(grid, u + tau * du, a)
            nv_ = _normalise(grid, v + tau * dv, b)
            _, _, nl1, nl2, nres = _residuals(grid, nu_, nv_, p)
            ok_ball = ball is None or pair_norms(grid, nu_, nv_, p).K < ball
            if nres < res and ok_ball:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            break
        u, v, lam1, lam2, res = nu_, nv_, nl1, nl2, nres
        hist.append(("newton", res))
    return u, v


# ---------------------------------------------------------------------------
# descent engine


def _preconditioned(grid: RadialGrid, r: np.ndarray, f: np.ndarray, shift: float, mass_sq: float):
    d = grid.helmholtz_solve(r, shift)
    # keep the step tangent to the mass sphere to first order
    Mf = grid.mass_apply(f)
    d -= (float(np.dot(d, Mf)) / mass_sq) * f
    return d


def _h1(grid, f, shift):
    return float(np.dot(f, grid.stiffness_apply(f)) + shift * np.dot(grid.weights, f * f))


def _rearranged(grid, u, v, a, b):
    ru = schwartz_rearrange(RadialField(grid, np.abs(u))).values
    rv = schwartz_rearrange(RadialField(grid, np.abs(v))).values
    ru[-1] = 0.0
    rv[-1] = 0.0
    return _normalise(grid, ru, a), _normalise(grid, rv, b)


def descend(grid: RadialGrid, u, v, objective, a: float, b: float, opts: SolverOptions):
    """Monotone projected descent of ``objective`` on the torus.

    ``objective`` supplies ``value(u, v)`` (``inf`` marks a rejected state)
    and the L2 ``gradient(u, v)``. Returns ``(u, v, iterations, history,
    monotone)``; stops at ``opts.newton_switch`` when a Newton polish will
    follow, otherwise at ``opts.tol_grad``.
    """
    u = np.array(u, dtype=float)
    v = np.array(v, dtype=float)
    u[-1] = v[-1] = 0.0
    u, v = _normalise(grid, u, a), _normalise(grid, v, b)
    E = objective.value(u, v)
    ru, rv, lam1, lam2, res = _tangential(grid, u, v, *objective.gradient(u, v))
    hist: list = []
    monotone = True
    tau = 1.0
    shift = max(grad_sq_values(grid, u) + grad_sq_values(grid, v), 1e-8) / (a * a + b * b)
    it = 0
    target = opts.newton_switch if opts.newton else opts.tol_grad
    while it < opts.max_iter and res > target:
        it += 1
        if it % 25 == 0:
            shift = max(abs(lam1) + abs(lam2), 1e-8) / 2.0
        du = -_preconditioned(grid, ru, u, shift, a * a)
        dv = -_preconditioned(grid, rv, v, shift, b * b)
        slope = float(np.dot(grid.weights, ru * du) + np.dot(grid.weights, rv * dv))
        if slope >= 0:
            du, dv = -ru, -rv
            slope = -res * res
        accepted = False
        for _ in range(60):
            nu_ = _normalise(grid, u + tau * du, a)
            nv_ = _normalise(grid, v + tau * dv, b)
            En = objective.value(nu_, nv_)
            if En <= E + 1e-4 * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            hist.append(("stall", res))
            break
        nru, nrv, nl1, nl2, nres = _tangential(grid, nu_, nv_, *objective.gradient(nu_, nv_))
        su, sv = nu_ - u, nv_ - v
        yu, yv = nru - ru, nrv - rv
        sy = float(np.dot(grid.weights, su * yu) + np.dot(grid.weights, sv * yv))
        ss = _h1(grid, su, shift) + _h1(grid, sv, shift)
        if En > E:
            monotone = False
        u, v, E, ru, rv, lam1, lam2, res = nu_, nv_, En, nru, nrv, nl1, nl2, nres
        tau = min(max(ss / sy, 1e-6), 1e6) if sy > 0 else min(tau * 4.0, 1e6)
        if opts.rearrange_every and it % opts.rearrange_every == 0:
            qu, qv = _rearranged(grid, u, v, a, b)
            Eq = objective.value(qu, qv)
            if Eq <= E:
                u, v, E = qu, qv, Eq
                ru, rv, lam1, lam2, res = _tangential(grid, u, v, *objective.gradient(u, v))
        if it % 100 == 0:
            hist.append(("descent", res))
    return u, v, it, hist, monotone


def _minimise(grid, u, v, p, a, b, opts, ball):
    obj = EnergyObjective(grid, p, ball)
    u, v, it, hist, mono = descend(grid, u, v, obj, a, b, opts)
    if opts.newton:
        u, v = newton_polish(grid, u, v, p, a, b, opts, ball, hist)
    return u, v, it, hist, mono


def _gaussian_pair(grid: RadialGrid, a: float, b: float):
    g = np.exp(-grid.nodes**2)
    g[-1] = 0.0
    return _normalise(grid, g, a), _normalise(grid, g.copy(), b)


def _best_fiber_scale(grid, u, v, p: ProblemParams, ball: float | None) -> float:
    """Minimiser over ``t`` of the closed fiber energy, kept inside the ball."""
    n = pair_norms(grid, u, v, p)
    q = p.two_star
    hi = 4.0 if ball is None else min(4.0, 0.999 * math.sqrt(ball / n.K))

    def f(logt):
        t = math.exp(logt)
        return 0.5 * t * t * n.K - t**q * (p.mu1 * n.Cu + p.mu2 * n.Cv) / q - p.nu * t**p.gamma * n.D

    res = minimize_scalar(f, bounds=(math.log(1e-2), math.log(hi)), method="bounded", options={"xatol": 1e-6})
    return math.exp(res.x)


def _initial_pair(grid, p, a, b, opts, ball, init):
    if init is not None:
        u, v = np.array(init[0], dtype=float), np.array(init[1], dtype=float)
    else:
        u, v = _gaussian_pair(grid, a, b)
    if opts.init_scale and p.nu > 0:
        t = _best_fiber_scale(grid, u, v, p, ball)
        if abs(t - 1.0) > 1e-3:
            u = fiber_scale(RadialField(grid, u), t, (1e-3, 1e3)).values
            v = fiber_scale(RadialField(grid, v), t, (1e-3, 1e3)).values
    return u, v


def _finish(grid, u, v, p_eval, p_report, a, b, it, hist, monotone, opts, constants, ball):
    s = StatePair.from_arrays(grid, u, v, p_eval)
    n = pair_norms(grid, u, v, p_eval)
    _, _, _, _, res = _residuals(grid, u, v, p_eval)
    level = energy_from_norms(n, p_eval)
    poho = abs(pohozaev_from_norms(n, p_eval)) / max(1.0, n.K)
    lam = multipliers_residual(s, tol_mass=1e-6)
    lam_p = multipliers_pohozaev(s, tol_mass=1e-6)
    mass_err = max(abs(math.sqrt(n.mass_u) - a) / a, abs(math.sqrt(n.mass_v) - b) / b)
    tail = (abs(u[-2]) + abs(v[-2])) / max(np.max(np.abs(u)) + np.max(np.abs(v)), 1e-300)
    conv = res <= opts.tol_grad and mass_err <= opts.tol_mass and poho <= opts.tol_poho
    if ball is not None:
        conv = conv and n.K < ball
    diagnostics = {
        "mass_error": mass_err,
        "tail_ratio": tail,
        "energy_monotone": monotone,
        "multipliers_pohozaev": [lam_p.lambda1, lam_p.lambda2],
        "history": [[k, float(r)] for k, r in hist[-50:]],
        "grid": grid.describe(),
    }
    return SolveResult(
        state=StatePair.from_arrays(grid, u, v, p_report),
        level=level,
        multipliers=lam,
        grad_residual=res,
        poho_residual=poho,
        kinetic=n.K,
        iterations=it,
        converged=bool(conv),
        constants=constants,
        diagnostics=diagnostics,
    )


def solve_local_min(
    p: ProblemParams,
    grid: RadialGrid,
    constants: DerivedConstants,
    opts: SolverOptions | None = None,
    init=None,
) -> SolveResult:
    """Local minimiser of the energy on the torus inside the ball ``K < rho0**2``."""
    validate(p)
    opts = opts or SolverOptions()
    if grid.N != p.N:
        raise ValueError("grid dimension does not match the problem")
    ball = constants.rho0**2
    u, v = _initial_pair(grid, p, p.a, p.b, opts, ball, init)
    if p.nu == 0.0:
        # without coupling the infimum (zero) is approached only as K -> 0
        short = opts.replace(max_iter=min(opts.max_iter, 500), newton=False)
        u, v, it, hist, mono = _minimise(grid, u, v, p, p.a, p.b, short, ball)
        out = _finish(grid, u, v, p, p, p.a, p.b, it, hist, mono, short, constants, ball)
        out.converged = False
        out.diagnostics["not_attained"] = True
        out.diagnostics["reason"] = "coupling is zero; the infimum 0 is not attained"
        return out
    u, v, it, hist, mono = _minimise(grid, u, v, p, p.a, p.b, opts, ball)
    out = _finish(grid, u, v, p, p, p.a, p.b, it, hist, mono, opts, constants, ball)
    out.diagnostics["nu_over_nu_bar0"] = p.nu / constants.nu_bar0
    if not constants.geometry_ok:
        out.diagnostics["warning"] = "nu >= nu_bar0: ball geometry not guaranteed"
    if out.level >= 0:
        out.diagnostics["geometry_violation"] = True
        out.converged = False
    return out


def limit_params(N: int, a: float, b: float, alpha: float, beta: float) -> ProblemParams:
    """Parameters under which the full energy equals the limit functional."""
    return ProblemParams(N=N, a=a, b=b, mu1=0.0, mu2=0.0, alpha=alpha, beta=beta, nu=1.0)


def solve_limit_ground_state(
    N: int,
    a: float,
    b: float,
    alpha: float,
    beta: float,
    grid: RadialGrid,
    opts: SolverOptions | None = None,
    init=None,
) -> SolveResult:
    """Minimiser of ``1/2 K - int |u|^alpha |v|^beta`` on the torus (no ball)."""
    validate(ProblemParams(N=N, a=a, b=b, alpha=alpha, beta=beta))
    opts = opts or SolverOptions()
    p = limit_params(N, a, b, alpha, beta)
    u, v = _initial_pair(grid, p, a, b, opts, None, init)
    u, v, it, hist, mono = _minimise(grid, u, v, p, a, b, opts, None)
    out = _finish(grid, u, v, p, p, a, b, it, hist, mono, opts, None, None)
    if out.level >= 0:
        out.converged = False
    return out
