"""Small-coupling sweeps: scaling exponents, ground-state limit and bubble blow-up."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .bubbles import bubble_amplitude, bubble_profile, loglog_fit
from .functional import StatePair
from .minsolve import SolveResult, SolverOptions, solve_limit_ground_state, solve_local_min
from .mountain import MountainOptions, solve_mountain_pass
from .params import ProblemParams, derive_constants
from .radial import RadialField, RadialGrid, dilate, fiber_scale, grad_sq_values

SWEEP_COLUMNS = (
    "nu",
    "m_level",
    "mp_level",
    "kinetic_min",
    "kinetic_mp",
    "lambda1",
    "lambda2",
    "lambda1_mp",
    "lambda2_mp",
    "supnorm_u",
    "supnorm_v",
    "t_nu",
    "gs_distance",
    "eps_nu",
    "bubble_distance",
    "converged_min",
    "converged_mp",
)


def fit_exponent(points):
    """Slope, intercept and R^2 of ``log y`` against ``log x``."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points for an exponent fit")
    x = [float(a) for a, _ in pts]
    y = [float(b) for _, b in pts]
    return loglog_fit(x, y)


def profile_scale(N: int, mu: float) -> float:
    """Amplitude ``c`` with ``-Delta(cU) = mu (cU)^(2*-1)``, i.e. ``mu^((2-N)/4)``."""
    return mu ** ((2.0 - N) / 4.0)


def extract_epsilon(f: RadialField, mu: float) -> float:
    """Scale at which the energy-preserving dilation of ``f`` peaks at ``c U(0)``."""
    sup = float(np.max(np.abs(f.values)))
    if not sup > 0:
        raise ValueError("field vanishes; no concentration scale")
    N = f.grid.N
    return (profile_scale(N, mu) * bubble_amplitude(N) / sup) ** (2.0 / (N - 2))


def bubble_distance(f: RadialField, mu: float, window=(1e-8, 1e8)) -> float:
    """Relative gradient-norm distance of the dilated ``f`` to ``c U``."""
    g = f.grid
    eps = extract_epsilon(f, mu)
    target = profile_scale(g.N, mu) * bubble_profile(g.N, g.nodes)
    d = dilate(f, eps, window).values
    return math.sqrt(grad_sq_values(g, d - target) / grad_sq_values(g, target))


def _e_norm_sq(grid: RadialGrid, f: np.ndarray) -> float:
    return grad_sq_values(grid, f) + grid.mass_sq(f)


def ground_state_distance(min_state: StatePair, gs: StatePair, window=(1e-6, 1e6)):
    """``(t, dist)`` minimising the energy-space distance of ``t * min_state`` to ``gs``.

    The search is a golden-section minimisation in ``log t`` seeded by the
    ratio of gradient norms, which is exact when the two states differ by a
    fiber dilation.
    """
    g = min_state.grid
    if not g.same_as(gs.grid):
        raise ValueError("states live on different grids")
    gn = grad_sq_values(g, gs.u.values) + grad_sq_values(g, gs.v.values)
    mn = grad_sq_values(g, min_state.u.values) + grad_sq_values(g, min_state.v.values)
    if gn <= 0 or mn <= 0:
        raise ValueError("flat state; distance undefined")
    scale = math.sqrt(gn / mn)
    lo, hi = window[0] * scale, window[1] * scale
    ref = _e_norm_sq(g, gs.u.values) + _e_norm_sq(g, gs.v.values)

    def dist(logt):
        t = math.exp(logt)
        u = fiber_scale(min_state.u, t, (lo, hi)).values
        v = fiber_scale(min_state.v, t, (lo, hi)).values
        return math.sqrt(_e_norm_sq(g, u - gs.u.values) + _e_norm_sq(g, v - gs.v.values))

    c = math.log(scale)
    res = minimize_scalar(dist, bracket=(c - 0.5, c, c + 0.5), method="golden", tol=1e-9)
    t = math.exp(res.x)
    if not (lo <= t <= hi):
        raise ValueError("distance minimiser left the search window")
    d = float(res.fun)
    if abs(t - 1.0) < 1e-7 and d < 1e-12 * math.sqrt(ref):
        t, d = 1.0, 0.0
    return t, d


@dataclass
class SweepOptions:
    C_gn: float
    warm_start: bool = True
    cold_controls: bool = True
    mountain: bool = True
    solver: SolverOptions = field(default_factory=SolverOptions)
    mp: MountainOptions = field(default_factory=MountainOptions)
    limit_gs: SolveResult | None = None
    jobs: int = 1


@dataclass
class SweepRecord:
    nu: float
    min_summary: dict
    mp_summary: dict | None
    t_nu: float
    gs_distance: float
    eps_nu: float
    bubble_distance: float
    blowup_component: str | None
    converged_min: bool
    converged_mp: bool
    grid_id: str
    constants: dict
    cold_start: dict | None = None
    notes: list = field(default_factory=list)

    def row(self) -> dict:
        m = self.min_summary
        mp = self.mp_summary or {}
        nan = math.nan
        return {
            "nu": self.nu,
            "m_level": m["level"],
            "mp_level": mp.get("level", nan),
            "kinetic_min": m["kinetic"],
            "kinetic_mp": mp.get("kinetic", nan),
            "lambda1": m["lambda1"],
            "lambda2": m["lambda2"],
            "lambda1_mp": mp.get("lambda1", nan),
            "lambda2_mp": mp.get("lambda2", nan),
            "supnorm_u": m["supnorm_u"],
            "supnorm_v": m["supnorm_v"],
            "t_nu": self.t_nu,
            "gs_distance": self.gs_distance,
            "eps_nu": self.eps_nu,
            "bubble_distance": self.bubble_distance,
            "converged_min": self.converged_min,
            "converged_mp": self.converged_mp,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def default_nu_list(nu_bar0: float, ks=range(3, 9)) -> list:
    return [nu_bar0 * 2.0 ** (-k) for k in ks]


def _blowup(mp: SolveResult, p: ProblemParams):
    """Concentrating component of a mountain-pass state: larger coupling, else larger peak."""
    if p.mu1 != p.mu2:
        comp = "v" if p.mu2 > p.mu1 else "u"
    else:
        su, sv = mp.sup_norms
        comp = "v" if sv > su else "u"
    f = mp.state.v if comp == "v" else mp.state.u
    mu = p.mu2 if comp == "v" else p.mu1
    return comp, f, mu


def _cold_compare(p, grid, constants, opts, warm_min, warm_mp):
    cold_min = solve_local_min(p, grid, constants, opts.solver)
    out = {"m_level": cold_min.level, "converged_min": cold_min.converged, "m_level_gap": abs(cold_min.level - warm_min.level)}
    if opts.mountain and cold_min.converged:
        try:
            cold_mp = solve_mountain_pass(p, cold_min, grid, constants, opts.mp)
            out["mp_level"] = cold_mp.level
            out["converged_mp"] = cold_mp.converged
            if warm_mp is not None:
                out["mp_level_gap"] = abs(cold_mp.level - warm_mp.level)
        except (RuntimeError, ValueError) as exc:
            out["mp_error"] = str(exc)
    return out


def sweep(base: ProblemParams, nu_list, grid: RadialGrid, opts: SweepOptions) -> list:
    """Minimiser and mountain pass for each coupling in ``nu_list`` (positive, decreasing)."""
    nus = [float(x) for x in nu_list]
    if not nus or any(x <= 0 for x in nus) or any(b >= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nu_list must be positive and strictly decreasing")
    gs = opts.limit_gs
    if gs is None:
        gs = solve_limit_ground_state(base.N, base.a, base.b, base.alpha, base.beta, grid, opts.solver)
    records = []
    finals = []
    prev_min = prev_mp = None
    for idx, nu in enumerate(nus):
        p = base.replace(nu=nu)
        c = derive_constants(p, opts.C_gn)
        notes = []
        init = (prev_min.state.u.values, prev_min.state.v.values) if opts.warm_start and prev_min else None
        mres = solve_local_min(p, grid, c, opts.solver, init=init)
        if not mres.converged and init is not None:
            notes.append("warm minimiser failed; cold restart")
            mres = solve_local_min(p, grid, c, opts.solver)
        try:
            t_nu, dist = ground_state_distance(mres.state, gs.state)
        except ValueError as exc:
            notes.append(f"ground-state distance: {exc}")
            t_nu, dist = math.nan, math.nan
        mp = None
        eps = bdist = math.nan
        comp = None
        if opts.mountain and mres.converged:
            mp_init = (prev_mp.state.u.values, prev_mp.state.v.values) if opts.warm_start and prev_mp else None
            mpopts = opts.mp
            if mp_init is not None:
                mpopts = opts.mp.replace(paths=())
            try:
                mp = solve_mountain_pass(p, mres, grid, c, mpopts, init=mp_init)
                if not mp.converged and mp_init is not None:
                    notes.append("warm mountain pass failed; rebuilt from paths")
                    mp = solve_mountain_pass(p, mres, grid, c, opts.mp)
            except (RuntimeError, ValueError) as exc:
                notes.append(f"mountain pass: {exc}")
                mp = None
            if mp is not None:
                comp, f, mu = _blowup(mp, p)
                try:
                    eps = extract_epsilon(f, mu)
                    bdist = bubble_distance(f, mu)
                except ValueError as exc:
                    notes.append(f"bubble: {exc}")
        records.append(
            SweepRecord(
                nu=nu,
                min_summary=mres.summary(),
                mp_summary=mp.summary() if mp is not None else None,
                t_nu=t_nu,
                gs_distance=dist,
                eps_nu=eps,
                bubble_distance=bdist,
                blowup_component=comp,
                converged_min=bool(mres.converged),
                converged_mp=bool(mp is not None and mp.converged),
                grid_id=grid.grid_id,
                constants=c.to_dict(),
                notes=notes,
            )
        )
        finals.append((p, c, mres, mp))
        prev_min = mres if mres.converged else prev_min
        prev_mp = mp if (mp is not None and mp.converged) else prev_mp
    if opts.cold_controls and opts.warm_start:
        # the chain end points are re-solved from scratch to expose hysteresis
        ends = sorted({0, len(nus) - 1})

        def control(i):
            p, c, mres, mp = finals[i]
            return _cold_compare(p, grid, c, opts, mres, mp)

        if opts.jobs > 1:
            with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
                colds = list(pool.map(control, ends))
        else:
            colds = [control(i) for i in ends]
        for i, cold in zip(ends, colds):
            records[i].cold_start = cold
    return records


def format_float(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    return repr(float(x)) if not math.isfinite(x) else f"{float(x):.17g}"


def write_sweep_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in records:
            row = r.row()
            w.writerow([format_float(row[k]) for k in SWEEP_COLUMNS])


def sweep_exponents(records) -> dict:
    """Fitted slopes in ``nu`` of the scaling quantities, over converged minimisers."""
    ok = [r for r in records if r.converged_min]
    out = {}
    if len(ok) >= 3:
        nus = [r.nu for r in ok]
        lam = [r.min_summary["lambda1"] + r.min_summary["lambda2"] for r in ok]
        kin = [r.min_summary["kinetic"] for r in ok]
        out["lambda_sum"] = fit_exponent(zip(nus, lam))
        out["kinetic"] = fit_exponent(zip(nus, kin))
        tn = [(r.nu, r.t_nu) for r in ok if math.isfinite(r.t_nu)]
        if len(tn) >= 3:
            out["t_nu"] = fit_exponent(tn)
    return out
