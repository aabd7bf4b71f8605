"""Aubin-Talenti profile, truncated bubbles and their norm expansions."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .params import sobolev_constant
from .radial import RadialField, RadialGrid, grad_sq_values


class CoarseGridWarning(UserWarning):
    pass


def bubble_amplitude(N: int) -> float:
    """``A_N = (N(N-2))**((N-2)/4)``, the peak of the unit bubble."""
    return (N * (N - 2)) ** ((N - 2) / 4.0)


def bubble_profile(N: int, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return bubble_amplitude(N) * (1.0 + r * r) ** (-(N - 2) / 2.0)


def aubin_talenti(grid: RadialGrid) -> RadialField:
    """Samples of ``U(r) = A_N (1 + r^2)^(-(N-2)/2)``, solving ``-Delta U = U^(2*-1)``."""
    return RadialField(grid, bubble_profile(grid.N, grid.nodes))


def rayleigh_quotient(grid: RadialGrid, tail_correct: bool = True) -> float:
    """``|grad U|^2 / |U|_{2*}^2`` on the grid, optionally adding the analytic tails beyond R."""
    N = grid.N
    q = 2.0 * N / (N - 2)
    U = bubble_profile(N, grid.nodes)
    K = grad_sq_values(grid, U)
    C = grid.integrate(U**q)
    if tail_correct:
        A2 = bubble_amplitude(N) ** 2
        om = grid.omega
        R = grid.R
        # far field U ~ A r^(2-N)
        K += om * A2 * (N - 2) * R ** (2 - N)
        C += om * bubble_amplitude(N) ** q * R ** (-N) / N
    return K / C ** (2.0 / q)


def theta(N: int, n: float, r) -> np.ndarray:
    """Three-branch truncated bubble: scaled bubble, linear ramp to zero, zero."""
    r = np.asarray(r, dtype=float)
    e = (N - 2) / 2.0
    A = bubble_amplitude(N)
    inner = A * (n / (1.0 + n * n * r * r)) ** e
    ramp = A * (n / (1.0 + n * n)) ** e * (2.0 - r)
    return np.where(r < 1.0, inner, np.where(r < 2.0, ramp, 0.0))


def theta_prime(N: int, n: float, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    e = (N - 2) / 2.0
    A = bubble_amplitude(N)
    inner = -A * e * n**e * (1.0 + n * n * r * r) ** (-e - 1.0) * 2.0 * n * n * r
    ramp = -A * (n / (1.0 + n * n)) ** e * np.ones_like(r)
    return np.where(r < 1.0, inner, np.where(r < 2.0, ramp, 0.0))


def core_nodes(grid: RadialGrid, n: float) -> int:
    """Number of grid nodes inside the bubble core ``[0, 1/n]``."""
    return int(np.count_nonzero(grid.nodes <= 1.0 / n))


def _check_resolution(grid: RadialGrid, n: float) -> int:
    count = core_nodes(grid, n)
    if count < 8:
        warnings.warn(
            f"only {count} nodes inside the bubble core 1/n={1.0 / n:g}",
            CoarseGridWarning,
            stacklevel=3,
        )
    return count


def truncated_bubble(grid: RadialGrid, n: int) -> RadialField:
    if n < 1:
        raise ValueError("n must be at least 1")
    if grid.R < 2.0:
        raise ValueError("grid must cover r = 2")
    _check_resolution(grid, n)
    return RadialField(grid, theta(grid.N, n, grid.nodes))


def xi(N: int, n: float) -> float:
    """``int_0^n s^(N-1) / (1+s^2)^(N-2) ds`` from its antiderivative."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if N == 3:
        return n - math.atan(n)
    if N == 4:
        return 0.5 * (math.log1p(n * n) + 1.0 / (1.0 + n * n) - 1.0)
    raise ValueError(f"unsupported dimension {N}")


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def cell_gauss_integrate(grid: RadialGrid, fn, breaks=(1.0, 2.0)) -> float:
    """``int_0^R fn(r) omega r^(N-1) dr`` by 8-point Gauss-Legendre per grid cell.

    ``breaks`` are inserted as extra cell edges so piecewise integrands with
    kinks there are integrated to full order.
    """
    edges = np.union1d(grid.nodes, [b for b in breaks if 0.0 < b < grid.R])
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    r = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = fn(r) * r ** (grid.N - 1)
    return float(grid.omega * np.sum(half * (vals @ _GL_W)))


@dataclass(frozen=True)
class BubbleNorms:
    n: int
    mass_sq: float
    grad_sq: float
    crit_norm: float
    xi: float


def bubble_norms(grid: RadialGrid, n: int) -> BubbleNorms:
    """Norms of the truncated bubble with its exact derivative, integrated cellwise."""
    N = grid.N
    q = 2.0 * N / (N - 2)
    _check_resolution(grid, n)
    return BubbleNorms(
        n=int(n),
        mass_sq=cell_gauss_integrate(grid, lambda r: theta(N, n, r) ** 2),
        grad_sq=cell_gauss_integrate(grid, lambda r: theta_prime(N, n, r) ** 2),
        crit_norm=cell_gauss_integrate(grid, lambda r: theta(N, n, r) ** q),
        xi=xi(N, n),
    )


def loglog_fit(x, y):
    """Least-squares line through ``(log x, log y)``: ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a fit")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def bubble_norm_orders(grid: RadialGrid, n_list) -> dict:
    """Fitted decay orders of the bubble norm defects; JSON-ready."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3:
        raise ValueError("degenerate fit: need at least 3 values of n")
    N = grid.N
    SN = sobolev_constant(N) ** (N / 2.0)
    rows = [bubble_norms(grid, n) for n in n_list]
    dg = [abs(b.grad_sq - SN) for b in rows]
    dc = [abs(b.crit_norm - SN) for b in rows]
    ratio = [b.mass_sq / (b.xi / b.n**2) for b in rows]
    sg, _, rg = loglog_fit(n_list, dg)
    sc, _, rc = loglog_fit(n_list, dc)
    # a bounded ratio shows up as a slope near zero
    sm, _, rm = loglog_fit(n_list, ratio)
    return {
        "N": N,
        "grid": grid.describe(),
        "S_pow": SN,
        "norms": [asdict(b) for b in rows],
        "grad_slope": sg,
        "grad_r2": rg,
        "crit_slope": sc,
        "crit_r2": rc,
        "mass_ratio_slope": sm,
        "mass_ratio_r2": rm,
        "mass_ratio": ratio,
        "mass_ratio_spread": max(ratio) / min(ratio),
        "expected": {"grad_slope": -(N - 2.0), "crit_slope": -float(N)},
    }
