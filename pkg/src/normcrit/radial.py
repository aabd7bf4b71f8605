"""Radially symmetric fields on R^N sampled on a 1-D grid over [0, R].

Two layers live on the same nodes.

Energies are conforming: a field is read as its piecewise-linear
interpolant ``f_h``, the Dirichlet energy is the exact ``int |f_h'|^2`` and
every power integral is a 5-point Gauss rule per cell applied to ``f_h``
(exact for the polynomial integrands of the mass and critical terms). The
discrete Sobolev quotient can therefore never drop below the sharp constant,
so concentrating profiles are not rewarded by the grid.

Pointwise quadrature uses positive node ``weights`` (a trapezoid rule with an
origin cell, renormalised to the exact ball volume). They define
``integrate``, the L2 metric in which gradients are reported, and the
finite-volume ``laplacian``, which is exact on ``r**2``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import solve_banded

SPHERE_AREA = {3: 4.0 * math.pi, 4: 2.0 * math.pi**2}
GRADINGS = ("uniform", "graded")
DEFAULT_R = {3: 100.0, 4: 60.0}
DEFAULT_M = 4000

_grid_counter = itertools.count()


class GridMismatch(ValueError):
    pass


class ScaleWindowError(ValueError):
    pass


class RearrangementWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    R: float
    M: int
    nodes: np.ndarray
    weights: np.ndarray
    grading: str
    kappa: np.ndarray = field(repr=False)
    fv_kappa: np.ndarray = field(repr=False)
    gauss_weights: np.ndarray = field(repr=False)
    serial: int = field(default_factory=lambda: next(_grid_counter), repr=False)

    @property
    def r(self) -> np.ndarray:
        return self.nodes

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def omega(self) -> float:
        return SPHERE_AREA[self.N]

    @property
    def grid_id(self) -> str:
        return f"N{self.N}-R{self.R:g}-M{self.M}-{self.grading}"

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.N == other.N
            and self.M == other.M
            and self.grading == other.grading
            and self.R == other.R
        )

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def describe(self) -> dict:
        return {"N": self.N, "R": self.R, "M": self.M, "grading": self.grading}

    # -- Gauss layer on the piecewise-linear interpolant ---------------------

    def at_gauss(self, f: np.ndarray) -> np.ndarray:
        """Values of the interpolant at the Gauss points, shape ``(M-1, 5)``."""
        return f[:-1, None] * (1.0 - _GL_LAM) + f[1:, None] * _GL_LAM

    def gauss_integrate(self, vals: np.ndarray) -> float:
        return float(np.sum(self.gauss_weights * vals))

    def gauss_adjoint(self, vals: np.ndarray) -> np.ndarray:
        """``d/df_i`` of ``int F(f_h)`` given ``vals = F'(f_h)`` at the Gauss points."""
        t = self.gauss_weights * vals
        out = np.zeros(self.M)
        out[:-1] += t @ (1.0 - _GL_LAM)
        out[1:] += t @ _GL_LAM
        return out

    def gauss_tridiag(self, vals: np.ndarray):
        """Diagonal and off-diagonal of ``sum_g W_g vals_g phi_i phi_j``."""
        t = self.gauss_weights * vals
        diag = np.zeros(self.M)
        diag[:-1] += t @ ((1.0 - _GL_LAM) ** 2)
        diag[1:] += t @ (_GL_LAM**2)
        off = t @ (_GL_LAM * (1.0 - _GL_LAM))
        return diag, off

    def mass_apply(self, f: np.ndarray) -> np.ndarray:
        """Consistent mass matrix times ``f``; ``f @ mass_apply(f) = int f_h^2``."""
        return self.gauss_adjoint(self.at_gauss(f))

    def mass_sq(self, f: np.ndarray) -> float:
        return self.gauss_integrate(self.at_gauss(f) ** 2)

    def lp(self, f: np.ndarray, p: float) -> float:
        return self.gauss_integrate(np.abs(self.at_gauss(f)) ** p)

    # -- stiffness -----------------------------------------------------------

    def stiffness_apply(self, f: np.ndarray) -> np.ndarray:
        """Return ``K f`` where ``f @ K @ f`` equals ``grad_sq(f)``."""
        flux = self.kappa * np.diff(f) / self.h
        out = np.zeros_like(f)
        out[:-1] -= flux
        out[1:] += flux
        return out

    def stiffness_banded(self) -> np.ndarray:
        """Stiffness matrix in ``scipy.linalg.solve_banded`` (1, 1) layout."""
        c = self.kappa / self.h
        ab = np.zeros((3, self.M))
        ab[1, :-1] += c
        ab[1, 1:] += c
        ab[0, 1:] = -c
        ab[2, :-1] = -c
        return ab

    def helmholtz_solve(self, rhs: np.ndarray, shift: float, dirichlet: bool = True):
        """Solve ``(-Delta + shift) x = rhs`` (L2-metric form), x(R)=0 if asked."""
        ab = self.stiffness_banded()
        ab[1] += shift * self.weights
        b = self.weights * rhs
        if dirichlet:
            ab[1, -1] = 1.0
            ab[0, -1] = 0.0
            ab[2, -2] = 0.0
            b = b.copy()
            b[-1] = 0.0
        return solve_banded((1, 1), ab, b)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)
_GL_LAM = 0.5 * (_GL_X + 1.0)


def build_grid(N: int, R: float | None = None, M: int = DEFAULT_M, grading: str = "graded") -> RadialGrid:
    """Nodes ``0 = r_0 < ... < r_{M-1} = R``; graded grids use ``r = R s**2``."""
    if N not in SPHERE_AREA:
        raise ValueError(f"unsupported dimension {N}")
    if R is None:
        R = DEFAULT_R[N]
    if not R > 0:
        raise ValueError("R must be positive")
    if M < 16:
        raise ValueError("M must be at least 16")
    if grading not in GRADINGS:
        raise ValueError(f"grading must be one of {GRADINGS}")
    s = np.linspace(0.0, 1.0, M)
    r = R * s**2 if grading == "graded" else R * s
    r[-1] = R
    om = SPHERE_AREA[N]
    w = np.empty(M)
    w[1:-1] = om * r[1:-1] ** (N - 1) * (r[2:] - r[:-2]) / 2.0
    w[-1] = om * R ** (N - 1) * (R - r[-2]) / 2.0
    # trapezoid leaves the origin weightless; give it its half-cell volume
    w[0] = om * (r[1] / 2.0) ** N / N
    w *= (om * R**N / N) / w.sum()
    # finite-volume fluxes: with these, -(1/w) K r^2 = 2N exactly
    fv_kappa = 2.0 * N * np.cumsum(w)[:-1] / (r[1:] + r[:-1])
    h = np.diff(r)
    # exact P1 stiffness: cell volume over cell width
    kappa = om * (r[1:] ** N - r[:-1] ** N) / (N * h)
    mid, half = 0.5 * (r[1:] + r[:-1]), 0.5 * h
    rg = mid[:, None] + half[:, None] * _GL_X[None, :]
    gw = om * half[:, None] * _GL_W[None, :] * rg ** (N - 1)
    return RadialGrid(
        N=N, R=float(R), M=M, nodes=r, weights=w, grading=grading,
        kappa=kappa, fv_kappa=fv_kappa, gauss_weights=gw,
    )


@dataclass(eq=False)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.M,):
            raise GridMismatch(f"expected {self.grid.M} samples, got {self.values.shape}")

    @classmethod
    def from_function(cls, grid: RadialGrid, fn) -> "RadialField":
        return cls(grid, fn(grid.nodes))

    def copy(self) -> "RadialField":
        return RadialField(self.grid, self.values.copy())

    def _check(self, other: "RadialField"):
        if not self.grid.same_as(other.grid):
            raise GridMismatch("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, RadialField):
            self._check(other)
            return RadialField(self.grid, self.values + other.values)
        return RadialField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, RadialField):
            self._check(other)
            return RadialField(self.grid, self.values - other.values)
        return RadialField(self.grid, self.values - other)

    def __mul__(self, c: float):
        return RadialField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return RadialField(self.grid, -self.values)

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def grad_sq_values(grid: RadialGrid, f: np.ndarray) -> float:
    return float(np.sum(grid.kappa * np.diff(f) ** 2 / grid.h))


def lp_values(grid: RadialGrid, f: np.ndarray, p: float) -> float:
    return grid.lp(f, p)


def norms(f: RadialField, ps=()) -> dict:
    """Mass, Dirichlet energy and ``int |f|**p`` for every requested ``p``.

    ``lp`` always includes ``2`` and the critical exponent ``2N/(N-2)``.
    """
    g = f.grid
    wanted = {2.0, 2.0 * g.N / (g.N - 2)} | {float(p) for p in ps}
    lp = {p: lp_values(g, f.values, p) for p in sorted(wanted)}
    return {
        "mass_sq": g.mass_sq(f.values),
        "grad_sq": grad_sq_values(g, f.values),
        "lp": lp,
    }


def interaction_values(grid: RadialGrid, u: np.ndarray, v: np.ndarray, alpha: float, beta: float) -> float:
    return grid.gauss_integrate(np.abs(grid.at_gauss(u)) ** alpha * np.abs(grid.at_gauss(v)) ** beta)


def interaction(u: RadialField, v: RadialField, alpha: float, beta: float) -> float:
    u._check(v)
    return interaction_values(u.grid, u.values, v.values, alpha, beta)


def laplacian(f: RadialField) -> RadialField:
    """Finite-volume ``f'' + (N-1) f'/r`` with a zero ghost value beyond R.

    At the origin the scheme reduces to ``2N (f_1 - f_0) / r_1**2``, the
    symmetric limit ``N f''(0)``.
    """
    g = f.grid
    flux = g.fv_kappa * np.diff(f.values) / g.h
    out = np.zeros(g.M)
    out[:-1] += flux
    out[1:] -= flux
    # ghost node at R + h_last holding zero
    out[-1] -= g.fv_kappa[-1] * f.values[-1] / g.h[-1]
    return RadialField(g, out / g.weights)


DEFAULT_WINDOW = (1e-3, 1e3)


def _rescale(f: RadialField, amp: float, t: float) -> RadialField:
    g = f.grid
    # flat stretches (e.g. an exactly zero tail) trip a harmless 0/0 in pchip
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        interp = PchipInterpolator(g.nodes, f.values, extrapolate=False)
    x = t * g.nodes
    vals = interp(np.minimum(x, g.R))
    vals[x > g.R] = 0.0
    return RadialField(g, amp * np.nan_to_num(vals))


def _check_window(t: float, window, name: str):
    lo, hi = window
    if not (lo <= t <= hi):
        raise ScaleWindowError(f"{name}={t:g} outside window [{lo:g}, {hi:g}]")


def fiber_scale(f: RadialField, t: float, window=DEFAULT_WINDOW) -> RadialField:
    """Mass-preserving dilation ``t**(N/2) * f(t r)``."""
    _check_window(t, window, "t")
    if t == 1.0:
        return f.copy()
    return _rescale(f, t ** (f.grid.N / 2.0), t)


def dilate(f: RadialField, eps: float, window=DEFAULT_WINDOW) -> RadialField:
    """Dirichlet-energy-preserving dilation ``eps**((N-2)/2) * f(eps r)``."""
    _check_window(eps, window, "eps")
    if eps == 1.0:
        return f.copy()
    return _rescale(f, eps ** ((f.grid.N - 2) / 2.0), eps)


def schwartz_rearrange(f: RadialField) -> RadialField:
    """Discrete symmetric decreasing rearrangement by volume re-binning.

    Values are sorted in decreasing order together with their cell volumes;
    node ``i`` then receives the mean of that staircase over the volume
    interval its own cell occupies when cells are stacked from the origin.
    """
    g = f.grid
    vals = f.values
    if np.any(vals < 0):
        warnings.warn("negative samples clamped to zero before rearrangement", RearrangementWarning, stacklevel=2)
        vals = np.maximum(vals, 0.0)
    order = np.argsort(-vals, kind="stable")
    sv, sw = vals[order], g.weights[order]
    vol_edges = np.concatenate([[0.0], np.cumsum(sw)])
    mass_edges = np.concatenate([[0.0], np.cumsum(sv * sw)])
    grid_edges = np.concatenate([[0.0], np.cumsum(g.weights)])
    grid_edges[-1] = vol_edges[-1]
    cum = np.interp(grid_edges, vol_edges, mass_edges)
    out = np.diff(cum) / g.weights
    # averaging a decreasing staircase over consecutive windows is monotone;
    # clean up roundoff so the output is exactly nonincreasing
    out = np.minimum.accumulate(out)
    return RadialField(g, out)


def write_field_csv(path, f: RadialField) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r,value\n")
        for r, v in zip(f.grid.nodes, f.values):
            fh.write(f"{r:.17g},{v:.17g}\n")


def write_pair_csv(path, u: RadialField, v: RadialField) -> None:
    u._check(v)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r,u,v\n")
        for r, a, b in zip(u.grid.nodes, u.values, v.values):
            fh.write(f"{r:.17g},{a:.17g},{b:.17g}\n")


def read_pair_csv(path, grid: RadialGrid):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.shape[0] != grid.M or not np.allclose(data[:, 0], grid.nodes, rtol=1e-14, atol=0):
        raise GridMismatch(f"{path} was written on a different grid")
    return RadialField(grid, data[:, 1]), RadialField(grid, data[:, 2])
