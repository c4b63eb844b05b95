"""
Regularity ratios weighted by the invariant density, the vanishing
viscosity sweep, and the one-dimensional sigma = 0 reference value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .cell import CellSolution, _as_momentum, solve_cell
from .grid import ScalarField, TorusGrid, gradient, integrate, shift
from .measure import StationaryDensity, action, invariant_density
from .model import MECHANICAL, HamiltonianModel


@dataclass(frozen=True)
class RegularityReport:
    est1_ratios: list[tuple[float, float]]
    est1_flagged: bool
    est2_ratio: float
    est3_ratio: float
    gamma_L: float
    Gamma: float
    cap: float

    def to_dict(self) -> dict:
        return {
            "est1_ratios": [list(r) for r in self.est1_ratios],
            "est1_flagged": self.est1_flagged,
            "est2_ratio": self.est2_ratio,
            "est3_ratio": self.est3_ratio,
            "gamma_L": self.gamma_L,
            "Gamma": self.Gamma,
            "cap": self.cap,
        }


def _sq_gradient_gap(a: ScalarField, b: ScalarField, theta: ScalarField, offset=None) -> float:
    ga = gradient(a).components
    gb = gradient(b).components
    diff = np.sum((ga - gb) ** 2, axis=0)
    return integrate(ScalarField(theta.grid, diff), theta)


def regularity_est1(sol: CellSolution, dens: StationaryDensity,
                    y_offsets: Sequence) -> list[tuple[float, float]]:
    """``integral |Du(x+y) - Du(x)|^2 theta / |y|^2`` for integer node offsets ``y``."""
    grid = sol.grid
    out = []
    for off in y_offsets:
        off_vec = np.atleast_1d(np.asarray(off, dtype=int))
        if off_vec.size == 1 and grid.dim > 1:
            off_vec = np.array([int(off_vec[0])] + [0] * (grid.dim - 1))
        length = float(np.linalg.norm(off_vec)) * grid.spacing
        if length == 0:
            raise ValueError("offset must be nonzero")
        num = _sq_gradient_gap(shift(sol.u, off_vec.tolist()), sol.u, dens.theta)
        out.append((length, num / length**2))
    return out


def est1_growth_flag(ratios: list[tuple[float, float]]) -> bool:
    """True if a ratio more than doubles when ``|y|`` is halved."""
    by_len = dict(ratios)
    for length, r in ratios:
        half = length / 2
        for other, r_half in by_len.items():
            if np.isclose(other, half) and r_half > 2.0 * r:
                return True
    return False


def regularity_est2_est3(model: HamiltonianModel, P, P_prime, sigma: float,
                         grid: TorusGrid | None = None, *, tol: float = 1e-10,
                         sol: CellSolution | None = None,
                         dens: StationaryDensity | None = None) -> tuple[float, float]:
    """Ratios of the P-stability and non-degeneracy estimates.

    ``est2 = int |Du(P) - Du(P')|^2 theta_P / |P - P'|^2`` and
    ``est3 = int |P + Du(P) - P' - Du(P')|^2 theta_P / |P - P'|^2``.
    """
    if grid is not None:
        model = model.on_grid(grid)
    P = _as_momentum(P, model.dim)
    Pp = _as_momentum(P_prime, model.dim)
    dist = float(np.linalg.norm(P - Pp))
    if dist == 0 or dist > 0.1:
        raise ValueError("need 0 < |P - P'| <= 0.1")
    if sol is None:
        sol = solve_cell(model, P, sigma, tol=tol)
    if dens is None:
        dens = invariant_density(sol.drift, sigma)
    other = solve_cell(model, Pp, sigma, tol=tol, u0=sol.u)
    g = gradient(sol.u).components
    gp = gradient(other.u).components
    theta = dens.theta
    est2 = integrate(ScalarField(theta.grid, np.sum((g - gp) ** 2, axis=0)), theta) / dist**2
    shifted = (P - Pp).reshape(-1, *([1] * model.dim)) + g - gp
    est3 = integrate(ScalarField(theta.grid, np.sum(shifted**2, axis=0)), theta) / dist**2
    return float(est2), float(est3)


def regularity_cap(model: HamiltonianModel) -> float:
    """Generous a-priori cap ``10 Lip(V)^2 / gamma_L^2`` on the est1 / est2 ratios."""
    if model.kind == MECHANICAL:
        lip = float(np.max(gradient(model.potential).norm()))
    else:
        grid = model.grid
        table = model.table.reshape(*grid.shape, -1)
        lip = max(float(np.max(np.abs(np.roll(table, -1, a) - table))) / grid.spacing
                  for a in range(grid.dim))
    return 10.0 * lip**2 / model.gamma_L**2


def regularity_report(model: HamiltonianModel, sol: CellSolution, dens: StationaryDensity,
                      y_offsets: Sequence = (1, 2, 4, 8), P_prime=None) -> RegularityReport:
    est1 = regularity_est1(sol, dens, y_offsets)
    if P_prime is None:
        P_prime = sol.P + 0.05
    est2, est3 = regularity_est2_est3(model, sol.P, P_prime, sol.sigma, sol=sol, dens=dens)
    return RegularityReport(est1, est1_growth_flag(est1), est2, est3, model.gamma_L,
                            model.convexity_upper, regularity_cap(model))


def analytic_Hbar_1d(V: ScalarField, P: float) -> float:
    """Effective Hamiltonian of ``p^2/2 + V(x)`` at sigma = 0 in one dimension.

    ``max V`` while ``|P| <= int sqrt(2 (max V - V))``; beyond that the energy
    ``E`` solving ``int sqrt(2 (E - V)) dx = |P|`` (rectangle rule, bisection
    to 1e-10).
    """
    if V.grid.dim != 1:
        raise ValueError("analytic_Hbar_1d is one-dimensional")
    P = abs(float(np.asarray(P).reshape(-1)[0]))
    vmax = float(V.values.max())

    def momentum(E):
        return integrate(ScalarField(V.grid, np.sqrt(2.0 * np.maximum(E - V.values, 0.0))))

    if P <= momentum(vmax):
        return vmax
    hi = vmax + 0.5 * P**2
    return float(bisect(lambda E: momentum(E) - P, vmax, hi, xtol=1e-10))


@dataclass(frozen=True, eq=False)
class SigmaSweep:
    sigmas: list[float]
    P: np.ndarray
    Hbar: list[float]
    u_sup_diff: list[float]  # sup |u_sigma - u_finest|
    theta_l1: list[float]  # L1 distance of theta_sigma to theta_finest
    action_gap: list[float]  # |integral (L + P v) theta + Hbar|
    increments: list[float]  # |Hbar_{k+1} - Hbar_k|
    analytic_limit: float | None
    limit_gap: float | None
    solutions: list[CellSolution] = field(default_factory=list, repr=False)

    def rows(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.sigmas, self.Hbar, self.u_sup_diff, self.theta_l1))


def sigma_sweep(model: HamiltonianModel, P, sigmas: Sequence[float],
                grid: TorusGrid | None = None, tol: float = 1e-10) -> SigmaSweep:
    """Cell solve and stationary density for each sigma, warm-started down the list."""
    if grid is not None:
        model = model.on_grid(grid)
    grid = model.grid
    sigmas = [float(s) for s in sigmas]
    if not sigmas or any(b >= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigma list must be nonempty and strictly decreasing")
    if sigmas[-1] < grid.spacing:
        raise ValueError(f"smallest sigma {sigmas[-1]} is below the grid spacing {grid.spacing}")
    P = _as_momentum(P, grid.dim)
    sols, thetas, gaps = [], [], []
    u0 = None
    for s in sigmas:
        sol = solve_cell(model, P, s, tol=tol, u0=u0)
        dens = invariant_density(sol.drift, s)
        sols.append(sol)
        thetas.append(dens.theta)
        gaps.append(abs(action(model, sol, dens) + sol.Hbar))
        u0 = sol.u
    ref_u, ref_theta = sols[-1].u.values, thetas[-1].values
    Hbar = [s.Hbar for s in sols]
    limit = gap = None
    if grid.dim == 1 and model.kind == MECHANICAL:
        limit = analytic_Hbar_1d(model.potential, float(P[0]))
        gap = abs(Hbar[-1] - limit)
    return SigmaSweep(
        sigmas=sigmas,
        P=P,
        Hbar=Hbar,
        u_sup_diff=[float(np.max(np.abs(s.u.values - ref_u))) for s in sols],
        theta_l1=[float(np.sum(np.abs(t.values - ref_theta)) * grid.cell_volume) for t in thetas],
        action_gap=gaps,
        increments=[abs(b - a) for a, b in zip(Hbar, Hbar[1:])],
        analytic_limit=limit,
        limit_gap=gap,
        solutions=sols,
    )
