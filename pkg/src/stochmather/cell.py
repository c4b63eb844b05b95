"""
Ergodic cell problem ``-sigma^2/2 Lap u + H(P + Du, x) = Hbar(P)`` on the torus.

Written as an average-cost control problem the equation reads::

    sigma^2/2 Lap u + min_v [ v . Du + L(x, v) + P . v ] = -Hbar

and is discretised with the centered Laplacian and an upwind drift, so
every fixed policy yields a generator matrix with non-negative
off-diagonals and zero row sums.  Howard's policy iteration alternates a
pinned linear solve for ``(u, Hbar)`` with the exact pointwise
minimisation of the discrete Hamiltonian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ArgmaxOnBoundary,
    NoConvergence,
    SigmaZeroUnsupported,
    SingularPolicySystem,
)
from .grid import ScalarField, TorusGrid, VectorField, generator_matrix, laplacian, upwind_drift_matrix
from .model import HamiltonianModel, running_cost, upwind_control

log = logging.getLogger(__name__)

DISCOUNT_EXPONENTS = range(3, 13)


@dataclass(frozen=True, eq=False)
class CellSolution:
    model: HamiltonianModel
    P: np.ndarray
    sigma: float
    u: ScalarField
    Hbar: float
    residual: float
    drift: VectorField
    iterations: int
    method: str = "policy"

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid


def _as_momentum(P, dim: int) -> np.ndarray:
    P = np.atleast_1d(np.asarray(P, dtype=float)).reshape(-1)
    if P.size == 1 and dim > 1:
        P = np.full(dim, P[0])
    if P.size != dim or not np.all(np.isfinite(P)):
        raise ValueError(f"momentum must have {dim} finite entries, got {P.tolist()}")
    return P


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if sigma == 0.0:
        raise SigmaZeroUnsupported("sigma = 0 is handled only by the 1D analytic formula")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return sigma


def cell_residual(model: HamiltonianModel, P, sigma: float, u: ScalarField, Hbar: float) -> float:
    """Sup-norm mismatch of the discrete cell equation at ``(u, Hbar)``."""
    P = _as_momentum(P, model.dim)
    ctrl = upwind_control(model, P, u)
    lhs = 0.5 * sigma**2 * laplacian(u).flat() + ctrl.value + Hbar
    return float(np.max(np.abs(lhs)))


def _evaluate_ergodic(grid: TorusGrid, A: sp.csr_matrix, cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve ``A u + Hbar = -cost`` with ``u[0] = 0``."""
    n = grid.size
    ones = sp.csr_matrix(np.ones((n, 1)))
    pin = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, n + 1))
    K = sp.vstack([sp.hstack([A, ones]), pin], format="csc")
    rhs = np.append(-cost, 0.0)
    try:
        sol = spla.splu(K).solve(rhs)
    except RuntimeError as exc:
        raise SingularPolicySystem(f"policy evaluation matrix is singular: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularPolicySystem("policy evaluation produced non-finite values")
    return sol[:n], float(sol[n])


def _evaluate_discounted(A: sp.csr_matrix, cost: np.ndarray, alpha: float) -> np.ndarray:
    n = A.shape[0]
    K = (alpha * sp.identity(n, format="csc") - A).tocsc()
    try:
        return spla.splu(K).solve(cost)
    except RuntimeError as exc:
        raise SingularPolicySystem(f"discounted system is singular: {exc}") from exc


def _improve(model, P, u_vals, drift, grid):
    """Howard improvement step; keeps the old action unless strictly better."""
    u = ScalarField(grid, u_vals)
    ctrl = upwind_control(model, P, u)
    old = upwind_drift_matrix(grid, drift) @ u_vals + running_cost(model, drift, P)
    scale = 1e-13 * max(1.0, float(np.max(np.abs(old))))
    keep = ctrl.value >= old - scale
    new_drift = np.where(keep[None, :], drift, ctrl.drift)
    return new_drift, ctrl


def _howard(model, P, sigma, grid, drift, tol, max_iter):
    lap = (0.5 * sigma**2) * _lap_cache(grid)
    u_prev = None
    for it in range(1, max_iter + 1):
        A = lap + upwind_drift_matrix(grid, drift)
        u, Hbar = _evaluate_ergodic(grid, A, running_cost(model, drift, P))
        new_drift, ctrl = _improve(model, P, u, drift, grid)
        change = np.inf if u_prev is None else float(np.max(np.abs(u - u_prev)))
        stable = np.array_equal(new_drift, drift)
        log.debug("howard it=%d Hbar=%.12g du=%.3e", it, Hbar, change)
        if stable or change < tol:
            return u, Hbar, drift, it, ctrl
        drift, u_prev = new_drift, u
    raise NoConvergence(f"policy iteration did not converge in {max_iter} iterations")


def _discounted(model, P, sigma, grid, drift, tol, max_iter):
    """Vanishing-discount continuation; returns the last policy and its Hbar estimate."""
    lap = (0.5 * sigma**2) * _lap_cache(grid)
    estimate = None
    total = 0
    for k in DISCOUNT_EXPONENTS:
        alpha = 2.0 ** (-k)
        for _ in range(max_iter):
            total += 1
            A = lap + upwind_drift_matrix(grid, drift)
            u = _evaluate_discounted(A, running_cost(model, drift, P), alpha)
            new_drift, _ = _improve(model, P, u, drift, grid)
            if np.array_equal(new_drift, drift) or np.max(np.abs(new_drift - drift)) < tol:
                drift = new_drift
                break
            drift = new_drift
        prev, estimate = estimate, -alpha * float(np.mean(u))
        log.debug("discount alpha=%g Hbar~%.10g", alpha, estimate)
        if prev is not None and abs(estimate - prev) < tol:
            break
    return drift, estimate, total


_LAP = {}


def _lap_cache(grid: TorusGrid) -> sp.csr_matrix:
    from .grid import laplacian_matrix

    if grid not in _LAP:
        _LAP[grid] = laplacian_matrix(grid)
    return _LAP[grid]


def solve_cell(model: HamiltonianModel, P, sigma: float, grid: TorusGrid | None = None,
               tol: float = 1e-10, max_iter: int = 200, *, u0: ScalarField | None = None,
               method: str = "policy") -> CellSolution:
    """Solve the discrete cell problem for ``(u, Hbar)``.

    Policy iteration starts from the policy that is optimal for ``u0``
    (``u0 = 0`` gives ``v = -D_p H(P, x)``).  If it fails to settle within
    ``max_iter`` sweeps, or ``method="discount"`` is requested, the
    vanishing-discount continuation supplies a policy which policy
    iteration then polishes.

    Raises:
        SigmaZeroUnsupported: sigma == 0.
        SingularPolicySystem: a policy matrix could not be factorised.
        NoConvergence: neither route met ``tol``.
        ArgmaxOnBoundary: a tabulated model needs a larger velocity box.
    """
    sigma = _check_sigma(sigma)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if grid is not None:
        model = model.on_grid(grid)
    grid = model.grid
    P = _as_momentum(P, grid.dim)
    start = u0 if u0 is not None else grid.constant(0.0)
    drift = upwind_control(model, P, start).drift

    used = method
    iterations = 0
    if method == "policy":
        try:
            u, Hbar, drift, iterations, ctrl = _howard(model, P, sigma, grid, drift, tol, max_iter)
        except NoConvergence:
            log.warning("policy iteration stalled; switching to the discounted fallback")
            used = "discount"
    elif method != "discount":
        raise ValueError(f"unknown method {method!r}")
    if used == "discount":
        drift, _, iterations = _discounted(model, P, sigma, grid, drift, tol, max_iter)
        u, Hbar, drift, extra, ctrl = _howard(model, P, sigma, grid, drift, tol, max_iter)
        iterations += extra

    if ctrl.on_boundary:
        raise ArgmaxOnBoundary("optimal policy touches the tabulated velocity box; enlarge v_max")
    u = u - u.min()
    u_field = ScalarField(grid, u.reshape(grid.shape))
    residual = cell_residual(model, P, sigma, u_field, Hbar)
    if residual > max(tol, 1e-12 * _scale(model, sigma)):
        raise NoConvergence(f"cell residual {residual:.3e} exceeds tol {tol:.1e}")
    return CellSolution(
        model=model,
        P=P,
        sigma=sigma,
        u=u_field,
        Hbar=Hbar,
        residual=residual,
        drift=VectorField(grid, drift.reshape(grid.dim, *grid.shape)),
        iterations=iterations,
        method=used,
    )


def _scale(model: HamiltonianModel, sigma: float) -> float:
    # magnitude of matrix entries; bounds achievable round-off in the residual
    return sigma**2 / model.grid.spacing**2


def policy_generator(sol: CellSolution) -> sp.csr_matrix:
    """Generator matrix of the optimal feedback drift."""
    return generator_matrix(sol.grid, sol.drift.flat(), sol.sigma)


def effective_surface(model: HamiltonianModel, P_list: Sequence, sigma: float,
                      grid: TorusGrid | None = None, tol: float = 1e-10,
                      max_iter: int = 200) -> list[tuple[np.ndarray, float, CellSolution]]:
    """Solve the cell problem for each momentum, warm-starting in order of |P|.

    Results are returned in the order of ``P_list``.
    """
    if len(P_list) == 0:
        raise ValueError("P_list must be nonempty")
    if grid is not None:
        model = model.on_grid(grid)
    Ps = [_as_momentum(P, model.dim) for P in P_list]
    order = sorted(range(len(Ps)), key=lambda i: float(np.linalg.norm(Ps[i])))
    results: dict[int, CellSolution] = {}
    u0 = None
    for i in order:
        sol = solve_cell(model, Ps[i], sigma, tol=tol, max_iter=max_iter, u0=u0)
        results[i] = sol
        u0 = sol.u
    return [(Ps[i], results[i].Hbar, results[i]) for i in range(len(Ps))]


def hbar_slope(model: HamiltonianModel, P, sigma: float, dP: float, *, tol: float = 1e-10,
               u0: ScalarField | None = None) -> np.ndarray:
    """Central finite difference of Hbar along each axis."""
    P = _as_momentum(P, model.dim)
    slope = np.zeros(model.dim)
    for a in range(model.dim):
        e = np.zeros(model.dim)
        e[a] = dP
        hi = solve_cell(model, P + e, sigma, tol=tol, u0=u0).Hbar
        lo = solve_cell(model, P - e, sigma, tol=tol, u0=u0).Hbar
        slope[a] = (hi - lo) / (2.0 * dP)
    return slope


def semiconcavity_bound(sol: CellSolution) -> float:
    """Largest centered second difference of ``u`` over nodes and axes."""
    u = sol.u.values
    h2 = sol.grid.spacing**2
    best = -np.inf
    for a in range(sol.grid.dim):
        second = (np.roll(u, -1, a) - 2.0 * u + np.roll(u, 1, a)) / h2
        best = max(best, float(second.max()))
    return best
