"""
Stationary densities of the optimally controlled diffusion and the
identities they satisfy.

The density is the normalised null vector of the *transpose* of the same
upwind generator matrix used by the cell solver, so discrete duality
``sum((A phi) * theta) = 0`` holds to round-off for every grid function.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell import CellSolution, hbar_slope
from .errors import NegativeDensity, SingularBeyondNullity
from .grid import (ScalarField, TorusGrid, VectorField, forward_difference, generator_matrix,
                   gradient, integrate, integrate_vector)
from .model import MECHANICAL, HamiltonianModel, running_cost, velocity_index

ROUNDOFF_NEGATIVE = 1e-12
FOURIER_MODES = 5


@dataclass(frozen=True, eq=False)
class StationaryDensity:
    theta: ScalarField
    drift: VectorField
    sigma: float
    residual: float

    @property
    def grid(self) -> TorusGrid:
        return self.theta.grid


@dataclass(frozen=True, eq=False)
class GraphMeasure:
    """Occupation measure ``theta(x) dx x delta_{v = drift(x)}``."""

    density: StationaryDensity
    velocity_on_graph: VectorField


@dataclass(frozen=True)
class IdentityReport:
    id1_err: float
    id2_err: float
    id3_gap: float

    def to_dict(self) -> dict:
        return asdict(self)


def invariant_density(drift: VectorField, sigma: float, tol: float = 1e-9) -> StationaryDensity:
    """Solve ``A^T theta = 0`` with ``sum(theta) h^dim = 1``.

    One equation of the singular system is replaced by the normalisation;
    it is implied by the others because the generator rows sum to zero.
    """
    if not sigma > 0:
        raise ValueError("invariant_density requires sigma > 0")
    grid = drift.grid
    A = generator_matrix(grid, drift.flat(), sigma)
    At = A.T.tolil()
    At[0, :] = np.full((1, grid.size), grid.cell_volume)
    rhs = np.zeros(grid.size)
    rhs[0] = 1.0
    try:
        theta = spla.splu(At.tocsc()).solve(rhs)
    except RuntimeError as exc:
        raise SingularBeyondNullity(f"adjoint generator has a degenerate null space: {exc}") from exc
    if not np.all(np.isfinite(theta)):
        raise SingularBeyondNullity("adjoint solve produced non-finite values")
    if theta.min() < -ROUNDOFF_NEGATIVE:
        raise NegativeDensity(f"density has negative entries down to {theta.min():.3e}")
    theta = np.maximum(theta, 0.0)
    theta /= theta.sum() * grid.cell_volume
    residual = float(np.max(np.abs(A.T @ theta)))
    scale = sigma**2 / grid.spacing**2 + float(np.max(np.abs(drift.flat()))) / grid.spacing
    if residual > max(tol, 1e-13 * scale):
        raise SingularBeyondNullity(f"adjoint residual {residual:.3e} exceeds tol {tol:.1e}")
    return StationaryDensity(ScalarField(grid, theta.reshape(grid.shape)), drift, float(sigma),
                             residual)


def mather_measure(model: HamiltonianModel, sol: CellSolution, tol: float = 1e-9) -> GraphMeasure:
    dens = invariant_density(sol.drift, sol.sigma, tol)
    return GraphMeasure(dens, sol.drift)


def action(model: HamiltonianModel, sol: CellSolution, dens: StationaryDensity, *,
           shifted: bool = False) -> float:
    """``integral (L(x, drift) + P . drift) theta dx``; equals ``-Hbar`` at optimality."""
    cost = running_cost(model, sol.drift.flat(), sol.P, shifted=shifted)
    return integrate(ScalarField(sol.grid, cost.reshape(sol.grid.shape)), dens.theta)


def density_gradient_norm(dens: StationaryDensity) -> float:
    """Discrete ``W^{1,2}`` seminorm ``(integral |D^+ theta|^2)^{1/2}`` from forward differences."""
    theta = dens.theta
    total = sum(np.sum(forward_difference(theta, a) ** 2) for a in range(theta.grid.dim))
    return float(np.sqrt(total * theta.grid.cell_volume))


def fourier_test_functions(grid: TorusGrid, modes: int = FOURIER_MODES) -> list[ScalarField]:
    """``cos`` and ``sin`` of ``2 pi k x_a`` for ``k = 1..modes`` on each axis."""
    coords = grid.coordinates()
    out = []
    for a in range(grid.dim):
        for k in range(1, modes + 1):
            out.append(ScalarField(grid, np.cos(2 * np.pi * k * coords[a])))
            out.append(ScalarField(grid, np.sin(2 * np.pi * k * coords[a])))
    return out


def spatial_hamiltonian_gradient(model: HamiltonianModel, sol: CellSolution) -> VectorField:
    """``D_x H(P + Du, x)`` along the optimal policy.

    Mechanical: ``grad V``.  Tabulated: by the envelope theorem
    ``-D_x L(x, v*)`` at the policy velocity, differenced across x-nodes.
    """
    grid = sol.grid
    if model.kind == MECHANICAL:
        return gradient(model.potential)
    j = velocity_index(model, sol.drift.flat())
    comps = []
    for a in range(grid.dim):
        table = model.table.reshape(*grid.shape, -1)
        plus = np.roll(table, -1, axis=a).reshape(grid.size, -1)
        minus = np.roll(table, 1, axis=a).reshape(grid.size, -1)
        rows = np.arange(grid.size)
        dL = (plus[rows, j] - minus[rows, j]) / (2 * grid.spacing)
        comps.append(-dL.reshape(grid.shape))
    return VectorField(grid, np.stack(comps))


def check_identities(model: HamiltonianModel, sol: CellSolution, dens: StationaryDensity,
                     dP: float = 1e-2, *, tol: float = 1e-10) -> IdentityReport:
    """Residuals of the three stationary-measure identities.

    ``id1_err`` is the largest ``|integral (A phi) theta|`` over low Fourier
    modes, ``id2_err`` the largest component of ``|integral D_x H theta|``, and
    ``id3_gap`` the largest axis-wise gap between ``integral D_p H theta`` and a
    central difference of ``Hbar`` with step ``dP``.
    """
    A = generator_matrix(sol.grid, sol.drift.flat(), sol.sigma)
    theta = dens.theta
    id1 = max(abs(integrate(ScalarField(sol.grid, (A @ phi.flat()).reshape(sol.grid.shape)), theta))
              for phi in fourier_test_functions(sol.grid))
    id2 = float(np.max(np.abs(integrate_vector(spatial_hamiltonian_gradient(model, sol), theta))))
    mean_dpH = -integrate_vector(sol.drift, theta)
    slope = hbar_slope(model, sol.P, sol.sigma, dP, tol=tol, u0=sol.u)
    id3 = float(np.max(np.abs(mean_dpH - slope)))
    return IdentityReport(float(id1), id2, id3)
