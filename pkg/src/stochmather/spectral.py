"""
Principal eigenvalue route to Hbar for mechanical Hamiltonians.

With ``H = |p|^2/2 + V`` the substitution ``psi = exp(-u / sigma^2)`` turns
the cell problem into the linear eigenproblem::

    sigma^4/2 Lap psi - sigma^2 P . grad psi + (V + |P|^2/2) psi = Hbar psi

whose principal (Perron) eigenvalue is ``Hbar``.  The first-order term is
discretised upwind so the matrix is Metzler and irreducible, hence has a
simple real top eigenvalue with a positive eigenvector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cell import _as_momentum, _check_sigma, cell_residual
from .errors import NoConvergence, NonPositiveEigenfunction, NonzeroMomentum
from .grid import ScalarField, integrate, laplacian_matrix, upwind_drift_matrix
from .model import mechanical


@dataclass(frozen=True, eq=False)
class EigenSolution:
    lam: float
    psi: ScalarField
    V: ScalarField
    sigma: float
    P: np.ndarray
    residual: float
    bounds: tuple[float, float]
    iterations: int
    history: list[float] = field(default_factory=list)


def eigen_operator(V: ScalarField, P, sigma: float) -> sp.csr_matrix:
    grid = V.grid
    P = _as_momentum(P, grid.dim)
    drift = np.repeat((-sigma**2 * P)[:, None], grid.size, axis=1)
    potential = sp.diags(V.flat() + 0.5 * float(P @ P))
    return (0.5 * sigma**4 * laplacian_matrix(grid) + upwind_drift_matrix(grid, drift)
            + potential).tocsr()


def principal_eigenvalue(V: ScalarField, P, sigma: float, tol: float = 1e-12,
                         max_iter: int = 500) -> EigenSolution:
    """Shifted inverse iteration for the Perron eigenpair.

    The first shift is ``max V + |P|^2/2 + sigma^4/h^2 + 1``, which exceeds
    every eigenvalue.  Afterwards the shift follows the Collatz-Wielandt
    upper bound ``max (L psi / psi)`` plus the current bracket width, so it
    stays strictly above the Perron root and ``(s I - L)^{-1}`` stays
    entrywise non-negative.  Iteration stops when the bracket
    ``[min (L psi / psi), max (L psi / psi)]`` is narrower than ``tol``
    relative to ``max(1, |lambda|)``, or than the round-off floor of
    ``L @ psi``, whichever is larger.
    """
    sigma = _check_sigma(sigma)
    grid = V.grid
    P = _as_momentum(P, grid.dim)
    L = eigen_operator(V, P, sigma)
    n = grid.size
    ident = sp.identity(n, format="csc")
    shift = float(V.values.max() + 0.5 * P @ P + sigma**4 / grid.spacing**2 + 1.0)
    psi = np.ones(n)
    # cancellation in L @ psi limits how narrow the bracket can get
    floor = 64 * np.finfo(float).eps * float(abs(L).sum(axis=1).max())
    history: list[float] = []
    for it in range(1, max_iter + 1):
        try:
            y = spla.splu((shift * ident - L).tocsc()).solve(psi)
        except RuntimeError as exc:
            raise NoConvergence(f"shifted operator became singular: {exc}") from exc
        if np.min(y) <= 0:
            raise NonPositiveEigenfunction("inverse iterate lost positivity; refine the grid")
        psi = y / y.max()
        ratio = (L @ psi) / psi
        lo, hi = float(ratio.min()), float(ratio.max())
        history.append(hi)
        width = hi - lo
        if width <= max(tol * max(1.0, abs(hi)), floor / psi.min()):
            lam = 0.5 * (lo + hi)
            residual = float(np.max(np.abs(L @ psi - lam * psi)))
            return EigenSolution(lam, ScalarField(grid, psi.reshape(grid.shape)), V, sigma, P,
                                 residual, (lo, hi), it, history)
        shift = hi + max(width, 1e-9 * max(1.0, abs(hi)))
    raise NoConvergence(f"inverse iteration did not converge in {max_iter} steps")


def u_from_eigenfunction(eig: EigenSolution) -> ScalarField:
    """Corrector ``u = -sigma^2 log psi``, shifted to have minimum 0."""
    if np.min(eig.psi.values) <= 0:
        raise NonPositiveEigenfunction("eigenfunction must be positive")
    u = -eig.sigma**2 * np.log(eig.psi.values)
    return ScalarField(eig.psi.grid, u - u.min())


def eigen_cell_residual(eig: EigenSolution) -> float:
    """Residual of the spectral corrector in the upwind discrete cell equation."""
    model = mechanical(eig.V.grid, eig.V)
    return cell_residual(model, eig.P, eig.sigma, u_from_eigenfunction(eig), eig.lam)


def explicit_theta(u: ScalarField, P, sigma: float) -> ScalarField:
    """Invariant density ``exp(-2u / sigma^2)`` normalised to unit mass (P = 0 only)."""
    P = _as_momentum(P, u.grid.dim)
    if np.any(P != 0):
        raise NonzeroMomentum("exp(-2(Px+u)/sigma^2) is not periodic for P != 0")
    w = -2.0 * u.values / sigma**2
    theta = np.exp(w - w.max())
    field_ = ScalarField(u.grid, theta)
    return field_ * (1.0 / integrate(field_))
