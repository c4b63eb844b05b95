"""
Occupation-measure linear program for the stochastic Mather problem.

Decision variables are point masses ``w[i, j]`` on the product of x-nodes
and velocity nodes.  Constraints:

* mass: ``sum w = 1``;
* stationarity: ``sum_{i,j} (A^{v_j} e_k)(x_i) w[i, j] = 0`` for every node
  ``k`` except one (the rows sum to zero, so one is redundant), where
  ``A^{v}`` is the upwind generator for the constant velocity ``v`` and
  ``e_k`` the nodal hat function.

The objective is ``sum (L(x_i, v_j) + shift + P . v_j) w[i, j]``.  Its
minimum is ``-Hbar(P) + shift``; the dual variables of the stationarity
rows reproduce the corrector ``u`` up to a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cell import CellSolution, _as_momentum, _check_sigma, solve_cell
from .errors import VelocityBoxTooSmall
from .grid import ScalarField, TorusGrid, generator_matrix
from .model import MECHANICAL, HamiltonianModel, velocity_nodes
from .simplex import simplex

MAX_VARIABLES = 50_000
BOX_MARGIN = 1.25


@dataclass(frozen=True, eq=False)
class LpInstance:
    model: HamiltonianModel
    grid: TorusGrid
    velocities: np.ndarray  # (M, dim)
    v_max: float
    m: int
    sigma: float
    P: np.ndarray
    cost: np.ndarray  # (N*M,), column (i, j) at i*M + j
    A_eq: np.ndarray  # (N, N*M): mass row then stationarity rows k = 1..N-1
    b_eq: np.ndarray
    dropped_row: int
    shift: float

    @property
    def n_variables(self) -> int:
        return self.A_eq.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.A_eq.shape[0]

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.m - 1)


@dataclass(frozen=True, eq=False)
class DiscreteOccupationMeasure:
    grid: TorusGrid
    velocities: np.ndarray
    v_max: float
    m: int
    masses: np.ndarray  # (N, M) point masses, total 1

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.m - 1)

    @property
    def weights(self) -> np.ndarray:
        """Density values with ``sum(weights) h^n dv^n = 1``."""
        return self.masses / (self.grid.cell_volume * self.dv**self.grid.dim)

    def x_marginal(self) -> ScalarField:
        return ScalarField(self.grid, (self.masses.sum(axis=1) / self.grid.cell_volume)
                           .reshape(self.grid.shape))


@dataclass(frozen=True, eq=False)
class LpResult:
    value: float
    measure: DiscreteOccupationMeasure
    dual_mass: float
    dual_phi: np.ndarray  # one value per x-node, dropped node pinned at 0
    shift: float
    pivots: int
    complementary_slackness: float
    dual_infeasibility: float

    @property
    def unshifted_value(self) -> float:
        """Optimal value of the LP with the unshifted Lagrangian (approximates ``-Hbar``)."""
        return self.value - self.shift

    @property
    def dual_values(self) -> np.ndarray:
        return np.concatenate([[self.dual_mass], self.dual_phi])


def lp_lagrangian(model: HamiltonianModel, velocities: np.ndarray) -> np.ndarray:
    """Shifted ``L(x_i, v_j)`` as an (N, M) array."""
    if model.kind == MECHANICAL:
        kinetic = 0.5 * np.sum(velocities**2, axis=1)
        return kinetic[None, :] - model.potential.flat()[:, None] + model.shift
    return model.table + model.shift


def stationarity_block(grid: TorusGrid, velocities: np.ndarray, sigma: float) -> np.ndarray:
    """``S[k, i, j] = (A^{v_j} e_k)(x_i)``, i.e. entry ``(i, k)`` of the generator for ``v_j``."""
    N, M = grid.size, len(velocities)
    S = np.empty((N, N, M))
    for j, v in enumerate(velocities):
        drift = np.repeat(np.asarray(v, dtype=float)[:, None], N, axis=1)
        S[:, :, j] = generator_matrix(grid, drift, sigma).toarray().T
    return S


def build_lp(model: HamiltonianModel, sigma: float, P, grid: TorusGrid | None = None,
             v_max: float = 4.0, m: int = 41, *, cell: CellSolution | None = None,
             check_box: bool = True) -> LpInstance:
    """Assemble the dense LP.

    Tabulated models always use their own velocity grid.  With
    ``check_box`` the optimal drift of a cell solve on the LP grid (or
    ``cell``) must fit in the box with 25% margin.
    """
    sigma = _check_sigma(sigma)
    if grid is not None:
        model = model.on_grid(grid)
    grid = model.grid
    P = _as_momentum(P, grid.dim)
    if model.kind != MECHANICAL:
        v_max, m = model.v_max, model.m
    velocities = velocity_nodes(grid.dim, v_max, m)
    N, M = grid.size, len(velocities)
    if N * M > MAX_VARIABLES:
        raise ValueError(f"LP with {N * M} variables exceeds the dense cap {MAX_VARIABLES}")
    if check_box:
        if cell is None or cell.grid != grid:
            cell = solve_cell(model, P, sigma, tol=1e-8)
        reach = float(np.max(np.abs(cell.drift.components)))
        if BOX_MARGIN * reach > v_max:
            raise VelocityBoxTooSmall(
                f"optimal drift reaches {reach:.3f}; need v_max >= {BOX_MARGIN * reach:.3f}")

    cost = (lp_lagrangian(model, velocities) + (velocities @ P)[None, :]).reshape(-1)
    S = stationarity_block(grid, velocities, sigma)
    dropped = 0
    rows = -S[np.arange(N) != dropped].reshape(N - 1, N * M)
    A_eq = np.vstack([np.ones((1, N * M)), rows])
    b_eq = np.zeros(N)
    b_eq[0] = 1.0
    return LpInstance(model, grid, velocities, float(v_max), int(m), sigma, P, cost, A_eq, b_eq,
                      dropped, model.shift)


def uniform_basis(inst: LpInstance) -> np.ndarray:
    """Columns ``(i, j*)`` for all nodes ``i``, with ``v_{j*}`` the slowest velocity node.

    A constant drift has the uniform invariant measure, so ``w[i, j*] = 1/N``
    is feasible; for sigma > 0 the generator is irreducible and these
    columns are linearly independent.
    """
    j = int(np.argmin(np.sum(inst.velocities**2, axis=1)))
    return np.arange(inst.grid.size) * len(inst.velocities) + j


def solve_lp(inst: LpInstance, tol: float = 1e-9, max_pivots: int = 100000, *,
             pricing: str = "dantzig", warm_start: bool = True) -> LpResult:
    """Solve with the dense simplex method and report the primal-dual pair.

    Dual variables satisfy ``dual_mass <= c(x_i, v_j) + (A^{v_j} phi)(x_i)``
    for every column, with ``phi`` pinned to 0 at the dropped node.  Phase
    two starts from :func:`uniform_basis` unless ``warm_start`` is false.
    """
    basis = uniform_basis(inst) if warm_start else None
    res = simplex(inst.cost, inst.A_eq, inst.b_eq, tol=min(tol, 1e-10), max_pivots=max_pivots,
                  basis=basis, pricing=pricing)
    N, M = inst.grid.size, len(inst.velocities)
    phi = np.zeros(N)
    keep = np.arange(N) != inst.dropped_row
    phi[keep] = res.dual[1:]
    rc = inst.cost - inst.A_eq.T @ res.dual
    measure = DiscreteOccupationMeasure(inst.grid, inst.velocities, inst.v_max, inst.m,
                                        res.x.reshape(N, M))
    return LpResult(
        value=res.value,
        measure=measure,
        dual_mass=float(res.dual[0]),
        dual_phi=phi,
        shift=inst.shift,
        pivots=res.pivots,
        complementary_slackness=float(np.max(np.abs(res.x * rc))),
        dual_infeasibility=float(max(0.0, -rc.min())),
    )


def duality_gap(inst: LpInstance, primal_value: float, dual_values) -> float:
    """Primal objective minus dual objective ``b . y = dual_mass``."""
    dual_values = np.asarray(dual_values, dtype=float)
    return float(primal_value - inst.b_eq @ _dual_vector(inst, dual_values))


def _dual_vector(inst: LpInstance, dual_values: np.ndarray) -> np.ndarray:
    # accepts (mass, phi over all nodes) or (mass, phi over kept rows)
    N = inst.grid.size
    if dual_values.size == N + 1:
        keep = np.arange(N) != inst.dropped_row
        return np.concatenate([dual_values[:1], dual_values[1:][keep]])
    return dual_values


def dual_slack(inst: LpInstance, dual_values) -> np.ndarray:
    """Reduced costs ``c - A^T y``; non-negative iff the dual point is feasible."""
    y = _dual_vector(inst, np.asarray(dual_values, dtype=float))
    return inst.cost - inst.A_eq.T @ y


def graph_mass_fraction(measure: DiscreteOccupationMeasure, drift: np.ndarray) -> float:
    """Mass within one velocity cell (sup-norm) of the nodal drift."""
    drift = np.asarray(drift, dtype=float).reshape(measure.grid.dim, -1)
    dist = np.max(np.abs(measure.velocities[None, :, :] - drift.T[:, None, :]), axis=2)
    near = dist <= measure.dv * (1.0 + 1e-9)
    return float(np.sum(measure.masses[near]) / np.sum(measure.masses))
