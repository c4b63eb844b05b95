"""
Lagrangian / Hamiltonian pairs on the torus.

Sign convention::

    H(p, x) = sup_v ( -p . v - L(x, v) ),     optimal drift v* = -D_p H(p, x)

Two kinds are supported.  *Mechanical* models have
``L = |v|^2/2 - V(x)`` and ``H = |p|^2/2 + V(x)``.  *Tabulated* models
carry samples of ``L`` on a product velocity grid and evaluate the
Legendre transform by exhaustive maximisation over that grid.

``L`` is only assumed bounded below.  The non-negative normalisation is
obtained by adding ``model.shift``; :func:`lagrangian` and
:func:`hamiltonian` report the *unshifted* pair and the shift is applied
explicitly where non-negativity matters (the occupation-measure LP).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ArgmaxOnBoundary, ModelError
from .grid import (
    ScalarField,
    TorusGrid,
    VectorField,
    backward_difference,
    forward_difference,
    generator_matrix,
)

MECHANICAL = "mechanical"
TABULATED = "tabulated"


def velocity_nodes(dim: int, v_max: float, m: int) -> np.ndarray:
    """Product velocity grid, shape ``(m**dim, dim)``, lexicographic order."""
    axis = np.linspace(-v_max, v_max, m)
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    kind: str
    grid: TorusGrid
    gamma_L: float = 1.0
    Gamma: float | None = None
    potential: ScalarField | None = None
    v_max: float | None = None
    m: int | None = None
    table: np.ndarray | None = None
    definition: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma_L <= 0:
            raise ModelError("gamma_L must be positive")
        if self.kind == MECHANICAL:
            if self.potential is None or self.potential.grid != self.grid:
                raise ModelError("mechanical model needs a potential on the model grid")
        elif self.kind == TABULATED:
            self._check_table()
        else:
            raise ModelError(f"unknown model kind {self.kind!r}")

    def _check_table(self):
        if self.v_max is None or self.m is None or self.table is None:
            raise ModelError("tabulated model needs v_max, m and an L table")
        if self.m < 3 or self.v_max <= 0:
            raise ModelError("tabulated model needs m >= 3 and v_max > 0")
        table = np.array(self.table, dtype=float)
        expected = (self.grid.size, self.m**self.grid.dim)
        if table.shape != expected:
            raise ModelError(f"L table shape {table.shape} != {expected}")
        if not np.all(np.isfinite(table)):
            raise ModelError("L table has non-finite entries")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        # convexity spot check: per-axis second differences >= gamma_L
        dv = self.dv
        cube = table.reshape(self.grid.size, *([self.m] * self.grid.dim))
        for axis in range(1, self.grid.dim + 1):
            second = np.diff(cube, n=2, axis=axis) / dv**2
            worst = float(second.min())
            if worst < self.gamma_L * (1.0 - 1e-9):
                raise ModelError(
                    f"L fails the declared convexity gamma_L={self.gamma_L}: "
                    f"min second difference {worst:.6g}"
                )

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def dv(self) -> float:
        if self.kind != TABULATED:
            raise ModelError("velocity spacing is defined for tabulated models only")
        return 2.0 * self.v_max / (self.m - 1)

    @property
    def velocities(self) -> np.ndarray:
        return velocity_nodes(self.dim, self.v_max, self.m)

    @property
    def shift(self) -> float:
        """Constant added to L to make it non-negative."""
        if self.kind == MECHANICAL:
            return max(0.0, float(self.potential.values.max()))
        return max(0.0, -float(self.table.min()))

    @property
    def convexity_upper(self) -> float:
        """Upper bound on D_pp H (1 for mechanical models unless declared)."""
        if self.Gamma is not None:
            return float(self.Gamma)
        if self.kind == MECHANICAL:
            return 1.0
        return 1.0 / self.gamma_L

    def on_grid(self, grid: TorusGrid) -> "HamiltonianModel":
        """The same model sampled on another grid."""
        if grid == self.grid:
            return self
        sampled = "samples" in (self.definition or {}).get("potential", {})
        if self.definition and not sampled:
            return model_from_dict(self.definition, grid.nodes_per_axis)
        if self.kind == MECHANICAL and grid.dim == self.dim:
            return mechanical(grid, _trig_resample(self.potential.values, grid.shape),
                              gamma_L=self.gamma_L, Gamma=self.Gamma)
        raise ModelError("cannot resample this model onto a different grid")


def _trig_resample(values: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    from scipy.signal import resample

    out = values
    for axis, n in enumerate(shape):
        out = resample(out, n, axis=axis)
    return out


# -- constructors ----------------------------------------------------------


def mechanical(grid: TorusGrid, potential, *, gamma_L: float = 1.0,
               Gamma: float | None = None, definition: dict | None = None) -> HamiltonianModel:
    if callable(potential):
        V = grid.sample(potential)
    elif isinstance(potential, ScalarField):
        V = potential
    else:
        V = ScalarField(grid, potential)
    return HamiltonianModel(MECHANICAL, grid, gamma_L=gamma_L, Gamma=Gamma, potential=V,
                            definition=dict(definition or {}))


def tabulated(grid: TorusGrid, v_max: float, m: int, table, *, gamma_L: float,
              Gamma: float | None = None, definition: dict | None = None) -> HamiltonianModel:
    return HamiltonianModel(TABULATED, grid, gamma_L=gamma_L, Gamma=Gamma, v_max=float(v_max),
                            m=int(m), table=table, definition=dict(definition or {}))


def tabulate(grid: TorusGrid, v_max: float, m: int, lagrangian_fn, *, gamma_L: float,
             Gamma: float | None = None) -> HamiltonianModel:
    """Tabulate ``lagrangian_fn(x, v)`` with ``x`` of shape (size, dim), ``v`` (M, dim)."""
    x = grid.points()
    v = velocity_nodes(grid.dim, v_max, m)
    table = lagrangian_fn(x[:, None, :], v[None, :, :])
    table = np.broadcast_to(table, (grid.size, len(v)))
    return tabulated(grid, v_max, m, table, gamma_L=gamma_L, Gamma=Gamma)


def fourier_potential(grid: TorusGrid, spec: dict) -> np.ndarray:
    """``constant + sum a cos(2 pi k.x) + b sin(2 pi k.x)``."""
    coords = grid.coordinates()
    out = np.full(grid.shape, float(spec.get("constant", 0.0)))
    for term in spec.get("terms", []):
        k = np.asarray(term["k"], dtype=float).reshape(-1)
        if k.size != grid.dim:
            raise ModelError(f"wave vector {term['k']} does not match dim {grid.dim}")
        phase = 2.0 * np.pi * np.tensordot(k, coords, axes=1)
        out += float(term.get("cos", 0.0)) * np.cos(phase)
        out += float(term.get("sin", 0.0)) * np.sin(phase)
    return out


def model_from_dict(spec: dict, nodes_per_axis: int | None = None) -> HamiltonianModel:
    """Build a model from its JSON definition.

    Mechanical models accept ``potential = {"constant", "terms": [{"k", "cos",
    "sin"}]}`` (sampled on any grid) or ``{"samples": [...]}`` (fixed grid).
    Tabulated models carry ``nodes_per_axis``, ``v_max``, ``m`` and ``L``
    with one row per x-node.
    """
    try:
        kind = spec["kind"]
        dim = int(spec.get("dim", 1))
        gamma_L = float(spec.get("gamma_L", 1.0))
        Gamma = spec.get("Gamma")
        Gamma = None if Gamma is None else float(Gamma)
        if kind == MECHANICAL:
            pot = spec.get("potential", {})
            if "samples" in pot:
                samples = np.asarray(pot["samples"], dtype=float)
                n = int(round(samples.size ** (1.0 / dim)))
                if nodes_per_axis is not None and nodes_per_axis != n:
                    raise ModelError(
                        f"potential samples define {n} nodes per axis, {nodes_per_axis} requested")
                grid = TorusGrid(dim, n)
                V = samples.reshape(grid.shape)
            else:
                grid = TorusGrid(dim, int(nodes_per_axis or spec.get("nodes_per_axis", 256)))
                V = fourier_potential(grid, pot)
            return mechanical(grid, V, gamma_L=gamma_L, Gamma=Gamma, definition=spec)
        if kind == TABULATED:
            n = int(spec["nodes_per_axis"])
            if nodes_per_axis is not None and nodes_per_axis != n:
                raise ModelError(f"tabulated model is fixed to {n} nodes per axis")
            grid = TorusGrid(dim, n)
            return tabulated(grid, float(spec["v_max"]), int(spec["m"]), spec["L"],
                             gamma_L=gamma_L, Gamma=Gamma, definition=spec)
        raise ModelError(f"unknown model kind {kind!r}")
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed model definition: {exc}") from exc


# -- pointwise operations --------------------------------------------------


def _node_index(grid: TorusGrid, node) -> int:
    if np.isscalar(node):
        return int(node) % grid.size
    idx = tuple(int(i) % grid.nodes_per_axis for i in node)
    return int(np.ravel_multi_index(idx, grid.shape))


def _tabulated_argmax(model: HamiltonianModel, p: np.ndarray, k: int) -> int:
    vels = model.velocities
    scores = -vels @ p - model.table[k]
    j = int(np.argmax(scores))  # first maximiser = smallest lexicographic v
    idx = np.unravel_index(j, (model.m,) * model.dim)
    if any(i in (0, model.m - 1) for i in idx):
        raise ArgmaxOnBoundary(
            f"Legendre maximiser for p={p.tolist()} lies on the velocity box |v| = {model.v_max}")
    return j


def lagrangian(model: HamiltonianModel, v, node) -> float:
    """Unshifted L(x, v) at a node; tabulated models need ``v`` on the velocity grid."""
    k = _node_index(model.grid, node)
    v = np.asarray(v, dtype=float).reshape(model.dim)
    if model.kind == MECHANICAL:
        return float(0.5 * v @ v - model.potential.flat()[k])
    j = np.argmin(np.sum((model.velocities - v) ** 2, axis=1))
    if not np.allclose(model.velocities[j], v, atol=1e-12 * model.v_max):
        raise ModelError(f"velocity {v.tolist()} is not a tabulated node")
    return float(model.table[k, j])


def hamiltonian(model: HamiltonianModel, p, node) -> float:
    k = _node_index(model.grid, node)
    p = np.asarray(p, dtype=float).reshape(model.dim)
    if model.kind == MECHANICAL:
        return float(0.5 * p @ p + model.potential.flat()[k])
    j = _tabulated_argmax(model, p, k)
    return float(-model.velocities[j] @ p - model.table[k, j])


def optimal_velocity(model: HamiltonianModel, p, node) -> np.ndarray:
    k = _node_index(model.grid, node)
    p = np.asarray(p, dtype=float).reshape(model.dim)
    if model.kind == MECHANICAL:
        return -p
    return model.velocities[_tabulated_argmax(model, p, k)].copy()


def generator_apply(model: HamiltonianModel | None, v: VectorField, sigma: float,
                    phi: ScalarField) -> ScalarField:
    """``sigma^2/2 Lap(phi) + v . grad_upwind(v)(phi)``."""
    A = generator_matrix(phi.grid, v.flat(), sigma)
    return ScalarField(phi.grid, A @ phi.flat())


# -- grid-wide operations used by the solvers ------------------------------


def running_cost(model: HamiltonianModel, drift: np.ndarray, P, *, shifted: bool = False) -> np.ndarray:
    """``L(x, v(x)) + P . v(x)`` per node for a nodal drift of shape (dim, size).

    Tabulated models require every drift vector to be a velocity node.
    """
    P = np.asarray(P, dtype=float).reshape(model.dim)
    drift = np.asarray(drift, dtype=float).reshape(model.dim, -1)
    if model.kind == MECHANICAL:
        L = 0.5 * np.sum(drift**2, axis=0) - model.potential.flat()
    else:
        L = model.table[np.arange(model.grid.size), velocity_index(model, drift)]
    if shifted:
        L = L + model.shift
    return L + P @ drift


def velocity_index(model: HamiltonianModel, drift: np.ndarray) -> np.ndarray:
    """Flat velocity-node index of each nodal drift vector (tabulated models)."""
    idx = np.rint((drift + model.v_max) / model.dv).astype(int)
    if np.any(idx < 0) or np.any(idx >= model.m):
        raise ModelError("drift outside the tabulated velocity box")
    if not np.allclose(idx * model.dv - model.v_max, drift, atol=1e-9 * model.v_max):
        raise ModelError("drift is not on the tabulated velocity grid")
    return np.ravel_multi_index(tuple(idx), (model.m,) * model.dim)


@dataclass(frozen=True)
class UpwindControl:
    """Pointwise minimiser of ``v . grad_upwind(v) u + L(x, v) + P . v``."""

    drift: np.ndarray  # (dim, size)
    value: np.ndarray  # minimum per node
    on_boundary: bool


def upwind_control(model: HamiltonianModel, P, u: ScalarField) -> UpwindControl:
    """Exact minimisation of the monotone discrete Hamiltonian at every node.

    The drift term of a velocity ``v`` uses the forward difference on axes
    where ``v_a > 0`` and the backward difference where ``v_a < 0``, which is
    the discretisation inside :func:`generator_matrix`.  Minimising per sign
    keeps the resulting policy matrix an M-matrix.
    """
    grid = model.grid
    P = np.asarray(P, dtype=float).reshape(grid.dim)
    fwd = np.stack([forward_difference(u, a).reshape(-1) for a in range(grid.dim)])
    bwd = np.stack([backward_difference(u, a).reshape(-1) for a in range(grid.dim)])
    if model.kind == MECHANICAL:
        drift = np.zeros((grid.dim, grid.size))
        value = -model.potential.flat().copy()
        for a in range(grid.dim):
            qf = P[a] + fwd[a]
            qb = P[a] + bwd[a]
            v_pos = np.maximum(-qf, 0.0)
            v_neg = np.minimum(-qb, 0.0)
            f_pos = -0.5 * v_pos**2  # v q + v^2/2 at v = -q
            f_neg = -0.5 * v_neg**2
            take_neg = f_neg < f_pos
            drift[a] = np.where(take_neg, v_neg, v_pos)
            value += np.where(take_neg, f_neg, f_pos)
        return UpwindControl(drift, value, False)

    vels = model.velocities  # (M, dim)
    cost = model.table + (vels @ P)[None, :]
    for a in range(grid.dim):
        va = vels[:, a][None, :]
        cost = cost + np.maximum(va, 0.0) * fwd[a][:, None] + np.minimum(va, 0.0) * bwd[a][:, None]
    j = np.argmin(cost, axis=1)
    value = cost[np.arange(grid.size), j]
    sub = np.stack(np.unravel_index(j, (model.m,) * grid.dim))
    on_boundary = bool(np.any((sub == 0) | (sub == model.m - 1)))
    return UpwindControl(vels[j].T.copy(), value, on_boundary)
