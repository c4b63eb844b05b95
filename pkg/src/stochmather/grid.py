"""
Periodic uniform grids on the unit torus and their finite-difference calculus.

Nodes sit at ``x_k = k h`` with ``h = 1 / nodes_per_axis`` on every axis.
Scalar fields are stored as arrays of shape ``(n,)`` or ``(n, n)``; vector
fields carry a leading component axis, shape ``(dim, n, ...)``.  Flattened
node indices follow C order, which is the ordering used by every sparse
operator assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic discretization of the torus ``[0, 1)^dim``."""

    dim: int
    nodes_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.nodes_per_axis < 8:
            raise ValueError(f"nodes_per_axis must be >= 8, got {self.nodes_per_axis}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.nodes_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.nodes_per_axis**self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.nodes_per_axis) * self.spacing

    def coordinates(self) -> np.ndarray:
        """Node coordinates, shape ``(dim, *shape)``."""
        axes = [self.axis_coordinates()] * self.dim
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Node coordinates as a ``(size, dim)`` array in flattened order."""
        return self.coordinates().reshape(self.dim, -1).T

    def scalar(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def sample(self, func) -> "ScalarField":
        """Evaluate ``func(*coords)`` at the nodes."""
        return ScalarField(self, func(*self.coordinates()))


def _frozen(array, shape) -> np.ndarray:
    out = np.array(array, dtype=float, copy=True)
    if out.size != int(np.prod(shape)):
        raise ValueError(f"expected {int(np.prod(shape))} values, got {out.size}")
    out = out.reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, self.grid.shape))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _raw(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _raw(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _raw(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    components: np.ndarray

    def __post_init__(self):
        shape = (self.grid.dim, *self.grid.shape)
        object.__setattr__(self, "components", _frozen(self.components, shape))

    @classmethod
    def constant(cls, grid: TorusGrid, vector: Sequence[float]) -> "VectorField":
        vec = np.asarray(vector, dtype=float).reshape(grid.dim, *([1] * grid.dim))
        return cls(grid, np.broadcast_to(vec, (grid.dim, *grid.shape)))

    def flat(self) -> np.ndarray:
        """Components as a ``(dim, size)`` array."""
        return self.components.reshape(self.grid.dim, -1)

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components**2, axis=0))


def _raw(other):
    if isinstance(other, ScalarField):
        return other.values
    return other


def _roll(values: np.ndarray, offset: int, axis: int) -> np.ndarray:
    # values[i + offset] at position i
    return np.roll(values, -offset, axis=axis)


def laplacian(f: ScalarField) -> ScalarField:
    h2 = f.grid.spacing**2
    out = np.zeros(f.grid.shape)
    for axis in range(f.grid.dim):
        out += _roll(f.values, 1, axis) - 2.0 * f.values + _roll(f.values, -1, axis)
    return ScalarField(f.grid, out / h2)


def forward_difference(f: ScalarField, axis: int) -> np.ndarray:
    return (_roll(f.values, 1, axis) - f.values) / f.grid.spacing


def backward_difference(f: ScalarField, axis: int) -> np.ndarray:
    return (f.values - _roll(f.values, -1, axis)) / f.grid.spacing


def gradient(f: ScalarField, drift: VectorField | None = None) -> VectorField:
    """Discrete gradient.

    With ``drift=None`` the symmetric difference is used.  Otherwise each
    axis is differenced upwind with respect to the matching drift
    component: forward where it is positive, backward where negative and
    centered at exact zeros.
    """
    comps = []
    for axis in range(f.grid.dim):
        fwd = forward_difference(f, axis)
        bwd = backward_difference(f, axis)
        centered = 0.5 * (fwd + bwd)
        if drift is None:
            comps.append(centered)
            continue
        w = drift.components[axis]
        comps.append(np.where(w > 0, fwd, np.where(w < 0, bwd, centered)))
    return VectorField(f.grid, np.stack(comps))


def shift(f: ScalarField, offset: int | Sequence[int]) -> ScalarField:
    """Circular shift: the result at node ``k`` is ``f`` at node ``k + offset``."""
    offsets = [offset] * f.grid.dim if np.isscalar(offset) else list(offset)
    if len(offsets) != f.grid.dim:
        raise ValueError("one offset per axis required")
    out = f.values
    for axis, off in enumerate(offsets):
        out = _roll(out, int(off), axis)
    return ScalarField(f.grid, out)


def integrate(f: ScalarField, weight: ScalarField | None = None) -> float:
    """Rectangle rule ``h^dim * sum(f * weight)``."""
    vals = f.values if weight is None else f.values * weight.values
    return float(f.grid.cell_volume * np.sum(vals))


def integrate_vector(v: VectorField, weight: ScalarField | None = None) -> np.ndarray:
    w = 1.0 if weight is None else weight.values
    axes = tuple(range(1, v.grid.dim + 1))
    return v.grid.cell_volume * np.sum(v.components * w, axis=axes)


# -- sparse operators ------------------------------------------------------


def _neighbor_index(grid: TorusGrid, axis: int, offset: int) -> np.ndarray:
    idx = np.arange(grid.size).reshape(grid.shape)
    return _roll(idx, offset, axis).reshape(-1)


def laplacian_matrix(grid: TorusGrid) -> sp.csr_matrix:
    n = grid.size
    rows = np.arange(n)
    h2 = grid.spacing**2
    diag = np.full(n, -2.0 * grid.dim / h2)
    data, ri, ci = [diag], [rows], [rows]
    for axis in range(grid.dim):
        for off in (1, -1):
            data.append(np.full(n, 1.0 / h2))
            ri.append(rows)
            ci.append(_neighbor_index(grid, axis, off))
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(n, n)
    )


def upwind_drift_matrix(grid: TorusGrid, drift: np.ndarray) -> sp.csr_matrix:
    """Sparse matrix of ``u -> w . grad_upwind(w) u``.

    ``drift`` has shape ``(dim, size)``.  Off-diagonal entries are
    ``max(w_a, 0)/h`` towards the forward neighbour and ``max(-w_a, 0)/h``
    towards the backward one, so they are never negative.
    """
    n = grid.size
    h = grid.spacing
    drift = np.asarray(drift, dtype=float).reshape(grid.dim, n)
    rows = np.arange(n)
    diag = np.zeros(n)
    data, ri, ci = [], [], []
    for axis in range(grid.dim):
        w = drift[axis]
        pos = np.maximum(w, 0.0) / h
        neg = np.maximum(-w, 0.0) / h
        diag -= pos + neg
        data += [pos, neg]
        ri += [rows, rows]
        ci += [_neighbor_index(grid, axis, 1), _neighbor_index(grid, axis, -1)]
    data.append(diag)
    ri.append(rows)
    ci.append(rows)
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(n, n)
    )


def generator_matrix(grid: TorusGrid, drift: np.ndarray, sigma: float) -> sp.csr_matrix:
    """``sigma^2/2 * Laplacian + upwind drift``; rows sum to zero."""
    return (0.5 * sigma**2) * laplacian_matrix(grid) + upwind_drift_matrix(grid, drift)


# -- CSV -------------------------------------------------------------------


def field_rows(field: ScalarField | VectorField) -> tuple[list[str], np.ndarray]:
    """Header and rows (coordinates then values) for CSV output."""
    grid = field.grid
    coords = grid.points()
    names = ["x", "y"][: grid.dim]
    if isinstance(field, ScalarField):
        return names + ["value"], np.column_stack([coords, field.flat()])
    comps = field.flat().T
    return names + [f"v{a}" for a in range(grid.dim)], np.column_stack([coords, comps])
