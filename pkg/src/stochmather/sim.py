"""
Euler-Maruyama simulation of the optimally controlled diffusion
``dx = v*(x) dt + sigma dw`` on the universal cover of the torus.

Each path owns a PCG64 stream seeded by ``(seed, path_index)``, so results
do not depend on how paths are batched.  Positions are tracked unwrapped;
occupation statistics use the wrapped position after a burn-in of ``T/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CellSolution
from .errors import StepTooLarge
from .grid import ScalarField, TorusGrid

CHUNK = 4096


@dataclass(frozen=True)
class SimulationConfig:
    T: float
    dt: float
    n_paths: int
    seed: int = 0
    x0: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TorusGrid
    x0: np.ndarray  # (dim,)
    endpoints: np.ndarray  # (n_paths, dim), unwrapped
    T: float
    histogram: np.ndarray  # probability per node, grid shape, sums to 1
    running_cost: np.ndarray  # (n_paths,) time average of L + P.v after burn-in

    @property
    def displacement(self) -> np.ndarray:
        """Per-path average velocity ``(x(T) - x(0)) / T``."""
        return (self.endpoints - self.x0[None, :]) / self.T

    def occupation_density(self) -> ScalarField:
        return ScalarField(self.grid, self.histogram / self.grid.cell_volume)


def interpolate(grid: TorusGrid, nodal: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Multilinear periodic interpolation.

    ``nodal`` has shape ``(k, *grid.shape)``, ``x`` has shape ``(p, dim)``;
    returns ``(k, p)``.
    """
    n = grid.nodes_per_axis
    y = np.mod(x, 1.0) / grid.spacing
    base = np.floor(y).astype(np.int64)
    frac = y - base
    base %= n
    out = np.zeros((nodal.shape[0], x.shape[0]))
    for corner in np.ndindex(*([2] * grid.dim)):
        w = np.ones(x.shape[0])
        idx = []
        for a, c in enumerate(corner):
            w = w * (frac[:, a] if c else 1.0 - frac[:, a])
            idx.append((base[:, a] + c) % n)
        out += w[None, :] * nodal[(slice(None), *idx)]
    return out


def _streams(seed: int, n_paths: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), p])))
            for p in range(n_paths)]


def simulate(sol: CellSolution, cfg: SimulationConfig) -> PathEnsemble:
    """Integrate ``n_paths`` independent paths of the feedback diffusion.

    Raises:
        StepTooLarge: ``dt > h / (2 max|drift|)``.
    """
    grid = sol.grid
    dim = grid.dim
    drift = sol.drift.components
    vmax = float(np.max(np.abs(drift)))
    if vmax > 0 and cfg.dt > grid.spacing / (2.0 * vmax):
        raise StepTooLarge(
            f"dt={cfg.dt:g} exceeds h/(2 max|drift|) = {grid.spacing / (2.0 * vmax):.3e}")
    x0 = np.zeros(dim) if len(cfg.x0) == 0 else np.asarray(cfg.x0, dtype=float).reshape(dim)
    from .model import running_cost

    cost = running_cost(sol.model, sol.drift.flat(), sol.P).reshape(1, *grid.shape)
    nodal = np.concatenate([drift, cost], axis=0)

    x = np.repeat(x0[None, :], cfg.n_paths, axis=0)
    n_steps = cfg.n_steps
    burn = n_steps // 2
    counts = np.zeros(grid.size, dtype=np.int64)
    cost_sum = np.zeros(cfg.n_paths)
    noisy = sol.sigma > 0
    gens = _streams(cfg.seed, cfg.n_paths) if noisy else []
    scale = sol.sigma * np.sqrt(cfg.dt)
    n = grid.nodes_per_axis
    step = 0
    while step < n_steps:
        k = min(CHUNK, n_steps - step)
        if noisy:
            noise = np.stack([g.standard_normal((k, dim)) for g in gens], axis=1) * scale
        record = []
        for s in range(k):
            vals = interpolate(grid, nodal, x)
            if step + s >= burn:
                cost_sum += vals[dim]
                record.append(np.mod(np.rint(np.mod(x, 1.0) / grid.spacing).astype(np.int64), n))
            x = x + cfg.dt * vals[:dim].T
            if noisy:
                x = x + noise[s]
        if record:
            idx = np.stack(record)  # (k', paths, dim)
            flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), grid.shape)
            counts += np.bincount(flat.reshape(-1), minlength=grid.size)
        step += k
    hist = counts.astype(float) / counts.sum()
    return PathEnsemble(grid, x0, x, cfg.n_steps * cfg.dt, hist.reshape(grid.shape),
                        cost_sum / (n_steps - burn))


def rotation_vector(ens: PathEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of the per-path average velocity."""
    d = ens.displacement
    if d.shape[0] < 2:
        raise ValueError("rotation_vector needs at least two paths")
    return d.mean(axis=0), d.std(axis=0, ddof=1) / np.sqrt(d.shape[0])


def hbar_estimate(ens: PathEnsemble) -> tuple[float, float]:
    """``-`` time-averaged running cost: an ergodic estimate of ``Hbar`` with its standard error."""
    c = ens.running_cost
    err = float(c.std(ddof=1) / np.sqrt(c.size)) if c.size > 1 else float("nan")
    return float(-c.mean()), err


def histogram_l1(ens: PathEnsemble, theta: ScalarField) -> float:
    """L1 distance between the occupation histogram and a density on the same grid."""
    return float(np.sum(np.abs(ens.histogram - theta.values * theta.grid.cell_volume)))
