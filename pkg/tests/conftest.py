import numpy as np
import pytest

from stochmather.grid import TorusGrid
from stochmather.model import mechanical


def hill_eigenvalue(sigma, P, amp=1.0, K=48):
    """Perron eigenvalue of sigma^4/2 psi'' - sigma^2 P psi' + (amp cos 2 pi x + P^2/2) psi
    in the Fourier basis (continuum reference for the 1D benchmark)."""
    k = np.arange(-K, K + 1)
    M = np.diag(-0.5 * sigma**4 * (2 * np.pi * k) ** 2 - sigma**2 * P * 2j * np.pi * k
                + 0.5 * P**2).astype(complex)
    M += 0.5 * amp * (np.eye(2 * K + 1, k=1) + np.eye(2 * K + 1, k=-1))
    return float(np.linalg.eigvals(M).real.max())


def cos_model(n, amp=1.0):
    g = TorusGrid(1, n)
    return mechanical(g, amp * np.cos(2 * np.pi * g.axis_coordinates()))


def free_model(n, dim=1):
    g = TorusGrid(dim, n)
    return mechanical(g, np.zeros(g.shape))


@pytest.fixture(scope="session")
def bench():
    return cos_model(256)


@pytest.fixture(scope="session")
def bench_sol(bench):
    from stochmather.cell import solve_cell
    return solve_cell(bench, 0.0, 1.0)


@pytest.fixture(scope="session")
def bench_dens(bench_sol):
    from stochmather.measure import invariant_density
    return invariant_density(bench_sol.drift, 1.0)
