import numpy as np
import pytest
import scipy.linalg as sla
from scipy.special import mathieu_a

from stochmather.cell import solve_cell
from stochmather.errors import NonzeroMomentum
from stochmather.spectral import (eigen_cell_residual, eigen_operator, explicit_theta,
                                  principal_eigenvalue, u_from_eigenfunction)

from conftest import cos_model, free_model, hill_eigenvalue


def mathieu_lambda(sigma):
    # sigma^4/2 psi'' + cos(2 pi x) psi = lam psi  <=>  Mathieu with q = 1/(sigma^4 pi^2)
    q = 1.0 / (sigma**4 * np.pi**2)
    return -mathieu_a(0, q) * sigma**4 * np.pi**2 / 2


@pytest.mark.parametrize("sigma", [0.7, 1.0, 1.5])
def test_against_mathieu(sigma):
    eig = principal_eigenvalue(cos_model(256).potential, 0.0, sigma)
    assert eig.lam == pytest.approx(mathieu_lambda(sigma), abs=2e-5)


def test_against_dense_eigensolver():
    m = cos_model(48)
    for P in (0.0, 0.8):
        eig = principal_eigenvalue(m.potential, P, 0.9)
        dense = sla.eigvals(eigen_operator(m.potential, P, 0.9).toarray())
        assert eig.lam == pytest.approx(dense.real.max(), abs=1e-10)


def test_against_fourier_reference_with_momentum():
    eig = principal_eigenvalue(cos_model(512).potential, 1.0, 0.8)
    assert eig.lam == pytest.approx(hill_eigenvalue(0.8, 1.0), abs=2e-4)


@pytest.mark.parametrize("P", [0.0, 1.0, 2.0])
def test_free_exact(P):
    eig = principal_eigenvalue(free_model(64).potential, P, 0.5)
    assert eig.lam == pytest.approx(0.5 * P**2, abs=1e-9)


def test_eigenfunction_positive_bracket_history(bench):
    eig = principal_eigenvalue(bench.potential, 0.0, 1.0)
    assert eig.psi.values.min() > 0
    lo, hi = eig.bounds
    assert lo <= eig.lam <= hi
    assert eig.residual < 1e-9


def test_u_from_eigenfunction_close_to_cell(bench, bench_sol):
    eig = principal_eigenvalue(bench.potential, 0.0, 1.0)
    u = u_from_eigenfunction(eig)
    assert u.values.min() == pytest.approx(0.0, abs=1e-14)
    assert np.max(np.abs(u.values - bench_sol.u.values)) < 1e-3
    assert eigen_cell_residual(eig) < 5e-3


def test_explicit_theta(bench_sol, bench_dens):
    th = explicit_theta(bench_sol.u, 0.0, 1.0)
    l1 = np.sum(np.abs(th.values - bench_dens.theta.values)) * bench_sol.grid.cell_volume
    assert l1 < 1e-3
    with pytest.raises(NonzeroMomentum):
        explicit_theta(bench_sol.u, 0.5, 1.0)
