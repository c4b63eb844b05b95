import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmather.cell import solve_cell
from stochmather.grid import TorusGrid, VectorField, generator_matrix, integrate
from stochmather.measure import (action, check_identities, fourier_test_functions,
                                 invariant_density, mather_measure)

from conftest import cos_model, free_model


def test_free_density_uniform():
    sol = solve_cell(free_model(32), 1.0, 0.5)
    dens = invariant_density(sol.drift, 0.5)
    np.testing.assert_allclose(dens.theta.values, 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(0, 10_000), st.floats(0.05, 2.0))
def test_invariant_density_properties(dim, seed, sigma):
    g = TorusGrid(dim, 8)
    drift = np.random.default_rng(seed).normal(scale=2.0, size=(dim, *g.shape))
    dens = invariant_density(VectorField(g, drift), sigma)
    assert dens.theta.values.min() >= 0
    assert integrate(dens.theta) == pytest.approx(1.0, abs=1e-12)
    A = generator_matrix(g, drift.reshape(dim, -1), sigma)
    np.testing.assert_allclose(A.T @ dens.theta.flat(), 0, atol=1e-9 * max(1, abs(A).max()))


def test_gradient_drift_density_is_gibbs():
    # drift -grad W (upwind on a symmetric potential) has density close to exp(-2W/sigma^2)
    g = TorusGrid(1, 512)
    x = g.axis_coordinates()
    W = 0.3 * np.cos(2 * np.pi * x)
    drift = 0.3 * 2 * np.pi * np.sin(2 * np.pi * x)
    dens = invariant_density(VectorField(g, drift[None]), 1.0)
    gibbs = np.exp(-2 * W)
    gibbs /= gibbs.mean()
    assert np.max(np.abs(dens.theta.values - gibbs)) < 1e-2


def test_identities_benchmark(bench, bench_sol, bench_dens):
    rep = check_identities(bench, bench_sol, bench_dens, 1e-2)
    assert rep.id1_err < 1e-8
    assert rep.id2_err < 1e-3
    assert rep.id3_gap < 1e-2
    assert set(rep.to_dict()) == {"id1_err", "id2_err", "id3_gap"}


def test_action_identity(bench, bench_sol, bench_dens):
    assert action(bench, bench_sol, bench_dens) == pytest.approx(-bench_sol.Hbar, abs=1e-12)
    assert action(bench, bench_sol, bench_dens, shifted=True) == pytest.approx(
        -bench_sol.Hbar + bench.shift, abs=1e-12)


def test_identities_with_momentum():
    m = cos_model(256)
    sol = solve_cell(m, 1.0, 0.8)
    rep = check_identities(m, sol, invariant_density(sol.drift, 0.8), 1e-2)
    assert rep.id1_err < 1e-8 and rep.id2_err < 1e-3 and rep.id3_gap < 1e-2


def test_fourier_test_functions_count():
    assert len(fourier_test_functions(TorusGrid(2, 16))) == 20


def test_mather_measure(bench, bench_sol):
    gm = mather_measure(bench, bench_sol)
    assert integrate(gm.density.theta) == pytest.approx(1.0)
    assert gm.velocity_on_graph is bench_sol.drift


def test_density_gradient_norm_bounded_under_refinement():
    from stochmather.measure import density_gradient_norm
    vals = []
    for n in (128, 256, 512):
        sol = solve_cell(cos_model(n), 0.0, 1.0)
        vals.append(density_gradient_norm(invariant_density(sol.drift, 1.0)))
    assert max(vals) / min(vals) < 1.05
    sol = solve_cell(free_model(32), 1.0, 1.0)
    assert density_gradient_norm(invariant_density(sol.drift, 1.0)) < 1e-10
