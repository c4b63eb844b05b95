import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochmather.errors import ArgmaxOnBoundary, ModelError
from stochmather.grid import TorusGrid
from stochmather.model import (fourier_potential, hamiltonian, lagrangian, mechanical,
                               model_from_dict, optimal_velocity, tabulate, velocity_nodes)

from conftest import cos_model


def test_benchmark_pointwise_values():
    m = cos_model(64)
    assert hamiltonian(m, [0.0], 0) == pytest.approx(1.0)
    assert lagrangian(m, [0.0], 0) == pytest.approx(-1.0)
    assert m.shift == pytest.approx(1.0)
    np.testing.assert_allclose(optimal_velocity(m, [0.7], 3), [-0.7])


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 63))
def test_legendre_duality_brute_force(p, node):
    # H(p, x) = sup_v (-p v - L(x, v)) evaluated on a fine velocity grid
    m = cos_model(64)
    vs = np.linspace(-8, 8, 160001)
    brute = np.max(-p * vs - np.array([0.5 * vs**2 - m.potential.flat()[node]]))
    assert hamiltonian(m, [p], node) == pytest.approx(brute, abs=1e-8)


def test_velocity_nodes_order():
    v = velocity_nodes(2, 1.0, 3)
    assert v.shape == (9, 2)
    np.testing.assert_allclose(v[1], [-1, 0])
    np.testing.assert_allclose(v[3], [0, -1])


def test_tabulated_matches_mechanical():
    g = TorusGrid(1, 16)
    V = np.cos(2 * np.pi * g.axis_coordinates())
    tab = tabulate(g, 3.0, 61, lambda x, v: 0.5 * np.sum(v**2, axis=-1) - np.cos(2 * np.pi * x[..., 0]),
                   gamma_L=0.99)
    mech = mechanical(g, V)
    for p in (-1.0, 0.4, 1.3):
        for node in (0, 5):
            assert hamiltonian(tab, [p], node) == pytest.approx(hamiltonian(mech, [p], node),
                                                                abs=0.5 * tab.dv**2)


def test_tabulated_rejects_nonconvex():
    g = TorusGrid(1, 8)
    with pytest.raises(ModelError):
        tabulate(g, 2.0, 11, lambda x, v: -np.sum(v**2, axis=-1) + 0 * x[..., 0], gamma_L=1.0)


def test_tabulated_argmax_on_boundary():
    g = TorusGrid(1, 8)
    tab = tabulate(g, 1.0, 11, lambda x, v: 0.5 * np.sum(v**2, axis=-1) + 0 * x[..., 0], gamma_L=0.9)
    with pytest.raises(ArgmaxOnBoundary):
        optimal_velocity(tab, [5.0], 0)


def test_model_from_dict_fourier_and_samples():
    spec = {"kind": "mechanical", "dim": 1,
            "potential": {"constant": 0.5, "terms": [{"k": [2], "cos": 1.0, "sin": 0.0}]}}
    m = model_from_dict(spec, 32)
    x = m.grid.axis_coordinates()
    np.testing.assert_allclose(m.potential.values, 0.5 + np.cos(4 * np.pi * x), atol=1e-14)
    m2 = model_from_dict({"kind": "mechanical", "potential": {"samples": list(np.zeros(16))}})
    assert m2.grid.nodes_per_axis == 16
    # sampled models resample trigonometrically onto other grids
    sampled = {"kind": "mechanical", "potential": {"samples": list(np.cos(2 * np.pi * np.arange(16) / 16))}}
    fine = model_from_dict(sampled).on_grid(TorusGrid(1, 64))
    np.testing.assert_allclose(fine.potential.values, np.cos(2 * np.pi * fine.grid.axis_coordinates()),
                               atol=1e-12)


@pytest.mark.parametrize("spec", [
    {},
    {"kind": "quadratic"},
    {"kind": "mechanical", "potential": {"samples": "abc"}},
    {"kind": "tabulated", "nodes_per_axis": 8},
])
def test_model_from_dict_malformed(spec):
    with pytest.raises(ModelError):
        model_from_dict(spec, 16)


def test_fourier_potential_2d():
    g = TorusGrid(2, 8)
    V = fourier_potential(g, {"terms": [{"k": [1, 1], "cos": 1.0}]})
    X, Y = g.coordinates()
    np.testing.assert_allclose(V, np.cos(2 * np.pi * (X + Y)), atol=1e-14)
