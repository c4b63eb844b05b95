"""Acceptance criteria, one test each.  Every test prints a single PASS/FAIL line."""

import json
import time

import numpy as np
import pytest

from stochmather.cell import effective_surface, hbar_slope, solve_cell
from stochmather.cli import main
from stochmather.diagnostics import regularity_est1, regularity_est2_est3, sigma_sweep
from stochmather.grid import TorusGrid
from stochmather.lp import build_lp, duality_gap, graph_mass_fraction, solve_lp
from stochmather.measure import action, check_identities, invariant_density
from stochmather.sim import SimulationConfig, rotation_vector, simulate
from stochmather.spectral import explicit_theta, principal_eigenvalue

from conftest import cos_model, free_model


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, detail
    return emit


def test_criterion_01_free_case_exact(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    flat_u = flat_theta = 0.0
    model = free_model(256)
    for sigma in (0.25, 1.0):
        for P in (0.0, 1.0, 2.0):
            exact = 0.5 * P**2
            sol = solve_cell(model, P, sigma)
            eig = principal_eigenvalue(model.potential, P, sigma)
            lp = solve_lp(build_lp(model, sigma, P, grid=TorusGrid(1, 40), v_max=4.0, m=41))
            worst = max(worst, abs(sol.Hbar - exact), abs(eig.lam - exact),
                        abs(-lp.unshifted_value - exact))
            flat_u = max(flat_u, float(np.ptp(sol.u.values)))
            dens = invariant_density(sol.drift, sigma)
            flat_theta = max(flat_theta, float(np.max(np.abs(dens.theta.values - 1.0))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and flat_u <= 1e-9 and flat_theta <= 1e-9 and elapsed < 1.0
    verdict(1, ok, f"max |Hbar - P^2/2| = {worst:.2e} (<= 1e-9), osc u = {flat_u:.1e}, "
                   f"|theta - 1| = {flat_theta:.1e}, runtime {elapsed:.2f}s (< 1s)")


def test_criterion_02_route_agreement(verdict, bench):
    t0 = time.perf_counter()
    sol = solve_cell(bench, 0.0, 1.0)
    eig = principal_eigenvalue(bench.potential, 0.0, 1.0)
    inst = build_lp(bench, 1.0, 0.0, grid=TorusGrid(1, 40), v_max=4.0, m=41)
    res = solve_lp(inst)
    gap = abs(duality_gap(inst, res.value, res.dual_values))
    elapsed = time.perf_counter() - t0
    d_spec = abs(sol.Hbar - eig.lam)
    d_lp = abs(res.unshifted_value + sol.Hbar)
    ok = d_spec <= 5e-3 and d_lp <= 5e-2 and gap <= 1e-9 and elapsed < 60
    verdict(2, ok, f"|cell - spectral| = {d_spec:.2e} (<= 5e-3), |LP + cell| = {d_lp:.2e} "
                   f"(<= 5e-2), gap = {gap:.1e} (<= 1e-9), runtime {elapsed:.2f}s (< 60s)")


def test_criterion_03_explicit_density(verdict, bench_sol, bench_dens):
    th = explicit_theta(bench_sol.u, 0.0, 1.0)
    rel = float(np.sum(np.abs(bench_dens.theta.values - th.values)) / np.sum(np.abs(th.values)))
    verdict(3, rel <= 1e-2, f"relative L1(theta, exp(-2u/sigma^2)) = {rel:.2e} (<= 1e-2)")


def test_criterion_04_identities(verdict, bench, bench_sol, bench_dens):
    rep = check_identities(bench, bench_sol, bench_dens, 1e-2)
    ok = rep.id1_err <= 1e-8 and rep.id2_err <= 1e-3 and rep.id3_gap <= 1e-2
    verdict(4, ok, f"id1 = {rep.id1_err:.2e} (<= 1e-8), id2 = {rep.id2_err:.2e} (<= 1e-3), "
                   f"id3 = {rep.id3_gap:.2e} (<= 1e-2)")


def test_criterion_05_bounds_and_convexity(verdict, bench):
    V = bench.potential.values
    bound_ok = True
    for sigma in (1.0, 0.5, 0.25, 0.1, 0.05):
        h = solve_cell(bench, 0.0, sigma).Hbar
        bound_ok &= V.min() <= h <= V.max()
    Ps = [-2.0, -1.0, 0.0, 1.0, 2.0]
    H = [p[1] for p in effective_surface(bench, Ps, 1.0)]
    worst = max(H[i] - 0.5 * (H[i - 1] + H[i + 1]) for i in range(1, 4))
    ok = bool(bound_ok) and worst <= 1e-3
    verdict(5, ok, f"min V <= Hbar(0) <= max V for sigma in 1..0.05: {bool(bound_ok)}; "
                   f"max midpoint excess = {worst:.2e} (<= 1e-3)")


def test_criterion_06_graph_support(verdict):
    model = cos_model(40)
    sol = solve_cell(model, 0.0, 1.0)
    res = solve_lp(build_lp(model, 1.0, 0.0, v_max=4.0, m=41, cell=sol))
    frac = graph_mass_fraction(res.measure, sol.drift.flat())
    verdict(6, frac >= 0.95, f"mass within one velocity cell of the drift = {frac:.4f} (>= 0.95)")


def test_criterion_07_rotation_vector(verdict, bench):
    t0 = time.perf_counter()
    sol = solve_cell(bench, 1.0, 0.8)
    target = -hbar_slope(bench, 1.0, 0.8, 0.01, u0=sol.u)[0]
    ens = simulate(sol, SimulationConfig(T=200.0, dt=1e-3, n_paths=256, seed=7))
    mean, err = rotation_vector(ens)
    elapsed = time.perf_counter() - t0
    z = abs(mean[0] - target) / err[0]
    ok = z <= 3.0 and elapsed < 300
    verdict(7, ok, f"mean displacement {mean[0]:.5f} vs {target:.5f}: {z:.2f} stderr (<= 3), "
                   f"runtime {elapsed:.1f}s (< 300s)")


def test_criterion_08_vanishing_viscosity(verdict):
    t0 = time.perf_counter()
    sw = sigma_sweep(cos_model(512), 0.0, [1.0, 0.5, 0.25, 0.1, 0.05])
    elapsed = time.perf_counter() - t0
    act = max(sw.action_gap)
    ok = abs(sw.Hbar[-1] - 1.0) <= 5e-2 and act <= 5e-3 and elapsed < 120
    verdict(8, ok, f"|Hbar_0.05 - 1| = {abs(sw.Hbar[-1] - 1.0):.2e} (<= 5e-2), "
                   f"max |action + Hbar| = {act:.1e} (<= 5e-3), runtime {elapsed:.2f}s (< 120s)")


def test_criterion_09_regularity_ratios(verdict, bench, bench_sol, bench_dens):
    est1 = [r for _, r in regularity_est1(bench_sol, bench_dens, range(1, 9))]
    pairs = [regularity_est2_est3(bench, 0.0, d, 1.0, sol=bench_sol, dens=bench_dens)
             for d in (0.05, 0.025, 0.0125)]
    est2 = [p[0] for p in pairs]
    est3 = [p[1] for p in pairs]
    s1 = max(est1) / min(est1)
    s2 = max(est2) / min(est2)
    ok = s1 <= 2.0 and s2 <= 2.0 and min(est3) >= 0.1
    verdict(9, ok, f"est1 spread {s1:.3f} (<= 2), est2 spread {s2:.4f} (<= 2), "
                   f"min est3 {min(est3):.3f} (>= 0.1)")


def test_criterion_10_determinism(verdict, tmp_path, capsys, monkeypatch):
    (tmp_path / "cos.json").write_text(json.dumps(
        {"kind": "mechanical", "dim": 1, "potential": {"terms": [{"k": [1], "cos": 1.0}]}}))
    (tmp_path / "cfg.json").write_text(json.dumps(
        {"model": "cos.json", "sigma": 1.0, "P": [0.0], "n": 64, "T": 5.0, "paths": 16,
         "seed": 7, "sigmas": [1.0, 0.5]}))
    outputs = []
    for run in ("a", "b"):
        monkeypatch.setenv("SM_OUT_DIR", str(tmp_path / run))
        main(["validate", "--config", str(tmp_path / "cfg.json")])
        capsys.readouterr()
        outputs.append({p.name: p.read_bytes() for p in sorted((tmp_path / run).iterdir())})
    same = outputs[0] == outputs[1] and "report.json" in outputs[0]
    verdict(10, same, f"{len(outputs[0])} artifacts byte-identical across two validate runs: {same}")
