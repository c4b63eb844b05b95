"""
Cross-route validation: run the cell, spectral, LP and simulation routes
on one configuration and reconcile their values of ``Hbar``.

Every check is recorded with the tolerance it was judged against.  A stage
that raises is recorded in ``errors`` and its checks are marked failed; the
remaining stages still run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import io
from .cell import CellSolution, hbar_slope, semiconcavity_bound, solve_cell
from .diagnostics import (est1_growth_flag, regularity_cap, regularity_est1,
                          regularity_est2_est3, sigma_sweep)
from .errors import StochMatherError
from .grid import TorusGrid, integrate_vector
from .lp import build_lp, duality_gap, graph_mass_fraction, solve_lp
from .measure import action, check_identities, density_gradient_norm, invariant_density
from .model import MECHANICAL, HamiltonianModel, model_from_dict
from .sim import SimulationConfig, hbar_estimate, rotation_vector, simulate
from .spectral import explicit_theta, principal_eigenvalue

REPORT_TYPE = "validation_report"

# name -> (default, meaning)
TOLERANCES: dict[str, tuple[float, str]] = {
    "cell_spectral": (5e-3, "|Hbar_cell - lambda|"),
    "cell_lp": (5e-2, "|LP value (unshifted) + Hbar_cell|"),
    "lp_gap": (1e-9, "LP primal minus dual objective"),
    "cell_simulation_stderr": (4.0, "|Hbar_sim - Hbar_cell| in standard errors"),
    "cell_simulation_abs": (5e-3, "absolute allowance added to the simulation bands"),
    "rotation_stderr": (3.0, "|rotation - integral drift theta| in standard errors"),
    "theta_explicit_l1": (1e-2, "relative L1 gap of theta to exp(-2u/sigma^2) when P = 0"),
    "id1": (1e-8, "largest |integral (A phi) theta| over Fourier modes"),
    "id2": (1e-3, "|integral D_x H theta|"),
    "id3": (1e-2, "|integral D_p H theta - central difference of Hbar|"),
    "graph_mass": (0.95, "minimum LP mass within one velocity cell of the drift"),
    "est1_spread": (2.0, "max/min of est1 ratios over |y|"),
    "est2_spread": (2.0, "max/min of est2 ratios as |P - P'| halves"),
    "est3_min": (0.1, "minimum est3 ratio"),
    "sweep_limit": (5e-2, "|Hbar at the smallest sigma - analytic sigma = 0 value|"),
    "sweep_action": (5e-3, "|integral (L + P v) theta + Hbar| along the sweep"),
}

EST1_OFFSETS = (1, 2, 4, 8)
EST2_STEPS = (0.05, 0.025, 0.0125)


@dataclass(frozen=True)
class RunConfig:
    """Inputs of ``validate``.  ``model`` is a path (resolved against ``base_dir``) or an inline definition."""

    model: Any
    sigma: float = 1.0
    P: tuple[float, ...] = (0.0,)
    n: int = 256
    lp_n: int | None = None  # default min(n, 40)
    m: int = 41
    v_max: float = 4.0
    tol: float = 1e-10
    dP: float = 1e-2
    T: float = 50.0
    dt: float | None = None  # default min(1e-3, 0.9 h / (2 max|drift|))
    paths: int = 64
    seed: int = 7
    sigmas: tuple[float, ...] | None = None
    sweep_n: int | None = None
    regularity: bool = True
    concurrent: bool = False
    out_dir: str = "."
    tolerances: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        unknown = set(self.tolerances) - set(TOLERANCES)
        if unknown:
            raise ValueError(f"unknown tolerances: {sorted(unknown)}")
        for k, v in self.tolerances.items():
            if not float(v) > 0:
                raise ValueError(f"tolerance {k} must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.tol <= 0 or self.dP <= 0 or self.T <= 0 or self.paths < 2:
            raise ValueError("tol, dP, T must be positive and paths >= 2")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")

    @classmethod
    def from_mapping(cls, data: dict, base_dir: str | Path = ".") -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(data)
        if "model" not in d:
            raise ValueError("config needs a model")
        if "P" in d:
            d["P"] = tuple(float(p) for p in np.atleast_1d(d["P"]))
        if d.get("sigmas") is not None:
            d["sigmas"] = tuple(float(s) for s in d["sigmas"])
        d.setdefault("base_dir", str(base_dir))
        return cls(**d)

    def tolerance(self, name: str) -> float:
        return float(self.tolerances.get(name, TOLERANCES[name][0]))

    @property
    def lp_nodes(self) -> int:
        return self.lp_n if self.lp_n is not None else min(self.n, 40)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d.pop("out_dir")
        d["P"] = list(self.P)
        d["sigmas"] = None if self.sigmas is None else list(self.sigmas)
        d["tolerances"] = {k: self.tolerance(k) for k in TOLERANCES}
        return d

    def load_model(self, nodes_per_axis: int) -> HamiltonianModel:
        if isinstance(self.model, dict):
            spec = self.model
            if "samples" in spec.get("potential", {}):
                return model_from_dict(spec).on_grid(TorusGrid(int(spec.get("dim", 1)),
                                                               nodes_per_axis))
            return model_from_dict(spec, nodes_per_axis)
        path = Path(self.model)
        if not path.is_absolute():
            path = Path(self.base_dir) / path
        return io.load_model(path, nodes_per_axis)


@dataclass
class ValidationReport:
    config: dict
    routes: dict = field(default_factory=dict)
    deltas: list = field(default_factory=list)
    identities: dict = field(default_factory=dict)
    regularity: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and bool(self.criteria) and all(c["passed"] for c in self.criteria)

    def check(self, name: str, value, tolerance: float, op: str = "<=", *,
              delta: bool = False) -> bool:
        value = None if value is None or np.isnan(value) else float(value)
        if value is None or not np.isfinite(value):
            ok = False
        elif op == "<=":
            ok = value <= tolerance
        else:
            ok = value >= tolerance
        entry = {"name": name, "value": value, "tolerance": float(tolerance), "op": op,
                 "passed": bool(ok)}
        self.criteria.append(entry)
        if delta:
            self.deltas.append(entry)
        return ok

    def fail(self, stage: str, exc: Exception, checks: tuple[str, ...] = ()) -> None:
        self.errors.append({"stage": stage, "type": type(exc).__name__, "message": str(exc)})
        for name in checks:
            self.criteria.append({"name": name, "value": None, "tolerance": None, "op": None,
                                  "passed": False})

    def to_dict(self) -> dict:
        return {
            "format_version": io.FORMAT_VERSION,
            "type": REPORT_TYPE,
            "passed": self.passed,
            "config": self.config,
            "routes": self.routes,
            "deltas": self.deltas,
            "identities": self.identities,
            "regularity": self.regularity,
            "sweep": self.sweep,
            "criteria": self.criteria,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ValidationReport":
        io._check_version(data, REPORT_TYPE)
        names = [f.name for f in fields(cls)]
        return cls(**{k: data[k] for k in names})


def load_report(path: str | Path) -> ValidationReport:
    return ValidationReport.from_dict(io.read_json(path))


def _auto_dt(sol: CellSolution, dt: float | None) -> float:
    if dt is not None:
        return dt
    reach = float(np.max(np.abs(sol.drift.components)))
    if reach == 0:
        return 1e-3
    return min(1e-3, 0.9 * sol.grid.spacing / (2.0 * reach))


def run_validate(cfg: RunConfig, *, write: bool = True) -> ValidationReport:
    """Cell, spectral (mechanical only), measure, LP, simulation, optional sweep."""
    rep = ValidationReport(config=cfg.to_dict())
    out = Path(cfg.out_dir)
    P = np.asarray(cfg.P, dtype=float)
    tol = cfg.tolerance

    try:
        model = cfg.load_model(cfg.n)
        sol = solve_cell(model, P, cfg.sigma, tol=cfg.tol)
    except StochMatherError as exc:
        rep.fail("cell", exc, ("cell_solve",))
        _write(rep, out, write)
        return rep
    rep.routes["cell"] = {"Hbar": sol.Hbar, "residual": sol.residual,
                          "iterations": sol.iterations, "method": sol.method,
                          "semiconcavity": semiconcavity_bound(sol)}
    rep.check("cell_residual", sol.residual, max(cfg.tol, 1e-12 * cfg.sigma**2 / sol.grid.spacing**2))
    if P.size == sol.grid.dim and np.all(P == 0) and model.kind == MECHANICAL:
        V = model.potential.values
        rep.check("bounds_lower", float(V.min()) - sol.Hbar, 0.0)
        rep.check("bounds_upper", sol.Hbar - float(V.max()), 0.0)
    if write:
        io.export(sol, out / "cell.json")

    def spectral_stage():
        return principal_eigenvalue(model.potential, P, cfg.sigma)

    def lp_stage():
        lp_model = model.on_grid(TorusGrid(model.dim, cfg.lp_nodes))
        lp_cell = solve_cell(lp_model, P, cfg.sigma, tol=cfg.tol)
        inst = build_lp(lp_model, cfg.sigma, P, v_max=cfg.v_max, m=cfg.m, cell=lp_cell)
        return inst, lp_cell, solve_lp(inst)

    stages = {"lp": lp_stage}
    if model.kind == MECHANICAL:
        stages["spectral"] = spectral_stage
    results: dict[str, Any] = {}
    if cfg.concurrent:
        with ThreadPoolExecutor(max_workers=len(stages)) as pool:
            futures = {k: pool.submit(f) for k, f in stages.items()}
            for k, fut in futures.items():
                results[k] = _capture(fut.result)
    else:
        for k, f in stages.items():
            results[k] = _capture(f)

    # spectral
    if "spectral" in results:
        ok, eig = results["spectral"]
        if ok:
            rep.routes["spectral"] = {"lambda": eig.lam, "residual": eig.residual,
                                      "bracket": list(eig.bounds), "iterations": eig.iterations}
            rep.check("cell_spectral", abs(sol.Hbar - eig.lam), tol("cell_spectral"), delta=True)
        else:
            rep.fail("spectral", eig, ("cell_spectral",))

    # measure and identities
    dens = None
    try:
        dens = invariant_density(sol.drift, cfg.sigma)
        if write:
            io.export(dens, out / "density.csv")
        ident = check_identities(model, sol, dens, cfg.dP, tol=cfg.tol)
        act = action(model, sol, dens)
        rep.identities = {**ident.to_dict(), "action": act, "action_gap": abs(act + sol.Hbar),
                          "dP": cfg.dP, "theta_w12": density_gradient_norm(dens)}
        rep.check("id1", ident.id1_err, tol("id1"))
        rep.check("id2", ident.id2_err, tol("id2"))
        rep.check("id3", ident.id3_gap, tol("id3"))
        if model.kind == MECHANICAL and np.all(P == 0):
            theta_e = explicit_theta(sol.u, P, cfg.sigma)
            l1 = float(np.sum(np.abs(theta_e.values - dens.theta.values)) * sol.grid.cell_volume)
            rep.identities["theta_explicit_l1"] = l1
            rep.check("theta_explicit_l1", l1, tol("theta_explicit_l1"))
    except StochMatherError as exc:
        rep.fail("measure", exc, ("id1", "id2", "id3"))

    # LP
    ok, lp_out = results["lp"]
    if ok:
        inst, lp_cell, res = lp_out
        gap = abs(duality_gap(inst, res.value, res.dual_values))
        mass = graph_mass_fraction(res.measure, lp_cell.drift.flat())
        rep.routes["lp"] = {"Hbar": -res.unshifted_value, "value": res.value, "shift": res.shift,
                            "unshifted_value": res.unshifted_value, "gap": gap,
                            "pivots": res.pivots, "n": inst.grid.nodes_per_axis, "m": inst.m,
                            "v_max": inst.v_max, "graph_mass": mass,
                            "support": int(np.count_nonzero(res.measure.masses > 1e-12)),
                            "Hbar_cell_same_grid": lp_cell.Hbar}
        rep.check("cell_lp", abs(res.unshifted_value + sol.Hbar), tol("cell_lp"), delta=True)
        rep.check("lp_gap", gap, tol("lp_gap"))
        rep.check("graph_mass", mass, tol("graph_mass"), ">=")
        if write:
            io.export(res.measure.x_marginal(), out / "lp_marginal.csv")
    else:
        rep.fail("lp", lp_out, ("cell_lp", "lp_gap", "graph_mass"))

    # simulation
    try:
        sim_cfg = SimulationConfig(cfg.T, _auto_dt(sol, cfg.dt), cfg.paths, cfg.seed)
        ens = simulate(sol, sim_cfg)
        h_sim, h_err = hbar_estimate(ens)
        rot, rot_err = rotation_vector(ens)
        expected = (integrate_vector(sol.drift, dens.theta) if dens is not None
                    else -hbar_slope(model, P, cfg.sigma, cfg.dP, tol=cfg.tol, u0=sol.u))
        rep.routes["simulation"] = {"Hbar": h_sim, "stderr": h_err, "dt": sim_cfg.dt,
                                    "rotation": rot.tolist(), "rotation_stderr": rot_err.tolist(),
                                    "expected_rotation": np.asarray(expected).tolist()}
        band = tol("cell_simulation_stderr") * h_err + tol("cell_simulation_abs")
        rep.check("cell_simulation", abs(h_sim - sol.Hbar), band, delta=True)
        for a in range(sol.grid.dim):
            rep.check(f"rotation_{a}", abs(rot[a] - expected[a]),
                      tol("rotation_stderr") * rot_err[a] + tol("cell_simulation_abs"))
        if write:
            io.write_csv([f"x{a}" for a in range(sol.grid.dim)], ens.endpoints,
                         out / "endpoints.csv")
    except StochMatherError as exc:
        rep.fail("simulation", exc, ("cell_simulation", "rotation_0"))

    # regularity
    if cfg.regularity and dens is not None:
        try:
            est1 = regularity_est1(sol, dens, EST1_OFFSETS)
            pairs = [regularity_est2_est3(model, P, P + step, cfg.sigma, tol=cfg.tol, sol=sol,
                                          dens=dens) for step in EST2_STEPS]
            est2 = [p[0] for p in pairs]
            est3 = [p[1] for p in pairs]
            r1 = [r for _, r in est1]
            rep.regularity = {"est1_ratios": [list(r) for r in est1],
                              "est1_flagged": est1_growth_flag(est1),
                              "est2_ratios": est2, "est3_ratios": est3,
                              "steps": list(EST2_STEPS), "gamma_L": model.gamma_L,
                              "Gamma": model.convexity_upper, "cap": regularity_cap(model)}
            floor = 1e-12 * max(1.0, rep.regularity["cap"])
            rep.check("est1_spread", _spread(r1, floor), tol("est1_spread"))
            rep.check("est2_spread", _spread(est2, floor), tol("est2_spread"))
            rep.check("est3_min", min(est3), tol("est3_min"), ">=")
        except StochMatherError as exc:
            rep.fail("regularity", exc, ("est1_spread", "est2_spread", "est3_min"))

    # sweep
    if cfg.sigmas:
        try:
            sweep_model = model.on_grid(TorusGrid(model.dim, cfg.sweep_n or cfg.n))
            sw = sigma_sweep(sweep_model, P, cfg.sigmas, tol=cfg.tol)
            rep.sweep = {"sigmas": sw.sigmas, "Hbar": sw.Hbar, "u_sup_diff": sw.u_sup_diff,
                         "theta_l1": sw.theta_l1, "action_gap": sw.action_gap,
                         "increments": sw.increments, "analytic_limit": sw.analytic_limit,
                         "limit_gap": sw.limit_gap}
            rep.check("sweep_action", max(sw.action_gap), tol("sweep_action"))
            if sw.limit_gap is not None:
                rep.check("sweep_limit", sw.limit_gap, tol("sweep_limit"))
            if write:
                io.export(sw, out / "sweep.csv")
        except (StochMatherError, ValueError) as exc:
            rep.fail("sweep", exc, ("sweep_action",))

    _write(rep, out, write)
    return rep


def _spread(values, floor: float) -> float:
    """max/min of positive ratios; ratios at round-off level (below ``floor``) count as zero."""
    v = np.asarray(values, dtype=float)
    if np.all(v <= floor):
        return 1.0
    if np.any(v <= floor):
        return float("inf")
    return float(v.max() / v.min())


def _capture(fn):
    try:
        return True, fn()
    except StochMatherError as exc:
        return False, exc


def _write(rep: ValidationReport, out: Path, write: bool) -> None:
    if write:
        io.export(rep, out / "report.json")
