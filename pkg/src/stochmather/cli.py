"""Command line interface.

Every subcommand accepts ``--config file.json`` whose keys mirror the long
flag names (dashes or underscores); flags given on the command line win.
Outputs default to ``$SM_OUT_DIR`` (or the working directory).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .cell import solve_cell
from .diagnostics import sigma_sweep
from .errors import ModelError, StochMatherError
from .lp import build_lp, duality_gap, graph_mass_fraction, solve_lp
from .measure import check_identities, invariant_density
from .model import MECHANICAL
from .report import RunConfig, run_validate
from .sim import SimulationConfig, hbar_estimate, rotation_vector, simulate
from .spectral import eigen_cell_residual, principal_eigenvalue

DEFAULTS = {
    "cell": {"sigma": 1.0, "P": "0", "n": 256, "tol": 1e-10, "out": "cell.json"},
    "spectral": {"sigma": 1.0, "P": "0", "n": 256, "tol": 1e-12, "out": "spectral.json"},
    "measure": {"dP": 1e-2, "out": "density.csv", "report": "identities.json",
                "identities": False},
    "lp": {"sigma": 1.0, "P": "0", "n": 40, "m": 41, "vmax": 4.0, "tol": 1e-9,
           "out": "lp.json", "csv": "lp_marginal.csv"},
    "simulate": {"T": 200.0, "dt": 1e-3, "paths": 256, "seed": 7, "out": "simulate.json",
                 "endpoints": None},
    "sweep": {"P": "0", "sigmas": "1,0.5,0.25,0.1,0.05", "n": 512, "tol": 1e-10,
              "out": "sweep.csv"},
    "validate": {"out": "report.json"},
}


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(t) for t in str(text).split(",") if t.strip()]


def _out_dir() -> Path:
    return Path(os.environ.get("SM_OUT_DIR", "."))


def _resolve(args, name: str) -> Path:
    p = Path(getattr(args, name))
    return p if p.is_absolute() else _out_dir() / p


def _emit(data: dict) -> None:
    sys.stdout.write(io.dumps(data))


def cmd_cell(args) -> int:
    model = io.load_model(args.model, args.n)
    sol = solve_cell(model, _floats(args.P), args.sigma, tol=args.tol)
    path = io.export(sol, _resolve(args, "out"))
    _emit({"Hbar": sol.Hbar, "residual": sol.residual, "iterations": sol.iterations,
           "out": str(path)})
    return 0


def cmd_spectral(args) -> int:
    model = io.load_model(args.model, args.n)
    if model.kind != MECHANICAL:
        raise ModelError("the spectral route needs a mechanical model")
    eig = principal_eigenvalue(model.potential, _floats(args.P), args.sigma, tol=args.tol)
    data = {"type": "eigen_solution", "lambda": eig.lam, "sigma": eig.sigma,
            "P": eig.P.tolist(), "residual": eig.residual, "cell_residual": eigen_cell_residual(eig),
            "bracket": list(eig.bounds), "iterations": eig.iterations,
            "psi": eig.psi.flat().tolist()}
    path = io.export(data, _resolve(args, "out"))
    _emit({"lambda": eig.lam, "residual": eig.residual, "out": str(path)})
    return 0


def cmd_measure(args) -> int:
    sol = io.load_cell_solution(args.cell)
    dens = invariant_density(sol.drift, sol.sigma)
    out = {"density": str(io.export(dens, _resolve(args, "out"))), "residual": dens.residual}
    if args.identities:
        rep = check_identities(sol.model, sol, dens, args.dP)
        out["identities"] = rep.to_dict()
        out["report"] = str(io.export(rep, _resolve(args, "report")))
    _emit(out)
    return 0


def cmd_lp(args) -> int:
    model = io.load_model(args.model, args.n)
    P = _floats(args.P)
    cell = solve_cell(model, P, args.sigma)
    inst = build_lp(model, args.sigma, P, v_max=args.vmax, m=args.m, cell=cell)
    res = solve_lp(inst, tol=args.tol)
    masses = res.measure.masses
    data = {"type": "lp_result", "value": res.value, "shift": res.shift,
            "unshifted_value": res.unshifted_value, "Hbar": -res.unshifted_value,
            "gap": duality_gap(inst, res.value, res.dual_values), "pivots": res.pivots,
            "n_variables": inst.n_variables, "n_constraints": inst.n_constraints,
            "support": int(np.count_nonzero(masses > 1e-12)),
            "x_nodes_with_mass": int(np.count_nonzero(masses.sum(axis=1) > 1e-12)),
            "graph_mass": graph_mass_fraction(res.measure, cell.drift.flat()),
            "complementary_slackness": res.complementary_slackness,
            "dual_infeasibility": res.dual_infeasibility}
    data["out"] = str(io.export(data, _resolve(args, "out")))
    data["csv"] = str(io.export(res.measure.x_marginal(), _resolve(args, "csv")))
    _emit(data)
    return 0


def cmd_simulate(args) -> int:
    sol = io.load_cell_solution(args.cell)
    ens = simulate(sol, SimulationConfig(args.T, args.dt, args.paths, args.seed))
    rot, err = rotation_vector(ens)
    h, h_err = hbar_estimate(ens)
    data = {"type": "simulation_summary", "T": args.T, "dt": args.dt, "paths": args.paths,
            "seed": args.seed, "rotation": rot.tolist(), "rotation_stderr": err.tolist(),
            "Hbar": h, "Hbar_stderr": h_err}
    data["out"] = str(io.export(data, _resolve(args, "out")))
    if args.endpoints:
        io.write_csv([f"x{a}" for a in range(sol.grid.dim)], ens.endpoints,
                     _resolve(args, "endpoints"))
    _emit(data)
    return 0


def cmd_sweep(args) -> int:
    model = io.load_model(args.model, args.n)
    sw = sigma_sweep(model, _floats(args.P), _floats(args.sigmas), tol=args.tol)
    path = io.export(sw, _resolve(args, "out"))
    _emit({"sigmas": sw.sigmas, "Hbar": sw.Hbar, "increments": sw.increments,
           "action_gap": sw.action_gap, "analytic_limit": sw.analytic_limit,
           "limit_gap": sw.limit_gap, "out": str(path)})
    return 0


VALIDATE_KEYS = ("model", "sigma", "P", "n", "lp_n", "m", "v_max", "tol", "dP", "T", "dt",
                 "paths", "seed", "sigmas", "sweep_n", "regularity", "concurrent")


def cmd_validate(args, config: dict, base_dir: Path) -> int:
    data = {("v_max" if k == "vmax" else k): v for k, v in config.items() if k != "out"}
    if args.model is not None:
        args.model = str(Path(args.model).resolve())
    for key in VALIDATE_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    for key in ("P", "sigmas"):
        if isinstance(data.get(key), str):
            data[key] = _floats(data[key])
    data.setdefault("out_dir", str(_out_dir()))
    out = config.get("out", DEFAULTS["validate"]["out"]) if args.out is None else args.out
    cfg = RunConfig.from_mapping(data, base_dir)
    rep = run_validate(cfg, write=True)
    out_path = Path(out) if Path(out).is_absolute() else Path(cfg.out_dir) / out
    if out_path.name != "report.json" or out_path.parent != Path(cfg.out_dir):
        io.export(rep, out_path)
    for c in rep.criteria:
        sys.stderr.write(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: "
                         f"{c['value']} {c['op'] or ''} {c['tolerance']}\n")
    _emit({"passed": rep.passed, "report": str(out_path), "errors": rep.errors})
    return 0 if rep.passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochmather", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=None)
        p.add_argument("--config", help="JSON file whose keys mirror the flags")
        p.add_argument("--out")
        return p

    p = add("cell", "solve the cell problem")
    p.add_argument("--model")
    p.add_argument("--sigma", type=float)
    p.add_argument("--P", help="comma separated momentum")
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)

    p = add("spectral", "principal eigenvalue route (mechanical models)")
    p.add_argument("--model")
    p.add_argument("--sigma", type=float)
    p.add_argument("--P")
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)

    p = add("measure", "stationary density of a saved cell solution")
    p.add_argument("--cell")
    p.add_argument("--identities", action="store_true", default=None)
    p.add_argument("--dP", type=float)
    p.add_argument("--report")

    p = add("lp", "occupation-measure linear program")
    p.add_argument("--model")
    p.add_argument("--sigma", type=float)
    p.add_argument("--P")
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--vmax", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--csv")

    p = add("simulate", "Monte-Carlo paths of the optimal diffusion")
    p.add_argument("--cell")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--endpoints")

    p = add("sweep", "vanishing-viscosity sweep")
    p.add_argument("--model")
    p.add_argument("--P")
    p.add_argument("--sigmas")
    p.add_argument("--n", type=int)
    p.add_argument("--tol", type=float)

    p = add("validate", "run all routes and write a reconciliation report")
    p.add_argument("--model")
    p.add_argument("--sigma", type=float)
    p.add_argument("--P")
    p.add_argument("--n", type=int)
    p.add_argument("--lp-n", dest="lp_n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--vmax", dest="v_max", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--dP", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigmas")
    p.add_argument("--sweep-n", dest="sweep_n", type=int)
    p.add_argument("--no-regularity", dest="regularity", action="store_false", default=None)
    p.add_argument("--concurrent", action="store_true", default=None)
    return parser


COMMANDS = {"cell": cmd_cell, "spectral": cmd_spectral, "measure": cmd_measure, "lp": cmd_lp,
            "simulate": cmd_simulate, "sweep": cmd_sweep}


def _load_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path(".")
    data = io.read_json(path)
    if not isinstance(data, dict):
        raise StochMatherError(f"{path}: config must be a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}, Path(path).resolve().parent


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, base_dir = _load_config(args.config)
        if args.command == "validate":
            return cmd_validate(args, config, base_dir)
        defaults = DEFAULTS[args.command]
        for key, default in defaults.items():
            if getattr(args, key, None) is None:
                setattr(args, key, config.get(key, default))
        for key in ("model", "cell"):
            if hasattr(args, key):
                val = getattr(args, key)
                if val is None:
                    val = config.get(key)
                if val is None:
                    raise StochMatherError(f"--{key} is required")
                if args.config and not Path(val).is_absolute() and getattr(args, key) is None:
                    val = str(base_dir / val)
                setattr(args, key, val)
        return COMMANDS[args.command](args)
    except (StochMatherError, ValueError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return 2


if __name__ == "__main__":
    sys.exit(main())
