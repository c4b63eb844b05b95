"""JSON / CSV serialisation of results.  Every JSON document carries ``format_version``."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any

import numpy as np

from .cell import CellSolution
from .errors import ModelError, StochMatherError
from .grid import ScalarField, TorusGrid, VectorField, field_rows
from .model import MECHANICAL, HamiltonianModel, model_from_dict

FORMAT_VERSION = 1


class ExportError(StochMatherError, OSError):
    pass


def model_to_dict(model: HamiltonianModel) -> dict:
    if model.definition:
        return dict(model.definition)
    out: dict[str, Any] = {"kind": model.kind, "dim": model.dim, "gamma_L": model.gamma_L}
    if model.Gamma is not None:
        out["Gamma"] = model.Gamma
    if model.kind == MECHANICAL:
        out["potential"] = {"samples": model.potential.flat().tolist()}
    else:
        out.update(nodes_per_axis=model.grid.nodes_per_axis, v_max=model.v_max, m=model.m,
                   L=model.table.tolist())
    return out


def _model_on(spec: dict, grid: TorusGrid) -> HamiltonianModel:
    if "samples" in spec.get("potential", {}):
        return model_from_dict(spec).on_grid(grid)
    return model_from_dict(spec, grid.nodes_per_axis)


def load_model(path: str | Path, nodes_per_axis: int | None = None) -> HamiltonianModel:
    """Read a model definition; sampled potentials are resampled onto ``nodes_per_axis``."""
    spec = read_json(path)
    if not isinstance(spec, dict):
        raise ModelError(f"{path}: model definition must be a JSON object")
    if nodes_per_axis is None:
        return model_from_dict(spec)
    try:
        dim = int(spec.get("dim", 1))
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{path}: malformed model definition: {exc}") from exc
    return _model_on(spec, TorusGrid(dim, nodes_per_axis))


def cell_to_dict(sol: CellSolution) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "type": "cell_solution",
        "model": model_to_dict(sol.model),
        "grid": {"dim": sol.grid.dim, "nodes_per_axis": sol.grid.nodes_per_axis},
        "P": sol.P.tolist(),
        "sigma": sol.sigma,
        "Hbar": sol.Hbar,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "method": sol.method,
        "u": sol.u.flat().tolist(),
        "drift": sol.drift.flat().tolist(),
    }


def cell_from_dict(data: dict) -> CellSolution:
    _check_version(data, "cell_solution")
    grid = TorusGrid(int(data["grid"]["dim"]), int(data["grid"]["nodes_per_axis"]))
    model = _model_on(data["model"], grid)
    return CellSolution(
        model=model,
        P=np.asarray(data["P"], dtype=float),
        sigma=float(data["sigma"]),
        u=ScalarField(grid, data["u"]),
        Hbar=float(data["Hbar"]),
        residual=float(data["residual"]),
        drift=VectorField(grid, data["drift"]),
        iterations=int(data["iterations"]),
        method=data.get("method", "policy"),
    )


def load_cell_solution(path: str | Path) -> CellSolution:
    return cell_from_dict(read_json(path))


def _check_version(data: dict, kind: str) -> None:
    if data.get("format_version") != FORMAT_VERSION:
        raise StochMatherError(f"unsupported format_version {data.get('format_version')!r}")
    if data.get("type") != kind:
        raise StochMatherError(f"expected a {kind} document, got {data.get('type')!r}")


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(data: dict) -> str:
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(data: dict, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps(data), encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise StochMatherError(f"{path} is not valid JSON: {exc}") from exc


def write_csv(header: list[str], rows, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) for v in row])
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    return header, rows


def read_field_csv(path: str | Path, grid: TorusGrid) -> ScalarField:
    header, rows = read_csv(path)
    return ScalarField(grid, rows[:, grid.dim])


def export(obj, path: str | Path) -> Path:
    """Write a result object: JSON for structured results, CSV for fields and tables."""
    from .diagnostics import SigmaSweep
    from .measure import IdentityReport, StationaryDensity
    from .report import ValidationReport

    path = Path(path)
    if isinstance(obj, CellSolution):
        return write_json(cell_to_dict(obj), path)
    if isinstance(obj, StationaryDensity):
        return write_csv(*field_rows(obj.theta), path)
    if isinstance(obj, (ScalarField, VectorField)):
        return write_csv(*field_rows(obj), path)
    if isinstance(obj, SigmaSweep):
        return write_csv(["sigma", "Hbar", "u_sup_diff", "theta_l1"], obj.rows(), path)
    if isinstance(obj, ValidationReport):
        return write_json(obj.to_dict(), path)
    if isinstance(obj, IdentityReport):
        return write_json({"format_version": FORMAT_VERSION, "type": "identity_report",
                           **obj.to_dict()}, path)
    if isinstance(obj, dict):
        return write_json({"format_version": FORMAT_VERSION, **obj}, path)
    if hasattr(obj, "to_dict"):
        return write_json({"format_version": FORMAT_VERSION, "type": type(obj).__name__,
                           **obj.to_dict()}, path)
    raise TypeError(f"no exporter for {type(obj).__name__}")
