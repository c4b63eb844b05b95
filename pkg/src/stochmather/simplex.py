"""Dense two-phase revised simplex method with Bland's anti-cycling rule.

Pricing uses the most negative reduced cost while the objective keeps
decreasing.  As soon as ``stall`` consecutive pivots are degenerate, both
the entering and the leaving choice switch to Bland's lowest-index rule
and stay there until a pivot makes strict progress.  Bland's rule cannot
cycle, and every non-degenerate pivot strictly lowers the objective, so
the method terminates.  ``pricing="bland"`` uses Bland's rule throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import Infeasible, PivotLimit

log = logging.getLogger(__name__)

STALL = 10


class Unbounded(Exception):
    pass


@dataclass(frozen=True)
class SimplexResult:
    x: np.ndarray
    value: float
    dual: np.ndarray
    reduced_costs: np.ndarray
    basis: np.ndarray
    pivots: int


def _phase(A, b, c, basis, tol, max_pivots, pivots, pricing):
    """Run simplex iterations from a feasible basis until optimal."""
    m, n = A.shape
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    degenerate_run = 0
    while True:
        lu = sla.lu_factor(A[:, basis])
        xb = sla.lu_solve(lu, b)
        y = sla.lu_solve(lu, c[basis], trans=1)
        rc = c - A.T @ y
        rc[is_basic] = 0.0
        candidates = np.flatnonzero(rc < -tol)
        if candidates.size == 0:
            return basis, xb, y, rc, pivots
        if pivots >= max_pivots:
            raise PivotLimit(f"simplex exceeded {max_pivots} pivots")
        bland = pricing == "bland" or degenerate_run >= STALL
        if bland:
            enter = int(candidates[0])
        else:
            enter = int(candidates[np.argmin(rc[candidates])])
        d = sla.lu_solve(lu, A[:, enter])
        pos = d > tol
        if not np.any(pos):
            raise Unbounded(f"column {enter} is an unbounded direction")
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(xb[pos], 0.0) / d[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, best))
        if bland:
            leave_row = int(ties[np.argmin(basis[ties])])
        else:
            leave_row = int(ties[np.argmax(d[ties])])
        degenerate_run = degenerate_run + 1 if best <= tol else 0
        is_basic[basis[leave_row]] = False
        basis[leave_row] = enter
        is_basic[enter] = True
        pivots += 1


def simplex(c, A, b, tol: float = 1e-10, max_pivots: int = 100000, *,
            basis=None, pricing: str = "dantzig") -> SimplexResult:
    """Minimise ``c @ x`` subject to ``A x = b``, ``x >= 0``.

    ``A`` must have full row rank.  If ``basis`` (one column index per row,
    primal feasible) is supplied phase one is skipped.  Otherwise phase one
    starts from an all-artificial basis and pivots any artificial left at
    zero out of the basis before phase two.
    """
    if pricing not in ("dantzig", "bland"):
        raise ValueError(f"unknown pricing rule {pricing!r}")
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0
    pivots = 0

    if basis is not None:
        basis = np.array(basis, dtype=int)
        xb = np.linalg.solve(A[:, basis], b)
        if xb.min() < -1e3 * tol:
            raise ValueError("supplied basis is not primal feasible")
    else:
        basis = _phase_one(A, b, tol, max_pivots, pricing)
        pivots = basis.pivots
        basis = basis.basis

    try:
        basis, xb, y, rc, pivots = _phase(A, b, c, basis, tol, max_pivots, pivots, pricing)
    except Unbounded as exc:
        raise Infeasible(f"LP is unbounded: {exc}") from exc
    x = np.zeros(n)
    x[basis] = np.maximum(xb, 0.0)
    y = np.where(flip, -y, y)
    return SimplexResult(x, float(c @ x), y, rc, basis.copy(), pivots)


@dataclass
class _PhaseOne:
    basis: np.ndarray
    pivots: int


def _phase_one(A, b, tol, max_pivots, pricing) -> _PhaseOne:
    m, n = A.shape
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    try:
        basis, xb, _, _, pivots = _phase(A1, b, c1, basis, tol, max_pivots, 0, pricing)
    except Unbounded as exc:  # phase one is bounded below by zero
        raise Infeasible(str(exc)) from exc
    infeas = float(np.sum(xb[basis >= n]))
    if infeas > 1e3 * tol * max(1.0, float(np.abs(b).max())):
        raise Infeasible(f"phase one ended with artificial mass {infeas:.3e}")
    for row in np.flatnonzero(basis >= n):
        lu = sla.lu_factor(A1[:, basis])
        tableau_row = sla.lu_solve(lu, np.eye(m)[row], trans=1) @ A
        nonbasic = np.setdiff1d(np.arange(n), basis)
        choices = nonbasic[np.abs(tableau_row[nonbasic]) > 1e-9]
        if choices.size == 0:
            raise Infeasible("constraint matrix is rank deficient")
        basis[row] = int(choices[0])
        pivots += 1
    log.debug("phase one done after %d pivots", pivots)
    return _PhaseOne(basis, pivots)
