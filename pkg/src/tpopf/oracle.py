"""Brute-force and finite-difference cross-checks for the dispatch problems.

Nothing here is a production solver: grid_search exhaustively scans inverter
setpoint combinations with one power flow per point, and
finite_difference_check compares analytic derivatives against central
differences. Both exist so the optimization path can be validated
independently on small cases.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .admittance import SystemAdmittance, assemble_ybus
from .metrics import bus_unbalance, network_losses
from .netmodel import Network
from .opf import ProblemKind, UnbalanceLimits, inverter_q_bounds
from .powerflow import (FlowEvaluator, InjectionSet, PowerFlowError,
                        solve_powerflow)

MAX_GRID_POINTS = 10_000_000


class GridError(RuntimeError):
    """Grid too large, or no point produced a converged power flow."""


@dataclass(frozen=True)
class GridSpec:
    """Per-inverter setpoint grid description.

    Every inverter gets n_points values linearly spaced over its reactive
    capability, optionally clipped to [q_min, q_max] (kVAR). 0 kVAR and the
    exact range ends are always included.
    """

    n_points: int = 11
    q_min: float | None = None
    q_max: float | None = None

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")

    def points_for(self, lo: float, hi: float) -> np.ndarray:
        """Grid values [kVAR] for one inverter with capability [lo, hi]."""
        if self.q_min is not None:
            lo = max(lo, self.q_min)
        if self.q_max is not None:
            hi = min(hi, self.q_max)
        if hi < lo:
            raise ValueError("grid range is empty")
        pts = np.linspace(lo, hi, self.n_points)
        if lo <= 0.0 <= hi:
            pts = np.union1d(pts, [0.0])
        return np.unique(pts)


@dataclass
class GridResult:
    """Outcome of an exhaustive setpoint scan."""

    q_kvar: np.ndarray
    objective: float
    evaluated: int
    failed: int
    feasible: int


def _score(kind: ProblemKind, net: Network, sysadm, state,
           limits: UnbalanceLimits) -> tuple[float, bool]:
    """(objective value, feasible) of a solved state, matching opf.solve units."""
    if kind in (ProblemKind.P1_LOSS, ProblemKind.P5_LOSS_VU):
        val = network_losses(sysadm, state) / net.s_base
    else:
        per_bus = bus_unbalance(net, sysadm, state)
        if kind is ProblemKind.P2_VUF:
            val = sum(v[0] ** 2 for v in per_bus.values())
        elif kind is ProblemKind.P3_LVUR:
            val = sum(v[1] for v in per_bus.values())
        else:
            val = sum(v[2] for v in per_bus.values())
    feasible = True
    if kind is ProblemKind.P5_LOSS_VU:
        per_bus = bus_unbalance(net, sysadm, state)
        tol = 1e-9
        for vuf_v, lvur_v, pvur_v in per_bus.values():
            if (vuf_v > limits.u_vuf + tol or pvur_v > limits.u_pvur + tol
                    or lvur_v > limits.u_lvur + tol):
                feasible = False
                break
        bus_of = {b.id: b for b in net.buses}
        for idx, (bid, _) in enumerate(sysadm.nodes):
            b = bus_of[bid]
            if not (b.v_min - tol <= state.vm[idx] <= b.v_max + tol):
                feasible = False
                break
    return float(val), feasible


def grid_search(net: Network, kind: ProblemKind, grid: GridSpec,
                limits: UnbalanceLimits | None = None,
                sysadm: SystemAdmittance | None = None) -> GridResult:
    """Exhaustive scan of the inverter setpoint product.

    Each Cartesian grid point gets one power flow; the selected objective is
    scored on the solved state. The scan order is lexicographic in the
    setpoints and ties keep the first (lexicographically smallest) point, so
    results are deterministic. P5 scores losses and drops points whose state
    violates the unbalance limits.

    Raises:
        GridError: grid larger than the guard, or every point diverged.
    """
    limits = limits or UnbalanceLimits()
    sysadm = sysadm or assemble_ybus(net)
    ev = FlowEvaluator(net, sysadm)

    axes = []
    for inv in net.inverters:
        lo, hi = inverter_q_bounds(inv)
        axes.append(grid.points_for(lo, hi))
    total = 1
    for ax in axes:
        total *= ax.size
    if total > MAX_GRID_POINTS:
        raise GridError(f"grid has {total} points, guard is {MAX_GRID_POINTS}")

    best_val = math.inf
    best_q: np.ndarray | None = None
    evaluated = failed = feasible_count = 0
    warm = None
    for combo in itertools.product(*axes) if axes else [()]:
        q_kvar = np.array(combo, dtype=float)
        inj = InjectionSet.from_setpoints(net, sysadm, q_kvar / net.s_base)
        evaluated += 1
        try:
            res = solve_powerflow(net, sysadm, inj, evaluator=ev, start=warm)
        except PowerFlowError:
            failed += 1
            warm = None
            continue
        warm = res.state
        val, ok = _score(kind, net, sysadm, res.state, limits)
        if not ok:
            continue
        feasible_count += 1
        if val < best_val:
            best_val = val
            best_q = q_kvar
    if best_q is None:
        if failed == evaluated:
            raise GridError("every grid point diverged")
        raise GridError("no grid point satisfied the constraints")
    return GridResult(q_kvar=best_q, objective=best_val, evaluated=evaluated,
                      failed=failed, feasible=feasible_count)


def finite_difference_check(fn, x: np.ndarray, h: float = 1e-6) -> float:
    """Max relative gap between analytic and central-difference derivatives.

    Args:
        fn: map x -> (values, jacobian) with values of shape (m,) or scalar
            and jacobian of shape (m, n) (or (n,) for scalar values).
        x: evaluation point.
        h: central-difference step.

    Returns:
        max over entries of |fd - analytic| / max(1, |analytic|).
    """
    x = np.asarray(x, dtype=float)
    _, jac = fn(x)
    jac = np.atleast_2d(np.asarray(jac, dtype=float))
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = np.atleast_1d(np.asarray(fn(xp)[0], dtype=float))
        fm = np.atleast_1d(np.asarray(fn(xm)[0], dtype=float))
        fd = (fp - fm) / (2.0 * h)
        denom = np.maximum(1.0, np.abs(jac[:, i]))
        worst = max(worst, float(np.max(np.abs(fd - jac[:, i]) / denom)))
    return worst
