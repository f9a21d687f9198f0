"""Reactive dispatch optimization over an unbalanced feeder.

Five problem kinds share one nonlinear program core. Decision variables are
the non-slack node voltages (angle, magnitude), the per-phase substation
injections, the inverter reactive setpoints, and per three-phase-bus
auxiliaries used by the epigraph formulations:

* P1: minimize network losses, no unbalance terms.
* P2: minimize the sum over three-phase buses of the squared voltage
  unbalance factor (negative over positive sequence magnitude, squared).
* P3: minimize the summed line-to-line unbalance rate bound z2L, with
  line-to-line magnitudes as variables tied by squared-magnitude equalities.
* P4: minimize the summed phase unbalance rate bound z2P.
* P5: minimize losses subject to all three unbalance metrics capped at
  their configured limits.

Epigraph machinery per three-phase bus (substation included):

* line-to-line family: variables W = (Wab, Wbc, Wca), z1L (3), z2L (1);
  equalities |u_p - u_q|^2 - W^2 = 0; inequalities z1L_k >= |W_k - Wavg|
  (written as two linear rows) and z2L * Wavg >= z1L_k (multiplied-through
  form; Wavg > 0 on the feasible set).
* phase family: variables z1P (3), z2P (1) with the same row structure over
  the phase magnitudes V^a, V^b, V^c.
* sequence cap (P5): u_lim^2 * |v_pos|^2 - |v_neg|^2 >= 0 as a single
  quadratic-form row per bus.

The maximum-ratio metrics are recovered as max-attaining z values; the
report layer always recomputes metrics from the voltage state instead of
trusting auxiliaries.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .admittance import SystemAdmittance, assemble_ybus
from .metrics import (bus_unbalance, feeder_unbalance_summary, network_losses,
                      substation_power_factor, UnbalanceSummary)
from .netmodel import Inverter, Network
from .nlp import NlpProblem, NlpResult, solve_auglag, solve_interior_point
from .powerflow import (FlowEvaluator, InjectionSet, PowerFlowError,
                        VoltageState, flat_start, solve_powerflow)

_PHASE_ANGLE = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}
_ALPHA = cmath.rect(1.0, 2.0 * math.pi / 3.0)

# row vectors extracting the positive/negative sequence phasor from (ua,ub,uc)
_R_POS = np.array([1.0, _ALPHA, _ALPHA ** 2]) / 3.0
_R_NEG = np.array([1.0, _ALPHA ** 2, _ALPHA]) / 3.0
# Hermitian forms with conj(u)^T H u = |r . u|^2
_H_POS = np.conj(_R_POS)[:, None] * _R_POS[None, :]
_H_NEG = np.conj(_R_NEG)[:, None] * _R_NEG[None, :]

_PAIRS = ((0, 1), (1, 2), (2, 0))
# Hermitian forms for the squared line-to-line magnitudes |u_p - u_q|^2
_H_PAIR = []
for _p, _q in _PAIRS:
    _d = np.zeros(3)
    _d[_p], _d[_q] = 1.0, -1.0
    _H_PAIR.append(np.outer(_d, _d).astype(complex))

_W_FLOOR = 1e-4


class ProblemKind(enum.Enum):
    """The five dispatch problems."""

    P1_LOSS = "P1"
    P2_VUF = "P2"
    P3_LVUR = "P3"
    P4_PVUR = "P4"
    P5_LOSS_VU = "P5"

    @property
    def code(self) -> str:
        return self.value

    @staticmethod
    def from_code(code: str) -> "ProblemKind":
        for kind in ProblemKind:
            if kind.value == code:
                return kind
        raise ValueError(f"unknown problem code {code!r}")


@dataclass
class UnbalanceLimits:
    """Constraint limits for P5, as fractions (0.02 means 2%)."""

    u_vuf: float = 0.02
    u_pvur: float = 0.02
    u_lvur: float = 0.03

    def __post_init__(self):
        if min(self.u_vuf, self.u_pvur, self.u_lvur) <= 0.0:
            raise ValueError("unbalance limits must be positive")


@dataclass
class _BusAux:
    """Variable offsets of one three-phase bus's auxiliaries (-1 = absent)."""

    nodes: np.ndarray
    w: np.ndarray | None = None
    z1l: np.ndarray | None = None
    z2l: int = -1
    z1p: np.ndarray | None = None
    z2p: int = -1


def inverter_q_bounds(inv: Inverter) -> tuple[float, float]:
    """Reactive range [kVAR] left by the rating at the fixed active output.

    Raises:
        ValueError: active output exceeds the apparent rating.
    """
    if inv.p_kw > inv.s_kva:
        raise ValueError(
            f"inverter {inv.id}: active output {inv.p_kw} kW exceeds "
            f"rating {inv.s_kva} kVA")
    head = math.sqrt(max(inv.s_kva ** 2 - inv.p_kw ** 2, 0.0))
    return (-head, head)


def vuf_sequence_decomposition(vm, va) -> tuple[float, float, float, float]:
    """Rectangular positive/negative sequence parts of a three-phase set.

    Args:
        vm, va: magnitudes and angles [rad] in phase order a, b, c.

    Returns:
        (pos_d, pos_q, neg_d, neg_q), the polar expansion used inside the
        sequence-unbalance objective and constraint.
    """
    vm = np.asarray(vm, dtype=float)
    va = np.asarray(va, dtype=float)
    third = 2.0 * math.pi / 3.0
    pos_d = (vm[0] * math.cos(va[0]) + vm[1] * math.cos(va[1] + third)
             + vm[2] * math.cos(va[2] - third)) / 3.0
    pos_q = (vm[0] * math.sin(va[0]) + vm[1] * math.sin(va[1] + third)
             + vm[2] * math.sin(va[2] - third)) / 3.0
    neg_d = (vm[0] * math.cos(va[0]) + vm[1] * math.cos(va[1] - third)
             + vm[2] * math.cos(va[2] + third)) / 3.0
    neg_q = (vm[0] * math.sin(va[0]) + vm[1] * math.sin(va[1] - third)
             + vm[2] * math.sin(va[2] + third)) / 3.0
    return pos_d, pos_q, neg_d, neg_q


def _local_qform(h: np.ndarray, u: np.ndarray, vm: np.ndarray,
                 want_hess: bool = True):
    """Value, gradient and Hessian of conj(u)^T h u in (angles..., mags...).

    h is a small Hermitian matrix over the local nodes; the variable order is
    all angles followed by all magnitudes.
    """
    k = u.shape[0]
    t = h @ u
    w = np.conj(u) * t
    val = float(np.sum(w.real))
    grad = np.concatenate([2.0 * w.imag, 2.0 * w.real / vm])
    if not want_hess:
        return val, grad, None
    c = np.conj(u)[:, None] * h * u[None, :]
    htt = 2.0 * c.real
    idx = np.arange(k)
    htt[idx, idx] -= 2.0 * w.real
    htv = 2.0 * c.imag / vm[None, :]
    htv[idx, idx] += 2.0 * w.imag / vm
    hvv = 2.0 * c.real / (vm[:, None] * vm[None, :])
    hess = np.block([[htt, htv], [htv.T, hvv]])
    return val, grad, hess


class OptimizationProblem:
    """One dispatch problem instance bound to a network.

    Exposes the NLP callbacks (objective, equalities, inequalities,
    lagrangian_hessian) over the flat variable vector, plus layout metadata
    used by the solver driver and the tests.
    """

    def __init__(self, net: Network, kind: ProblemKind,
                 limits: UnbalanceLimits | None = None,
                 sysadm: SystemAdmittance | None = None):
        self.net = net
        self.kind = kind
        self.limits = limits or UnbalanceLimits()
        self.sysadm = sysadm or assemble_ybus(net)
        self.evaluator = FlowEvaluator(net, self.sysadm)

        self.lvur_active = kind in (ProblemKind.P3_LVUR, ProblemKind.P5_LOSS_VU)
        self.pvur_active = kind in (ProblemKind.P4_PVUR, ProblemKind.P5_LOSS_VU)
        self.vuf_rows = kind is ProblemKind.P5_LOSS_VU

        self.three_phase_buses = [b.id for b in net.buses
                                  if b.phases.is_three_phase]
        if kind is not ProblemKind.P1_LOSS and not self.three_phase_buses:
            raise ValueError(
                f"{kind.code} needs at least one three-phase bus")

        ev = self.evaluator
        sysadm = self.sysadm
        self.n_nodes = sysadm.n_nodes
        self.n_free = ev.free_nodes.size
        self.free_nodes = ev.free_nodes
        self.node_map = ev.node_map
        self.slack_nodes = ev.slack_nodes
        self.slack_bus_id = net.slack_bus.id
        self.slack_vm = np.ones(self.slack_nodes.size)
        self.slack_va = np.array([_PHASE_ANGLE[sysadm.nodes[k][1]]
                                  for k in self.slack_nodes])

        # ---- variable layout -------------------------------------------
        self.th_off = 0
        self.vm_off = self.n_free
        self.pg_off = 2 * self.n_free
        self.qg_off = self.pg_off + self.slack_nodes.size
        pos = self.qg_off + self.slack_nodes.size

        self.active_inv: list[int] = []
        self.fixed_inv: list[int] = []
        qlo, qhi = [], []
        for k, inv in enumerate(net.inverters):
            lo, hi = inverter_q_bounds(inv)
            if hi - lo < 1e-9:
                self.fixed_inv.append(k)
            else:
                self.active_inv.append(k)
                qlo.append(lo / net.s_base)
                qhi.append(hi / net.s_base)
        self.qinv_off = pos
        self.n_qinv = len(self.active_inv)
        pos += self.n_qinv
        self.qinv_nodes = np.array(
            [sysadm.index[(net.inverters[k].bus, net.inverters[k].phase)]
             for k in self.active_inv], dtype=np.int64)

        self.aux: dict[str, _BusAux] = {}
        n_aux = 0
        for bid in self.three_phase_buses:
            rec = _BusAux(nodes=sysadm.bus_nodes(bid, "abc"))
            if self.lvur_active:
                rec.w = np.arange(pos, pos + 3)
                pos += 3
                rec.z1l = np.arange(pos, pos + 3)
                pos += 3
                rec.z2l = pos
                pos += 1
                n_aux += 7
            if self.pvur_active:
                rec.z1p = np.arange(pos, pos + 3)
                pos += 3
                rec.z2p = pos
                pos += 1
                n_aux += 4
            self.aux[bid] = rec
        self.n = pos
        self.n_auxiliaries = n_aux

        # ---- bounds ------------------------------------------------------
        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        bus_of = {b.id: b for b in net.buses}
        for j, node in enumerate(self.free_nodes):
            b = bus_of[sysadm.nodes[node][0]]
            lb[self.vm_off + j] = b.v_min
            ub[self.vm_off + j] = b.v_max
        lim = net.substation_limits
        for j, node in enumerate(self.slack_nodes):
            ph = "abc".index(sysadm.nodes[node][1])
            lb[self.pg_off + j] = lim.p_min[ph] / net.s_base
            ub[self.pg_off + j] = lim.p_max[ph] / net.s_base
            lb[self.qg_off + j] = lim.q_min[ph] / net.s_base
            ub[self.qg_off + j] = lim.q_max[ph] / net.s_base
        if self.n_qinv:
            lb[self.qinv_off:self.qinv_off + self.n_qinv] = qlo
            ub[self.qinv_off:self.qinv_off + self.n_qinv] = qhi
        for rec in self.aux.values():
            if rec.w is not None:
                lb[rec.w] = _W_FLOOR
                lb[rec.z1l] = 0.0
                lb[rec.z2l] = 0.0
                if self.vuf_rows:
                    ub[rec.z2l] = self.limits.u_lvur
            if rec.z1p is not None:
                lb[rec.z1p] = 0.0
                lb[rec.z2p] = 0.0
                if self.vuf_rows:
                    ub[rec.z2p] = self.limits.u_pvur
        self.lb, self.ub = lb, ub

        # ---- constant injection terms -----------------------------------
        self.p_inv_const = np.zeros(self.n_nodes)
        for inv in net.inverters:
            node = sysadm.index[(inv.bus, inv.phase)]
            self.p_inv_const[node] += inv.p_kw / net.s_base

        # losses as one Hermitian form: the Hermitian part of the bus matrix
        ybus = sysadm.ybus
        herm = (ybus + ybus.getH()).tocsr() * 0.5
        herm.sort_indices()
        self.loss_hdata = np.zeros(self.evaluator.pattern.indices.size,
                                   dtype=complex)
        # herm shares the structural pattern (ybus has it symmetric) but
        # sum may drop explicit zeros, so scatter by coordinates
        coo = herm.tocoo()
        pat = self.evaluator.pattern
        for r, c, v in zip(coo.row, coo.col, coo.data):
            lo, hi = pat.indptr[r], pat.indptr[r + 1]
            k = lo + int(np.searchsorted(pat.indices[lo:hi], c))
            self.loss_hdata[k] = v

        self.n_eq = 2 * self.n_nodes \
            + (3 * len(self.three_phase_buses) if self.lvur_active else 0)
        per_bus = (9 if self.lvur_active else 0) \
            + (9 if self.pvur_active else 0) \
            + (1 if self.vuf_rows else 0)
        self.n_ineq = per_bus * len(self.three_phase_buses)

    # ------------------------------------------------------------------
    def state_of(self, x: np.ndarray) -> VoltageState:
        """Full node voltage state implied by a variable vector."""
        vm = np.empty(self.n_nodes)
        va = np.empty(self.n_nodes)
        vm[self.free_nodes] = x[self.vm_off:self.vm_off + self.n_free]
        va[self.free_nodes] = x[self.th_off:self.th_off + self.n_free]
        vm[self.slack_nodes] = self.slack_vm
        va[self.slack_nodes] = self.slack_va
        return VoltageState(vm, va)

    def q_inv_full(self, x: np.ndarray) -> np.ndarray:
        """Per-inverter reactive setpoints [pu] in net.inverters order."""
        q = np.zeros(len(self.net.inverters))
        for j, k in enumerate(self.active_inv):
            q[k] = x[self.qinv_off + j]
        return q

    def _bus_cols(self, nodes: np.ndarray) -> list[int]:
        """Variable columns of a bus's local (angles..., mags...) order."""
        cols = []
        for n in nodes:
            f = self.node_map[n]
            cols.append(self.th_off + f if f >= 0 else -1)
        for n in nodes:
            f = self.node_map[n]
            cols.append(self.vm_off + f if f >= 0 else -1)
        return cols

    @staticmethod
    def _scatter_row(jac_row: np.ndarray, cols: list[int], grad: np.ndarray):
        for i, c in enumerate(cols):
            if c >= 0:
                jac_row[c] += grad[i]

    @staticmethod
    def _scatter_sym(h: np.ndarray, cols: list[int], local: np.ndarray):
        for i, ci in enumerate(cols):
            if ci < 0:
                continue
            for j, cj in enumerate(cols):
                if cj >= 0:
                    h[ci, cj] += local[i, j]

    # ------------------------------------------------------------------
    def objective(self, x: np.ndarray):
        st = self.state_of(x)
        u = kernels.complex_voltage(st.vm, st.va)
        g = np.zeros(self.n)
        if self.kind in (ProblemKind.P1_LOSS, ProblemKind.P5_LOSS_VU):
            val, gth, gv = kernels.qform_value_grad(
                self.evaluator.pattern, self.loss_hdata, u, st.vm)
            g[self.th_off:self.th_off + self.n_free] = gth[self.free_nodes]
            g[self.vm_off:self.vm_off + self.n_free] = gv[self.free_nodes]
            return float(val), g
        if self.kind is ProblemKind.P2_VUF:
            total = 0.0
            for bid in self.three_phase_buses:
                if bid == self.slack_bus_id:
                    continue  # fixed balanced reference contributes zero
                rec = self.aux[bid] if bid in self.aux else None
                nodes = (rec.nodes if rec is not None
                         else self.sysadm.bus_nodes(bid, "abc"))
                u_loc, vm_loc = u[nodes], st.vm[nodes]
                nv, ng, _ = _local_qform(_H_NEG, u_loc, vm_loc, want_hess=False)
                dv, dg, _ = _local_qform(_H_POS, u_loc, vm_loc, want_hess=False)
                total += nv / dv
                grad_loc = ng / dv - (nv / dv ** 2) * dg
                self._scatter_row(g, self._bus_cols(nodes), grad_loc)
            return total, g
        if self.kind is ProblemKind.P3_LVUR:
            for rec in self.aux.values():
                g[rec.z2l] = 1.0
            return float(sum(x[rec.z2l] for rec in self.aux.values())), g
        # P4
        for rec in self.aux.values():
            g[rec.z2p] = 1.0
        return float(sum(x[rec.z2p] for rec in self.aux.values())), g

    # ------------------------------------------------------------------
    def equalities(self, x: np.ndarray):
        st = self.state_of(x)
        vm, va = st.vm, st.va
        u = kernels.complex_voltage(vm, va)
        ev = self.evaluator
        pat = ev.pattern
        nn = self.n_nodes

        s_flow = kernels.nodal_power(pat, ev.ydata, u)
        pd, qd = ev.loads.demand(vm, va)
        p_spec = self.p_inv_const.copy()
        q_spec = np.zeros(nn)
        if self.n_qinv:
            np.add.at(q_spec, self.qinv_nodes,
                      x[self.qinv_off:self.qinv_off + self.n_qinv])
        p_spec[self.slack_nodes] += x[self.pg_off:self.pg_off
                                      + self.slack_nodes.size]
        q_spec[self.slack_nodes] += x[self.qg_off:self.qg_off
                                      + self.slack_nodes.size]
        c = np.empty(self.n_eq)
        c[:nn] = p_spec - pd - s_flow.real
        c[nn:2 * nn] = q_spec - qd - s_flow.imag

        jac = np.zeros((self.n_eq, self.n))
        dpdt, dpdv, dqdt, dqdv = kernels.power_jacobian(pat, ev.ydata, u, vm,
                                                        s_flow)
        cfree = self.node_map[pat.indices]
        keep = cfree >= 0
        rr, cc = pat.rows[keep], cfree[keep]
        np.add.at(jac, (rr, self.th_off + cc), -dpdt[keep])
        np.add.at(jac, (rr, self.vm_off + cc), -dpdv[keep])
        np.add.at(jac, (nn + rr, self.th_off + cc), -dqdt[keep])
        np.add.at(jac, (nn + rr, self.vm_off + cc), -dqdv[keep])

        lr, lc, ldpt, ldpv, ldqt, ldqv = ev.loads.derivatives(vm, va)
        if lr.size:
            cfree = self.node_map[lc]
            keep = cfree >= 0
            rr, cc = lr[keep], cfree[keep]
            np.add.at(jac, (rr, self.th_off + cc), -ldpt[keep])
            np.add.at(jac, (rr, self.vm_off + cc), -ldpv[keep])
            np.add.at(jac, (nn + rr, self.th_off + cc), -ldqt[keep])
            np.add.at(jac, (nn + rr, self.vm_off + cc), -ldqv[keep])

        ns = self.slack_nodes.size
        jac[self.slack_nodes, self.pg_off + np.arange(ns)] = 1.0
        jac[nn + self.slack_nodes, self.qg_off + np.arange(ns)] = 1.0
        if self.n_qinv:
            jac[nn + self.qinv_nodes,
                self.qinv_off + np.arange(self.n_qinv)] = 1.0

        if self.lvur_active:
            r = 2 * nn
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                cols = self._bus_cols(rec.nodes)
                u_loc, vm_loc = u[rec.nodes], vm[rec.nodes]
                for k in range(3):
                    val, grad, _ = _local_qform(_H_PAIR[k], u_loc, vm_loc,
                                                want_hess=False)
                    wk = x[rec.w[k]]
                    c[r] = val - wk * wk
                    self._scatter_row(jac[r], cols, grad)
                    jac[r, rec.w[k]] = -2.0 * wk
                    r += 1
        return c, jac

    # ------------------------------------------------------------------
    def inequalities(self, x: np.ndarray):
        if self.n_ineq == 0:
            return np.zeros(0), np.zeros((0, self.n))
        st = self.state_of(x)
        vm = st.vm
        h = np.empty(self.n_ineq)
        jac = np.zeros((self.n_ineq, self.n))
        r = 0
        if self.lvur_active:
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                w = x[rec.w]
                avg = float(np.mean(w))
                for k in range(3):
                    dev = w[k] - avg
                    for sgn in (1.0, -1.0):
                        # z1 >= |deviation| as two linear rows
                        h[r] = x[rec.z1l[k]] - sgn * dev
                        jac[r, rec.z1l[k]] = 1.0
                        for j in range(3):
                            jac[r, rec.w[j]] = -sgn * ((1.0 if j == k else 0.0)
                                                       - 1.0 / 3.0)
                        r += 1
                z2 = x[rec.z2l]
                for k in range(3):
                    h[r] = z2 * avg - x[rec.z1l[k]]
                    jac[r, rec.w] = z2 / 3.0
                    jac[r, rec.z2l] = avg
                    jac[r, rec.z1l[k]] = -1.0
                    r += 1
        if self.pvur_active:
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                v3 = vm[rec.nodes]
                avg = float(np.mean(v3))
                vcols = [self.node_map[n] for n in rec.nodes]
                for k in range(3):
                    dev = v3[k] - avg
                    for sgn in (1.0, -1.0):
                        h[r] = x[rec.z1p[k]] - sgn * dev
                        jac[r, rec.z1p[k]] = 1.0
                        for j, f in enumerate(vcols):
                            if f >= 0:
                                jac[r, self.vm_off + f] = \
                                    -sgn * ((1.0 if j == k else 0.0) - 1.0 / 3.0)
                        r += 1
                z2 = x[rec.z2p]
                for k in range(3):
                    h[r] = z2 * avg - x[rec.z1p[k]]
                    for f in vcols:
                        if f >= 0:
                            jac[r, self.vm_off + f] = z2 / 3.0
                    jac[r, rec.z2p] = avg
                    jac[r, rec.z1p[k]] = -1.0
                    r += 1
        if self.vuf_rows:
            u = kernels.complex_voltage(vm, st.va)
            ulim2 = self.limits.u_vuf ** 2
            hmat = ulim2 * _H_POS - _H_NEG
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                val, grad, _ = _local_qform(hmat, u[rec.nodes], vm[rec.nodes],
                                            want_hess=False)
                h[r] = val
                self._scatter_row(jac[r], self._bus_cols(rec.nodes), grad)
                r += 1
        return h, jac

    # ------------------------------------------------------------------
    def lagrangian_hessian(self, x: np.ndarray, sigma: float,
                           y: np.ndarray, z: np.ndarray) -> np.ndarray:
        st = self.state_of(x)
        vm, va = st.vm, st.va
        u = kernels.complex_voltage(vm, va)
        ev = self.evaluator
        pat = ev.pattern
        nn = self.n_nodes
        hes = np.zeros((self.n, self.n))

        # objective curvature
        if sigma != 0.0:
            if self.kind in (ProblemKind.P1_LOSS, ProblemKind.P5_LOSS_VU):
                htt, htv, hvv = kernels.qform_hessian(pat, self.loss_hdata, u,
                                                      vm)
                self._scatter_qform_hessian(hes, htt, htv, hvv, sigma)
            elif self.kind is ProblemKind.P2_VUF:
                for bid in self.three_phase_buses:
                    if bid == self.slack_bus_id:
                        continue
                    nodes = (self.aux[bid].nodes if bid in self.aux
                             else self.sysadm.bus_nodes(bid, "abc"))
                    u_loc, vm_loc = u[nodes], vm[nodes]
                    nv, ng, nh = _local_qform(_H_NEG, u_loc, vm_loc)
                    dv, dg, dh = _local_qform(_H_POS, u_loc, vm_loc)
                    loc = (nh / dv
                           - (np.outer(ng, dg) + np.outer(dg, ng)) / dv ** 2
                           - (nv / dv ** 2) * dh
                           + (2.0 * nv / dv ** 3) * np.outer(dg, dg))
                    self._scatter_sym(hes, self._bus_cols(nodes), sigma * loc)

        # power-balance rows: c = spec - flow - load, so the weighted flow
        # and load curvature enters with the multipliers negated
        lam_p = -y[:nn]
        lam_q = -y[nn:2 * nn]
        if np.any(lam_p) or np.any(lam_q):
            kappa = lam_p - 1j * lam_q
            hdata = kernels.hermitian_flow_weights(pat, ev.ydata, kappa)
            htt, htv, hvv = kernels.qform_hessian(pat, hdata, u, vm)
            self._scatter_qform_hessian(hes, htt, htv, hvv, 1.0)
            for nodes, local in ev.loads.hessian_blocks(vm, va, lam_p, lam_q):
                cols = []
                for n in nodes:
                    f = self.node_map[n]
                    cols.append(self.th_off + f if f >= 0 else -1)
                for n in nodes:
                    f = self.node_map[n]
                    cols.append(self.vm_off + f if f >= 0 else -1)
                self._scatter_sym(hes, cols, local)

        r = 2 * nn
        if self.lvur_active:
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                cols = self._bus_cols(rec.nodes)
                u_loc, vm_loc = u[rec.nodes], vm[rec.nodes]
                for k in range(3):
                    yk = y[r]
                    if yk != 0.0:
                        _, _, hq = _local_qform(_H_PAIR[k], u_loc, vm_loc)
                        self._scatter_sym(hes, cols, yk * hq)
                        hes[rec.w[k], rec.w[k]] += -2.0 * yk
                    r += 1

        # inequality curvature enters subtracted
        ri = 0
        if self.lvur_active:
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                ri += 6
                for k in range(3):
                    zk = z[ri]
                    if zk != 0.0:
                        for j in range(3):
                            hes[rec.z2l, rec.w[j]] -= zk / 3.0
                            hes[rec.w[j], rec.z2l] -= zk / 3.0
                    ri += 1
        if self.pvur_active:
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                vcols = [self.node_map[n] for n in rec.nodes]
                ri += 6
                for k in range(3):
                    zk = z[ri]
                    if zk != 0.0:
                        for f in vcols:
                            if f >= 0:
                                hes[rec.z2p, self.vm_off + f] -= zk / 3.0
                                hes[self.vm_off + f, rec.z2p] -= zk / 3.0
                    ri += 1
        if self.vuf_rows:
            ulim2 = self.limits.u_vuf ** 2
            hmat = ulim2 * _H_POS - _H_NEG
            for bid in self.three_phase_buses:
                rec = self.aux[bid]
                zk = z[ri]
                if zk != 0.0 and bid != self.slack_bus_id:
                    _, _, hq = _local_qform(hmat, u[rec.nodes], vm[rec.nodes])
                    self._scatter_sym(hes, self._bus_cols(rec.nodes), -zk * hq)
                ri += 1
        return hes

    def _scatter_qform_hessian(self, hes, htt, htv, hvv, scale):
        pat = self.evaluator.pattern
        r = self.node_map[pat.rows]
        c = self.node_map[pat.indices]
        keep = (r >= 0) & (c >= 0)
        rk, ck = r[keep], c[keep]
        np.add.at(hes, (self.th_off + rk, self.th_off + ck), scale * htt[keep])
        np.add.at(hes, (self.th_off + rk, self.vm_off + ck), scale * htv[keep])
        np.add.at(hes, (self.vm_off + ck, self.th_off + rk), scale * htv[keep])
        np.add.at(hes, (self.vm_off + rk, self.vm_off + ck), scale * hvv[keep])

    # ------------------------------------------------------------------
    def start_point(self, start: str = "pf") -> np.ndarray:
        """Assemble an initial variable vector.

        "pf" runs a zero-setpoint power flow (falling back to a flat profile
        if it fails); "flat" uses the nominal profile directly.
        """
        ev = self.evaluator
        if start == "pf":
            try:
                res = solve_powerflow(self.net, self.sysadm,
                                      InjectionSet.from_setpoints(
                                          self.net, self.sysadm),
                                      evaluator=ev)
                st = res.state
                pg, qg = res.slack_p, res.slack_q
            except PowerFlowError:
                start = "flat"
        if start == "flat":
            st = flat_start(self.net, self.sysadm)
            pg = np.zeros(self.slack_nodes.size)
            qg = np.zeros(self.slack_nodes.size)
        elif start != "pf":
            raise ValueError(f"unknown start {start!r}")

        x = np.zeros(self.n)
        x[self.th_off:self.th_off + self.n_free] = st.va[self.free_nodes]
        x[self.vm_off:self.vm_off + self.n_free] = st.vm[self.free_nodes]
        x[self.pg_off:self.pg_off + self.slack_nodes.size] = pg
        x[self.qg_off:self.qg_off + self.slack_nodes.size] = qg
        u = kernels.complex_voltage(st.vm, st.va)
        for rec in self.aux.values():
            if rec.w is not None:
                w = np.abs(u[rec.nodes[[0, 1, 2]]] - u[rec.nodes[[1, 2, 0]]])
                x[rec.w] = np.maximum(w, 2.0 * _W_FLOOR)
                avg = float(np.mean(w))
                dev = np.abs(w - avg)
                x[rec.z1l] = dev + 0.02
                x[rec.z2l] = float(np.max(dev)) / avg + 0.02
            if rec.z1p is not None:
                v3 = st.vm[rec.nodes]
                avg = float(np.mean(v3))
                dev = np.abs(v3 - avg)
                x[rec.z1p] = dev + 0.02
                x[rec.z2p] = float(np.max(dev)) / avg + 0.02
        return np.clip(x, self.lb, self.ub)

    def nlp(self, start: str = "pf") -> NlpProblem:
        return NlpProblem(n=self.n, x0=self.start_point(start),
                          lb=self.lb, ub=self.ub,
                          objective=self.objective,
                          eq=self.equalities,
                          ineq=self.inequalities if self.n_ineq else None,
                          lag_hessian=self.lagrangian_hessian)


@dataclass
class Solution:
    """Solver outcome for one problem kind."""

    kind: ProblemKind
    status: str
    objective: float
    state: VoltageState
    p_slack: np.ndarray
    q_slack: np.ndarray
    q_inv: np.ndarray
    aux: dict
    kkt: dict
    iterations: int
    message: str = ""
    x: np.ndarray = None


@dataclass
class ReportRow:
    """Re-simulated summary of a solution, all physical units."""

    kind: ProblemKind
    status: str
    loss_kw: float
    power_factor: float
    q_avg_kvar: float
    summary: UnbalanceSummary
    state: VoltageState
    per_bus: dict


def solve(prob: OptimizationProblem, *, feas_tol: float = 1e-6,
          kkt_tol: float = 1e-6, max_iter: int = 300, start: str = "pf",
          method: str = "ipm", mu0: float = 1e-2,
          verbose: bool = False) -> Solution:
    """Solve a built problem and package the result.

    method "ipm" is the interior-point path, "auglag" the augmented
    Lagrangian fallback.
    """
    nlp = prob.nlp(start)
    if method == "ipm":
        res = solve_interior_point(nlp, kkt_tol=kkt_tol, feas_tol=feas_tol,
                                   max_iter=max_iter, mu0=mu0, verbose=verbose)
    elif method == "auglag":
        res = solve_auglag(nlp, kkt_tol=kkt_tol, feas_tol=feas_tol)
    else:
        raise ValueError(f"unknown method {method!r}")

    x = res.x
    aux = {}
    for bid, rec in prob.aux.items():
        entry = {}
        if rec.w is not None:
            entry["w"] = x[rec.w].copy()
            entry["z1l"] = x[rec.z1l].copy()
            entry["z2l"] = float(x[rec.z2l])
        if rec.z1p is not None:
            entry["z1p"] = x[rec.z1p].copy()
            entry["z2p"] = float(x[rec.z2p])
        if entry:
            aux[bid] = entry
    ns = prob.slack_nodes.size
    return Solution(kind=prob.kind, status=res.status, objective=res.f,
                    state=prob.state_of(x),
                    p_slack=x[prob.pg_off:prob.pg_off + ns].copy(),
                    q_slack=x[prob.qg_off:prob.qg_off + ns].copy(),
                    q_inv=prob.q_inv_full(x), aux=aux, kkt=res.kkt,
                    iterations=res.iterations, message=res.message, x=x)


def evaluate_solution(net: Network, sol: Solution,
                      sysadm: SystemAdmittance | None = None) -> ReportRow:
    """Re-simulate a solution's setpoints and summarize it.

    A fresh power flow is run at the solution's inverter setpoints; losses,
    substation power factor and the unbalance summary all come from that
    re-simulated state, never from solver auxiliaries.
    """
    sysadm = sysadm or assemble_ybus(net)
    ev = FlowEvaluator(net, sysadm)
    inj = InjectionSet.from_setpoints(net, sysadm, sol.q_inv)
    try:
        res = solve_powerflow(net, sysadm, inj, start=sol.state, evaluator=ev)
        state = res.state
        p_sl, q_sl = res.slack_p, res.slack_q
    except PowerFlowError:
        state = sol.state
        p_sl, q_sl = sol.p_slack, sol.q_slack
    loss_kw = network_losses(sysadm, state)
    pf = substation_power_factor(p_sl, q_sl)
    summary = feeder_unbalance_summary(net, sysadm, state)
    per_bus = bus_unbalance(net, sysadm, state)
    q_avg = (float(np.mean(sol.q_inv)) * net.s_base
             if sol.q_inv.size else 0.0)
    return ReportRow(kind=sol.kind, status=sol.status, loss_kw=loss_kw,
                     power_factor=pf, q_avg_kvar=q_avg, summary=summary,
                     state=state, per_bus=per_bus)


def build_problem(net: Network, kind: ProblemKind,
                  limits: UnbalanceLimits | None = None,
                  sysadm: SystemAdmittance | None = None) -> OptimizationProblem:
    """Construct the NLP for one problem kind on a validated network."""
    return OptimizationProblem(net, kind, limits, sysadm)
