"""Three-phase power flow: polar mismatch equations and a damped Newton solver.

Conventions
-----------
Node order follows SystemAdmittance (buses in case order, phases a < b < c).
The mismatch residual at a node is

    dP = P_gen - P_load(V, th) - P_flow(V, th)
    dQ = Q_gen - Q_load(V, th) - Q_flow(V, th)

and the public residual vector stacks [dP at non-slack nodes..., dQ at
non-slack nodes...] in node order. Slack-bus nodes are held at magnitude 1 pu
and angles (0, -2pi/3, +2pi/3); their injections are recovered after the
solve.

Loads are polynomial (ZIP). Wye loads depend on their own node magnitude
only. Delta loads evaluate the polynomial on the connected pair's
line-to-line voltage magnitude (base sqrt(3) pu) and split the resulting
complex power into the two phase injections through the delta branch current,
which makes them angle-dependent; their exact first and second derivatives
are carried through the Jacobian and the optimizer's Hessians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .admittance import SystemAdmittance
from .netmodel import Network, ZipLoad

_PHASE_ANGLE = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}


class PowerFlowError(RuntimeError):
    """Newton iteration failed. Carries the final residual infinity norm."""

    def __init__(self, message: str, residual: float = math.nan, iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class VoltageState:
    """Per-node voltage magnitudes [pu] and angles [rad]."""

    vm: np.ndarray
    va: np.ndarray

    @property
    def u(self) -> np.ndarray:
        """Complex node phasors."""
        return self.vm * np.exp(1j * self.va)

    def copy(self) -> "VoltageState":
        return VoltageState(self.vm.copy(), self.va.copy())


@dataclass
class InjectionSet:
    """Specified per-node generation [pu]: substation and inverter terms."""

    p_gen: np.ndarray
    q_gen: np.ndarray

    @staticmethod
    def from_setpoints(net: Network, sysadm: SystemAdmittance,
                       q_inv: np.ndarray | None = None) -> "InjectionSet":
        """Build injections from inverter ratings and reactive setpoints.

        Args:
            q_inv: per-inverter reactive output [pu] in net.inverters order;
                defaults to zero.
        """
        n = sysadm.n_nodes
        p = np.zeros(n)
        q = np.zeros(n)
        if q_inv is None:
            q_inv = np.zeros(len(net.inverters))
        for k, inv in enumerate(net.inverters):
            node = sysadm.index[(inv.bus, inv.phase)]
            p[node] += inv.p_kw / net.s_base
            q[node] += float(q_inv[k])
        return InjectionSet(p, q)


def flat_start(net: Network, sysadm: SystemAdmittance) -> VoltageState:
    """Magnitude 1 pu everywhere, angles at the nominal phase offsets."""
    vm = np.ones(sysadm.n_nodes)
    va = np.array([_PHASE_ANGLE[p] for _, p in sysadm.nodes])
    return VoltageState(vm, va)


def zip_load_power(load: ZipLoad, v: float) -> complex:
    """Complex power [pu] drawn by a ZIP load at voltage magnitude v [pu].

    For delta loads v is the line-to-line magnitude of the connected pair.

    Raises:
        ValueError: non-positive voltage.
    """
    if v <= 0:
        raise ValueError(f"voltage must be positive, got {v}")
    r = v / load.v_base
    return complex(load.p_power + load.p_current * r + load.p_impedance * r * r,
                   load.q_power + load.q_current * r + load.q_impedance * r * r)


def _delta_power_derivatives(u1: complex, u2: complex, v1: float, v2: float,
                             cp: tuple[float, float, float],
                             cq: tuple[float, float, float],
                             w_base: float, order: int = 2):
    """Complex power injections of a delta load and their derivatives.

    Local variable order is (th1, th2, V1, V2). Returns (s1, s2, ds1, ds2,
    d2s1, d2s2); the second-order blocks are None when order < 2. P is the
    real part, Q the imaginary part of each complex entry.
    """
    uu = u1 - u2
    w = abs(uu)

    du1 = np.array([1j * u1, 0.0, u1 / v1, 0.0])
    du2 = np.array([0.0, 1j * u2, 0.0, u2 / v2])
    duu = du1 - du2
    w_x = (np.conj(uu) * duu).real / w

    ratio = w / w_base
    s = complex(cp[0] + cp[1] * ratio + cp[2] * ratio * ratio,
                cq[0] + cq[1] * ratio + cq[2] * ratio * ratio)
    s1 = complex(cp[1], cq[1]) / w_base + 2.0 * complex(cp[2], cq[2]) * w / w_base ** 2

    r1 = u1 / uu
    r2 = -u2 / uu
    r1_x = du1 / uu - u1 * duu / uu ** 2
    r2_x = -du2 / uu + u2 * duu / uu ** 2

    g1 = s * r1
    g2 = s * r2
    dg1 = s1 * w_x * r1 + s * r1_x
    dg2 = s1 * w_x * r2 + s * r2_x
    if order < 2:
        return g1, g2, dg1, dg2, None, None

    # second derivatives of u, uu, w
    d2u1 = np.zeros((4, 4), dtype=complex)
    d2u1[0, 0] = -u1
    d2u1[0, 2] = d2u1[2, 0] = 1j * u1 / v1
    d2u2 = np.zeros((4, 4), dtype=complex)
    d2u2[1, 1] = -u2
    d2u2[1, 3] = d2u2[3, 1] = 1j * u2 / v2
    d2uu = d2u1 - d2u2

    outer = np.outer(np.conj(duu), duu)
    w_xy = (outer.real + (np.conj(uu) * d2uu).real - np.outer(w_x, w_x)) / w

    s2 = 2.0 * complex(cp[2], cq[2]) / w_base ** 2

    def second(r, r_x, u_self, du_self, d2u_self, sign):
        # r = sign * u_self / uu; d2r per quotient rule
        d2r = (d2u_self / uu
               - (np.outer(du_self, duu) + np.outer(duu, du_self)) / uu ** 2
               - u_self * d2uu / uu ** 2
               + 2.0 * u_self * np.outer(duu, duu) / uu ** 3)
        d2r = sign * d2r
        return (s2 * np.outer(w_x, w_x) * r
                + s1 * w_xy * r
                + s1 * (np.outer(w_x, r_x) + np.outer(r_x, w_x))
                + s * d2r)

    d2g1 = second(r1, r1_x, u1, du1, d2u1, 1.0)
    d2g2 = second(r2, r2_x, u2, du2, d2u2, -1.0)
    return g1, g2, dg1, dg2, d2g1, d2g2


class LoadModel:
    """Node-indexed evaluation of all ZIP loads with exact derivatives."""

    def __init__(self, net: Network, sysadm: SystemAdmittance):
        wye_nodes, wye_cp, wye_cq = [], [], []
        self.delta: list[tuple[int, int, tuple, tuple, float]] = []
        for ld in net.loads:
            cp = (ld.p_power, ld.p_current, ld.p_impedance)
            cq = (ld.q_power, ld.q_current, ld.q_impedance)
            if ld.configuration == "wye":
                wye_nodes.append(sysadm.index[(ld.bus, ld.phase)])
                wye_cp.append(cp)
                wye_cq.append(cq)
            else:
                n1 = sysadm.index[(ld.bus, ld.phase[0])]
                n2 = sysadm.index[(ld.bus, ld.phase[1])]
                self.delta.append((n1, n2, cp, cq, ld.v_base))
        self.wye_nodes = np.array(wye_nodes, dtype=np.int64)
        self.wye_cp = np.array(wye_cp, dtype=float).reshape(-1, 3)
        self.wye_cq = np.array(wye_cq, dtype=float).reshape(-1, 3)
        self.n_nodes = sysadm.n_nodes

    def demand(self, vm: np.ndarray, va: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-node (P, Q) load [pu] at the given voltages."""
        pd = np.zeros(self.n_nodes)
        qd = np.zeros(self.n_nodes)
        if self.wye_nodes.size:
            v = vm[self.wye_nodes]
            p = self.wye_cp[:, 0] + self.wye_cp[:, 1] * v + self.wye_cp[:, 2] * v * v
            q = self.wye_cq[:, 0] + self.wye_cq[:, 1] * v + self.wye_cq[:, 2] * v * v
            np.add.at(pd, self.wye_nodes, p)
            np.add.at(qd, self.wye_nodes, q)
        if self.delta:
            u = vm * np.exp(1j * va)
            for n1, n2, cp, cq, wb in self.delta:
                g1, g2, _, _, _, _ = _delta_power_derivatives(
                    u[n1], u[n2], vm[n1], vm[n2], cp, cq, wb, order=0)
                pd[n1] += g1.real
                qd[n1] += g1.imag
                pd[n2] += g2.real
                qd[n2] += g2.imag
        return pd, qd

    def derivatives(self, vm: np.ndarray, va: np.ndarray):
        """COO node-level load derivatives.

        Returns (rows, cols, dp_dth, dp_dv, dq_dth, dq_dv) where entry k says
        the load P/Q at node rows[k] varies with the angle/magnitude at node
        cols[k] by the listed amounts.
        """
        rows = list(self.wye_nodes)
        cols = list(self.wye_nodes)
        zeros = np.zeros(self.wye_nodes.size)
        v = vm[self.wye_nodes] if self.wye_nodes.size else np.zeros(0)
        dp_dth = list(zeros)
        dq_dth = list(zeros)
        dp_dv = list(self.wye_cp[:, 1] + 2.0 * self.wye_cp[:, 2] * v)
        dq_dv = list(self.wye_cq[:, 1] + 2.0 * self.wye_cq[:, 2] * v)

        if self.delta:
            u = vm * np.exp(1j * va)
            for n1, n2, cp, cq, wb in self.delta:
                _, _, dg1, dg2, _, _ = _delta_power_derivatives(
                    u[n1], u[n2], vm[n1], vm[n2], cp, cq, wb, order=1)
                for r_node, dg in ((n1, dg1), (n2, dg2)):
                    for c_node, kth, kv in ((n1, 0, 2), (n2, 1, 3)):
                        rows.append(r_node)
                        cols.append(c_node)
                        dp_dth.append(dg[kth].real)
                        dq_dth.append(dg[kth].imag)
                        dp_dv.append(dg[kv].real)
                        dq_dv.append(dg[kv].imag)
        return (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                np.array(dp_dth), np.array(dp_dv), np.array(dq_dth), np.array(dq_dv))

    def hessian_blocks(self, vm: np.ndarray, va: np.ndarray,
                       lam_p: np.ndarray, lam_q: np.ndarray):
        """Local Hessian blocks of sum_n (lam_p[n] P_n + lam_q[n] Q_n).

        Yields (node_index_array, local) where local is symmetric over the
        variables (th at nodes..., V at nodes...) in that order.
        """
        out = []
        for k in range(self.wye_nodes.size):
            n = int(self.wye_nodes[k])
            d2 = 2.0 * (lam_p[n] * self.wye_cp[k, 2] + lam_q[n] * self.wye_cq[k, 2])
            if d2 != 0.0:
                local = np.zeros((2, 2))
                local[1, 1] = d2
                out.append((np.array([n], dtype=np.int64), local))
        if self.delta:
            u = vm * np.exp(1j * va)
            for n1, n2, cp, cq, wb in self.delta:
                _, _, _, _, d2g1, d2g2 = _delta_power_derivatives(
                    u[n1], u[n2], vm[n1], vm[n2], cp, cq, wb, order=2)
                kap1 = lam_p[n1] - 1j * lam_q[n1]
                kap2 = lam_p[n2] - 1j * lam_q[n2]
                loc = (kap1 * d2g1 + kap2 * d2g2).real
                # local order (th1, th2, V1, V2) already matches the contract
                out.append((np.array([n1, n2], dtype=np.int64), loc))
        return out


class FlowEvaluator:
    """Shared workspace: CSR pattern, load model, slack bookkeeping."""

    def __init__(self, net: Network, sysadm: SystemAdmittance):
        self.net = net
        self.sysadm = sysadm
        self.pattern = kernels.CsrPattern.from_csr(sysadm.ybus)
        self.ydata = sysadm.ybus.data.astype(complex)
        self.loads = LoadModel(net, sysadm)

        slack = net.slack_bus
        self.slack_nodes = sysadm.bus_nodes(slack.id, slack.phases)
        mask = np.ones(sysadm.n_nodes, dtype=bool)
        mask[self.slack_nodes] = False
        self.free_nodes = np.nonzero(mask)[0]
        self.node_map = -np.ones(sysadm.n_nodes, dtype=np.int64)
        self.node_map[self.free_nodes] = np.arange(self.free_nodes.size)

    def residual_full(self, state: VoltageState, inj: InjectionSet):
        """(dP, dQ) on every node, slack included."""
        u = state.u
        s_flow = kernels.nodal_power(self.pattern, self.ydata, u)
        pd, qd = self.loads.demand(state.vm, state.va)
        return inj.p_gen - pd - s_flow.real, inj.q_gen - qd - s_flow.imag

    def slack_generation(self, state: VoltageState):
        """Substation injections (p, q) [pu] in phase order a, b, c."""
        u = state.u
        s_flow = kernels.nodal_power(self.pattern, self.ydata, u)
        pd, qd = self.loads.demand(state.vm, state.va)
        k = self.slack_nodes
        return (s_flow.real[k] + pd[k], s_flow.imag[k] + qd[k])


def power_mismatch(net: Network, sysadm: SystemAdmittance, state: VoltageState,
                   inj: InjectionSet, evaluator: FlowEvaluator | None = None) -> np.ndarray:
    """Residual [dP free nodes..., dQ free nodes...] in node order [pu]."""
    ev = evaluator or FlowEvaluator(net, sysadm)
    dp, dq = ev.residual_full(state, inj)
    return np.concatenate([dp[ev.free_nodes], dq[ev.free_nodes]])


def mismatch_jacobian(net: Network, sysadm: SystemAdmittance, state: VoltageState,
                      inj: InjectionSet, evaluator: FlowEvaluator | None = None) -> np.ndarray:
    """Dense analytic Jacobian of power_mismatch wrt [th free..., vm free...]."""
    ev = evaluator or FlowEvaluator(net, sysadm)
    return _newton_jacobian(ev, state)


def _newton_jacobian(ev: FlowEvaluator, state: VoltageState) -> np.ndarray:
    pat = ev.pattern
    u = state.u
    s = kernels.nodal_power(pat, ev.ydata, u)
    dpdt, dpdv, dqdt, dqdv = kernels.power_jacobian(pat, ev.ydata, u, state.vm, s)

    m = ev.free_nodes.size
    jac = np.zeros((2 * m, 2 * m))
    r = ev.node_map[pat.rows]
    c = ev.node_map[pat.indices]
    keep = (r >= 0) & (c >= 0)
    rk, ck = r[keep], c[keep]
    # mismatch = spec - flow - load, so flow and load enter negated
    np.add.at(jac, (rk, ck), -dpdt[keep])
    np.add.at(jac, (rk, ck + m), -dpdv[keep])
    np.add.at(jac, (rk + m, ck), -dqdt[keep])
    np.add.at(jac, (rk + m, ck + m), -dqdv[keep])

    lr, lc, ldpt, ldpv, ldqt, ldqv = ev.loads.derivatives(state.vm, state.va)
    if lr.size:
        r = ev.node_map[lr]
        c = ev.node_map[lc]
        keep = (r >= 0) & (c >= 0)
        rk, ck = r[keep], c[keep]
        np.add.at(jac, (rk, ck), -ldpt[keep])
        np.add.at(jac, (rk, ck + m), -ldpv[keep])
        np.add.at(jac, (rk + m, ck), -ldqt[keep])
        np.add.at(jac, (rk + m, ck + m), -ldqv[keep])
    return jac


@dataclass
class PowerFlowResult:
    """Converged state plus iteration bookkeeping."""

    state: VoltageState
    iterations: int
    residual: float
    slack_p: np.ndarray
    slack_q: np.ndarray


def solve_powerflow(net: Network, sysadm: SystemAdmittance,
                    inj: InjectionSet | None = None, *,
                    tol: float = 1e-8, max_iter: int = 50,
                    start: VoltageState | None = None,
                    evaluator: FlowEvaluator | None = None) -> PowerFlowResult:
    """Newton power flow.

    Args:
        inj: specified injections; defaults to inverter rated P at zero Q.
        tol: infinity-norm mismatch tolerance [pu].
        max_iter: Newton iteration cap.
        start: initial state; defaults to a flat start.
        evaluator: reusable workspace for repeated solves on one network.

    Raises:
        PowerFlowError: no convergence within max_iter, or singular Jacobian.
    """
    ev = evaluator or FlowEvaluator(net, sysadm)
    if inj is None:
        inj = InjectionSet.from_setpoints(net, sysadm)
    state = (start.copy() if start is not None else flat_start(net, sysadm))
    state.vm[ev.slack_nodes] = 1.0
    state.va[ev.slack_nodes] = [_PHASE_ANGLE[p] for _, p in
                                (sysadm.nodes[k] for k in ev.slack_nodes)]

    free = ev.free_nodes
    m = free.size
    if m == 0:
        sp_, sq_ = ev.slack_generation(state)
        return PowerFlowResult(state, 0, 0.0, sp_, sq_)

    def residual(st: VoltageState) -> np.ndarray:
        dp, dq = ev.residual_full(st, inj)
        return np.concatenate([dp[free], dq[free]])

    r = residual(state)
    norm = float(np.max(np.abs(r)))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise PowerFlowError(
                f"no convergence after {max_iter} iterations "
                f"(residual {norm:.3e} pu)", residual=norm, iterations=it)
        jac = _newton_jacobian(ev, state)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise PowerFlowError("singular Jacobian", residual=norm,
                                 iterations=it) from None

        # halve the step up to 4 times while the residual norm gets worse
        alpha = 1.0
        accepted = None
        for attempt in range(5):
            trial = state.copy()
            trial.va[free] += alpha * step[:m]
            trial.vm[free] += alpha * step[m:]
            if np.min(trial.vm) > 0.0:
                r_trial = residual(trial)
                norm_trial = float(np.max(np.abs(r_trial)))
                if norm_trial < norm or attempt == 4:
                    accepted = (trial, r_trial, norm_trial)
                    break
            alpha *= 0.5
        if accepted is None:
            raise PowerFlowError("voltage magnitude collapsed during line search",
                                 residual=norm, iterations=it)
        state, r, norm = accepted
        it += 1

    sp_, sq_ = ev.slack_generation(state)
    return PowerFlowResult(state, it, norm, sp_, sq_)
