"""Newton power flow: convergence, analytic Jacobian, and a hand-rolled
fixed-point oracle on a two-bus feeder."""

import json
import math

import numpy as np
import pytest

from tpopf.admittance import assemble_ybus
from tpopf.metrics import network_losses
from tpopf.netmodel import load_case
from tpopf.powerflow import (
    FlowEvaluator,
    InjectionSet,
    PowerFlowError,
    VoltageState,
    flat_start,
    mismatch_jacobian,
    power_mismatch,
    solve_powerflow,
    zip_load_power,
)

ROT = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}


def _two_bus_case(p_kw=100.0, q_kvar=50.0):
    z = [0.01, 0.1]
    zero = [0.0, 0.0]
    return load_case(json.dumps({
        "name": "twobus",
        "base": {"s_kva": 1000.0},
        "buses": [
            {"id": "src", "phases": "abc", "kind": "slack", "base_kv": 2.4},
            {"id": "ld", "phases": "abc", "kind": "load", "base_kv": 2.4},
        ],
        "branches": [
            {"from": "src", "to": "ld", "phases": "abc",
             "z_series": {"unit": "pu",
                          "rows": [[z, zero, zero],
                                   [zero, z, zero],
                                   [zero, zero, z]]}},
        ],
        "loads": [
            {"bus": "ld", "configuration": "wye", "phases": ph, "unit": "kw",
             "p": {"power": p_kw}, "q": {"power": q_kvar}}
            for ph in "abc"
        ],
    }))


def _fixed_point_voltage(z, s, tol=1e-12):
    """Scalar backward-sweep iteration V = 1 - z * conj(S / V)."""
    v = 1.0 + 0j
    for _ in range(200):
        v_next = 1.0 - z * np.conj(s / v)
        if abs(v_next - v) < tol:
            return v_next
        v = v_next
    raise AssertionError("fixed point did not settle")


class TestTwoBusOracle:
    def test_matches_fixed_point_solution(self):
        net = _two_bus_case()
        sysadm = assemble_ybus(net)
        res = solve_powerflow(net, sysadm, tol=1e-10)
        v_ref = _fixed_point_voltage(0.01 + 0.1j, 0.1 + 0.05j)
        for k, (bid, ph) in enumerate(sysadm.nodes):
            if bid != "ld":
                continue
            u = res.state.vm[k] * np.exp(1j * res.state.va[k])
            want = v_ref * np.exp(1j * ROT[ph])
            assert abs(u - want) < 1e-8

    def test_load_bus_sags_below_source(self):
        net = _two_bus_case()
        sysadm = assemble_ybus(net)
        res = solve_powerflow(net, sysadm)
        ld = sysadm.bus_nodes("ld", net.bus("ld").phases)
        assert np.all(res.state.vm[ld] < 1.0)

    def test_slack_covers_load_plus_loss(self):
        net = _two_bus_case()
        sysadm = assemble_ybus(net)
        res = solve_powerflow(net, sysadm, tol=1e-10)
        v_ref = _fixed_point_voltage(0.01 + 0.1j, 0.1 + 0.05j)
        i_mag2 = abs((1.0 - v_ref) / (0.01 + 0.1j)) ** 2
        want_p = 0.1 + 0.01 * i_mag2
        assert np.sum(res.slack_p) == pytest.approx(3 * want_p, rel=1e-8)


class TestConvergence:
    @pytest.mark.parametrize("case", ["balanced4", "unbalanced4", "ieee13_mod"])
    def test_within_ten_iterations(self, case_dir, case):
        net = load_case((case_dir / f"{case}.json").read_text())
        sysadm = assemble_ybus(net)
        res = solve_powerflow(net, sysadm, tol=1e-8)
        assert res.iterations <= 10
        assert res.residual <= 1e-8

    def test_warm_start_is_immediate(self, feeder13, feeder13_adm):
        res = solve_powerflow(feeder13, feeder13_adm, tol=1e-8)
        again = solve_powerflow(feeder13, feeder13_adm, tol=1e-8,
                                start=res.state)
        assert again.iterations <= 1
        assert np.max(np.abs(again.state.vm - res.state.vm)) < 1e-8

    def test_absurd_load_raises(self):
        net = _two_bus_case(p_kw=6000.0, q_kvar=3000.0)
        sysadm = assemble_ybus(net)
        with pytest.raises(PowerFlowError):
            solve_powerflow(net, sysadm, max_iter=40)

    def test_error_carries_iteration_count(self):
        net = _two_bus_case()
        sysadm = assemble_ybus(net)
        with pytest.raises(PowerFlowError) as exc:
            solve_powerflow(net, sysadm, max_iter=0)
        assert exc.value.iterations == 0
        assert exc.value.residual > 0


class TestBalancedCase:
    def test_solution_is_phase_symmetric(self, balanced4):
        sysadm = assemble_ybus(balanced4)
        res = solve_powerflow(balanced4, sysadm, tol=1e-10)
        for bus in balanced4.buses:
            nodes = sysadm.bus_nodes(bus.id, bus.phases)
            vm = res.state.vm[nodes]
            va = res.state.va[nodes]
            assert np.max(vm) - np.min(vm) < 1e-9
            # angles 120 degrees apart once each phase's rotation is removed
            rel = [va[i] - ROT[p] for i, p in enumerate("abc")]
            assert np.max(rel) - np.min(rel) < 1e-9


class TestFlatStartResidual:
    def test_active_mismatch_equals_net_demand(self, unbalanced4):
        """With equal voltages at both branch ends, no series current flows,
        so the flat-start active residual is generation minus nominal load."""
        sysadm = assemble_ybus(unbalanced4)
        ev = FlowEvaluator(unbalanced4, sysadm)
        inj = InjectionSet.from_setpoints(unbalanced4, sysadm)
        r = power_mismatch(unbalanced4, sysadm, flat_start(unbalanced4, sysadm),
                           inj, evaluator=ev)
        m = ev.free_nodes.size
        p_load = sum(l.p_power + l.p_current + l.p_impedance
                     for l in unbalanced4.loads)
        p_gen = sum(g.p_kw for g in unbalanced4.inverters) / 1000.0
        slack_adj = ev.slack_nodes  # slack rows are excluded from the residual
        assert slack_adj.size == 3
        assert np.sum(r[:m]) == pytest.approx(p_gen - p_load, abs=1e-9)


class TestJacobian:
    @pytest.mark.parametrize("case", ["balanced4", "unbalanced4", "ieee13_mod"])
    def test_matches_central_differences(self, case_dir, case):
        net = load_case((case_dir / f"{case}.json").read_text())
        sysadm = assemble_ybus(net)
        ev = FlowEvaluator(net, sysadm)
        inj = InjectionSet.from_setpoints(net, sysadm)
        rng = np.random.default_rng(42)
        h = 1e-6
        m = ev.free_nodes.size
        for trial in range(3):
            state = flat_start(net, sysadm)
            state.vm[ev.free_nodes] += rng.uniform(-0.05, 0.05, size=m)
            state.va[ev.free_nodes] += rng.uniform(-0.05, 0.05, size=m)
            jac = mismatch_jacobian(net, sysadm, state, inj, evaluator=ev)
            cols = rng.choice(2 * m, size=min(12, 2 * m), replace=False)
            for j in cols:
                plus = state.copy()
                minus = state.copy()
                if j < m:
                    plus.va[ev.free_nodes[j]] += h
                    minus.va[ev.free_nodes[j]] -= h
                else:
                    plus.vm[ev.free_nodes[j - m]] += h
                    minus.vm[ev.free_nodes[j - m]] -= h
                fd = (power_mismatch(net, sysadm, plus, inj, evaluator=ev)
                      - power_mismatch(net, sysadm, minus, inj, evaluator=ev)) / (2 * h)
                err = np.max(np.abs(jac[:, j] - fd))
                assert err < 1e-6, f"column {j}: {err:.2e}"


class TestInjections:
    def test_setpoints_land_on_inverter_nodes(self, unbalanced4):
        sysadm = assemble_ybus(unbalanced4)
        q = np.array([0.011, -0.007])
        inj = InjectionSet.from_setpoints(unbalanced4, sysadm, q_inv=q)
        for g, qv in zip(unbalanced4.inverters, q):
            k = sysadm.bus_nodes(g.bus, g.phase)[0]
            assert inj.p_gen[k] == pytest.approx(g.p_kw / 1000.0)
            assert inj.q_gen[k] == pytest.approx(qv)
        others = np.ones(sysadm.n_nodes, bool)
        for g in unbalanced4.inverters:
            others[sysadm.bus_nodes(g.bus, g.phase)[0]] = False
        assert np.all(inj.p_gen[others] == 0.0)
        assert np.all(inj.q_gen[others] == 0.0)


class TestEnergyBalance:
    @pytest.mark.parametrize("case", ["unbalanced4", "ieee13_mod"])
    def test_loss_equals_generation_minus_demand(self, case_dir, case):
        net = load_case((case_dir / f"{case}.json").read_text())
        sysadm = assemble_ybus(net)
        ev = FlowEvaluator(net, sysadm)
        res = solve_powerflow(net, sysadm, tol=1e-10, evaluator=ev)
        pd, _ = ev.loads.demand(res.state.vm, res.state.va)
        p_gen = np.sum(res.slack_p) + sum(g.p_kw for g in net.inverters) / 1000.0
        loss_kw = network_losses(sysadm, res.state)
        assert loss_kw == pytest.approx((p_gen - np.sum(pd)) * net.s_base,
                                        rel=1e-7)
        assert loss_kw > 0


class TestZipPolynomial:
    def test_constant_impedance_scaling(self):
        from tpopf.netmodel import ZipLoad
        load = ZipLoad(bus="x", configuration="wye", phase="a",
                       p_impedance=0.1)
        s = zip_load_power(load, 0.95)
        assert s.real == pytest.approx(0.1 * 0.95 ** 2, rel=1e-12)
        assert s.real * 1000.0 == pytest.approx(90.25)

    def test_mixture_at_nominal_voltage(self):
        from tpopf.netmodel import ZipLoad
        load = ZipLoad(bus="x", configuration="wye", phase="a",
                       p_power=0.04, p_current=0.03, p_impedance=0.03,
                       q_power=0.01, q_current=0.005, q_impedance=0.005)
        s = zip_load_power(load, 1.0)
        assert s == pytest.approx(0.1 + 0.02j, rel=1e-12)
