"""Voltage-unbalance metrics, network losses, and feeder summaries.

Three established unbalance definitions coexist and disagree:

* VUF: magnitude ratio of negative- to positive-sequence voltage (IEC usage).
* LVUR: max deviation of the three line-to-line magnitudes from their mean,
  over the mean (NEMA usage); insensitive to angle unbalance.
* PVUR: same ratio on line-to-ground magnitudes (IEEE usage).

All metrics are returned as fractions; rendering as percent is left to the
presentation layer. They are defined at three-phase buses only. For mildly
unbalanced states LVUR and VUF track each other within a factor of about
2/sqrt(3); PVUR has no comparable functional tie to either.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .admittance import SystemAdmittance
from .netmodel import Network
from .powerflow import VoltageState

# rotation operator, 1 at 120 degrees
_A = cmath.rect(1.0, 2.0 * math.pi / 3.0)


@dataclass(frozen=True)
class SequencePair:
    """Positive- and negative-sequence phasors of a three-phase set [pu]."""

    v_pos: complex
    v_neg: complex


@dataclass
class UnbalanceSummary:
    """Average and maximum of each metric over three-phase buses.

    The bus attaining each maximum is recorded; averages are plain means over
    the three-phase buses (substation included).
    """

    vuf_avg: float
    vuf_max: float
    vuf_max_bus: str
    lvur_avg: float
    lvur_max: float
    lvur_max_bus: str
    pvur_avg: float
    pvur_max: float
    pvur_max_bus: str


def sequence_components(va: complex, vb: complex, vc: complex) -> SequencePair:
    """Symmetrical-component decomposition (positive and negative sequence)."""
    v_pos = (va + _A * vb + _A * _A * vc) / 3.0
    v_neg = (va + _A * _A * vb + _A * vc) / 3.0
    return SequencePair(v_pos, v_neg)


def vuf(va: complex, vb: complex, vc: complex) -> float:
    """|negative sequence| / |positive sequence| as a fraction.

    Raises:
        ValueError: the positive-sequence magnitude is zero (the ratio is
            undefined, e.g. for a reversed-rotation set).
    """
    seq = sequence_components(va, vb, vc)
    denom = abs(seq.v_pos)
    scale = max(abs(va), abs(vb), abs(vc))
    if denom <= 1e-12 * scale or scale == 0.0:
        raise ValueError("zero positive sequence, VUF undefined")
    return abs(seq.v_neg) / denom


def line_to_line_magnitudes(vm, va) -> tuple[float, float, float]:
    """(V_ab, V_bc, V_ca) from per-phase magnitudes and angles.

    Args:
        vm: (V_a, V_b, V_c) magnitudes [pu].
        va: (th_a, th_b, th_c) angles [rad].
    """
    def pair(i: int, j: int) -> float:
        sq = vm[i] ** 2 + vm[j] ** 2 - 2.0 * vm[i] * vm[j] * math.cos(va[i] - va[j])
        return math.sqrt(max(sq, 0.0))

    return pair(0, 1), pair(1, 2), pair(2, 0)


def _max_deviation_ratio(values) -> float:
    mean = sum(values) / 3.0
    return max(abs(v - mean) for v in values) / mean


def lvur(v_ab: float, v_bc: float, v_ca: float) -> float:
    """Line voltage unbalance rate as a fraction."""
    return _max_deviation_ratio((v_ab, v_bc, v_ca))


def pvur(v_a: float, v_b: float, v_c: float) -> float:
    """Phase voltage unbalance rate as a fraction."""
    return _max_deviation_ratio((v_a, v_b, v_c))


def network_losses(sysadm: SystemAdmittance, state: VoltageState) -> float:
    """Total series losses [kW], summed per device.

    Lines contribute Re(drop * conj(series current)) per phase; transformers
    and regulators contribute the power absorbed by their two-port blocks.
    Shunt susceptances are lossless and do not appear.
    """
    u = state.u
    total = 0.0
    for dev in sysadm.device_blocks:
        uf = u[dev.from_nodes]
        ut = u[dev.to_nodes]
        if dev.y_series is not None:
            drop = uf - ut
            i_se = dev.y_series @ drop
            total += float(np.sum(drop * np.conj(i_se)).real)
        else:
            i_f = dev.y_ii @ uf + dev.y_ij @ ut
            i_t = dev.y_ji @ uf + dev.y_jj @ ut
            total += float((np.sum(uf * np.conj(i_f)) + np.sum(ut * np.conj(i_t))).real)
    return total * sysadm.s_base


def substation_power_factor(p_slack, q_slack) -> float:
    """Ratio of total real to total apparent substation power.

    Args:
        p_slack, q_slack: per-phase injections, any consistent unit.

    Raises:
        ValueError: zero total apparent power.
    """
    p = np.asarray(p_slack, dtype=float)
    q = np.asarray(q_slack, dtype=float)
    s = np.hypot(p, q)
    total_s = float(np.sum(s))
    if total_s == 0.0:
        raise ValueError("zero apparent power, power factor undefined")
    return float(np.sum(p)) / total_s


def bus_unbalance(net: Network, sysadm: SystemAdmittance,
                  state: VoltageState) -> dict[str, tuple[float, float, float]]:
    """(VUF, LVUR, PVUR) per three-phase bus."""
    u = state.u
    out: dict[str, tuple[float, float, float]] = {}
    for bus in net.buses:
        if not bus.phases.is_three_phase:
            continue
        nodes = sysadm.bus_nodes(bus.id, bus.phases)
        ua, ub, uc = u[nodes]
        vm = state.vm[nodes]
        va = state.va[nodes]
        vll = line_to_line_magnitudes(vm, va)
        out[bus.id] = (vuf(ua, ub, uc), lvur(*vll), pvur(*vm))
    return out


def feeder_unbalance_summary(net: Network, sysadm: SystemAdmittance,
                             state: VoltageState) -> UnbalanceSummary:
    """Averages and maxima of all three metrics over three-phase buses.

    Raises:
        ValueError: the network has no three-phase bus.
    """
    per_bus = bus_unbalance(net, sysadm, state)
    if not per_bus:
        raise ValueError("no three-phase bus in the network")

    def agg(idx: int) -> tuple[float, float, str]:
        vals = {bus: m[idx] for bus, m in per_bus.items()}
        max_bus = max(vals, key=lambda b: vals[b])
        return (sum(vals.values()) / len(vals), vals[max_bus], max_bus)

    vuf_avg, vuf_max, vuf_bus = agg(0)
    lvur_avg, lvur_max, lvur_bus = agg(1)
    pvur_avg, pvur_max, pvur_bus = agg(2)
    return UnbalanceSummary(vuf_avg, vuf_max, vuf_bus,
                            lvur_avg, lvur_max, lvur_bus,
                            pvur_avg, pvur_max, pvur_bus)
