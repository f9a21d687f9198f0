"""Admittance assembly: transformer connection table, regulator model,
line blocks, and system-level structure."""

import json

import numpy as np
import pytest

from tpopf.admittance import (assemble_ybus, line_branch_admittance,
                              regulator_admittance, transformer_submatrices)
from tpopf.netmodel import Regulator, load_case

SQRT3 = np.sqrt(3.0)

# Independent constructions of the three building-block matrices, written
# out entry by entry rather than reusing the package's helpers.
def _block_one(y):
    return y * np.eye(3, dtype=complex)


def _block_two(y):
    m = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], dtype=complex)
    return (y / 3.0) * m


def _block_three(y):
    m = np.array([[-1, 1, 0], [0, -1, 1], [1, 0, -1]], dtype=complex)
    return (y / SQRT3) * m


# Expected block placement per connection code: (Y_ii, Y_jj, Y_ij, Y_ji)
# as functions of the three building blocks.
_EXPECTED = {
    "YNyn0": lambda y1, y2, y3: (y1, y1, -y1, -y1),
    "Yy0": lambda y1, y2, y3: (y2, y2, -y2, -y2),
    "YNd1": lambda y1, y2, y3: (y1, y2, y3, y3.T),
    "Yd1": lambda y1, y2, y3: (y2, y2, y3, y3.T),
    "Dyn1": lambda y1, y2, y3: (y2, y1, y3, y3.T),
    "Dyn11": lambda y1, y2, y3: (y2, y1, y3.T, y3),
}


class TestConnectionTable:
    @pytest.mark.parametrize("code", sorted(_EXPECTED))
    def test_blocks_match_independent_construction(self, code):
        y_t = 0.8 - 4.0j
        got = transformer_submatrices(code, y_t)
        want = _EXPECTED[code](_block_one(y_t), _block_two(y_t),
                               _block_three(y_t))
        for g, w in zip(got, want):
            assert np.max(np.abs(g - w)) < 1e-12

    @pytest.mark.parametrize("code", sorted(_EXPECTED))
    def test_blocks_match_winding_incidence_model(self, code):
        """Rebuild each connection from winding incidence matrices.

        A two-winding bank with per-phase leakage admittance y has the six-node
        admittance [[C1' y C1, -C1' y C2], [-C2' y C1, C2' y C2]] where C maps
        node voltages to winding voltages: identity for grounded wye, identity
        minus the zero-sequence projector for ungrounded wye, and scaled
        pair-difference matrices for the two delta orientations.
        """
        y_t = 1.3 - 6.5j
        eye = np.eye(3, dtype=complex)
        wye_ung = eye - np.ones((3, 3), dtype=complex) / 3.0
        delta_lag = np.array([[1, -1, 0], [0, 1, -1], [-1, 0, 1]],
                             dtype=complex) / SQRT3
        delta_lead = np.array([[1, 0, -1], [-1, 1, 0], [0, -1, 1]],
                              dtype=complex) / SQRT3
        winding = {
            "YNyn0": (eye, eye),
            "Yy0": (wye_ung, wye_ung),
            "YNd1": (eye, delta_lag),
            "Yd1": (wye_ung, delta_lag),
            "Dyn1": (delta_lead, eye),
            "Dyn11": (delta_lag, eye),
        }
        c1, c2 = winding[code]
        y_ii = y_t * (c1.conj().T @ c1)
        y_jj = y_t * (c2.conj().T @ c2)
        y_ij = -y_t * (c1.conj().T @ c2)
        y_ji = -y_t * (c2.conj().T @ c1)
        got = transformer_submatrices(code, y_t)
        for g, w in zip(got, (y_ii, y_jj, y_ij, y_ji)):
            assert np.max(np.abs(g - w)) < 1e-12

    def test_unknown_code_raises(self):
        with pytest.raises(ValueError):
            transformer_submatrices("Zz9", 1.0)

    def test_delta_coupling_blocks_block_zero_sequence(self):
        """Delta windings cannot exchange zero-sequence current, so the
        coupling blocks of every delta-containing connection annihilate
        the all-ones vector from both sides."""
        ones = np.ones(3)
        for code in ("YNd1", "Yd1", "Dyn1", "Dyn11"):
            _, _, y_ij, y_ji = transformer_submatrices(code, 2.0 - 9.0j)
            assert np.max(np.abs(y_ij @ ones)) < 1e-12
            assert np.max(np.abs(ones @ y_ij)) < 1e-12
            assert np.max(np.abs(y_ji @ ones)) < 1e-12


class TestRegulator:
    def test_tap_scaling_rule(self):
        reg = Regulator("x", "y", taps=(1.05, 1.0, 0.95), y_t=1.0 + 0.0j)
        y_ii, y_jj, y_ij, y_ji = regulator_admittance(reg)
        assert np.allclose(np.diag(y_ii).real, [1.1025, 1.0, 0.9025],
                           atol=1e-12)
        assert np.allclose(np.diag(y_ij).real, [-1.05, -1.0, -0.95],
                           atol=1e-12)
        assert np.allclose(y_jj, np.eye(3), atol=1e-12)

    def test_no_load_voltage_ratio(self):
        """With zero current, the to-side voltage is taps times the
        from-side voltage, so (v, t*v) lies in the null space."""
        rng = np.random.default_rng(7)
        for _ in range(10):
            taps = tuple(rng.uniform(0.9, 1.1, size=3))
            y_t = complex(rng.uniform(1, 5), -rng.uniform(5, 30))
            reg = Regulator("x", "y", taps=taps, y_t=y_t)
            y_ii, y_jj, y_ij, y_ji = regulator_admittance(reg)
            full = np.block([[y_ii, y_ij], [y_ji, y_jj]])
            v = rng.normal(size=3) + 1j * rng.normal(size=3)
            stacked = np.concatenate([v, np.asarray(taps) * v])
            assert np.max(np.abs(full @ stacked)) < 1e-12

    def test_unity_taps_match_grounded_pair(self):
        reg = Regulator("x", "y", taps=(1.0, 1.0, 1.0), y_t=3.0 - 12.0j)
        got = regulator_admittance(reg)
        want = transformer_submatrices("YNyn0", 3.0 - 12.0j)
        for g, w in zip(got, want):
            assert np.max(np.abs(g - w)) < 1e-12

    def test_nonpositive_tap_rejected(self):
        reg = Regulator("x", "y", taps=(1.0, 0.0, 1.0), y_t=1.0)
        with pytest.raises(ValueError):
            regulator_admittance(reg)


class TestLineBlocks:
    def test_series_block_is_inverse_of_z(self, unbalanced4):
        br = unbalanced4.branches[0]
        adm = line_branch_admittance(br)
        y = np.linalg.inv(br.z_series)
        assert np.max(np.abs(adm.y_series - y)) < 1e-12
        assert np.max(np.abs(adm.y_shunt_from
                             - 1j * np.diag(br.b_shunt))) < 1e-12
        assert np.max(np.abs(adm.y_shunt_to
                             - 1j * np.diag(br.b_shunt))) < 1e-12

    def test_singular_impedance_rejected(self, unbalanced4):
        import dataclasses
        br = dataclasses.replace(unbalanced4.branches[0],
                                 z_series=np.zeros((3, 3), dtype=complex))
        with pytest.raises(ValueError):
            line_branch_admittance(br)

    def test_partial_phase_embedding(self, feeder13):
        """A two-conductor branch lands in the right rows of a wider block."""
        br = next(b for b in feeder13.branches if len(b.phases) == 2)
        from tpopf.netmodel import PhaseSet
        adm = line_branch_admittance(br, PhaseSet.from_string("abc"),
                                     PhaseSet.from_string("abc"))
        idx = list(br.phases.indices())
        missing = [i for i in range(3) if i not in idx]
        assert np.max(np.abs(adm.y_series[missing, :])) == 0.0
        assert np.max(np.abs(adm.y_series[:, missing])) == 0.0
        y = np.linalg.inv(br.z_series)
        assert np.max(np.abs(adm.y_series[np.ix_(idx, idx)] - y)) < 1e-12

    def test_row_sums_equal_shunt(self, unbalanced4):
        """For a line-only network the series parts cancel in each row sum,
        leaving exactly the shunt injection at that node."""
        sysadm = assemble_ybus(unbalanced4)
        rowsum = np.asarray(
            sysadm.ybus @ np.ones(sysadm.n_nodes, dtype=complex))

        expected = np.zeros(sysadm.n_nodes, dtype=complex)
        for br in unbalanced4.branches:
            for end in (br.from_bus, br.to_bus):
                nodes = sysadm.bus_nodes(end, br.phases)
                expected[nodes] += 1j * br.b_shunt
        assert np.max(np.abs(rowsum - expected)) < 1e-12


class TestSystemAssembly:
    def test_node_ordering_is_bus_major(self, feeder13, feeder13_adm):
        nodes = feeder13_adm.nodes
        bus_order = [b.id for b in feeder13.buses]
        seen = [bus for bus, _ in nodes]
        positions = [bus_order.index(b) for b in seen]
        assert positions == sorted(positions)

    def test_node_count(self, feeder13, feeder13_adm):
        assert feeder13_adm.n_nodes == sum(len(b.phases)
                                           for b in feeder13.buses)

    def test_pattern_is_structurally_symmetric(self, feeder13_adm):
        """CsrPattern.from_csr raises on asymmetric patterns, so building
        one doubles as the structural check; tpos must be an involution."""
        from tpopf.kernels import CsrPattern
        pat = CsrPattern.from_csr(feeder13_adm.ybus)
        assert np.array_equal(pat.tpos[pat.tpos],
                              np.arange(len(pat.tpos)))
        assert np.array_equal(pat.indices[pat.dpos],
                              np.arange(pat.n))

    def test_line_network_matrix_is_symmetric(self, unbalanced4):
        """A reciprocal network of lines has a complex-symmetric matrix."""
        sysadm = assemble_ybus(unbalanced4)
        diff = sysadm.ybus - sysadm.ybus.T
        assert np.max(np.abs(diff.toarray())) < 1e-12
