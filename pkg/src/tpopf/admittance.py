"""Per-device admittance blocks and sparse system matrix assembly.

Every series device contributes four blocks to the node-level bus admittance
matrix: self blocks Y_ii, Y_jj on the diagonal and coupling blocks Y_ij, Y_ji
off the diagonal, all indexed over the phases that exist at each endpoint.
For pi-model lines the coupling block is minus the series admittance and each
end's listed shunt susceptance is added to the self block as given (the data
already carries per-end values, nothing is halved here). Transformer blocks
come from the standard grounded-wye / wye / delta connection table and are
added without any extra negation; regulators are the grounded-wye pair with
tap-scaled entries.

Node ordering: buses in case order, phases in order a < b < c within a bus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .netmodel import Branch, Network, PhaseSet, Regulator

_SQRT3 = math.sqrt(3.0)


@dataclass
class BranchAdmittance:
    """Admittance view of one pi-model line section.

    Attributes:
        y_series: series admittance embedded over (from-bus phases) x
            (to-bus phases); zero rows/columns where the branch does not
            carry a conductor.
        y_shunt_from, y_shunt_to: diagonal shunt blocks per endpoint [pu].
    """

    y_series: np.ndarray
    y_shunt_from: np.ndarray
    y_shunt_to: np.ndarray


@dataclass
class DeviceBlock:
    """Two-port admittance blocks of one series device, on node indices.

    For lines, y_series holds the plain series admittance over the branch
    phases (shunts excluded) so series currents and per-branch losses can be
    recovered; transformers and regulators leave it None and are handled via
    the four blocks.
    """

    kind: str
    from_bus: str
    to_bus: str
    from_nodes: np.ndarray
    to_nodes: np.ndarray
    y_ii: np.ndarray
    y_jj: np.ndarray
    y_ij: np.ndarray
    y_ji: np.ndarray
    y_series: np.ndarray | None = None


@dataclass
class SystemAdmittance:
    """Assembled node-level admittance matrix plus retained device blocks.

    Attributes:
        nodes: list of (bus_id, phase) in matrix order.
        index: (bus_id, phase) -> node integer.
        ybus: sparse complex matrix over nodes (CSR, structural diagonal and
            structurally symmetric pattern).
        device_blocks: per-device two-port blocks for currents and losses.
        s_base: system power base [kVA], copied from the Network.
    """

    nodes: list[tuple[str, str]]
    index: dict[tuple[str, str], int]
    ybus: sp.csr_matrix
    device_blocks: list[DeviceBlock] = field(default_factory=list)
    s_base: float = 1.0

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def G(self) -> sp.csr_matrix:
        """Real (conductance) view."""
        return sp.csr_matrix((self.ybus.data.real, self.ybus.indices, self.ybus.indptr),
                             shape=self.ybus.shape)

    @property
    def B(self) -> sp.csr_matrix:
        """Imaginary (susceptance) view."""
        return sp.csr_matrix((self.ybus.data.imag, self.ybus.indices, self.ybus.indptr),
                             shape=self.ybus.shape)

    def bus_nodes(self, bus_id: str, phases: PhaseSet | str) -> np.ndarray:
        """Node indices of the given phases at a bus, in a < b < c order."""
        return np.array([self.index[(bus_id, p)] for p in str(phases)], dtype=np.int64)


def line_branch_admittance(branch: Branch,
                           from_phases: PhaseSet | None = None,
                           to_phases: PhaseSet | None = None) -> BranchAdmittance:
    """Invert a branch's series impedance and embed it in the endpoint phase
    patterns.

    Args:
        branch: the line section.
        from_phases, to_phases: phases present at the endpoints; default to
            the branch's own phase set (square block).

    Raises:
        ValueError: singular series impedance.
    """
    z = np.asarray(branch.z_series, dtype=complex)
    try:
        y = np.linalg.inv(z)
    except np.linalg.LinAlgError:
        raise ValueError(
            f"singular z_series on branch {branch.from_bus}-{branch.to_bus}") from None

    fp = from_phases if from_phases is not None else branch.phases
    tp = to_phases if to_phases is not None else branch.phases
    fp_list, tp_list = list(str(fp)), list(str(tp))
    rows = [fp_list.index(p) for p in branch.phases]
    cols = [tp_list.index(p) for p in branch.phases]

    y_emb = np.zeros((len(fp_list), len(tp_list)), dtype=complex)
    y_emb[np.ix_(rows, cols)] = y

    sh_f = np.zeros(len(fp_list), dtype=complex)
    sh_t = np.zeros(len(tp_list), dtype=complex)
    sh_f[rows] = 1j * branch.b_shunt
    sh_t[cols] = 1j * branch.b_shunt
    return BranchAdmittance(y_emb, np.diag(sh_f), np.diag(sh_t))


def _y_one(y_t: complex) -> np.ndarray:
    return y_t * np.eye(3, dtype=complex)


def _y_two(y_t: complex) -> np.ndarray:
    return (y_t / 3.0) * np.array(
        [[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]], dtype=complex)


def _y_three(y_t: complex) -> np.ndarray:
    return (y_t / _SQRT3) * np.array(
        [[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]], dtype=complex)


def transformer_submatrices(connection: str, y_t: complex):
    """Four 3x3 blocks (Y_ii, Y_jj, Y_ij, Y_ji) for a winding connection code.

    The blocks are ready to add into the bus admittance matrix directly.

    Raises:
        ValueError: unknown connection code.
    """
    y1, y2, y3 = _y_one(y_t), _y_two(y_t), _y_three(y_t)
    table = {
        "YNyn0": (y1, y1, -y1, -y1),
        "Yy0": (y2, y2, -y2, -y2),
        "YNd1": (y1, y2, y3, y3.T),
        "Yd1": (y2, y2, y3, y3.T),
        "Dyn1": (y2, y1, y3, y3.T),
        "Dyn11": (y2, y1, y3.T, y3),
    }
    try:
        return tuple(m.copy() for m in table[connection])
    except KeyError:
        raise ValueError(f"unknown transformer connection {connection!r}") from None


def regulator_admittance(reg: Regulator):
    """Blocks for a per-phase regulator: the grounded-wye pair with the
    from-side diagonal scaled by tap ratios squared and the coupling
    diagonals scaled by minus the taps."""
    if any(t <= 0 for t in reg.taps):
        raise ValueError(f"regulator taps must be positive, got {reg.taps}")
    t = np.asarray(reg.taps, dtype=float)
    y_ii = np.diag(t * t).astype(complex) * reg.y_t
    y_jj = _y_one(reg.y_t)
    y_ij = np.diag(-t).astype(complex) * reg.y_t
    return y_ii, y_jj, y_ij, y_ij.copy()


def assemble_ybus(net: Network) -> SystemAdmittance:
    """Assemble the sparse node-level admittance matrix for a network.

    Blocks are accumulated per bus pair, then flattened to CSR with an
    explicit structural diagonal so downstream kernels can rely on diagonal
    entries existing.
    """
    nodes: list[tuple[str, str]] = []
    for bus in net.buses:
        for p in bus.phases:
            nodes.append((bus.id, p))
    index = {np_: k for k, np_ in enumerate(nodes)}
    n = len(nodes)
    phases_of = {bus.id: bus.phases for bus in net.buses}

    blocks: dict[tuple[str, str], np.ndarray] = {}

    def block(bi: str, bj: str) -> np.ndarray:
        key = (bi, bj)
        if key not in blocks:
            blocks[key] = np.zeros((len(phases_of[bi]), len(phases_of[bj])), dtype=complex)
        return blocks[key]

    device_blocks: list[DeviceBlock] = []

    for br in net.branches:
        fb, tb = br.from_bus, br.to_bus
        ba = line_branch_admittance(br, phases_of[fb], phases_of[tb])
        fp, tp = str(phases_of[fb]), str(phases_of[tb])
        rows = [fp.index(p) for p in br.phases]
        cols = [tp.index(p) for p in br.phases]
        y_se = np.linalg.inv(br.z_series)
        sh = np.diag(1j * br.b_shunt)

        block(fb, fb)[np.ix_(rows, rows)] += y_se + sh
        block(tb, tb)[np.ix_(cols, cols)] += y_se + sh
        block(fb, tb)[np.ix_(rows, cols)] += -y_se
        block(tb, fb)[np.ix_(cols, rows)] += -y_se

        fn = np.array([index[(fb, p)] for p in br.phases], dtype=np.int64)
        tn = np.array([index[(tb, p)] for p in br.phases], dtype=np.int64)
        device_blocks.append(DeviceBlock(
            "line", fb, tb, fn, tn,
            y_ii=y_se + sh, y_jj=y_se + sh, y_ij=-y_se, y_ji=-y_se,
            y_series=y_se,
        ))

    for tr in net.transformers:
        y_ii, y_jj, y_ij, y_ji = transformer_submatrices(tr.connection, tr.y_t)
        _add_three_phase(block, index, device_blocks, "transformer",
                         tr.from_bus, tr.to_bus, y_ii, y_jj, y_ij, y_ji)

    for rg in net.regulators:
        y_ii, y_jj, y_ij, y_ji = regulator_admittance(rg)
        _add_three_phase(block, index, device_blocks, "regulator",
                         rg.from_bus, rg.to_bus, y_ii, y_jj, y_ij, y_ji)

    rows_l, cols_l, data_l = [], [], []
    for (bi, bj), mat in blocks.items():
        ni = [index[(bi, p)] for p in phases_of[bi]]
        nj = [index[(bj, p)] for p in phases_of[bj]]
        for a, gi in enumerate(ni):
            for b, gj in enumerate(nj):
                rows_l.append(gi)
                cols_l.append(gj)
                data_l.append(mat[a, b])
    # structural diagonal, explicit zeros allowed
    for k in range(n):
        rows_l.append(k)
        cols_l.append(k)
        data_l.append(0.0 + 0.0j)

    ybus = sp.coo_matrix((data_l, (rows_l, cols_l)), shape=(n, n), dtype=complex).tocsr()
    ybus.sum_duplicates()
    ybus.sort_indices()
    return SystemAdmittance(nodes, index, ybus, device_blocks, s_base=net.s_base)


def _add_three_phase(block, index, device_blocks, kind, fb, tb, y_ii, y_jj, y_ij, y_ji):
    block(fb, fb)[:, :] += y_ii
    block(tb, tb)[:, :] += y_jj
    block(fb, tb)[:, :] += y_ij
    block(tb, fb)[:, :] += y_ji
    fn = np.array([index[(fb, p)] for p in "abc"], dtype=np.int64)
    tn = np.array([index[(tb, p)] for p in "abc"], dtype=np.int64)
    device_blocks.append(DeviceBlock(kind, fb, tb, fn, tn,
                                     y_ii=y_ii, y_jj=y_jj, y_ij=y_ij, y_ji=y_ji))


def dump_ybus_coo(sysadm: SystemAdmittance, path) -> None:
    """Write the admittance matrix as 'row col re im' text lines for external
    inspection."""
    coo = sysadm.ybus.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {sysadm.n_nodes} nodes, {coo.nnz} entries\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v.real:.16e} {v.imag:.16e}\n")
