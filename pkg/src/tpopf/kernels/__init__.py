"""Hot-path numeric kernels with a compiled core and a NumPy fallback.

Everything the Newton and interior-point loops evaluate per iteration funnels
through five primitives on a shared CSR pattern:

* nodal complex power injections S = u * conj(Y u)
* the four polar power-flow Jacobian data arrays
* value/gradient of a Hermitian quadratic form phi(u) = conj(u)^T H u
* the three polar Hessian data arrays of such a form
* the Hermitian weight matrix that turns multiplier-weighted power balance
  into a single quadratic form

The compiled backend (Cython, built as tpopf.kernels._core) is used when the
extension imported successfully; set TPOPF_PURE_PYTHON=1 to force the
fallback. Both backends are exercised against each other in the test suite.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import pure as _pure

_compiled = None
if os.environ.get("TPOPF_PURE_PYTHON", "").strip() in ("", "0"):
    try:
        from . import _core as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _pure


def backend_name() -> str:
    """Active backend, "compiled" or "pure"."""
    return "compiled" if _impl is _compiled and _compiled is not None else "pure"


def available_backends() -> list[str]:
    out = ["pure"]
    if _compiled is not None:
        out.insert(0, "compiled")
    return out


def set_backend(name: str) -> None:
    """Switch backends at runtime (tests and benchmarks)."""
    global _impl
    if name == "pure":
        _impl = _pure
    elif name == "compiled":
        if _compiled is None:
            raise ValueError("compiled kernels are not available")
        _impl = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class CsrPattern:
    """Precomputed CSR structure shared by all kernel calls on one matrix.

    Attributes:
        n: matrix dimension.
        indptr, indices: CSR structure (sorted, structural diagonal present,
            structurally symmetric pattern).
        rows: row index of each stored entry.
        dpos: position of the diagonal entry of each row.
        tpos: position of the transposed entry for each stored entry.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    rows: np.ndarray
    dpos: np.ndarray
    tpos: np.ndarray

    @staticmethod
    def from_csr(mat: sp.csr_matrix) -> "CsrPattern":
        mat = mat.tocsr()
        mat.sort_indices()
        n = mat.shape[0]
        indptr = mat.indptr.astype(np.int64)
        indices = mat.indices.astype(np.int64)
        nnz = indices.shape[0]
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))

        dpos = np.empty(n, dtype=np.int64)
        for i in range(n):
            lo, hi = indptr[i], indptr[i + 1]
            k = lo + np.searchsorted(indices[lo:hi], i)
            if k >= hi or indices[k] != i:
                raise ValueError(f"pattern lacks diagonal entry at row {i}")
            dpos[i] = k

        tagged = sp.csr_matrix((np.arange(nnz, dtype=np.int64), indices, indptr),
                               shape=(n, n))
        transposed = tagged.T.tocsr()
        transposed.sort_indices()
        if not (np.array_equal(transposed.indptr, indptr)
                and np.array_equal(transposed.indices, indices)):
            raise ValueError("pattern is not structurally symmetric")
        tpos = transposed.data.astype(np.int64)
        return CsrPattern(n, indptr, indices, rows, dpos, tpos)


def complex_voltage(vm: np.ndarray, va: np.ndarray) -> np.ndarray:
    """Node phasors from magnitudes and angles."""
    return vm * np.exp(1j * va)


def nodal_power(pat: CsrPattern, ydata: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Complex nodal injections S = u * conj(Y u)."""
    return _impl.nodal_power(pat.indptr, pat.indices, pat.rows, ydata, u)


def power_jacobian(pat: CsrPattern, ydata: np.ndarray, u: np.ndarray,
                   vm: np.ndarray, s: np.ndarray):
    """Data arrays (dP/dth, dP/dV, dQ/dth, dQ/dV) on the shared pattern.

    s must be the nodal_power of the same (ydata, u).
    """
    return _impl.power_jacobian(pat.indptr, pat.indices, pat.rows, pat.dpos,
                                ydata, u, vm, s)


def qform_value_grad(pat: CsrPattern, hdata: np.ndarray, u: np.ndarray,
                     vm: np.ndarray):
    """(value, d/dth, d/dV) of conj(u)^T H u for Hermitian H."""
    return _impl.qform_value_grad(pat.indptr, pat.indices, pat.rows, hdata, u, vm)


def qform_hessian(pat: CsrPattern, hdata: np.ndarray, u: np.ndarray,
                  vm: np.ndarray):
    """Data arrays (H_thth, H_thV, H_VV) of the quadratic form's Hessian.

    H_thV entry k is the mixed derivative d2/dth_row dV_col at pattern
    position k; the th-th and V-V blocks are symmetric on this pattern.
    """
    return _impl.qform_hessian(pat.indptr, pat.indices, pat.rows, pat.dpos,
                               hdata, u, vm)


def hermitian_flow_weights(pat: CsrPattern, ydata: np.ndarray,
                           kappa: np.ndarray) -> np.ndarray:
    """Hermitian H with conj(u)^T H u = sum_i Re(kappa_i * S_i(u)).

    With kappa = lam_p - 1j*lam_q this turns the multiplier-weighted power
    balance terms into one quadratic form, so qform_hessian yields the exact
    flow contribution to a Lagrangian Hessian.
    """
    return _impl.hermitian_flow_weights(pat.indices, pat.rows, pat.tpos, ydata, kappa)
