# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels, the mirror of tpopf.kernels.pure.

Single C loops over the stored entries instead of NumPy scatter/gather.
Every function takes the same raw structure arrays as the pure backend and
returns identical dtypes and shapes, so the import-time backend choice is
invisible to callers.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.float64_t f64
ctypedef cnp.complex128_t c128


def nodal_power(indptr, indices, rows, ydata, u):
    """Complex nodal injections S = u * conj(Y u)."""
    cdef const i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const c128[::1] yd = np.ascontiguousarray(ydata, dtype=np.complex128)
    cdef const c128[::1] uv = np.ascontiguousarray(u, dtype=np.complex128)
    cdef Py_ssize_t n = ip.shape[0] - 1
    out_arr = np.empty(n, dtype=np.complex128)
    cdef c128[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double complex acc
    for i in range(n):
        acc = 0
        for k in range(ip[i], ip[i + 1]):
            acc = acc + yd[k] * uv[ix[k]]
        out[i] = uv[i] * acc.conjugate()
    return out_arr


def power_jacobian(indptr, indices, rows, dpos, ydata, u, vm, s):
    """Data arrays (dP/dth, dP/dV, dQ/dth, dQ/dV) on the shared pattern."""
    cdef const i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const i64[::1] dg = np.ascontiguousarray(dpos, dtype=np.int64)
    cdef const c128[::1] yd = np.ascontiguousarray(ydata, dtype=np.complex128)
    cdef const c128[::1] uv = np.ascontiguousarray(u, dtype=np.complex128)
    cdef const f64[::1] vv = np.ascontiguousarray(vm, dtype=np.float64)
    cdef const c128[::1] sv = np.ascontiguousarray(s, dtype=np.complex128)
    cdef Py_ssize_t n = ip.shape[0] - 1
    cdef Py_ssize_t nnz = ix.shape[0]
    dpdt_arr = np.empty(nnz, dtype=np.float64)
    dpdv_arr = np.empty(nnz, dtype=np.float64)
    dqdt_arr = np.empty(nnz, dtype=np.float64)
    dqdv_arr = np.empty(nnz, dtype=np.float64)
    cdef f64[::1] dpdt = dpdt_arr
    cdef f64[::1] dpdv = dpdv_arr
    cdef f64[::1] dqdt = dqdt_arr
    cdef f64[::1] dqdv = dqdv_arr
    cdef Py_ssize_t i, k
    cdef double complex a
    cdef double vc
    for i in range(n):
        for k in range(ip[i], ip[i + 1]):
            # a = u_i * conj(Y_ij u_j): every entry is a projection of it
            a = uv[i] * (yd[k] * uv[ix[k]]).conjugate()
            vc = vv[ix[k]]
            dpdt[k] = a.imag
            dqdt[k] = -a.real
            dpdv[k] = a.real / vc
            dqdv[k] = a.imag / vc
        k = dg[i]
        dpdt[k] -= sv[i].imag
        dqdt[k] += sv[i].real
        dpdv[k] += sv[i].real / vv[i]
        dqdv[k] += sv[i].imag / vv[i]
    return dpdt_arr, dpdv_arr, dqdt_arr, dqdv_arr


def qform_value_grad(indptr, indices, rows, hdata, u, vm):
    """(value, d/dth, d/dV) of conj(u)^T H u for Hermitian H."""
    cdef const i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const c128[::1] hd = np.ascontiguousarray(hdata, dtype=np.complex128)
    cdef const c128[::1] uv = np.ascontiguousarray(u, dtype=np.complex128)
    cdef const f64[::1] vv = np.ascontiguousarray(vm, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    g_t_arr = np.empty(n, dtype=np.float64)
    g_v_arr = np.empty(n, dtype=np.float64)
    cdef f64[::1] g_t = g_t_arr
    cdef f64[::1] g_v = g_v_arr
    cdef Py_ssize_t i, k
    cdef double complex acc, w
    cdef double value = 0.0
    for i in range(n):
        acc = 0
        for k in range(ip[i], ip[i + 1]):
            acc = acc + hd[k] * uv[ix[k]]
        w = uv[i].conjugate() * acc
        value += w.real
        g_t[i] = 2.0 * w.imag
        g_v[i] = 2.0 * w.real / vv[i]
    return value, g_t_arr, g_v_arr


def qform_hessian(indptr, indices, rows, dpos, hdata, u, vm):
    """Data arrays (H_thth, H_thV, H_VV) of the quadratic form's Hessian."""
    cdef const i64[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const i64[::1] dg = np.ascontiguousarray(dpos, dtype=np.int64)
    cdef const c128[::1] hd = np.ascontiguousarray(hdata, dtype=np.complex128)
    cdef const c128[::1] uv = np.ascontiguousarray(u, dtype=np.complex128)
    cdef const f64[::1] vv = np.ascontiguousarray(vm, dtype=np.float64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    cdef Py_ssize_t nnz = ix.shape[0]
    h_tt_arr = np.empty(nnz, dtype=np.float64)
    h_tv_arr = np.empty(nnz, dtype=np.float64)
    h_vv_arr = np.empty(nnz, dtype=np.float64)
    cdef f64[::1] h_tt = h_tt_arr
    cdef f64[::1] h_tv = h_tv_arr
    cdef f64[::1] h_vv = h_vv_arr
    cdef Py_ssize_t i, k
    cdef double complex acc, w, c
    for i in range(n):
        acc = 0
        for k in range(ip[i], ip[i + 1]):
            acc = acc + hd[k] * uv[ix[k]]
        w = uv[i].conjugate() * acc
        for k in range(ip[i], ip[i + 1]):
            c = uv[i].conjugate() * hd[k] * uv[ix[k]]
            h_tt[k] = 2.0 * c.real
            h_tv[k] = 2.0 * c.imag / vv[ix[k]]
            h_vv[k] = 2.0 * c.real / (vv[i] * vv[ix[k]])
        k = dg[i]
        h_tt[k] -= 2.0 * w.real
        h_tv[k] += 2.0 * w.imag / vv[i]
    return h_tt_arr, h_tv_arr, h_vv_arr


def hermitian_flow_weights(indices, rows, tpos, ydata, kappa):
    """Hermitian H with conj(u)^T H u = sum_i Re(kappa_i * S_i(u))."""
    cdef const i64[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef const i64[::1] rw = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const i64[::1] tp = np.ascontiguousarray(tpos, dtype=np.int64)
    cdef const c128[::1] yd = np.ascontiguousarray(ydata, dtype=np.complex128)
    cdef const c128[::1] kp = np.ascontiguousarray(kappa, dtype=np.complex128)
    cdef Py_ssize_t nnz = ix.shape[0]
    out_arr = np.empty(nnz, dtype=np.complex128)
    cdef c128[::1] out = out_arr
    cdef Py_ssize_t k
    for k in range(nnz):
        out[k] = 0.5 * (yd[tp[k]].conjugate() * kp[ix[k]]
                        + yd[k] * kp[rw[k]].conjugate())
    return out_arr
