"""Vectorized NumPy implementations of the CSR kernels.

Mirrors tpopf.kernels._core exactly; used when the compiled extension is
unavailable or disabled. All functions take raw CSR structure arrays so the
two backends stay drop-in interchangeable.
"""

from __future__ import annotations

import numpy as np


def _matvec(rows, indices, data, x, n):
    prod = data * x[indices]
    return (np.bincount(rows, weights=prod.real, minlength=n)
            + 1j * np.bincount(rows, weights=prod.imag, minlength=n))


def nodal_power(indptr, indices, rows, ydata, u):
    n = indptr.shape[0] - 1
    return u * np.conj(_matvec(rows, indices, ydata, u, n))


def power_jacobian(indptr, indices, rows, dpos, ydata, u, vm, s):
    # a_k = u_i * conj(Y_ij u_j): every Jacobian entry is a projection of it
    a = u[rows] * np.conj(ydata * u[indices])
    dpdt = a.imag.copy()
    dqdt = -a.real
    dpdv = a.real / vm[indices]
    dqdv = a.imag / vm[indices]
    dpdt[dpos] -= s.imag
    dqdt[dpos] += s.real
    dpdv[dpos] += s.real / vm
    dqdv[dpos] += s.imag / vm
    return dpdt, dpdv, dqdt, dqdv


def qform_value_grad(indptr, indices, rows, hdata, u, vm):
    n = indptr.shape[0] - 1
    w = np.conj(u) * _matvec(rows, indices, hdata, u, n)
    value = float(np.sum(w.real))
    return value, 2.0 * w.imag, 2.0 * w.real / vm


def qform_hessian(indptr, indices, rows, dpos, hdata, u, vm):
    n = indptr.shape[0] - 1
    w = np.conj(u) * _matvec(rows, indices, hdata, u, n)
    c = np.conj(u)[rows] * hdata * u[indices]
    h_tt = 2.0 * c.real
    h_tt[dpos] -= 2.0 * w.real
    h_tv = 2.0 * c.imag / vm[indices]
    h_tv[dpos] += 2.0 * w.imag / vm
    h_vv = 2.0 * c.real / (vm[rows] * vm[indices])
    return h_tt, h_tv, h_vv


def hermitian_flow_weights(indices, rows, tpos, ydata, kappa):
    return 0.5 * (np.conj(ydata[tpos]) * kappa[indices]
                  + ydata * np.conj(kappa[rows]))
