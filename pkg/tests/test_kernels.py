"""CSR numeric kernels: correctness against dense/finite-difference
references and parity between the two backends."""

import numpy as np
import pytest
import scipy.sparse as sp

from tpopf import kernels
from tpopf.kernels import CsrPattern, complex_voltage


def _random_system(rng, n, density=0.4, hermitian=False):
    """Random complex matrix with symmetric pattern and full diagonal."""
    mask = rng.random((n, n)) < density
    mask |= mask.T
    np.fill_diagonal(mask, True)
    mat = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) * mask
    if hermitian:
        mat = 0.5 * (mat + mat.conj().T)
    csr = sp.csr_matrix(mat)
    csr.sort_indices()
    pat = CsrPattern.from_csr(csr)
    return pat, csr.data.copy(), mat


def _random_state(rng, n):
    vm = rng.uniform(0.9, 1.1, size=n)
    va = rng.uniform(-np.pi, np.pi, size=n)
    return vm, va


class TestPattern:
    def test_rejects_missing_diagonal(self):
        mat = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 1.0]]))
        mat.eliminate_zeros()
        with pytest.raises(ValueError):
            CsrPattern.from_csr(mat)

    def test_rejects_asymmetric_pattern(self):
        mat = sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
        with pytest.raises(ValueError):
            CsrPattern.from_csr(mat)

    def test_transpose_positions(self):
        rng = np.random.default_rng(0)
        pat, data, dense = _random_system(rng, 12)
        transposed = np.empty_like(data)
        transposed[pat.tpos] = data
        rebuilt = np.zeros_like(dense)
        rebuilt[pat.rows, pat.indices] = transposed
        assert np.max(np.abs(rebuilt - dense.T)) < 1e-14


class TestNodalPower:
    def test_matches_dense_formula(self):
        rng = np.random.default_rng(1)
        for n in (2, 5, 17):
            pat, data, dense = _random_system(rng, n)
            vm, va = _random_state(rng, n)
            u = complex_voltage(vm, va)
            s = kernels.nodal_power(pat, data, u)
            assert np.max(np.abs(s - u * np.conj(dense @ u))) < 1e-12


class TestPowerJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-7
        for trial in range(5):
            n = int(rng.integers(3, 12))
            pat, data, dense = _random_system(rng, n)
            vm, va = _random_state(rng, n)

            def s_of(vm_, va_):
                u = complex_voltage(vm_, va_)
                return kernels.nodal_power(pat, data, u)

            u = complex_voltage(vm, va)
            s = kernels.nodal_power(pat, data, u)
            dpdt, dpdv, dqdt, dqdv = kernels.power_jacobian(pat, data, u, vm, s)

            jp_t = np.zeros((n, n))
            jp_v = np.zeros((n, n))
            jq_t = np.zeros((n, n))
            jq_v = np.zeros((n, n))
            jp_t[pat.rows, pat.indices] = dpdt
            jp_v[pat.rows, pat.indices] = dpdv
            jq_t[pat.rows, pat.indices] = dqdt
            jq_v[pat.rows, pat.indices] = dqdv

            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                ds_t = (s_of(vm, va + e) - s_of(vm, va - e)) / (2 * h)
                ds_v = (s_of(vm + e, va) - s_of(vm - e, va)) / (2 * h)
                assert np.max(np.abs(jp_t[:, j] - ds_t.real)) < 1e-6
                assert np.max(np.abs(jq_t[:, j] - ds_t.imag)) < 1e-6
                assert np.max(np.abs(jp_v[:, j] - ds_v.real)) < 1e-6
                assert np.max(np.abs(jq_v[:, j] - ds_v.imag)) < 1e-6


class TestQuadraticForm:
    def test_value_matches_dense(self):
        rng = np.random.default_rng(3)
        pat, data, dense = _random_system(rng, 9, hermitian=True)
        vm, va = _random_state(rng, 9)
        u = complex_voltage(vm, va)
        val, _, _ = kernels.qform_value_grad(pat, data, u, vm)
        want = (np.conj(u) @ dense @ u).real
        assert val == pytest.approx(want, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        h = 1e-7
        for trial in range(5):
            n = int(rng.integers(3, 10))
            pat, data, _ = _random_system(rng, n, hermitian=True)
            vm, va = _random_state(rng, n)
            u = complex_voltage(vm, va)
            _, g_t, g_v = kernels.qform_value_grad(pat, data, u, vm)

            def val(vm_, va_):
                v, _, _ = kernels.qform_value_grad(
                    pat, data, complex_voltage(vm_, va_), vm_)
                return v

            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                fd_t = (val(vm, va + e) - val(vm, va - e)) / (2 * h)
                fd_v = (val(vm + e, va) - val(vm - e, va)) / (2 * h)
                assert g_t[j] == pytest.approx(fd_t, rel=1e-6, abs=1e-8)
                assert g_v[j] == pytest.approx(fd_v, rel=1e-6, abs=1e-8)

    def test_hessian_matches_gradient_differences(self):
        rng = np.random.default_rng(5)
        h = 1e-6
        for trial in range(4):
            n = int(rng.integers(3, 9))
            pat, data, _ = _random_system(rng, n, hermitian=True)
            vm, va = _random_state(rng, n)
            u = complex_voltage(vm, va)
            h_tt, h_tv, h_vv = kernels.qform_hessian(pat, data, u, vm)

            d_tt = np.zeros((n, n))
            d_tv = np.zeros((n, n))
            d_vv = np.zeros((n, n))
            d_tt[pat.rows, pat.indices] = h_tt
            d_tv[pat.rows, pat.indices] = h_tv
            d_vv[pat.rows, pat.indices] = h_vv

            def grads(vm_, va_):
                _, g_t, g_v = kernels.qform_value_grad(
                    pat, data, complex_voltage(vm_, va_), vm_)
                return g_t, g_v

            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                gt_p, gv_p = grads(vm, va + e)
                gt_m, gv_m = grads(vm, va - e)
                assert np.max(np.abs(d_tt[:, j] - (gt_p - gt_m) / (2 * h))) < 2e-5
                # mixed block: d2/dth_row dV_col, so column j varies V_j
                gt_p, gv_p = grads(vm + e, va)
                gt_m, gv_m = grads(vm - e, va)
                assert np.max(np.abs(d_tv[:, j] - (gt_p - gt_m) / (2 * h))) < 2e-5
                assert np.max(np.abs(d_vv[:, j] - (gv_p - gv_m) / (2 * h))) < 2e-5

    def test_hessian_blocks_are_symmetric(self):
        rng = np.random.default_rng(6)
        pat, data, _ = _random_system(rng, 11, hermitian=True)
        vm, va = _random_state(rng, 11)
        u = complex_voltage(vm, va)
        h_tt, h_tv, h_vv = kernels.qform_hessian(pat, data, u, vm)
        assert np.max(np.abs(h_tt - h_tt[pat.tpos])) < 1e-12
        assert np.max(np.abs(h_vv - h_vv[pat.tpos])) < 1e-12


class TestFlowWeights:
    def test_weighted_power_identity(self):
        """conj(u)^T H u must equal sum_i Re(kappa_i S_i) for any u."""
        rng = np.random.default_rng(7)
        for trial in range(5):
            n = int(rng.integers(3, 12))
            pat, data, _ = _random_system(rng, n)
            kappa = rng.normal(size=n) + 1j * rng.normal(size=n)
            hdata = kernels.hermitian_flow_weights(pat, data, kappa)
            for _ in range(3):
                vm, va = _random_state(rng, n)
                u = complex_voltage(vm, va)
                s = kernels.nodal_power(pat, data, u)
                val, _, _ = kernels.qform_value_grad(pat, hdata, u, vm)
                want = float(np.sum((kappa * s).real))
                assert val == pytest.approx(want, rel=1e-12, abs=1e-12)

    def test_result_is_hermitian(self):
        rng = np.random.default_rng(8)
        pat, data, _ = _random_system(rng, 10)
        kappa = rng.normal(size=10) + 1j * rng.normal(size=10)
        hdata = kernels.hermitian_flow_weights(pat, data, kappa)
        assert np.max(np.abs(hdata - np.conj(hdata[pat.tpos]))) < 1e-12


needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(),
    reason="compiled backend not built")


@needs_compiled
class TestBackendParity:
    """The compiled extension and the NumPy fallback must agree to
    rounding on every primitive."""

    def _both(self, fn_name, *args):
        prior = kernels.backend_name()
        try:
            kernels.set_backend("pure")
            ref = getattr(kernels, fn_name)(*args)
            kernels.set_backend("compiled")
            got = getattr(kernels, fn_name)(*args)
        finally:
            kernels.set_backend(prior)
        return ref, got

    def test_all_primitives_agree(self):
        rng = np.random.default_rng(9)
        for trial in range(5):
            n = int(rng.integers(3, 30))
            pat, data, _ = _random_system(rng, n)
            hpat, hdata, _ = _random_system(rng, n, hermitian=True)
            vm, va = _random_state(rng, n)
            u = complex_voltage(vm, va)
            s = kernels.nodal_power(pat, data, u)
            kappa = rng.normal(size=n) + 1j * rng.normal(size=n)

            ref, got = self._both("nodal_power", pat, data, u)
            assert np.max(np.abs(ref - got)) < 1e-14

            ref, got = self._both("power_jacobian", pat, data, u, vm, s)
            for r, g in zip(ref, got):
                assert np.max(np.abs(r - g)) < 1e-13

            ref, got = self._both("qform_value_grad", hpat, hdata, u, vm)
            assert ref[0] == pytest.approx(got[0], rel=1e-13, abs=1e-13)
            for r, g in zip(ref[1:], got[1:]):
                assert np.max(np.abs(r - g)) < 1e-13

            ref, got = self._both("qform_hessian", hpat, hdata, u, vm)
            for r, g in zip(ref, got):
                assert np.max(np.abs(r - g)) < 1e-13

            ref, got = self._both("hermitian_flow_weights", pat, data, kappa)
            assert np.max(np.abs(ref - got)) < 1e-13
