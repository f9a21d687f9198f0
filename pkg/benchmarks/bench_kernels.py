"""Timing comparison of the two kernel backends.

The five CSR primitives behind the Newton and interior-point loops exist in
two implementations, a Cython extension and a vectorized NumPy fallback. This
script first checks that both backends agree on every primitive, then reports
the time per call for the shipped 13-bus feeder pattern and a sweep of
synthetic system sizes.

Run from the repository root after installing the package:

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 100,1000,10000 --target-ms 20
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from tpopf import kernels
from tpopf.admittance import assemble_ybus
from tpopf.netmodel import load_case_file

CASE = Path(__file__).resolve().parent.parent / "cases" / "ieee13_mod.json"


def synthetic_matrix(rng, n):
    """Admittance-like complex CSR matrix: random symmetric couplings with a
    dominant diagonal, roughly seven stored entries per row."""
    k = 3 * n
    i = rng.integers(0, n, size=k)
    j = rng.integers(0, n, size=k)
    mask = sp.coo_matrix((np.ones(k), (i, j)), shape=(n, n)).tocsr()
    mask = mask + mask.T + sp.identity(n, format="csr")
    coo = mask.tocoo()
    vals = -(rng.uniform(1.0, 5.0, coo.nnz) + 1j * rng.uniform(5.0, 15.0, coo.nnz))
    y = sp.csr_matrix((vals, (coo.row, coo.col)), shape=(n, n))
    y = (y + y.conj().T).tocsr()
    row_mag = np.asarray(np.abs(y).sum(axis=1)).ravel()
    y = (y + sp.diags(row_mag + 1.0)).tocsr()
    y.sort_indices()
    return y


def system_inputs(rng, y):
    """Pattern plus one consistent set of arguments for all five primitives."""
    pat = kernels.CsrPattern.from_csr(y)
    ydata = y.data.astype(np.complex128)
    vm = rng.uniform(0.95, 1.05, pat.n)
    va = rng.uniform(-0.3, 0.3, pat.n)
    u = kernels.complex_voltage(vm, va)
    s = kernels.nodal_power(pat, ydata, u)
    kappa = rng.standard_normal(pat.n) + 1j * rng.standard_normal(pat.n)
    hdata = kernels.hermitian_flow_weights(pat, ydata, kappa)
    return [
        ("nodal_power", kernels.nodal_power, (pat, ydata, u)),
        ("power_jacobian", kernels.power_jacobian, (pat, ydata, u, vm, s)),
        ("qform_value_grad", kernels.qform_value_grad, (pat, hdata, u, vm)),
        ("qform_hessian", kernels.qform_hessian, (pat, hdata, u, vm)),
        ("hermitian_flow_weights", kernels.hermitian_flow_weights,
         (pat, ydata, kappa)),
    ]


def flatten(out):
    parts = out if isinstance(out, tuple) else (out,)
    return np.concatenate(
        [np.atleast_1d(np.asarray(p)).ravel().astype(np.complex128)
         for p in parts])


def check_agreement(calls):
    """Largest relative disagreement between backends over all primitives."""
    per_backend = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        per_backend[backend] = [flatten(fn(*args)) for _, fn, args in calls]
    worst = 0.0
    ref = per_backend["pure"]
    for backend, outs in per_backend.items():
        for a, b in zip(ref, outs):
            scale = max(1.0, float(np.max(np.abs(a))))
            worst = max(worst, float(np.max(np.abs(a - b))) / scale)
    return worst


def time_call(fn, args, target_ms):
    """Best-of-three mean time per call, batch sized to run ~target_ms."""
    fn(*args)
    t0 = time.perf_counter()
    fn(*args)
    once = time.perf_counter() - t0
    inner = max(1, int(target_ms / 1000.0 / max(once, 1e-9)))
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def format_us(seconds):
    return f"{seconds * 1e6:9.1f} us"


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="time the CSR kernels on both backends")
    parser.add_argument("--sizes", default="50,500,5000",
                        help="comma-separated synthetic system sizes")
    parser.add_argument("--target-ms", type=float, default=5.0,
                        help="timing batch length per measurement")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("note: compiled backend not built, timing the fallback only")

    systems = []
    if CASE.exists():
        net = load_case_file(str(CASE))
        y = assemble_ybus(net).ybus.tocsr()
        y.sort_indices()
        systems.append(("feeder13", y))
    for size in args.sizes.split(","):
        n = int(size)
        systems.append((f"synthetic-{n}", synthetic_matrix(rng, n)))

    initial = kernels.backend_name()
    header = f"{'system':<16}{'n':>7}{'nnz':>9}  {'primitive':<24}"
    for backend in backends:
        header += f"{backend:>15}"
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    try:
        for name, y in systems:
            calls = system_inputs(rng, y)
            worst = check_agreement(calls)
            if worst > 1e-10:
                raise SystemExit(
                    f"backend disagreement {worst:.2e} on {name}, not timing")
            for prim, fn, call_args in calls:
                timings = {}
                for backend in backends:
                    kernels.set_backend(backend)
                    timings[backend] = time_call(fn, call_args, args.target_ms)
                row = (f"{name:<16}{y.shape[0]:>7}{y.nnz:>9}  {prim:<24}")
                for backend in backends:
                    row += f"{format_us(timings[backend]):>15}"
                if len(backends) > 1:
                    row += f"{timings['pure'] / timings['compiled']:>9.1f}x"
                print(row)
            print(f"{'':16}agreement: max relative difference {worst:.2e}")
    finally:
        kernels.set_backend(initial)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
