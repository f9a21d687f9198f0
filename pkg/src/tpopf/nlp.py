"""General nonlinear programming solvers used by the dispatch problems.

Two methods solve the same problem form:

    minimize    f(x)
    subject to  c(x)  = 0
                h(x) >= 0
                lb <= x <= ub

* ``solve_interior_point``: primal-dual interior point with slacks for the
  inequalities, a monotone barrier schedule, inertia-corrected symmetric
  indefinite KKT solves, a filter line search with one second-order
  correction, and a Gauss-Newton feasibility restoration phase.
* ``solve_auglag``: augmented-Lagrangian outer loop with bound-constrained
  L-BFGS-B inner solves; slower but independent of the KKT machinery, kept
  as a cross-check fallback.

Multiplier sign convention used throughout (and expected from
``lag_hessian``): stationarity is grad f + J_c^T y - J_h^T z - zL + zU = 0
with z, zL, zU >= 0, so ``lag_hessian(x, sigma, y, z)`` must return
sigma * hess(f) + sum_i y_i hess(c_i) - sum_j z_j hess(h_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass
class NlpProblem:
    """Smooth NLP with dense callbacks.

    Attributes:
        n: number of variables.
        x0: start point (clipped into the bound interior by the solver).
        lb, ub: bounds, +-inf where absent; lb < ub elementwise.
        objective: x -> (f, grad).
        eq: x -> (c, J) with c(x) = 0 desired, J dense (m_e, n); or None.
        ineq: x -> (h, J) with h(x) >= 0 desired, J dense (m_i, n); or None.
        lag_hessian: (x, sigma, y, z) -> dense symmetric (n, n), see module
            docstring for the sign convention.
    """

    n: int
    x0: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    objective: Callable
    eq: Callable | None = None
    ineq: Callable | None = None
    lag_hessian: Callable | None = None


@dataclass
class NlpResult:
    """Solver outcome.

    status is one of "optimal", "max_iter", "infeasible"; kkt carries the
    final (stationarity, feasibility, complementarity) infinity norms.
    """

    x: np.ndarray
    f: float
    status: str
    iterations: int
    kkt: dict = field(default_factory=dict)
    y: np.ndarray = None
    z: np.ndarray = None
    mu: float = 0.0
    message: str = ""


def _eval_all(prob: NlpProblem, x: np.ndarray):
    f, g = prob.objective(x)
    if prob.eq is not None:
        c, jc = prob.eq(x)
    else:
        c, jc = np.zeros(0), np.zeros((0, prob.n))
    if prob.ineq is not None:
        h, jh = prob.ineq(x)
    else:
        h, jh = np.zeros(0), np.zeros((0, prob.n))
    return f, g, c, jc, h, jh


def _inertia(d: np.ndarray) -> tuple[int, int, int]:
    """Eigenvalue signs of the block-diagonal factor from scipy's ldl."""
    n = d.shape[0]
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and (d[i + 1, i] != 0.0 or d[i, i + 1] != 0.0):
            a, b, c2 = d[i, i], d[i + 1, i + 1], d[i, i + 1]
            det = a * b - c2 * c2
            tr = a + b
            if det < 0.0:
                pos += 1
                neg += 1
            elif det > 0.0:
                if tr > 0.0:
                    pos += 2
                else:
                    neg += 2
            else:
                zero += 2
            i += 2
        else:
            v = d[i, i]
            if v > 0.0:
                pos += 1
            elif v < 0.0:
                neg += 1
            else:
                zero += 1
            i += 1
    return pos, neg, zero


class _KktSolver:
    """Symmetric indefinite KKT solve with inertia correction.

    Small systems go through dense LDL with an exact inertia count; systems
    above the dense cutoff use sparse LU where the inertia guarantee is
    replaced by an escalation on factorization failure.
    """

    DENSE_CUTOFF = 1500

    def __init__(self):
        self.delta_last = 0.0

    def solve(self, h_bar: np.ndarray, jc: np.ndarray, rhs: np.ndarray,
              mu: float):
        n = h_bar.shape[0]
        me = jc.shape[0]
        dim = n + me
        if dim <= self.DENSE_CUTOFF:
            return self._solve_dense(h_bar, jc, rhs, n, me, mu)
        return self._solve_sparse(h_bar, jc, rhs, n, me)

    def _trials(self):
        if self.delta_last == 0.0:
            yield 0.0
            delta = 1e-4
        else:
            yield 0.0
            delta = max(1e-20, self.delta_last / 3.0)
        for _ in range(40):
            yield delta
            delta *= 10.0

    def _solve_dense(self, h_bar, jc, rhs, n, me, mu):
        delta_c = 0.0
        for delta in self._trials():
            kkt = np.zeros((n + me, n + me))
            kkt[:n, :n] = h_bar
            if delta > 0.0:
                kkt[:n, :n] += delta * np.eye(n)
            if me:
                kkt[n:, :n] = jc
                kkt[:n, n:] = jc.T
                if delta_c > 0.0:
                    kkt[n:, n:] = -delta_c * np.eye(me)
            try:
                lu, d, perm = sla.ldl(kkt, lower=True)
            except Exception:
                continue
            pos, neg, zero = _inertia(d)
            if zero > 0 and delta_c == 0.0:
                delta_c = math.sqrt(np.finfo(float).eps) * max(mu, 1e-8)
                continue
            if pos == n and neg == me:
                if delta > 0.0:
                    self.delta_last = delta
                try:
                    step = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    continue
                return step, delta
        raise RuntimeError("KKT inertia correction failed")

    def _solve_sparse(self, h_bar, jc, rhs, n, me):
        for delta in self._trials():
            h = sp.csc_matrix(h_bar + delta * np.eye(n))
            if me:
                jcs = sp.csc_matrix(jc)
                kkt = sp.bmat([[h, jcs.T], [jcs, None]], format="csc")
            else:
                kkt = h
            try:
                lu = spla.splu(kkt)
                step = lu.solve(rhs)
            except (RuntimeError, ValueError):
                continue
            if np.all(np.isfinite(step)):
                if delta > 0.0:
                    self.delta_last = delta
                return step, delta
        raise RuntimeError("sparse KKT factorization failed")


def _clip_interior(x0, lb, ub):
    """Push the start strictly inside the bounds (fraction rules)."""
    x = np.array(x0, dtype=float)
    span = ub - lb
    kappa = 1e-2
    lo_pad = np.where(np.isfinite(lb),
                      np.minimum(kappa * np.maximum(1.0, np.abs(lb)),
                                 np.where(np.isfinite(span), kappa * span, np.inf)),
                      0.0)
    hi_pad = np.where(np.isfinite(ub),
                      np.minimum(kappa * np.maximum(1.0, np.abs(ub)),
                                 np.where(np.isfinite(span), kappa * span, np.inf)),
                      0.0)
    lo = np.where(np.isfinite(lb), lb + lo_pad, -np.inf)
    hi = np.where(np.isfinite(ub), ub - hi_pad, np.inf)
    return np.minimum(np.maximum(x, lo), hi)


def solve_interior_point(prob: NlpProblem, *, kkt_tol: float = 1e-6,
                         feas_tol: float = 1e-6, max_iter: int = 200,
                         mu0: float = 1e-2, verbose: bool = False) -> NlpResult:
    """Filter line-search interior-point solve of an NlpProblem.

    Returns status "optimal" once the unscaled KKT error drops below kkt_tol
    and constraint violation below feas_tol; "max_iter" or "infeasible"
    otherwise, with the best iterate found.
    """
    n = prob.n
    lb = np.asarray(prob.lb, dtype=float)
    ub = np.asarray(prob.ub, dtype=float)
    if np.any(~(lb < ub)):
        raise ValueError("need lb < ub elementwise (fixed variables are not supported)")
    has_lb = np.isfinite(lb)
    has_ub = np.isfinite(ub)

    x = _clip_interior(prob.x0, lb, ub)
    f, g, c, jc, h, jh = _eval_all(prob, x)
    me, mi = c.shape[0], h.shape[0]

    s = np.maximum(h, 1e-2) if mi else np.zeros(0)
    mu = mu0
    y = np.zeros(me)
    z = np.full(mi, mu) / np.maximum(s, 1.0) if mi else np.zeros(0)
    zl = np.where(has_lb, mu / np.maximum(x - lb, 1e-8), 0.0)
    zu = np.where(has_ub, mu / np.maximum(ub - x, 1e-8), 0.0)

    kkt_solver = _KktSolver()

    tau_min = 0.99
    gamma_theta, gamma_phi = 1e-5, 1e-5
    s_theta, s_phi, delta_sw = 1.1, 2.3, 1.0
    eta_phi = 1e-8
    kappa_eps, kappa_mu, theta_mu = 10.0, 0.2, 1.5
    kappa_sigma = 1e10

    def theta_of(c_, h_, s_):
        t = 0.0
        if me:
            t += float(np.sum(np.abs(c_)))
        if mi:
            t += float(np.sum(np.abs(h_ - s_)))
        return t

    def phi_of(f_, x_, s_):
        val = f_
        if mi:
            if np.any(s_ <= 0.0):
                return np.inf
            val -= mu * float(np.sum(np.log(s_)))
        dl = x_[has_lb] - lb[has_lb]
        du = ub[has_ub] - x_[has_ub]
        if np.any(dl <= 0.0) or np.any(du <= 0.0):
            return np.inf
        val -= mu * (float(np.sum(np.log(dl))) + float(np.sum(np.log(du))))
        return val

    def kkt_error(g_, jc_, jh_, c_, h_, s_, y_, z_, zl_, zu_, mu_):
        r1 = g_.copy()
        if me:
            r1 += jc_.T @ y_
        if mi:
            r1 -= jh_.T @ z_
        r1 -= zl_
        r1 += zu_
        # Ipopt-style scaling of the dual norms keeps huge multipliers from
        # stalling convergence on degenerate active sets
        s_max = 100.0
        total = float(np.sum(np.abs(y_)) + np.sum(np.abs(z_))
                      + np.sum(np.abs(zl_)) + np.sum(np.abs(zu_)))
        count = max(1, me + mi + int(has_lb.sum()) + int(has_ub.sum()))
        s_d = max(s_max, total / count) / s_max
        comp = 0.0
        if mi:
            comp = max(comp, float(np.max(np.abs(s_ * z_ - mu_))))
        if has_lb.any():
            comp = max(comp, float(np.max(np.abs((x[has_lb] - lb[has_lb]) * zl_[has_lb] - mu_))))
        if has_ub.any():
            comp = max(comp, float(np.max(np.abs((ub[has_ub] - x[has_ub]) * zu_[has_ub] - mu_))))
        s_c = max(s_max, total / count) / s_max
        stat = float(np.max(np.abs(r1))) if n else 0.0
        feas = 0.0
        if me:
            feas = max(feas, float(np.max(np.abs(c_))))
        if mi:
            feas = max(feas, float(np.max(np.abs(h_ - s_))))
        return max(stat / s_d, feas, comp / s_c), stat, feas, comp

    theta0 = theta_of(c, h, s)
    theta_max = 1e4 * max(1.0, theta0)
    filt: list[tuple[float, float]] = [(theta_max, -np.inf)]

    status = "max_iter"
    message = ""
    it = 0
    n_resto = 0

    for it in range(1, max_iter + 1):
        err0, stat0, feas0, comp0 = kkt_error(g, jc, jh, c, h, s, y, z, zl, zu, 0.0)
        if err0 <= kkt_tol and feas0 <= feas_tol:
            status = "optimal"
            break

        err_mu, _, _, _ = kkt_error(g, jc, jh, c, h, s, y, z, zl, zu, mu)
        while err_mu <= kappa_eps * mu and mu > kkt_tol / 20.0:
            mu = max(kkt_tol / 20.0, min(kappa_mu * mu, mu ** theta_mu))
            err_mu, _, _, _ = kkt_error(g, jc, jh, c, h, s, y, z, zl, zu, mu)

        # assemble the condensed system
        if prob.lag_hessian is not None:
            w = prob.lag_hessian(x, 1.0, y, z)
        else:
            w = np.zeros((n, n))
        dl = np.where(has_lb, zl / np.maximum(x - lb, 1e-300), 0.0)
        du = np.where(has_ub, zu / np.maximum(ub - x, 1e-300), 0.0)
        h_bar = w + np.diag(dl + du)
        grad_phi_x = g - np.where(has_lb, mu / (x - lb), 0.0) \
                       + np.where(has_ub, mu / (ub - x), 0.0)
        rhs_x = grad_phi_x.copy()
        if me:
            rhs_x += jc.T @ y
        if mi:
            sigma_s = z / s
            h_bar += jh.T @ (sigma_s[:, None] * jh)
            r3 = h - s
            rhs_x -= jh.T @ (mu / s - sigma_s * r3)

        rhs = np.concatenate([-rhs_x, -c]) if me else -rhs_x
        step, _ = kkt_solver.solve(h_bar, jc, rhs, mu)
        dx = step[:n]
        dy = step[n:] if me else np.zeros(0)
        if mi:
            ds = jh @ dx + r3
            dz = mu / s - z - sigma_s * ds
        else:
            ds = np.zeros(0)
            dz = np.zeros(0)
        dzl = np.where(has_lb, mu / (x - lb) - zl - dl * dx, 0.0)
        dzu = np.where(has_ub, mu / (ub - x) - zu + du * dx, 0.0)

        # fraction to the boundary
        tau = max(tau_min, 1.0 - mu)

        def max_alpha(v, dv, active):
            if not active.any():
                return 1.0
            shrink = dv[active] < 0.0
            if not shrink.any():
                return 1.0
            return float(min(1.0, np.min(-tau * v[active][shrink] / dv[active][shrink])))

        alpha_max = 1.0
        alpha_max = min(alpha_max, max_alpha(x - lb, dx, has_lb))
        alpha_max = min(alpha_max, max_alpha(ub - x, -dx, has_ub))
        if mi:
            alpha_max = min(alpha_max, max_alpha(s, ds, np.ones(mi, dtype=bool)))
        alpha_z = 1.0
        if mi:
            alpha_z = min(alpha_z, max_alpha(z, dz, np.ones(mi, dtype=bool)))
        alpha_z = min(alpha_z, max_alpha(zl, dzl, has_lb))
        alpha_z = min(alpha_z, max_alpha(zu, dzu, has_ub))

        theta_k = theta_of(c, h, s)
        phi_k = phi_of(f, x, s)
        dphi = float(grad_phi_x @ dx)
        if mi:
            dphi -= mu * float(np.sum(ds / s))

        if dphi < 0.0:
            alpha_min = 0.05 * min(gamma_theta,
                                   gamma_phi * theta_k / (-dphi) if theta_k > 0 else gamma_theta,
                                   delta_sw * theta_k ** s_theta / (-dphi) ** s_phi
                                   if theta_k > 0 else gamma_theta)
        else:
            alpha_min = 0.05 * gamma_theta
        alpha_min = max(alpha_min, 1e-16)

        def acceptable_to_filter(theta_t, phi_t):
            for th_f, ph_f in filt:
                if not (theta_t <= (1.0 - gamma_theta) * th_f
                        or phi_t <= ph_f - gamma_phi * th_f):
                    return False
            return True

        def try_point(x_t, s_t):
            f_t, g_t, c_t, jc_t, h_t, jh_t = _eval_all(prob, x_t)
            return (f_t, g_t, c_t, jc_t, h_t, jh_t,
                    theta_of(c_t, h_t, s_t), phi_of(f_t, x_t, s_t))

        accepted = False
        soc_done = False
        alpha = alpha_max
        trial = None
        while alpha >= alpha_min:
            x_t = x + alpha * dx
            s_t = s + alpha * ds if mi else s
            f_t, g_t, c_t, jc_t, h_t, jh_t, theta_t, phi_t = try_point(x_t, s_t)

            switching = (dphi < 0.0 and
                         alpha * (-dphi) ** s_phi > delta_sw * theta_k ** s_theta)
            armijo = phi_t <= phi_k + eta_phi * alpha * dphi
            progress = (theta_t <= (1.0 - gamma_theta) * theta_k
                        or phi_t <= phi_k - gamma_phi * theta_k)

            ok_filter = theta_t < theta_max and acceptable_to_filter(theta_t, phi_t)
            if ok_filter and ((switching and armijo) or (not switching and progress)):
                accepted = True
                ftype = switching and armijo
                break

            # one second-order correction at the full step when the
            # constraint violation got worse
            if (not soc_done and alpha == alpha_max and me
                    and theta_t >= theta_k):
                soc_done = True
                rhs_soc = np.concatenate([-rhs_x, -(alpha * c + c_t)])
                try:
                    step_soc, _ = kkt_solver.solve(h_bar, jc, rhs_soc, mu)
                except RuntimeError:
                    step_soc = None
                if step_soc is not None:
                    dx_soc = step_soc[:n]
                    a_soc = 1.0
                    a_soc = min(a_soc, max_alpha(x - lb, dx_soc, has_lb))
                    a_soc = min(a_soc, max_alpha(ub - x, -dx_soc, has_ub))
                    if mi:
                        ds_soc = jh @ dx_soc + r3
                        a_soc = min(a_soc, max_alpha(s, ds_soc, np.ones(mi, dtype=bool)))
                    else:
                        ds_soc = ds
                    x_t2 = x + a_soc * dx_soc
                    s_t2 = s + a_soc * ds_soc if mi else s
                    f2, g2, c2, jc2, h2, jh2, th2, ph2 = try_point(x_t2, s_t2)
                    sw2 = (dphi < 0.0 and
                           a_soc * (-dphi) ** s_phi > delta_sw * theta_k ** s_theta)
                    ar2 = ph2 <= phi_k + eta_phi * a_soc * dphi
                    pr2 = (th2 <= (1.0 - gamma_theta) * theta_k
                           or ph2 <= phi_k - gamma_phi * theta_k)
                    if th2 < theta_max and acceptable_to_filter(th2, ph2) \
                            and ((sw2 and ar2) or (not sw2 and pr2)):
                        x_t, s_t = x_t2, s_t2
                        f_t, g_t, c_t, jc_t, h_t, jh_t = f2, g2, c2, jc2, h2, jh2
                        theta_t, phi_t = th2, ph2
                        dx, ds = dx_soc, ds_soc
                        alpha = a_soc
                        accepted = True
                        ftype = sw2 and ar2
                        break
            alpha *= 0.5

        if not accepted:
            # feasibility restoration
            n_resto += 1
            if n_resto > 5:
                status = "infeasible"
                message = f"restoration invoked too often (theta={theta_k:.3e})"
                break
            x_r, ok = _restore_feasibility(prob, x, lb, ub, theta_k)
            if not ok:
                status = "infeasible"
                message = f"feasibility restoration failed (theta={theta_k:.3e})"
                x = x_r
                f, g, c, jc, h, jh = _eval_all(prob, x)
                break
            x = _clip_interior(x_r, lb, ub)
            f, g, c, jc, h, jh = _eval_all(prob, x)
            if mi:
                s = np.maximum(h, 1e-8)
                z = np.minimum(np.maximum(z, mu / np.maximum(s, 1.0) * 0.0 + 1e-8),
                               kappa_sigma * mu / s)
                z = np.maximum(z, mu / (kappa_sigma * s))
            zl = np.where(has_lb, np.clip(zl, mu / (kappa_sigma * np.maximum(x - lb, 1e-12)),
                                          kappa_sigma * mu / np.maximum(x - lb, 1e-12)), 0.0)
            zu = np.where(has_ub, np.clip(zu, mu / (kappa_sigma * np.maximum(ub - x, 1e-12)),
                                          kappa_sigma * mu / np.maximum(ub - x, 1e-12)), 0.0)
            filt = [(theta_max, -np.inf)]
            continue

        if not ftype and theta_k > 0.0:
            filt.append(((1.0 - gamma_theta) * theta_k,
                         phi_k - gamma_phi * theta_k))

        x, s = x_t, s_t
        f, g, c, jc, h, jh = f_t, g_t, c_t, jc_t, h_t, jh_t
        if me:
            y = y + alpha_z * dy
        if mi:
            z = z + alpha_z * dz
            z = np.clip(z, mu / (kappa_sigma * s), kappa_sigma * mu / s)
        zl = zl + alpha_z * dzl
        zu = zu + alpha_z * dzu
        with np.errstate(divide="ignore", invalid="ignore"):
            zl = np.where(has_lb, np.clip(zl, mu / (kappa_sigma * (x - lb)),
                                          kappa_sigma * mu / (x - lb)), 0.0)
            zu = np.where(has_ub, np.clip(zu, mu / (kappa_sigma * (ub - x)),
                                          kappa_sigma * mu / (ub - x)), 0.0)

        if verbose:
            print(f"[ipm] it={it} f={f:.6e} theta={theta_of(c, h, s):.2e} "
                  f"mu={mu:.1e} alpha={alpha:.2e} err={err0:.2e}")

    err0, stat0, feas0, comp0 = kkt_error(g, jc, jh, c, h, s, y, z, zl, zu, 0.0)
    if status == "max_iter" and err0 <= kkt_tol and feas0 <= feas_tol:
        status = "optimal"
    return NlpResult(x=x, f=f, status=status, iterations=it,
                     kkt={"stationarity": stat0, "feasibility": feas0,
                          "complementarity": comp0},
                     y=y, z=z, mu=mu, message=message)


def _restore_feasibility(prob: NlpProblem, x0: np.ndarray, lb, ub,
                         theta_enter: float, max_iter: int = 30):
    """Damped Gauss-Newton decrease of the constraint violation.

    Minimizes 0.5*||c||^2 + 0.5*||min(h, 0)||^2 with steps clipped into the
    bounds. Returns (x, success).
    """
    x = np.clip(x0, lb, ub)

    def residual(x_):
        _, _, c_, jc_, h_, jh_ = _eval_all(prob, x_)
        viol = np.minimum(h_, 0.0)
        active = h_ < 0.0
        r = np.concatenate([c_, viol[active]])
        j = np.vstack([jc_, jh_[active]]) if (jc_.shape[0] or active.any()) \
            else np.zeros((0, x_.size))
        return r, j

    r, j = residual(x)
    best = 0.5 * float(r @ r)
    target = 0.5 * (0.9 * theta_enter) ** 2 if theta_enter > 0 else 0.0
    lam = 1e-6
    for _ in range(max_iter):
        if best <= max(target, 1e-24):
            return x, True
        a = j.T @ j + lam * np.eye(x.size)
        g_ = j.T @ r
        try:
            dx = np.linalg.solve(a, -g_)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        improved = False
        alpha = 1.0
        for _ in range(12):
            x_t = np.clip(x + alpha * dx, lb, ub)
            r_t, j_t = residual(x_t)
            val = 0.5 * float(r_t @ r_t)
            if val < best:
                x, r, j, best = x_t, r_t, j_t, val
                lam = max(lam / 3.0, 1e-10)
                improved = True
                break
            alpha *= 0.5
        if not improved:
            lam *= 10.0
            if lam > 1e8:
                break
    return x, best <= 0.5 * max(0.9 * theta_enter, 1e-10) ** 2


def solve_auglag(prob: NlpProblem, *, kkt_tol: float = 1e-6,
                 feas_tol: float = 1e-6, max_iter: int = 50,
                 verbose: bool = False) -> NlpResult:
    """Augmented-Lagrangian fallback with L-BFGS-B inner solves."""
    from scipy.optimize import minimize

    n = prob.n
    lb, ub = prob.lb, prob.ub
    x = np.clip(prob.x0, lb, ub)
    _, _, c, _, h, _ = _eval_all(prob, x)
    me, mi = c.shape[0], h.shape[0]
    y = np.zeros(me)
    z = np.zeros(mi)
    rho = 10.0

    def merit(x_):
        f_, g_, c_, jc_, h_, jh_ = _eval_all(prob, x_)
        val = f_
        grad = g_.copy()
        if me:
            val += float(y @ c_) + 0.5 * rho * float(c_ @ c_)
            grad += jc_.T @ (y + rho * c_)
        if mi:
            active = z - rho * h_
            pos = np.maximum(active, 0.0)
            val += float(np.sum(pos ** 2 - z ** 2)) / (2.0 * rho)
            grad -= jh_.T @ pos
        return val, grad

    bounds = [(None if not math.isfinite(lo) else lo,
               None if not math.isfinite(hi) else hi)
              for lo, hi in zip(lb, ub)]

    viol_prev = math.inf
    status = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        res = minimize(merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 800, "ftol": 1e-16, "gtol": 1e-12})
        x = res.x
        f, g, c, jc, h, jh = _eval_all(prob, x)
        viol = 0.0
        if me:
            viol = max(viol, float(np.max(np.abs(c))))
        if mi:
            viol = max(viol, float(np.max(np.maximum(-h, 0.0))))

        if me:
            y = y + rho * c
        if mi:
            z = np.maximum(z - rho * h, 0.0)

        # projected stationarity of the true Lagrangian
        r1 = g.copy()
        if me:
            r1 += jc.T @ y
        if mi:
            r1 -= jh.T @ z
        proj = np.clip(x - r1, lb, ub) - x
        stat = float(np.max(np.abs(proj))) if n else 0.0
        comp = float(np.max(np.abs(z * np.maximum(h, 0.0)))) if mi else 0.0

        if verbose:
            print(f"[al] it={it} f={f:.6e} viol={viol:.2e} stat={stat:.2e} rho={rho:.1e}")
        if viol <= feas_tol and stat <= kkt_tol * 10.0:
            status = "optimal"
            break
        # ramp the penalty only while infeasibility is still meaningful;
        # below feas_tol the 0.25 test compares rounding noise and would
        # escalate rho until the inner problem is unsolvable
        if viol > feas_tol and viol > 0.25 * viol_prev:
            rho = min(rho * 10.0, 1e10)
        viol_prev = viol

    return NlpResult(x=x, f=f, status=status, iterations=it,
                     kkt={"stationarity": stat, "feasibility": viol,
                          "complementarity": comp},
                     y=y, z=z, mu=0.0)
