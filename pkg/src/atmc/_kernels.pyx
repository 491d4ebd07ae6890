# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled chain-stepping kernels.

Twin of ``_kernels_py``: same argument contract, same update order, same
random-stream consumption (noise is pre-drawn by the caller).  The per-step
arithmetic runs in C; callback-mode gradients cross back into Python once
per step.  Transcendentals come from libm, so results can differ from the
numpy backend in the last couple of ulps but nothing more.
"""

from libc.math cimport exp, expm1, sqrt, fabs, hypot, isfinite, INFINITY

import numpy as np

from .errors import InvalidStateError


cdef inline double _policy_alpha(int pol_kind, double noise_level, double alpha0,
                                 double xi_i) noexcept nogil:
    cdef double a
    if pol_kind == 0:      # adaptive: withdraw noise as temperature rises
        a = noise_level - xi_i
        return a if a > 0.0 else 0.0
    elif pol_kind == 1:    # constant-noise thermostat
        return noise_level
    return alpha0          # fixed coefficients


cdef inline double _policy_beta(int pol_kind, double noise_level, double beta0,
                                double xi_i) noexcept nogil:
    if pol_kind == 0:
        return noise_level if noise_level > xi_i else xi_i
    elif pol_kind == 1:
        return noise_level + xi_i
    return beta0


cdef _raise_nonfinite(double[::1] theta, double[::1] p, double[::1] xi,
                      int pol_kind, double noise_level, double beta0,
                      double max_abs_grad, long long step):
    state = np.concatenate([np.asarray(theta), np.asarray(p), np.asarray(xi)])
    bad = int(np.flatnonzero(~np.isfinite(state))[0])
    comp = bad % theta.shape[0]
    beta_c = _policy_beta(pol_kind, noise_level, beta0, xi[comp])
    raise InvalidStateError(
        f"chain state non-finite at step {step}, component {comp} "
        f"(beta={beta_c:.6g}, max|grad|={max_abs_grad:.6g})",
        step=step,
        component=comp,
    )


def run_fused_block(double[::1] theta, double[::1] p, double[::1] xi,
                    double[::1] h,
                    double[:, ::1] eta_mom,
                    double[:, ::1] eta_grad,
                    double[::1] sigma_grad,
                    int kin_kind, double m, double c,
                    int pol_kind, double noise_level, double alpha0, double beta0,
                    bint evolve_xi,
                    int grad_mode, object grad_fn,
                    double[::1] g_mean, double[::1] g_prec,
                    double[:, ::1] lr_x, double[::1] lr_y, long long[:, ::1] lr_idx,
                    double lr_row_scale, double lr_prior_prec,
                    long long[::1] record_idx,
                    double[:, ::1] snap_out, double[:, ::1] diag_out,
                    double[::1] accum_theta, double[::1] accum_theta2,
                    double[::1] accum_xi,
                    Py_ssize_t accum_from,
                    long long step_offset):
    cdef Py_ssize_t k = h.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t n_rec = record_idx.shape[0]
    cdef Py_ssize_t kb = lr_idx.shape[1] if lr_idx is not None else 0
    cdef bint has_grad_noise = eta_grad is not None
    cdef double min_beta = INFINITY
    cdef double max_speed = 0.0
    cdef Py_ssize_t n_accum = 0
    cdef Py_ssize_t ridx = 0
    cdef Py_ssize_t j, i, b, row
    cdef double hj, av, bv, mv, u, v, bh, decay, g1, g2, chk, r, kin, acc
    cdef double max_abs_grad, beta_sum

    g_np = np.empty(d, dtype=np.float64)
    cdef double[::1] g = g_np
    cdef double[::1] g_cb

    for j in range(k):
        hj = h[j]

        if grad_mode == 1:
            for i in range(d):
                g[i] = (theta[i] - g_mean[i]) * g_prec[i]
        elif grad_mode == 2:
            for i in range(d):
                g[i] = lr_prior_prec * theta[i]
            for b in range(kb):
                row = <Py_ssize_t> lr_idx[j, b]
                r = -lr_y[row]
                for i in range(d):
                    r += lr_x[row, i] * theta[i]
                r *= lr_row_scale
                for i in range(d):
                    g[i] += r * lr_x[row, i]
        else:
            g_cb = np.ascontiguousarray(grad_fn(np.asarray(theta).copy()),
                                        dtype=np.float64)
            for i in range(d):
                g[i] = g_cb[i]

        if has_grad_noise:
            for i in range(d):
                g[i] += sigma_grad[i] * eta_grad[j, i]

        max_abs_grad = 0.0
        beta_sum = 0.0
        chk = 0.0
        for i in range(d):
            if fabs(g[i]) > max_abs_grad:
                max_abs_grad = fabs(g[i])
            av = _policy_alpha(pol_kind, noise_level, alpha0, xi[i])
            bv = _policy_beta(pol_kind, noise_level, beta0, xi[i])
            beta_sum += bv
            if kin_kind == 0:
                mv = m
            else:
                u = p[i] / (m * c)
                mv = m * hypot(1.0, u)
            bh = bv * hj
            decay = exp(-bh)
            if fabs(bh) < 1e-8:
                g1 = hj * (1.0 - 0.5 * bh)
                g2 = 2.0 * hj * (1.0 - bh)
            else:
                g1 = -expm1(-bh) / bv
                g2 = -expm1(-2.0 * bh) / bv
            p[i] = decay * p[i] - g1 * g[i] + sqrt(mv * av * g2) * eta_mom[j, i]
            if bv < min_beta:
                min_beta = bv

        for i in range(d):
            if kin_kind == 0:
                v = p[i] / m
            else:
                u = p[i] / (m * c)
                v = p[i] / (m * hypot(1.0, u))
                # clip removes the one-ulp cap overshoot division rounding allows
                if v > c:
                    v = c
                elif v < -c:
                    v = -c
            theta[i] += hj * v
            if evolve_xi:
                xi[i] += hj * (p[i] * v - 1.0)
            if fabs(v) > max_speed:
                max_speed = fabs(v)
            chk += theta[i] + p[i] + xi[i]

        if not isfinite(chk):
            _raise_nonfinite(theta, p, xi, pol_kind, noise_level, beta0,
                             max_abs_grad, step_offset + j)

        if j >= accum_from:
            for i in range(d):
                accum_theta[i] += theta[i]
                accum_theta2[i] += theta[i] * theta[i]
                accum_xi[i] += xi[i]
            n_accum += 1

        if ridx < n_rec and record_idx[ridx] == j:
            kin = 0.0
            acc = 0.0
            for i in range(d):
                snap_out[ridx, i] = theta[i]
                if kin_kind == 0:
                    kin += p[i] * p[i]
                else:
                    u = p[i] / (m * c)
                    kin += u * u / (sqrt(1.0 + u * u) + 1.0)
                acc += fabs(xi[i])
            if kin_kind == 0:
                kin = 0.5 * kin / m
            else:
                kin = m * c * c * kin
            diag_out[ridx, 0] = kin
            diag_out[ridx, 1] = acc / d
            diag_out[ridx, 2] = beta_sum / d
            ridx += 1

    return float(min_beta), float(max_speed), int(n_accum)


def run_sgld_block(double[::1] theta,
                   double[::1] h,
                   double[:, ::1] eta,
                   double[:, ::1] eta_grad,
                   double[::1] sigma_grad,
                   int grad_mode, object grad_fn,
                   double[::1] g_mean, double[::1] g_prec,
                   double[:, ::1] lr_x, double[::1] lr_y, long long[:, ::1] lr_idx,
                   double lr_row_scale, double lr_prior_prec,
                   long long[::1] record_idx,
                   double[:, ::1] snap_out, double[:, ::1] diag_out,
                   double[::1] accum_theta, double[::1] accum_theta2,
                   Py_ssize_t accum_from,
                   long long step_offset):
    cdef Py_ssize_t k = h.shape[0]
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t n_rec = record_idx.shape[0]
    cdef Py_ssize_t kb = lr_idx.shape[1] if lr_idx is not None else 0
    cdef bint has_grad_noise = eta_grad is not None
    cdef Py_ssize_t n_accum = 0
    cdef Py_ssize_t ridx = 0
    cdef Py_ssize_t j, i, b, row
    cdef double hj, chk, r, noise_scale, max_abs_grad

    g_np = np.empty(d, dtype=np.float64)
    cdef double[::1] g = g_np
    cdef double[::1] g_cb

    for j in range(k):
        hj = h[j]

        if grad_mode == 1:
            for i in range(d):
                g[i] = (theta[i] - g_mean[i]) * g_prec[i]
        elif grad_mode == 2:
            for i in range(d):
                g[i] = lr_prior_prec * theta[i]
            for b in range(kb):
                row = <Py_ssize_t> lr_idx[j, b]
                r = -lr_y[row]
                for i in range(d):
                    r += lr_x[row, i] * theta[i]
                r *= lr_row_scale
                for i in range(d):
                    g[i] += r * lr_x[row, i]
        else:
            g_cb = np.ascontiguousarray(grad_fn(np.asarray(theta).copy()),
                                        dtype=np.float64)
            for i in range(d):
                g[i] = g_cb[i]

        if has_grad_noise:
            for i in range(d):
                g[i] += sigma_grad[i] * eta_grad[j, i]

        noise_scale = sqrt(2.0 * hj)
        max_abs_grad = 0.0
        chk = 0.0
        for i in range(d):
            if fabs(g[i]) > max_abs_grad:
                max_abs_grad = fabs(g[i])
            theta[i] += -hj * g[i] + noise_scale * eta[j, i]
            chk += theta[i]

        if not isfinite(chk):
            th = np.asarray(theta)
            bad = int(np.flatnonzero(~np.isfinite(th))[0])
            raise InvalidStateError(
                f"chain state non-finite at step {step_offset + j}, component {bad} "
                f"(max|grad|={max_abs_grad:.6g})",
                step=step_offset + j,
                component=bad,
            )

        if j >= accum_from:
            for i in range(d):
                accum_theta[i] += theta[i]
                accum_theta2[i] += theta[i] * theta[i]
            n_accum += 1

        if ridx < n_rec and record_idx[ridx] == j:
            for i in range(d):
                snap_out[ridx, i] = theta[i]
            diag_out[ridx, 0] = 0.0
            diag_out[ridx, 1] = 0.0
            diag_out[ridx, 2] = 0.0
            ridx += 1

    return int(n_accum)
