"""Pure numpy chain-stepping kernels (fallback backend).

These mirror the compiled kernels in ``_kernels.pyx`` operation for
operation: one fused step applies the exact Ornstein-Uhlenbeck momentum
update (with friction, noise amplitude, and mass frozen at substep entry)
followed by the parameter/temperature drift.  Noise is consumed from
pre-drawn arrays so both backends read the identical random stream.

State vectors are updated in place.  ``record_idx`` selects local step
indices whose post-step snapshot and diagnostics are written to
``snap_out`` / ``diag_out`` (columns: kinetic energy, mean |xi|, mean
friction).  From local index ``accum_from`` on, per-component sums of
theta, theta^2, and xi are accumulated for long-run moment estimates.

Returns ``(min_friction, max_speed, n_accum)`` where the minimum is over
every component of every applied friction vector and the speed is the
largest |velocity| entering the drift.
"""

import numpy as np

from .errors import InvalidStateError

OU_SERIES_THRESHOLD = 1e-8

GRAD_CALLBACK = 0
GRAD_GAUSSIAN = 1
GRAD_LINREG = 2

KIN_GAUSSIAN = 0
KIN_HYPERBOLIC = 1

POL_ATMC = 0
POL_NOSE_HOOVER = 1
POL_FIXED = 2


def _gradient(j, theta, grad_mode, grad_fn, g_mean, g_prec,
              lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec):
    if grad_mode == GRAD_GAUSSIAN:
        return (theta - g_mean) * g_prec
    if grad_mode == GRAD_LINREG:
        rows = lr_idx[j]
        xb = lr_x[rows]
        resid = xb @ theta - lr_y[rows]
        return lr_row_scale * (xb.T @ resid) + lr_prior_prec * theta
    return np.asarray(grad_fn(theta.copy()), dtype=np.float64)


def _gammas(beta_vec, h):
    x = beta_vec * h
    small = np.abs(x) < OU_SERIES_THRESHOLD
    safe = np.where(small, 1.0, beta_vec)
    g1 = np.where(small, h * (1.0 - 0.5 * x), -np.expm1(-x) / safe)
    g2 = np.where(small, 2.0 * h * (1.0 - x), -np.expm1(-2.0 * x) / safe)
    return g1, g2


def _fail(step, theta, p, xi, beta_vec, g):
    state = np.concatenate([theta, p, xi])
    bad = int(np.flatnonzero(~np.isfinite(state))[0])
    comp = bad % theta.size
    raise InvalidStateError(
        f"chain state non-finite at step {step}, component {comp} "
        f"(beta={beta_vec[comp]:.6g}, max|grad|={np.max(np.abs(g)):.6g})",
        step=step,
        component=comp,
    )


def run_fused_block(theta, p, xi, h, eta_mom, eta_grad, sigma_grad,
                    kin_kind, m, c,
                    pol_kind, noise_level, alpha0, beta0, evolve_xi,
                    grad_mode, grad_fn, g_mean, g_prec,
                    lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec,
                    record_idx, snap_out, diag_out,
                    accum_theta, accum_theta2, accum_xi, accum_from,
                    step_offset):
    # diverging chains overflow on purpose; the per-step finiteness check
    # turns that into InvalidStateError, so numpy need not warn first
    with np.errstate(over="ignore", invalid="ignore"):
        return _run_fused_block(
            theta, p, xi, h, eta_mom, eta_grad, sigma_grad, kin_kind, m, c,
            pol_kind, noise_level, alpha0, beta0, evolve_xi, grad_mode, grad_fn,
            g_mean, g_prec, lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec,
            record_idx, snap_out, diag_out, accum_theta, accum_theta2, accum_xi,
            accum_from, step_offset)


def _run_fused_block(theta, p, xi, h, eta_mom, eta_grad, sigma_grad,
                     kin_kind, m, c,
                     pol_kind, noise_level, alpha0, beta0, evolve_xi,
                     grad_mode, grad_fn, g_mean, g_prec,
                     lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec,
                     record_idx, snap_out, diag_out,
                     accum_theta, accum_theta2, accum_xi, accum_from,
                     step_offset):
    k = h.shape[0]
    d = theta.shape[0]
    min_beta = np.inf
    max_speed = 0.0
    n_accum = 0
    ridx = 0
    for j in range(k):
        hj = h[j]
        g = _gradient(j, theta, grad_mode, grad_fn, g_mean, g_prec,
                      lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec)
        if eta_grad is not None:
            g = g + sigma_grad * eta_grad[j]

        if pol_kind == POL_ATMC:
            alpha_vec = np.maximum(noise_level - xi, 0.0)
            beta_vec = np.maximum(noise_level, xi)
        elif pol_kind == POL_NOSE_HOOVER:
            alpha_vec = np.full(d, noise_level)
            beta_vec = noise_level + xi
        else:
            alpha_vec = np.full(d, alpha0)
            beta_vec = np.full(d, beta0)
        if kin_kind == KIN_GAUSSIAN:
            mass_vec = np.full(d, m)
        else:
            mass_vec = m * np.hypot(1.0, p / (m * c))

        g1, g2 = _gammas(beta_vec, hj)
        p[...] = (np.exp(-beta_vec * hj) * p - g1 * g
                  + np.sqrt(mass_vec * alpha_vec * g2) * eta_mom[j])

        step_min = float(beta_vec.min())
        if step_min < min_beta:
            min_beta = step_min

        if kin_kind == KIN_GAUSSIAN:
            v = p / m
        else:
            # clip removes the one-ulp cap overshoot division rounding allows
            v = np.clip(p / (m * np.hypot(1.0, p / (m * c))), -c, c)
        theta += hj * v
        if evolve_xi:
            xi += hj * (p * v - 1.0)
        step_max = float(np.max(np.abs(v)))
        if step_max > max_speed:
            max_speed = step_max

        if not np.isfinite(float(theta.sum()) + float(p.sum()) + float(xi.sum())):
            _fail(step_offset + j, theta, p, xi, beta_vec, g)

        if j >= accum_from:
            accum_theta += theta
            accum_theta2 += theta * theta
            accum_xi += xi
            n_accum += 1

        if ridx < record_idx.shape[0] and record_idx[ridx] == j:
            snap_out[ridx] = theta
            if kin_kind == KIN_GAUSSIAN:
                kin = 0.5 * float(np.dot(p, p)) / m
            else:
                u2 = np.square(p / (m * c))
                kin = m * c * c * float(np.sum(u2 / (np.sqrt(1.0 + u2) + 1.0)))
            diag_out[ridx, 0] = kin
            diag_out[ridx, 1] = float(np.mean(np.abs(xi)))
            diag_out[ridx, 2] = float(np.mean(beta_vec))
            ridx += 1

    return float(min_beta), float(max_speed), n_accum


def run_sgld_block(theta, h, eta, eta_grad, sigma_grad,
                   grad_mode, grad_fn, g_mean, g_prec,
                   lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec,
                   record_idx, snap_out, diag_out,
                   accum_theta, accum_theta2, accum_from, step_offset):
    """Momentum-free chain: theta <- theta - h g + sqrt(2 h) eta."""
    k = h.shape[0]
    n_accum = 0
    ridx = 0
    for j in range(k):
        hj = h[j]
        g = _gradient(j, theta, grad_mode, grad_fn, g_mean, g_prec,
                      lr_x, lr_y, lr_idx, lr_row_scale, lr_prior_prec)
        if eta_grad is not None:
            g = g + sigma_grad * eta_grad[j]
        theta += -hj * g + np.sqrt(2.0 * hj) * eta[j]

        if not np.isfinite(float(theta.sum())):
            bad = int(np.flatnonzero(~np.isfinite(theta))[0])
            raise InvalidStateError(
                f"chain state non-finite at step {step_offset + j}, component {bad} "
                f"(max|grad|={np.max(np.abs(g)):.6g})",
                step=step_offset + j,
                component=bad,
            )

        if j >= accum_from:
            accum_theta += theta
            accum_theta2 += theta * theta
            n_accum += 1

        if ridx < record_idx.shape[0] and record_idx[ridx] == j:
            snap_out[ridx] = theta
            diag_out[ridx, 0] = 0.0
            diag_out[ridx, 1] = 0.0
            diag_out[ridx, 2] = 0.0
            ridx += 1

    return n_accum
