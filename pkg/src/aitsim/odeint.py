"""Compiled adaptive Dormand-Prince 5(4) integrator for the mean-field equations.

The state vector is ``[b_1 .. b_M, s_minus, s_z]`` (complex).  All rates are
angular (rad/s).  Steps are clipped so that every requested sample time is hit
exactly, which keeps the output grid uniform without dense-output interpolation.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Dormand & Prince (1980) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2


@njit(cache=True)
def mf_rhs(t, y, out, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
           drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0):
    m = delta_b.size
    sm = y[m]
    sz = y[m + 1]
    dq = delta_q
    gt = gamma_tilde
    if transient:
        ag = ag_ss * (1.0 - np.exp(lam_g * t))
        ae = ae_ss * (1.0 - np.exp(lam_e * t))
        prod = ag * np.conj(ae)
        dq = delta_q - 2.0 * chi * prod.real
        gt = gamma_phi0 + 2.0 * chi * prod.imag + 0.5 * gamma1
    bsum = 0.0 + 0.0j
    for k in range(m):
        bk = y[k]
        bsum += g[k] * bk
        out[k] = (1j * delta_b[k] - 0.5 * gamma_b[k]) * bk - 1j * g[k] * sm
    field = bsum + eps_d
    ds = (1j * dq - gt) * sm + 1j * sz * bsum
    if drive_coh:
        ds += 1j * eps_d * sz
    out[m] = ds
    out[m + 1] = (2j * sm * np.conj(field) - 2j * np.conj(sm) * field) - gamma1 * (sz + 1.0)


@njit(cache=True)
def _err_norm(y, ynew, err, rtol, atol):
    acc = 0.0
    n = y.size
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        r = abs(err[i]) / sc
        acc += r * r
    return np.sqrt(acc / n)


@njit(cache=True)
def integrate_mf(y0, times, rtol, atol, max_steps, delta_b, gamma_b, g, delta_q, gamma_tilde,
                 gamma1, eps_d, drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0):
    """Return ``(samples, status, t_reached, n_steps)``; ``samples[k]`` is the state at ``times[k]``."""
    n = y0.size
    nt = times.size
    out = np.zeros((nt, n), dtype=np.complex128)
    y = y0.copy()
    out[0] = y
    k1 = np.empty(n, np.complex128)
    k2 = np.empty(n, np.complex128)
    k3 = np.empty(n, np.complex128)
    k4 = np.empty(n, np.complex128)
    k5 = np.empty(n, np.complex128)
    k6 = np.empty(n, np.complex128)
    k7 = np.empty(n, np.complex128)
    yt = np.empty(n, np.complex128)
    ynew = np.empty(n, np.complex128)
    err = np.empty(n, np.complex128)

    t = times[0]
    span = times[-1] - times[0]
    h_prop = span / max(nt - 1, 1)
    h = h_prop
    steps = 0
    mf_rhs(t, y, k1, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d, drive_coh,
           transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
    for j in range(1, nt):
        target = times[j]
        while t < target:
            if steps >= max_steps:
                return out, STATUS_MAX_STEPS, t, steps
            last = False
            h = h_prop
            if h >= target - t:
                h = target - t
                last = True
            if h <= 1e-15 * max(abs(t), span):
                return out, STATUS_STEP_UNDERFLOW, t, steps
            for i in range(n):
                yt[i] = y[i] + h * A21 * k1[i]
            mf_rhs(t + C2 * h, yt, k2, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
            mf_rhs(t + C3 * h, yt, k3, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            mf_rhs(t + C4 * h, yt, k4, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            mf_rhs(t + C5 * h, yt, k5, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                                    + A65 * k5[i])
            mf_rhs(t + h, yt, k6, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i]
                                      + B6 * k6[i])
            mf_rhs(t + h, ynew, k7, delta_b, gamma_b, g, delta_q, gamma_tilde, gamma1, eps_d,
                   drive_coh, transient, chi, ag_ss, ae_ss, lam_g, lam_e, gamma_phi0)
            for i in range(n):
                err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                              + E7 * k7[i])
            en = _err_norm(y, ynew, err, rtol, atol)
            steps += 1
            if en <= 1.0:
                t = target if last else t + h
                for i in range(n):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                # a step clipped to a sample time does not shrink the proposal
                h_prop = max(h_prop, h * fac) if last else h * fac
            else:
                h_prop = h * max(0.2, 0.9 * en ** -0.2)
        out[j] = y
    return out, STATUS_OK, t, steps
