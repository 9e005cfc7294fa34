"""Compiled inner loops for the resonator equation of motion.

The state is ``(u, v)`` with ``alpha = u + i v`` and

    du/dt = w v
    dv/dt = -w (u - F(t)) - g v,     F(t) = f_dc + f_ac sin(Om t)

where ``w = 1 + domega`` and ``g = 1/Q``.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import rk as _rk

# Butcher tables are taken from scipy; the stepping loop below is our own.
_DP5_S = _rk.RK45.n_stages
DP5_A = np.zeros((_DP5_S, _DP5_S))
DP5_A[:, : _rk.RK45.A.shape[1]] = _rk.RK45.A
DP5_B = np.ascontiguousarray(_rk.RK45.B, dtype=np.float64)
DP5_C = np.ascontiguousarray(_rk.RK45.C, dtype=np.float64)
DP5_E = np.ascontiguousarray(_rk.RK45.E, dtype=np.float64)

_D8_S = _rk.DOP853.n_stages
D8_A = np.ascontiguousarray(_rk.DOP853.A[:_D8_S, :_D8_S], dtype=np.float64)
D8_B = np.ascontiguousarray(_rk.DOP853.B, dtype=np.float64)
D8_C = np.ascontiguousarray(_rk.DOP853.C[:_D8_S], dtype=np.float64)
D8_E3 = np.ascontiguousarray(_rk.DOP853.E3, dtype=np.float64)
D8_E5 = np.ascontiguousarray(_rk.DOP853.E5, dtype=np.float64)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_MAX_STEPS = 2


@njit(cache=True, inline="always")
def _rhs(t, u, v, w, g, f_dc, f_ac, om):
    force = f_dc + f_ac * np.sin(om * t)
    return w * v, -w * (u - force) - g * v


@njit(cache=True, nogil=True)
def rk_integrate(t_grid, u0, v0, w, g, f_dc, f_ac, om, A, B, C, E, E3, E5,
                 high_order, rtol, atol, max_step, max_steps):
    """Adaptive embedded Runge-Kutta integration sampled on ``t_grid``.

    ``high_order`` selects the 8(5,3) error estimate (``E3``/``E5``);
    otherwise the 5(4) estimate ``E`` is used.  Steps are clipped so that
    every grid point is hit exactly.

    Returns ``(u, v, status, n_steps)``.
    """
    n = t_grid.shape[0]
    s = B.shape[0]
    out_u = np.empty(n)
    out_v = np.empty(n)
    out_u[0] = u0
    out_v[0] = v0
    ku = np.zeros(s + 1)
    kv = np.zeros(s + 1)
    if high_order:
        expo = -1.0 / 8.0
    else:
        expo = -1.0 / 5.0
    t = t_grid[0]
    u = u0
    v = v0
    fu, fv = _rhs(t, u, v, w, g, f_dc, f_ac, om)
    h = min(0.01, max_step)
    steps = 0
    for i in range(1, n):
        t_target = t_grid[i]
        while t < t_target:
            if steps >= max_steps:
                return out_u, out_v, STATUS_MAX_STEPS, steps
            remaining = t_target - t
            last = False
            if h >= remaining:
                h_try = remaining
                last = True
            else:
                h_try = h
            if h_try <= 1e-14 * max(1.0, abs(t)):
                return out_u, out_v, STATUS_UNDERFLOW, steps
            ku[0] = fu
            kv[0] = fv
            for j in range(1, s):
                du = 0.0
                dv = 0.0
                for l in range(j):
                    du += A[j, l] * ku[l]
                    dv += A[j, l] * kv[l]
                ku[j], kv[j] = _rhs(t + C[j] * h_try, u + h_try * du, v + h_try * dv,
                                    w, g, f_dc, f_ac, om)
            un = u
            vn = v
            for j in range(s):
                un += h_try * B[j] * ku[j]
                vn += h_try * B[j] * kv[j]
            fun, fvn = _rhs(t + h_try, un, vn, w, g, f_dc, f_ac, om)
            ku[s] = fun
            kv[s] = fvn
            su = atol + rtol * max(abs(u), abs(un))
            sv = atol + rtol * max(abs(v), abs(vn))
            if high_order:
                e5u = 0.0
                e5v = 0.0
                e3u = 0.0
                e3v = 0.0
                for j in range(s + 1):
                    e5u += E5[j] * ku[j]
                    e5v += E5[j] * kv[j]
                    e3u += E3[j] * ku[j]
                    e3v += E3[j] * kv[j]
                e5 = (e5u / su) ** 2 + (e5v / sv) ** 2
                e3 = (e3u / su) ** 2 + (e3v / sv) ** 2
                if e5 == 0.0 and e3 == 0.0:
                    err = 0.0
                else:
                    err = h_try * e5 / np.sqrt((e5 + 0.01 * e3) * 2.0)
            else:
                eu = 0.0
                ev = 0.0
                for j in range(s + 1):
                    eu += E[j] * ku[j]
                    ev += E[j] * kv[j]
                err = h_try * np.sqrt(((eu / su) ** 2 + (ev / sv) ** 2) / 2.0)
            steps += 1
            if err < 1.0:
                t = t_target if last else t + h_try
                u = un
                v = vn
                fu = fun
                fv = fvn
                if err == 0.0:
                    factor = 10.0
                else:
                    factor = min(10.0, 0.9 * err**expo)
                if not last:
                    h = min(h_try * factor, max_step)
            else:
                factor = max(0.2, 0.9 * err**expo)
                h = h_try * factor
        out_u[i] = u
        out_v[i] = v
    return out_u, out_v, STATUS_OK, steps


@njit(cache=True, nogil=True)
def exp_euler(phi, psi, u0, v0, forcing):
    """Exact linear flow with piecewise-constant forcing.

    ``x_{j+1} = phi x_j + psi F_j``; returns ``n+1`` samples of ``u + i v``.
    """
    n = forcing.shape[0]
    out = np.empty(n + 1, dtype=np.complex128)
    u = u0
    v = v0
    out[0] = complex(u, v)
    p00 = phi[0, 0]
    p01 = phi[0, 1]
    p10 = phi[1, 0]
    p11 = phi[1, 1]
    q0 = psi[0]
    q1 = psi[1]
    for j in range(n):
        f = forcing[j]
        un = p00 * u + p01 * v + q0 * f
        vn = p10 * u + p11 * v + q1 * f
        u = un
        v = vn
        out[j + 1] = complex(u, v)
    return out


@njit(cache=True, nogil=True)
def shoelace(z):
    """Running sum of Im(conj(z_k) z_{k+1}); first entry is zero."""
    n = z.shape[0]
    out = np.empty(n)
    acc = 0.0
    out[0] = 0.0
    for k in range(n - 1):
        a = z[k]
        b = z[k + 1]
        acc += a.real * b.imag - a.imag * b.real
        out[k + 1] = acc
    return out


@njit(cache=True, nogil=True)
def cross_area(base, noise, rotor):
    """Bilinear part of the shoelace sum of ``base + noise * rotor``.

    ``base`` is already in the rotating frame; ``noise`` is in the lab
    frame and is rotated on the fly.
    """
    n = base.shape[0]
    acc = 0.0
    prev = noise[0] * rotor[0]
    for k in range(n - 1):
        nxt = noise[k + 1] * rotor[k + 1]
        a = base[k]
        b = base[k + 1]
        acc += a.real * nxt.imag - a.imag * nxt.real
        acc += prev.real * b.imag - prev.imag * b.real
        prev = nxt
    return acc
