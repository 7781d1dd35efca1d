"""Compiled numerical core.

Single-threaded, fastmath-free float64 kernels so that every run is
bit-reproducible for a given seed.  The passage solver mirrors the
level-set reduction of local_dynamics (log-slope quadrature between the
entry slope and the root of a monotone exit equation) but is written
against a packed parameter vector so the induced-map drivers can stream
millions of returns without touching Python.

Packed layout (see pack_params in flow_sim): coefficients, derived
exponents, chart half-width, the two homogeneous profiles (vertical
perturbation and potential well), and the orthonormal chart axes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# indices into the packed parameter vector
(A0, A2, B0, B2, BETA0, BETA, C0, C2, S0, EPS,
 W_AMP, W_RHO, W_CX, W_CY,
 PSI_C, PSI_CP, PSI_RHO, PSI_CX, PSI_CY,
 EUX, EUY, ESX, ESY) = range(23)
NPAR = 23

# 20-point Gauss-Legendre rule; composite panels of width <= 0.5 in log-slope
_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_PANEL = 0.5

# error codes shared with the Python layer
ERR_OK = 0
ERR_DEGENERATE_ENTRY = 1   # entry abscissa exactly zero: stable-axis orbit
ERR_EVENT_MISSED = 2


# ---------------------------------------------------------------- RNG

@njit(cache=True)
def sm64_next(state):
    """splitmix64 step; state is a uint64[1] buffer.  Uniform on [0, 1)."""
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True)
def sm64_fill(state, out):
    for i in range(out.shape[0]):
        out[i] = sm64_next(state)


# ------------------------------------------------------- torus and chart

@njit(cache=True)
def wrap_half(t):
    """Representative of t mod 1 in [-1/2, 1/2)."""
    return t - np.floor(t + 0.5)


@njit(cache=True)
def cat_step(qx, qy):
    return wrap_half(2.0 * qx + qy), wrap_half(qx + qy)


@njit(cache=True)
def chart_coords(par, qx, qy):
    return (par[EUX] * qx + par[EUY] * qy,
            par[ESX] * qx + par[ESY] * qy)


@njit(cache=True)
def chart_to_torus(par, cx, cy):
    # chart box lies strictly inside the fundamental domain, wrap is a no-op
    return (wrap_half(cx * par[EUX] + cy * par[ESX]),
            wrap_half(cx * par[EUY] + cy * par[ESY]))


@njit(cache=True)
def in_chart(par, qx, qy):
    cx, cy = chart_coords(par, qx, qy)
    return abs(cx) < par[EPS] and abs(cy) < par[EPS]


# ------------------------------------------------- homogeneous profiles

@njit(cache=True)
def homog_val(amp, rho, cx, cy, x, y):
    if rho == 0.0:
        return amp
    base = cx * x * x + cy * y * y
    if base <= 0.0:
        return 0.0
    return amp * base ** (rho * 0.5)


@njit(cache=True)
def _log_poly(a, b, s):
    """log(a + b e^{2s}) without overflow for large |s|."""
    if s > 0.0:
        return 2.0 * s + np.log(b + a * np.exp(-2.0 * s))
    return np.log(a + b * np.exp(2.0 * s))


# ------------------------------------------------------ passage solver

@njit(cache=True)
def _m_exponent(par, s):
    return s / par[BETA0] - par[S0] * _log_poly(par[C0], par[C2], s)


@njit(cache=True)
def _phi(par, s, R):
    # strictly decreasing; root = exit log-slope
    return -s / par[BETA0] + (par[S0] - 1.0) * _log_poly(par[C0], par[C2], s) - R


@njit(cache=True)
def _solve_exit_slope(par, lG, zeta0, s_hi):
    R = 2.0 * np.log(zeta0) - lG
    if _phi(par, s_hi, R) >= 0.0:
        return s_hi
    s_lo = s_hi
    step = 2.0
    while _phi(par, s_lo, R) < 0.0:
        s_lo -= step
        step *= 2.0
        if s_lo < -1e7:
            return s_lo  # unreachable for valid input
    a, b = s_lo, s_hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        if _phi(par, mid, R) >= 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@njit(cache=True)
def _gl_m(par, s_lo, s_hi, shift):
    """int exp(m_exponent + shift) ds by composite Gauss-Legendre."""
    if s_hi <= s_lo:
        return 0.0
    n_pan = int(np.ceil((s_hi - s_lo) / _PANEL))
    if n_pan < 1:
        n_pan = 1
    width = (s_hi - s_lo) / n_pan
    half = 0.5 * width
    total = 0.0
    for i in range(n_pan):
        mid = s_lo + (i + 0.5) * width
        acc = 0.0
        for j in range(20):
            s = mid + half * _GL_X[j]
            acc += _GL_W[j] * np.exp(_m_exponent(par, s) + shift)
        total += acc * half
    return total


@njit(cache=True)
def _gl_theta(par, s_lo, s_hi, amp, rho, wcx, wcy, shift):
    """int theta(1,M) e^{((1-rho/2)/beta0) s + E log(c0+c2 M^2) + shift} ds."""
    if s_hi <= s_lo or amp == 0.0:
        return 0.0
    E = -(rho * 0.5) * (1.0 - par[S0]) - par[S0]
    pre = (1.0 - rho * 0.5) / par[BETA0]
    la = np.log(abs(amp))
    sgn = 1.0 if amp > 0.0 else -1.0
    n_pan = int(np.ceil((s_hi - s_lo) / _PANEL))
    if n_pan < 1:
        n_pan = 1
    width = (s_hi - s_lo) / n_pan
    half = 0.5 * width
    total = 0.0
    for i in range(n_pan):
        mid = s_lo + (i + 0.5) * width
        acc = 0.0
        for j in range(20):
            s = mid + half * _GL_X[j]
            expo = (la + (rho * 0.5) * _log_poly(wcx, wcy, s)
                    + pre * s + E * _log_poly(par[C0], par[C2], s) + shift)
            acc += _GL_W[j] * np.exp(expo)
        total += acc * half
    return sgn * total


@njit(cache=True)
def passage_kernel(par, xi, eta):
    """Resolve one first-quadrant passage to x = eps.

    Returns (T, omega, theta_w, theta_psi).  theta_psi carries the well
    amplitude already (psi0 = theta_psi).
    """
    zeta0 = par[EPS]
    if xi >= zeta0:
        return 0.0, eta, 0.0, 0.0
    lxi = np.log(xi)
    s_hi = np.log(eta) - lxi
    # log(c0 xi^2 + c2 eta^2) = 2 log xi + log(c0 + c2 (eta/xi)^2), assembled
    # in log space so subnormal entries do not underflow
    lG = (lxi / par[BETA] + np.log(eta) / par[BETA0]
          + (1.0 - par[S0]) * (2.0 * lxi + _log_poly(par[C0], par[C2], s_hi)))
    s_exit = _solve_exit_slope(par, lG, zeta0, s_hi)
    T = _gl_m(par, s_exit, s_hi, -lG)
    omega = np.exp(s_exit) * zeta0
    th_w = _gl_theta(par, s_exit, s_hi, par[W_AMP], par[W_RHO],
                     par[W_CX], par[W_CY], (par[W_RHO] * 0.5 - 1.0) * lG)
    th_psi = _gl_theta(par, s_exit, s_hi, par[PSI_C], par[PSI_RHO],
                       par[PSI_CX], par[PSI_CY], (par[PSI_RHO] * 0.5 - 1.0) * lG)
    return T, omega, th_w, th_psi


# --------------------------------------------------------- induced map

@njit(cache=True)
def induced_step(par, qx, qy):
    """One return of the section map restricted to the chart complement.

    Returns (q1x, q1y, tau, psi_bar, r, passed, err).  A plain toral step
    costs (tau, r) = (1, 1); a step that lands in the chart is completed
    by the resolved passage and the wait to the next integer level.
    """
    ax, ay = cat_step(qx, qy)
    cx, cy = chart_coords(par, ax, ay)
    eps = par[EPS]
    if abs(cx) >= eps or abs(cy) >= eps:
        return ax, ay, 1.0, par[PSI_CP], np.int64(1), False, ERR_OK
    if cx == 0.0:
        return ax, ay, 0.0, 0.0, np.int64(0), True, ERR_DEGENERATE_ENTRY
    sx = 1.0 if cx > 0.0 else -1.0
    sy = 1.0 if cy > 0.0 else -1.0
    xi = abs(cx)
    eta = abs(cy)
    T, omega, th_w, th_psi = passage_kernel(par, xi, eta)
    z_pass = T + th_w
    z_ceil = np.ceil(z_pass)
    if z_ceil < 4.0e18:
        r = np.int64(1) + np.int64(z_ceil)
        tau = 1.0 + T + (z_ceil - z_pass)
    else:
        # astronomically deep entry; saturate the step count
        r = np.int64(1) + np.int64(4.0e18)
        tau = 1.0 + T
    psi_bar = par[PSI_CP] - th_psi
    ex, ey = chart_to_torus(par, sx * eps, sy * omega)
    return ex, ey, tau, psi_bar, r, True, ERR_OK


@njit(cache=True)
def induced_chunk(par, qx, qy, n, tau_out, psi_out, r_out, flag_out):
    """Fill n consecutive returns starting at (qx, qy).

    Returns (q1x, q1y, count, err); count < n only on error.
    """
    for i in range(n):
        qx, qy, tau, psi, r, passed, err = induced_step(par, qx, qy)
        if err != ERR_OK:
            return qx, qy, i, err
        tau_out[i] = tau
        psi_out[i] = psi
        r_out[i] = r
        flag_out[i] = 1 if passed else 0
    return qx, qy, n, ERR_OK


@njit(cache=True)
def induced_burn(par, qx, qy, n):
    for _ in range(n):
        qx, qy, tau, psi, r, passed, err = induced_step(par, qx, qy)
        if err != ERR_OK:
            return qx, qy, err
    return qx, qy, ERR_OK


@njit(cache=True)
def induced_step_batch(par, qx, qy, q1x, q1y, tau, psi, r, flag):
    """Independent single returns for an array of start points.

    Errors are marked with r = -1 instead of aborting the batch.
    """
    for i in range(qx.shape[0]):
        ax, ay, t, p, ri, passed, err = induced_step(par, qx[i], qy[i])
        if err != ERR_OK:
            q1x[i] = qx[i]
            q1y[i] = qy[i]
            tau[i] = 0.0
            psi[i] = 0.0
            r[i] = -1
            flag[i] = 0
        else:
            q1x[i] = ax
            q1y[i] = ay
            tau[i] = t
            psi[i] = p
            r[i] = ri
            flag[i] = 1 if passed else 0


@njit(cache=True)
def record_chunk(par, qx, qy, n, x0, y0, x1, y1, tau_out, psi_out, r_out, flag_out):
    """Consecutive returns with both endpoints kept (for record files)."""
    for i in range(n):
        ax, ay, tau, psi, r, passed, err = induced_step(par, qx, qy)
        if err != ERR_OK:
            return qx, qy, i, err
        x0[i] = qx
        y0[i] = qy
        x1[i] = ax
        y1[i] = ay
        tau_out[i] = tau
        psi_out[i] = psi
        r_out[i] = r
        flag_out[i] = 1 if passed else 0
        qx, qy = ax, ay
    return qx, qy, n, ERR_OK


@njit(cache=True)
def section_orbit(par, qx, qy, n, out_x, out_y):
    """n points of the induced orbit (the return TARGETS, one per return)."""
    for i in range(n):
        qx, qy, tau, psi, r, passed, err = induced_step(par, qx, qy)
        if err != ERR_OK:
            return qx, qy, i, err
        out_x[i] = qx
        out_y[i] = qy
    return qx, qy, n, ERR_OK


# ------------------------------------------------ embedded Runge-Kutta

@njit(cache=True)
def _rhs4(par, x, y, out):
    xx = x * x
    yy = y * y
    out[0] = x * (par[A0] * xx + par[A2] * yy)
    out[1] = -y * (par[B0] * xx + par[B2] * yy)
    out[2] = homog_val(par[W_AMP], par[W_RHO], par[W_CX], par[W_CY], x, y)
    out[3] = homog_val(par[PSI_C], par[PSI_RHO], par[PSI_CX], par[PSI_CY], x, y)


@njit(cache=True)
def dp45_passage(par, xi, eta, rtol):
    """Dormand-Prince 5(4) integration of one chart passage.

    State (x, y, int w, int psi_well); stops on the upward crossing of
    x = eps by shrinking the final step onto the boundary (secant retakes),
    so the terminal state carries integrator accuracy, not interpolation
    accuracy.  PI step-size control.  Returns (T, omega, theta_w,
    theta_psi, err).
    """
    eps = par[EPS]
    atol = rtol * 1e-3

    y0 = np.empty(4)
    y0[0] = xi
    y0[1] = eta
    y0[2] = 0.0
    y0[3] = 0.0
    if xi >= eps:
        return 0.0, eta, 0.0, 0.0, ERR_OK

    k = np.empty((7, 4))
    ytmp = np.empty(4)
    y5 = np.empty(4)
    yerr = np.empty(4)

    _rhs4(par, y0[0], y0[1], k[0])
    # initial step from the local rate
    rate = abs(k[0][0]) / max(xi, 1e-300) + abs(k[0][1]) / max(eta, 1e-300)
    h = 0.01 / max(rate, 1e-12)
    t = 0.0
    err_prev = 1.0
    on_boundary = False
    target_h = -1.0   # > 0 while homing in on the event

    # Dormand-Prince coefficients
    a21 = 1.0 / 5.0
    a31, a32 = 3.0 / 40.0, 9.0 / 40.0
    a41, a42, a43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
    a51, a52, a53, a54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
    a61, a62, a63, a64, a65 = (9017.0 / 3168.0, -355.0 / 33.0,
                               46732.0 / 5247.0, 49.0 / 176.0,
                               -5103.0 / 18656.0)
    b1, b3, b4, b5, b6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                          -2187.0 / 6784.0, 11.0 / 84.0)
    e1, e3, e4, e5, e6, e7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                              -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

    for _ in range(20_000_000):
        if on_boundary:
            break
        if target_h > 0.0:
            h = target_h

        for i in range(4):
            ytmp[i] = y0[i] + h * a21 * k[0][i]
        _rhs4(par, ytmp[0], ytmp[1], k[1])
        for i in range(4):
            ytmp[i] = y0[i] + h * (a31 * k[0][i] + a32 * k[1][i])
        _rhs4(par, ytmp[0], ytmp[1], k[2])
        for i in range(4):
            ytmp[i] = y0[i] + h * (a41 * k[0][i] + a42 * k[1][i] + a43 * k[2][i])
        _rhs4(par, ytmp[0], ytmp[1], k[3])
        for i in range(4):
            ytmp[i] = y0[i] + h * (a51 * k[0][i] + a52 * k[1][i]
                                   + a53 * k[2][i] + a54 * k[3][i])
        _rhs4(par, ytmp[0], ytmp[1], k[4])
        for i in range(4):
            ytmp[i] = y0[i] + h * (a61 * k[0][i] + a62 * k[1][i]
                                   + a63 * k[2][i] + a64 * k[3][i]
                                   + a65 * k[4][i])
        _rhs4(par, ytmp[0], ytmp[1], k[5])
        for i in range(4):
            y5[i] = y0[i] + h * (b1 * k[0][i] + b3 * k[2][i] + b4 * k[3][i]
                                 + b5 * k[4][i] + b6 * k[5][i])
        _rhs4(par, y5[0], y5[1], k[6])
        errn = 0.0
        for i in range(4):
            yerr[i] = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i]
                           + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i])
            sc = atol + rtol * max(abs(y0[i]), abs(y5[i]))
            q = yerr[i] / sc
            errn += q * q
        errn = np.sqrt(errn / 4.0)

        if errn <= 1.0 or target_h > 0.0:
            # accepted (event-homing steps are taken as prescribed)
            if y5[0] >= eps:
                if y5[0] <= eps * (1.0 + 1e-13) or h <= 1e-15 * max(1.0, t):
                    t += h
                    for i in range(4):
                        y0[i] = y5[i]
                    on_boundary = True
                else:
                    # secant shrink toward the crossing; retake from y0
                    frac = (eps - y0[0]) / (y5[0] - y0[0])
                    if frac < 1e-16:
                        frac = 1e-16
                    target_h = h * frac * 1.0000000001
                    continue
            else:
                t += h
                for i in range(4):
                    y0[i] = y5[i]
                for i in range(4):
                    k[0][i] = k[6][i]
                if target_h > 0.0:
                    # undershot the boundary while homing: creep forward
                    target_h = -1.0
                if errn > 0.0:
                    fac = 0.9 * errn ** -0.2 * err_prev ** 0.04
                else:
                    fac = 5.0
                if fac > 5.0:
                    fac = 5.0
                if fac < 0.2:
                    fac = 0.2
                h *= fac
                err_prev = max(errn, 1e-10)
        else:
            fac = max(0.2, 0.9 * errn ** -0.2)
            h *= fac
            target_h = -1.0
    if not on_boundary:
        return t, y0[1], y0[2], y0[3], ERR_EVENT_MISSED
    return t, y0[1], y0[2], y0[3], ERR_OK
