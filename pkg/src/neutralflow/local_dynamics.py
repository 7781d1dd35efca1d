"""Semi-analytic solver for the neutral-neighborhood passage.

Orbits of the planar field conserve L(x, y), so a passage from the entry
point (xi, eta) to the exit boundary x = zeta0 is a one-dimensional motion
in the slope M = y/x.  Every quantity of interest reduces to integrals of

    m(M) = M^{1/beta0 - 1} (c0 + c2 M^2)^{-s0}

between the entry slope M0 = eta/xi and the exit slope M_exit (the solution
of a monotone scalar equation):

    passage time      T     = (1/G) * int m dM
    vertical integral Theta = G^{rho/2-1} * int th(1,M) M^{(1-rho/2)/beta0-1}
                              (c0+c2 M^2)^E dM,   E = -(rho/2)(1-s0) - s0

with G the level constant of the entry point.  All integrals run in
s = log M where the endpoint power laws become plain exponential decay.

A brute-force adaptive Runge-Kutta oracle (rk_orbit / rk_passage) provides
the independent verification route; it shares no formulas with the
level-set solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .model import (
    DerivedConstants,
    FlowParams,
    HomogeneousSpec,
    derive_constants,
    homogeneous_eval,
    vector_field,
)

__all__ = [
    "DomainError",
    "QuadratureError",
    "LevelCoords",
    "PassageResult",
    "OrbitResult",
    "level_coords",
    "log_level_constant",
    "reconstruct_x2",
    "m_integrand",
    "m_integral",
    "m_integral_split",
    "xi_zero",
    "omega_zero",
    "passage_time",
    "exit_point",
    "theta_integral",
    "theta_asymptotic_constant",
    "theta_exponent",
    "rk_orbit",
    "rk_passage",
]

_QUAD_LIMIT = 400


class DomainError(ValueError):
    """Input outside the validity region of the level-set solver."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach tolerance; message carries the bound."""


@dataclass(frozen=True)
class LevelCoords:
    """First-integral value L and slope M = y/x of a first-quadrant point."""

    L: float
    M: float


@dataclass(frozen=True)
class PassageResult:
    """One resolved traversal of the neutral neighborhood.

    eta, xi: entry point (first-quadrant magnitudes); omega: exit ordinate on
    x = zeta0; T: horizontal passage time; theta: the vertical-perturbation
    integral for the spec handed to passage_time (None if none was); G: the
    level constant of the entry orbit.
    """

    eta: float
    xi: float
    omega: float
    T: float
    theta: float | None
    G: float


@dataclass
class OrbitResult:
    """Samples and crossing events from the Runge-Kutta oracle."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    theta: np.ndarray | None
    events: dict


def _quad_checked(f, lo, hi, epsabs=1e-13, epsrel=1e-12):
    val, err = quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=_QUAD_LIMIT)
    if err > max(epsabs * 10.0, abs(val) * epsrel * 100.0):
        raise QuadratureError(f"quadrature error bound {err:.3e} for value {val:.6e}")
    return val


def level_coords(dc: DerivedConstants, x: float, y: float) -> LevelCoords:
    """Map a first-quadrant point to (L, M)."""
    if x <= 0.0 or y <= 0.0:
        raise DomainError("level coordinates need x > 0, y > 0")
    L = (x ** dc.u) * (y ** dc.v) * (dc.a0 * x * x / dc.v + dc.b2 * y * y / dc.u)
    return LevelCoords(L=L, M=y / x)


def log_level_constant(dc: DerivedConstants, xi: float, eta: float) -> float:
    """log G for the orbit through (xi, eta).

    G = xi^{1/beta} eta^{1/beta0} (c0 xi^2 + c2 eta^2)^{1-s0}; G^{(u+v+2)/2}
    equals 2 c0 c2 L / delta, tying G to the first integral.
    """
    if xi <= 0.0 or eta <= 0.0:
        raise DomainError("level constant needs xi > 0, eta > 0")
    return (math.log(xi) / dc.beta + math.log(eta) / dc.beta0
            + (1.0 - dc.s0) * math.log(dc.c0 * xi * xi + dc.c2 * eta * eta))


def reconstruct_x2(dc: DerivedConstants, G: float, M: float) -> float:
    """x^2 at slope M on the orbit with level constant G."""
    if G <= 0.0 or M <= 0.0:
        raise DomainError("reconstruction needs G > 0, M > 0")
    return G * M ** (-1.0 / dc.beta0) * (dc.c0 + dc.c2 * M * M) ** (dc.s0 - 1.0)


def m_integrand(dc: DerivedConstants, M):
    """Slope-integrand m(M) = M^{1/beta0-1} (c0+c2 M^2)^{-s0}.

    Integrable at both ends: exponent 1/beta0 - 1 > -1 at zero and
    -1 - 1/beta < -1 at infinity.  Accepts scalars or arrays.
    """
    M = np.asarray(M, dtype=float)
    return M ** (1.0 / dc.beta0 - 1.0) * (dc.c0 + dc.c2 * M * M) ** (-dc.s0)


def _m_integrand_log(dc: DerivedConstants, s: float) -> float:
    # integrand in s = log M with the dM Jacobian folded in
    return math.exp(s / dc.beta0 - dc.s0 * math.log(dc.c0 + dc.c2 * math.exp(2.0 * s)))


def _m_s_bounds(dc: DerivedConstants) -> tuple[float, float]:
    # decay rates 1/beta0 (left) and 1/beta (right); 45 e-foldings each side
    return (-45.0 * dc.beta0 - 5.0, 45.0 * dc.beta + 5.0)


def m_integral(dc: DerivedConstants, m_lo: float = 0.0, m_hi: float = math.inf) -> float:
    """int m(M) dM over (m_lo, m_hi), default the full half-line."""
    s_min, s_max = _m_s_bounds(dc)
    s_lo = s_min if m_lo <= 0.0 else max(math.log(m_lo), s_min)
    s_hi = s_max if math.isinf(m_hi) else min(math.log(m_hi), s_max)
    if s_hi <= s_lo:
        return 0.0
    return _quad_checked(lambda s: _m_integrand_log(dc, s), s_lo, s_hi)


def m_integral_split(dc: DerivedConstants) -> float:
    """Full m-integral by a different route: M on (0,1] plus the 1/M substitution.

    Independent of the log-substitution used everywhere else; the two agree
    to 1e-9 and that agreement is a standing test of the quadrature setup.
    """
    lower = _quad_checked(lambda M: float(m_integrand(dc, M)), 0.0, 1.0,
                          epsabs=1e-12, epsrel=1e-11)
    upper = _quad_checked(lambda M: float(m_integrand(dc, 1.0 / M)) / (M * M), 0.0, 1.0,
                          epsabs=1e-12, epsrel=1e-11)
    return lower + upper


def xi_zero(dc: DerivedConstants, eta: float) -> float:
    """Limit constant of the entry abscissa: xi(eta, T) * T^beta -> xi0(eta).

    Closed form c2^{-1/u} eta^{-a2/b2} I^beta with I the full m-integral.
    Strictly decreasing in eta.
    """
    if eta <= 0.0:
        raise DomainError("xi_zero needs eta > 0")
    I = m_integral(dc)
    return dc.c2 ** (-1.0 / dc.u) * eta ** (-dc.a2 / dc.b2) * I ** dc.beta


def omega_zero(dc: DerivedConstants, zeta0: float = 1.0) -> float:
    """Limit constant of the exit ordinate: omega(eta, T) * T^beta0 -> omega0.

    Does not depend on eta; (I / (c0^{1-s0} zeta0^{2-1/beta0}))^beta0 follows
    from the level-set identity at the exit boundary and is verified
    empirically against exit_point at growing T.
    """
    if zeta0 <= 0.0:
        raise DomainError("omega_zero needs zeta0 > 0")
    I = m_integral(dc)
    return (I / (dc.c0 ** (1.0 - dc.s0) * zeta0 ** (2.0 - 1.0 / dc.beta0))) ** dc.beta0


def _solve_m_exit(dc: DerivedConstants, lG: float, zeta0: float, s_hi: float) -> float:
    """Exit slope: the unique s with x(e^s) = zeta0 on the level lG.

    phi(s) = -s/beta0 + (s0-1) log(c0+c2 e^{2s}) is strictly decreasing, so a
    downward bracket expansion from the entry slope always terminates.
    """
    R = 2.0 * math.log(zeta0) - lG

    def phi(s):
        return (-s / dc.beta0 + (dc.s0 - 1.0) * math.log(dc.c0 + dc.c2 * math.exp(2.0 * s)) - R)

    s_lo = s_hi
    step = 2.0
    while phi(s_lo) < 0.0:
        s_lo -= step
        step *= 2.0
        if s_lo < -1e6:
            raise DomainError("exit-slope bracket expansion failed")
    if s_lo == s_hi:
        return s_hi
    return brentq(phi, s_lo, s_hi, xtol=1e-14, rtol=8.9e-16)


def _validate_entry(xi: float, eta: float, zeta0: float):
    if not (zeta0 > 0.0):
        raise DomainError("zeta0 must be positive")
    if not (0.0 < xi <= zeta0) or not (0.0 < eta <= zeta0):
        raise DomainError(
            f"entry ({xi:.3e}, {eta:.3e}) outside the chart (0, {zeta0}]^2")


def passage_time(dc: DerivedConstants, xi: float, eta: float,
                 zeta0: float = 1.0, w_spec: HomogeneousSpec | None = None) -> PassageResult:
    """Resolve the passage from (xi, eta) to the exit boundary x = zeta0.

    Returns T = (1/G) int_{M_exit}^{eta/xi} m dM, the exit ordinate
    omega = zeta0 * M_exit, and, when w_spec is given, the accumulated
    vertical perturbation Theta(T) for that profile.
    """
    _validate_entry(xi, eta, zeta0)
    lG = log_level_constant(dc, xi, eta)
    G = math.exp(lG)
    if xi == zeta0:
        return PassageResult(eta=eta, xi=xi, omega=eta, T=0.0,
                             theta=0.0 if w_spec is not None else None, G=G)
    s_hi = math.log(eta / xi)
    s_exit = _solve_m_exit(dc, lG, zeta0, s_hi)
    I = _quad_checked(lambda s: _m_integrand_log(dc, s), s_exit, s_hi)
    T = I * math.exp(-lG)
    omega = math.exp(s_exit) * zeta0
    theta = None
    if w_spec is not None:
        theta = _theta_from_slopes(dc, w_spec, lG, s_exit, s_hi)
    return PassageResult(eta=eta, xi=xi, omega=omega, T=T, theta=theta, G=G)


def exit_point(dc: DerivedConstants, eta: float, T: float,
               zeta0: float = 1.0) -> tuple[float, float]:
    """Invert the passage time: the entry abscissa xi with T(xi, eta) = T.

    T(., eta) decreases from +inf (xi -> 0) to 0 (xi = zeta0), so a bracketed
    root-find on log xi is safe.  Returns (xi, omega).
    """
    if eta <= 0.0 or eta > zeta0:
        raise DomainError("exit_point needs 0 < eta <= zeta0")
    if T <= 0.0:
        raise DomainError("T below minimal passage time (T must be > 0)")

    def gap(lx):
        return passage_time(dc, math.exp(lx), eta, zeta0).T - T

    hi = math.log(zeta0) - 1e-12
    lo = hi - 4.0
    while gap(lo) < 0.0:
        lo = hi - 2.0 * (hi - lo)
        if lo < -700.0:
            raise DomainError("entry abscissa underflow while bracketing T")
    lx = brentq(gap, lo, hi, xtol=1e-13, rtol=8.9e-16)
    xi = math.exp(lx)
    res = passage_time(dc, xi, eta, zeta0)
    return xi, res.omega


def theta_exponent(dc: DerivedConstants, rho: float) -> float:
    """Exponent E of (c0 + c2 M^2) in the Theta integrand: -(rho/2)(1-s0) - s0."""
    return -(rho / 2.0) * (1.0 - dc.s0) - dc.s0


def _theta1(spec: HomogeneousSpec, M: float) -> float:
    # theta(1, M) for theta = amp (cx x^2 + cy y^2)^{rho/2}
    return spec.amp * (spec.cx + spec.cy * M * M) ** (spec.rho / 2.0)


def _theta_integrand_log(dc: DerivedConstants, spec: HomogeneousSpec, s: float) -> float:
    E = theta_exponent(dc, spec.rho)
    M = math.exp(s)
    return (_theta1(spec, M)
            * math.exp(((1.0 - spec.rho / 2.0) / dc.beta0) * s
                       + E * math.log(dc.c0 + dc.c2 * M * M)))


def _theta_from_slopes(dc: DerivedConstants, spec: HomogeneousSpec,
                       lG: float, s_exit: float, s_hi: float) -> float:
    if s_exit >= s_hi:
        return 0.0
    I = _quad_checked(lambda s: _theta_integrand_log(dc, spec, s), s_exit, s_hi)
    return math.exp((spec.rho / 2.0 - 1.0) * lG) * I


def theta_integral(dc: DerivedConstants, spec: HomogeneousSpec,
                   eta: float, T: float, zeta0: float = 1.0) -> float:
    """Theta(T) = int_0^T theta(orbit(t)) dt for the passage of duration T.

    The entry abscissa is resolved from (eta, T) first, then the weighted
    slope integral is evaluated between the same M-limits as the passage.
    """
    xi, _ = exit_point(dc, eta, T, zeta0)
    lG = log_level_constant(dc, xi, eta)
    s_hi = math.log(eta / xi)
    s_exit = _solve_m_exit(dc, lG, zeta0, s_hi)
    return _theta_from_slopes(dc, spec, lG, s_exit, s_hi)


def _theta_star_integral(dc: DerivedConstants, spec: HomogeneousSpec) -> float:
    """Full-line theta integrand integral (finite only for rho < 2)."""
    rate_left = (1.0 - spec.rho / 2.0) / dc.beta0
    rate_right = (2.0 - spec.rho) / (2.0 * dc.beta)
    if rate_left <= 0.0 or rate_right <= 0.0:
        raise DomainError("full theta integral diverges for rho >= 2")
    s_lo = -45.0 / rate_left - 5.0
    s_hi = 45.0 / rate_right + 5.0
    return _quad_checked(lambda s: _theta_integrand_log(dc, spec, s), s_lo, s_hi)


def theta_asymptotic_constant(dc: DerivedConstants, spec: HomogeneousSpec,
                              eta: float, zeta0: float = 1.0) -> tuple[str, float]:
    """Regime tag and leading constant of Theta(T) as T grows.

    rho < 2 ("sub2"):   Theta ~ C * T^{1-rho/2},  C = (int th-integrand) I^{rho/2-1}
    rho = 2 ("crit2"):  Theta ~ C * log T,        C = beta0 th0/c0 + beta th_inf/c2
    rho > 2 ("super2"): Theta -> C, assembled from both endpoint laws with the
                        limit constants omega0 and xi0(eta).
    """
    rho = spec.rho
    E = theta_exponent(dc, rho)
    if rho < 2.0:
        I = m_integral(dc)
        C = _theta_star_integral(dc, spec) * I ** (rho / 2.0 - 1.0)
        return "sub2", C
    if rho == 2.0:
        # E = -1 identically at rho = 2
        C = (spec.theta0 * dc.beta0 * dc.c0 ** E
             + spec.theta_inf * dc.beta * dc.c2 ** E)
        return "crit2", C
    I = m_integral(dc)
    om0 = omega_zero(dc, zeta0)
    xi0 = xi_zero(dc, eta)
    p = rho / 2.0 - 1.0
    C = (I ** p / p) * (
        dc.beta0 * spec.theta0 * dc.c0 ** E * (zeta0 / om0) ** (p / dc.beta0)
        + dc.beta * spec.theta_inf * dc.c2 ** E * (eta / xi0) ** (p / dc.beta))
    return "super2", C


def rk_orbit(p: FlowParams, q0, t_end: float, tol: float = 1e-10,
             x_level: float | None = None, y_levels=(),
             theta_spec: HomogeneousSpec | None = None,
             stop_at_x_level: bool = False, max_step: float = math.inf) -> OrbitResult:
    """Adaptive embedded Runge-Kutta integration of the full 3D field.

    Brute-force oracle: no level-set shortcuts.  q0 = (x, y, z).  Records
    first upward crossings of x = x_level and of each y = level (downward),
    and optionally accumulates int theta dt in an extra state component.
    t_end may be negative (time reversal).
    """
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    with_theta = theta_spec is not None

    def rhs(t, state):
        x, y = state[0], state[1]
        dx, dy, dz = vector_field(p, x, y, state[2])
        out = [dx, dy, dz]
        if with_theta:
            out.append(homogeneous_eval(theta_spec, x, y))
        return out

    events = []
    labels = []
    if x_level is not None:
        def make_x(level):
            def ev(t, state):
                return state[0] - level
            ev.direction = 1 if t_end > 0 else -1
            ev.terminal = bool(stop_at_x_level)
            return ev
        events.append(make_x(x_level))
        labels.append(("x", x_level))
    for level in y_levels:
        def make_y(level):
            def ev(t, state):
                return state[1] - level
            ev.direction = -1 if t_end > 0 else 1
            ev.terminal = False
            return ev
        events.append(make_y(level))
        labels.append(("y", level))

    state0 = list(q0) + ([0.0] if with_theta else [])
    sol = solve_ivp(rhs, (0.0, t_end), state0, method="RK45",
                    rtol=tol, atol=tol * 1e-2, events=events or None,
                    dense_output=False, max_step=max_step)
    if not sol.success:
        raise QuadratureError(f"integration stalled: {sol.message}")
    ev_dict = {}
    for k, (kind, level) in enumerate(labels):
        ev_dict[(kind, level)] = (sol.t_events[k], sol.y_events[k])
    return OrbitResult(
        t=sol.t, x=sol.y[0], y=sol.y[1], z=sol.y[2],
        theta=sol.y[3] if with_theta else None, events=ev_dict)


def rk_passage(p: FlowParams, xi: float, eta: float, zeta0: float,
               theta_spec: HomogeneousSpec | None = None,
               tol: float = 1e-11) -> tuple[float, float, float, float]:
    """Passage quantities from the RK oracle: (T, omega, theta, z_disp).

    Integrates from (xi, eta, 0) until the first upward crossing of
    x = zeta0; theta is 0.0 when no spec is given.  z_disp is the actual
    vertical displacement, i.e. T plus the w-integral.
    """
    _validate_entry(xi, eta, zeta0)
    res = rk_orbit(p, (xi, eta, 0.0), t_end=1e12, tol=tol, x_level=zeta0,
                   theta_spec=theta_spec, stop_at_x_level=True)
    t_ev, y_ev = res.events[("x", zeta0)]
    if len(t_ev) == 0:
        raise QuadratureError("orbit never reached the exit boundary")
    T = float(t_ev[0])
    omega = float(y_ev[0][1])
    z_disp = float(y_ev[0][2])
    theta = float(y_ev[0][3]) if theta_spec is not None else 0.0
    return T, omega, theta, z_disp
