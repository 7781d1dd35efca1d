"""Level-set passage solver against the brute-force Runge-Kutta route."""

import math

import numpy as np
import pytest

from neutralflow import local_dynamics as ld
from neutralflow.model import FlowParams, HomogeneousSpec, derive_constants

P_STABLE = FlowParams(a0=1.0, a2=2.0, b0=1.0, b2=1.0)
P_BOUNDARY = FlowParams(a0=2.0, a2=6.0, b0=2.0, b2=2.0)
P_CLT = FlowParams(a0=2.0, a2=10.0, b0=2.0, b2=2.0)
PRESETS = [P_STABLE, P_BOUNDARY, P_CLT]

DC = {id(p): derive_constants(p) for p in PRESETS}

# full m-integrals, scipy adaptive quadrature in log coordinates, frozen 2026-08
I_FULL = {
    (1.0, 2.0, 1.0, 1.0): 0.9638106483299993,
    (2.0, 6.0, 2.0, 2.0): 0.6555143885730299,
    (2.0, 10.0, 2.0, 2.0): 0.8346845058917293,
}

# closed-form limit constants at eta = 0.7, zeta0 = 1.0, frozen 2026-08
XI0_07 = {
    (1.0, 2.0, 1.0, 1.0): 1.4672738802972842,
    (2.0, 6.0, 2.0, 2.0): 0.4429200541034792,
    (2.0, 10.0, 2.0, 2.0): 0.2883338356878549,
}
OM0_1 = {
    (1.0, 2.0, 1.0, 1.0): 0.8586576711272057,
    (2.0, 6.0, 2.0, 2.0): 0.4635186693253429,
    (2.0, 10.0, 2.0, 2.0): 0.5258182894970455,
}


def _key(p):
    return (p.a0, p.a2, p.b0, p.b2)


def _dc(p):
    return DC[id(p)]


def test_m_integral_frozen_values():
    for p in PRESETS:
        assert ld.m_integral(_dc(p)) == pytest.approx(I_FULL[_key(p)], rel=1e-11)


def test_m_integral_two_substitutions_agree():
    # same integral via M-domain splitting at 1, fully independent change of
    # variables from the production log-domain route
    for p in PRESETS:
        dc = _dc(p)
        assert abs(ld.m_integral_split(dc) - ld.m_integral(dc)) <= 1e-9


def test_m_integral_partial_ranges_additive():
    dc = _dc(P_STABLE)
    full = ld.m_integral(dc)
    a = ld.m_integral(dc, 0.0, 0.6)
    b = ld.m_integral(dc, 0.6, 7.0)
    c = ld.m_integral(dc, 7.0, math.inf)
    assert a + b + c == pytest.approx(full, rel=1e-10)
    assert ld.m_integral(dc, 2.0, 2.0) == 0.0


def test_level_constant_ties_to_first_integral():
    # G^{(u+v+2)/2} = 2 c0 c2 L / delta
    from neutralflow.model import first_integral
    for p in PRESETS:
        dc = _dc(p)
        x, y = 0.031, 0.074
        G = math.exp(ld.log_level_constant(dc, x, y))
        L = first_integral(p, x, y)
        assert G ** ((dc.u + dc.v + 2.0) / 2.0) == pytest.approx(
            2.0 * dc.c0 * dc.c2 * L / dc.delta, rel=1e-11)


def test_reconstruction_round_trip():
    for p in PRESETS:
        dc = _dc(p)
        for (x, y) in [(0.01, 0.09), (0.08, 0.02), (0.05, 0.05)]:
            lc = ld.level_coords(dc, x, y)
            G = math.exp(ld.log_level_constant(dc, x, y))
            assert ld.reconstruct_x2(dc, G, lc.M) == pytest.approx(x * x, rel=1e-10)


@pytest.mark.parametrize("p", PRESETS, ids=["stable", "boundary", "clt"])
@pytest.mark.parametrize("entry", [(0.01, 0.07), (0.05, 0.099), (0.09, 0.03)])
def test_passage_matches_rk_oracle(p, entry):
    # independent oracle: adaptive RK on the raw vector field, rtol 1e-11
    dc = _dc(p)
    xi, eta = entry
    zeta0 = 0.1
    res = ld.passage_time(dc, xi, eta, zeta0=zeta0, w_spec=p.w_spec)
    T_rk, om_rk, th_rk, z_rk = ld.rk_passage(p, xi, eta, zeta0, theta_spec=p.w_spec)
    assert res.T == pytest.approx(T_rk, rel=1e-8)
    assert res.omega == pytest.approx(om_rk, rel=1e-8)
    assert res.theta == pytest.approx(th_rk, rel=1e-7)
    # vertical displacement decomposes as T + Theta
    assert z_rk == pytest.approx(res.T + res.theta, rel=1e-8)


def test_passage_regression_pin():
    # frozen output of this solver (cross-checked against the RK oracle above)
    dc = _dc(P_STABLE)
    res = ld.passage_time(dc, 0.01, 0.07, zeta0=0.1,
                          w_spec=HomogeneousSpec(rho=2.0, amp=0.1))
    assert res.T == pytest.approx(447.1349343303467, rel=1e-12)
    assert res.omega == pytest.approx(0.01428700338933438, rel=1e-12)
    assert res.theta == pytest.approx(0.158914497193431, rel=1e-11)
    assert res.G == pytest.approx(0.0016117428468172712, rel=1e-12)


def test_passage_shallow_entry_allowed():
    # entries with xi > eta (below the diagonal) are legitimate
    dc = _dc(P_STABLE)
    res = ld.passage_time(dc, 0.09, 0.01, zeta0=0.1)
    T_rk, om_rk, _, _ = ld.rk_passage(P_STABLE, 0.09, 0.01, 0.1)
    assert res.T == pytest.approx(T_rk, rel=1e-8)
    assert res.omega == pytest.approx(om_rk, rel=1e-8)


def test_passage_degenerate_entry_on_boundary():
    dc = _dc(P_STABLE)
    res = ld.passage_time(dc, 0.1, 0.05, zeta0=0.1)
    assert res.T == 0.0
    assert res.omega == pytest.approx(0.05)


def test_passage_time_g_times_t_is_m_integral():
    # T * G equals the m-integral between the exit and entry slopes
    dc = _dc(P_BOUNDARY)
    xi, eta, zeta0 = 0.004, 0.06, 0.1
    res = ld.passage_time(dc, xi, eta, zeta0=zeta0)
    m_exit = res.omega / zeta0
    direct = ld.m_integral(dc, m_exit, eta / xi)
    assert res.T * res.G == pytest.approx(direct, rel=1e-9)


def test_passage_domain_errors():
    dc = _dc(P_STABLE)
    with pytest.raises(ld.DomainError):
        ld.passage_time(dc, 0.0, 0.05, zeta0=0.1)
    with pytest.raises(ld.DomainError):
        ld.passage_time(dc, 0.11, 0.05, zeta0=0.1)
    with pytest.raises(ld.DomainError):
        ld.passage_time(dc, 0.01, -0.05, zeta0=0.1)
    with pytest.raises(ld.DomainError):
        ld.exit_point(dc, 0.05, 0.0, zeta0=0.1)
    with pytest.raises(ld.DomainError):
        ld.exit_point(dc, 0.2, 10.0, zeta0=0.1)


def test_exit_point_inverts_passage_time():
    for p in PRESETS:
        dc = _dc(p)
        for T in (3.0, 50.0, 1200.0):
            xi, om = ld.exit_point(dc, 0.07, T, zeta0=0.1)
            back = ld.passage_time(dc, xi, 0.07, zeta0=0.1)
            assert back.T == pytest.approx(T, rel=1e-9)
            assert back.omega == pytest.approx(om, rel=1e-12)


def test_xi_monotone_decreasing_in_T():
    dc = _dc(P_STABLE)
    xs = [ld.exit_point(dc, 0.07, T, zeta0=0.1)[0] for T in (10.0, 100.0, 1000.0)]
    assert xs[0] > xs[1] > xs[2] > 0.0


def test_limit_constants_frozen_and_monotone():
    for p in PRESETS:
        dc = _dc(p)
        assert ld.xi_zero(dc, 0.7) == pytest.approx(XI0_07[_key(p)], rel=1e-11)
        assert ld.omega_zero(dc, 1.0) == pytest.approx(OM0_1[_key(p)], rel=1e-11)
        # xi0 strictly decreasing in eta
        assert ld.xi_zero(dc, 0.4) > ld.xi_zero(dc, 0.7)


def test_entry_abscissa_power_law_convergence():
    # xi(eta, T) T^beta -> xi0(eta): the T = 1e6 ratio must sit closer to 1
    # than the T = 1e4 one, and inside 5 percent already at 1e4
    dc = _dc(P_STABLE)
    eta, zeta0 = 0.07, 0.1
    x0 = ld.xi_zero(dc, eta)
    r4 = ld.exit_point(dc, eta, 1e4, zeta0)[0] * 1e4 ** dc.beta / x0
    r6 = ld.exit_point(dc, eta, 1e6, zeta0)[0] * 1e6 ** dc.beta / x0
    assert abs(r4 - 1.0) < 0.05
    assert abs(r6 - 1.0) < abs(r4 - 1.0)


def test_exit_ordinate_power_law_convergence():
    dc = _dc(P_CLT)
    eta, zeta0 = 0.07, 0.1
    w0 = ld.omega_zero(dc, zeta0)
    r4 = ld.exit_point(dc, eta, 1e4, zeta0)[1] * 1e4 ** dc.beta0 / w0
    r6 = ld.exit_point(dc, eta, 1e6, zeta0)[1] * 1e6 ** dc.beta0 / w0
    assert abs(r4 - 1.0) < 0.05
    assert abs(r6 - 1.0) < abs(r4 - 1.0)


def test_theta_exponent_is_minus_one_at_rho_two():
    # -(rho/2)(1-s0) - s0 collapses to -1 when rho = 2, any parameters
    for p in PRESETS:
        assert ld.theta_exponent(_dc(p), 2.0) == pytest.approx(-1.0, abs=1e-14)


def test_theta_integral_matches_passage_route():
    # same quantity through exit_point + weighted integral vs passage_time
    dc = _dc(P_STABLE)
    spec = HomogeneousSpec(rho=1.0, amp=0.5, cx=1.0, cy=2.0)
    res = ld.passage_time(dc, 0.008, 0.06, zeta0=0.1, w_spec=spec)
    th = ld.theta_integral(dc, spec, 0.06, res.T, zeta0=0.1)
    assert th == pytest.approx(res.theta, rel=1e-8)


# asymptotic constants at eta = 0.7, zeta0 = 1.0, amp = cx = cy = 1, frozen 2026-08
THETA_CONST = {
    (1.0, 2.0, 1.0, 1.0): {1.0: 2.0608966524694052, 2.0: 1.0, 3.0: 1.7},
    (2.0, 6.0, 2.0, 2.0): {1.0: 1.4371755675154543, 2.0: 0.5, 3.0: 0.85},
    (2.0, 10.0, 2.0, 2.0): {1.0: 1.4034446151084825, 2.0: 0.5, 3.0: 0.85},
}


def test_theta_asymptotic_constants_frozen():
    tags = {1.0: "sub2", 2.0: "crit2", 3.0: "super2"}
    for p in PRESETS:
        dc = _dc(p)
        for rho, want in THETA_CONST[_key(p)].items():
            tag, C = ld.theta_asymptotic_constant(
                dc, HomogeneousSpec(rho=rho, amp=1.0), 0.7, 1.0)
            assert tag == tags[rho]
            assert C == pytest.approx(want, rel=1e-10)


def test_crit2_constant_per_end_form():
    # beta0 th0 / c0 + beta th_inf / c2, by hand for each preset
    dc = _dc(P_STABLE)
    _, C = ld.theta_asymptotic_constant(dc, HomogeneousSpec(rho=2.0, amp=1.0), 0.7)
    assert C == pytest.approx(1.0 / 2.0 + 1.5 / 3.0, rel=1e-12)
    dc = _dc(P_CLT)
    _, C = ld.theta_asymptotic_constant(dc, HomogeneousSpec(rho=2.0, amp=1.0), 0.7)
    assert C == pytest.approx(1.0 / 4.0 + 3.0 / 12.0, rel=1e-12)


def test_super2_constant_collapses_to_endpoint_form():
    # for rho = 3 the closed form reduces to 2 (beta0 th0 zeta0 / c0
    # + beta th_inf eta / c2); the I, omega0, xi0 factors cancel exactly
    for p in PRESETS:
        dc = _dc(p)
        for eta, zeta0 in [(0.7, 1.0), (0.05, 0.1)]:
            _, C = ld.theta_asymptotic_constant(
                dc, HomogeneousSpec(rho=3.0, amp=1.0), eta, zeta0)
            want = 2.0 * (dc.beta0 * zeta0 / dc.c0 + dc.beta * eta / dc.c2)
            assert C == pytest.approx(want, rel=1e-10)


def test_theta_sublinear_growth_tracks_constant():
    # rho = 1: Theta(T) / (C T^{1/2}) within 3 percent of 1 at T = 1e4
    dc = _dc(P_STABLE)
    spec = HomogeneousSpec(rho=1.0, amp=1.0)
    _, C = ld.theta_asymptotic_constant(dc, spec, 0.7, 1.0)
    th = ld.theta_integral(dc, spec, 0.7, 1e4, zeta0=1.0)
    assert th / (C * 1e4 ** 0.5) == pytest.approx(1.0, abs=0.03)


def test_rk_orbit_z_and_events():
    p = P_STABLE
    res = ld.rk_orbit(p, (0.02, 0.05, 0.0), t_end=5.0, tol=1e-10)
    # z advances at rate 1 + w with |w| << 1 here
    assert res.z[-1] == pytest.approx(5.0, abs=0.01)
    res2 = ld.rk_orbit(p, (0.02, 0.05, 0.0), t_end=1e9, tol=1e-10,
                       x_level=0.08, stop_at_x_level=True)
    t_ev, y_ev = res2.events[("x", 0.08)]
    assert len(t_ev) == 1
    assert y_ev[0][0] == pytest.approx(0.08, rel=1e-9)


def test_rk_orbit_time_reversal_returns_to_start():
    p = P_STABLE
    fwd = ld.rk_orbit(p, (0.03, 0.06, 0.0), t_end=40.0, tol=1e-11)
    xe, ye, ze = fwd.x[-1], fwd.y[-1], fwd.z[-1]
    back = ld.rk_orbit(p, (xe, ye, ze), t_end=-40.0, tol=1e-11)
    assert back.x[-1] == pytest.approx(0.03, rel=1e-7)
    assert back.y[-1] == pytest.approx(0.06, rel=1e-7)
    assert abs(back.z[-1]) < 1e-6
