"""Parameter validation, derived constants, and the conserved quantity."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from neutralflow.model import (
    DerivedConstants,
    FlowParams,
    HomogeneousSpec,
    InfiniteMeasureError,
    ParameterError,
    PotentialSpec,
    derive_constants,
    first_integral,
    homogeneous_eval,
    vector_field,
)

# hand-checked arithmetic: (a0,b0,a2,b2) -> (delta,u,v,beta0,beta)
DERIVE_CASES = [
    ((1.0, 1.0, 2.0, 1.0), (1.0, 4.0, 6.0, 1.0, 1.5)),
    ((1.0, 1.0, 3.0, 1.0), (2.0, 2.0, 4.0, 1.0, 2.0)),
    ((1.0, 1.0, 5.0, 1.0), (4.0, 1.0, 3.0, 1.0, 3.0)),
    ((2.0, 2.0, 6.0, 2.0), (8.0, 2.0, 4.0, 1.0, 2.0)),
    ((2.0, 2.0, 10.0, 2.0), (16.0, 1.0, 3.0, 1.0, 3.0)),
]


def _params(a0, b0, a2, b2):
    return FlowParams(a0=a0, a2=a2, b0=b0, b2=b2)


@pytest.mark.parametrize("coeffs,expect", DERIVE_CASES)
def test_derive_constants_hand_cases(coeffs, expect):
    dc = derive_constants(_params(*coeffs))
    delta, u, v, beta0, beta = expect
    assert dc.delta == pytest.approx(delta, rel=1e-14)
    assert dc.u == pytest.approx(u, rel=1e-14)
    assert dc.v == pytest.approx(v, rel=1e-14)
    assert dc.beta0 == pytest.approx(beta0, rel=1e-14)
    assert dc.beta == pytest.approx(beta, rel=1e-14)
    assert dc.s0 == pytest.approx(0.5 / beta0 + 0.5 / beta, rel=1e-14)


def test_derive_constants_identities_random():
    # the six internal identities must hold for any admissible parameters
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 200:
        a0, b0, b2 = rng.uniform(0.2, 5.0, size=3)
        a2 = b2 + rng.uniform(0.05, 6.0)
        try:
            dc = derive_constants(_params(a0, b0, a2, b2))
        except ParameterError:
            continue
        checked += 1
        assert (dc.u + 2.0) * dc.a0 == pytest.approx(dc.v * dc.b0, rel=1e-11)
        assert (dc.v + 2.0) * dc.b2 == pytest.approx(dc.u * dc.a2, rel=1e-11)
        assert dc.a0 * dc.u / (dc.b2 * dc.v) == pytest.approx(dc.c0 / dc.c2, rel=1e-11)
        assert dc.beta0 == pytest.approx((dc.u + dc.v + 2.0) / (2.0 * dc.v), rel=1e-11)
        assert dc.beta == pytest.approx((dc.u + dc.v + 2.0) / (2.0 * dc.u), rel=1e-11)


def test_beta_exceeds_one_iff_a2_gt_b2():
    dc = derive_constants(_params(1.0, 1.0, 2.0, 1.0))
    assert dc.beta > 1.0
    with pytest.raises(InfiniteMeasureError):
        _params(1.0, 1.0, 1.0, 2.0)      # a2 < b2: beta < 1
    with pytest.raises(InfiniteMeasureError):
        _params(1.0, 1.0, 0.5, 1.0)
    with pytest.raises(ParameterError):
        _params(1.0, 1.0, 1.0, 1.0)      # delta = 0 is rejected first


def test_parameter_rejections():
    with pytest.raises(ParameterError):
        _params(0.0, 1.0, 2.0, 1.0)          # a0 > 0 required
    with pytest.raises(ParameterError):
        _params(-1.0, 1.0, 2.0, 1.0)
    with pytest.raises(ParameterError):
        FlowParams(a0=1.0, a2=2.0, b0=1.0, b2=1.0, eps=0.0)
    with pytest.raises(ParameterError):
        FlowParams(a0=1.0, a2=2.0, b0=1.0, b2=1.0, eps=0.4)  # 0.4 > 0.5/sqrt(2)
    with pytest.raises(ParameterError):
        # sup |w| >= 1 on the chart box
        FlowParams(a0=1.0, a2=2.0, b0=1.0, b2=1.0,
                   w_spec=HomogeneousSpec(rho=2.0, amp=60.0))
    with pytest.raises(ParameterError):
        HomogeneousSpec(rho=2.0, amp=0.0)
    with pytest.raises(ParameterError):
        HomogeneousSpec(rho=2.0, amp=1.0, cx=-1.0)


def test_b0_zero_admissible():
    # b0 = 0 keeps delta = a2 b0 - a0 b2 = -a0 b2 < 0; u, v flip sign with it
    dc = derive_constants(FlowParams(a0=1.0, a2=2.0, b0=0.0, b2=1.0))
    assert dc.delta == pytest.approx(-1.0)
    assert dc.u < 0.0 and dc.v < 0.0
    assert dc.beta0 == pytest.approx(0.5)   # c0/(2 a0) = 1/2
    assert dc.beta == pytest.approx(1.5)


def test_vector_field_values():
    p = _params(1.0, 1.0, 2.0, 1.0)
    dx, dy, dz = vector_field(p, 0.02, 0.03, 0.0)
    # hand arithmetic: dx = x(a0 x^2 + a2 y^2), dy = -y(b0 x^2 + b2 y^2)
    assert dx == pytest.approx(0.02 * (0.0004 + 2.0 * 0.0009), rel=1e-14)
    assert dy == pytest.approx(-0.03 * (0.0004 + 0.0009), rel=1e-14)
    w = homogeneous_eval(p.w_spec, 0.02, 0.03)
    assert dz == pytest.approx(1.0 + w, rel=1e-14)
    # neutral orbit: the origin advances in z at unit speed
    assert vector_field(p, 0.0, 0.0, 0.0) == (0.0, 0.0, 1.0)


def test_first_integral_value():
    # L(1,1) = a0/v + b2/u = 1/6 + 1/4 = 5/12 by hand
    p = _params(1.0, 1.0, 2.0, 1.0)
    assert first_integral(p, 1.0, 1.0) == pytest.approx(5.0 / 12.0, rel=1e-14)


def _integrate_until_exit(p, q0, t_max=500.0):
    # the cubic x-growth escapes in finite time, so stop at x = 0.12
    def rhs(t, q):
        dx, dy, _ = vector_field(p, q[0], q[1], 0.0)
        return [dx, dy]

    def hit(t, q):
        return q[0] - 0.12
    hit.terminal = True
    hit.direction = 1

    sol = solve_ivp(rhs, (0.0, t_max), q0, method="RK45", rtol=1e-11, atol=1e-14,
                    events=hit)
    assert sol.success
    return sol


@pytest.mark.parametrize("coeffs", [c for c, _ in DERIVE_CASES])
def test_first_integral_conserved_along_orbit(coeffs):
    # independent route: adaptive RK on the planar field, L drift <= 1e-9
    p = _params(*coeffs)
    q0 = (0.04, 0.09)
    sol = _integrate_until_exit(p, q0)
    L0 = first_integral(p, *q0)
    assert len(sol.t) > 20
    for x, y in zip(sol.y[0], sol.y[1]):
        assert first_integral(p, x, y) == pytest.approx(L0, rel=1e-9)


def test_first_integral_negative_delta_branch():
    p = FlowParams(a0=1.0, a2=2.0, b0=0.0, b2=1.0)
    q0 = (0.03, 0.08)
    sol = _integrate_until_exit(p, q0)
    L0 = first_integral(p, *q0)
    Lend = first_integral(p, sol.y[0][-1], sol.y[1][-1])
    assert Lend == pytest.approx(L0, rel=1e-9)


def test_homogeneous_spec_endpoints():
    s = HomogeneousSpec(rho=2.0, amp=0.1, cx=1.0, cy=4.0)
    assert s.theta0 == pytest.approx(0.1)
    assert s.theta_inf == pytest.approx(0.4)   # amp * cy^{rho/2} = 0.1 * 4
    assert homogeneous_eval(s, 0.0, 0.0) == 0.0
    s0 = HomogeneousSpec(rho=0.0, amp=0.3)
    assert homogeneous_eval(s0, 0.0, 0.0) == pytest.approx(0.3)
    assert homogeneous_eval(s0, 0.1, -0.2) == pytest.approx(0.3)
    with pytest.raises(ParameterError):
        homogeneous_eval(HomogeneousSpec(rho=-1.0, amp=1.0), 0.0, 0.0)


def test_potential_spec_kappa():
    assert PotentialSpec(rho_psi=0.0).kappa == pytest.approx(1.0)
    assert PotentialSpec(rho_psi=1.0).kappa == pytest.approx(0.5)
    well = PotentialSpec(C=2.0, rho_psi=1.0, cx=1.0, cy=1.0).well()
    assert well.rho == 1.0 and well.amp == 2.0


def test_derived_constants_is_frozen():
    dc = derive_constants(_params(1.0, 1.0, 2.0, 1.0))
    with pytest.raises(Exception):
        dc.u = 3.0
    assert isinstance(dc, DerivedConstants)


def test_sup_w_formula():
    p = FlowParams(a0=1.0, a2=2.0, b0=1.0, b2=1.0,
                   w_spec=HomogeneousSpec(rho=2.0, amp=0.1, cx=1.0, cy=1.0))
    # corner of the chart box: |w| <= amp ((cx+cy) eps^2)^{rho/2}
    assert p.sup_w() == pytest.approx(0.1 * 2.0 * 0.1 ** 2, rel=1e-14)
    assert p.sup_w() < 1.0
