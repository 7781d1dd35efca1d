"""Vector-field parameters, derived constants, first integral, homogeneous evaluators.

The planar field

    dx/dt =  x (a0 x^2 + a2 y^2)
    dy/dt = -y (b0 x^2 + b2 y^2)

has the coordinate axes as invariant lines and a degenerate (neutral) fixed
point at the origin.  The vertical component of the 3D flow is 1 + w(x, y)
with w homogeneous and small.  Everything downstream (passage times, return
maps, limit laws, operator spectra) is controlled by the closed-form
constants derived here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "ParameterError",
    "InfiniteMeasureError",
    "HomogeneousSpec",
    "PotentialSpec",
    "FlowParams",
    "DerivedConstants",
    "derive_constants",
    "vector_field",
    "first_integral",
    "homogeneous_eval",
]

_IDENT_RTOL = 1e-12


class ParameterError(ValueError):
    """Inadmissible vector-field or potential parameters."""


class InfiniteMeasureError(ParameterError):
    """a2 <= b2: the invariant measure is infinite (beta <= 1), unsupported."""


@dataclass(frozen=True)
class HomogeneousSpec:
    """Homogeneous function theta(x, y) = amp * (cx x^2 + cy y^2)^(rho/2).

    rho is the homogeneity exponent: theta(s x, s y) = s^rho theta(x, y)
    for s > 0.  cx, cy > 0 keep theta nonvanishing on both axes.
    """

    rho: float
    amp: float = 1.0
    cx: float = 1.0
    cy: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.rho) and math.isfinite(self.amp)):
            raise ParameterError("rho and amp must be finite")
        if self.amp == 0.0:
            raise ParameterError("amp = 0 makes theta vanish identically")
        if self.cx <= 0.0 or self.cy <= 0.0:
            raise ParameterError("cx, cy must be positive so theta(1,0), theta(0,1) != 0")

    @property
    def theta0(self) -> float:
        """theta(1, 0)."""
        return self.amp * self.cx ** (self.rho / 2.0)

    @property
    def theta_inf(self) -> float:
        """theta(0, 1)."""
        return self.amp * self.cy ** (self.rho / 2.0)

    def __call__(self, x: float, y: float) -> float:
        return homogeneous_eval(self, x, y)


@dataclass(frozen=True)
class PotentialSpec:
    """Potential psi: a well of depth scale C inside the chart plus a flat offset.

    Inside the chart psi(x, y) = -C * (cx x^2 + cy y^2)^(rho_psi/2); outside
    psi vanishes.  The induced value over one return is psi_bar = C' - psi0
    where psi0 >= 0 accumulates the well along the orbit.  C' must be large
    enough that the induced mean stays positive (checked against measured
    return statistics, not here).
    """

    C: float = 1.0
    C_prime: float = 25.0
    rho_psi: float = 0.0
    cx: float = 1.0
    cy: float = 1.0

    def __post_init__(self):
        if self.C < 0.0:
            raise ParameterError("C must be >= 0")
        if self.C_prime < 0.0:
            raise ParameterError("C_prime must be >= 0")
        if self.rho_psi < 0.0:
            raise ParameterError("rho_psi must be >= 0")
        if self.cx <= 0.0 or self.cy <= 0.0:
            raise ParameterError("cx, cy must be positive")

    @property
    def kappa(self) -> float:
        """Tail-exponent divisor of psi0: kappa = 1 - rho_psi / 2."""
        return 1.0 - self.rho_psi / 2.0

    def well(self) -> HomogeneousSpec:
        """The homogeneous profile integrated along passages (without the sign)."""
        return HomogeneousSpec(rho=self.rho_psi, amp=self.C, cx=self.cx, cy=self.cy)


def _default_w() -> HomogeneousSpec:
    return HomogeneousSpec(rho=2.0, amp=0.1)


@dataclass(frozen=True)
class FlowParams:
    """Coefficients of the vector field plus the chart geometry and potentials."""

    a0: float
    a2: float
    b0: float
    b2: float
    eps: float = 0.1
    w_spec: HomogeneousSpec = field(default_factory=_default_w)
    psi_spec: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        for name in ("a0", "a2", "b0", "b2"):
            val = getattr(self, name)
            if not math.isfinite(val) or val < 0.0:
                raise ParameterError(f"{name} must be finite and >= 0, got {val}")
        if self.a0 <= 0.0 or self.a2 <= 0.0 or self.b2 <= 0.0:
            # a0=0 or b2=0 degenerates the axis dynamics; a2=0 kills the coupling
            raise ParameterError("a0, a2, b2 must be strictly positive")
        delta = self.a2 * self.b0 - self.a0 * self.b2
        if delta == 0.0:
            raise ParameterError("degenerate coefficients: a2*b0 - a0*b2 = 0")
        if self.a2 <= self.b2:
            raise InfiniteMeasureError(
                f"a2 = {self.a2} <= b2 = {self.b2}: infinite-measure regime unsupported"
            )
        if not (0.0 < self.eps < 0.5 / math.sqrt(2.0)):
            # the rotated chart box must sit inside the torus fundamental domain
            raise ParameterError("eps must lie in (0, 1/(2*sqrt(2)))")
        if self.w_spec.rho < 0.0:
            raise ParameterError("w must have nonnegative homogeneity exponent")
        if self.sup_w() >= 1.0:
            raise ParameterError("sup |w| over the chart must be < 1")

    def sup_w(self) -> float:
        """sup |w| over the chart box; attained at a corner for this monomial family."""
        w = self.w_spec
        if w.rho == 0.0:
            return abs(w.amp)
        corner = (w.cx + w.cy) * self.eps * self.eps
        return abs(w.amp) * corner ** (w.rho / 2.0)


@dataclass(frozen=True)
class DerivedConstants:
    """All closed-form constants of the field, checked self-consistent on build.

    u, v solve the linear system (u+2) a0 = v b0, (v+2) b2 = u a2;
    beta0 = (u+v+2)/(2v) governs the exit ordinate, beta = (u+v+2)/(2u) the
    passage-time tail; s0 = 1/(2 beta0) + 1/(2 beta) is the combined endpoint
    exponent of the slope integrand; kappa = 1 - rho_psi/2.
    """

    a0: float
    a2: float
    b0: float
    b2: float
    delta: float
    u: float
    v: float
    beta0: float
    beta: float
    c0: float
    c2: float
    s0: float
    kappa: float

    def __post_init__(self):
        def close(p, q):
            return abs(p - q) <= _IDENT_RTOL * max(1.0, abs(p), abs(q))

        if not close((self.u + 2.0) * self.a0, self.v * self.b0):
            raise ParameterError("identity (u+2) a0 = v b0 violated")
        if not close((self.v + 2.0) * self.b2, self.u * self.a2):
            raise ParameterError("identity (v+2) b2 = u a2 violated")
        if not close(self.beta0, (self.u + self.v + 2.0) / (2.0 * self.v)):
            raise ParameterError("identity beta0 = (u+v+2)/(2v) violated")
        if not close(self.beta, (self.u + self.v + 2.0) / (2.0 * self.u)):
            raise ParameterError("identity beta = (u+v+2)/(2u) violated")
        if not close(self.a0 * self.u / (self.b2 * self.v), self.c0 / self.c2):
            raise ParameterError("identity a0 u / (b2 v) = c0 / c2 violated")
        if not (math.copysign(1.0, self.u) == math.copysign(1.0, self.v) ==
                math.copysign(1.0, self.delta)):
            raise ParameterError("u, v must carry the sign of delta")


def derive_constants(p: FlowParams) -> DerivedConstants:
    """Compute every derived constant of the field; fails fast on inconsistency.

    Rejects delta = 0 (ParameterError) and a2 <= b2 (InfiniteMeasureError)
    before any arithmetic; both are already rejected by FlowParams itself,
    so the checks here only matter for hand-built parameter objects.
    """
    delta = p.a2 * p.b0 - p.a0 * p.b2
    if delta == 0.0:
        raise ParameterError("degenerate coefficients: delta = 0")
    if p.a2 <= p.b2:
        raise InfiniteMeasureError("a2 <= b2: infinite-measure regime unsupported")
    c0 = p.a0 + p.b0
    c2 = p.a2 + p.b2
    u = 2.0 * p.b2 * c0 / delta
    v = 2.0 * p.a0 * c2 / delta
    beta0 = c0 / (2.0 * p.a0)
    beta = c2 / (2.0 * p.b2)
    s0 = 0.5 / beta0 + 0.5 / beta
    return DerivedConstants(
        a0=p.a0, a2=p.a2, b0=p.b0, b2=p.b2,
        delta=delta, u=u, v=v, beta0=beta0, beta=beta,
        c0=c0, c2=c2, s0=s0, kappa=p.psi_spec.kappa,
    )


def vector_field(p: FlowParams, x: float, y: float, z: float = 0.0):
    """Right-hand side (dx, dy, dz) at (x, y, z); z enters only through w."""
    dx = x * (p.a0 * x * x + p.a2 * y * y)
    dy = -y * (p.b0 * x * x + p.b2 * y * y)
    dz = 1.0 + homogeneous_eval(p.w_spec, x, y)
    return dx, dy, dz


def first_integral(p: FlowParams, x: float, y: float) -> float:
    """Conserved quantity L = x^u y^v (a0 x^2 / v + b2 y^2 / u).

    For delta < 0 (u, v negative) the reciprocal of the same expression is
    returned so the value stays bounded near the axes.  Only the open first
    quadrant is a valid domain: u, v are non-integer in general so x^u, y^v
    need x, y > 0.
    """
    dc = derive_constants(p)
    if x <= 0.0 or y <= 0.0:
        raise ParameterError("first_integral needs x > 0 and y > 0")
    core = (x ** dc.u) * (y ** dc.v) * (p.a0 * x * x / dc.v + p.b2 * y * y / dc.u)
    if dc.delta > 0.0:
        return core
    return 1.0 / core


def homogeneous_eval(spec: HomogeneousSpec, x: float, y: float) -> float:
    """Evaluate theta(x, y) = amp (cx x^2 + cy y^2)^(rho/2).

    The origin is regular for rho > 0 (value 0), gives amp at rho = 0, and is
    a genuine singularity for rho < 0 (raises).
    """
    r2 = spec.cx * x * x + spec.cy * y * y
    if r2 == 0.0:
        if spec.rho > 0.0:
            return 0.0
        if spec.rho == 0.0:
            return spec.amp
        raise ParameterError("theta singular at the origin for rho < 0")
    return spec.amp * r2 ** (spec.rho / 2.0)
