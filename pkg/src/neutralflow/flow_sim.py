"""Hybrid suspension system and its induced return map.

The section dynamics is the Fibonacci toral automorphism away from a small
box around the fixed point; inside the box the motion is the continuous
cubic flow in the automorphism's orthonormal eigenframe, which neutralizes
the periodic orbit over the origin.  One induced return to the chart
complement is either a single toral step, or a toral step followed by a
fully resolved passage: the passage advances the vertical coordinate by
T + int w, and the return completes at the next integer level, so

    r   = 1 + ceil(T + Theta_w)          section steps
    tau = 1 + T + (ceil(T + Theta_w) - (T + Theta_w))   flow time

which pins |tau - T| <= 2 and |r - (T + Theta_w)| <= 2 pathwise.  The
potential is a homogeneous well -C (cx x^2 + cy y^2)^{rho/2} supported in
the chart plus a constant C' per completed return; its Birkhoff sums are
assembled with the well part prorated linearly over each return and the
constant ticking at return completion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels as K
from .model import DerivedConstants, FlowParams, ParameterError, derive_constants

__all__ = [
    "SectionPoint",
    "ReturnRecord",
    "FlowState",
    "HybridSystem",
    "poincare_step",
    "induced_return",
    "induced_return_rk",
    "induced_psi",
    "srb_sample",
    "return_stream",
    "collect_returns",
    "window_sums",
    "flow_birkhoff",
    "RECORD_DTYPE",
    "RECORD_MAGIC",
    "write_records",
    "read_records",
    "export_records_csv",
]

_CAT = np.array([[2, 1], [1, 1]], dtype=np.int64)


class SectionPoint(NamedTuple):
    """Point on the torus section, coordinates in [-1/2, 1/2)."""

    x: float
    y: float


@dataclass(frozen=True)
class ReturnRecord:
    """One induced return: endpoints, flow time, potential, step count."""

    x0: float
    y0: float
    x1: float
    y1: float
    tau: float
    psi_bar: float
    r: int
    passed_neutral: bool


@dataclass(frozen=True)
class FlowState:
    """Continuation point of a flow-time Birkhoff sum.

    x, y: the section point whose return is in progress; t_off: flow time
    already consumed inside that return.
    """

    x: float
    y: float
    t_off: float


class HybridSystem:
    """Flow parameters bound to the toral chart geometry."""

    def __init__(self, params: FlowParams):
        self.params = params
        self.dc: DerivedConstants = derive_constants(params)
        self.eps = params.eps
        s5 = math.sqrt(5.0)
        self.lam_u = (3.0 + s5) / 2.0
        self.lam_s = (3.0 - s5) / 2.0
        phi = (s5 - 1.0) / 2.0
        nrm = math.hypot(1.0, phi)
        self.e_u = np.array([1.0 / nrm, phi / nrm])
        self.e_s = np.array([-phi / nrm, 1.0 / nrm])
        self._check_geometry()
        self.par = self._pack()

    def _check_geometry(self):
        A = _CAT.astype(float)
        if not np.allclose(A @ self.e_u, self.lam_u * self.e_u, atol=1e-14):
            raise ParameterError("unstable eigvector inconsistent")
        if not np.allclose(A @ self.e_s, self.lam_s * self.e_s, atol=1e-14):
            raise ParameterError("stable eigvector inconsistent")
        if abs(float(self.e_u @ self.e_s)) > 1e-15:
            raise ParameterError("chart axes not orthogonal")
        if abs(self.lam_u * self.lam_s - 1.0) > 1e-14:
            raise ParameterError("map not area preserving")
        # chart box must sit inside the fundamental domain and be escape-proof
        if self.eps * math.sqrt(2.0) >= 0.5:
            raise ParameterError("chart box touches the domain boundary")
        if self.lam_u * self.eps <= self.eps:
            raise ParameterError("expansion too weak to clear the box")

    def _pack(self) -> np.ndarray:
        p, dc = self.params, self.dc
        par = np.zeros(K.NPAR)
        par[K.A0], par[K.A2], par[K.B0], par[K.B2] = p.a0, p.a2, p.b0, p.b2
        par[K.BETA0], par[K.BETA] = dc.beta0, dc.beta
        par[K.C0], par[K.C2], par[K.S0] = dc.c0, dc.c2, dc.s0
        par[K.EPS] = p.eps
        w = p.w_spec
        par[K.W_AMP], par[K.W_RHO], par[K.W_CX], par[K.W_CY] = (
            w.amp, w.rho, w.cx, w.cy)
        ps = p.psi_spec
        par[K.PSI_C], par[K.PSI_CP] = ps.C, ps.C_prime
        par[K.PSI_RHO], par[K.PSI_CX], par[K.PSI_CY] = ps.rho_psi, ps.cx, ps.cy
        par[K.EUX], par[K.EUY] = self.e_u
        par[K.ESX], par[K.ESY] = self.e_s
        return par

    # -- geometry helpers ------------------------------------------------

    def chart_of(self, p: SectionPoint) -> tuple[float, float]:
        return (float(self.e_u @ p), float(self.e_s @ p))

    def point_from_chart(self, cx: float, cy: float) -> SectionPoint:
        q = cx * self.e_u + cy * self.e_s
        return SectionPoint(K.wrap_half(q[0]), K.wrap_half(q[1]))

    def in_neutral_box(self, p: SectionPoint) -> bool:
        # strict interior with a one-sided ulp margin: exit points sit on the
        # boundary and must classify as outside after the coordinate round trip
        cx, cy = self.chart_of(p)
        lim = self.eps * (1.0 - 1e-12)
        return abs(cx) < lim and abs(cy) < lim


def poincare_step(sys: HybridSystem, p: SectionPoint) -> SectionPoint:
    """One step of the base section map (defined on the whole torus)."""
    x, y = K.cat_step(p.x, p.y)
    return SectionPoint(x, y)


def _raise_degenerate(p) -> None:
    raise ArithmeticError(
        f"entry at {p} lies on the stable axis; the passage never exits")


def induced_return(sys: HybridSystem, p: SectionPoint) -> ReturnRecord:
    """First return to the chart complement, passage fully resolved."""
    if sys.in_neutral_box(p):
        raise ValueError("induced map is defined on the chart complement")
    x1, y1, tau, psi, r, passed, err = K.induced_step(sys.par, p.x, p.y)
    if err != K.ERR_OK:
        _raise_degenerate(p)
    return ReturnRecord(p.x, p.y, x1, y1, tau, psi, int(r), bool(passed))


def induced_return_rk(sys: HybridSystem, p: SectionPoint,
                      rtol: float = 1e-10) -> ReturnRecord:
    """Same return computed with the embedded Runge-Kutta passage solver.

    Shares only the chart geometry and bookkeeping with induced_return;
    the passage quantities come from direct integration of the field.
    """
    if sys.in_neutral_box(p):
        raise ValueError("induced map is defined on the chart complement")
    ax, ay = K.cat_step(p.x, p.y)
    cx, cy = sys.chart_of(SectionPoint(ax, ay))
    eps = sys.eps
    if abs(cx) >= eps or abs(cy) >= eps:
        return ReturnRecord(p.x, p.y, ax, ay, 1.0, sys.params.psi_spec.C_prime,
                            1, False)
    if cx == 0.0:
        _raise_degenerate(p)
    T, omega, th_w, th_psi, err = K.dp45_passage(sys.par, abs(cx), abs(cy), rtol)
    if err != K.ERR_OK:
        raise ArithmeticError("passage integration failed")
    z_pass = T + th_w
    z_ceil = math.ceil(z_pass)
    r = 1 + z_ceil
    tau = 1.0 + T + (z_ceil - z_pass)
    psi_bar = sys.params.psi_spec.C_prime - th_psi
    q1 = sys.point_from_chart(math.copysign(eps, cx), math.copysign(omega, cy))
    return ReturnRecord(p.x, p.y, q1.x, q1.y, tau, psi_bar, r, True)


def induced_psi(sys: HybridSystem, p: SectionPoint) -> float:
    """Induced potential of one return."""
    return induced_return(sys, p).psi_bar


# ---------------------------------------------------------------- RNG

_MASK = (1 << 64) - 1


def _sm64(seed: int):
    state = seed & _MASK

    def nxt() -> float:
        nonlocal state
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        return (z >> 11) * 2.0 ** -53

    return nxt


def _initial_point(sys: HybridSystem, seed: int) -> SectionPoint:
    nxt = _sm64(seed)
    for _ in range(10_000):
        p = SectionPoint(nxt() - 0.5, nxt() - 0.5)
        if not sys.in_neutral_box(p):
            return p
    raise RuntimeError("could not draw a start point off the chart")


# ----------------------------------------------------------- streaming

_CHUNK = 1 << 20


def _burned_start(sys: HybridSystem, seed: int, n_burn: int) -> SectionPoint:
    p = _initial_point(sys, seed)
    qx, qy, err = K.induced_burn(sys.par, p.x, p.y, n_burn)
    if err != K.ERR_OK:
        _raise_degenerate(p)
    return SectionPoint(qx, qy)


def return_stream(sys: HybridSystem, seed: int, n: int, n_burn: int = 1000,
                  chunk: int = _CHUNK) -> Iterator[tuple]:
    """Yield (tau, psi_bar, r, passed) arrays, chunk by chunk, n returns total.

    Single deterministic orbit; identical content for any chunk size.
    """
    p = _burned_start(sys, seed, n_burn)
    qx, qy = p.x, p.y
    left = n
    while left > 0:
        m = min(chunk, left)
        tau = np.empty(m)
        psi = np.empty(m)
        r = np.empty(m, dtype=np.int64)
        flag = np.empty(m, dtype=np.uint8)
        qx, qy, cnt, err = K.induced_chunk(sys.par, qx, qy, m, tau, psi, r, flag)
        if err != K.ERR_OK:
            _raise_degenerate(SectionPoint(qx, qy))
        yield tau, psi, r, flag
        left -= m


def collect_returns(sys: HybridSystem, seed: int, n: int,
                    n_burn: int = 1000) -> np.ndarray:
    """n consecutive returns as a structured record array."""
    p = _burned_start(sys, seed, n_burn)
    out = np.empty(n, dtype=RECORD_DTYPE)
    x0 = np.empty(n)
    y0 = np.empty(n)
    x1 = np.empty(n)
    y1 = np.empty(n)
    tau = np.empty(n)
    psi = np.empty(n)
    r = np.empty(n, dtype=np.int64)
    flag = np.empty(n, dtype=np.uint8)
    qx, qy, cnt, err = K.record_chunk(sys.par, p.x, p.y, n,
                                      x0, y0, x1, y1, tau, psi, r, flag)
    if err != K.ERR_OK:
        _raise_degenerate(SectionPoint(qx, qy))
    out["x0"], out["y0"], out["x1"], out["y1"] = x0, y0, x1, y1
    out["tau"], out["psi_bar"] = tau, psi
    out["r"] = np.minimum(r, np.iinfo(np.uint32).max)
    out["flags"] = flag
    return out


def srb_sample(sys: HybridSystem, seed: int, n: int,
               n_burn: int = 1000) -> np.ndarray:
    """n induced-orbit points (distributed per the invariant section measure)."""
    p = _burned_start(sys, seed, n_burn)
    out_x = np.empty(n)
    out_y = np.empty(n)
    qx, qy, cnt, err = K.section_orbit(sys.par, p.x, p.y, n, out_x, out_y)
    if err != K.ERR_OK:
        _raise_degenerate(SectionPoint(qx, qy))
    return np.column_stack([out_x, out_y])


# ------------------------------------------------- flow-time Birkhoff

def window_sums(sys: HybridSystem, seed: int, T: float, n: int,
                n_burn: int = 1000, chunk: int = _CHUNK):
    """Potential Birkhoff sums over n consecutive flow windows of length T.

    One orbit; the well part of each return is spread uniformly over its
    flow time, the constant part ticks at completion.  Returns
    (psi_sums[n], totals) with totals = (sum_tau, sum_psi_bar, n_returns)
    for the returns consumed.
    """
    C_prime = sys.params.psi_spec.C_prime
    psi_sums = np.zeros(n)
    horizon = T * n
    S0 = 0.0           # flow time completed so far
    W0 = 0.0           # well integral accumulated so far
    next_b = 1         # index of the next window boundary to evaluate
    Wb_prev = 0.0      # well integral at the previous boundary
    tot_tau = 0.0
    tot_psi = 0.0
    tot_n = 0

    p = _burned_start(sys, seed, n_burn)
    qx, qy = p.x, p.y
    while S0 < horizon:
        # tau >= 1 per return, so this many returns always covers the rest
        m = min(chunk, int(math.ceil(horizon - S0)) + 16)
        tau = np.empty(m)
        psi = np.empty(m)
        r = np.empty(m, dtype=np.int64)
        flag = np.empty(m, dtype=np.uint8)
        qx, qy, cnt, err = K.induced_chunk(sys.par, qx, qy, m, tau, psi, r, flag)
        if err != K.ERR_OK:
            _raise_degenerate(SectionPoint(qx, qy))
        tot_tau += float(tau.sum())
        tot_psi += float(psi.sum())
        tot_n += m

        well = psi - C_prime            # = -psi0 <= 0
        S = S0 + np.cumsum(tau)         # completion times
        cum_well = W0 + np.cumsum(well)
        S_end = S[-1]

        # constant part: C' at completion, binned by window
        widx = np.floor_divide(S, T).astype(np.int64)
        inside = widx < n
        if inside.any():
            psi_sums += C_prime * np.bincount(widx[inside], minlength=n)

        # well part: piecewise-linear cumulative, evaluated at boundaries
        while next_b <= n and next_b * T <= S_end:
            b = next_b * T
            k = int(np.searchsorted(S, b, side="left"))
            # b lies in segment k: [S[k]-tau[k], S[k])
            seg_start = S[k] - tau[k]
            Wb = (cum_well[k - 1] if k > 0 else W0)
            if tau[k] > 0.0:
                Wb += well[k] * (b - seg_start) / tau[k]
            psi_sums[next_b - 1] += Wb - Wb_prev
            Wb_prev = Wb
            next_b += 1

        if next_b > n:
            # finished; well part of the last window closed above
            S0 = S_end
            W0 = float(cum_well[-1])
            break
        S0 = S_end
        W0 = float(cum_well[-1])
    return psi_sums, (tot_tau, tot_psi, tot_n)


def flow_birkhoff(sys: HybridSystem, start, T: float):
    """Potential Birkhoff sum over flow time T from a point or FlowState.

    Returns (psi_T, FlowState).  Exactly additive along an orbit up to
    float summation order: the continuation state pins the pending return
    and the time already spent in it.
    """
    if isinstance(start, FlowState):
        state = start
    else:
        state = FlowState(start[0], start[1], 0.0)
    if T < 0.0:
        raise ValueError("flow time must be nonnegative")
    C_prime = sys.params.psi_spec.C_prime
    acc = 0.0
    remaining = T
    qx, qy, t_off = state.x, state.y, state.t_off
    while remaining > 0.0:
        rec = induced_return(sys, SectionPoint(qx, qy))
        well_rate = (rec.psi_bar - C_prime) / rec.tau
        span = rec.tau - t_off
        if span > remaining:
            acc += well_rate * remaining
            t_off += remaining
            remaining = 0.0
        else:
            acc += well_rate * span + C_prime
            remaining -= span
            qx, qy, t_off = rec.x1, rec.y1, 0.0
    return acc, FlowState(qx, qy, t_off)


# -------------------------------------------------------------- file IO

RECORD_MAGIC = b"NFRET01\n"

RECORD_DTYPE = np.dtype([
    ("x0", "<f8"), ("y0", "<f8"), ("x1", "<f8"), ("y1", "<f8"),
    ("tau", "<f8"), ("psi_bar", "<f8"), ("r", "<u4"), ("flags", "<u1"),
], align=False)

FLAG_PASSED = 1


def write_records(path, records: np.ndarray) -> None:
    """Binary return-record file: magic, little-endian count, packed records."""
    arr = np.ascontiguousarray(records.astype(RECORD_DTYPE, copy=False))
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(np.uint64(arr.shape[0]).tobytes())
        fh.write(arr.tobytes())


def read_records(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(RECORD_MAGIC))
        if magic != RECORD_MAGIC:
            raise ValueError(f"not a return-record file: {path!r}")
        (count,) = np.frombuffer(fh.read(8), dtype="<u8")
        data = fh.read()
    expect = int(count) * RECORD_DTYPE.itemsize
    if len(data) != expect:
        raise ValueError(f"truncated record file: {len(data)} != {expect} bytes")
    return np.frombuffer(data, dtype=RECORD_DTYPE).copy()


def export_records_csv(path, records: np.ndarray) -> None:
    cols = ["x0", "y0", "x1", "y1", "tau", "psi_bar", "r", "flags"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            fh.write("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n" % tuple(
                rec[c] for c in cols))
