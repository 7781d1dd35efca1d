"""Heavy-tail estimation, stable laws, normalizers, and limit experiments.

Estimators are pure functions of sample arrays; the limit experiments tie
them to the flow by drawing window Birkhoff sums from one orbit and the
centering/scale calibration from an independent orbit (seed offset), so
the centering never sees the test samples.

The stable family used throughout is totally skewed to the right
(skew +1) in the parameterization whose characteristic function is

    E e^{itX} = exp(i delta t - (sigma |t|)^alpha
                    [1 - i sign(t) tan(pi alpha / 2)])

restricted to alpha in (1, 2], where it is continuous in alpha and the
location parameter equals the mean.  alpha = 2 is exactly N(delta,
2 sigma^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace as _dc_replace
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import ndtr

from . import flow_sim as fs
from .model import PotentialSpec

__all__ = [
    "TailError",
    "VarianceError",
    "TailFit",
    "StableSpec",
    "LimitReport",
    "tail_fit",
    "hill_curve",
    "normalizer_b",
    "stable_cdf",
    "stable_cdf_batch",
    "stable_ppf",
    "stable_sample",
    "fit_stable",
    "ks_distance",
    "variance_estimate",
    "limit_experiment",
    "limit_analyze",
    "pareto_sample",
]


class TailError(ValueError):
    """Tail estimation impossible on the given sample."""


class VarianceError(RuntimeError):
    """Autocovariance sequence not summable at the available length."""


# ------------------------------------------------------- tail estimation

@dataclass(frozen=True)
class TailFit:
    """Fitted power-law tail P(X > t) ~ c_hat * t^(-beta_hat)."""

    beta_hat: float
    c_hat: float
    k_frac: float
    stderr: float
    method: str


def tail_fit(samples, method: str = "hill", k_frac: float = 0.02,
             t_min: float | None = None) -> TailFit:
    """Estimate a right power-law tail index.

    hill: maximum-likelihood on the top k = k_frac * n order statistics,
    stderr = beta_hat / sqrt(k), c_hat from the order-statistic intercept.
    loglog: least-squares slope of log survival against log t over the top
    two decades (t_min raises the lower cut when the tail has a knee).
    """
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x) & (x > 0.0)]
    n = x.size
    if n < 10_000:
        raise TailError(f"need at least 1e4 positive samples, got {n}")
    if not (0.0 < k_frac <= 0.1):
        raise TailError("k_frac must lie in (0, 0.1]")
    xs = np.sort(x)[::-1]

    if method == "hill":
        k = int(k_frac * n)
        if k < 10:
            raise TailError("too few exceedances for the Hill estimator")
        top = xs[:k]
        pivot = xs[k]
        if pivot <= 0.0 or top[-1] <= 0.0:
            raise TailError("nonpositive order statistics in the tail")
        beta = 1.0 / float(np.mean(np.log(top / pivot)))
        c_hat = (k / n) * pivot ** beta
        return TailFit(beta_hat=beta, c_hat=c_hat, k_frac=k_frac,
                       stderr=beta / math.sqrt(k), method="hill")

    if method == "loglog":
        if n < 64:
            raise TailError("too few samples for a survival fit")
        t_hi = xs[31]          # at least 32 exceedances at the top point
        lo = t_hi / 100.0
        if t_min is not None:
            lo = max(lo, t_min)
        if not (0.0 < lo < t_hi):
            raise TailError("empty survival window")
        ts = np.exp(np.linspace(math.log(lo), math.log(t_hi), 25))
        surv = np.searchsorted(-xs[::-1], -ts) / n   # P(X > t) on sorted desc
        surv = np.array([(x > t).mean() for t in ts])
        keep = surv > 0
        if keep.sum() < 5:
            raise TailError("too few exceedances in the survival window")
        lt = np.log(ts[keep])
        ls = np.log(surv[keep])
        A = np.column_stack([lt, np.ones_like(lt)])
        coef, res, _, _ = np.linalg.lstsq(A, ls, rcond=None)
        slope, intercept = coef
        dof = max(len(lt) - 2, 1)
        s2 = (res[0] / dof if res.size else 0.0)
        var_slope = s2 / float(np.sum((lt - lt.mean()) ** 2))
        return TailFit(beta_hat=-slope, c_hat=math.exp(intercept),
                       k_frac=k_frac, stderr=math.sqrt(max(var_slope, 0.0)),
                       method="loglog")

    raise TailError(f"unknown method {method!r}")


def hill_curve(samples, k_fracs=(0.002, 0.005, 0.01, 0.02, 0.05, 0.1)):
    """Hill estimates over a k_frac sweep (stability diagnostic)."""
    rows = []
    for kf in k_fracs:
        try:
            f = tail_fit(samples, "hill", kf)
            rows.append((kf, f.beta_hat, f.stderr))
        except TailError:
            continue
    return np.array(rows)


def pareto_sample(beta: float, n: int, seed: int, xm: float = 1.0) -> np.ndarray:
    """Exact Pareto variates by inverse CDF: P(X > t) = (t/xm)^(-beta)."""
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return xm * (1.0 - u) ** (-1.0 / beta)


# ------------------------------------------------------------ normalizer

def normalizer_b(T: float, case: str, beta: float, kappa: float,
                 c: float) -> float:
    """Normalizing sequence b(T) for the three limit regimes.

    stable:     T / (c b)^(beta/kappa) = 1      ->  b = T^(kappa/beta) / c
    nonstd_clt: c b^2 / (T log T) = 1           ->  b = sqrt(T log T / c)
    clt:        b^2 / T = 1                     ->  b = sqrt(T)

    The defining relation holds exactly by algebraic inversion.
    """
    if T <= 0.0 or c <= 0.0:
        raise ValueError("T and c must be positive")
    if case == "stable":
        if not (beta / 2.0 < kappa < beta):
            raise ValueError("stable case needs kappa in (beta/2, beta)")
        return T ** (kappa / beta) / c
    if case == "nonstd_clt":
        if kappa != beta / 2.0:
            raise ValueError("nonstandard CLT needs kappa = beta/2")
        if T <= 1.0:
            raise ValueError("need T > 1 for the log factor")
        return math.sqrt(T * math.log(T) / c)
    if case == "clt":
        if beta <= 2.0 * kappa:
            raise ValueError("CLT case needs beta > 2 kappa")
        return math.sqrt(T)
    raise ValueError(f"unknown case {case!r}")


# ------------------------------------------------------------ stable law

@dataclass(frozen=True)
class StableSpec:
    """Totally right-skewed stable law; location is the mean for alpha > 1."""

    alpha: float
    scale: float
    location: float = 0.0

    skew = 1.0

    def __post_init__(self):
        if not (1.0 < self.alpha <= 2.0):
            raise ValueError("alpha must lie in (1, 2]")
        if not (self.scale > 0.0 and math.isfinite(self.scale)):
            raise ValueError("scale must be positive")


def _phase_coeff(alpha: float) -> float:
    # tan(pi alpha / 2); exactly 0 at the Gaussian edge
    if alpha == 2.0:
        return 0.0
    return math.tan(math.pi * alpha / 2.0)


def stable_cdf(spec: StableSpec, x: float) -> float:
    """CDF by numerical inversion of the characteristic function.

    Gil-Pelaez form: F(x) = 1/2 - (1/pi) int_0^inf Im[e^{-itx} phi(t)]/t dt;
    absolute accuracy 1e-6 (quadrature error is checked and reported).
    """
    a, s, d = spec.alpha, spec.scale, spec.location
    if a == 2.0:
        return float(ndtr((x - d) / (s * math.sqrt(2.0))))
    g = _phase_coeff(a)
    w = d - x

    def integrand(t):
        st = (s * t) ** a
        if t == 0.0:
            return w
        return math.exp(-st) * math.sin(w * t + g * st) / t

    t_max = 42.0 ** (1.0 / a) / s
    val, err = quad(integrand, 0.0, t_max, limit=2000,
                    epsabs=1e-9, epsrel=1e-9)
    if err > 1e-6:
        raise RuntimeError(
            f"characteristic-function inversion error bound {err:.2e} > 1e-6")
    out = 0.5 - val / math.pi
    return float(min(max(out, 0.0), 1.0))


def stable_cdf_batch(spec: StableSpec, xs: np.ndarray) -> np.ndarray:
    """Vectorized CDF on an array of points (trapezoid in t, tested vs quad)."""
    a, s, d = spec.alpha, spec.scale, spec.location
    xs = np.asarray(xs, dtype=float)
    if a == 2.0:
        return ndtr((xs - d) / (s * math.sqrt(2.0)))
    g = _phase_coeff(a)
    t_max = 42.0 ** (1.0 / a) / s
    span = float(np.max(np.abs(xs - d)) + s)
    n_osc = span * t_max / (2.0 * math.pi)
    m = int(min(max(4000, 60 * n_osc), 400_000))
    t = np.linspace(0.0, t_max, m)
    dt = t[1] - t[0]
    st = (s * t[1:]) ** a
    damp = np.exp(-st)
    w = (d - xs)[:, None]
    ph = w * t[1:][None, :] + g * st[None, :]
    vals = damp[None, :] * np.sin(ph) / t[1:][None, :]
    first = np.full((xs.size, 1), w[:, 0:1])  # t -> 0 limit of the integrand
    integ = np.concatenate([first, vals], axis=1)
    total = np.trapezoid(integ, dx=dt, axis=1)
    return np.clip(0.5 - total / math.pi, 1e-15, 1.0 - 1e-15)


def stable_ppf(spec: StableSpec, p: float) -> float:
    """Quantile by bracketed root-finding on the batch CDF."""
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie in (0, 1)")
    lo, hi = spec.location - 4.0 * spec.scale, spec.location + 4.0 * spec.scale
    for _ in range(200):
        if stable_cdf(spec, lo) < p:
            break
        lo = spec.location - 2.0 * (spec.location - lo)
    for _ in range(200):
        if stable_cdf(spec, hi) > p:
            break
        hi = spec.location + 2.0 * (hi - spec.location)
    return float(brentq(lambda x: stable_cdf(spec, x) - p, lo, hi, xtol=1e-10))


def stable_sample(spec: StableSpec, n: int, seed: int) -> np.ndarray:
    """Exact sampling (Chambers-Mallows-Stuck), totally skewed case."""
    a, s, d = spec.alpha, spec.scale, spec.location
    rng = np.random.default_rng(seed)
    V = (rng.random(n) - 0.5) * math.pi
    W = rng.exponential(1.0, n)
    if a == 2.0:
        return d + s * 2.0 * np.sin(V) * np.sqrt(W)
    g = _phase_coeff(a)
    B = math.atan(g) / a
    S = (1.0 + g * g) ** (1.0 / (2.0 * a))
    X = (S * np.sin(a * (V + B)) / np.cos(V) ** (1.0 / a)
         * (np.cos(V - a * (V + B)) / W) ** ((1.0 - a) / a))
    return d + s * X


@lru_cache(maxsize=256)
def _standard_quantiles(alpha: float) -> tuple[float, float, float]:
    spec = StableSpec(alpha=alpha, scale=1.0, location=0.0)
    xs = np.linspace(-60.0, 200.0, 16001)
    cdf = stable_cdf_batch(spec, xs)
    q = np.interp([0.25, 0.5, 0.75], cdf, xs)
    return float(q[0]), float(q[1]), float(q[2])


def _quantile_match(samples: np.ndarray, alpha: float) -> StableSpec:
    q25, q50, q75 = np.quantile(samples, [0.25, 0.5, 0.75])
    s25, s50, s75 = _standard_quantiles(alpha)
    scale = (q75 - q25) / (s75 - s25)
    if not (scale > 0.0 and math.isfinite(scale)):
        scale = 1.0
    loc = q50 - scale * s50
    return StableSpec(alpha=alpha, scale=float(scale), location=float(loc))


def ks_distance(samples, cdf_vals=None, spec: StableSpec | None = None) -> float:
    """One-sample Kolmogorov-Smirnov distance.

    Either precomputed model CDF values at the sorted samples, or a
    StableSpec evaluated via the batch CDF.
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    if cdf_vals is None:
        if spec is None:
            raise ValueError("need cdf_vals or spec")
        cdf_vals = stable_cdf_batch(spec, xs)
    cdf_vals = np.asarray(cdf_vals)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf_vals)
    d_minus = np.max(cdf_vals - (i - 1) / n)
    return float(max(d_plus, d_minus, 0.0))


def fit_stable(samples, alpha_lo: float = 1.2, alpha_hi: float = 2.0):
    """Totally-skewed stable fit: quantile matching per index, KS selection.

    Coarse 0.05 sweep of alpha, then 0.01 refinement around the best; per
    alpha the scale and location come from quartile matching, so the fit is
    affine-equivariant.  Returns (StableSpec, ks_distance).
    """
    xs = np.sort(np.asarray(samples, dtype=float))

    def eval_alpha(alpha):
        spec = _quantile_match(xs, alpha)
        return ks_distance(xs, spec=spec), spec

    best = (math.inf, None, None)
    grid = np.round(np.arange(alpha_lo, alpha_hi + 1e-9, 0.05), 10)
    for alpha in grid:
        ks, spec = eval_alpha(float(alpha))
        if ks < best[0]:
            best = (ks, spec, float(alpha))
    a0 = best[2]
    fine = np.round(np.arange(max(alpha_lo, a0 - 0.04),
                              min(alpha_hi, a0 + 0.04) + 1e-9, 0.01), 10)
    for alpha in fine:
        ks, spec = eval_alpha(float(alpha))
        if ks < best[0]:
            best = (ks, spec, float(alpha))
    return best[1], best[0]


# ------------------------------------------------------ variance (CLT)

def variance_estimate(samples, tau_star: float = 1.0,
                      mean_removed: bool = False) -> float:
    """Green-Kubo long-run variance over the flow clock.

    gamma_0 + 2 sum_j gamma_j with the sum truncated at the first
    nonpositive pair gamma_{2k} + gamma_{2k+1} (noise floor); divided by
    tau_star to convert from per-return to per-unit-flow-time.  Raises
    VarianceError when no admissible truncation exists (autocovariances
    not summable at this sample size).
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 1000:
        raise VarianceError("need at least 1e3 samples")
    if not mean_removed:
        x = x - x.mean()
    # autocovariance via FFT up to a generous maximal lag
    m = 1
    while m < 2 * n:
        m *= 2
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[: n] / n
    gamma0 = acov[0]
    if gamma0 <= 0.0:
        return 0.0
    j_max = min(n // 3, 100_000)
    total = gamma0
    found = False
    k = 0
    while 2 * k + 2 <= j_max:
        pair = acov[2 * k + 1] + acov[2 * k + 2]
        if pair <= 0.0:
            found = True
            break
        total += 2.0 * pair
        k += 1
    if not found:
        raise VarianceError(
            "autocovariance pairs stayed positive through the window; "
            "variance not summable at this length")
    return float(total / tau_star)


# ------------------------------------------------------ limit experiments

@dataclass
class LimitReport:
    """Outcome of one normalized limit experiment."""

    case: str
    sample_count: int
    T_flow: float
    b: float
    centering: float
    ks_distance: float
    threshold: float
    passed: bool
    degenerate: bool
    psi_star: float
    tau_star: float
    c_hat: float | None = None
    stable: StableSpec | None = None
    gauss_mean: float | None = None
    gauss_sigma2: float | None = None
    normalized: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "case": self.case,
            "sample_count": self.sample_count,
            "T_flow": self.T_flow,
            "b": self.b,
            "centering": self.centering,
            "ks_distance": self.ks_distance,
            "threshold": self.threshold,
            "passed": bool(self.passed),
            "degenerate": bool(self.degenerate),
            "psi_star": self.psi_star,
            "tau_star": self.tau_star,
            "c_hat": self.c_hat,
        }
        if self.stable is not None:
            d["stable"] = {"alpha": self.stable.alpha, "scale": self.stable.scale,
                           "location": self.stable.location, "skew": 1.0}
        if self.gauss_sigma2 is not None:
            d["gauss_mean"] = self.gauss_mean
            d["gauss_sigma2"] = self.gauss_sigma2
        return d


_DEFAULT_THRESHOLDS = {"stable": 0.05, "nonstd_clt": 0.05, "clt": 0.02}


def limit_analyze(psi_sums: np.ndarray, T_flow: float, case: str, *,
                  beta: float, kappa: float, psi_star: float,
                  tau_star: float, c_hat: float | None = None,
                  sigma2_flow: float | None = None,
                  threshold: float | None = None,
                  negate: bool = True) -> LimitReport:
    """Normalize window sums and test them against the case's limit law.

    Centering is psi_star * T; the heavy one-sided part of the potential
    sits in the left tail, so stable-case samples are negated before the
    skew-plus-one fit when negate is set.
    """
    psi_sums = np.asarray(psi_sums, dtype=float)
    n = psi_sums.size
    thr = _DEFAULT_THRESHOLDS[case] if threshold is None else threshold
    centering = psi_star * T_flow
    centered = psi_sums - centering

    scale_ref = max(abs(centering), float(np.max(np.abs(psi_sums))), 1.0)
    if float(np.max(np.abs(centered))) <= 1e-12 * scale_ref:
        b = 1.0
        return LimitReport(case=case, sample_count=n, T_flow=T_flow, b=b,
                           centering=centering, ks_distance=0.0, threshold=thr,
                           passed=True, degenerate=True, psi_star=psi_star,
                           tau_star=tau_star,
                           normalized=np.zeros_like(centered))

    if case == "stable":
        if c_hat is None:
            raise ValueError("stable case needs the calibrated tail constant")
        b = normalizer_b(T_flow, "stable", beta, kappa,
                         (tau_star / c_hat) ** (kappa / beta))
        x = centered / b
        y = -x if negate else x
        spec, ks = fit_stable(y)
        passed = ks < thr and abs(spec.alpha - beta / kappa) <= 0.1
        return LimitReport(case=case, sample_count=n, T_flow=T_flow, b=b,
                           centering=centering, ks_distance=ks, threshold=thr,
                           passed=passed, degenerate=False, psi_star=psi_star,
                           tau_star=tau_star, c_hat=c_hat, stable=spec,
                           normalized=y)

    if case == "nonstd_clt":
        if c_hat is None:
            raise ValueError("nonstandard CLT needs the calibrated tail constant")
        b = normalizer_b(T_flow, "nonstd_clt", beta, kappa, tau_star / c_hat)
        x = centered / b
        mu, sd = float(np.mean(x)), float(np.std(x))
        ks = ks_distance(x, cdf_vals=ndtr((np.sort(x) - mu) / sd))
        passed = ks < thr
        return LimitReport(case=case, sample_count=n, T_flow=T_flow, b=b,
                           centering=centering, ks_distance=ks, threshold=thr,
                           passed=passed, degenerate=False, psi_star=psi_star,
                           tau_star=tau_star, c_hat=c_hat, gauss_mean=mu,
                           gauss_sigma2=sd * sd, normalized=x)

    if case == "clt":
        if sigma2_flow is None or sigma2_flow <= 0.0:
            raise ValueError("CLT case needs a positive flow variance")
        b = normalizer_b(T_flow, "clt", beta, kappa, 1.0)
        x = centered / b
        sd = math.sqrt(sigma2_flow)
        ks = ks_distance(x, cdf_vals=ndtr(np.sort(x) / sd))
        passed = ks < thr
        return LimitReport(case=case, sample_count=n, T_flow=T_flow, b=b,
                           centering=centering, ks_distance=ks, threshold=thr,
                           passed=passed, degenerate=False, psi_star=psi_star,
                           tau_star=tau_star, gauss_mean=0.0,
                           gauss_sigma2=sigma2_flow, normalized=x)

    raise ValueError(f"unknown case {case!r}")


def limit_experiment(sys: fs.HybridSystem, potential: PotentialSpec | None,
                     case: str, T_flow: float, n_samples: int, seed: int, *,
                     threshold: float | None = None,
                     calib_returns: int = 1_000_000,
                     n_burn: int = 1000) -> LimitReport:
    """Draw window sums of the potential and test the normalized limit law.

    The orbit supplying the n_samples windows starts from seed; psi_star,
    tau_star, the tail constant, and the Green-Kubo variance come from an
    independent orbit at seed + 1.
    """
    if potential is not None:
        sys = fs.HybridSystem(_dc_replace(sys.params, psi_spec=potential))
    pspec = sys.params.psi_spec
    beta = sys.dc.beta
    kappa = pspec.kappa

    # calibration stream: centering rate, tail constant, long-run variance
    taus = []
    psis = []
    for tau, psi, r, fl in fs.return_stream(sys, seed + 1, calib_returns,
                                            n_burn=n_burn):
        taus.append(tau)
        psis.append(psi)
    tau_arr = np.concatenate(taus)
    psi_arr = np.concatenate(psis)
    tau_star = float(tau_arr.mean())
    sum_tau = float(tau_arr.sum())
    psi_star = float(psi_arr.sum()) / sum_tau if sum_tau > 0 else 0.0

    c_hat = None
    if case in ("stable", "nonstd_clt"):
        psi0 = pspec.C_prime - psi_arr          # the one-sided heavy part
        heavy = psi0[psi0 > 0.0]
        if heavy.size >= 10_000:
            c_hat = tail_fit(heavy, "hill").c_hat
        else:
            # potential well off: fall back to the return-time tail
            c_hat = tail_fit(tau_arr, "hill").c_hat
    sigma2_flow = None
    if case == "clt":
        centered_series = psi_arr - psi_star * tau_arr
        sigma2_flow = variance_estimate(centered_series, tau_star=tau_star,
                                        mean_removed=True)

    sums, _ = fs.window_sums(sys, seed, T_flow, n_samples, n_burn=n_burn)
    return limit_analyze(sums, T_flow, case, beta=beta, kappa=kappa,
                         psi_star=psi_star, tau_star=tau_star, c_hat=c_hat,
                         sigma2_flow=sigma2_flow, threshold=threshold)
