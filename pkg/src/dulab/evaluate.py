"""Evaluation of Dirichlet series inside the strip.

Four layers: raw partial sums; the exponential-sum transform over an
interval with its absolute-constant remainder (calibrated numerically); a
certified tail-bounded evaluator for series with a uniform phase away from
2*pi*Z and monotone decay; and the prime-frequency series through
branch-tracked log zeta plus Moebius inversion.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .accum import csum
from .primes import mobius_sieve
from .series import TWO_PI, PreconditionError, SeriesSpec

# multiplies the O-term of the exponential-sum transform; measured against
# brute force by the test suite and logged there
VDC_CALIBRATION = 20.0

ZERO_THRESHOLD = 1e-8
POLE_THRESHOLD = 1e12
# the removed-segment probe flags a height when |zeta| dips below this on
# [1/2, min(sigma,1)]: first order, that is a zero within ~1.3e-4 of the
# segment, wide enough to catch ordinates quoted to 4 decimals
PROBE_THRESHOLD = 1e-4


class ZeroCrossingError(ArithmeticError):
    """Branch tracking ran into a zero (or pole) of zeta: removed segment."""


@dataclass(frozen=True)
class EvalResult:
    value: complex
    remainder_bound: float
    certified: bool
    terms_used: int


# ---------------------------------------------------------------------------
# partial sums


def partial_sum(spec: SeriesSpec, N: int, s: complex) -> complex:
    """sum_{n<=N} a(n) e^{-lambda(n) s}, fixed index order, compensated."""
    N = int(N)
    if N < 0:
        raise PreconditionError("N must be nonnegative")
    if N == 0:
        return 0.0 + 0.0j
    s = complex(s)
    total = 0.0 + 0.0j
    block = 1 << 18
    for lo in range(1, N + 1, block):
        hi = min(lo + block - 1, N)
        idx = np.arange(lo, hi + 1, dtype=np.int64)
        lam = spec.frequencies(idx)
        term = spec.coeffs(idx) * np.exp(-lam * s.real)
        arg = lam * s.imag
        term *= np.cos(arg) - 1j * np.sin(arg)
        total += csum(term)
    return total


# ---------------------------------------------------------------------------
# oscillatory quadrature for the exponential-sum transform

# Gauss-Kronrod 7-15 nodes/weights on [-1, 1]
_XGK = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_WGK = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_WG = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])
_GAUSS_IDX = np.arange(1, 15, 2)


def _gk_panels(fun, lefts, rights):
    """Vectorized GK15 on a batch of panels; returns (values, error_ests)."""
    mid = 0.5 * (lefts + rights)[:, None]
    half = 0.5 * (rights - lefts)[:, None]
    x = mid + half * _XGK[None, :]
    y = fun(x)
    vals = (y * _WGK[None, :]).sum(axis=1) * half[:, 0]
    gvals = (y[:, _GAUSS_IDX] * _WG[None, :]).sum(axis=1) * half[:, 0]
    return vals, np.abs(vals - gvals)


def _adaptive_oscillatory(fun, a, b, n_seg, rel_tol=1e-10, max_rounds=12):
    """Integrate fun over [a,b]: initial phase-aware panels, then bisect the
    worst ones until the summed error estimate is below tolerance."""
    edges = np.linspace(a, b, n_seg + 1)
    lefts, rights = edges[:-1], edges[1:]
    vals, errs = _gk_panels(fun, lefts, rights)
    for _ in range(max_rounds):
        total = vals.sum()
        err = errs.sum()
        if err <= rel_tol * max(1.0, abs(total)) + 1e-14:
            break
        bad = errs > (rel_tol * max(1.0, abs(total)) + 1e-14) / max(len(errs), 1)
        if not bad.any():
            break
        mids = 0.5 * (lefts[bad] + rights[bad])
        nl = np.concatenate([lefts[~bad], lefts[bad], mids])
        nr = np.concatenate([rights[~bad], mids, rights[bad]])
        keep_vals, keep_errs = vals[~bad], errs[~bad]
        new_vals, new_errs = _gk_panels(fun, nl[len(keep_vals):], nr[len(keep_vals):])
        lefts, rights = nl, nr
        vals = np.concatenate([keep_vals, new_vals])
        errs = np.concatenate([keep_errs, new_errs])
    return vals.sum()


def _total_variation(fun, a, b, n=8193):
    xs = np.linspace(a, b, n)
    ys = np.asarray(fun(xs), dtype=np.float64)
    return float(np.abs(np.diff(ys)).sum())


def vdc_transform(g, f, a, b, alpha, beta, eps, rel_tol=1e-10):
    """Main term of the exponential-sum transform on [a, b].

    Evaluates sum over integers m in (alpha-eps, beta+eps) of
    int_a^b g(x) e^{2 pi i (f(x) - m x)} dx by oscillation-aware panels,
    and returns (value, number_of_integrals, G) with
    G = |g(b)| + int_a^b |g'|.

    g and f must be vectorized callables; f' monotone with alpha <= f' <= beta
    is assumed and spot-checked by sampling.
    """
    if not (0.0 < eps < 1.0):
        raise PreconditionError("eps must lie in (0, 1)")
    a, b = float(a), float(b)
    if not b > a:
        raise PreconditionError("need a < b")

    xs = np.linspace(a, b, 4097)
    fp = np.diff(np.asarray(f(xs), dtype=np.float64)) / np.diff(xs)
    dfp = np.diff(fp)
    tol = 1e-9 * (1.0 + np.abs(fp).max())
    if (dfp > tol).any() and (dfp < -tol).any():
        raise PreconditionError("f' is not monotone on [a, b]")

    m_lo = math.floor(alpha - eps) + 1
    m_hi = math.ceil(beta + eps) - 1
    ms = [m for m in range(m_lo, m_hi + 1) if alpha - eps < m < beta + eps]

    total = 0.0 + 0.0j
    for m in ms:
        def integrand(x, m=m):
            ph = TWO_PI * (np.asarray(f(x), dtype=np.float64) - m * x)
            return np.asarray(g(x), dtype=np.complex128) * (np.cos(ph) + 1j * np.sin(ph))

        # one panel per ~half period of the phase, floor of 8
        variation = np.abs(fp - m).max() * (b - a)
        n_seg = int(min(max(8, 2.0 * variation + 8), 200000))
        total += _adaptive_oscillatory(integrand, a, b, n_seg, rel_tol)

    G = float(abs(complex(np.asarray(g(np.array([b])))[0]))) + _total_variation(
        lambda x: np.abs(np.asarray(g(x))), a, b
    )
    return total, len(ms), G


def vdc_remainder_factor(omega: float) -> float:
    """C(omega): calibrated constant times the O-term factor for the
    tail-bound parameter choice (empty integral set)."""
    d = _dist_to_int(omega / TWO_PI)
    if d <= 0.0:
        raise PreconditionError("omega must avoid 2*pi*Z")
    return VDC_CALIBRATION * (4.0 / d + math.log(2.0 + d / 2.0))


def _dist_to_int(x):
    return abs(x - round(x))


# ---------------------------------------------------------------------------
# certified tail-bounded evaluation


def eval_tail_bounded(spec: SeriesSpec, s: complex, n_min: int = 4096,
                      budget: int = 2_000_000) -> EvalResult:
    """Partial sum to the phase-controlled cutoff plus a certified bound.

    The cutoff x is the least index with |t| lambda'(x) <= dist(omega/2pi, Z)/2
    (raised to n_min for value quality; still valid since lambda' is
    nonincreasing), and the remainder is bounded by
    C(omega) rho(x) e^{-lambda(x) sigma}.
    """
    s = complex(s)
    x_cert = tail_cutoff(spec, abs(s.imag), s.real)
    if x_cert is None:
        raise PreconditionError(
            "flags absent: tail-bounded evaluation needs a uniform phase away "
            "from 2*pi*Z, smooth frequencies and monotone decay above sigma0"
        )
    factor = vdc_remainder_factor(spec.omega)
    x = max(x_cert, int(n_min))
    if spec.max_index is not None:
        x = min(x, spec.max_index)
    if x > budget:
        x = int(budget)
        value = partial_sum(spec, x - 1, s)
        bound = _boundary_bound(spec, x, s.real, factor)
        return EvalResult(value, bound, False, x - 1)
    value = partial_sum(spec, x - 1, s)
    bound = _boundary_bound(spec, x, s.real, factor)
    return EvalResult(value, bound, True, x - 1)


def tail_cutoff(spec: SeriesSpec, t_abs: float, sigma: float):
    """Least index where the tail transform applies, or None if the spec's
    flags do not support certified evaluation at Re(s)=sigma."""
    omega = spec.omega
    if omega is None or not spec.lam_smooth or spec.lam_prime is None:
        return None
    half = 0.5 * _dist_to_int(omega / TWO_PI)
    if half <= 0.0:
        return None
    start = spec.tail_monotone_from(sigma)
    if start is None:
        return None
    if t_abs == 0.0:
        return max(1, start)

    def ok(x):
        return t_abs * float(spec.lam_prime(np.asarray([float(x)]))[0]) <= half

    hi = max(1, start)
    while not ok(hi):
        hi *= 2
        if hi > 1 << 62:
            return None
    lo = max(1, start)
    if ok(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return max(hi, start)


def _boundary_bound(spec, x, sigma, factor):
    lam_x = float(spec.frequencies(np.asarray([x]))[0])
    rho_x = float(spec.moduli(np.asarray([x]))[0])
    return factor * rho_x * math.exp(-lam_x * sigma)


# ---------------------------------------------------------------------------
# zeta via the accelerated alternating series


_ETA_CACHE = {}
_LOG_Q = math.log(3.0 + math.sqrt(8.0))


def _eta_coeffs(n):
    ek = _ETA_CACHE.get(n)
    if ek is None:
        t = np.empty(n + 1)
        t[0] = 1.0 / n
        for j in range(n):
            t[j + 1] = t[j] * 4.0 * (n + j) * (n - j) / ((2 * j + 1) * (2 * j + 2))
        tot = t.sum()
        tails = tot - np.cumsum(t)  # tails[k] = sum_{j>k} t_j
        ek = tails[:n] / tot
        _ETA_CACHE[n] = ek
    return ek


def _eta_terms_needed(sigma, t_abs, target):
    growth = math.log1p(2.0 * t_abs) + math.pi * t_abs / 2.0
    n = (math.log(3.0) + growth - math.log(target)) / _LOG_Q
    return min(max(int(n) + 4, 24), 380)


def eval_zeta(s: complex, tol: float = 1e-14) -> EvalResult:
    """zeta(s) for Re(s) > 0, s != 1, with the acceleration's error bound.

    Certified for Re(s) >= 1/4 (the classical bound covers Re(s) >= 1/2; a
    disclosed safety factor of 16 is applied below that).  Practical for
    |Im(s)| up to a few hundred; far larger heights are out of scope.
    """
    s = complex(s)
    if s.real <= 0.0:
        raise PreconditionError("eval_zeta needs Re(s) > 0")
    if s == 1.0:
        raise PreconditionError("zeta pole at s=1")
    denom = 1.0 - cmath.exp((1.0 - s) * math.log(2.0))
    if denom == 0.0:
        raise PreconditionError("eta transform singular at this point")
    n = _eta_terms_needed(s.real, abs(s.imag), tol * abs(denom))
    ek = _eta_coeffs(n)
    k = np.arange(1, n + 1, dtype=np.float64)
    terms = ek * np.exp(-s.real * np.log(k))
    arg = s.imag * np.log(k)
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    eta = csum(signs * terms * (np.cos(arg) - 1j * np.sin(arg)))
    value = eta / denom
    bound = 3.0 * math.exp(-n * _LOG_Q) * (1.0 + 2.0 * abs(s.imag)) * math.exp(
        math.pi * abs(s.imag) / 2.0
    ) / abs(denom)
    # float noise from the cancellation against 1/denom
    bound += 1e-15 * n / abs(denom)
    certified = s.real >= 0.25
    if s.real < 0.5:
        bound *= 16.0
    return EvalResult(value, bound, certified, n)


def _zeta_many(sigma, ts):
    """Vectorized zeta(sigma + i t) over an array of heights (shared sigma)."""
    ts = np.asarray(ts, dtype=np.float64)
    t_max = float(np.abs(ts).max()) if ts.size else 0.0
    n = _eta_terms_needed(sigma, t_max, 1e-14)
    ek = _eta_coeffs(n)
    k = np.arange(1, n + 1, dtype=np.float64)
    logk = np.log(k)
    base = ek * np.exp(-sigma * logk) * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    arg = np.outer(ts, logk)
    eta = (base[None, :] * (np.cos(arg) - 1j * np.sin(arg))).sum(axis=1)
    denom = 1.0 - np.exp((1.0 - sigma - 1j * ts) * math.log(2.0))
    return eta / denom


def zeta_points(s_points):
    """Vectorized zeta over an array of points with Re > 0 (shared term count)."""
    s = np.asarray(s_points, dtype=np.complex128)
    if s.size == 0:
        return s.copy()
    sig_min = float(s.real.min())
    if sig_min <= 0.0:
        raise PreconditionError("zeta_points needs Re(s) > 0")
    t_max = float(np.abs(s.imag).max())
    n = _eta_terms_needed(sig_min, t_max, 1e-14)
    ek = _eta_coeffs(n)
    logk = np.log(np.arange(1, n + 1, dtype=np.float64))
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    powers = np.exp(-np.multiply.outer(s, logk))
    eta = (powers * (ek * signs)).sum(axis=-1)
    denom = 1.0 - np.exp((1.0 - s) * math.log(2.0))
    return eta / denom


# ---------------------------------------------------------------------------
# branch-tracked log zeta


def eval_log_zeta_tracked(sigma: float, t: float) -> complex:
    """log zeta(sigma + i t), branch fixed by continuity along the horizontal
    path from 2 + i t.

    Raises ZeroCrossingError when the height is flagged as a removed segment:
    |zeta| below threshold on the probed segment [1/2, min(sigma, 1)] x {t},
    or tracking cannot pass a zero/pole on the path itself.
    """
    sigma = float(sigma)
    return track_log_zeta_row([sigma], float(t))[sigma]


def track_log_zeta_row(sigmas, t):
    """Branch-tracked log zeta at several real parts on one height, with a
    single probe and a single leftward walk; returns {sigma: value}."""
    sig_list = sorted({float(x) for x in sigmas}, reverse=True)
    if not sig_list:
        return {}
    if sig_list[-1] <= 0.5:
        raise PreconditionError("branch tracking needs sigma > 1/2")
    t = float(t)
    if sig_list[-1] <= 1.05:
        _probe_removed_segment(sig_list[-1], t)

    out = {}
    remaining = list(sig_list)
    while remaining and remaining[0] >= 2.0:
        # |zeta - 1| < 0.645 for Re(s) >= 2, so the principal log IS the
        # absolutely convergent prime-power series value
        sg = remaining.pop(0)
        out[sg] = cmath.log(eval_zeta(complex(sg, t)).value)
    if not remaining:
        return out

    start = eval_zeta(complex(2.0, t)).value
    val = cmath.log(start)
    cur = 2.0
    zprev = start
    step = 0.25
    while remaining:
        nxt = max(remaining[0], cur - step)
        try:
            z = eval_zeta(complex(nxt, t)).value
        except PreconditionError as exc:
            raise ZeroCrossingError(f"pole on the tracked path at {nxt}+{t}i") from exc
        az = abs(z)
        if az < ZERO_THRESHOLD or az > POLE_THRESHOLD:
            raise ZeroCrossingError(
                f"zeta vanishes or blows up at {nxt}+{t}i on the tracked path"
            )
        ratio = z / zprev
        dphi = cmath.phase(ratio)
        if abs(dphi) >= math.pi / 2 or abs(math.log(abs(ratio))) > 1.5:
            step *= 0.5
            if step < 1e-12:
                raise ZeroCrossingError(
                    f"tracking stalled near {nxt}+{t}i (zero/pole on path)"
                )
            continue
        val += cmath.log(ratio)
        zprev = z
        cur = nxt
        step = min(step * 1.5, 0.25)
        if cur == remaining[0]:
            out[remaining.pop(0)] = val
    return out


def _probe_removed_segment(sigma, t, points=33):
    """Scan |zeta| on [1/2, min(sigma,1)] x {t}; refine x10 near the minimum
    twice; raise on a sub-threshold dip (a zero's removed segment)."""
    hi = min(sigma, 1.0)
    xs = np.linspace(0.5, hi, points)
    for _ in range(3):
        vals = np.abs(_zeta_line(xs, t))
        i = int(np.argmin(vals))
        if vals[i] < PROBE_THRESHOLD:
            raise ZeroCrossingError(
                f"zeta zero detected near {xs[i]:.6f}+{t}i: removed segment"
            )
        lo = xs[max(i - 1, 0)]
        up = xs[min(i + 1, len(xs) - 1)]
        if up - lo < 1e-12:
            break
        xs = np.linspace(lo, up, 21)


def _zeta_line(sigmas, t):
    out = np.empty(len(sigmas), dtype=np.complex128)
    for i, x in enumerate(sigmas):
        out[i] = eval_zeta(complex(float(x), t)).value
    return out


# ---------------------------------------------------------------------------
# the prime series via Moebius inversion


def eval_prime_series(s: complex, K_max: int = 30) -> EvalResult:
    """sum over primes p^{-s} as sum_{k<=K_max} mu(k) log zeta(k s)/k.

    The k=1 term goes through branch tracking (and may raise
    ZeroCrossingError); terms with Re(ks) large enough use the principal
    logarithm directly, which there equals the tracked branch.
    """
    s = complex(s)
    if s.real <= 0.5:
        raise PreconditionError("prime series evaluation needs Re(s) > 1/2")
    K_max = int(K_max)
    if K_max < 1:
        raise PreconditionError("K_max must be at least 1")
    mu = mobius_sieve(K_max)
    total = eval_log_zeta_tracked(s.real, s.imag)
    zcnt = 1
    for k in range(2, K_max + 1):
        if mu[k] == 0:
            continue
        z = k * s
        if z.real >= 1.05:
            # |Im log zeta| <= log zeta(Re z) < pi here, so the principal
            # branch is the Dirichlet-series branch
            lz = cmath.log(eval_zeta(z).value)
        else:
            lz = eval_log_zeta_tracked(z.real, z.imag)
        total += int(mu[k]) * lz / k
        zcnt += 1
    sig = s.real
    K1 = K_max + 1
    tail = (2.0 ** (-K1 * sig) / K1) * (1.0 + 2.0 / max(K1 * sig - 1.0, 1e-9))
    tail /= 1.0 - 2.0 ** (-sig)
    return EvalResult(total, tail, True, zcnt)
