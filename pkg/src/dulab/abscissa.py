"""Abscissa estimation from truncations (Bohr-Cahen-type formulas).

Three kinds: convergence (size of oscillating partial sums), absolute
(partial sums of |a(n)|) and square (partial sums of |a(n)|^2, exponent
halved so the result estimates the square-moment abscissa).

Two variants are wired in.  The plain formula limsup log(S_N)/lambda(N) is
only valid when the abscissa is >= 0, so whenever it lands at <= 0, or the
running quantity has visibly converged, the remainder variant
limsup log(tail_N)/lambda(N) takes over; the chosen variant is recorded on
the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .series import NEG_INF, PreconditionError, SeriesSpec

_BLOCK = 1 << 18

# a log-quantity this far below -lambda(N) * LOG_FLOOR_RATE marks plane-wide
# convergence directly
LOG_FLOOR_RATE = 50.0

# drift rule: dyadic remainder estimates strictly decreasing by at least
# DRIFT_DROP in total, ending below DRIFT_CEILING, also mark -inf
DRIFT_DROP = 0.15
DRIFT_CEILING = -1.0


@dataclass(frozen=True)
class AbscissaEstimate:
    kind: str
    value: float          # may be -inf
    n_used: int
    stability: float      # spread of the last three dyadic window estimates
    variant: str          # "partial-sum" or "remainder"

    @property
    def minus_infinity(self):
        return self.value == NEG_INF


def estimate_abscissa(spec: SeriesSpec, kind: str, n_max: int) -> AbscissaEstimate:
    """Estimate sigma_c, sigma_a or sigma_2 from the first n_max terms."""
    if kind not in ("convergence", "absolute", "square"):
        raise PreconditionError(f"unknown abscissa kind {kind!r}")
    n_max = int(n_max)
    if n_max < 1000:
        raise PreconditionError("n_max must be at least 10^3")
    if spec.max_index is not None:
        n_max = min(n_max, spec.max_index)

    scale = 2.0 if kind == "square" else 1.0
    lam, logq, tail_log = _running_quantities(spec, kind, n_max)

    windows = _dyadic_windows(n_max)
    ests = [_window_max(logq, lam, lo, hi, scale) for lo, hi in windows]
    value = ests[0]
    stability = _spread(ests)

    if _plain_formula_usable(kind, value, logq, tail_log, n_max):
        return AbscissaEstimate(kind, value, n_max, stability, "partial-sum")

    # remainder variant: tails against the n_max truncation, meaningful for
    # N <= n_max/2
    tail_windows = [(lo // 2, hi // 2) for lo, hi in windows]
    tail_ests = [_window_max(tail_log, lam, lo, hi, scale) for lo, hi in tail_windows]
    value = tail_ests[0]
    stability = _spread(tail_ests)

    lo, hi = tail_windows[0]
    window_logs = tail_log[lo - 1 : hi]
    window_lams = lam[lo - 1 : hi]
    if np.all(window_logs < -LOG_FLOOR_RATE * np.maximum(window_lams, 1e-300)):
        return AbscissaEstimate(kind, NEG_INF, n_max, stability, "remainder")
    finite = [e for e in tail_ests if math.isfinite(e)]
    if len(finite) == 3:
        drop = finite[2] - finite[0]
        if finite[2] > finite[1] > finite[0] and drop >= DRIFT_DROP and finite[0] <= DRIFT_CEILING:
            return AbscissaEstimate(kind, NEG_INF, n_max, drop, "remainder")
    return AbscissaEstimate(kind, value, n_max, stability, "remainder")


def _plain_formula_usable(kind, value, logq, tail_log, n_max):
    """The plain formula only sees a nonnegative abscissa, and saturates at
    0+ once the running quantity converges; detect both."""
    if not value > 0.0:
        return False
    if kind == "convergence":
        # converged when the tails in (n_max/4, n_max/2] are tiny against the
        # full partial sum
        lo, hi = n_max // 4 + 1, n_max // 2
        tail_max = float(np.max(tail_log[lo - 1 : hi]))
        return tail_max > math.log(0.01) + np.logaddexp(0.0, logq[-1])
    growth = logq[-1] - logq[n_max // 2 - 1]
    return growth > 0.01


def _running_quantities(spec, kind, n_max):
    """(lambda(1..N), log S_N, log tail_N) for the requested kind."""
    lam = np.empty(n_max, dtype=np.float64)
    if kind == "convergence":
        re = np.empty(n_max)
        im = np.empty(n_max)
        acc_re = acc_im = 0.0
        for lo in range(0, n_max, _BLOCK):
            hi = min(lo + _BLOCK, n_max)
            idx = np.arange(lo + 1, hi + 1, dtype=np.int64)
            lam[lo:hi] = spec.frequencies(idx)
            a = spec.coeffs(idx)
            re[lo:hi] = acc_re + np.cumsum(a.real)
            im[lo:hi] = acc_im + np.cumsum(a.imag)
            acc_re, acc_im = re[hi - 1], im[hi - 1]
        with np.errstate(divide="ignore"):
            logq = 0.5 * np.log(re**2 + im**2)
            tail_log = 0.5 * np.log((re[-1] - re) ** 2 + (im[-1] - im) ** 2)
        return lam, logq, tail_log

    logq = np.empty(n_max, dtype=np.float64)
    running = NEG_INF  # log of the running nonnegative sum
    for lo in range(0, n_max, _BLOCK):
        hi = min(lo + _BLOCK, n_max)
        idx = np.arange(lo + 1, hi + 1, dtype=np.int64)
        lam[lo:hi] = spec.frequencies(idx)
        r = spec.moduli(idx).astype(np.float64)
        if kind == "square":
            r = r * r
        with np.errstate(divide="ignore"):
            logs = np.log(r)
        block = np.logaddexp.accumulate(logs)
        if running > NEG_INF:
            block = np.logaddexp(running, block)
        logq[lo:hi] = block
        running = block[-1]
    total = logq[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.exp(logq - total)
        tail_log = total + np.log1p(-np.minimum(ratio, 1.0))
    tail_log[~np.isfinite(tail_log)] = NEG_INF
    return lam, logq, tail_log


def _dyadic_windows(n_max):
    return [
        (n_max // 2 + 1, n_max),
        (n_max // 4 + 1, n_max // 2),
        (n_max // 8 + 1, n_max // 4),
    ]


def _window_max(logq, lam, lo, hi, scale):
    lo = max(lo, 2)  # lambda(1) may be 0
    seg_log = logq[lo - 1 : hi]
    seg_lam = lam[lo - 1 : hi]
    good = seg_lam > 0
    if not good.any():
        return NEG_INF
    vals = seg_log[good] / (scale * seg_lam[good])
    return float(np.max(vals))


def _spread(ests):
    finite = [e for e in ests if math.isfinite(e)]
    if len(finite) < 2:
        return 0.0
    return float(max(finite) - min(finite))
