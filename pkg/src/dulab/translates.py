"""Vertical-translate experiments: sup-distance scans with density
estimation, random-phase sampling, empirical distribution comparison, the
Montgomery-Vaughan inequality check, and mean squares along vertical lines.

Scan values for series with certified tail flags come from one fixed-cutoff
partial sum driven incrementally in tau (chunked at absolute grid positions,
so partial scans and resumed scans reproduce identical bits).  The prime
series goes through branch-tracked log zeta and reports excluded heights
instead of distances.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .evaluate import (ZeroCrossingError, tail_cutoff, track_log_zeta_row,
                       vdc_remainder_factor, zeta_points)
from .geometry import CompactRect
from .primes import mobius_sieve
from .series import PreconditionError, SeriesSpec

_CHUNK = 2048          # tau chunk size; absolute, so resumes are bit-exact
_RENORM_EVERY = 1024   # incremental phase renormalization interval
_TAIL_QUALITY_FLOOR = 4096


def _threads():
    env = os.environ.get("DUL_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class ScanReport:
    T: float
    step: float
    eps: float
    taus: np.ndarray
    distances: np.ndarray          # nan where excluded (prime series)
    good_measure: float
    density_estimate: float
    best_tau: float
    best_distance: float
    checkpoints: tuple             # (T_cp, density_so_far, best_so_far)
    excluded_measure: float
    excluded_fraction: float
    certified_bound: Optional[float]   # per-value remainder bound, if certified


@dataclass(frozen=True)
class PhaseSampleSet:
    seed: int
    count: int
    observable: str
    samples: np.ndarray
    n_terms: int
    tail_ratio: float              # measured L2 mass beyond n_terms / retained


# ---------------------------------------------------------------------------
# evaluation plans


class _MatrixEngine:
    """Fixed-cutoff evaluation of D(s + i tau) on a grid of base points.

    Values are sum_{n<x} a(n) e^{-lambda(n)(s + i tau)}; the cutoff is the
    certified one at the largest height when the spec's flags allow, else the
    caller's budget.
    """

    def __init__(self, spec, s_grid, t_extra_max, eval_budget):
        self.spec = spec
        self.grid = np.asarray(s_grid, dtype=np.complex128)
        sigma_min = float(self.grid.real.min())
        t_abs = float(np.abs(self.grid.imag).max()) + abs(t_extra_max)
        cut = tail_cutoff(spec, t_abs, sigma_min)
        if cut is not None:
            x = max(cut, _TAIL_QUALITY_FLOOR)
            if spec.max_index is not None:
                x = min(x, spec.max_index)
            if x <= eval_budget:
                lam_x = float(spec.frequencies(np.asarray([x]))[0])
                rho_x = float(spec.moduli(np.asarray([x]))[0])
                self.bound = (vdc_remainder_factor(spec.omega) * rho_x
                              * math.exp(-lam_x * sigma_min))
                self.certified = True
                self.n_terms = x - 1
            else:
                self.bound = None
                self.certified = False
                self.n_terms = int(eval_budget)
        else:
            self.bound = None
            self.certified = False
            self.n_terms = int(eval_budget)
            if spec.max_index is not None:
                self.n_terms = min(self.n_terms, spec.max_index)
        idx = np.arange(1, self.n_terms + 1, dtype=np.int64)
        self.lam = spec.frequencies(idx)
        # coefficient matrix a(n) e^{-lambda(n) s_j}
        self.C = (spec.coeffs(idx)[:, None]
                  * np.exp(-self.lam[:, None] * self.grid[None, :]))

    def values_at(self, taus):
        """D-matrix of shape (len(taus), len(grid)) by direct evaluation."""
        taus = np.asarray(taus, dtype=np.float64)
        out = np.empty((taus.size, self.grid.size), dtype=np.complex128)
        for i, tau in enumerate(taus):
            w = np.exp(-1j * self.lam * tau)
            out[i] = w @ self.C
        return out

    def values_grid(self, step, idx_lo, idx_hi):
        """Values at tau = k*step for k in [idx_lo, idx_hi), driven
        incrementally inside absolute chunks of _CHUNK steps."""
        count = idx_hi - idx_lo
        out = np.empty((count, self.grid.size), dtype=np.complex128)
        rot = np.exp(-1j * self.lam * step)
        pos = 0
        k = idx_lo
        while k < idx_hi:
            chunk_start = (k // _CHUNK) * _CHUNK
            chunk_end = min(chunk_start + _CHUNK, idx_hi)
            w = np.exp(-1j * self.lam * (chunk_start * step))
            for j in range(chunk_start, chunk_end):
                if j >= k:
                    out[pos] = w @ self.C
                    pos += 1
                if (j + 1) % _RENORM_EVERY == 0:
                    w = np.exp(-1j * self.lam * ((j + 1) * step))
                else:
                    w = w * rot
            k = chunk_end
        return out


class _PrimeEngine:
    """Prime-series values via Moebius inversion, row-shared branch tracking."""

    def __init__(self, spec, s_grid, K_max=16):
        if spec.family != "prime":
            raise PreconditionError("prime engine needs the prime family")
        self.grid = np.asarray(s_grid, dtype=np.complex128)
        if float(self.grid.real.min()) <= 0.5:
            raise PreconditionError("prime-series grid needs Re(s) > 1/2")
        self.K_max = int(K_max)
        self.mu = mobius_sieve(self.K_max)
        self.bound = None
        self.certified = False
        self.n_terms = 0

    def value_at(self, tau):
        """Grid values at one tau; raises ZeroCrossingError on exclusion."""
        pts = self.grid + 1j * tau
        rows = {}
        for p in pts:
            rows.setdefault(round(float(p.imag), 12), set()).add(float(p.real))
        logz1 = {}
        for t, sigmas in rows.items():
            got = track_log_zeta_row(sorted(sigmas), t)
            for sg, v in got.items():
                logz1[(sg, t)] = v
        out = np.empty(pts.shape, dtype=np.complex128)
        ks = [k for k in range(2, self.K_max + 1) if self.mu[k] != 0]
        tail_terms = np.zeros(pts.shape, dtype=np.complex128)
        for k in ks:
            zs = zeta_points(k * pts)
            tail_terms += int(self.mu[k]) * np.log(zs) / k
        for i, p in enumerate(pts.ravel()):
            out.ravel()[i] = logz1[(float(p.real), round(float(p.imag), 12))]
        return out + tail_terms

    def values_at(self, taus):
        out = np.empty((len(taus), self.grid.size), dtype=np.complex128)
        for i, tau in enumerate(taus):
            out[i] = self.value_at(float(tau))
        return out


def _make_engine(spec, s_grid, t_extra_max, eval_budget):
    if spec.family == "prime":
        return _PrimeEngine(spec, s_grid)
    return _MatrixEngine(spec, s_grid, t_extra_max, eval_budget)


def _as_target_samples(target, grid):
    if callable(target):
        return np.asarray(target(grid), dtype=np.complex128)
    arr = np.asarray(target)
    if arr.shape == grid.shape:
        return arr.astype(np.complex128)
    return np.full(grid.shape, complex(target), dtype=np.complex128)


# ---------------------------------------------------------------------------
# sup distance and scans


def sup_distance(spec: SeriesSpec, tau: float, target, compact: CompactRect,
                 eval_budget: int = 200_000) -> float:
    """max over the compact's grid of |D(s + i tau) - f(s)|.

    For the prime series a removed-segment height raises ZeroCrossingError
    (the translate is excluded rather than given a distance).
    """
    grid = compact.points()
    engine = _make_engine(spec, grid, abs(tau), eval_budget)
    tvals = _as_target_samples(target, grid)
    vals = engine.values_at(np.asarray([float(tau)]))[0]
    return float(np.abs(vals - tvals).max())


def scan_translates(spec: SeriesSpec, target, compact: CompactRect, T: float,
                    step: float, eps: float, eval_budget: int = 200_000,
                    refine: int = 10) -> "ScanReport":
    """Scan tau in [0, T]: distances, measure of good tau, density estimate.

    The good measure is step-counting refined by ``refine`` subcells around
    each hit; prime-series exclusions shrink the normalizing measure (the
    density is relative to the heights where the series is defined).
    """
    if step > 0.5:
        raise PreconditionError("scan step must be at most 0.5")
    if T < 100.0:
        raise PreconditionError("scan range must be at least 100")
    taus = _scan_grid(T, step)
    dists, excluded = translate_distances(spec, target, compact, T, step,
                                          0, taus.size, eval_budget)
    return finalize_scan(spec, target, compact, T, step, eps, dists, excluded,
                         eval_budget, refine)


def _scan_grid(T, step):
    n = int(math.floor(T / step + 0.5)) + 1
    return np.arange(n) * step


def translate_distances(spec, target, compact, T, step, idx_lo, idx_hi,
                        eval_budget=200_000, threads=None):
    """Distances for tau = k*step, k in [idx_lo, idx_hi); NaN marks excluded
    heights.  Deterministic regardless of the worker count."""
    grid = compact.points()
    tvals = _as_target_samples(target, grid)
    engine = _make_engine(spec, grid, T, eval_budget)
    n = idx_hi - idx_lo
    dists = np.empty(n, dtype=np.float64)
    excluded = np.zeros(n, dtype=bool)

    if isinstance(engine, _PrimeEngine):
        for i in range(n):
            tau = (idx_lo + i) * step
            try:
                vals = engine.value_at(tau)
                dists[i] = float(np.abs(vals - tvals).max())
            except ZeroCrossingError:
                dists[i] = np.nan
                excluded[i] = True
        return dists, excluded

    spans = [(lo, min(lo + _CHUNK, idx_hi))
             for lo in range(idx_lo - idx_lo % _CHUNK, idx_hi, _CHUNK)]
    spans = [(max(lo, idx_lo), hi) for lo, hi in spans if hi > idx_lo]

    def work(span):
        lo, hi = span
        vals = engine.values_grid(step, lo, hi)
        return lo, np.abs(vals - tvals[None, :]).max(axis=1)

    nthreads = threads if threads is not None else _threads()
    if nthreads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            for lo, d in pool.map(work, spans):
                dists[lo - idx_lo : lo - idx_lo + d.size] = d
    else:
        for span in spans:
            lo, d = work(span)
            dists[lo - idx_lo : lo - idx_lo + d.size] = d
    return dists, excluded


def finalize_scan(spec, target, compact, T, step, eps, dists, excluded,
                  eval_budget=200_000, refine=10):
    """Assemble the ScanReport from a complete distances array."""
    taus = _scan_grid(T, step)
    if taus.size != dists.size:
        raise PreconditionError("distance array does not match the scan grid")
    grid = compact.points()
    tvals = _as_target_samples(target, grid)
    engine = _make_engine(spec, grid, T, eval_budget)

    finite = ~excluded
    best_i = int(np.nanargmin(np.where(finite, dists, np.inf)))
    best_tau, best_dist = float(taus[best_i]), float(dists[best_i])

    hits = np.nonzero(finite & (dists < eps))[0]
    good = 0.0
    good_at = np.zeros(taus.size)
    for i in hits:
        lo = max(0.0, taus[i] - step / 2)
        hi = min(float(T), taus[i] + step / 2)
        sub_w = (hi - lo) / refine
        centers = lo + (np.arange(refine) + 0.5) * sub_w
        if isinstance(engine, _PrimeEngine):
            sub_ok = 0
            for c in centers:
                try:
                    v = engine.value_at(float(c))
                    d = float(np.abs(v - tvals).max())
                    if d < eps:
                        sub_ok += 1
                    if d < best_dist:
                        best_tau, best_dist = float(c), d
                except ZeroCrossingError:
                    pass
        else:
            vals = engine.values_at(centers)
            ds = np.abs(vals - tvals[None, :]).max(axis=1)
            sub_ok = int((ds < eps).sum())
            j = int(np.argmin(ds))
            if ds[j] < best_dist:
                best_tau, best_dist = float(centers[j]), float(ds[j])
        cell = sub_w * sub_ok
        good += cell
        good_at[i] = cell

    excl_measure = _cell_measure(taus, excluded, step, T)
    denom = max(T - excl_measure, step)
    density = min(max(good / denom, 0.0), 1.0)

    checkpoints = []
    for frac in (0.25, 0.5, 1.0):
        t_cp = frac * T
        sel = taus <= t_cp + 1e-12
        g = float(good_at[sel].sum())
        ex = _cell_measure(taus[sel], excluded[sel], step, t_cp)
        dn = max(t_cp - ex, step)
        finite_sel = sel & finite
        best_cp = float(np.min(dists[finite_sel])) if finite_sel.any() else math.inf
        checkpoints.append((t_cp, min(max(g / dn, 0.0), 1.0), best_cp))

    n_excl = int(excluded.sum())
    return ScanReport(
        T=float(T), step=float(step), eps=float(eps), taus=taus,
        distances=dists, good_measure=good, density_estimate=density,
        best_tau=best_tau, best_distance=best_dist,
        checkpoints=tuple(checkpoints),
        excluded_measure=excl_measure,
        excluded_fraction=n_excl / taus.size,
        certified_bound=engine.bound,
    )


def _cell_measure(taus, mask, step, T):
    if not mask.any():
        return 0.0
    los = np.maximum(0.0, taus[mask] - step / 2)
    his = np.minimum(float(T), taus[mask] + step / 2)
    return float(np.maximum(his - los, 0.0).sum())


# ---------------------------------------------------------------------------
# random phases


def sample_random_phases(spec: SeriesSpec, s: complex, count: int, seed: int,
                         n_terms: Optional[int] = None, tail_tol: float = 1e-6,
                         budget: int = 10_000_000) -> PhaseSampleSet:
    """Independent draws of sum_{n<=n_terms} a(n) z_n e^{-lambda(n) s} with
    i.i.d. uniform unimodular z_n.

    When n_terms is omitted, the smallest count with discarded L2 tail mass
    below tail_tol of the retained mass (measured against the budget horizon)
    is selected; an explicit n_terms overrides that rule and the measured
    ratio is recorded on the sample set.
    """
    s = complex(s)
    if spec.sigma_2 is None:
        raise PreconditionError("random-phase sampling needs a declared sigma_2")
    if not s.real > spec.sigma_2:
        raise PreconditionError("Re(s) must exceed the declared sigma_2")
    count = int(count)

    horizon = budget if spec.max_index is None else min(budget, spec.max_index)
    masses = _l2_mass_cumulative(spec, s.real, horizon)
    total = masses[-1]
    if n_terms is None:
        ratios = (total - masses) / np.maximum(masses, 1e-300)
        ok = np.nonzero(ratios < tail_tol)[0]
        if ok.size == 0 or ok[0] + 1 >= horizon:
            raise PreconditionError(
                f"cannot meet tail tolerance {tail_tol} within the index "
                f"budget {horizon}; pass n_terms explicitly"
            )
        n_terms = int(ok[0] + 1)
    n_terms = int(min(n_terms, horizon))
    retained = masses[n_terms - 1]
    tail_ratio = float((total - retained) / max(retained, 1e-300))

    idx = np.arange(1, n_terms + 1, dtype=np.int64)
    c = spec.coeffs(idx) * np.exp(-spec.frequencies(idx) * s)

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    samples = np.empty(count, dtype=np.complex128)
    block = max(1, (1 << 21) // max(n_terms, 1))
    two_pi = 2.0 * math.pi
    for lo in range(0, count, block):
        hi = min(lo + block, count)
        u = rng.random((hi - lo, n_terms))
        arg = two_pi * u
        z = np.cos(arg) + 1j * np.sin(arg)
        samples[lo:hi] = z @ c
    return PhaseSampleSet(
        seed=int(seed), count=count, observable=f"D at s={s}",
        samples=samples, n_terms=n_terms, tail_ratio=tail_ratio,
    )


def _l2_mass_cumulative(spec, sigma, horizon, block=1 << 18):
    out = np.empty(horizon, dtype=np.float64)
    run = 0.0
    for lo in range(0, horizon, block):
        hi = min(lo + block, horizon)
        idx = np.arange(lo + 1, hi + 1, dtype=np.int64)
        m = spec.moduli(idx) * np.exp(-spec.frequencies(idx) * sigma)
        out[lo:hi] = run + np.cumsum(m * m)
        run = out[hi - 1]
    return out


# ---------------------------------------------------------------------------
# distribution comparison (two-sample Kolmogorov-Smirnov)


def compare_distributions(translate_values, phase_values, level: float = 0.01,
                          descriptor_a: Optional[str] = None,
                          descriptor_b: Optional[str] = None):
    """Two-sample KS statistic and the asymptotic-level decision.

    Returns (ks_statistic, reject) where reject=True means the two samples
    differ at the requested level.
    """
    if descriptor_a is not None and descriptor_b is not None \
            and descriptor_a != descriptor_b:
        raise PreconditionError(
            f"mismatched observables: {descriptor_a!r} vs {descriptor_b!r}"
        )
    a = np.sort(np.asarray(translate_values, dtype=np.float64))
    b = np.sort(np.asarray(phase_values, dtype=np.float64))
    if a.size < 1000 or b.size < 1000:
        raise PreconditionError("both samples must have at least 10^3 points")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    ks = float(np.abs(fa - fb).max())
    crit = math.sqrt(-0.5 * math.log(level / 2.0))
    threshold = crit * math.sqrt((a.size + b.size) / (a.size * b.size))
    return ks, ks > threshold


# ---------------------------------------------------------------------------
# Montgomery-Vaughan inequality


def mv_bound_check(lambdas, u):
    """lhs = |sum_{r != s} conj(u_r) u_s / (lambda_r - lambda_s)| against
    rhs = (3 pi / 2) sum |u_r|^2 / delta_r; returns (lhs, rhs, holds)."""
    lam = np.asarray(lambdas, dtype=np.float64)
    uu = np.asarray(u, dtype=np.complex128)
    if lam.ndim != 1 or lam.size != uu.size or lam.size == 0:
        raise PreconditionError("lambdas and u must be matching 1-d arrays")
    diff = lam[:, None] - lam[None, :]
    off = ~np.eye(lam.size, dtype=bool)
    if np.abs(diff[off]).min(initial=np.inf) == 0.0:
        raise PreconditionError("lambdas must be pairwise distinct")
    if lam.size == 1:
        return 0.0, 0.0, True
    with np.errstate(divide="ignore"):
        inv = np.where(off, 1.0 / np.where(off, diff, 1.0), 0.0)
    lhs = abs(complex(np.conj(uu) @ inv @ uu))
    delta = np.where(off, np.abs(diff), np.inf).min(axis=1)
    rhs = 1.5 * math.pi * float((np.abs(uu) ** 2 / delta).sum())
    # 8-ulp slack absorbs the accumulation rounding of the double sum
    holds = lhs <= rhs * (1.0 + 8.0 * np.finfo(float).eps) + 1e-300
    return lhs, rhs, bool(holds)


# ---------------------------------------------------------------------------
# mean squares


def mean_square(spec: SeriesSpec, sigma: float, T: float, dt: float,
                eval_budget: int = 200_000) -> float:
    """Trapezoid estimate of (1/T) int_0^T |D(sigma + i t)|^2 dt."""
    if dt > 0.1:
        raise PreconditionError("dt must be at most 0.1")
    sigma = float(sigma)
    taus = _scan_grid(T, dt)
    engine = _make_engine(spec, np.asarray([sigma + 0j]), T, eval_budget)
    if isinstance(engine, _PrimeEngine):
        vals = engine.values_at(taus)[:, 0]
    else:
        vals = engine.values_grid(dt, 0, taus.size)[:, 0]
    sq = np.abs(vals) ** 2
    w = np.ones(taus.size)
    w[0] = w[-1] = 0.5
    span = taus[-1] - taus[0]
    return float((sq * w).sum() * dt / max(span, dt))
