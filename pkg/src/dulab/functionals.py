"""Discrete measures on compacts, their Laplace transforms, the divergence
oracle for rearrangement universality, growth-window search and the
window-density condition checker."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import CompactRect
from .series import NEG_INF, PreconditionError, SeriesSpec

_BLOCK = 1 << 18


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite point-mass functional: atoms (location s_j, weight c_j).

    Validated to carry a nonvanishing moment of some order r <= #atoms,
    which is exactly what makes its Laplace transform not identically zero.
    """

    atoms: tuple
    box: Optional[CompactRect] = None

    def __post_init__(self):
        atoms = tuple((complex(s), complex(c)) for s, c in self.atoms)
        if not atoms:
            raise PreconditionError("a measure needs at least one atom")
        object.__setattr__(self, "atoms", atoms)
        if self.box is None:
            locs = np.array([s for s, _ in atoms])
            pad = 0.25
            object.__setattr__(self, "box", CompactRect(
                float(locs.real.min()) - pad, float(locs.real.max()) + pad,
                float(locs.imag.min()) - pad, float(locs.imag.max()) + pad))
        else:
            for s, _ in atoms:
                if not self.box.contains(s):
                    raise PreconditionError("support box must contain all atoms")
        if not self._has_nonzero_moment():
            raise PreconditionError("all moments up to #atoms vanish; "
                                    "the functional is numerically degenerate")

    def _has_nonzero_moment(self):
        locs, wts = self.locations, self.weights
        scale = max(float(np.abs(wts).sum()), 1e-300)
        power = np.ones_like(locs)
        for _ in range(len(self.atoms) + 1):
            if abs(np.sum(wts * power)) > 1e-12 * scale:
                return True
            power = power * locs
        return False

    @property
    def locations(self):
        return np.array([s for s, _ in self.atoms])

    @property
    def weights(self):
        return np.array([c for _, c in self.atoms])

    @property
    def b_max_re(self):
        return float(self.locations.real.max())

    @property
    def exponential_type(self):
        return float(np.abs(self.locations).max())

    def __add__(self, other):
        return DiscreteMeasure(self.atoms + other.atoms)


def laplace_transform(mu: DiscreteMeasure, x) -> complex:
    """L_mu(x) = sum_j c_j e^{-x s_j}; vectorized over x."""
    x = np.asarray(x, dtype=np.float64)
    locs, wts = mu.locations, mu.weights
    vals = wts[None, :] * np.exp(-np.atleast_1d(x)[:, None] * locs[None, :])
    out = vals.sum(axis=1)
    return complex(out[0]) if x.ndim == 0 else out


# ---------------------------------------------------------------------------
# divergence oracle


@dataclass(frozen=True)
class DivergenceReport:
    checkpoints: tuple        # (N, running sum) at dyadic checkpoints
    crossings: dict           # threshold -> first index crossing it (or None)
    total: float
    reference: float          # running sum at n_max // 100
    evidence: bool            # total > 10 * reference
    n_max: int


def divergence_oracle(spec: SeriesSpec, mu: DiscreteMeasure, n_max: int,
                      thresholds=()) -> DivergenceReport:
    """Running sums of |a(n)| |L_mu(lambda(n))| with threshold crossings.

    Divergence of this series is the criterion behind rearrangement
    universality; the report flags 'evidence' when the sum grows by a factor
    ten past the n_max/100 checkpoint.
    """
    n_max = int(n_max)
    if n_max < 1000:
        raise PreconditionError("n_max must be at least 10^3")
    if spec.max_index is not None:
        n_max = min(n_max, spec.max_index)
    thresholds = tuple(sorted(float(t) for t in thresholds))

    check_ns = sorted({n_max >> k for k in range(0, 11) if (n_max >> k) >= 1}
                      | {max(n_max // 100, 1)})
    checkpoints = []
    crossings = {t: None for t in thresholds}
    locs, wts = mu.locations, mu.weights

    running = 0.0
    reference = 0.0
    ref_n = max(n_max // 100, 1)
    ci = 0
    for lo in range(1, n_max + 1, _BLOCK):
        hi = min(lo + _BLOCK - 1, n_max)
        idx = np.arange(lo, hi + 1, dtype=np.int64)
        lam = spec.frequencies(idx)
        absl = np.abs(np.exp(-lam[:, None] * locs[None, :]) @ wts)
        cs = running + np.cumsum(spec.moduli(idx) * absl)
        for t in thresholds:
            if crossings[t] is None and cs[-1] >= t:
                j = int(np.searchsorted(cs, t, side="left"))
                crossings[t] = lo + j
        while ci < len(check_ns) and check_ns[ci] <= hi:
            checkpoints.append((check_ns[ci], float(cs[check_ns[ci] - lo])))
            ci += 1
        if lo <= ref_n <= hi:
            reference = float(cs[ref_n - lo])
        running = float(cs[-1])

    return DivergenceReport(
        checkpoints=tuple(checkpoints),
        crossings=crossings,
        total=running,
        reference=reference,
        evidence=running > 10.0 * reference,
        n_max=n_max,
    )


# ---------------------------------------------------------------------------
# growth windows (entire functions of exponential type)


def find_growth_windows(mu: DiscreteMeasure, d: float, x_lo: float, x_hi: float,
                        grid_step: float, delta: Optional[float] = None,
                        samples_per_window: int = 16):
    """Grid locations y where |L_mu| >= e^{-d y}/2 holds throughout
    [y, y + delta/y^2]; returns the maximal y of each qualifying run as
    (y, window_length) pairs.

    delta defaults to 1/(8 M^2) with M the measure's exponential type, the
    same width the growth argument produces.
    """
    if grid_step > 1e-2:
        raise PreconditionError("grid_step must be at most 10^-2")
    if x_lo <= 0 or x_hi <= x_lo:
        raise PreconditionError("need 0 < x_lo < x_hi")
    if delta is None:
        M = max(mu.exponential_type, 1e-3)
        delta = min(1.0 / (8.0 * M * M), 10.0)

    ys = np.arange(x_lo, x_hi + grid_step / 2, grid_step)
    offsets = np.linspace(0.0, 1.0, samples_per_window)
    xs = ys[:, None] + (delta / ys[:, None] ** 2) * offsets[None, :]
    vals = np.abs(laplace_transform(mu, xs.ravel())).reshape(xs.shape)
    ok = (vals >= 0.5 * np.exp(-d * ys)[:, None]).all(axis=1)

    out = []
    for i, good in enumerate(ok):
        if good and (i + 1 == len(ok) or not ok[i + 1]):
            y = float(ys[i])
            out.append((y, float(delta / y**2)))
    return out


# ---------------------------------------------------------------------------
# window-density condition


@dataclass(frozen=True)
class DensityReport:
    alpha: float
    beta: float
    x_grid: tuple
    window_sums: tuple
    sigma_a: float
    fitted_C: float
    passed: bool
    truncated: bool

    def bounds(self):
        """The lower bounds fitted_C * e^{(sigma_a - beta) x} per grid point."""
        x = np.asarray(self.x_grid)
        return self.fitted_C * np.exp((self.sigma_a - self.beta) * x)


def window_sum_check(spec: SeriesSpec, alpha: float, beta: float, x_grid,
                     index_budget: int = 8_000_000) -> DensityReport:
    """Coefficient mass in the frequency windows [x, x + alpha/x^2].

    Sums |a(n)| over lambda(n) in each window by binary search on a lazily
    materialized frequency table, fits the largest C with
    window_sum >= C e^{(sigma_a - beta) x} across the grid, and passes when
    every window is nonempty (and the table was not exhausted).
    """
    if alpha <= 0 or beta <= 0:
        raise PreconditionError("alpha and beta must be positive")
    if spec.sigma_a is None or not math.isfinite(spec.sigma_a):
        raise PreconditionError("window-density check needs a declared finite sigma_a")
    x_grid = np.asarray(sorted(float(x) for x in x_grid))
    if x_grid.size == 0 or x_grid[0] < 1.0:
        raise PreconditionError("x_grid must be nonempty with min >= 1")

    lam_needed = float(x_grid[-1] + alpha / x_grid[-1] ** 2)
    lam, rho, truncated = _materialize(spec, lam_needed, index_budget)

    sums = []
    used = []
    for x in x_grid:
        hi_edge = x + alpha / x**2
        if truncated and (lam.size == 0 or lam[-1] < hi_edge):
            break
        i0 = int(np.searchsorted(lam, x, side="left"))
        i1 = int(np.searchsorted(lam, hi_edge, side="right"))
        sums.append(float(rho[i0:i1].sum()))
        used.append(float(x))

    sums_arr = np.asarray(sums)
    used_arr = np.asarray(used)
    if sums_arr.size and (sums_arr > 0).all():
        fitted = float(np.min(sums_arr * np.exp(-(spec.sigma_a - beta) * used_arr)))
    else:
        fitted = 0.0
    passed = bool(sums_arr.size == x_grid.size and (sums_arr > 0).all()
                  and not truncated and fitted > 0.0)
    return DensityReport(
        alpha=float(alpha), beta=float(beta),
        x_grid=tuple(used), window_sums=tuple(sums),
        sigma_a=float(spec.sigma_a), fitted_C=fitted,
        passed=passed, truncated=truncated,
    )


def _materialize(spec, lam_needed, budget):
    """Frequency and modulus tables out to lambda > lam_needed (or budget)."""
    lams, rhos = [], []
    n = 0
    truncated = False
    while True:
        lo = n + 1
        hi = n + _BLOCK
        if spec.max_index is not None:
            hi = min(hi, spec.max_index)
        if hi > budget:
            hi = budget
        if hi < lo:
            truncated = True
            break
        idx = np.arange(lo, hi + 1, dtype=np.int64)
        lam = spec.frequencies(idx)
        lams.append(lam)
        rhos.append(spec.moduli(idx).astype(np.float64))
        n = hi
        if lam[-1] > lam_needed:
            break
        if (spec.max_index is not None and n >= spec.max_index) or n >= budget:
            truncated = True
            break
    if lams:
        return np.concatenate(lams), np.concatenate(rhos), truncated
    return np.array([]), np.array([]), truncated
