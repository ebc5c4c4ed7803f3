"""General Dirichlet series as data: frequencies, coefficients, built-in families.

A series is sum_{n>=1} a(n) exp(-lambda(n) s) with lambda strictly increasing
to +infinity and a(n) = rho(n) * (unimodular phase).  Built-in families cover
the ordinary series, the prime-frequency series, the shifted Lerch-type
series, a polynomial-frequency family and a log-log-frequency family, plus
tabulated custom data.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from . import primes

TWO_PI = 2.0 * math.pi

NEG_INF = float("-inf")


class PreconditionError(ValueError):
    """An operation was invoked outside its documented domain."""


# ---------------------------------------------------------------------------
# phase rules (all values are unimodular)


class Phase:
    omega: Optional[float] = None  # set when the rule is e^{i omega n}

    def values(self, n):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class UniformPhase(Phase):
    """a(n) carries the factor e^{i omega n}."""

    def __init__(self, omega):
        self.omega = float(omega)

    def values(self, n):
        arg = self.omega * np.asarray(n, dtype=np.float64)
        return np.cos(arg) + 1j * np.sin(arg)

    def describe(self):
        return f"uniform(omega={self.omega!r})"


class AlternatingPhase(Phase):
    """a(n) carries (-1)^n, i.e. the uniform rule at omega = pi, kept exact."""

    omega = math.pi

    def values(self, n):
        n = np.asarray(n, dtype=np.int64)
        out = np.where(n % 2 == 0, 1.0, -1.0)
        return out.astype(np.complex128)

    def describe(self):
        return "alternating"


class ConstantPhase(Phase):
    """No oscillation: a(n) = rho(n)."""

    def values(self, n):
        return np.ones(np.asarray(n).shape, dtype=np.complex128)

    def describe(self):
        return "constant"


class FixedPhase(Phase):
    """Unimodular values tabulated by the caller."""

    def __init__(self, values):
        vals = np.asarray(values, dtype=np.complex128)
        mods = np.abs(vals)
        if vals.size and (np.abs(mods - 1.0) > 64 * np.finfo(float).eps).any():
            raise PreconditionError("fixed phase values must be unimodular")
        self._vals = vals / np.where(mods == 0, 1.0, mods)

    def values(self, n):
        n = np.asarray(n, dtype=np.int64)
        if n.size and n.max() > self._vals.size:
            raise PreconditionError("fixed phase table exhausted")
        return self._vals[n - 1]

    def describe(self):
        return f"fixed(len={self._vals.size})"


class RandomPhase(Phase):
    """Seeded uniform phases on the circle, reproducible at any index.

    Values come from counter-based Philox streams: block b of 2^16 indices is
    generated from key=seed, counter=b, so access at an arbitrary n is
    deterministic and cheap.  The block cache is grow-only behind a lock.
    """

    BLOCK = 1 << 16

    def __init__(self, seed):
        self.seed = int(seed)
        self._blocks = {}
        self._lock = threading.Lock()

    def _block(self, b):
        blk = self._blocks.get(b)
        if blk is None:
            with self._lock:
                blk = self._blocks.get(b)
                if blk is None:
                    gen = np.random.Generator(
                        np.random.Philox(key=self.seed, counter=[0, 0, 0, b])
                    )
                    arg = TWO_PI * gen.random(self.BLOCK)
                    blk = np.cos(arg) + 1j * np.sin(arg)
                    self._blocks[b] = blk
        return blk

    def values(self, n):
        n = np.asarray(n, dtype=np.int64)
        flat = n.ravel() - 1
        out = np.empty(flat.size, dtype=np.complex128)
        for b in np.unique(flat // self.BLOCK):
            sel = (flat // self.BLOCK) == b
            out[sel] = self._block(int(b))[flat[sel] % self.BLOCK]
        return out.reshape(n.shape)

    def describe(self):
        return f"random(seed={self.seed})"


# ---------------------------------------------------------------------------
# series spec


@dataclass(frozen=True)
class SeriesSpec:
    """Immutable description of one general Dirichlet series.

    ``lam`` and ``rho`` are vectorized callables over 1-based indices.
    Declared abscissae use None for "unknown" and -inf where the series
    converges in the whole plane.  The smoothness/monotonicity flags gate the
    certified tail-bounded evaluator; ``q_li`` is declared metadata only and
    is never verified numerically.
    """

    family: str
    lam: Callable
    rho: Callable
    phase: Phase
    sigma_c: Optional[float] = None
    sigma_a: Optional[float] = None
    sigma_2: Optional[float] = None
    lam_prime: Optional[Callable] = None
    lam_smooth: bool = False
    mono_sigma0: Optional[float] = None
    q_li: bool = False
    max_index: Optional[int] = None
    params: dict = field(default_factory=dict)

    # -- coefficient / frequency access ------------------------------------

    def frequencies(self, n):
        n = _check_indices(n, self.max_index)
        return self.lam(n)

    def moduli(self, n):
        n = _check_indices(n, self.max_index)
        return self.rho(n)

    def coeffs(self, n):
        n = _check_indices(n, self.max_index)
        return self.rho(n) * self.phase.values(n)

    @property
    def omega(self):
        return self.phase.omega

    def tail_monotone_from(self, sigma):
        """First index from which rho(x) e^{-lambda(x) sigma} is nonincreasing.

        Returns None when the monotonicity flag is absent or sigma is not
        above the declared threshold.
        """
        if self.mono_sigma0 is None or not (sigma > self.mono_sigma0):
            return None
        start = self.params.get("mono_from")
        if callable(start):
            return int(start(sigma))
        return 1

    def describe(self):
        extra = ",".join(f"{k}={v}" for k, v in sorted(self.params.items())
                         if k not in ("mono_from",))
        phase = self.phase.describe()
        return f"{self.family}[{phase}]" + (f"({extra})" if extra else "")


def _check_indices(n, max_index):
    n = np.asarray(n, dtype=np.int64)
    if n.size and n.min() < 1:
        raise PreconditionError("series indices start at 1")
    if max_index is not None and n.size and n.max() > max_index:
        raise PreconditionError(
            f"index {int(n.max())} beyond tabulated data (max {max_index})"
        )
    return n


def coeff(spec: SeriesSpec, n: int) -> complex:
    """a(n) for a single index."""
    return complex(spec.coeffs(np.array([n]))[0])


def frequency(spec: SeriesSpec, n: int) -> float:
    """lambda(n) for a single index."""
    return float(spec.frequencies(np.array([n]))[0])


# ---------------------------------------------------------------------------
# real polynomials and their inverse asymptotics


@dataclass(frozen=True)
class PolynomialReal:
    """Real polynomial b_0 + b_1 X + ... + b_d X^d with b_d > 0, d >= 1."""

    coeffs: tuple

    def __post_init__(self):
        c = tuple(float(b) for b in self.coeffs)
        object.__setattr__(self, "coeffs", c)
        if len(c) < 2:
            raise PreconditionError("degree must be at least 1")
        if c[-1] <= 0:
            raise PreconditionError("leading coefficient must be positive")

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for b in reversed(self.coeffs):
            out = out * x + b
        return out if out.shape else float(out)

    def derivative(self):
        d = tuple(k * b for k, b in enumerate(self.coeffs))[1:]
        return d

    def bijective_from(self):
        """(x0, y0): P is a strictly increasing bijection [x0,inf) -> [y0,inf)."""
        dcoeffs = self.derivative()
        if len(dcoeffs) == 1:
            x0 = 0.0
        else:
            roots = np.roots(list(reversed(dcoeffs)))
            real = roots[np.abs(roots.imag) < 1e-9].real
            x0 = float(real.max()) + 1e-9 if real.size else 0.0
        x0 = max(x0, 0.0)
        return x0, float(self(x0))

    def inverse_leading(self):
        """Constant c_P in P^{-1}(x) = b_d^{-1/d} x^{1/d} + c_P + o(1)."""
        b = self.coeffs
        d = self.degree
        return -b[d - 1] / (d * b[d])


def poly_inverse_asymptotic(P: PolynomialReal, x: float) -> float:
    """P^{-1}(x) on the branch where P is an increasing bijection.

    Safeguarded root-finding (Brent); the asymptotic expansion
    b_d^{-1/d} x^{1/d} - b_{d-1}/(d b_d) + o(1) is exercised by the tests.
    """
    x0, y0 = P.bijective_from()
    if x < y0:
        raise PreconditionError(f"{x} below the bijectivity threshold {y0}")
    d = P.degree
    guess = (x / P.coeffs[-1]) ** (1.0 / d)
    hi = max(x0 + 1.0, 2.0 * guess + 1.0)
    while P(hi) < x:
        hi *= 2.0
    lo = x0
    if P(lo) > x:
        return lo
    return float(brentq(lambda t: P(t) - x, lo, hi, xtol=1e-12, rtol=8e-16))


# ---------------------------------------------------------------------------
# built-in families


def make_builtin(family: str, **params) -> SeriesSpec:
    """Construct one of the built-in series families.

    ordinary: lambda(n)=log n.  Optional phase= {None | 'alternating' | omega},
        rho= callable (default 1).
    prime: lambda(n)=log p_n, same phase options.
    lerch(alpha, phase_lambda): lambda(n)=log(n+alpha), a(n)=e^{2 pi i phase_lambda n}.
    poly(d, ...): lambda(n)=log P(n), rho(n)=Q(n) (log n)^gamma, e^{i omega n}.
    loglog(gamma_shift, omega): lambda(n)=log log(n+gamma_shift), rho(n)=1/n.
    custom(path or table): tabulated (lambda(n), a(n)).
    """
    try:
        builder = _FAMILIES[family]
    except KeyError:
        raise PreconditionError(f"unknown family {family!r}") from None
    return builder(**params)


def _phase_from_params(phase, seed=None):
    if phase is None:
        return ConstantPhase()
    if phase == "alternating":
        return AlternatingPhase()
    if phase == "random":
        return RandomPhase(0 if seed is None else seed)
    if isinstance(phase, Phase):
        return phase
    omega = float(phase)
    if math.isclose(math.remainder(omega, TWO_PI), 0.0, abs_tol=1e-12):
        raise PreconditionError("uniform phase omega must avoid 2*pi*Z")
    return UniformPhase(omega)


def _make_ordinary(phase=None, rho=None, seed=None, **declared):
    ph = _phase_from_params(phase, seed)
    if rho is None:
        rho_fn = lambda n: np.ones(np.asarray(n).shape, dtype=np.float64)
        sigma_c = 1.0 if isinstance(ph, ConstantPhase) else 0.0
        sigma_a, sigma_2 = 1.0, 0.5
        mono = {"mono_from": lambda sigma: 1}
        mono_sigma0 = 0.0
    else:
        rho_fn = rho
        sigma_c = declared.get("sigma_c")
        sigma_a = declared.get("sigma_a")
        sigma_2 = declared.get("sigma_2")
        mono, mono_sigma0 = {}, None
    return SeriesSpec(
        family="ordinary",
        lam=lambda n: np.log(np.asarray(n, dtype=np.float64)),
        rho=rho_fn,
        phase=ph,
        sigma_c=sigma_c,
        sigma_a=sigma_a,
        sigma_2=sigma_2,
        lam_prime=(lambda x: 1.0 / np.asarray(x, dtype=np.float64)),
        lam_smooth=rho is None,
        mono_sigma0=mono_sigma0,
        q_li=False,
        params={"phase": str(phase), **mono},
    )


def _make_prime(phase=None, seed=None):
    ph = _phase_from_params(phase, seed)
    sigma_c = 1.0 if isinstance(ph, ConstantPhase) else 0.0
    # log p_n is not a smooth function of the index; the certified tail
    # evaluator stays unavailable and translate scans go through log zeta.
    return SeriesSpec(
        family="prime",
        lam=lambda n: np.log(
            primes.nth_prime_array(np.asarray(n, dtype=np.int64)).astype(np.float64)
        ),
        rho=lambda n: np.ones(np.asarray(n).shape, dtype=np.float64),
        phase=ph,
        sigma_c=sigma_c,
        sigma_a=1.0,
        sigma_2=0.5,
        lam_prime=None,
        lam_smooth=False,
        mono_sigma0=None,
        q_li=True,
        params={"phase": str(phase)},
    )


def _make_lerch(alpha, phase_lambda=0.0):
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise PreconditionError("lerch needs 0 < alpha <= 1")
    phase_lambda = float(phase_lambda)
    irrational_phase = abs(phase_lambda - round(phase_lambda)) > 1e-12
    ph = UniformPhase(TWO_PI * phase_lambda) if irrational_phase else ConstantPhase()
    return SeriesSpec(
        family="lerch",
        lam=lambda n: np.log(np.asarray(n, dtype=np.float64) + alpha),
        rho=lambda n: np.ones(np.asarray(n).shape, dtype=np.float64),
        phase=ph,
        sigma_c=0.0 if irrational_phase else 1.0,
        sigma_a=1.0,
        sigma_2=0.5,
        lam_prime=lambda x: 1.0 / (np.asarray(x, dtype=np.float64) + alpha),
        lam_smooth=True,
        mono_sigma0=0.0,
        q_li=False,
        params={"alpha": alpha, "phase_lambda": phase_lambda,
                "mono_from": lambda sigma: 1},
    )


def _make_poly(d, P_coeffs=None, Q_coeffs=None, gamma=0.0, omega=1.0, beta=math.pi):
    d = int(d)
    if d < 1:
        raise PreconditionError("poly family needs degree d >= 1")
    if P_coeffs is None:
        # (X + beta)^d, the paper-suggested default shape
        P_coeffs = [math.comb(d, k) * beta ** (d - k) for k in range(d + 1)]
    P = PolynomialReal(tuple(P_coeffs))
    if P.degree != d:
        raise PreconditionError("P must have degree d")
    if Q_coeffs is None:
        Q_coeffs = [0.0] * (d - 1) + [1.0]  # Q(X) = X^(d-1)
    Q = PolynomialReal(tuple(Q_coeffs)) if len(Q_coeffs) > 1 else None
    q_deg = len(Q_coeffs) - 1
    if q_deg >= d:
        raise PreconditionError("deg Q must be at most d-1")
    q_fn = (lambda x: Q(x)) if Q is not None else (lambda x: np.full(np.asarray(x).shape, float(Q_coeffs[0])))
    gamma = float(gamma)

    probe = np.arange(1.0, 4097.0)
    pv = P(probe)
    if pv[0] < 1.0 or (np.diff(pv) <= 0).any():
        raise PreconditionError("P must be >= 1 and increasing on [1, inf)")
    if (q_fn(probe) <= 0).any():
        raise PreconditionError("Q must be positive on [1, inf)")

    def lam(n):
        return np.log(P(np.asarray(n, dtype=np.float64)))

    def rho(n):
        x = np.asarray(n, dtype=np.float64)
        base = np.asarray(q_fn(x), dtype=np.float64)
        if gamma != 0.0:
            lg = np.log(x)
            # the n=1 coefficient would hit (log 1)^gamma; one term never
            # moves an abscissa, so pin it to 0
            out = np.where(lg > 0, base * lg ** np.where(lg > 0, gamma, 0.0), 0.0)
            return out
        return base

    dP = P.derivative()

    def lam_prime(x):
        x = np.asarray(x, dtype=np.float64)
        num = np.zeros_like(x)
        for b in reversed(dP):
            num = num * x + b
        return num / P(x)

    sigma_a = (q_deg + 1.0) / d
    sigma_c = q_deg / d
    sigma_2 = (2.0 * q_deg + 1.0) / (2.0 * d)

    def mono_from(sigma):
        # first index from which Q(x)(log x)^gamma P(x)^{-sigma} decreases
        def h(x):
            qp = 0.0
            for k in range(q_deg, 0, -1):
                qp = qp * x + k * Q_coeffs[k]
            term = qp / q_fn(np.asarray([x]))[0]
            if gamma != 0.0 and x > 1.0:
                term += gamma / (x * math.log(x))
            return term - sigma * float(lam_prime(np.asarray([x]))[0])

        grid = np.geomspace(1.0 + 1e-9, 1e12, 513)
        vals = np.array([h(float(g)) for g in grid])
        bad = np.nonzero(vals >= 0)[0]
        if bad.size == 0:
            return 1
        if bad[-1] == grid.size - 1:
            raise PreconditionError("rho e^{-lambda sigma} not eventually decreasing")
        return int(math.ceil(grid[bad[-1] + 1])) + 1

    return SeriesSpec(
        family="poly",
        lam=lam,
        rho=rho,
        phase=_phase_from_params(omega),
        sigma_c=sigma_c,
        sigma_a=sigma_a,
        sigma_2=sigma_2,
        lam_prime=lam_prime,
        lam_smooth=True,
        mono_sigma0=sigma_c,
        q_li=False,  # only declared true for known-sufficient instances
        params={"d": d, "P": tuple(P.coeffs), "Q": tuple(float(b) for b in Q_coeffs),
                "gamma": gamma, "omega": float(omega), "mono_from": mono_from},
    )


def _make_loglog(gamma_shift=math.e - 1.0, omega=1.0):
    g = float(gamma_shift)
    if g < math.e - 1.0:
        raise PreconditionError("loglog family needs gamma >= e - 1")
    return SeriesSpec(
        family="loglog",
        lam=lambda n: np.log(np.log(np.asarray(n, dtype=np.float64) + g)),
        rho=lambda n: 1.0 / np.asarray(n, dtype=np.float64),
        phase=_phase_from_params(omega),
        sigma_c=NEG_INF,
        sigma_a=1.0,
        sigma_2=NEG_INF,
        lam_prime=lambda x: 1.0
        / ((np.asarray(x, dtype=np.float64) + g) * np.log(np.asarray(x, dtype=np.float64) + g)),
        lam_smooth=True,
        mono_sigma0=0.0,
        q_li=False,
        params={"gamma": g, "omega": float(omega), "mono_from": lambda sigma: 1},
    )


def _make_custom(path=None, table=None, **declared):
    if table is None:
        if path is None:
            raise PreconditionError("custom family needs path= or table=")
        table = load_custom_table(path)
    lam_arr, a_arr = table
    lam_arr = np.asarray(lam_arr, dtype=np.float64)
    a_arr = np.asarray(a_arr, dtype=np.complex128)
    if lam_arr.size != a_arr.size or lam_arr.size == 0:
        raise PreconditionError("custom table must provide matching nonempty columns")
    if (np.diff(lam_arr) <= 0).any():
        raise PreconditionError("custom frequencies must be strictly increasing")
    if lam_arr[0] < 0:
        raise PreconditionError("custom frequencies must be nonnegative")
    mods = np.abs(a_arr)

    return SeriesSpec(
        family="custom",
        lam=lambda n: lam_arr[np.asarray(n, dtype=np.int64) - 1],
        rho=lambda n: mods[np.asarray(n, dtype=np.int64) - 1],
        phase=FixedPhase(np.where(mods == 0, 1.0, a_arr / np.where(mods == 0, 1.0, mods))),
        sigma_c=declared.get("sigma_c"),
        sigma_a=declared.get("sigma_a"),
        sigma_2=declared.get("sigma_2"),
        lam_prime=None,
        lam_smooth=False,
        mono_sigma0=None,
        q_li=bool(declared.get("q_li", False)),
        max_index=int(lam_arr.size),
        params={"source": str(path) if path else "inline"},
    )


def load_custom_table(path):
    """Read the custom-series CSV (header n,lambda,re_a,im_a)."""
    lam, a = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"n", "lambda", "re_a", "im_a"}
        if reader.fieldnames is None or not need.issubset(reader.fieldnames):
            raise PreconditionError("custom CSV needs header n,lambda,re_a,im_a")
        for k, row in enumerate(reader, start=1):
            if int(row["n"]) != k:
                raise PreconditionError("custom CSV indices must run 1,2,3,...")
            lam.append(float(row["lambda"]))
            a.append(complex(float(row["re_a"]), float(row["im_a"])))
    return np.array(lam), np.array(a)


_FAMILIES = {
    "ordinary": _make_ordinary,
    "prime": _make_prime,
    "lerch": _make_lerch,
    "poly": _make_poly,
    "loglog": _make_loglog,
    "custom": _make_custom,
}
