"""Rearrangement of conditionally convergent series.

Two modes: the classical scalar greedy (take positive terms while below the
target, negative while above), and window steering of a Dirichlet series
toward a holomorphic target through a schedule of compacts.  Steering is an
empirical surrogate for the existence theorem: it reports stalls honestly
and claims nothing about convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .functionals import window_sum_check
from .geometry import CompactRect
from .series import PreconditionError, SeriesSpec

__all__ = [
    "CompactRect",
    "Stage",
    "RearrangementTrace",
    "riemann_rearrange_scalar",
    "steer_rearrange",
    "verify_rearrangement",
]


class RearrangementPatternError(PreconditionError):
    """The declared conditional-convergence pattern broke down (one sign ran
    out within the scan budget)."""


@dataclass(frozen=True)
class Stage:
    compact: CompactRect
    tolerance: float
    step_budget: int


@dataclass(frozen=True)
class StageRecord:
    index: int
    start_step: int
    end_step: int
    start_error: float
    end_error: float
    reached_tolerance: bool
    stalled: bool


@dataclass(frozen=True)
class RearrangementTrace:
    prefix: np.ndarray            # original indices in use order, no repeats
    checkpoints: tuple            # (step, sup-error on the stage active then)
    schedule: tuple               # Stage entries (empty for scalar mode)
    stage_records: tuple = ()
    stalled_stage: Optional[int] = None
    first_crossing: Optional[int] = None
    density_check: Optional[tuple] = None  # (alpha, beta, passed) when run

    def __post_init__(self):
        prefix = np.asarray(self.prefix, dtype=np.int64)
        object.__setattr__(self, "prefix", prefix)
        if prefix.size != np.unique(prefix).size:
            raise PreconditionError("permutation prefix contains repeats")
        steps = [s for s, _ in self.checkpoints]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise PreconditionError("checkpoint steps must be increasing")


# ---------------------------------------------------------------------------
# scalar mode


def riemann_rearrange_scalar(terms: Callable[[int], float], target: float,
                             n_steps: int, scan_budget: int = 10_000_000,
                             checkpoint_every: int = 1024) -> RearrangementTrace:
    """Classical greedy rearrangement of a real conditionally convergent series.

    While the partial sum is <= target append the next unused positive term,
    otherwise the next unused negative term.  After the first crossing every
    partial sum stays within the largest term magnitude used since then.
    """
    n_steps = int(n_steps)
    if n_steps < 1:
        raise PreconditionError("n_steps must be positive")
    target = float(target)

    pos_iter = _signed_stream(terms, +1, scan_budget)
    neg_iter = _signed_stream(terms, -1, scan_budget)

    prefix = np.empty(n_steps, dtype=np.int64)
    checkpoints = []
    total = 0.0
    first_crossing = None
    below = total <= target
    for step in range(1, n_steps + 1):
        take_pos = total <= target
        idx, val = next(pos_iter) if take_pos else next(neg_iter)
        total += val
        prefix[step - 1] = idx
        if first_crossing is None and (total <= target) != below:
            first_crossing = step
        if step % checkpoint_every == 0 or step == n_steps:
            checkpoints.append((step, abs(total - target)))
    return RearrangementTrace(
        prefix=prefix,
        checkpoints=tuple(checkpoints),
        schedule=(),
        first_crossing=first_crossing,
    )


def _signed_stream(terms, sign, scan_budget):
    """Yield (index, value) of terms with the requested sign (zeros ride with
    the positives); raise when the sign runs out within the scan budget."""
    n = 0
    while True:
        scanned = 0
        while True:
            n += 1
            scanned += 1
            if scanned > scan_budget:
                raise RearrangementPatternError(
                    f"no more {'positive' if sign > 0 else 'negative'} terms "
                    f"within the scan budget; pattern violated"
                )
            try:
                v = float(terms(n))
            except Exception as exc:
                raise RearrangementPatternError(
                    f"term stream exhausted at index {n} while searching for a "
                    f"{'positive' if sign > 0 else 'negative'} term"
                ) from exc
            if (sign > 0 and v >= 0.0) or (sign < 0 and v < 0.0):
                break
        yield n, v


# ---------------------------------------------------------------------------
# window steering


def steer_rearrange(spec: SeriesSpec, target, schedule, window: int = 64,
                    checkpoint_every: int = 4096,
                    density_alpha: float = 1.0, density_beta: float = 0.2,
                    skip_density_check: bool = False) -> RearrangementTrace:
    """Greedy window steering of the series toward a target on a compact
    exhaustion.

    At each step the term among the first ``window`` unused indices that most
    reduces the stage seminorm (sup over the stage grid of
    |current + term - target|) is appended; when none reduces it, the first
    unused index is appended so the natural order stays in the search space.
    Stages advance on reaching their tolerance or exhausting their budget;
    a budget exhausted with no improving candidate marks the stage stalled.
    """
    if spec.sigma_c is None or spec.sigma_a is None:
        raise PreconditionError("steering needs declared sigma_c and sigma_a")
    if not spec.sigma_c < spec.sigma_a:
        raise PreconditionError(
            "steering needs sigma_c < sigma_a (conditional convergence strip)"
        )
    stages = tuple(schedule)
    if not stages:
        raise PreconditionError("schedule must contain at least one stage")
    for st in stages:
        if not (st.compact.re_lo > spec.sigma_c and st.compact.re_hi < spec.sigma_a):
            raise PreconditionError("stage compacts must lie inside the strip")
    density_check = None
    if not skip_density_check:
        grid = np.arange(5.0, 10.5, 2.5)
        rep = window_sum_check(spec, density_alpha, density_beta, grid)
        density_check = (density_alpha, density_beta, rep.passed)
        if not rep.passed:
            raise PreconditionError(
                "window-density condition failed; series not eligible for steering"
            )
    window = max(1, int(window))

    prefix_parts = []
    checkpoints = []
    stage_records = []
    stalled_stage = None
    step = 0
    target_fn = _as_target(target)

    buffer_idx: list = []        # first unused original indices, in order
    next_index = 1
    buffer_rows = None           # matching term rows on the current grid

    for si, st in enumerate(stages):
        grid = st.compact.points()
        tvals = target_fn(grid)
        prefix_flat = (np.concatenate(prefix_parts)
                       if prefix_parts else np.empty(0, dtype=np.int64))
        cur = _prefix_sums_on_grid(spec, prefix_flat, grid)
        buffer_rows = _term_rows(spec, np.asarray(buffer_idx, dtype=np.int64), grid)
        err = float(np.abs(cur - tvals).max())
        start_step, start_err = step, err
        steps_in_stage = 0
        last_improved = True
        stage_prefix = []
        while err > st.tolerance and steps_in_stage < st.step_budget:
            while len(buffer_idx) < window and (spec.max_index is None
                                                or next_index <= spec.max_index):
                grow = np.arange(next_index, next_index + window, dtype=np.int64)
                if spec.max_index is not None:
                    grow = grow[grow <= spec.max_index]
                buffer_idx.extend(int(g) for g in grow)
                buffer_rows = np.vstack([buffer_rows, _term_rows(spec, grow, grid)])
                next_index = int(grow[-1]) + 1 if grow.size else next_index
            if not buffer_idx:
                break
            w = min(window, len(buffer_idx))
            cand = np.abs(cur[None, :] + buffer_rows[:w] - tvals[None, :]).max(axis=1)
            pick = int(np.argmin(cand))  # ties resolve to the lowest index
            last_improved = cand[pick] < err
            cur = cur + buffer_rows[pick]
            err = float(np.abs(cur - tvals).max())
            stage_prefix.append(buffer_idx.pop(pick))
            buffer_rows = np.delete(buffer_rows, pick, axis=0)
            step += 1
            steps_in_stage += 1
            if step % checkpoint_every == 0:
                checkpoints.append((step, err))
        stage_prefix_arr = np.asarray(stage_prefix, dtype=np.int64)
        prefix_parts.append(stage_prefix_arr)
        reached = err <= st.tolerance
        # a stage that neither met its tolerance nor improved is stalled,
        # never silently passed
        stalled = (not reached) and (err >= start_err or not last_improved)
        if stalled and stalled_stage is None:
            stalled_stage = si
        if step > 0 and (not checkpoints or checkpoints[-1][0] != step):
            checkpoints.append((step, err))
        stage_records.append(StageRecord(si, start_step, step, start_err, err,
                                         reached, stalled))

    prefix = (np.concatenate(prefix_parts)
              if prefix_parts else np.empty(0, dtype=np.int64))
    return RearrangementTrace(
        prefix=prefix,
        checkpoints=tuple(checkpoints),
        schedule=stages,
        stage_records=tuple(stage_records),
        stalled_stage=stalled_stage,
        density_check=density_check,
    )


def _as_target(target):
    if callable(target):
        return lambda grid: np.asarray(target(grid), dtype=np.complex128)
    const = complex(target)
    return lambda grid: np.full(grid.shape, const, dtype=np.complex128)


def _term_rows(spec, idx, grid):
    """Term values a(n) e^{-lambda(n) s} as an (len(idx), len(grid)) matrix."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return np.empty((0, grid.size), dtype=np.complex128)
    lam = spec.frequencies(idx)
    a = spec.coeffs(idx)
    return a[:, None] * np.exp(-lam[:, None] * grid[None, :])


def _prefix_sums_on_grid(spec, prefix, grid, block=1 << 14):
    """Partial sums of the prefix terms on the grid, fixed block order (the
    same routine backs both steering and verification, so their checkpoint
    values agree bit-for-bit)."""
    cur = np.zeros(grid.size, dtype=np.complex128)
    for lo in range(0, prefix.size, block):
        rows = _term_rows(spec, prefix[lo : lo + block], grid)
        cur += rows.sum(axis=0)
    return cur


def verify_rearrangement(trace: RearrangementTrace, spec: SeriesSpec, target,
                         compact: Optional[CompactRect] = None):
    """Recompute sup-errors from scratch along the trace order.

    Returns a list of (step, sup-error) at the trace's checkpoint steps; the
    caller compares them against the recorded ones (they agree to ~1e-10,
    being the same sums reassembled).  Stage boundaries switch the grid just
    like steering did.
    """
    prefix = np.asarray(trace.prefix, dtype=np.int64)
    if prefix.size != np.unique(prefix).size:
        raise PreconditionError("duplicate index in permutation prefix")
    target_fn = _as_target(target)

    if trace.stage_records:
        spans = [(r.start_step, r.end_step, trace.schedule[r.index].compact)
                 for r in trace.stage_records]
    else:
        if compact is None:
            raise PreconditionError("a compact is required for stage-free traces")
        spans = [(0, prefix.size, compact)]

    if prefix.size == 0:
        grid = spans[0][2].points()
        return [(0, float(np.abs(target_fn(grid)).max()))]

    check = {s for s, _ in trace.checkpoints}
    out = []
    block = 1 << 14
    for start, end, cpt in spans:
        grid = cpt.points()
        tvals = target_fn(grid)
        cur = _prefix_sums_on_grid(spec, prefix[:start], grid)
        for blo in range(start, end, block):
            bhi = min(blo + block, end)
            rows = _term_rows(spec, prefix[blo:bhi], grid)
            for r in range(bhi - blo):
                cur = cur + rows[r]
                step = blo + r + 1
                if step in check:
                    out.append((step, float(np.abs(cur - tvals).max())))
    return out
