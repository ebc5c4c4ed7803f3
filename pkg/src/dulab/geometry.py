"""Axis-aligned rectangles in the complex plane with sampling grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import PreconditionError


@dataclass(frozen=True)
class CompactRect:
    """Closed rectangle [re_lo, re_hi] x [im_lo, im_hi] with a sampling grid.

    ``grid`` is the resolution in points per unit length; each axis gets at
    least four sample points regardless of span.
    """

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float
    grid: int = 8

    def __post_init__(self):
        if not (self.re_lo < self.re_hi and self.im_lo < self.im_hi):
            raise PreconditionError("rectangle must have positive extent")
        if self.grid < 8:
            raise PreconditionError("grid resolution must be at least 8 per unit")

    def axis_counts(self):
        nre = max(4, int(np.ceil((self.re_hi - self.re_lo) * self.grid)) + 1)
        nim = max(4, int(np.ceil((self.im_hi - self.im_lo) * self.grid)) + 1)
        return nre, nim

    def points(self):
        """Grid samples as a flat complex array (re-major order)."""
        nre, nim = self.axis_counts()
        re = np.linspace(self.re_lo, self.re_hi, nre)
        im = np.linspace(self.im_lo, self.im_hi, nim)
        return (re[:, None] + 1j * im[None, :]).ravel()

    def refined(self, factor=2):
        return CompactRect(self.re_lo, self.re_hi, self.im_lo, self.im_hi,
                           self.grid * factor)

    def contains(self, z, slack=0.0):
        return (self.re_lo - slack <= z.real <= self.re_hi + slack
                and self.im_lo - slack <= z.imag <= self.im_hi + slack)
