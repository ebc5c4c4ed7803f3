"""Compensated accumulation for long real/complex sums."""

import math

import numpy as np


class NeumaierSum:
    """Running compensated sum (Neumaier variant of Kahan summation).

    Keeps the error of a multi-million-term accumulation near one ulp of
    the result instead of growing with the term count.
    """

    __slots__ = ("total", "carry")

    def __init__(self):
        self.total = 0.0
        self.carry = 0.0

    def add(self, value):
        t = self.total + value
        if abs(self.total) >= abs(value):
            self.carry += (self.total - t) + value
        else:
            self.carry += (value - t) + self.total
        self.total = t

    @property
    def value(self):
        return self.total + self.carry


class ComplexSum:
    """Compensated complex accumulator built from two Neumaier sums."""

    __slots__ = ("re", "im")

    def __init__(self):
        self.re = NeumaierSum()
        self.im = NeumaierSum()

    def add(self, z):
        self.re.add(z.real)
        self.im.add(z.imag)

    def add_array(self, arr):
        # numpy's pairwise block sums are accurate; fsum stitches the blocks
        # together exactly.
        a = np.asarray(arr)
        self.re.add(math.fsum(a.real.tolist()) if a.size < 4096 else _block_sum(a.real))
        self.im.add(math.fsum(a.imag.tolist()) if a.size < 4096 else _block_sum(a.imag))

    @property
    def value(self):
        return complex(self.re.value, self.im.value)


def _block_sum(x, block=1 << 16):
    parts = [float(np.sum(x[i : i + block])) for i in range(0, x.size, block)]
    return math.fsum(parts)


def csum(arr):
    """Compensated sum of a complex (or real) array."""
    a = np.ascontiguousarray(arr)
    if a.size == 0:
        return 0.0 + 0.0j
    if np.iscomplexobj(a):
        return complex(_block_sum(a.real), _block_sum(a.imag))
    return complex(_block_sum(a), 0.0)
