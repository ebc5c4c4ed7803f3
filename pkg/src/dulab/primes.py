"""Lazily extended, cached prime table (segmented sieve).

Translate scans ask for millions of prime frequencies, so the table grows
geometrically and is shared process-wide behind a lock.
"""

import threading

import numpy as np


class _PrimeCache:
    def __init__(self):
        self._lock = threading.Lock()
        self._primes = _sieve(1 << 16)
        self._limit = 1 << 16

    def ensure_limit(self, limit):
        """Grow the table so it contains every prime <= limit."""
        limit = int(limit)
        if limit <= self._limit:
            return
        with self._lock:
            while self._limit < limit:
                new_limit = max(self._limit * 2, limit)
                self._primes = _sieve_extend(self._primes, self._limit, new_limit)
                self._limit = new_limit

    def ensure_count(self, n):
        """Grow the table so it holds at least n primes."""
        n = int(n)
        while self._primes.size < n:
            # p_n < n (ln n + ln ln n) for n >= 6; double as a fallback.
            if n >= 6:
                guess = int(n * (np.log(n) + np.log(np.log(n)))) + 16
            else:
                guess = 16
            self.ensure_limit(max(guess, self._limit * 2))

    def nth(self, n):
        """n-th prime, 1-indexed (nth(1) == 2)."""
        if n < 1:
            raise ValueError("prime index starts at 1")
        self.ensure_count(n)
        return int(self._primes[n - 1])

    def nth_array(self, idx):
        """Vector of p_n over an array of 1-based indices."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size and idx.min() < 1:
            raise ValueError("prime index starts at 1")
        if idx.size:
            self.ensure_count(int(idx.max()))
        return self._primes[idx - 1]

    def up_to(self, limit):
        """All primes <= limit as an int64 array (read-only view)."""
        self.ensure_limit(limit)
        hi = np.searchsorted(self._primes, limit, side="right")
        return self._primes[:hi]


def _sieve(limit):
    mask = np.ones(limit + 1, dtype=bool)
    mask[:2] = False
    for p in range(2, int(limit**0.5) + 1):
        if mask[p]:
            mask[p * p :: p] = False
    return np.nonzero(mask)[0].astype(np.int64)


def _sieve_extend(primes, old_limit, new_limit):
    lo, hi = old_limit + 1, new_limit
    mask = np.ones(hi - lo + 1, dtype=bool)
    root = int(hi**0.5) + 1
    base = primes[primes <= root]
    if base.size == 0 or base[-1] < root:
        base = _sieve(root)
    for p in base:
        p = int(p)
        start = max(p * p, ((lo + p - 1) // p) * p)
        if start <= hi:
            mask[start - lo :: p] = False
    return np.concatenate([primes, (np.nonzero(mask)[0] + lo).astype(np.int64)])


_cache = _PrimeCache()

nth_prime = _cache.nth
nth_prime_array = _cache.nth_array
primes_up_to = _cache.up_to


def mobius_sieve(limit):
    """mu(1..limit) as an int8 array (index 0 unused)."""
    limit = int(limit)
    mu = np.ones(limit + 1, dtype=np.int8)
    for p in primes_up_to(limit):
        p = int(p)
        mu[p::p] *= -1
        sq = p * p
        if sq <= limit:
            mu[sq::sq] = 0
    return mu
