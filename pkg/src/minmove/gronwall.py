"""Discrete Gronwall inequalities as executable bounds.

Three bounds are provided: the classical discrete lemma, the shifted-index
variant, and the two-scale version matched to the minimizing-movements
recursion (velocity step ``tau``, acceleration step ``h = N * tau``).  Each
bound comes with a checker so randomized tests can confirm that forward
simulated sequences never escape it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: relative slack used when comparing quantities that may hold with equality
REL_SLACK = 1e-12


def gronwall_bound(a0: float, c: float, k: int) -> float:
    """Bound ``a_k <= a0 * exp(k c)`` for ``a_k <= a0 + c * sum_{i<k} a_i``."""
    if a0 < 0 or c <= 0 or k < 0:
        raise ValueError("need a0 >= 0, c > 0, k >= 0")
    return a0 * math.exp(k * c)


def gronwall_shifted_bound(a0: float, c: float, k: int) -> float:
    """Bound ``a_k <= a0 (1 - c)^{-k}`` for ``a_k <= a0 + c * sum_{1<=i<=k} a_i``.

    Requires ``0 < c < 1``.  For ``c <= 1/2`` the result never exceeds
    ``a0 * exp(2 k c)``.
    """
    if not 0 < c < 1:
        raise ValueError(f"shifted Gronwall needs 0 < c < 1, got c={c}")
    if a0 < 0 or k < 0:
        raise ValueError("need a0 >= 0, k >= 0")
    return a0 * (1.0 - c) ** (-k)


@dataclass(frozen=True)
class TwoScaleSeq:
    """Doubly indexed non-negative sequences ``a``, ``b``, ``d`` of shape (M, N+1).

    Row ``l`` is the window, column ``k`` the step inside the window.
    Windows are chained: ``a[l, 0] == a[l-1, N]`` and likewise for ``b``.
    Column 0 of ``d`` is never used.
    """

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    c: float

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if a.ndim != 2 or a.shape != b.shape or a.shape != d.shape:
            raise ValueError("a, b, d must be 2-d arrays of equal shape (M, N+1)")
        if a.shape[1] < 2:
            raise ValueError("need N >= 1")
        if (a < 0).any() or (b < 0).any() or (d < 0).any():
            raise ValueError("all entries must be non-negative")
        if self.c <= 0:
            raise ValueError("c must be positive")
        for name, arr in (("a", a), ("b", b)):
            if not np.allclose(arr[1:, 0], arr[:-1, -1], rtol=REL_SLACK, atol=0.0):
                raise ValueError(f"chaining violated: {name}[l,0] != {name}[l-1,N]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)

    @property
    def N(self) -> int:
        return self.a.shape[1] - 1

    @property
    def M(self) -> int:
        return self.a.shape[0]

    def window_maxima(self) -> np.ndarray:
        """``max_k (a_k^l + (1/N) sum_{i<=k} b_i^l)`` for every window ``l``."""
        running = np.cumsum(self.b[:, 1:], axis=1) / self.N
        return np.max(self.a[:, 1:] + running, axis=1)


def two_scale_bound(seq: TwoScaleSeq, ell: int) -> float:
    """Two-scale Gronwall bound on window ``ell`` (``1 <= ell <= M-1``).

    Returns ``(a_0^0 + b_0^0 + sum_{l=0}^{ell} sum_{k=1}^{N} d_k^l) * exp(4 c N ell)``.
    The forcing sum starts at window 0: dropping it admits counterexamples
    (``a_0^0 = b_0^0 = 0`` with a single positive ``d_1^0``).
    """
    n = seq.N
    if seq.c * n > 0.25:
        raise ValueError(f"hypothesis c*N <= 1/4 violated (c*N = {seq.c * n})")
    if not 1 <= ell < seq.M:
        raise ValueError(f"ell must lie in 1..{seq.M - 1}")
    forcing = float(seq.d[: ell + 1, 1:].sum())
    return (seq.a[0, 0] + seq.b[0, 0] + forcing) * math.exp(4.0 * seq.c * n * ell)


def two_scale_hypothesis_holds(seq: TwoScaleSeq) -> bool:
    """Check ``a_k + b_k/N <= a_{k-1} + b_k^{l-1}/N + c a_k + c b_k + d_k`` everywhere.

    For the first window ``b_k^{-1}`` is taken as ``b_0^0``.
    """
    n = seq.N
    a, b, d, c = seq.a, seq.b, seq.d, seq.c
    prev_b = np.vstack([np.full((1, n + 1), b[0, 0]), b[:-1]])
    lhs = a[:, 1:] + b[:, 1:] / n
    rhs = a[:, :-1] + prev_b[:, 1:] / n + c * a[:, 1:] + c * b[:, 1:] + d[:, 1:]
    return bool(np.all(lhs <= rhs + REL_SLACK * np.abs(rhs)))


def simulate_two_scale(
    rng: np.random.Generator,
    N: int,
    M: int,
    c: float,
    a00: float,
    b00: float,
    d: np.ndarray,
) -> TwoScaleSeq:
    """Forward-simulate a sequence satisfying the two-scale recursion.

    Each step takes a uniform random fraction of the admissible right-hand
    side and splits it randomly between ``a`` and ``b``.  Needs ``c N < 1``.
    """
    if c * N >= 1:
        raise ValueError("need c*N < 1 for the recursion to be solvable")
    a = np.zeros((M, N + 1))
    b = np.zeros((M, N + 1))
    d = np.array(d, dtype=float)
    d[:, 0] = 0.0
    a[0, 0], b[0, 0] = a00, b00
    for ell in range(M):
        if ell > 0:
            a[ell, 0] = a[ell - 1, N]
            b[ell, 0] = b[ell - 1, N]
        for k in range(1, N + 1):
            b_prev = b[0, 0] if ell == 0 else b[ell - 1, k]
            budget = (a[ell, k - 1] + b_prev / N + d[ell, k]) * rng.uniform()
            split = rng.uniform()
            a[ell, k] = split * budget / (1.0 - c)
            b[ell, k] = (1.0 - split) * budget / (1.0 / N - c)
    return TwoScaleSeq(a, b, d, c)


def simulate_shifted(rng: np.random.Generator, a0: float, c: float, n: int) -> np.ndarray:
    """Random sequence with ``a_k <= a0 + c sum_{1<=i<=k} a_i`` (needs ``c < 1``)."""
    a = np.empty(n + 1)
    a[0] = a0
    acc = 0.0
    for k in range(1, n + 1):
        # a_k (1 - c) <= a0 + c * acc
        a[k] = rng.uniform() * (a0 + c * acc) / (1.0 - c)
        acc += a[k]
    return a


def simulate_classical(rng: np.random.Generator, a0: float, c: float, n: int) -> np.ndarray:
    """Random sequence with ``a_k <= a0 + c sum_{i<k} a_i``."""
    a = np.empty(n + 1)
    a[0] = a0
    acc = a0
    for k in range(1, n + 1):
        a[k] = rng.uniform() * (a0 + c * acc)
        acc += a[k]
    return a
