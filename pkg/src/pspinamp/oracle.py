"""Independent reference computations used to check the main pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _kernels
from .hamiltonian import DisorderSample, SpinConfig

MAX_BRUTE_N = 22


class TooLargeError(ValueError):
    """Exhaustive enumeration refused for this size."""


@dataclass(frozen=True)
class BruteForceResult:
    opt_value: float
    argmax: SpinConfig
    histogram: np.ndarray | None = None  # H(sigma)/N indexed by the code of sigma


def monomial_expansion(d: DisorderSample) -> tuple[np.ndarray, np.ndarray]:
    """Write H_N restricted to the hypercube as sum_S J_S sigma^S.

    Returns ``(masks, coeffs)``; ``masks`` are bitmasks of the sets S. Index
    tuples collapse to the set of indices appearing an odd number of times.
    """
    n = d.n
    if n > 62:
        raise TooLargeError("bitmask expansion needs n <= 62")
    bits = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
    acc = {}
    for k, g in d.tensors.items():
        mask = bits
        for _ in range(k - 1):
            mask = np.bitwise_xor.outer(mask, bits).reshape(-1)
        w = d.scale(k) * g.reshape(-1)
        uniq, inv = np.unique(mask, return_inverse=True)
        sums = np.bincount(inv, weights=w)
        for m, s in zip(uniq.tolist(), sums.tolist()):
            acc[m] = acc.get(m, 0.0) + s
    masks = np.array(sorted(acc), dtype=np.int64)
    coeffs = np.array([acc[m] for m in masks.tolist()])
    return masks, coeffs


def brute_force_opt(d: DisorderSample, histogram: bool = False) -> BruteForceResult:
    """Exact max of H_N(sigma)/N over the hypercube by Gray-code enumeration."""
    n = d.n
    if n > MAX_BRUTE_N:
        raise TooLargeError(f"brute force refused for n={n} > {MAX_BRUTE_N}")
    masks, coeffs = monomial_expansion(d)
    contains = ((masks[None, :] >> np.arange(n)[:, None]) & 1).astype(bool)
    flip_ptr = np.zeros(n + 1, dtype=np.intp)
    flip_ptr[1:] = np.cumsum(contains.sum(axis=1))
    flip_idx = np.ascontiguousarray(np.nonzero(contains)[1], dtype=np.intp)
    best, code, energies = _kernels.gray_code_enumerate(
        n, np.ascontiguousarray(coeffs, dtype=float), flip_ptr, flip_idx, histogram
    )
    hist = None
    if histogram:
        steps = np.arange(1 << n, dtype=np.int64)
        hist = np.empty(1 << n)
        hist[steps ^ (steps >> 1)] = np.asarray(energies) / n
    return BruteForceResult(best / n, SpinConfig.from_code(n, code), hist)


@lru_cache(maxsize=32)
def half_gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss rule for the half-normal density 2*phi(y) on [0, inf).

    Recurrence coefficients come from a discretized Stieltjes procedure on a
    fine Gauss-Legendre grid, nodes and weights from the Jacobi matrix.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    y, w = np.polynomial.legendre.leggauss(4000)
    upper = 40.0
    y = 0.5 * upper * (y + 1.0)
    w = 0.5 * upper * w * 2.0 * np.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)
    alpha = np.empty(n)
    beta = np.empty(n)
    p_prev = np.zeros_like(y)
    p = np.ones_like(y)
    norm_prev = 1.0
    for j in range(n):
        norm = float(np.sum(w * p * p))
        alpha[j] = float(np.sum(w * y * p * p)) / norm
        beta[j] = norm / norm_prev if j > 0 else norm
        p_next = (y - alpha[j]) * p - (beta[j] if j > 0 else 0.0) * p_prev
        # rescale to keep the recursion in range; ratios are unaffected
        s = math.sqrt(norm)
        p_prev, p, norm_prev = p / s, p_next / s, 1.0
    nodes, vecs = eigh_tridiagonal(alpha, np.sqrt(beta[1:]))
    weights = beta[0] * vecs[0, :] ** 2
    return nodes, weights


def gauss_hermite_expect(f, sigma: float, nodes: int = 61) -> float:
    """E f(sigma*G) for standard normal G.

    Uses a Gauss rule on each half line (``(nodes+1)//2`` points per side), so
    integrands with a kink at zero such as |x| are integrated to round-off.
    """
    if not 11 <= nodes <= 301:
        raise ValueError("nodes must lie in [11, 301]")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    y, w = half_gauss_rule((nodes + 1) // 2)
    pos = np.asarray(f(sigma * y), dtype=float)
    neg = np.asarray(f(-sigma * y), dtype=float)
    return float(0.5 * np.sum(w * (pos + neg)))


def finite_diff(f, x: float, h: float) -> float:
    """Central difference (f(x+h) - f(x-h)) / (2h)."""
    if not h > 0:
        raise ValueError("h must be positive")
    return (f(x + h) - f(x - h)) / (2.0 * h)
