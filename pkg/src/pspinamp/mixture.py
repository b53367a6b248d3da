"""Mixture function xi(x) = sum_k c_k^2 x^k of a mixed p-spin model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

MAX_DEGREE = 6


@dataclass(frozen=True)
class Mixture:
    """Finite mixture of p-spin interactions.

    Args:
        coeffs: mapping ``degree -> c_k``. Degrees must be integers >= 2 and
            at most ``max_degree``; zero coefficients are dropped.
        max_degree: largest admissible degree.

    The coefficients are stored un-squared; ``xi`` and its derivatives are
    evaluated with Horner's rule on the dense coefficient vector.
    """

    coeffs: Mapping[int, float]
    max_degree: int = MAX_DEGREE
    _poly: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        clean = {}
        for k, c in dict(self.coeffs).items():
            if int(k) != k or k < 2:
                raise ValueError(f"degrees must be integers >= 2, got {k!r}")
            k = int(k)
            if k > self.max_degree:
                raise ValueError(f"degree {k} exceeds max_degree={self.max_degree}")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError(f"coefficient for degree {k} is not finite")
            if c != 0.0:
                clean[k] = c
        if not clean:
            raise ValueError("mixture needs at least one nonzero coefficient")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        poly = np.zeros(max(clean) + 1)
        for k, c in clean.items():
            poly[k] = c * c
        object.__setattr__(self, "_poly", poly)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "Mixture":
        out: dict[int, float] = {}
        for k, c in pairs:
            if int(k) in out:
                raise ValueError(f"degree {k} given twice")
            out[int(k)] = float(c)
        return cls(out)

    @classmethod
    def sk(cls, c2: float = 1.0) -> "Mixture":
        return cls({2: c2})

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(self.coeffs)

    @property
    def k_max(self) -> int:
        return max(self.coeffs)

    @property
    def k_min(self) -> int:
        return min(self.coeffs)

    @property
    def is_even(self) -> bool:
        return all(k % 2 == 0 for k in self.coeffs)

    def _horner(self, x, order):
        p = self._poly
        for _ in range(order):
            p = p[1:] * np.arange(1, len(p))
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x) + p[-1]
        for a in p[-2::-1]:
            acc = acc * x + a
        return acc if acc.ndim else float(acc)

    def xi(self, x):
        return self._horner(x, 0)

    def xi_prime(self, x):
        return self._horner(x, 1)

    def xi_second(self, x):
        return self._horner(x, 2)

    def xi_third(self, x):
        return self._horner(x, 3)

    def int_t_xi_second(self, a: float, b: float) -> float:
        """Exact value of the integral of t*xi''(t) over [a, b]."""
        def prim(t):
            return t * self.xi_prime(t) - self.xi(t)
        return float(prim(b) - prim(a))

    def to_pairs(self) -> list[tuple[int, float]]:
        return list(self.coeffs.items())

    def __str__(self):
        terms = " + ".join(f"{c:g}^2 t^{k}" for k, c in self.coeffs.items())
        return f"xi(t) = {terms}"
