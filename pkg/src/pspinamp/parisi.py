"""Parisi PDE for piecewise-constant order parameters via Cole-Hopf.

On an interval where gamma equals a constant ``a``, ``exp(a*Phi)`` solves a
backward heat equation with diffusion ``xi''(t)``, so a slice at time ``t``
follows from any later slice ``t'`` in the same interval by Gaussian
smoothing with variance ``xi'(t') - xi'(t)``. The first layer below ``t = 1``
(terminal condition ``|x|``) is evaluated in closed form; every other slice is
obtained by Gauss-Hermite quadrature from the next later slice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr

from . import _kernels
from .mixture import Mixture

GAMMA_ZERO_TOL = 1e-10
DEFAULT_NX = 2001
DEFAULT_GH_NODES = 61
# widest Gaussian smoothing done in one quadrature step
DEFAULT_MAX_STEP_SIGMA = 0.2


class GridError(ValueError):
    """Raised when the spatial grid cannot hold the solution."""


@dataclass(frozen=True)
class GammaPath:
    """Nonnegative step function ``sum_i values[i] * 1[knots[i], knots[i+1])``."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float).copy()
        values = np.asarray(self.values, dtype=float).copy()
        if knots.ndim != 1 or len(knots) < 2:
            raise ValueError("need at least two knots")
        if len(values) != len(knots) - 1:
            raise ValueError("need one value per knot interval")
        if knots[0] != 0.0 or knots[-1] != 1.0:
            raise ValueError("knots must start at 0 and end at 1")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("gamma values must be finite and >= 0")
        knots.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value: float, n_intervals: int = 1) -> "GammaPath":
        return cls(np.linspace(0.0, 1.0, n_intervals + 1), np.full(n_intervals, float(value)))

    @classmethod
    def on_uniform_knots(cls, values, eps_t: float = 0.01) -> "GammaPath":
        """Values on a uniform grid over ``[0, 1 - eps_t]``; the last value also covers the tail."""
        values = np.asarray(values, dtype=float)
        n = len(values)
        inner = np.linspace(0.0, 1.0 - eps_t, n + 1)
        if eps_t > 0:
            knots = np.append(inner, 1.0)
            vals = np.append(values, values[-1])
        else:
            knots, vals = inner, values
        return cls(knots, vals)

    @property
    def n_intervals(self) -> int:
        return len(self.values)

    def interval_of(self, t):
        """Index ``i`` with ``knots[i] <= t < knots[i+1]`` (t = 1 maps to the last interval)."""
        idx = np.searchsorted(self.knots, t, side="right") - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def __call__(self, t):
        return self.values[self.interval_of(t)]

    def weighted_l1(self, other: "GammaPath", mixture: Mixture) -> float:
        """``int_0^1 xi''(t) |gamma_1 - gamma_2| dt`` on the common refinement."""
        knots = np.union1d(self.knots, other.knots)
        mids = 0.5 * (knots[1:] + knots[:-1])
        diff = np.abs(self(mids) - other(mids))
        dxi = np.diff(mixture.xi_prime(knots))
        return float(np.sum(diff * dxi))

    def scaled(self, s: float) -> "GammaPath":
        return GammaPath(self.knots, self.values * s)


@dataclass(frozen=True)
class PdeGrid:
    """Symmetric uniform space grid and the times at which slices are kept."""

    x_max: float
    n_x: int = DEFAULT_NX
    eval_times: tuple = (0.0,)

    def __post_init__(self):
        if not self.x_max > 0:
            raise ValueError("x_max must be positive")
        if self.n_x < 3 or self.n_x % 2 == 0:
            raise ValueError("n_x must be odd and >= 3")
        times = tuple(sorted(set(float(t) for t in self.eval_times)))
        if any(t < 0 or t > 1 for t in times):
            raise ValueError("eval_times must lie in [0, 1]")
        object.__setattr__(self, "eval_times", times)

    @classmethod
    def default(cls, mixture: Mixture, eval_times: Sequence[float] = (0.0,), n_x: int = DEFAULT_NX):
        return cls(default_x_max(mixture), n_x, tuple(eval_times))

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / (self.n_x - 1)

    @property
    def x(self) -> np.ndarray:
        # mirrored so that x[-1 - i] == -x[i] exactly
        half = np.linspace(0.0, self.x_max, self.n_x // 2 + 1)
        return np.concatenate([-half[:0:-1], half])


def default_x_max(mixture: Mixture) -> float:
    return max(8.0, 6.0 * math.sqrt(mixture.xi_prime(1.0)))


@dataclass(frozen=True)
class ParisiSolution:
    """Slices of Phi, d_x Phi and d_x^2 Phi on a (time, x) grid."""

    grid: PdeGrid
    times: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    phi_xx: np.ndarray
    gamma: GammaPath
    mixture: Mixture
    _phi_xxx: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    def slice_index(self, t: float) -> int:
        """Index of the materialized time nearest to ``t``."""
        i = int(np.searchsorted(self.times, t))
        if i == 0:
            return 0
        if i >= len(self.times):
            return len(self.times) - 1
        return i if self.times[i] - t < t - self.times[i - 1] else i - 1

    def _interp(self, arr, t, x, left, right):
        k = self.slice_index(t)
        g = self.grid
        return _kernels.interp_linear(-g.x_max, g.dx, np.ascontiguousarray(arr[k]), np.asarray(x, float), left, right)

    def eval_phi(self, t, x):
        k = self.slice_index(t)
        x = np.asarray(x, dtype=float)
        inner = self._interp(self.phi, t, x, np.nan, np.nan)
        edge = self.phi[k, -1] + (np.abs(x) - self.grid.x_max)
        out = np.where(np.abs(x) > self.grid.x_max, edge, inner)
        return out if out.ndim else float(out)

    def eval_phi_x(self, t, x):
        out = self._interp(self.phi_x, t, x, -1.0, 1.0)
        return out if np.ndim(out) else float(out)

    def eval_phi_xx(self, t, x):
        out = self._interp(self.phi_xx, t, x, 0.0, 0.0)
        return out if np.ndim(out) else float(out)

    def phi_xxx_slice(self, k: int) -> np.ndarray:
        """Central-difference third derivative on slice ``k`` (cached)."""
        if k not in self._phi_xxx:
            self._phi_xxx[k] = np.gradient(self.phi_xx[k], self.grid.dx)
        return self._phi_xxx[k]

    def value_at_origin(self) -> float:
        """Phi(0, 0)."""
        return float(self.phi[0, self.grid.n_x // 2])

    def to_csv(self, path, times: Sequence[float] | None = None):
        ks = range(len(self.times)) if times is None else sorted({self.slice_index(t) for t in times})
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "phi", "phi_x", "phi_xx"])
            for k in ks:
                for x, p, px, pxx in zip(self.x, self.phi[k], self.phi_x[k], self.phi_xx[k]):
                    w.writerow([repr(float(self.times[k])), repr(float(x)), repr(float(p)),
                                repr(float(px)), repr(float(pxx))])


@lru_cache(maxsize=16)
def gh_rule(n: int):
    """Probabilists' Gauss-Hermite nodes and weights normalized to sum one."""
    y, w = np.polynomial.hermite_e.hermegauss(n)
    return np.ascontiguousarray(y), np.ascontiguousarray(w / w.sum())


def folded_abs_mean(x, sigma):
    """E|x + sigma*G| for standard normal G."""
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return np.abs(x)
    z = x / sigma
    return x * (2.0 * ndtr(z) - 1.0) + 2.0 * sigma * np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)


def closed_form_gamma_zero(mixture: Mixture, t, x):
    """Phi(t, x) for gamma = 0: E|x + sqrt(xi'(1) - xi'(t)) G|."""
    sigma = math.sqrt(max(mixture.xi_prime(1.0) - mixture.xi_prime(t), 0.0))
    out = folded_abs_mean(x, sigma)
    return out if np.ndim(out) else float(out)


def terminal_layer(x, sigma: float, a: float):
    """Closed-form slice at distance ``sigma**2`` (in xi') below the terminal time.

    Returns ``(phi, phi_x, phi_xx)`` for ``phi(x) = a^-1 log E exp(a|x + sigma G|)``
    (plain expectation when ``a`` is zero).
    """
    x = np.asarray(x, dtype=float)
    if sigma <= 0:
        return np.abs(x), np.sign(x), np.zeros_like(x)
    z = x / sigma
    gauss = np.exp(-0.5 * z * z) / (sigma * math.sqrt(2 * math.pi))
    if a <= GAMMA_ZERO_TOL:
        return folded_abs_mean(x, sigma), 2.0 * ndtr(z) - 1.0, 2.0 * gauss
    A = a * x + log_ndtr(z + a * sigma)
    B = -a * x + log_ndtr(-z + a * sigma)
    L = np.logaddexp(A, B)
    phi = 0.5 * a * sigma * sigma + L / a
    phi_x = np.tanh(0.5 * (A - B))
    p0 = np.exp(-0.5 * z * z - 0.5 * (a * sigma) ** 2 - L) / (sigma * math.sqrt(2 * math.pi))
    phi_xx = 2.0 * p0 + a * (1.0 - phi_x * phi_x)
    return phi, phi_x, phi_xx


def solve_parisi(mixture: Mixture, gamma: GammaPath, grid: PdeGrid, *,
                 gh_nodes: int = DEFAULT_GH_NODES,
                 max_step_sigma: float = DEFAULT_MAX_STEP_SIGMA) -> ParisiSolution:
    """Backward Cole-Hopf recursion from ``Phi(1, x) = |x|``.

    Slices are materialized at ``grid.eval_times``, at every knot of
    ``gamma``, and at extra interior times wherever one quadrature step would
    smooth by more than ``max_step_sigma``.

    Raises:
        GridError: if ``grid.x_max < 6 sqrt(xi'(1))``.
    """
    need = 6.0 * math.sqrt(mixture.xi_prime(1.0))
    if grid.x_max < need - 1e-12:
        raise GridError(f"x_max={grid.x_max:g} is below 6*sqrt(xi'(1))={need:.4g}")
    times = _slice_times(mixture, gamma, grid, max_step_sigma)
    nx = grid.n_x
    mid = nx // 2
    x = grid.x
    xt = np.ascontiguousarray(x[mid:])
    nodes, weights = gh_rule(gh_nodes)
    nt = len(times)
    phi = np.empty((nt, nx))
    phi_x = np.empty((nt, nx))
    phi_xx = np.empty((nt, nx))
    xi1 = mixture.xi_prime(1.0)
    last = gamma.n_intervals - 1

    def store(k, p, px, pxx):
        phi[k, mid:] = p
        phi[k, :mid] = p[:0:-1]
        phi_x[k, mid:] = px
        phi_x[k, :mid] = -px[:0:-1]
        phi_x[k, mid] = 0.0
        phi_xx[k, mid:] = pxx
        phi_xx[k, :mid] = pxx[:0:-1]

    store(nt - 1, *terminal_layer(xt, 0.0, 0.0))
    for k in range(nt - 2, -1, -1):
        t = times[k]
        i = int(gamma.interval_of(t))
        a = float(gamma.values[i])
        a = 0.0 if a < GAMMA_ZERO_TOL else a
        if i == last:
            sigma = math.sqrt(max(xi1 - mixture.xi_prime(t), 0.0))
            store(k, *terminal_layer(xt, sigma, a))
            continue
        t_next = times[k + 1]
        sigma = math.sqrt(max(mixture.xi_prime(t_next) - mixture.xi_prime(t), 0.0))
        out = _kernels.convolve_slice(-grid.x_max, grid.dx, phi[k + 1], phi_x[k + 1], phi_xx[k + 1],
                                      xt, sigma, a, nodes, weights)
        store(k, *out)
    return ParisiSolution(grid, times, phi, phi_x, phi_xx, gamma, mixture)


def _slice_times(mixture, gamma, grid, max_step_sigma):
    base = np.union1d(np.asarray(grid.eval_times, float), gamma.knots)
    base = np.union1d(base, [0.0, 1.0])
    out = [base[0]]
    t_last = gamma.knots[-2]
    for lo, hi in zip(base[:-1], base[1:]):
        if lo < t_last:
            var = mixture.xi_prime(hi) - mixture.xi_prime(lo)
            n_sub = int(math.ceil(var / max_step_sigma ** 2))
            if n_sub > 1:
                # equal steps in xi' keep every quadrature width the same
                targets = np.linspace(mixture.xi_prime(lo), mixture.xi_prime(hi), n_sub + 1)[1:-1]
                out.extend(_invert_xi_prime(mixture, targets, lo, hi))
        out.append(hi)
    return np.unique(np.asarray(out))


def _invert_xi_prime(mixture, targets, lo, hi):
    from scipy.optimize import brentq

    return [brentq(lambda s, v=v: mixture.xi_prime(s) - v, lo, hi, xtol=1e-14) for v in targets]
