"""State-evolution SDE dX = v dt + sqrt(xi'') dB, its martingale, and the energy functional."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mixture import Mixture
from .parisi import ParisiSolution

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class DriveFunctions:
    """Pair (u, v) of functions of ``(t, x)`` driving the SDE and the martingale.

    Subclasses override ``u``/``v`` and their x-derivatives. ``u_step`` is the
    weight applied to the noise increment over ``[t0, t1]``; by default it is
    the left-endpoint value ``u(t0, x)``.
    """

    name = "generic"

    def __init__(self, mixture: Mixture):
        self.mixture = mixture

    def u(self, t, x):
        raise NotImplementedError

    def v(self, t, x):
        raise NotImplementedError

    def du_dx(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def dv_dx(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def u_step(self, t0, t1, x):
        return self.u(t0, x)

    def xi2_u(self, t, x):
        """``xi''(t) * u(t, x)``, the integrand of the energy functional."""
        return self.mixture.xi_second(t) * self.u(t, x)

    def check(self, times, x_range=(-6.0, 6.0), n=401):
        """Sampled sup-norm and Lipschitz constants of u and v over ``times``.

        Returns a dict with keys ``u_sup, v_sup, u_lip, v_lip``.
        """
        xs = np.linspace(*x_range, n)
        out = dict(u_sup=0.0, v_sup=0.0, u_lip=0.0, v_lip=0.0)
        for t in times:
            if t <= 0:
                continue
            uu, vv = np.broadcast_to(self.u(t, xs), xs.shape), np.broadcast_to(self.v(t, xs), xs.shape)
            out["u_sup"] = max(out["u_sup"], float(np.max(np.abs(uu))))
            out["v_sup"] = max(out["v_sup"], float(np.max(np.abs(vv))))
            out["u_lip"] = max(out["u_lip"], float(np.max(np.abs(np.diff(uu)) / np.diff(xs))))
            out["v_lip"] = max(out["v_lip"], float(np.max(np.abs(np.diff(vv)) / np.diff(xs))))
        return out


class ParisiDrive(DriveFunctions):
    """u = d_x^2 Phi, v = xi'' gamma d_x Phi, read off a Parisi solution."""

    name = "parisi"

    def __init__(self, sol: ParisiSolution):
        super().__init__(sol.mixture)
        self.sol = sol

    def _coef(self, t):
        return self.mixture.xi_second(t) * float(self.sol.gamma(t))

    def u(self, t, x):
        return self.sol.eval_phi_xx(t, x)

    def v(self, t, x):
        return self._coef(t) * self.sol.eval_phi_x(t, x)

    def du_dx(self, t, x):
        from . import _kernels

        k = self.sol.slice_index(t)
        g = self.sol.grid
        return _kernels.interp_linear(-g.x_max, g.dx, self.sol.phi_xxx_slice(k), np.asarray(x, float), 0.0, 0.0)

    def dv_dx(self, t, x):
        return self._coef(t) * self.sol.eval_phi_xx(t, x)


class SphericalDrive(DriveFunctions):
    """u = xi''(t)^(-1/2), v = 0.

    The step weight is the exact integrated version
    ``sqrt((t1 - t0) / (xi'(t1) - xi'(t0)))`` so that ``E[M_t^2] = t`` holds on
    any time grid, including pure p-spin mixtures where ``xi''(0) = 0``.
    """

    name = "spherical"

    def u(self, t, x):
        x2 = self.mixture.xi_second(t)
        val = 1.0 / math.sqrt(x2) if x2 > 0 else math.inf
        return np.full_like(np.asarray(x, dtype=float), val)

    def v(self, t, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def u_step(self, t0, t1, x):
        dxi = self.mixture.xi_prime(t1) - self.mixture.xi_prime(t0)
        return np.full_like(np.asarray(x, dtype=float), math.sqrt((t1 - t0) / dxi))

    def xi2_u(self, t, x):
        return np.full_like(np.asarray(x, dtype=float), math.sqrt(max(self.mixture.xi_second(t), 0.0)))


class FunctionDrive(DriveFunctions):
    """Drive from plain callables; derivatives default to zero."""

    name = "function"

    def __init__(self, mixture, u: Callable, v: Callable, du_dx=None, dv_dx=None):
        super().__init__(mixture)
        self._u, self._v = u, v
        self._du = du_dx
        self._dv = dv_dx

    def u(self, t, x):
        return np.broadcast_to(self._u(t, np.asarray(x, float)), np.shape(x)).astype(float)

    def v(self, t, x):
        return np.broadcast_to(self._v(t, np.asarray(x, float)), np.shape(x)).astype(float)

    def du_dx(self, t, x):
        if self._du is None:
            return super().du_dx(t, x)
        return np.broadcast_to(self._du(t, np.asarray(x, float)), np.shape(x)).astype(float)

    def dv_dx(self, t, x):
        if self._dv is None:
            return super().dv_dx(t, x)
        return np.broadcast_to(self._dv(t, np.asarray(x, float)), np.shape(x)).astype(float)


@dataclass(frozen=True)
class SdePaths:
    """Simulated paths: ``x[p, k]`` is X at ``times[k]``; ``dz[p, k]`` the noise over step k."""

    times: np.ndarray
    x: np.ndarray
    dz: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]


def iamp_times(t_star: float, delta: float) -> np.ndarray:
    """{0, delta, ..., l* delta} with l* = floor(t*/delta)."""
    n = int(math.floor(t_star / delta + 1e-9))
    return np.arange(n + 1) * delta


def noise_increments(mixture: Mixture, times: np.ndarray, n_paths: int, rng: np.random.Generator):
    """Yield per-step integrated noise of variance xi'(t_{k+1}) - xi'(t_k)."""
    sd = np.sqrt(np.diff(mixture.xi_prime(np.asarray(times))))
    for s in sd:
        yield s * rng.standard_normal(n_paths)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def simulate_sde(mixture: Mixture, drive: DriveFunctions, t_star: float, delta: float,
                 n_paths: int, seed: int, times=None) -> SdePaths:
    """Euler scheme on ``{0, delta, ..., t*}`` (or an explicit ``times`` grid).

    The drift is evaluated at the left endpoint; the noise of each step has
    the exact integrated variance ``xi'(t_{k+1}) - xi'(t_k)``.
    """
    if times is None:
        if not 0 < delta <= t_star <= 1:
            raise ValueError("need 0 < delta <= t_star <= 1")
        times = iamp_times(t_star, delta)
    times = np.asarray(times, dtype=float)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    rng = make_rng(seed)
    x = np.zeros((n_paths, len(times)))
    dz = np.empty((n_paths, len(times) - 1))
    for k, inc in enumerate(noise_increments(mixture, times, n_paths, rng)):
        dt = times[k + 1] - times[k]
        x[:, k + 1] = x[:, k] + drive.v(times[k], x[:, k]) * dt + inc
        dz[:, k] = inc
    return SdePaths(times, x, dz)


def stream_sde(mixture: Mixture, drive: DriveFunctions, times, n_paths: int, seed: int,
               observe: Callable[[int, np.ndarray], None]) -> None:
    """Same scheme as ``simulate_sde`` without storing paths; calls ``observe(k, X_k)``."""
    times = np.asarray(times, dtype=float)
    rng = make_rng(seed)
    x = np.zeros(n_paths)
    observe(0, x)
    for k, inc in enumerate(noise_increments(mixture, times, n_paths, rng)):
        x = x + drive.v(times[k], x) * (times[k + 1] - times[k]) + inc
        observe(k + 1, x)


def martingale_paths(paths: SdePaths, drive: DriveFunctions) -> np.ndarray:
    """M at every path time: sum of ``u_step(t_k, t_{k+1}, X_k) * dz_k``."""
    t = paths.times
    M = np.zeros_like(paths.x)
    for k in range(len(t) - 1):
        M[:, k + 1] = M[:, k] + drive.u_step(t[k], t[k + 1], paths.x[:, k]) * paths.dz[:, k]
    return M


def energy_functional(mixture: Mixture, drive: DriveFunctions, paths: SdePaths, t_star: float | None = None) -> float:
    """Trapezoidal ``int_0^{t*} xi''(t) E[u(t, X_t)] dt`` over the path times."""
    t = paths.times
    if t_star is not None:
        keep = t <= t_star + 1e-12
        t = t[keep]
    vals = np.array([float(np.mean(drive.xi2_u(s, paths.x[:, k]))) for k, s in enumerate(t)])
    return float(_trapezoid(vals, t))


def path_summary(paths: SdePaths, M: np.ndarray | None = None):
    """Per-time means and variances of X (and M when given)."""
    rows = []
    for k, t in enumerate(paths.times):
        row = dict(t=float(t), mean_x=float(paths.x[:, k].mean()), var_x=float(paths.x[:, k].var()))
        if M is not None:
            row.update(mean_m=float(M[:, k].mean()), var_m=float(M[:, k].var()))
        rows.append(row)
    return rows


def write_path_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


@dataclass(frozen=True)
class DensityPath:
    """Law of X_t under the Parisi drive, as probability weights on the PDE grid.

    ``weights[k]`` sums to one and gives the mass of X at ``times[k]`` on the
    grid points ``x``.
    """

    times: np.ndarray
    x: np.ndarray
    weights: np.ndarray

    def expect(self, values: np.ndarray) -> np.ndarray:
        """``E f(X_t)`` for every time, given ``values[k] = f(t_k, x)`` on the grid."""
        return np.einsum("kj,kj->k", self.weights, values)


def propagate_density(sol: ParisiSolution, times) -> DensityPath:
    """Exact transition of X under ``v = xi'' gamma d_x Phi``, without Monte Carlo.

    On an interval where gamma equals ``a``, X is the Doob h-transform of the
    driftless diffusion by ``h = exp(a Phi)``, so
    ``rho(t1, .) = exp(a Phi(t1, .)) * [(rho(t0, .) exp(-a Phi(t0, .))) conv N(0, xi'(t1) - xi'(t0))]``.
    Each step is done in the log domain and renormalized. ``times`` must start at
    0; knots of gamma inside the range are added internally, and every time used
    must be a materialized slice of ``sol``.
    """
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase strictly")
    g = sol.gamma
    knots = g.knots[(g.knots > 0) & (g.knots < times[-1])]
    steps = np.union1d(times, knots)
    idx = []
    for t in steps:
        k = sol.slice_index(t)
        if abs(sol.times[k] - t) > 1e-12:
            raise ValueError(f"time {t} is not a slice of the Parisi solution")
        idx.append(k)
    x = sol.x
    dx = sol.grid.dx
    mix = sol.mixture
    mid = len(x) // 2
    out = np.zeros((len(times), len(x)))
    out[0, mid] = 1.0
    want = {float(t): i for i, t in enumerate(times)}
    log_r = None
    for s in range(len(steps) - 1):
        t0, t1 = steps[s], steps[s + 1]
        k0, k1 = idx[s], idx[s + 1]
        a = float(g(t0))
        sig = math.sqrt(mix.xi_prime(t1) - mix.xi_prime(t0))
        if log_r is None:
            lr = -0.5 * (x / sig) ** 2 + a * (sol.phi[k1] - sol.phi[k0, mid])
        else:
            f = log_r - a * sol.phi[k0]
            shift = f.max()
            half = min(int(math.ceil(8.0 * sig / dx)), (len(x) - 1) // 2)
            ker = np.exp(-0.5 * (np.arange(-half, half + 1) * dx / sig) ** 2)
            conv = np.convolve(np.exp(f - shift), ker, mode="same")
            with np.errstate(divide="ignore"):
                lr = np.log(conv) + shift + a * sol.phi[k1]
        r = np.exp(lr - lr.max())
        r /= r.sum()
        with np.errstate(divide="ignore"):
            log_r = np.log(r)
        if float(t1) in want:
            out[want[float(t1)]] = r
    return DensityPath(times, x, out)
