"""Parisi functional over nonnegative step functions: value, gradient, minimization.

The order parameter is not required to be monotone; the descent only projects
onto ``gamma >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .dynamics import ParisiDrive, SdePaths, propagate_density, stream_sde
from .mixture import Mixture
from .parisi import GammaPath, ParisiSolution, PdeGrid, solve_parisi

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_EPS_T = 0.01
DEFAULT_N_KNOTS = 40
# largest Euler step for the Monte Carlo gradient; coarser steps bias it visibly
DEFAULT_MC_DT = 0.0025
DEFAULT_DENSITY_SUBSTEPS = 4


def correction_term(m: Mixture, g: GammaPath) -> float:
    """``1/2 int_0^1 t xi''(t) gamma(t) dt``, exact for step functions."""
    return 0.5 * sum(a * m.int_t_xi_second(lo, hi) for a, lo, hi in zip(g.values, g.knots[:-1], g.knots[1:]))


def _grid_for(m: Mixture, grid: PdeGrid | None, times=(0.0,)) -> PdeGrid:
    if grid is None:
        return PdeGrid.default(m, times)
    merged = tuple(sorted(set(grid.eval_times) | {float(t) for t in times}))
    return PdeGrid(grid.x_max, grid.n_x, merged)


def parisi_functional(m: Mixture, g: GammaPath, grid: PdeGrid | None = None, sol: ParisiSolution | None = None) -> float:
    """P(gamma) = Phi(0, 0) - 1/2 int t xi'' gamma."""
    if sol is None:
        sol = solve_parisi(m, g, _grid_for(m, grid))
    return sol.value_at_origin() - correction_term(m, g)


def gradient_times(g: GammaPath, n_sub: int | None = None, dt_max: float | None = None) -> np.ndarray:
    """Time grid containing every knot, each interval split into equal substeps.

    Either a fixed ``n_sub`` per interval or the smallest count keeping steps
    at most ``dt_max``.
    """
    ts = [0.0]
    for lo, hi in zip(g.knots[:-1], g.knots[1:]):
        k = n_sub if n_sub is not None else max(1, int(math.ceil((hi - lo) / dt_max - 1e-9)))
        ts.extend(np.linspace(lo, hi, k + 1)[1:])
    return np.array(ts)


def interval_integrals(g: GammaPath, times: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Trapezoid integral of ``f`` over each knot interval."""
    out = np.empty(g.n_intervals)
    for i, (lo, hi) in enumerate(zip(g.knots[:-1], g.knots[1:])):
        sel = (times >= lo - 1e-12) & (times <= hi + 1e-12)
        out[i] = _trapezoid(f[sel], times[sel])
    return out


def stationarity_moments(sol: ParisiSolution, times, method: str = "density", n_paths: int = 100_000,
                         seed: int = 0, paths: SdePaths | None = None) -> np.ndarray:
    """``E[d_x Phi(t, X_t)^2]`` at every time, by exact density or by Monte Carlo."""
    times = np.asarray(times, dtype=float)
    if paths is not None:
        times = paths.times
        return np.array([np.mean(sol.eval_phi_x(t, paths.x[:, k]) ** 2) for k, t in enumerate(times)])
    if method == "density":
        dens = propagate_density(sol, times)
        ks = [sol.slice_index(t) for t in times]
        return dens.expect(sol.phi_x[ks] ** 2)
    if method == "mc":
        out = np.zeros(len(times))

        def observe(k, x):
            out[k] = np.mean(sol.eval_phi_x(times[k], x) ** 2)

        stream_sde(sol.mixture, ParisiDrive(sol), times, n_paths, seed, observe)
        return out
    raise ValueError(f"unknown method {method!r}")


def parisi_gradient(m: Mixture, g: GammaPath, grid: PdeGrid | None = None, paths: SdePaths | None = None, *,
                    method: str = "mc", n_paths: int = 100_000, seed: int = 0,
                    dt_max: float = DEFAULT_MC_DT, n_sub: int | None = None,
                    return_profile: bool = False):
    """Derivative of P along each knot-interval indicator.

    ``component_i = 1/2 int_{I_i} xi''(t) (E[d_x Phi(t, X_t)^2] - t) dt``.
    With ``paths`` given (simulated under the drive of ``(m, g)`` on a grid
    containing the knots) those paths are used directly.
    """
    if paths is not None:
        times = paths.times
    elif n_sub is not None:
        times = gradient_times(g, n_sub=n_sub)
    else:
        times = gradient_times(g, dt_max=dt_max)
    sol = solve_parisi(m, g, _grid_for(m, grid, times))
    e = stationarity_moments(sol, times, method, n_paths, seed, paths)
    comp = 0.5 * interval_integrals(g, times, m.xi_second(times) * (e - times))
    if return_profile:
        return comp, times, e, sol
    return comp


@dataclass(frozen=True)
class VariationalOptions:
    eps_t: float = DEFAULT_EPS_T
    init_value: float = 0.5
    tol: float = 1e-4
    max_iter: int = 400
    gradient: str = "density"
    n_sub: int = DEFAULT_DENSITY_SUBSTEPS
    n_paths: int = 100_000
    seed: int = 0
    step_init: float | None = None
    step_bounds: tuple = (0.25, 1000.0)
    monotone_tol: float = 0.1
    support_tol: float = 1e-6


@dataclass(frozen=True)
class VariationalReport:
    gamma_star: GammaPath
    value: float
    stationarity_profile: list
    gradient_norm: float
    iterations: list
    converged: bool
    knot_values: np.ndarray
    support_fraction: float
    nondecreasing: bool
    max_decrease: float
    max_stationarity_gap: float
    options: VariationalOptions = field(default_factory=VariationalOptions)

    def to_dict(self) -> dict:
        return dict(
            value=self.value,
            converged=self.converged,
            gradient_norm=self.gradient_norm,
            n_iterations=len(self.iterations),
            support_fraction=self.support_fraction,
            nondecreasing=self.nondecreasing,
            max_decrease=self.max_decrease,
            max_stationarity_gap=self.max_stationarity_gap,
            knots=self.gamma_star.knots.tolist(),
            gamma=self.gamma_star.values.tolist(),
            stationarity_profile=[[t, d] for t, d in self.stationarity_profile],
        )


def _evaluate(m: Mixture, vals: np.ndarray, opts: VariationalOptions):
    g = GammaPath.on_uniform_knots(vals, opts.eps_t)
    method = "density" if opts.gradient == "density" else "mc"
    if method == "mc":
        comp, ts, e, sol = parisi_gradient(m, g, method="mc", n_paths=opts.n_paths, seed=opts.seed,
                                           return_profile=True)
    else:
        comp, ts, e, sol = parisi_gradient(m, g, method="density", n_sub=opts.n_sub, return_profile=True)
    value = parisi_functional(m, g, sol=sol)
    if opts.eps_t > 0:
        # the tail interval shares the last free value
        comp[-2] += comp[-1]
        comp = comp[:-1]
    return value, comp, ts, e, g


def minimize_parisi(m: Mixture, n_knots: int = DEFAULT_N_KNOTS, opts: VariationalOptions | None = None,
                    init=None, callback=None) -> VariationalReport:
    """Projected gradient descent on the knot values with projection ``max(., 0)``.

    Step lengths follow the Barzilai-Borwein rule (clipped to ``step_bounds``
    in units of ``1/xi''(1)``) with backtracking whenever P increases.
    Convergence is declared when every projected, per-unit-time gradient
    entry, divided by ``xi''/2``, is below ``tol``.
    """
    opts = opts or VariationalOptions()
    if n_knots < 2:
        raise ValueError("n_knots must be >= 2")
    if opts.gradient not in ("density", "mc"):
        raise ValueError("gradient must be 'density' or 'mc'")
    inner = np.linspace(0.0, 1.0 - opts.eps_t, n_knots + 1)
    width = np.diff(inner)
    if opts.eps_t > 0:
        width = width.copy()
        width[-1] += opts.eps_t
    mids = 0.5 * (inner[1:] + inner[:-1])
    scale = 0.5 * np.maximum(m.xi_second(mids), 1e-12)
    x2 = m.xi_second(1.0)
    lo_step, hi_step = opts.step_bounds[0] / x2, opts.step_bounds[1] / x2
    step = opts.step_init if opts.step_init is not None else 0.5 / x2

    vals = np.full(n_knots, float(opts.init_value)) if init is None else np.maximum(np.asarray(init, float), 0.0)
    if len(vals) != n_knots:
        raise ValueError("init must have n_knots entries")
    value, comp, ts, e, g = _evaluate(m, vals, opts)
    log = []
    converged = False

    def projected(v, c):
        h = c / width / scale
        return np.where(v > 0, h, np.minimum(h, 0.0))

    pg = projected(vals, comp)
    for it in range(opts.max_iter):
        if np.max(np.abs(pg)) <= opts.tol:
            converged = True
            break
        direction = comp / width
        backtracks = 0
        while True:
            trial = np.maximum(vals - step * direction, 0.0)
            t_value, t_comp, t_ts, t_e, t_g = _evaluate(m, trial, opts)
            if t_value <= value + 1e-12 or backtracks >= 30:
                break
            step *= 0.5
            backtracks += 1
        s = trial - vals
        y = t_comp / width - direction
        sy = float(s @ y)
        vals, value, comp, ts, e, g = trial, t_value, t_comp, t_ts, t_e, t_g
        pg = projected(vals, comp)
        step = min(max(float(s @ s) / sy, lo_step), hi_step) if sy > 0 else hi_step
        entry = dict(iter=it, value=value, step=step, backtracks=backtracks,
                     proj_grad=float(np.max(np.abs(pg))))
        log.append(entry)
        if callback is not None:
            callback(entry)
        if backtracks >= 30:
            break
    else:
        converged = bool(np.max(np.abs(pg)) <= opts.tol)

    t_end = 1.0 - opts.eps_t
    on = (ts < t_end - 1e-12)
    gap = e - ts
    support = vals > opts.support_tol
    in_support = on & support[np.minimum((ts / (t_end / n_knots)).astype(int), n_knots - 1)]
    drops = np.maximum.accumulate(vals)[:-1] - vals[1:]
    max_drop = float(max(np.max(drops), 0.0))
    return VariationalReport(
        gamma_star=g,
        value=float(value),
        stationarity_profile=[(float(t), float(d)) for t, d in zip(ts, gap)],
        gradient_norm=float(np.max(np.abs(pg))),
        iterations=log,
        converged=converged,
        knot_values=vals.copy(),
        support_fraction=float(np.mean(support)),
        nondecreasing=max_drop <= opts.monotone_tol,
        max_decrease=max_drop,
        max_stationarity_gap=float(np.max(np.abs(gap[in_support]))) if np.any(in_support) else 0.0,
        options=opts,
    )


@dataclass(frozen=True)
class SphericalGamma:
    gamma: GammaPath
    value: float
    truncated: bool


def spherical_gamma(m: Mixture, n_knots: int = DEFAULT_N_KNOTS, eps_t: float = DEFAULT_EPS_T) -> SphericalGamma:
    """Closed-form minimizer ``gamma(t) = -d/dt xi''(t)^(-1/2)`` and value ``int_0^1 sqrt(xi'')``.

    Knot values are interval averages of gamma. When ``xi''(0) = 0`` the first
    average diverges; that interval then carries the value at its right end and
    ``truncated`` is set.
    """
    if n_knots < 1:
        raise ValueError("n_knots must be >= 1")
    inner = np.linspace(0.0, 1.0 - eps_t, n_knots + 1)
    knots = np.append(inner, 1.0) if eps_t > 0 else inner
    x2 = m.xi_second(knots)
    if np.any(x2[1:] <= 0):
        raise ValueError("xi'' must be positive on (0, 1]")
    inv = np.full_like(knots, np.inf)
    inv[x2 > 0] = 1.0 / np.sqrt(x2[x2 > 0])
    truncated = not x2[0] > 0
    vals = np.empty(len(knots) - 1)
    for i in range(len(vals)):
        if np.isfinite(inv[i]):
            vals[i] = (inv[i] - inv[i + 1]) / (knots[i + 1] - knots[i])
        else:
            t = knots[i + 1]
            vals[i] = 0.5 * m.xi_third(t) * m.xi_second(t) ** -1.5
    vals = np.maximum(vals, 0.0)
    value, _ = quad(lambda t: math.sqrt(max(m.xi_second(t), 0.0)), 0.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return SphericalGamma(GammaPath(knots, vals), float(value), truncated)


def nu_integral(m: Mixture, g: GammaPath) -> float:
    """``int_0^1 nu(s) ds`` with ``nu(t) = int_t^1 xi'' gamma``, summed interval by interval."""
    total = 0.0
    nu_right = 0.0
    for i in range(g.n_intervals - 1, -1, -1):
        lo, hi = g.knots[i], g.knots[i + 1]
        a = g.values[i]
        # on [lo, hi]: nu(t) = nu(hi) + a (xi'(hi) - xi'(t))
        total += a * ((hi - lo) * m.xi_prime(hi) - (m.xi(hi) - m.xi(lo))) + (hi - lo) * nu_right
        nu_right += a * (m.xi_prime(hi) - m.xi_prime(lo))
    return float(total)


def hjb_value_check(m: Mixture, g: GammaPath, sol: ParisiSolution | None = None) -> tuple[float, float]:
    """``(V(0,0), P(gamma))`` where ``V(0,0) = inf_x Phi(0,x) - 1/2 int nu``.

    The two agree analytically; this compares two independent code paths.
    """
    if sol is None:
        sol = solve_parisi(m, g, PdeGrid.default(m))
    k0 = sol.slice_index(0.0)
    v00 = float(np.min(sol.phi[k0])) - 0.5 * nu_integral(m, g)
    return v00, parisi_functional(m, g, sol=sol)
