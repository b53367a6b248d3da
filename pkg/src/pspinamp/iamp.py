"""Incremental approximate message passing with Onsager memory terms.

Every coordinate follows the discrete recursions

    x^{j+1} = x^j + v(j delta, x^j) delta + (z^{j+1} - z^j),    x^0 = 0
    m^{l}   = sqrt(delta) + sum_{j<l} u_j(x^j) (z^{j+1} - z^j)

and the z iterates are produced by the tensor gradient at m^l minus the
Onsager correction. The coefficients of that correction are estimated once
from disorder-free state-evolution samples (``calibrate``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DriveFunctions, make_rng
from .hamiltonian import DisorderSample, grad_and_energy
from .mixture import Mixture

SE_STREAM = 7


class CalibrationError(ArithmeticError):
    """State-evolution calibration produced non-finite or degenerate values."""


class IampNumericError(ArithmeticError):
    """The message passing iterates overflowed."""

    def __init__(self, iteration: int, msg: str = "non-finite iterate"):
        super().__init__(f"{msg} at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class IampConfig:
    delta: float = 0.02
    t_star: float = 0.95
    n_se_samples: int = 100_000
    seed: int = 0
    sensitivity: str = "pathwise"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.delta < self.t_star <= 1:
            raise ValueError("t_star must lie in (delta, 1]")
        if self.n_se_samples < 2:
            raise ValueError("n_se_samples must be >= 2")
        if self.sensitivity not in ("pathwise", "direct", "bump"):
            raise ValueError("sensitivity must be pathwise, direct or bump")

    @property
    def n_steps(self) -> int:
        """l* = floor(t*/delta)."""
        return int(math.floor(self.t_star / self.delta + 1e-9))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.delta


@dataclass(frozen=True)
class SECalibration:
    """State-evolution quantities for one (mixture, drive, config).

    ``onsager[l, j]`` multiplies ``m^{j-1}`` in the update producing
    ``z^{l+1}``; column 0 is zero because it multiplies ``f_{-1} = 0``.
    ``sensitivity[l, j]`` is ``E[d f_l / d z^j]``.
    """

    config: IampConfig
    increment_vars: np.ndarray      # Var(z^l - z^{l-1}), l = 1..l*
    sigma: np.ndarray               # Sigma_l, l = 0..l*-1 (Sigma_0 = 1 by convention)
    onsager: np.ndarray
    sensitivity: np.ndarray
    se_moments: np.ndarray          # E[m^l m^j]
    mean_u: np.ndarray              # E[u_l(X_l)] for the rescaled u
    mean_u_raw: np.ndarray          # E[u(l delta, X_l)]
    pred_energy: np.ndarray         # finite-delta SE energy after l steps
    continuum_energy: np.ndarray    # sum_{k<l} xi''(k delta) E[u(k delta, X_k)] delta
    z_samples: np.ndarray = field(repr=False)
    m_samples: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.config.n_steps


def _rescaled_u(drive: DriveFunctions, mixture: Mixture, j: int, delta: float, x: np.ndarray, sigma: float):
    if j == 0:
        return np.full_like(x, math.sqrt(delta / mixture.xi_prime(delta)))
    return drive.u(j * delta, x) / sigma


def _replay(mixture: Mixture, drive: DriveFunctions, dz: np.ndarray, delta: float, sigma: np.ndarray):
    """Run the x/m recursions on increments ``dz[:, l-1] = z^l - z^{l-1}``."""
    n, steps = dz.shape
    x = np.zeros((n, steps + 1))
    m = np.empty((n, steps + 1))
    m[:, 0] = math.sqrt(delta)
    for j in range(steps):
        u = _rescaled_u(drive, mixture, j, delta, x[:, j], sigma[j])
        m[:, j + 1] = m[:, j] + u * dz[:, j]
        x[:, j + 1] = x[:, j] + drive.v(j * delta, x[:, j]) * delta + dz[:, j]
    return x, m


def calibrate(m: Mixture, drive: DriveFunctions, cfg: IampConfig) -> SECalibration:
    """Monte Carlo state evolution, rescalings Sigma_l and Onsager coefficients."""
    delta = cfg.delta
    steps = cfg.n_steps
    n = cfg.n_se_samples
    times = cfg.times
    inc_var = np.diff(m.xi_prime(times))
    if np.any(inc_var <= 0):
        raise CalibrationError("xi' increments must be positive")
    rng = make_rng(cfg.seed, SE_STREAM)
    dz = rng.standard_normal((n, steps)) * np.sqrt(inc_var)

    x = np.zeros((n, steps + 1))
    mm = np.empty((n, steps + 1))
    mm[:, 0] = math.sqrt(delta)
    sigma = np.ones(steps)
    u_vals = np.empty((n, steps))
    du_vals = np.zeros((n, steps))
    dv_vals = np.zeros((n, steps))
    mean_u_raw = np.empty(steps)
    for j in range(steps):
        t = j * delta
        if j > 0:
            raw = np.asarray(drive.u(t, x[:, j]), dtype=float)
            sq = float(np.mean(raw * raw))
            s2 = (m.xi_prime(t + delta) - m.xi_prime(t)) / delta * sq
            if not (np.isfinite(s2) and s2 > 0):
                raise CalibrationError(f"Sigma^2 = {s2} at step {j}")
            sigma[j] = math.sqrt(s2)
            u_vals[:, j] = raw / sigma[j]
            du_vals[:, j] = np.asarray(drive.du_dx(t, x[:, j]), dtype=float) / sigma[j]
            mean_u_raw[j] = float(np.mean(raw))
        else:
            u_vals[:, 0] = math.sqrt(delta / m.xi_prime(delta))
            mean_u_raw[0] = float(np.mean(drive.u(0.0, x[:, 0])))
        dv_vals[:, j] = np.asarray(drive.dv_dx(t, x[:, j]), dtype=float)
        mm[:, j + 1] = mm[:, j] + u_vals[:, j] * dz[:, j]
        x[:, j + 1] = x[:, j] + drive.v(t, x[:, j]) * delta + dz[:, j]
    if not np.all(np.isfinite(mm)):
        raise CalibrationError("non-finite state-evolution samples")

    mean_u = u_vals.mean(axis=0)
    # sens[l, j] = E[d m^l / d z^j]; direct part first
    sens = np.zeros((steps + 1, steps + 1))
    for ell in range(1, steps + 1):
        for j in range(1, ell + 1):
            sens[ell, j] = mean_u[j - 1] - (mean_u[j] if j <= ell - 1 else 0.0)
    if cfg.sensitivity == "pathwise":
        sens += _indirect_sensitivities(u_vals, du_vals, dv_vals, dz, delta)
    elif cfg.sensitivity == "bump":
        sens = bump_sensitivities(m, drive, dz, delta, sigma)
    if not np.all(np.isfinite(sens)):
        raise CalibrationError("non-finite Onsager sensitivity")

    onsager = np.zeros((steps + 1, steps + 1))
    for ell in range(steps + 1):
        for j in range(1, ell + 1):
            onsager[ell, j] = m.xi_second(j * delta) * sens[ell, j]

    z = np.zeros((n, steps + 1))
    z[:, 1:] = np.cumsum(dz, axis=1)
    se_moments = (mm.T @ mm) / n
    pred = np.zeros(steps + 1)
    cont = np.zeros(steps + 1)
    for k in range(1, steps + 1):
        pred[k] = pred[k - 1] + float(np.mean(u_vals[:, k - 1] * dz[:, k - 1] ** 2))
        cont[k] = cont[k - 1] + m.xi_second((k - 1) * delta) * mean_u_raw[k - 1] * delta
    return SECalibration(cfg, inc_var, sigma, onsager, sens, se_moments, mean_u, mean_u_raw, pred, cont, z, mm)


def _indirect_sensitivities(u_vals, du_vals, dv_vals, dz, delta):
    """Mean of the terms of d m^l / d z^j that pass through x^k, k >= j.

    ``D`` holds d x^k / d z^j along every sample: 1 at k = j, then
    ``v'_j delta`` at k = j + 1, then multiplied by ``1 + v'_k delta``.
    """
    n, steps = dz.shape
    out = np.zeros((steps + 1, steps + 1))
    for j in range(1, steps):
        D = np.ones(n)
        acc = 0.0
        for k in range(j, steps):
            acc += float(np.mean(du_vals[:, k] * D * dz[:, k]))
            out[k + 1, j] = acc
            D = dv_vals[:, k] * delta if k == j else D * (1.0 + dv_vals[:, k] * delta)
    return out


def bump_sensitivities(m: Mixture, drive: DriveFunctions, dz: np.ndarray, delta: float, sigma: np.ndarray,
                       h: float | None = None) -> np.ndarray:
    """``E[d m^l / d z^j]`` by central differences in ``z^j`` with common noise."""
    n, steps = dz.shape
    h = 1e-4 * math.sqrt(delta) if h is None else h
    out = np.zeros((steps + 1, steps + 1))
    for j in range(1, steps + 1):
        plus = dz.copy()
        minus = dz.copy()
        # raising z^j moves increment j-1 up and increment j down
        plus[:, j - 1] += h
        minus[:, j - 1] -= h
        if j < steps:
            plus[:, j] -= h
            minus[:, j] += h
        _, mp = _replay(m, drive, plus, delta, sigma)
        _, mn = _replay(m, drive, minus, delta, sigma)
        out[:, j] = np.mean(mp - mn, axis=0) / (2 * h)
    return np.tril(out)


@dataclass
class IampRun:
    z: np.ndarray           # N x (l*+1)
    x: np.ndarray
    m: np.ndarray
    energy: np.ndarray      # H_N(m^l)/N
    norm_m: np.ndarray      # <m^l, m^l>_N
    se_norm: np.ndarray     # (l+1) delta
    se_pred_energy: np.ndarray
    max_abs_m: np.ndarray
    onsager_used: bool = True

    @property
    def final_m(self) -> np.ndarray:
        return self.m[:, -1]

    def diagnostics(self) -> list[dict]:
        return [dict(iter=int(i), norm_m=float(self.norm_m[i]), energy=float(self.energy[i]),
                     se_pred_energy=float(self.se_pred_energy[i]), max_abs_m=float(self.max_abs_m[i]))
                for i in range(len(self.energy))]

    def write_jsonl(self, path, extra: dict | None = None):
        with open(path, "w") as fh:
            for row in self.diagnostics():
                if extra:
                    row.update(extra)
                fh.write(json.dumps(row, sort_keys=True) + "\n")


def run_iamp(d: DisorderSample, drive: DriveFunctions, cal: SECalibration, cfg: IampConfig | None = None,
             onsager: bool = True, callback=None) -> IampRun:
    """AMP iterations up to l*, with ``onsager=False`` as a negative control."""
    cfg = cal.config if cfg is None else cfg
    if cfg != cal.config:
        raise ValueError("calibration was computed for a different configuration")
    if d.mixture != drive.mixture:
        raise ValueError("disorder mixture differs from the drive mixture")
    n = d.n
    delta = cfg.delta
    steps = cfg.n_steps
    z = np.zeros((n, steps + 1))
    x = np.zeros((n, steps + 1))
    mm = np.empty((n, steps + 1))
    mm[:, 0] = math.sqrt(delta)
    energy = np.empty(steps + 1)
    # overflow is detected below and reported with its iteration
    with np.errstate(over="ignore", invalid="ignore"):
        _iterate(d, drive, cal, z, x, mm, energy, onsager, callback)
    norm = np.mean(mm * mm, axis=0)
    return IampRun(z, x, mm, energy, norm, (np.arange(steps + 1) + 1) * delta, cal.pred_energy.copy(),
                   np.max(np.abs(mm), axis=0), onsager)


def _iterate(d, drive, cal, z, x, mm, energy, onsager, callback):
    delta = cal.config.delta
    steps = cal.n_steps
    for ell in range(steps + 1):
        g, energy[ell] = grad_and_energy(d, mm[:, ell])
        if callback is not None:
            callback(ell, mm[:, ell], energy[ell])
        if ell == steps:
            break
        if onsager and ell > 0:
            # columns j = 1..l multiply m^{j-1}
            g = g - mm[:, :ell] @ cal.onsager[ell, 1:ell + 1]
        z[:, ell + 1] = g
        inc = z[:, ell + 1] - z[:, ell]
        u = _rescaled_u(drive, d.mixture, ell, delta, x[:, ell], cal.sigma[ell])
        mm[:, ell + 1] = mm[:, ell] + u * inc
        x[:, ell + 1] = x[:, ell] + drive.v(ell * delta, x[:, ell]) * delta + inc
        if not (np.all(np.isfinite(mm[:, ell + 1])) and np.all(np.isfinite(x[:, ell + 1]))):
            raise IampNumericError(ell + 1)


def norm_law_deviation(run: IampRun) -> np.ndarray:
    """|<m^l, m^l>_N - (l+1) delta| for every l."""
    return np.abs(run.norm_m - run.se_norm)


@dataclass(frozen=True)
class SECheckResult:
    name: str
    empirical: float
    predicted: float
    stderr: float

    @property
    def z_score(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.empirical == self.predicted else math.inf
        return (self.empirical - self.predicted) / self.stderr


def default_test_functions(steps: int) -> dict:
    """Pseudo-Lipschitz test functions of the iterates.

    Each takes ``(z, m)`` arrays of shape (rows, l*+1) and returns one value per row.
    """
    fns = {"one": lambda z, m: np.ones(z.shape[0])}
    for ell in range(1, steps + 1, max(1, steps // 6)):
        fns[f"dz{ell}_sq"] = lambda z, m, ell=ell: (z[:, ell] - z[:, ell - 1]) ** 2
        fns[f"z{ell}_sq"] = lambda z, m, ell=ell: z[:, ell] ** 2
        fns[f"m{ell}_m{ell // 2}"] = lambda z, m, ell=ell: m[:, ell] * m[:, ell // 2]
        fns[f"abs_m{ell}"] = lambda z, m, ell=ell: np.abs(m[:, ell])
    return fns


def se_check(run: IampRun, cal: SECalibration, test_fns: dict | None = None) -> list[SECheckResult]:
    """Compare coordinate averages of test functions with their state-evolution values."""
    test_fns = default_test_functions(cal.n_steps) if test_fns is None else test_fns
    out = []
    n_run = run.z.shape[0]
    n_se = cal.z_samples.shape[0]
    for name, fn in test_fns.items():
        a = np.asarray(fn(run.z, run.m), dtype=float)
        b = np.asarray(fn(cal.z_samples, cal.m_samples), dtype=float)
        se = math.sqrt(a.var() / n_run + b.var() / n_se)
        out.append(SECheckResult(name, float(a.mean()), float(b.mean()), se))
    return out
