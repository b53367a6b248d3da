"""Timing comparison of the compiled kernels against the numpy fallback."""

from __future__ import annotations

import time

import numpy as np

from . import _kernels
from .parisi import gh_rule, terminal_layer


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(n_x: int = 2001, n_query: int = 100_000, n_spins: int = 16):
    x_max = 12.0
    x = np.linspace(-x_max, x_max, n_x)
    dx = x[1] - x[0]
    phi, phi_x, phi_xx = terminal_layer(x, 0.3, 1.5)
    xt = np.ascontiguousarray(x[n_x // 2:])
    nodes, weights = gh_rule(61)
    xq = np.random.default_rng(0).normal(0, 2, n_query)
    rng = np.random.default_rng(1)
    n_terms = n_spins * (n_spins - 1) // 2
    terms = rng.standard_normal(n_terms)
    pairs = [(i, j) for i in range(n_spins) for j in range(i + 1, n_spins)]
    members = [[t for t, (i, j) in enumerate(pairs) if k in (i, j)] for k in range(n_spins)]
    ptr = np.zeros(n_spins + 1, dtype=np.intp)
    ptr[1:] = np.cumsum([len(m) for m in members])
    idx = np.ascontiguousarray(np.concatenate(members), dtype=np.intp)
    return {
        "convolve_slice": lambda k: k.convolve_slice(-x_max, dx, phi, phi_x, phi_xx, xt, 0.2, 1.5, nodes, weights),
        "interp_linear": lambda k: k.interp_linear(-x_max, dx, phi_x, xq, -1.0, 1.0),
        f"gray_code_enumerate(n={n_spins})": lambda k: k.gray_code_enumerate(n_spins, terms, ptr, idx, False),
    }


def run_benchmark(repeat: int = 3, quick: bool = False) -> list[dict]:
    """Best-of-``repeat`` wall time per kernel and backend."""
    cases = _cases(n_x=801 if quick else 2001, n_query=20_000 if quick else 100_000, n_spins=12 if quick else 16)
    backends = _kernels.backends()
    rows = []
    for name, case in cases.items():
        row = {"kernel": name}
        for bname, mod in backends.items():
            row[bname] = _time(lambda: case(mod), repeat)
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)
    return rows


def format_rows(rows: list[dict]) -> str:
    lines = [f"{'kernel':32s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>8s}"]
    for r in rows:
        cy = f"{r['cython']:12.5f}" if "cython" in r else f"{'n/a':>12s}"
        sp = f"{r['speedup']:8.1f}" if "speedup" in r else f"{'n/a':>8s}"
        lines.append(f"{r['kernel']:32s} {r['python']:12.5f} {cy} {sp}")
    return "\n".join(lines)
