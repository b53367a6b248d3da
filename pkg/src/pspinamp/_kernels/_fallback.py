"""Pure numpy implementations of the hot kernels.

Each function here has a twin in ``_core.pyx`` with the same signature and
semantics; the package picks one at import time.
"""

import numpy as np


def interp_linear(x0, dx, vals, xq, left, right):
    """Linear interpolation on the uniform grid ``x0 + dx*i``.

    Queries left of the grid return ``left``, right of it ``right``.
    """
    vals = np.asarray(vals, dtype=float)
    xq = np.asarray(xq, dtype=float)
    n = vals.shape[0]
    u = (xq - x0) / dx
    idx = np.floor(u).astype(np.intp)
    inside = (idx >= 0) & (idx < n - 1)
    # the last grid point itself counts as inside
    at_end = u == n - 1
    j = np.clip(idx, 0, n - 2)
    s = u - j
    out = vals[j] * (1.0 - s) + vals[j + 1] * s
    out = np.where(at_end, vals[n - 1], out)
    out = np.where(inside | at_end, out, np.where(u < 0, left, right))
    return out


def _hermite(p0, p1, m0, m1, s, dx):
    s2 = s * s
    s3 = s2 * s
    return ((2 * s3 - 3 * s2 + 1) * p0 + (s3 - 2 * s2 + s) * dx * m0
            + (-2 * s3 + 3 * s2) * p1 + (s3 - s2) * dx * m1)


def _lookup(x0, dx, phi, phi_x, phi_xx, xq):
    n = phi.shape[0]
    x_end = x0 + dx * (n - 1)
    u = (xq - x0) / dx
    j = np.clip(np.floor(u).astype(np.intp), 0, n - 2)
    s = np.clip(u - j, 0.0, 1.0)
    p = _hermite(phi[j], phi[j + 1], phi_x[j], phi_x[j + 1], s, dx)
    px = _hermite(phi_x[j], phi_x[j + 1], phi_xx[j], phi_xx[j + 1], s, dx)
    pxx = phi_xx[j] * (1.0 - s) + phi_xx[j + 1] * s
    hi = xq > x_end
    lo = xq < x0
    p = np.where(hi, phi[-1] + (xq - x_end), p)
    p = np.where(lo, phi[0] + (x0 - xq), p)
    px = np.where(hi, 1.0, np.where(lo, -1.0, px))
    pxx = np.where(hi | lo, 0.0, pxx)
    return p, px, pxx


def convolve_slice(x0, dx, phi, phi_x, phi_xx, xt, sigma, a, nodes, weights):
    """One Cole-Hopf step: tilted Gaussian smoothing of a solution slice.

    Returns ``(phi, phi_x, phi_xx)`` at the targets ``xt`` where

        phi(x) = a^-1 log E exp(a * phi_prev(x + sigma*G))   (a > 0)
        phi(x) = E phi_prev(x + sigma*G)                     (a == 0)

    and the derivatives are tilted expectations of the previous slice's
    derivatives. ``nodes``/``weights`` must be a probabilists' Gauss-Hermite
    rule with weights summing to one.
    """
    phi = np.asarray(phi, dtype=float)
    xq = np.asarray(xt, dtype=float)[:, None] + sigma * np.asarray(nodes)[None, :]
    p, px, pxx = _lookup(x0, dx, phi, np.asarray(phi_x, float), np.asarray(phi_xx, float), xq)
    w = np.asarray(weights)[None, :]
    if a > 0.0:
        e = a * p
        mx = e.max(axis=1, keepdims=True)
        wt = w * np.exp(e - mx)
        S = wt.sum(axis=1, keepdims=True)
        wt = wt / S
        out = (mx[:, 0] + np.log(S[:, 0])) / a
        ox = (wt * px).sum(axis=1)
        oxx = (wt * pxx).sum(axis=1) + a * np.maximum((wt * px * px).sum(axis=1) - ox * ox, 0.0)
    else:
        out = (w * p).sum(axis=1)
        ox = (w * px).sum(axis=1)
        oxx = (w * pxx).sum(axis=1)
    return out, ox, oxx


def gray_code_enumerate(n, term_values, flip_ptr, flip_idx, record_all):
    """Enumerate all 2^n sign patterns in Gray-code order.

    ``term_values[s]`` holds the current value J_S * sigma^S of every
    monomial, starting from sigma = (+1, ..., +1). ``flip_idx[flip_ptr[i]:
    flip_ptr[i+1]]`` lists the monomials containing coordinate i. The array is
    updated in place.

    Returns ``(best_value, best_code, energies)`` where ``best_code`` is the
    bitmask of coordinates set to -1 and ``energies`` (length 2^n, indexed by
    step) is filled only when ``record_all``.
    """
    vals = np.array(term_values, dtype=float)
    h = float(vals.sum())
    best, best_code, code = h, 0, 0
    total = 1 << n
    energies = np.empty(total if record_all else 0)
    if record_all:
        energies[0] = h
    for step in range(1, total):
        i = (step & -step).bit_length() - 1
        sl = flip_idx[flip_ptr[i]:flip_ptr[i + 1]]
        h -= 2.0 * vals[sl].sum()
        vals[sl] = -vals[sl]
        code ^= 1 << i
        if record_all:
            energies[step] = h
        if h > best:
            best, best_code = h, code
    return best, best_code, energies
