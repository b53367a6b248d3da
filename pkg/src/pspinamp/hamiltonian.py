"""Gaussian disorder and the mixed p-spin Hamiltonian.

The symmetric tensors W^(k) = N^{-(k-1)/2} sum_pi (G^(k))^pi are never built;
only the asymmetric G^(k) are stored. With that normalization

    H_N(x) = sum_k c_k N^{-(k-1)/2} <G^(k), x^{(x)k}>

and the multilinear variant H~_N keeps only tuples of distinct indices.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mixture import Mixture

DEFAULT_BYTE_BUDGET = 4 * 1024**3
_MAGIC = b"PSPN"
_VERSION = 1
_FILL_CHUNK = 1 << 22


class BudgetError(MemoryError):
    """Requested disorder does not fit in the configured byte budget."""


def disorder_bytes(n: int, mixture: Mixture) -> int:
    return sum(8 * n**k for k in mixture.degrees)


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """One realization of the Gaussian tensors ``G^(k)`` for every degree in the mixture."""

    n: int
    mixture: Mixture
    seed: int
    tensors: dict

    def __post_init__(self):
        for k, g in self.tensors.items():
            if g.shape != (self.n,) * k:
                raise ValueError(f"G^({k}) has shape {g.shape}, expected {(self.n,) * k}")
            g.flags.writeable = False
        if set(self.tensors) != set(self.mixture.degrees):
            raise ValueError("tensor degrees do not match the mixture")

    def scale(self, k: int) -> float:
        return self.mixture.coeffs[k] * self.n ** (-(k - 1) / 2)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return x


def sample_disorder(n: int, mixture: Mixture, seed: int, byte_budget: int = DEFAULT_BYTE_BUDGET) -> DisorderSample:
    """Draw ``G^(k)`` with i.i.d. N(0,1) entries, one Philox stream per degree."""
    if n < 2:
        raise ValueError("n must be >= 2")
    need = disorder_bytes(n, mixture)
    if need > byte_budget:
        raise BudgetError(f"disorder needs {need} bytes, budget is {byte_budget}")
    tensors = {}
    for k in mixture.degrees:
        tensors[k] = _fill_gaussian(n**k, seed, k).reshape((n,) * k)
    return DisorderSample(n, mixture, int(seed), tensors)


def _fill_gaussian(size: int, seed: int, k: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(k)])))
    out = np.empty(size)
    for lo in range(0, size, _FILL_CHUNK):
        rng.standard_normal(out=out[lo:lo + _FILL_CHUNK])
    return out


def _full(g: np.ndarray, x: np.ndarray) -> float:
    n = x.shape[0]
    t = g.reshape(-1)
    while t.size > n:
        t = t.reshape(-1, n) @ x
    return float(t @ x)


def _slot_sum(g: np.ndarray, x: np.ndarray, with_full: bool = False):
    """sum over slots j of G contracted with x on every slot except j.

    With ``with_full`` also returns the complete contraction <G, x^(x)k>.
    """
    k = g.ndim
    n = g.shape[0]
    if k == 2:
        gx = g @ x
        out = gx + x @ g
        return (out, float(x @ gx)) if with_full else out
    # right[r]: G contracted on its last r slots, shape n^(k-r)
    right = [g.reshape(-1)]
    for _ in range(k - 1):
        right.append(right[-1].reshape(-1, n) @ x)
    out = right[k - 1].copy()  # slot 0 free
    for j in range(1, k):
        t = right[k - 1 - j] if j < k - 1 else g.reshape(-1)
        for _ in range(j):
            t = x @ t.reshape(n, -1)
        out += t
    if with_full:
        return out, float(right[k - 1] @ x)
    return out


def energy(d: DisorderSample, x) -> float:
    """H_N(x) / N."""
    x = d._check(x)
    return sum(d.scale(k) * _full(g, x) for k, g in d.tensors.items()) / d.n


def hamiltonian(d: DisorderSample, x) -> float:
    """H_N(x) (not normalized)."""
    return energy(d, x) * d.n


def grad(d: DisorderSample, x) -> np.ndarray:
    """Gradient of H_N at x: sum_p c_p W^(p){x}."""
    x = d._check(x)
    out = np.zeros(d.n)
    for k, g in d.tensors.items():
        out += d.scale(k) * _slot_sum(g, x)
    return out


def grad_and_energy(d: DisorderSample, x) -> tuple[np.ndarray, float]:
    """``(grad H_N(x), H_N(x)/N)`` sharing the tensor passes."""
    x = d._check(x)
    out = np.zeros(d.n)
    h = 0.0
    for k, g in d.tensors.items():
        s, full = _slot_sum(g, x, with_full=True)
        out += d.scale(k) * s
        h += d.scale(k) * full
    return out, h / d.n


@lru_cache(maxsize=8)
def _distinct_mask(n: int, r: int) -> np.ndarray:
    """Boolean array over [n]^r, true where all r indices differ."""
    idx = np.indices((n,) * r, sparse=True)
    mask = np.ones((n,) * r, dtype=bool)
    for a in range(r):
        for b in range(a + 1, r):
            mask &= idx[a] != idx[b]
    mask.flags.writeable = False
    return mask


def _distinct_contract(t: np.ndarray, y: np.ndarray) -> float:
    """sum over tuples of distinct indices of t[i1..ir] y_i1 ... y_ir."""
    r = t.ndim
    if r == 1:
        return float(t @ y)
    if r == 2:
        return float(y @ t @ y - np.sum(np.diagonal(t) * y * y))
    return _full(np.where(_distinct_mask(t.shape[0], r), t, 0.0), y)


def energy_multilinear(d: DisorderSample, x) -> float:
    """H~_N(x) / N: the energy with every sum restricted to distinct indices."""
    x = d._check(x)
    total = 0.0
    for k, g in d.tensors.items():
        if k == 2:
            s = _distinct_contract(g, x)
        else:
            s = 0.0
            y = x.copy()
            for i in range(d.n):
                if x[i] == 0.0:
                    continue
                y[i] = 0.0
                s += x[i] * _distinct_contract(g[i], y)
                y[i] = x[i]
        total += d.scale(k) * s
    return total / d.n


def partial_multilinear(d: DisorderSample, x, i: int) -> float:
    """Coefficient of x_i in H~_N(x), which does not depend on x_i.

    Note this is the unnormalized coefficient: H~_N = H~^(-i) + x_i * result.
    """
    x = d._check(x)
    if not 0 <= i < d.n:
        raise IndexError(f"coordinate {i} out of range for n={d.n}")
    y = x.copy()
    y[i] = 0.0
    total = 0.0
    for k, g in d.tensors.items():
        if k == 2:
            s = float((g[i, :] + g[:, i]) @ y)
        else:
            s = 0.0
            for slot in range(k):
                sl = g[(slice(None),) * slot + (i,)]
                s += _distinct_contract(sl, y)
        total += d.scale(k) * s
    return total


def opnorm_estimate(d: DisorderSample, k: int, iters: int = 200, seed: int = 0) -> float:
    """Lower estimate of ||W^(k)||_op = max over unit v of <W^(k), v^(x)k>.

    Shifted symmetric power iteration; the returned value is attained by an
    explicit unit vector, so it never exceeds the true norm.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    g = d.tensors[k]
    n = d.n
    if not np.any(g):
        return 0.0
    norm = n ** (-(k - 1) / 2)
    kfact = math.factorial(k)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    # shift above the typical spectral radius so the iteration climbs to the top
    shift = kfact * math.sqrt(k) * n ** (-(k - 2) / 2)
    best = -math.inf
    for _ in range(iters):
        w = norm * (kfact // k) * _slot_sum(g, v) + shift * v
        v = w / np.linalg.norm(w)
        best = max(best, kfact * norm * _full(g, v))
    return best


def save_disorder(d: DisorderSample, path) -> None:
    """Write the raw little-endian ``PSPN`` file."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, d.n))
        pairs = d.mixture.to_pairs()
        fh.write(struct.pack("<I", len(pairs)))
        for k, c in pairs:
            fh.write(struct.pack("<Id", k, c))
        fh.write(struct.pack("<Q", d.seed & (2**64 - 1)))
        for k in d.mixture.degrees:
            fh.write(np.ascontiguousarray(d.tensors[k], dtype="<f8").tobytes())


def load_disorder(path, byte_budget: int = DEFAULT_BYTE_BUDGET) -> DisorderSample:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a PSPN file")
        version, n = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported PSPN version {version}")
        (n_terms,) = struct.unpack("<I", fh.read(4))
        pairs = [struct.unpack("<Id", fh.read(12)) for _ in range(n_terms)]
        (seed,) = struct.unpack("<Q", fh.read(8))
        mixture = Mixture.from_pairs(pairs)
        if disorder_bytes(n, mixture) > byte_budget:
            raise BudgetError("stored disorder exceeds the byte budget")
        tensors = {}
        for k in mixture.degrees:
            buf = fh.read(8 * n**k)
            if len(buf) != 8 * n**k:
                raise ValueError("truncated PSPN file")
            tensors[k] = np.frombuffer(buf, dtype="<f8").astype(float).reshape((n,) * k)
        if fh.read(1):
            raise ValueError("trailing bytes in PSPN file")
    return DisorderSample(n, mixture, seed, tensors)


def from_tensors(mixture: Mixture, tensors: dict, seed: int = 0) -> DisorderSample:
    """Wrap caller-supplied ``G^(k)`` (fixtures, loaded data)."""
    tensors = {k: np.array(v, dtype=float) for k, v in tensors.items()}
    n = next(iter(tensors.values())).shape[0]
    return DisorderSample(n, mixture, seed, tensors)


@dataclass(frozen=True, eq=False)
class SpinConfig:
    """A point of the hypercube {-1, +1}^N."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1 or not np.all(np.abs(v) == 1):
            raise ValueError("spin configuration entries must be +1 or -1")
        v = v.astype(np.int8)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def as_float(self) -> np.ndarray:
        return self.values.astype(float)

    @classmethod
    def from_code(cls, n: int, code: int) -> "SpinConfig":
        """Bit i of ``code`` set means spin i is -1."""
        bits = (int(code) >> np.arange(n)) & 1
        return cls(1 - 2 * bits)
