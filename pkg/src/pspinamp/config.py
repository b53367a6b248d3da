"""Experiment configuration: INI-style sections with a fixed key schema."""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields

SCHEMA = {
    "model": {"mixture", "mode", "n"},
    "amp": {"delta", "t_star", "n_se_samples", "sensitivity"},
    "variational": {"n_knots", "eps_t", "tol", "max_iter", "gradient", "n_paths", "gamma_file"},
    "seeds": {"disorder", "se", "sde"},
    "grid": {"n_x", "x_max"},
    "output": {"dir"},
    "limits": {"byte_budget"},
}

ENV_OUTPUT_DIR = "PSPINAMP_OUTPUT_DIR"
ENV_THREADS = "PSPINAMP_THREADS"


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def parse_mixture(text: str) -> list[tuple[int, float]]:
    """``"2:1.0, 4:0.5"`` -> ``[(2, 1.0), (4, 0.5)]``."""
    pairs = []
    for item in text.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"mixture term {item!r} is not of the form degree:coefficient")
        k, c = item.split(":", 1)
        try:
            pairs.append((int(k), float(c)))
        except ValueError as exc:
            raise ConfigError(f"bad mixture term {item!r}") from exc
    if not pairs:
        raise ConfigError("empty mixture")
    return pairs


@dataclass(frozen=True)
class ExperimentConfig:
    mixture: tuple = ((2, 1.0),)
    mode: str = "ising"
    n: int = 2000
    delta: float = 0.02
    t_star: float | None = None
    n_se_samples: int = 100_000
    sensitivity: str = "pathwise"
    n_knots: int = 40
    eps_t: float = 0.01
    tol: float = 1e-4
    max_iter: int = 400
    gradient: str = "density"
    n_paths: int = 100_000
    gamma_file: str | None = None
    seed_disorder: int = 0
    seed_se: int = 1
    seed_sde: int = 2
    n_x: int = 2001
    x_max: float | None = None
    output_dir: str = "pspinamp_out"
    byte_budget: int = 4 * 1024**3

    @property
    def resolved_t_star(self) -> float:
        if self.t_star is not None:
            return self.t_star
        return 0.95 if self.mode == "ising" else 1.0 - self.delta

    def validate(self) -> "ExperimentConfig":
        from .mixture import Mixture

        try:
            Mixture.from_pairs(self.mixture)
        except ValueError as exc:
            raise ConfigError(f"mixture: {exc}") from exc
        checks = [
            (self.mode in ("ising", "spherical"), "mode must be ising or spherical"),
            (self.n >= 2, "n must be >= 2"),
            (0 < self.delta < 1, "delta must lie in (0, 1)"),
            (self.delta < self.resolved_t_star <= 1, "t_star must lie in (delta, 1]"),
            (self.n_se_samples >= 2, "n_se_samples must be >= 2"),
            (self.sensitivity in ("pathwise", "direct", "bump"), "sensitivity must be pathwise, direct or bump"),
            (self.n_knots >= 2, "n_knots must be >= 2"),
            (0 <= self.eps_t < 1, "eps_t must lie in [0, 1)"),
            (self.tol > 0, "tol must be positive"),
            (self.max_iter >= 1, "max_iter must be >= 1"),
            (self.gradient in ("density", "mc"), "gradient must be density or mc"),
            (self.n_paths >= 1, "n_paths must be >= 1"),
            (self.n_x >= 3 and self.n_x % 2 == 1, "n_x must be odd and >= 3"),
            (self.x_max is None or self.x_max > 0, "x_max must be positive"),
            (self.byte_budget > 0, "byte_budget must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mixture"] = [list(p) for p in self.mixture]
        d["t_star"] = self.resolved_t_star
        return d

    def content_hash(self) -> str:
        """sha256 over the canonical JSON of every resolved input (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        if self.gamma_file:
            with open(self.gamma_file, "rb") as fh:
                d["gamma_file_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def mixture_obj(self):
        from .mixture import Mixture

        return Mixture.from_pairs(self.mixture)


_KEYMAP = {
    ("model", "mixture"): ("mixture", lambda s: tuple(parse_mixture(s))),
    ("model", "mode"): ("mode", str.strip),
    ("model", "n"): ("n", int),
    ("amp", "delta"): ("delta", float),
    ("amp", "t_star"): ("t_star", float),
    ("amp", "n_se_samples"): ("n_se_samples", int),
    ("amp", "sensitivity"): ("sensitivity", str.strip),
    ("variational", "n_knots"): ("n_knots", int),
    ("variational", "eps_t"): ("eps_t", float),
    ("variational", "tol"): ("tol", float),
    ("variational", "max_iter"): ("max_iter", int),
    ("variational", "gradient"): ("gradient", str.strip),
    ("variational", "n_paths"): ("n_paths", int),
    ("variational", "gamma_file"): ("gamma_file", str.strip),
    ("seeds", "disorder"): ("seed_disorder", int),
    ("seeds", "se"): ("seed_se", int),
    ("seeds", "sde"): ("seed_sde", int),
    ("grid", "n_x"): ("n_x", int),
    ("grid", "x_max"): ("x_max", float),
    ("output", "dir"): ("output_dir", str.strip),
    ("limits", "byte_budget"): ("byte_budget", int),
}


def load_config(path=None, overrides: dict | None = None, env=None) -> ExperimentConfig:
    """Read an INI file, apply ``section.key=value`` overrides and environment overrides."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if path is not None:
        with open(path) as fh:
            parser.read_file(fh)
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        if not parser.has_section(sec):
            parser.add_section(sec)
        parser.set(sec, key, str(value))
    values = {}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            name, conv = _KEYMAP[(sec, key)]
            try:
                values[name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from exc
    if env.get(ENV_OUTPUT_DIR):
        values["output_dir"] = env[ENV_OUTPUT_DIR]
    known = {f.name for f in fields(ExperimentConfig)}
    assert set(values) <= known
    return ExperimentConfig(**values).validate()


def example_config() -> str:
    return """\
[model]
mixture = 2:1.0        # degree:coefficient pairs
mode = ising           # ising | spherical
n = 2000

[amp]
delta = 0.02
t_star = 0.95
n_se_samples = 100000
sensitivity = pathwise # pathwise | direct | bump

[variational]
n_knots = 40
eps_t = 0.01
tol = 1e-4
max_iter = 400
gradient = density     # density | mc

[seeds]
disorder = 0
se = 1
sde = 2

[grid]
n_x = 2001

[output]
dir = pspinamp_out
"""
