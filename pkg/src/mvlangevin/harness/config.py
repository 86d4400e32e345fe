"""Experiment configuration: a typed INI schema with canonical round-trip.

The file format is stdlib configparser INI -- four sections, every key
typed and documented below.  Unknown sections or keys are hard errors, so a
config cannot silently misspell an option.

    [model]
    name            linear1d | generic
    k               interaction strength for the mean-attraction force
    dim             (generic) state dimension
    gamma           (generic) damping
    k_diag          (generic) comma-separated diagonal of K
    g               (generic) external nonlinearity: zero | contracting | saturating
    l_g             (generic) declared Lipschitz constant of g
    r_dissip        (generic) dissipativity radius

    [run]
    dt, n_steps, seed, n_particles, history_stride

    [experiment]
    kind            frozen | meanfield | selfinteracting | exactlinear
    n_paths
    checkpoints     geometric | linear | explicit comma-separated steps
    metric          w1_1d_marginals | w1_small | w1_sliced
    reference       gaussian_invariant | path to a sample file
    n_reference     reference sample size
    k_list          comma-separated interaction strengths (figure sweep)
    n_pairs         coupled pairs (contraction)
    delta           blending width (contraction)
    init_variance   initial coordinate variance (moments)

    [output]
    directory
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass

import numpy as np

from ..model import ModelParams, linear1d, mean_attraction, zero_force


class ConfigError(ValueError):
    pass


def _saturating(x):
    x = np.asarray(x, dtype=float)
    return -x / (1.0 + np.linalg.norm(x, axis=-1, keepdims=True))


def _contracting(x):
    return -np.asarray(x, dtype=float)


#: name -> (callable, default Lipschitz constant); all dissipative with R = 0
G_FORCES = {
    "zero": (zero_force, 0.0),
    "contracting": (_contracting, 1.0),
    "saturating": (_saturating, 1.0),
}


def _float_list(s: str) -> tuple:
    return tuple(float(tok) for tok in s.replace(",", " ").split())


def _fmt_float_list(v) -> str:
    return ", ".join(repr(float(x)) for x in v)


# key -> (section, parse, format, default)
_SCHEMA = {
    "model_name": ("model", "name", str, str, "linear1d"),
    "k": ("model", "k", float, repr, 0.0),
    "dim": ("model", "dim", int, repr, 1),
    "gamma": ("model", "gamma", float, repr, 3.0),
    "k_diag": ("model", "k_diag", _float_list, _fmt_float_list, (2.0,)),
    "g_name": ("model", "g", str, str, "zero"),
    "l_g": ("model", "l_g", float, repr, -1.0),
    "r_dissip": ("model", "r_dissip", float, repr, 0.0),
    "dt": ("run", "dt", float, repr, 1.0),
    "n_steps": ("run", "n_steps", int, repr, 100_000),
    "seed": ("run", "seed", int, repr, 7),
    "n_particles": ("run", "n_particles", int, repr, 0),
    "history_stride": ("run", "history_stride", int, repr, 1),
    "kind": ("experiment", "kind", str, str, "exactlinear"),
    "n_paths": ("experiment", "n_paths", int, repr, 16),
    "checkpoints": ("experiment", "checkpoints", str, str, "geometric"),
    "metric": ("experiment", "metric", str, str, "w1_1d_marginals"),
    "reference": ("experiment", "reference", str, str, "gaussian_invariant"),
    "n_reference": ("experiment", "n_reference", int, repr, 10_000),
    "k_list": ("experiment", "k_list", _float_list, _fmt_float_list,
               (0.4, 0.8, 1.2, 1.6, 2.0)),
    "n_pairs": ("experiment", "n_pairs", int, repr, 256),
    "delta": ("experiment", "delta", float, repr, 1e-3),
    "init_variance": ("experiment", "init_variance", float, repr, 0.0),
    "out_dir": ("output", "directory", str, str, "out"),
}

_SECTIONS = ("model", "run", "experiment", "output")
_VALID_KINDS = ("frozen", "meanfield", "selfinteracting", "exactlinear")
_VALID_METRICS = ("w1_1d_marginals", "w1_small", "w1_sliced")


@dataclass
class ExperimentConfig:
    model_name: str = "linear1d"
    k: float = 0.0
    dim: int = 1
    gamma: float = 3.0
    k_diag: tuple = (2.0,)
    g_name: str = "zero"
    l_g: float = -1.0        # negative: use the registry default
    r_dissip: float = 0.0
    dt: float = 1.0
    n_steps: int = 100_000
    seed: int = 7
    n_particles: int = 0
    history_stride: int = 1
    kind: str = "exactlinear"
    n_paths: int = 16
    checkpoints: str = "geometric"
    metric: str = "w1_1d_marginals"
    reference: str = "gaussian_invariant"
    n_reference: int = 10_000
    k_list: tuple = (0.4, 0.8, 1.2, 1.6, 2.0)
    n_pairs: int = 256
    delta: float = 1e-3
    init_variance: float = 0.0
    out_dir: str = "out"

    def __post_init__(self):
        if self.kind not in _VALID_KINDS:
            raise ConfigError(f"unknown dynamics kind {self.kind!r}")
        if self.metric not in _VALID_METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be >= 1")
        if self.checkpoints not in ("geometric", "linear"):
            steps = self.checkpoint_steps(None)
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise ConfigError("explicit checkpoints must be strictly increasing")

    def checkpoint_steps(self, n_steps: int | None = None):
        """Resolve the checkpoint schedule to explicit step counts."""
        n = self.n_steps if n_steps is None else n_steps
        if self.checkpoints == "geometric":
            return decade_grid(1, n)
        if self.checkpoints == "linear":
            pts = np.linspace(0, n, min(n, 20) + 1)[1:]
            return [int(t) for t in pts]
        try:
            steps = [int(tok) for tok in self.checkpoints.replace(",", " ").split()]
        except ValueError as e:
            raise ConfigError(f"bad checkpoints value {self.checkpoints!r}") from e
        return steps

    def build_model(self) -> ModelParams:
        if self.model_name == "linear1d":
            return linear1d(self.k)
        if self.model_name != "generic":
            raise ConfigError(f"unknown model name {self.model_name!r}")
        if self.g_name not in G_FORCES:
            raise ConfigError(f"unknown external force {self.g_name!r}")
        g, lg_default = G_FORCES[self.g_name]
        lg = self.l_g if self.l_g >= 0 else lg_default
        if len(self.k_diag) != self.dim:
            raise ConfigError("k_diag length must equal dim")
        return ModelParams(
            gamma=self.gamma, k_matrix=np.diag(self.k_diag), g=g,
            b_int=mean_attraction(self.k), l_g=lg, l_int=self.k,
            r_dissip=self.r_dissip,
        )

    def validate_files(self, base_dir: str = "."):
        if self.reference != "gaussian_invariant":
            path = os.path.join(base_dir, self.reference)
            if not os.path.exists(path):
                raise ConfigError(f"reference sample file not found: {path}")

    def kind_to_mode(self) -> str:
        """Coupled-pair mode matching the configured dynamics kind."""
        return {
            "frozen": "frozen_vs_frozen",
            "exactlinear": "frozen_vs_frozen",
            "meanfield": "meanfield_vs_frozen",
            "selfinteracting": "selfinteracting_vs_frozen",
        }[self.kind]


def decade_grid(lo: int, hi: int) -> list:
    """1-2-5 geometric checkpoint grid: 1, 2, 5, 10, 20, ... capped at hi."""
    out = []
    base = 1
    while base <= hi:
        for mult in (1, 2, 5):
            v = base * mult
            if lo <= v <= hi:
                out.append(v)
        base *= 10
    if not out or out[-1] != hi:
        out.append(hi)
    return out


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.optionxform = str  # case-sensitive keys
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    known = {}
    for name, (section, key, parse, _fmt, _default) in _SCHEMA.items():
        known.setdefault(section, {})[key] = (name, parse)
    values = {}
    for section in cp.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if key not in known[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            name, parse = known[section][key]
            raw = cp[section][key]
            try:
                values[name] = parse(raw)
            except (ValueError, TypeError) as e:
                raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from e
    return ExperimentConfig(**values)


def serialize_config(ec: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(ec)) == ec."""
    out = io.StringIO()
    for section in _SECTIONS:
        out.write(f"[{section}]\n")
        for name, (sec, key, _parse, fmt, _default) in _SCHEMA.items():
            if sec != section:
                continue
            out.write(f"{key} = {fmt(getattr(ec, name))}\n")
        out.write("\n")
    return out.getvalue()


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
