"""Reflection-coupled pairs and the contraction / moment experiments.

Two copies are driven by mixed noise: the first receives
lam * dB + pi * dBhat and the second lam * (I - 2 e e^T) dB + pi * dBhat,
where e is the unit vector along h = f_diff + gamma^-1 g_diff and
lam^2 + pi^2 = 1.  The blending lam is 1 on the reflection core
(|h| >= delta and Delta <= D) and 0 at coincidence or once Delta exceeds
D + delta, with C^2 smoothstep transitions; when the core is empty (D = 0,
i.e. dissipativity radius 0) the coupling is synchronous everywhere, which
is exactly the regime where the drift alone is globally contractive.

The contraction experiment tracks E[rho(t)] over independent pairs and fits
the tail decay rate; the theoretical rate c3 is reported as a reference
line, not asserted, since it is a lower-bound guarantee.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import IntegratorConfig, StepError, interaction_mean, _em_advance
from .measures import EmpiricalMeasure
from .model import ModelParams, PhaseState
from .rng import stream
from .theory import AuxFunction, TheoryConstants, delta_fn, rho_semimetric

MODES = ("frozen_vs_frozen", "meanfield_vs_frozen", "selfinteracting_vs_frozen")

# lane tags for the independent streams of one experiment
_LANE_OFFSETS = 0
_LANE_PAIRS = 1
_LANE_ENSEMBLE = 2


@dataclass(frozen=True)
class BlendingParams:
    """delta is the smoothing width of the noise blending (the analysis sends
    it to 0; simulation keeps it small and positive), d_threshold the size
    D of the reflection core."""

    delta: float
    d_threshold: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.d_threshold < 0:
            raise ValueError("d_threshold must be >= 0")


@dataclass(frozen=True)
class CouplingState:
    """The paired system; difference fields are derived on access."""

    first: PhaseState
    second: PhaseState
    gamma: float

    def __post_init__(self):
        if self.first.dim != self.second.dim:
            raise ValueError("paired states must share dimension")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")

    @property
    def f_diff(self) -> np.ndarray:
        return self.first.x - self.second.x

    @property
    def g_diff(self) -> np.ndarray:
        return self.first.v - self.second.v

    @property
    def h_diff(self) -> np.ndarray:
        return self.f_diff + self.g_diff / self.gamma

    @property
    def e_dir(self) -> np.ndarray:
        h = self.h_diff
        n = np.linalg.norm(h)
        return h / n if n > 0 else np.zeros_like(h)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


def _blend_arrays(p, tau, eps0, d_threshold, delta, f, g):
    """Vectorized blending over pairs; f, g of shape (n, d)."""
    h = f + g / p.gamma
    habs = np.linalg.norm(h, axis=-1)
    if d_threshold <= 0.0:
        lam = np.zeros_like(habs)
    else:
        dl = delta_fn(p, tau, f, g, eps0=eps0)
        lam = _smoothstep(habs / delta) * (1.0 - _smoothstep((dl - d_threshold) / delta))
    pi = np.sqrt(np.maximum(0.0, 1.0 - lam * lam))
    return lam, pi, h, habs


def blending(bp: BlendingParams, tc: TheoryConstants, p: ModelParams,
             f_diff, g_diff) -> tuple[float, float]:
    """Return (lambda, pi) at the given difference state."""
    f = np.asarray(f_diff, dtype=float)[None, :]
    g = np.asarray(g_diff, dtype=float)[None, :]
    lam, pi, _, _ = _blend_arrays(p, tc.tau, tc.eps0, bp.d_threshold, bp.delta, f, g)
    return float(lam[0]), float(pi[0])


def _coupled_advance(p, tau, eps0, bp, x1, v1, x2, v2, inter1, inter2,
                     dt, nb, nh):
    """One coupled EM step, vectorized over pairs.

    Blending and the reflection direction are evaluated at the pre-step
    difference state.  nb, nh are standard normal draws of shape (n, d).
    """
    lam, pi, h, habs = _blend_arrays(p, tau, eps0, bp.d_threshold, bp.delta,
                                     x1 - x2, v1 - v2)
    safe = np.where(habs > 0, habs, 1.0)
    e = np.where(habs[:, None] > 0, h / safe[:, None], 0.0)
    reflected = nb - 2.0 * e * np.einsum("nd,nd->n", e, nb)[:, None]
    noise1 = lam[:, None] * nb + pi[:, None] * nh
    noise2 = lam[:, None] * reflected + pi[:, None] * nh
    nx1, nv1 = _em_advance(p, x1, v1, inter1, dt, noise1)
    nx2, nv2 = _em_advance(p, x2, v2, inter2, dt, noise2)
    return nx1, nv1, nx2, nv2


def coupled_step(mode: str, p: ModelParams, cs: CouplingState, dt: float,
                 noise_b, noise_bhat, *, tc: TheoryConstants,
                 bp: BlendingParams, mu_x: EmpiricalMeasure,
                 first_measure: np.ndarray | None = None) -> CouplingState:
    """Advance one coupled pair.

    The second component always sees the frozen marginal ``mu_x``; the
    first sees ``mu_x`` in frozen_vs_frozen mode and otherwise the supplied
    ``first_measure`` sample (ensemble snapshot or stored past positions).
    """
    if mode not in MODES:
        raise ValueError(f"unknown coupling mode {mode!r}")
    if mode == "frozen_vs_frozen":
        pts1, w1 = mu_x.points, mu_x.weights
    else:
        if first_measure is None:
            raise ValueError(f"{mode} requires first_measure")
        pts1, w1 = np.asarray(first_measure, dtype=float), None
    x1 = cs.first.x[None, :]
    v1 = cs.first.v[None, :]
    x2 = cs.second.x[None, :]
    v2 = cs.second.v[None, :]
    inter1 = interaction_mean(p, x1, pts1, w1)
    inter2 = interaction_mean(p, x2, mu_x.points, mu_x.weights)
    nb = np.asarray(noise_b, dtype=float)[None, :]
    nh = np.asarray(noise_bhat, dtype=float)[None, :]
    nx1, nv1, nx2, nv2 = _coupled_advance(p, tc.tau, tc.eps0, bp, x1, v1,
                                          x2, v2, inter1, inter2, dt, nb, nh)
    if not (np.all(np.isfinite(nx1)) and np.all(np.isfinite(nv1))
            and np.all(np.isfinite(nx2)) and np.all(np.isfinite(nv2))):
        raise StepError("non-finite state in coupled step")
    return CouplingState(PhaseState(nx1[0], nv1[0]), PhaseState(nx2[0], nv2[0]),
                         p.gamma)


# ---------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ContractionReport:
    mode: str
    delta: float
    n_pairs: int
    times: np.ndarray
    mean_rho: np.ndarray
    stderr: np.ndarray
    fitted_rate: float
    rate_stderr: float
    r_squared: float
    c3_reference: float
    admissible: bool

    def to_csv(self) -> str:
        lines = ["t,mean_rho,stderr"]
        for t, r, s in zip(self.times, self.mean_rho, self.stderr):
            lines.append(f"{float(t)!r},{float(r)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"

    def summary_line(self) -> str:
        return (f"fitted_rate = {float(self.fitted_rate)!r}, "
                f"rate_stderr = {float(self.rate_stderr)!r}, "
                f"r_squared = {float(self.r_squared)!r}, "
                f"c3_reference = {float(self.c3_reference)!r}, "
                f"delta = {float(self.delta)!r}, "
                f"admissible = {self.admissible}")


def _fit_log_decay(times, values):
    """Least-squares slope of log(values) on the tail half (>= 8 points)."""
    n = len(times)
    start = min(n // 2, max(0, n - 8))
    t = np.asarray(times[start:], dtype=float)
    y = np.asarray(values[start:], dtype=float)
    keep = y > 0
    t, y = t[keep], np.log(y[keep])
    if t.size < 2:
        return float("nan"), float("nan"), float("nan")
    tm, ym = t.mean(), y.mean()
    sxx = float(np.sum((t - tm) ** 2))
    sxy = float(np.sum((t - tm) * (y - ym)))
    slope = sxy / sxx
    resid = y - (ym + slope * (t - tm))
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ym) ** 2))
    dof = max(t.size - 2, 1)
    stderr = math.sqrt(ssr / dof / sxx)
    r2 = 1.0 if sst == 0 else 1.0 - ssr / sst
    return slope, stderr, r2


def contraction_experiment(mode: str, p: ModelParams, tc: TheoryConstants,
                           bp: BlendingParams, n_pairs: int,
                           cfg: IntegratorConfig, *, aux: AuxFunction,
                           mu_x: EmpiricalMeasure,
                           initial_separation: float = 1.0,
                           base_scale: float = 0.0,
                           checkpoint_stride: int | None = None,
                           n_ensemble: int = 1024) -> ContractionReport:
    """Simulate n_pairs independent coupled pairs and fit the decay of
    E[rho(t)].

    Pairs start at phase-space separation ``initial_separation`` in a random
    direction from a base point with N(0, base_scale^2) coordinates.  In
    meanfield mode one auxiliary ensemble (size n_ensemble, pairs excluded)
    approximates the law of the first component and is advanced alongside;
    its size is recorded implicitly through the arguments.
    """
    if mode not in MODES:
        raise ValueError(f"unknown coupling mode {mode!r}")
    admissible = bool(p.l_int <= tc.l_int_threshold * (1.0 + 1e-12))
    if not admissible:
        warnings.warn("model violates the interaction-strength threshold; "
                      "contraction is not guaranteed", stacklevel=2)
    d = p.dim
    seed = cfg.rng_seed
    rng0 = stream(seed, _LANE_OFFSETS)
    base = base_scale * rng0.standard_normal((n_pairs, 2 * d)) if base_scale > 0 \
        else np.zeros((n_pairs, 2 * d))
    offs = rng0.standard_normal((n_pairs, 2 * d))
    offs *= initial_separation / np.linalg.norm(offs, axis=1, keepdims=True)
    x1 = base[:, :d] + offs[:, :d]
    v1 = base[:, d:] + offs[:, d:]
    x2 = base[:, :d].copy()
    v2 = base[:, d:].copy()

    stride = checkpoint_stride or max(1, cfg.n_steps // 200)
    check_steps = np.arange(0, cfg.n_steps + 1, stride)
    if check_steps[-1] != cfg.n_steps:
        check_steps = np.append(check_steps, cfg.n_steps)
    times = check_steps * cfg.dt
    mean_rho = np.empty(check_steps.size)
    se_rho = np.empty(check_steps.size)

    def record(i):
        rho = rho_semimetric(tc, aux, p, x1 - x2, v1 - v2)
        mean_rho[i] = rho.mean()
        se_rho[i] = rho.std(ddof=1) / math.sqrt(n_pairs) if n_pairs > 1 else 0.0

    record(0)
    gens = [stream(seed, _LANE_PAIRS, i) for i in range(n_pairs)]

    hist = None
    ens_x = ens_v = ens_gens = None
    if mode == "selfinteracting_vs_frozen":
        hist = [x1.copy()]  # list of (n_pairs, d) snapshots, thinned
    if mode == "meanfield_vs_frozen":
        ens_rng = stream(seed, _LANE_ENSEMBLE)
        ens_x = ens_rng.standard_normal((n_ensemble, d))
        ens_v = ens_rng.standard_normal((n_ensemble, d))
        ens_gens = [stream(seed, _LANE_ENSEMBLE, i + 1) for i in range(n_ensemble)]

    ci = 1
    chunk = 1024
    j = 0
    while j < cfg.n_steps:
        span = min(chunk, cfg.n_steps - j)
        noise = np.stack([g.standard_normal((span, 2, d)) for g in gens], axis=1)
        ens_noise = None
        if mode == "meanfield_vs_frozen":
            ens_noise = np.stack([g.standard_normal((span, d)) for g in ens_gens], axis=1)
        for s in range(span):
            if mode == "frozen_vs_frozen":
                inter1 = interaction_mean(p, x1, mu_x.points, mu_x.weights)
            elif mode == "meanfield_vs_frozen":
                inter1 = interaction_mean(p, x1, ens_x)
            else:
                stack = np.stack(hist, axis=1)  # (n_pairs, n_hist, d)
                vals = p.b_int(x1[:, None, :], stack)
                inter1 = vals.mean(axis=1)
            inter2 = interaction_mean(p, x2, mu_x.points, mu_x.weights)
            x1, v1, x2, v2 = _coupled_advance(
                p, tc.tau, tc.eps0, bp, x1, v1, x2, v2, inter1, inter2,
                cfg.dt, noise[s, :, 0], noise[s, :, 1])
            if mode == "meanfield_vs_frozen":
                ens_inter = interaction_mean(p, ens_x, ens_x)
                ens_x, ens_v = _em_advance(p, ens_x, ens_v, ens_inter,
                                           cfg.dt, ens_noise[s])
            j += 1
            if mode == "selfinteracting_vs_frozen" and j % cfg.history_stride == 0:
                hist.append(x1.copy())
            if ci < check_steps.size and j == check_steps[ci]:
                if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
                    raise StepError(f"non-finite state at step {j}")
                record(ci)
                ci += 1
    rate, rate_se, r2 = _fit_log_decay(times, mean_rho)
    return ContractionReport(
        mode=mode, delta=bp.delta, n_pairs=n_pairs, times=times,
        mean_rho=mean_rho, stderr=se_rho, fitted_rate=rate,
        rate_stderr=rate_se, r_squared=r2, c3_reference=tc.c3,
        admissible=admissible,
    )


@dataclass(frozen=True)
class MomentReport:
    times: np.ndarray
    second_moments: np.ndarray
    running_sup: np.ndarray
    growth_flag: bool

    def to_csv(self) -> str:
        lines = ["t,second_moment,running_sup"]
        for t, m, s in zip(self.times, self.second_moments, self.running_sup):
            lines.append(f"{float(t)!r},{float(m)!r},{float(s)!r}")
        return "\n".join(lines) + "\n"


def moment_experiment(p: ModelParams, cfg: IntegratorConfig,
                      mu_x: EmpiricalMeasure, *, n_paths: int = 256,
                      init_variance: float = 0.0,
                      initial: tuple | None = None,
                      noise_scale: float = 1.0,
                      checkpoint_stride: int | None = None) -> MomentReport:
    """Monte Carlo estimate of E[|Y_t|^2 + |U_t|^2] along frozen dynamics.

    Paths start at N(0, init_variance * I) coordinates, or at the explicit
    (x0, v0) arrays passed as ``initial``.  Flags unbounded growth when,
    past a burn-in of the first quarter of checkpoints, the sup over the
    final quarter exceeds twice the sup over the quarter right after
    burn-in.
    """
    d = p.dim
    seed = cfg.rng_seed
    if initial is not None:
        x = np.array(initial[0], dtype=float).reshape(n_paths, d)
        v = np.array(initial[1], dtype=float).reshape(n_paths, d)
    else:
        init_rng = stream(seed, _LANE_OFFSETS)
        scale = math.sqrt(init_variance) if init_variance > 0 else 0.0
        x = scale * init_rng.standard_normal((n_paths, d))
        v = scale * init_rng.standard_normal((n_paths, d))
    gens = [stream(seed, _LANE_PAIRS, i) for i in range(n_paths)]

    stride = checkpoint_stride or max(1, cfg.n_steps // 200)
    check_steps = np.arange(0, cfg.n_steps + 1, stride)
    if check_steps[-1] != cfg.n_steps:
        check_steps = np.append(check_steps, cfg.n_steps)
    moments = np.empty(check_steps.size)

    def second_moment():
        return float(np.mean(np.sum(x * x, axis=1) + np.sum(v * v, axis=1)))

    moments[0] = second_moment()
    ci = 1
    chunk = 2048
    j = 0
    while j < cfg.n_steps:
        span = min(chunk, cfg.n_steps - j)
        noise = np.stack([g.standard_normal((span, d)) for g in gens], axis=1)
        if noise_scale != 1.0:
            noise = noise * noise_scale
        for s in range(span):
            inter = interaction_mean(p, x, mu_x.points, mu_x.weights)
            x, v = _em_advance(p, x, v, inter, cfg.dt, noise[s])
            j += 1
            if ci < check_steps.size and j == check_steps[ci]:
                if not np.all(np.isfinite(x)):
                    raise StepError(f"non-finite state at step {j}")
                moments[ci] = second_moment()
                ci += 1
    sup = np.maximum.accumulate(moments)
    n = moments.size
    burn = n // 4
    rest = moments[burn:]
    q = max(1, rest.size // 4)
    early = float(rest[:q].max())
    late = float(rest[-q:].max())
    flag = late > 2.0 * early
    return MomentReport(times=check_steps * cfg.dt, second_moments=moments,
                        running_sup=sup, growth_flag=flag)
