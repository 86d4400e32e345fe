"""Time integrators for the three dynamics and the exact linear recursion.

Three Euler-Maruyama steppers share one kernel and differ only in where the
interaction average comes from:

    frozen           a fixed sample of the invariant x-marginal
    meanfield        the current ensemble of particles (self included)
    selfinteracting  the trajectory's own stored past positions

For the built-in 1-d linear model (quadratic well, interaction k*y,
gamma = 3) the unit-step transition is available in closed form.  The
recursion as printed drives both coordinates with one shared scalar noise;
the genuine one-step Gaussian has the full 2x2 covariance given by the
Lyapunov integral of the linearization, which generally needs two
independent normals.  Both noise modes are implemented ("shared" and
"exact"); `linear1d_transition` exposes the signed discrepancy between the
shared-noise outer product and the exact covariance so reports can quote
it.  Use "exact" when sampling the invariant law matters and "shared" to
reproduce the reference decay figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .measures import EmpiricalMeasure, RunningMean, running_mean_update
from .model import ModelParams, PhaseState, Trajectory, external_force
from .rng import stream


class StepError(RuntimeError):
    """An integrator produced a non-finite state."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    n_steps: int
    rng_seed: int = 0
    n_particles: int = 0
    history_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.history_stride < 1:
            raise ValueError("history_stride must be >= 1")


# ---------------------------------------------------------------------------
# Euler-Maruyama kernel and the three steppers


def interaction_mean(p: ModelParams, x: np.ndarray, points: np.ndarray,
                     weights: np.ndarray | None = None) -> np.ndarray:
    """Weighted average of b_int(x, y) over sample points y.

    x may be batched (..., d); points is (m, d).
    """
    x = np.asarray(x, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    vals = p.b_int(x[..., None, :], points)
    if weights is None:
        return vals.mean(axis=-2)
    return np.einsum("...md,m->...d", vals, weights)


def _em_advance(p: ModelParams, xs, vs, inter, dt, noises):
    """One explicit step; xs, vs, inter, noises all broadcast as (..., d)."""
    new_x = xs + vs * dt
    new_v = vs + (external_force(p, xs) + inter - p.gamma * vs) * dt \
        + math.sqrt(2.0 * p.gamma * dt) * noises
    return new_x, new_v


def _check_finite(x, v, what: str):
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise StepError(f"non-finite state after {what}")


def em_step_frozen(p: ModelParams, s: PhaseState, mu_x: EmpiricalMeasure,
                   dt: float, noise: np.ndarray) -> PhaseState:
    """x' = x + v dt;  v' = v + (b_ext + avg_mu b_int(x,.) - gamma v) dt
    + sqrt(2 gamma dt) * noise."""
    inter = interaction_mean(p, s.x, mu_x.points, mu_x.weights)
    x, v = _em_advance(p, s.x, s.v, inter, dt, np.asarray(noise, dtype=float))
    _check_finite(x, v, "frozen step")
    return PhaseState(x, v)


def em_step_meanfield(p: ModelParams, ensemble: list[PhaseState],
                      dt: float, noises: np.ndarray) -> list[PhaseState]:
    """Advance every particle against the ensemble's empirical x-law
    (self-term included: it is O(1/N) and keeps the average unbiased)."""
    if len(ensemble) < 2:
        raise ValueError("mean-field step needs at least 2 particles")
    xs = np.stack([s.x for s in ensemble])
    vs = np.stack([s.v for s in ensemble])
    noises = np.asarray(noises, dtype=float).reshape(xs.shape)
    inter = interaction_mean(p, xs, xs)
    nx, nv = _em_advance(p, xs, vs, inter, dt, noises)
    _check_finite(nx, nv, "mean-field step")
    return [PhaseState(nx[i], nv[i]) for i in range(len(ensemble))]


def em_step_selfinteracting(p: ModelParams, s: PhaseState, history: np.ndarray,
                            dt: float, noise: np.ndarray) -> PhaseState:
    """Advance against the uniform average of the stored past positions."""
    history = np.asarray(history, dtype=float)
    if history.ndim == 1:
        history = history[:, None]
    if history.shape[0] < 1:
        raise ValueError("history must contain at least the initial position")
    inter = interaction_mean(p, s.x, history)
    x, v = _em_advance(p, s.x, s.v, inter, dt, np.asarray(noise, dtype=float))
    _check_finite(x, v, "self-interacting step")
    return PhaseState(x, v)


# ---------------------------------------------------------------------------
# exact unit-step transition of the built-in linear model


_E1 = math.exp(-1.0)
_E2 = math.exp(-2.0)
_E4 = math.exp(-4.0)

#: noiseless unit-step map; equals the matrix exponential of [[0,1],[-2,-3]]
LINEAR_MATRIX = np.array([
    [2.0 * _E1 - _E2, _E1 - _E2],
    [-2.0 * _E1 + 2.0 * _E2, -_E1 + 2.0 * _E2],
])

#: coefficients multiplying k*m in the unit-step update
LINEAR_DRIFT = np.array([0.5 - _E1 + 0.5 * _E2, _E1 - _E2])

#: shared-scalar-noise coefficients exactly as printed in the recursion
LINEAR_SHARED_NOISE = np.array([
    math.sqrt(3.0) * math.sqrt(1.0 - _E2) - math.sqrt(6.0) / 2.0 * math.sqrt(1.0 - _E4),
    -math.sqrt(3.0) * math.sqrt(1.0 - _E2) + math.sqrt(6.0) * math.sqrt(1.0 - _E4),
])

#: generator of the linearization and its diffusion matrix
LINEAR_GENERATOR = np.array([[0.0, 1.0], [-2.0, -3.0]])
LINEAR_DIFFUSION = np.array([[0.0, 0.0], [0.0, 6.0]])


@dataclass(frozen=True)
class Linear1dTransition:
    """Unit-step transition structure of the built-in linear model."""

    matrix: np.ndarray
    drift_coeffs: np.ndarray
    shared_noise_coeffs: np.ndarray
    exact_covariance: np.ndarray
    chol: np.ndarray
    shared_noise_discrepancy: np.ndarray


@lru_cache(maxsize=1)
def linear1d_transition() -> Linear1dTransition:
    """Compute the exact one-step noise covariance by the Lyapunov integral
    int_0^1 e^{A s} Sigma Sigma^T e^{A^T s} ds and compare it with the
    outer product of the shared-noise coefficients."""
    a = LINEAR_GENERATOR

    def integrand(s, i, j):
        e = expm(a * s)
        return (e @ LINEAR_DIFFUSION @ e.T)[i, j]

    q = np.empty((2, 2))
    for i in range(2):
        for j in range(i, 2):
            val, _ = quad(integrand, 0.0, 1.0, args=(i, j), epsabs=1e-13, epsrel=1e-13)
            q[i, j] = q[j, i] = val
    chol = np.linalg.cholesky(q)
    disc = np.outer(LINEAR_SHARED_NOISE, LINEAR_SHARED_NOISE) - q
    out = Linear1dTransition(
        matrix=LINEAR_MATRIX.copy(), drift_coeffs=LINEAR_DRIFT.copy(),
        shared_noise_coeffs=LINEAR_SHARED_NOISE.copy(),
        exact_covariance=q, chol=chol, shared_noise_discrepancy=disc,
    )
    # the record is cached and shared; make the arrays read-only
    for f in ("matrix", "drift_coeffs", "shared_noise_coeffs",
              "exact_covariance", "chol", "shared_noise_discrepancy"):
        getattr(out, f).setflags(write=False)
    return out


def exact_linear_step(k: float, z: float, w: float, m: float, xi: float):
    """Unit-step recursion of the built-in model, verbatim shared-noise form.

    z' = (2/e - 1/e^2) z + (1/e - 1/e^2) w + k m (1/2 - 1/e + 1/(2e^2)) + sigma_z xi
    w' = (-2/e + 2/e^2) z + (-1/e + 2/e^2) w + k m (1/e - 1/e^2) + sigma_w xi
    """
    zn = LINEAR_MATRIX[0, 0] * z + LINEAR_MATRIX[0, 1] * w \
        + k * m * LINEAR_DRIFT[0] + LINEAR_SHARED_NOISE[0] * xi
    wn = LINEAR_MATRIX[1, 0] * z + LINEAR_MATRIX[1, 1] * w \
        + k * m * LINEAR_DRIFT[1] + LINEAR_SHARED_NOISE[1] * xi
    return zn, wn


def exact_linear_step_exact_noise(k: float, z: float, w: float, m: float,
                                  xi_pair: np.ndarray):
    """Unit-step with the genuine Gaussian transition: noise is the Cholesky
    factor of the Lyapunov covariance applied to two independent normals."""
    t = linear1d_transition()
    noise = t.chol @ np.asarray(xi_pair, dtype=float)
    zn = t.matrix[0, 0] * z + t.matrix[0, 1] * w + k * m * t.drift_coeffs[0] + noise[0]
    wn = t.matrix[1, 0] * z + t.matrix[1, 1] * w + k * m * t.drift_coeffs[1] + noise[1]
    return zn, wn


# ---------------------------------------------------------------------------
# trajectory runner


@dataclass(frozen=True)
class RunResult:
    """Output of run_trajectory.

    ``trajectory`` is the path of the (first) particle; mean-field runs also
    carry every particle's path in ``trajectories``.  Self-averaging runs log
    |m_j| at the requested checkpoint steps.
    """

    trajectory: Trajectory
    trajectories: list | None = None
    checkpoint_steps: np.ndarray | None = None
    mean_norms: np.ndarray | None = None


KINDS = ("frozen", "meanfield", "selfinteracting", "exactlinear")


def run_trajectory(kind: str, p: ModelParams, cfg: IntegratorConfig, *,
                   mu_x: EmpiricalMeasure | None = None,
                   k: float | None = None,
                   noise_mode: str = "shared",
                   feedback: str = "selfavg",
                   frozen_mean: float = 0.0,
                   initial: PhaseState | list | None = None,
                   mean_checkpoints=(), store_stride: int = 1,
                   path_index: int = 0,
                   affine_interaction: bool = False) -> RunResult:
    """Integrate one path (or ensemble) of the requested dynamics.

    Bit-reproducible given (cfg.rng_seed, path_index): every path owns the
    counter-based stream (seed, path_index), so results are independent of
    batching or scheduling.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown dynamics kind {kind!r}; expected one of {KINDS}")
    if kind == "frozen" and mu_x is None:
        raise ValueError("frozen dynamics needs the frozen x-marginal sample mu_x")
    if kind == "exactlinear":
        if k is None:
            raise ValueError("exactlinear needs the interaction strength k")
        _require_linear1d(p, cfg)
        return _run_exact_linear(k, cfg, noise_mode, feedback, frozen_mean,
                                 initial, mean_checkpoints, store_stride, path_index)
    if kind == "meanfield":
        return _run_meanfield(p, cfg, initial, store_stride, path_index)
    return _run_single(kind, p, cfg, mu_x, initial, mean_checkpoints,
                       store_stride, path_index, affine_interaction)


def _require_linear1d(p: ModelParams, cfg: IntegratorConfig):
    if p.dim != 1 or p.gamma != 3.0 or not np.allclose(p.k_matrix, [[2.0]]):
        raise ValueError("the exact recursion is valid only for the built-in "
                         "linear 1-d model (gamma=3, K=2)")
    if cfg.dt != 1.0:
        raise ValueError("the exact recursion uses unit time steps (dt=1)")


def _store_plan(n_steps: int, stride: int):
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def _checkpoint_array(mean_checkpoints, n_steps: int) -> np.ndarray:
    arr = np.asarray(sorted(int(c) for c in mean_checkpoints), dtype=int)
    if arr.size and (arr[0] < 1 or arr[-1] > n_steps):
        raise ValueError("mean checkpoints must lie in [1, n_steps]")
    return arr


def _run_exact_linear(k, cfg, noise_mode, feedback, frozen_mean, initial,
                      mean_checkpoints, store_stride, path_index) -> RunResult:
    if noise_mode not in ("shared", "exact"):
        raise ValueError("noise_mode must be 'shared' or 'exact'")
    if feedback not in ("selfavg", "frozen"):
        raise ValueError("feedback must be 'selfavg' or 'frozen'")
    g = stream(cfg.rng_seed, path_index)
    if initial is None:
        z, w = 0.0, 0.0
    else:
        z, w = float(initial.x[0]), float(initial.v[0])
    width = 1 if noise_mode == "shared" else 2
    noise = g.standard_normal((cfg.n_steps, width))
    store = _store_plan(cfg.n_steps, store_stride)
    zs = np.empty(store.size)
    ws = np.empty(store.size)
    zs[0], ws[0] = z, w
    si = 1
    checkpoints = _checkpoint_array(mean_checkpoints, cfg.n_steps)
    mean_norms = np.empty(checkpoints.size)
    ci = 0
    rm = RunningMean.start(z)
    for j in range(cfg.n_steps):
        m = float(rm.mean[0]) if feedback == "selfavg" else frozen_mean
        if noise_mode == "shared":
            z, w = exact_linear_step(k, z, w, m, float(noise[j, 0]))
        else:
            z, w = exact_linear_step_exact_noise(k, z, w, m, noise[j])
        if not (math.isfinite(z) and math.isfinite(w)):
            raise StepError(f"non-finite state at step {j + 1}")
        rm = running_mean_update(rm, z)
        step = j + 1
        if si < store.size and step == store[si]:
            zs[si], ws[si] = z, w
            si += 1
        while ci < checkpoints.size and step == checkpoints[ci]:
            mean_norms[ci] = abs(float(rm.mean[0]))
            ci += 1
    traj = Trajectory(cfg.dt * store_stride, zs[:si, None], ws[:si, None])
    return RunResult(trajectory=traj, checkpoint_steps=checkpoints,
                     mean_norms=mean_norms if checkpoints.size else None)


def _run_single(kind, p, cfg, mu_x, initial, mean_checkpoints, store_stride,
                path_index, affine_interaction) -> RunResult:
    g = stream(cfg.rng_seed, path_index)
    state = initial if initial is not None else PhaseState(
        np.zeros(p.dim), np.zeros(p.dim))
    store = _store_plan(cfg.n_steps, store_stride)
    xs = np.empty((store.size, p.dim))
    vs = np.empty((store.size, p.dim))
    xs[0], vs[0] = state.x, state.v
    si = 1
    checkpoints = _checkpoint_array(mean_checkpoints, cfg.n_steps)
    mean_norms = np.empty(checkpoints.size)
    ci = 0
    history = [state.x.copy()]
    rm = RunningMean.start(state.x)
    noise = g.standard_normal((cfg.n_steps, p.dim))
    for j in range(cfg.n_steps):
        try:
            if kind == "frozen":
                state = em_step_frozen(p, state, mu_x, cfg.dt, noise[j])
            else:
                if affine_interaction:
                    hist = rm.mean[None, :]
                else:
                    hist = np.asarray(history)
                state = em_step_selfinteracting(p, state, hist, cfg.dt, noise[j])
        except StepError as e:
            raise StepError(f"{e} (step {j + 1})") from None
        step = j + 1
        if kind == "selfinteracting":
            rm = running_mean_update(rm, state.x)
            if step % cfg.history_stride == 0:
                history.append(state.x.copy())
        if si < store.size and step == store[si]:
            xs[si], vs[si] = state.x, state.v
            si += 1
        while ci < checkpoints.size and step == checkpoints[ci]:
            mean_norms[ci] = float(np.linalg.norm(rm.mean))
            ci += 1
    traj = Trajectory(cfg.dt * store_stride, xs[:si], vs[:si])
    return RunResult(trajectory=traj,
                     checkpoint_steps=checkpoints if kind == "selfinteracting" else None,
                     mean_norms=mean_norms if (kind == "selfinteracting" and checkpoints.size) else None)


def _run_meanfield(p, cfg, initial, store_stride, path_index) -> RunResult:
    n = cfg.n_particles
    if n < 2:
        raise ValueError("mean-field runs need n_particles >= 2")
    if initial is None:
        ensemble = [PhaseState(np.zeros(p.dim), np.zeros(p.dim)) for _ in range(n)]
    else:
        ensemble = list(initial)
        if len(ensemble) != n:
            raise ValueError("initial ensemble size does not match n_particles")
    gens = [stream(cfg.rng_seed, path_index, i) for i in range(n)]
    xs = np.stack([s.x for s in ensemble])
    vs = np.stack([s.v for s in ensemble])
    store = _store_plan(cfg.n_steps, store_stride)
    traj_x = np.empty((n, store.size, p.dim))
    traj_v = np.empty((n, store.size, p.dim))
    traj_x[:, 0], traj_v[:, 0] = xs, vs
    si = 1
    chunk = 1024
    j = 0
    while j < cfg.n_steps:
        span = min(chunk, cfg.n_steps - j)
        noise = np.stack([g.standard_normal((span, p.dim)) for g in gens], axis=1)
        for t in range(span):
            inter = interaction_mean(p, xs, xs)
            xs, vs = _em_advance(p, xs, vs, inter, cfg.dt, noise[t])
            j += 1
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vs))):
                raise StepError(f"non-finite state at step {j}")
            if si < store.size and j == store[si]:
                traj_x[:, si], traj_v[:, si] = xs, vs
                si += 1
    trajs = [Trajectory(cfg.dt * store_stride, traj_x[i, :si], traj_v[i, :si])
             for i in range(n)]
    return RunResult(trajectory=trajs[0], trajectories=trajs)


# ---------------------------------------------------------------------------
# vectorized multi-path engine for the built-in linear model


@dataclass(frozen=True)
class LinearBatchResult:
    checkpoint_steps: np.ndarray
    mean_abs: np.ndarray          # (n_checkpoints, n_paths): |m_j| per path
    x_history: np.ndarray | None  # (n_steps + 1, n_paths) when requested
    v_history: np.ndarray | None


def exact_linear_paths(k: float, n_paths: int, n_steps: int, seed: int, *,
                       noise: str = "shared", feedback: str = "selfavg",
                       init: str = "stationary", frozen_mean: float = 0.0,
                       mean_checkpoints=(), keep_x_history: bool = False,
                       keep_v_history: bool = False,
                       lane: tuple = ()) -> LinearBatchResult:
    """Run n_paths of the exact unit-step recursion, vectorized across paths.

    Path i consumes only the stream (seed, *lane, i): draws are 2 normals
    for the stationary initial state followed by the per-step noise, so any
    batch of paths reproduces the same trajectories path-by-path.
    """
    if noise not in ("shared", "exact"):
        raise ValueError("noise must be 'shared' or 'exact'")
    width = 1 if noise == "shared" else 2
    gens = [stream(seed, *lane, i) for i in range(n_paths)]
    if init == "stationary":
        starts = np.stack([g.standard_normal(2) for g in gens], axis=1)
        z = starts[0] * math.sqrt(0.5)
        w = starts[1].copy()
    elif init == "zero":
        for g in gens:
            g.standard_normal(2)  # keep the draw layout identical across modes
        z = np.zeros(n_paths)
        w = np.zeros(n_paths)
    else:
        raise ValueError("init must be 'stationary' or 'zero'")
    t = linear1d_transition()
    a = t.matrix
    cz, cw = t.drift_coeffs
    sz, sw = t.shared_noise_coeffs
    chol = t.chol
    checkpoints = _checkpoint_array(mean_checkpoints, n_steps)
    mean_abs = np.empty((checkpoints.size, n_paths))
    ci = 0
    hist = vhist = None
    if keep_x_history:
        hist = np.empty((n_steps + 1, n_paths))
        hist[0] = z
    if keep_v_history:
        vhist = np.empty((n_steps + 1, n_paths))
        vhist[0] = w
    m = z.copy()
    chunk = 16384
    j = 0
    while j < n_steps:
        span = min(chunk, n_steps - j)
        block = np.stack([g.standard_normal((span, width)) for g in gens], axis=1)
        for s in range(span):
            drive = k * m if feedback == "selfavg" else k * frozen_mean
            if noise == "shared":
                xi = block[s, :, 0]
                nz = sz * xi
                nw = sw * xi
            else:
                xi = block[s]
                nz = chol[0, 0] * xi[:, 0]
                nw = chol[1, 0] * xi[:, 0] + chol[1, 1] * xi[:, 1]
            zn = a[0, 0] * z + a[0, 1] * w + cz * drive + nz
            wn = a[1, 0] * z + a[1, 1] * w + cw * drive + nw
            z, w = zn, wn
            j += 1
            m += (z - m) / (j + 1)
            if keep_x_history:
                hist[j] = z
            if keep_v_history:
                vhist[j] = w
            while ci < checkpoints.size and j == checkpoints[ci]:
                mean_abs[ci] = np.abs(m)
                ci += 1
        if not np.all(np.isfinite(z)):
            raise StepError(f"non-finite state at step {j}")
    return LinearBatchResult(checkpoint_steps=checkpoints, mean_abs=mean_abs,
                             x_history=hist, v_history=vhist)
