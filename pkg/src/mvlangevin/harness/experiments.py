"""Experiment drivers: decay figure, convergence curves, contraction, moments.

Every driver is deterministic given (config, seed): path-level randomness
comes from counter-based streams keyed by path index, reference samples
from the unkeyed stream (disjoint from all path lanes), and emitted text
uses repr() floats, so re-running a config reproduces its output files byte
for byte.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .. import coupling as cp
from .. import dynamics as dyn
from .. import measures as ms
from .. import theory
from ..model import ModelParams
from .config import ExperimentConfig, decade_grid
from .svg import line_plot

#: subsample caps per metric before the distance is evaluated
_METRIC_CAPS = {"w1_1d_marginals": 200_000, "w1_small": 200, "w1_sliced": 2000}

#: frozen-marginal sample cap inside time loops (the average over the sample
#: is re-evaluated every step, so desk-scale stepping wants a modest cloud)
_STEPPING_MU_CAP = 2048


def _write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _is_linear1d(p: ModelParams) -> bool:
    return p.dim == 1 and p.gamma == 3.0 and np.allclose(p.k_matrix, [[2.0]])


def invariant_phase_sampler(n: int, seed: int) -> ms.EmpiricalMeasure:
    """Sample of the built-in model's invariant law: Var(x)=1/2, Var(v)=1."""
    return ms.gaussian_sampler([0.0, 0.0], [0.5, 1.0], n, seed)


def reference_measure(ec: ExperimentConfig, p: ModelParams) -> ms.EmpiricalMeasure:
    # the unkeyed stream (seed,) is disjoint from every path lane (seed, i)
    if ec.reference == "gaussian_invariant":
        if not _is_linear1d(p):
            raise ValueError("gaussian_invariant reference is only known for "
                             "the built-in linear1d model; supply a sample file")
        return invariant_phase_sampler(ec.n_reference, ec.seed)
    with open(ec.reference, "r", encoding="utf-8") as fh:
        return ms.EmpiricalMeasure.from_text(fh.read())


# ---------------------------------------------------------------------------
# decay figure (mean |m_j| of the self-averaging recursion, swept over k)


@dataclass(frozen=True)
class FigureResult:
    k_list: tuple
    checkpoint_steps: np.ndarray
    mean_abs: np.ndarray        # (n_k, n_checkpoints)
    stderr: np.ndarray
    per_path_abs: np.ndarray    # (n_k, n_checkpoints, n_paths)
    csv_paths: list
    svg_paths: list


def run_mean_decay_figure(k_list, n_paths: int, n_steps: int, rng_seed: int,
                          out_dir: str, *, noise: str = "shared",
                          checkpoints=None) -> FigureResult:
    """Mean |m_j| across paths at geometric checkpoints, one curve per k.

    Uses the unit-step recursion in its verbatim shared-noise form by
    default.  Emits one CSV per k plus log-log and linear-y SVG renderings
    of the combined curves.
    """
    if not k_list:
        raise ValueError("k_list must be non-empty")
    steps = np.asarray(checkpoints if checkpoints is not None
                       else decade_grid(1, n_steps), dtype=int)
    means = np.empty((len(k_list), steps.size))
    errs = np.empty_like(means)
    per_path = np.empty((len(k_list), steps.size, n_paths))
    csv_paths = []
    for ki, k in enumerate(k_list):
        res = dyn.exact_linear_paths(
            float(k), n_paths, n_steps, rng_seed, noise=noise,
            feedback="selfavg", init="stationary", mean_checkpoints=steps,
            lane=(ki,),
        )
        per_path[ki] = res.mean_abs
        means[ki] = res.mean_abs.mean(axis=1)
        errs[ki] = res.mean_abs.std(axis=1, ddof=1) / math.sqrt(n_paths) \
            if n_paths > 1 else 0.0
        lines = ["j,mean_abs_m,stderr"]
        for j, m, s in zip(steps, means[ki], errs[ki]):
            lines.append(f"{int(j)},{float(m)!r},{float(s)!r}")
        path = os.path.join(out_dir, f"decay_k{k:g}.csv")
        _write(path, "\n".join(lines) + "\n")
        csv_paths.append(path)
    series = [(f"k = {k:g}", steps, means[ki]) for ki, k in enumerate(k_list)]
    svg_paths = []
    for suffix, log_y in (("loglog", True), ("linear", False)):
        path = os.path.join(out_dir, f"decay_{suffix}.svg")
        _write(path, line_plot(series, log_x=True, log_y=log_y,
                               title="running-mean error |m_j|",
                               xlabel="iteration j", ylabel="mean |m_j|"))
        svg_paths.append(path)
    return FigureResult(tuple(float(k) for k in k_list), steps, means, errs,
                        per_path, csv_paths, svg_paths)


# ---------------------------------------------------------------------------
# empirical-measure convergence


@dataclass(frozen=True)
class ConvergenceResult:
    times: np.ndarray
    mean_w1: np.ndarray
    stderr: np.ndarray
    fitted_slope: float
    eps_bound: float
    metric: str
    surrogate: bool
    csv_path: str
    svg_path: str


def _paths_x_histories(ec: ExperimentConfig, p: ModelParams):
    """Return (n_steps+1, n_paths) x-coordinate histories (and phase (.., 2)
    histories when the metric needs them) for the configured dynamics."""
    need_phase = ec.metric != "w1_1d_marginals"
    if _is_linear1d(p) and ec.dt == 1.0 and ec.kind in ("frozen", "exactlinear"):
        feedback = "frozen" if ec.kind == "frozen" else "selfavg"
        noise = "exact" if ec.kind == "frozen" else "shared"
        res = dyn.exact_linear_paths(
            ec.k, ec.n_paths, ec.n_steps, ec.seed, noise=noise,
            feedback=feedback, init="stationary", keep_x_history=True,
            keep_v_history=need_phase,
        )
        return res.x_history, res.v_history
    # generic route: one run_trajectory per path (desk scale)
    mu = None
    if ec.kind == "frozen":
        mu = reference_measure(ec, p).marginal(range(p.dim)).subsample(_STEPPING_MU_CAP)
    xs = np.empty((ec.n_steps + 1, ec.n_paths))
    vs = np.empty_like(xs) if need_phase else None
    cfg = dyn.IntegratorConfig(dt=ec.dt, n_steps=ec.n_steps, rng_seed=ec.seed,
                               n_particles=ec.n_particles,
                               history_stride=ec.history_stride)
    for i in range(ec.n_paths):
        out = dyn.run_trajectory(
            ec.kind, p, cfg, mu_x=mu, path_index=i,
            affine_interaction=_is_linear1d(p),
        )
        xs[:, i] = out.trajectory.xs[:, 0]
        if need_phase:
            vs[:, i] = out.trajectory.vs[:, 0]
    return xs, vs


def run_empirical_convergence(ec: ExperimentConfig, out_dir: str) -> ConvergenceResult:
    """Mean W1 distance between the running empirical measure and a fixed
    reference sample, across paths, at the configured checkpoints.

    A path's empirical measure at checkpoint t uses its first t states with
    uniform weights (left-endpoint time average), subsampled per the metric
    policy.  The log-log slope over the final decade is reported next to
    the admissible exponent bound; the bound is a guarantee, so only the
    sign of the slope is ever asserted.
    """
    p = ec.build_model()
    ref_phase = reference_measure(ec, p)
    steps = [s for s in ec.checkpoint_steps() if 1 <= s <= ec.n_steps]
    xs, vs = _paths_x_histories(ec, p)
    cap = _METRIC_CAPS[ec.metric]
    if ec.metric == "w1_1d_marginals":
        ref = ref_phase.marginal([0])
    else:
        ref = ref_phase.subsample(cap)
    w1 = np.empty((len(steps), ec.n_paths))
    for si, s in enumerate(steps):
        for i in range(ec.n_paths):
            if ec.metric == "w1_1d_marginals":
                emp = ms.empirical_from_array(xs[:s, i], max_points=cap)
                w1[si, i] = ms.w1_exact_1d(emp, ref)
            elif ec.metric == "w1_small":
                pts = np.stack([xs[:s, i], vs[:s, i]], axis=1)
                emp = ms.empirical_from_array(pts, max_points=cap)
                w1[si, i] = ms.w1_exact_small(emp, ref)
            else:
                pts = np.stack([xs[:s, i], vs[:s, i]], axis=1)
                emp = ms.empirical_from_array(pts, max_points=cap)
                w1[si, i] = ms.w1_sliced(emp, ref, 64, ec.seed)
    mean = w1.mean(axis=1)
    err = w1.std(axis=1, ddof=1) / math.sqrt(ec.n_paths) if ec.n_paths > 1 \
        else np.zeros(len(steps))
    times = np.asarray(steps, dtype=float) * ec.dt
    tail = times >= times[-1] / 10.0
    slope = _loglog_slope(times[tail], mean[tail])
    verdict = theory.admissibility(p)
    eps = verdict.eps_max_selfinteracting if ec.kind in ("selfinteracting", "exactlinear") \
        else verdict.eps_max_meanfield
    label = ec.metric + (" (surrogate)" if ec.metric == "w1_sliced" else "")
    lines = ["t,mean_w1,stderr"]
    for t, m, s in zip(times, mean, err):
        lines.append(f"{float(t)!r},{float(m)!r},{float(s)!r}")
    lines.append(f"# metric = {label}, fitted_slope = {float(slope)!r}, "
                 f"eps_bound = {float(eps)!r}")
    csv_path = os.path.join(out_dir, "converge.csv")
    _write(csv_path, "\n".join(lines) + "\n")
    svg_path = os.path.join(out_dir, "converge_loglog.svg")
    _write(svg_path, line_plot([(label, times, mean)], log_x=True, log_y=True,
                               title="empirical-measure convergence",
                               xlabel="t", ylabel="mean W1"))
    return ConvergenceResult(times=times, mean_w1=mean, stderr=err,
                             fitted_slope=slope, eps_bound=eps,
                             metric=ec.metric,
                             surrogate=ec.metric == "w1_sliced",
                             csv_path=csv_path, svg_path=svg_path)


def _loglog_slope(t: np.ndarray, y: np.ndarray) -> float:
    keep = (t > 0) & (y > 0)
    t, y = np.log(t[keep]), np.log(y[keep])
    if t.size < 2:
        return float("nan")
    tm = t.mean()
    return float(np.sum((t - tm) * (y - y.mean())) / np.sum((t - tm) ** 2))


# ---------------------------------------------------------------------------
# admissibility report


def run_admissibility_report(p: ModelParams) -> tuple[str, int]:
    """Constants, verdicts, thresholds, exponent ranges; exit code 0 iff the
    model satisfies both standing inequalities."""
    v = theory.admissibility(p)
    lines = []
    if v.constants is not None:
        lines.append(theory.constants_report(v.constants).rstrip("\n"))
    lines.append(f"eq2_ok = {v.eq2_ok}")
    lines.append(f"eq3_ok = {v.eq3_ok}")
    lines.append(f"l_int = {p.l_int:.17g}")
    lines.append(f"l_int_threshold = {v.l_int_threshold:.17g}")
    lines.append(f"eps_max_meanfield = {v.eps_max_meanfield:.17g}")
    lines.append(f"eps_max_selfinteracting = {v.eps_max_selfinteracting:.17g}")
    lines.append(f"admissible = {v.admissible}")
    return "\n".join(lines) + "\n", 0 if v.admissible else 1


# ---------------------------------------------------------------------------
# contraction and moments wrappers


def run_contraction(ec: ExperimentConfig, out_dir: str) -> cp.ContractionReport:
    p = ec.build_model()
    tc, aux = theory.build_constants(p)
    bp = cp.BlendingParams(delta=ec.delta, d_threshold=tc.d_of_r_tilde)
    mu = reference_measure(ec, p).marginal(range(p.dim)).subsample(_STEPPING_MU_CAP)
    cfg = dyn.IntegratorConfig(dt=ec.dt, n_steps=ec.n_steps, rng_seed=ec.seed,
                               history_stride=ec.history_stride)
    report = cp.contraction_experiment(
        ec.kind_to_mode(), p, tc, bp, ec.n_pairs, cfg, aux=aux, mu_x=mu,
    )
    _write(os.path.join(out_dir, "contract.csv"), report.to_csv())
    _write(os.path.join(out_dir, "contract_summary.txt"),
           report.summary_line() + "\n")
    rho0 = report.mean_rho[0] if report.mean_rho.size else 1.0
    series = [
        ("mean rho", report.times, report.mean_rho),
        ("c3 reference", report.times, rho0 * np.exp(-tc.c3 * report.times)),
    ]
    _write(os.path.join(out_dir, "contract.svg"),
           line_plot(series, log_y=True, title="coupling contraction",
                     xlabel="t", ylabel="E[rho]"))
    return report


def run_moments(ec: ExperimentConfig, out_dir: str) -> cp.MomentReport:
    p = ec.build_model()
    mu = reference_measure(ec, p).marginal(range(p.dim)).subsample(_STEPPING_MU_CAP)
    cfg = dyn.IntegratorConfig(dt=ec.dt, n_steps=ec.n_steps, rng_seed=ec.seed)
    report = cp.moment_experiment(p, cfg, mu, n_paths=ec.n_paths,
                                  init_variance=ec.init_variance)
    _write(os.path.join(out_dir, "moments.csv"), report.to_csv())
    _write(os.path.join(out_dir, "moments.svg"),
           line_plot([("E[|Y|^2+|U|^2]", report.times, report.second_moments)],
                     title="second-moment control", xlabel="t",
                     ylabel="second moment"))
    return report
