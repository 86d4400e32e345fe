import math

import numpy as np
import pytest

from mvlangevin.dynamics import (IntegratorConfig, LINEAR_DRIFT,
                                 LINEAR_GENERATOR, LINEAR_MATRIX,
                                 LINEAR_SHARED_NOISE, StepError,
                                 em_step_frozen, em_step_meanfield,
                                 em_step_selfinteracting, exact_linear_paths,
                                 exact_linear_step,
                                 exact_linear_step_exact_noise,
                                 interaction_mean, linear1d_transition,
                                 run_trajectory)
from mvlangevin.measures import EmpiricalMeasure
from mvlangevin.model import ModelParams, PhaseState, linear1d
from mvlangevin.rng import stream


def delta_measure(c):
    return EmpiricalMeasure(np.array([[float(c)]]), None)


# ---------------------------------------------------------------------------
# EM steppers


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0, n_steps=1)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.1, n_steps=0)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.1, n_steps=1, history_stride=0)


def test_frozen_step_hand_value():
    p = linear1d(0.0)
    s = em_step_frozen(p, PhaseState([1.0], [0.0]), delta_measure(0.0),
                       0.01, np.zeros(1))
    assert s.x[0] == pytest.approx(1.0, abs=0)
    assert s.v[0] == pytest.approx(-0.02, abs=1e-15)


def test_frozen_step_single_atom_drift():
    # b_int(x, y) = k y against a point mass at c adds exactly k*c to the
    # velocity drift
    k, c, dt = 0.3, 2.0, 0.05
    p = linear1d(k)
    s0 = PhaseState([0.5], [0.1])
    with_atom = em_step_frozen(p, s0, delta_measure(c), dt, np.zeros(1))
    without = em_step_frozen(linear1d(0.0), s0, delta_measure(c), dt, np.zeros(1))
    assert with_atom.v[0] - without.v[0] == pytest.approx(k * c * dt, rel=1e-12)


def test_frozen_step_nonfinite_detection():
    p = ModelParams(gamma=1.0, k_matrix=[[1.0]],
                    g=lambda x: np.full_like(np.asarray(x, float), np.inf))
    with pytest.raises(StepError):
        em_step_frozen(p, PhaseState([1.0], [0.0]), delta_measure(0.0),
                       0.1, np.zeros(1))


def test_meanfield_decoupled_matches_frozen():
    # with no interaction, every particle moves exactly as a frozen path fed
    # the same noise
    p = linear1d(0.0)
    rng = np.random.default_rng(0)
    ens = [PhaseState(rng.standard_normal(1), rng.standard_normal(1))
           for _ in range(4)]
    noises = rng.standard_normal((4, 1))
    stepped = em_step_meanfield(p, ens, 0.02, noises)
    for s0, s1, n in zip(ens, stepped, noises):
        ref = em_step_frozen(p, s0, delta_measure(0.0), 0.02, n)
        assert np.array_equal(s1.x, ref.x) and np.array_equal(s1.v, ref.v)


def test_meanfield_interaction_is_ensemble_mean():
    p = linear1d(0.7)
    xs = np.array([[1.0], [3.0], [-2.0]])
    inter = interaction_mean(p, xs, xs)
    assert np.allclose(inter, 0.7 * xs.mean() * np.ones((3, 1)), rtol=1e-14)


def test_meanfield_symmetry_preserved():
    # particles at +/-a with mirrored noises stay mirrored
    p = linear1d(0.9)
    ens = [PhaseState([1.3], [0.2]), PhaseState([-1.3], [-0.2])]
    state = ens
    rng = np.random.default_rng(1)
    for _ in range(50):
        xi = rng.standard_normal(1)
        state = em_step_meanfield(p, state, 0.01, np.stack([xi, -xi]))
        assert state[0].x[0] == pytest.approx(-state[1].x[0], abs=1e-14)
        assert state[0].v[0] == pytest.approx(-state[1].v[0], abs=1e-14)


def test_meanfield_requires_two_particles():
    p = linear1d(0.0)
    with pytest.raises(ValueError):
        em_step_meanfield(p, [PhaseState([0.0], [0.0])], 0.1, np.zeros((1, 1)))


def test_selfinteracting_history_average():
    # b_int(x, y) = k y with history {0, 2, 4}: interaction k * 2
    k, dt = 0.5, 0.04
    p = linear1d(k)
    hist = np.array([[0.0], [2.0], [4.0]])
    s0 = PhaseState([1.0], [0.0])
    got = em_step_selfinteracting(p, s0, hist, dt, np.zeros(1))
    base = em_step_selfinteracting(linear1d(0.0), s0, hist, dt, np.zeros(1))
    assert got.v[0] - base.v[0] == pytest.approx(k * 2.0 * dt, rel=1e-12)


def test_selfinteracting_first_step_single_point():
    p = linear1d(0.8)
    z0 = 1.7
    got = em_step_selfinteracting(p, PhaseState([0.0], [0.0]),
                                  np.array([[z0]]), 0.1, np.zeros(1))
    # single-point history reduces to b_int(x, z0)
    assert got.v[0] == pytest.approx(0.8 * z0 * 0.1, rel=1e-12)
    with pytest.raises(ValueError):
        em_step_selfinteracting(p, PhaseState([0.0], [0.0]),
                                np.empty((0, 1)), 0.1, np.zeros(1))


def test_meanfield_mean_map_stability_threshold():
    # noiseless ensemble mean follows the linear recursion; the mean decays
    # for k < 2 and grows for k > 2
    def mean_after(k, n=8000):
        p = linear1d(k)
        ens = [PhaseState([1.0], [0.0]) for _ in range(4)]
        for _ in range(n):
            ens = em_step_meanfield(p, ens, 0.01, np.zeros((4, 1)))
        return abs(np.mean([s.x[0] for s in ens]))

    # slow modes at rate -(2 - k)/3 near the threshold: t = 80 separates them
    assert mean_after(1.9) < 0.1
    assert mean_after(2.1) > 2.0


# ---------------------------------------------------------------------------
# exact unit-step recursion


def test_matrix_equals_exponential_eigen_oracle():
    # A = [[0,1],[-2,-3]] has eigenvalues -1, -2 with eigenvectors
    # (1,-1), (1,-2); assemble e^A from the eigendecomposition
    pmat = np.array([[1.0, 1.0], [-1.0, -2.0]])
    oracle = pmat @ np.diag([math.exp(-1.0), math.exp(-2.0)]) @ np.linalg.inv(pmat)
    assert np.max(np.abs(LINEAR_MATRIX - oracle)) < 1e-12


def test_matrix_coefficient_values():
    e1, e2 = math.exp(-1.0), math.exp(-2.0)
    assert LINEAR_MATRIX[0, 0] == pytest.approx(0.600424, abs=5e-7)
    assert LINEAR_MATRIX[0, 1] == pytest.approx(0.232544, abs=5e-7)
    assert LINEAR_MATRIX[1, 0] == pytest.approx(-0.465088, abs=5e-7)
    assert LINEAR_MATRIX[1, 1] == pytest.approx(2.0 * e2 - e1, abs=0)


def test_drift_coefficients_against_integral_oracle():
    # constant velocity forcing integrates to (int_0^1 e^{A u} du) e_2
    from scipy.integrate import quad
    from scipy.linalg import expm
    col = np.array([
        quad(lambda u: expm(LINEAR_GENERATOR * u)[i, 1], 0.0, 1.0,
             epsabs=1e-14)[0]
        for i in range(2)
    ])
    assert np.allclose(LINEAR_DRIFT, col, atol=1e-12)


def test_noiseless_fixed_point():
    assert exact_linear_step(0.0, 0.0, 0.0, 0.0, 0.0) == (0.0, 0.0)


def test_exact_covariance_against_scalar_integral_oracle():
    # the Lyapunov integral in closed scalar form:
    # I_n = int_0^1 e^{-n u} du = (1 - e^{-n})/n
    t = linear1d_transition()
    i2 = (1.0 - math.exp(-2.0)) / 2.0
    i3 = (1.0 - math.exp(-3.0)) / 3.0
    i4 = (1.0 - math.exp(-4.0)) / 4.0
    q_oracle = 6.0 * np.array([
        [i2 - 2.0 * i3 + i4, -i2 + 3.0 * i3 - 2.0 * i4],
        [-i2 + 3.0 * i3 - 2.0 * i4, i2 - 4.0 * i3 + 4.0 * i4],
    ])
    assert np.max(np.abs(t.exact_covariance - q_oracle)) < 1e-12
    # the printed shared-noise coefficients do NOT reproduce it; the signed
    # discrepancy is part of the transition record
    disc = t.shared_noise_discrepancy
    assert np.allclose(disc, np.outer(LINEAR_SHARED_NOISE, LINEAR_SHARED_NOISE)
                       - q_oracle, atol=1e-12)
    assert np.max(np.abs(disc)) > 0.1
    assert np.allclose(disc, disc.T)
    # chol reproduces the covariance
    assert np.allclose(t.chol @ t.chol.T, t.exact_covariance, atol=1e-14)


def test_one_step_output_covariance_matches_oracle():
    # push the invariant Gaussian through one step and compare the sample
    # covariance with M S M^T + Q_used, for both noise modes
    rng = np.random.default_rng(8)
    n = 400_000
    z = rng.standard_normal(n) * math.sqrt(0.5)
    w = rng.standard_normal(n)
    s0 = np.diag([0.5, 1.0])
    t = linear1d_transition()
    for mode in ("shared", "exact"):
        if mode == "shared":
            xi = rng.standard_normal(n)
            zn, wn = exact_linear_step(0.0, z, w, 0.0, xi)
            q = np.outer(t.shared_noise_coeffs, t.shared_noise_coeffs)
        else:
            xi = rng.standard_normal((2, n))
            noise = t.chol @ xi
            zn = t.matrix[0, 0] * z + t.matrix[0, 1] * w + noise[0]
            wn = t.matrix[1, 0] * z + t.matrix[1, 1] * w + noise[1]
            q = t.exact_covariance
        target = t.matrix @ s0 @ t.matrix.T + q
        for series, tgt in ((zn, target[0, 0]), (wn, target[1, 1])):
            var = series.var()
            se = tgt * math.sqrt(2.0 / n)
            assert abs(var - tgt) < 3.0 * se
        # only the exact mode preserves the invariant marginals
        if mode == "exact":
            assert target[0, 0] == pytest.approx(0.5, abs=1e-12)
            assert target[1, 1] == pytest.approx(1.0, abs=1e-12)


def test_exact_noise_step_scalar():
    zn, wn = exact_linear_step_exact_noise(0.0, 1.0, 0.0, 0.0, np.zeros(2))
    assert zn == pytest.approx(LINEAR_MATRIX[0, 0])
    assert wn == pytest.approx(LINEAR_MATRIX[1, 0])


def test_em_matches_exact_law():
    # EM at dt = 1e-3 for t = 10 against the exact 10-step law: mean and
    # variance of both coordinates within 3 Monte Carlo standard errors
    n, dt, t_final = 10_000, 1e-3, 10.0
    rng = np.random.default_rng(9)
    x = np.full(n, 1.0)
    v = np.zeros(n)
    steps = int(round(t_final / dt))
    scale = math.sqrt(2.0 * 3.0 * dt)
    for _ in range(steps):
        xn = x + v * dt
        v = v + (-2.0 * x - 3.0 * v) * dt + scale * rng.standard_normal(n)
        x = xn
    t = linear1d_transition()
    mean = np.linalg.matrix_power(t.matrix, 10) @ np.array([1.0, 0.0])
    for series, m_target, v_target in ((x, mean[0], 0.5), (v, mean[1], 1.0)):
        se_mean = math.sqrt(v_target / n)
        assert abs(series.mean() - m_target) < 3.0 * se_mean
        se_var = v_target * math.sqrt(2.0 / n)
        assert abs(series.var() - v_target) < 3.0 * se_var


# ---------------------------------------------------------------------------
# run_trajectory


def test_run_requires_kind_inputs():
    p = linear1d(0.0)
    cfg = IntegratorConfig(dt=1.0, n_steps=2)
    with pytest.raises(ValueError):
        run_trajectory("nope", p, cfg)
    with pytest.raises(ValueError):
        run_trajectory("frozen", p, cfg)
    with pytest.raises(ValueError):
        run_trajectory("exactlinear", p, cfg)
    with pytest.raises(ValueError):
        run_trajectory("exactlinear", p, IntegratorConfig(dt=0.5, n_steps=2),
                       k=0.0)
    p2 = ModelParams(gamma=3.0, k_matrix=[[1.0]])
    with pytest.raises(ValueError):
        run_trajectory("exactlinear", p2, cfg, k=0.0)


def test_single_step_equals_manual_call():
    p = linear1d(0.2)
    mu = delta_measure(0.5)
    cfg = IntegratorConfig(dt=0.01, n_steps=1, rng_seed=3)
    out = run_trajectory("frozen", p, cfg, mu_x=mu,
                         initial=PhaseState([1.0], [0.0]))
    noise = stream(3, 0).standard_normal((1, 1))
    ref = em_step_frozen(p, PhaseState([1.0], [0.0]), mu, 0.01, noise[0])
    assert np.array_equal(out.trajectory.xs[1], ref.x)
    assert np.array_equal(out.trajectory.vs[1], ref.v)


def test_exactlinear_single_step_equals_manual():
    p = linear1d(0.4)
    cfg = IntegratorConfig(dt=1.0, n_steps=1, rng_seed=4)
    init = PhaseState([0.7], [-0.2])
    out = run_trajectory("exactlinear", p, cfg, k=0.4, initial=init)
    xi = stream(4, 0).standard_normal((1, 1))[0, 0]
    # m_0 = z_0 drives the first update
    z1, w1 = exact_linear_step(0.4, 0.7, -0.2, 0.7, xi)
    assert out.trajectory.xs[1, 0] == pytest.approx(z1, abs=0)
    assert out.trajectory.vs[1, 0] == pytest.approx(w1, abs=0)


def test_run_determinism_bytes():
    p = linear1d(0.4)
    cfg = IntegratorConfig(dt=1.0, n_steps=64, rng_seed=5)
    a = run_trajectory("exactlinear", p, cfg, k=0.4,
                       mean_checkpoints=[1, 8, 64])
    b = run_trajectory("exactlinear", p, cfg, k=0.4,
                       mean_checkpoints=[1, 8, 64])
    assert a.trajectory.to_text() == b.trajectory.to_text()
    assert np.array_equal(a.mean_norms, b.mean_norms)


def test_run_store_stride():
    p = linear1d(0.0)
    cfg = IntegratorConfig(dt=1.0, n_steps=10, rng_seed=6)
    out = run_trajectory("exactlinear", p, cfg, k=0.0, store_stride=4)
    assert len(out.trajectory) == 4  # steps 0, 4, 8, 10
    assert out.trajectory.dt == 4.0


def test_run_meanfield_returns_all_particles():
    p = linear1d(0.5)
    cfg = IntegratorConfig(dt=0.01, n_steps=20, rng_seed=7, n_particles=3)
    out = run_trajectory("meanfield", p, cfg)
    assert len(out.trajectories) == 3
    assert len(out.trajectory) == 21


def test_run_meanfield_explicit_initial_ensemble():
    p = linear1d(0.5)
    cfg = IntegratorConfig(dt=0.01, n_steps=5, rng_seed=7, n_particles=2)
    ens = [PhaseState([1.0], [0.0]), PhaseState([-1.0], [0.0])]
    out = run_trajectory("meanfield", p, cfg, initial=ens)
    assert out.trajectory.xs[0, 0] == 1.0
    with pytest.raises(ValueError):
        run_trajectory("meanfield", p, cfg, initial=ens[:1])


def test_batch_paths_invalid_modes():
    with pytest.raises(ValueError):
        exact_linear_paths(0.0, 2, 10, 0, noise="banana")
    with pytest.raises(ValueError):
        exact_linear_paths(0.0, 2, 10, 0, init="banana")


def test_run_selfinteracting_checkpoints_and_thinning():
    p = linear1d(0.3)
    cfg = IntegratorConfig(dt=0.5, n_steps=30, rng_seed=8, history_stride=5)
    out = run_trajectory("selfinteracting", p, cfg,
                         initial=PhaseState([1.0], [0.0]),
                         mean_checkpoints=[10, 30])
    assert out.checkpoint_steps.tolist() == [10, 30]
    assert out.mean_norms.shape == (2,)
    assert np.all(np.isfinite(out.mean_norms))


def test_selfinteracting_affine_shortcut_matches_dense_history():
    # for b_int(x, y) = k y the running-mean shortcut equals the dense
    # (stride 1) history average exactly in expectation and pathwise
    p = linear1d(0.6)
    cfg = IntegratorConfig(dt=0.2, n_steps=25, rng_seed=9, history_stride=1)
    init = PhaseState([0.4], [0.1])
    dense = run_trajectory("selfinteracting", p, cfg, initial=init,
                           affine_interaction=False)
    short = run_trajectory("selfinteracting", p, cfg, initial=init,
                           affine_interaction=True)
    assert np.allclose(dense.trajectory.xs, short.trajectory.xs,
                       rtol=1e-12, atol=1e-13)


# ---------------------------------------------------------------------------
# vectorized batch engine


def test_batch_paths_match_single_runs():
    res = exact_linear_paths(0.4, 3, 50, 12, noise="shared",
                             feedback="selfavg", init="zero",
                             mean_checkpoints=[50], keep_x_history=True)
    p = linear1d(0.4)
    cfg = IntegratorConfig(dt=1.0, n_steps=50, rng_seed=12)
    for i in range(3):
        # replicate the batch draw layout: 2 init draws then the step noise
        g = stream(12, i)
        g.standard_normal(2)
        single_noise = g.standard_normal((50, 1))
        z, w = 0.0, 0.0
        m = 0.0
        j = 0
        for xi in single_noise[:, 0]:
            z, w = exact_linear_step(0.4, z, w, m, float(xi))
            j += 1
            m += (z - m) / (j + 1)
        assert res.x_history[50, i] == pytest.approx(z, abs=1e-12)
        assert res.mean_abs[0, i] == pytest.approx(abs(m), abs=1e-12)


def test_batch_paths_invariant_under_batch_size():
    a = exact_linear_paths(0.8, 2, 40, 13, mean_checkpoints=[40])
    b = exact_linear_paths(0.8, 5, 40, 13, mean_checkpoints=[40])
    assert np.allclose(a.mean_abs[0], b.mean_abs[0, :2], atol=0)


def test_checkpoints_out_of_range_rejected():
    with pytest.raises(ValueError):
        exact_linear_paths(0.0, 2, 10, 0, mean_checkpoints=[0])
    with pytest.raises(ValueError):
        exact_linear_paths(0.0, 2, 10, 0, mean_checkpoints=[11])
    p = linear1d(0.0)
    cfg = IntegratorConfig(dt=1.0, n_steps=10, rng_seed=1)
    with pytest.raises(ValueError):
        run_trajectory("exactlinear", p, cfg, k=0.0, mean_checkpoints=[0])
