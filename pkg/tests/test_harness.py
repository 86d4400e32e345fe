import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mvlangevin.harness.cli import main
from mvlangevin.harness.config import (ConfigError, ExperimentConfig,
                                       decade_grid, parse_config,
                                       serialize_config)
from mvlangevin.harness.experiments import (run_admissibility_report,
                                            run_contraction,
                                            run_empirical_convergence,
                                            run_mean_decay_figure,
                                            run_moments)
from mvlangevin.model import linear1d


# ---------------------------------------------------------------------------
# config


def test_config_round_trip_identity():
    ec = ExperimentConfig(model_name="linear1d", k=0.04, n_steps=5000,
                          seed=3, kind="frozen", n_paths=8,
                          checkpoints="10, 100, 1000", delta=5e-4)
    text = serialize_config(ec)
    again = parse_config(text)
    assert again == ec
    assert serialize_config(again) == text


def test_config_unknown_keys_are_errors():
    with pytest.raises(ConfigError):
        parse_config("[model]\nnmae = linear1d\n")
    with pytest.raises(ConfigError):
        parse_config("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[run]\nn_steps = twelve\n")


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="warp")
    with pytest.raises(ConfigError):
        ExperimentConfig(metric="w2")
    with pytest.raises(ConfigError):
        ExperimentConfig(n_paths=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(checkpoints="10, 5")
    with pytest.raises(ConfigError):
        ExperimentConfig(reference="missing.txt").validate_files()


def test_config_checkpoint_schedules():
    ec = ExperimentConfig(n_steps=1000)
    geo = ec.checkpoint_steps()
    assert geo[0] == 1 and geo[-1] == 1000 and 100 in geo
    lin = ExperimentConfig(n_steps=100, checkpoints="linear").checkpoint_steps()
    assert lin[-1] == 100
    expl = ExperimentConfig(checkpoints="5, 50, 500").checkpoint_steps()
    assert expl == [5, 50, 500]


def test_decade_grid():
    g = decade_grid(1, 100_000)
    assert g[:6] == [1, 2, 5, 10, 20, 50]
    assert 100 in g and g[-1] == 100_000
    assert decade_grid(1, 7) == [1, 2, 5, 7]


def test_build_generic_model():
    ec = ExperimentConfig(model_name="generic", dim=2, gamma=2.0,
                          k_diag=(1.0, 3.0), g_name="saturating", k=0.1)
    p = ec.build_model()
    assert p.dim == 2 and p.kappa == 1.0 and p.l_k == 3.0 and p.l_g == 1.0
    with pytest.raises(ConfigError):
        ExperimentConfig(model_name="generic", g_name="warp").build_model()
    with pytest.raises(ConfigError):
        ExperimentConfig(model_name="generic", dim=2,
                         k_diag=(1.0,)).build_model()


# ---------------------------------------------------------------------------
# experiment drivers (small smoke scale)


def _parse_csv(path):
    with open(path) as fh:
        lines = [l for l in fh.read().splitlines() if l and not l.startswith("#")]
    header, rows = lines[0], lines[1:]
    data = np.array([[float(tok) for tok in row.split(",")] for row in rows])
    return header, data


def test_figure_outputs_and_determinism(tmp_path):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    res_a = run_mean_decay_figure([0.4, 2.0], 4, 500, 11, out_a)
    run_mean_decay_figure([0.4, 2.0], 4, 500, 11, out_b)
    for pa in res_a.csv_paths + res_a.svg_paths:
        pb = pa.replace(out_a, out_b)
        with open(pa, "rb") as fa, open(pb, "rb") as fb:
            assert fa.read() == fb.read()
    assert res_a.mean_abs.shape[0] == 2
    # CSV parses back to the reported values
    header, data = _parse_csv(res_a.csv_paths[0])
    assert header == "j,mean_abs_m,stderr"
    assert np.allclose(data[:, 1], res_a.mean_abs[0], rtol=0, atol=0)
    # SVG is well-formed XML
    tree = ET.parse(res_a.svg_paths[0])
    assert tree.getroot().tag.endswith("svg")


def test_convergence_driver(tmp_path):
    ec = ExperimentConfig(kind="frozen", n_paths=4, n_steps=2000,
                          seed=5, n_reference=2000,
                          checkpoints="100, 500, 2000")
    res = run_empirical_convergence(ec, str(tmp_path))
    assert res.mean_w1.shape == (3,)
    assert np.all(np.isfinite(res.mean_w1))
    assert res.mean_w1[-1] < res.mean_w1[0]
    assert np.isfinite(res.fitted_slope)
    assert res.eps_bound == pytest.approx(0.25)
    assert os.path.exists(res.csv_path) and os.path.exists(res.svg_path)
    header, data = _parse_csv(res.csv_path)
    assert header == "t,mean_w1,stderr"
    assert np.allclose(data[:, 1], res.mean_w1, rtol=0, atol=0)
    # determinism
    res2 = run_empirical_convergence(ec, str(tmp_path / "again"))
    assert np.array_equal(res.mean_w1, res2.mean_w1)


def test_convergence_phase_metric(tmp_path):
    ec = ExperimentConfig(kind="frozen", n_paths=2, n_steps=400, seed=6,
                          n_reference=400, metric="w1_small",
                          checkpoints="100, 400")
    res = run_empirical_convergence(ec, str(tmp_path))
    assert np.all(np.isfinite(res.mean_w1))
    ec2 = ExperimentConfig(kind="frozen", n_paths=2, n_steps=400, seed=6,
                           n_reference=400, metric="w1_sliced",
                           checkpoints="100, 400")
    res2 = run_empirical_convergence(ec2, str(tmp_path / "s"))
    assert res2.surrogate


def test_convergence_selfinteracting_em_route(tmp_path):
    ec = ExperimentConfig(kind="selfinteracting", n_paths=2, n_steps=300,
                          seed=8, dt=0.05, n_reference=500,
                          checkpoints="100, 300")
    res = run_empirical_convergence(ec, str(tmp_path))
    assert np.all(np.isfinite(res.mean_w1))


def test_convergence_meanfield_route(tmp_path):
    ec = ExperimentConfig(kind="meanfield", n_paths=2, n_steps=200, seed=8,
                          dt=0.05, n_reference=500, n_particles=4,
                          checkpoints="50, 200")
    res = run_empirical_convergence(ec, str(tmp_path))
    assert np.all(np.isfinite(res.mean_w1))


def test_convergence_external_reference_file(tmp_path):
    from mvlangevin.measures import gaussian_sampler
    ref = gaussian_sampler([0.0, 0.0], [0.5, 1.0], 800, 123)
    path = tmp_path / "ref.txt"
    path.write_text(ref.to_text())
    ec = ExperimentConfig(kind="frozen", n_paths=2, n_steps=500, seed=4,
                          reference=str(path), checkpoints="100, 500")
    ec.validate_files()
    res = run_empirical_convergence(ec, str(tmp_path / "out"))
    assert np.all(np.isfinite(res.mean_w1))


def test_convergence_reference_size_stability(tmp_path):
    # doubling the reference sample moves curve points by less than 2 stderr
    base = dict(kind="frozen", n_paths=8, n_steps=2000, seed=5,
                checkpoints="500, 2000")
    r1 = run_empirical_convergence(
        ExperimentConfig(n_reference=5000, **base), str(tmp_path / "a"))
    r2 = run_empirical_convergence(
        ExperimentConfig(n_reference=10000, **base), str(tmp_path / "b"))
    assert np.all(np.abs(r1.mean_w1 - r2.mean_w1)
                  <= 2.0 * np.maximum(r1.stderr, r2.stderr) + 1e-12)


def test_figure_no_interaction_decays_like_running_average():
    # k = 0: |m_j| is the running average of a stationary ergodic chain and
    # decays toward 0 by the law of large numbers
    res = run_mean_decay_figure([0.0], 8, 20_000, 3, "/tmp/fig_k0")
    first = res.mean_abs[0, 0]
    final = res.mean_abs[0, -1]
    assert final < first / 10.0
    # roughly square-root decay over the tail
    steps = res.checkpoint_steps
    tail = steps >= 100
    slope = np.polyfit(np.log(steps[tail]), np.log(res.mean_abs[0][tail]), 1)[0]
    assert -0.7 < slope < -0.3


def test_admissibility_report_exit_codes():
    text, code = run_admissibility_report(linear1d(0.05))
    assert code == 0 and "admissible = True" in text
    text, code = run_admissibility_report(linear1d(0.4))
    assert code == 1 and "admissible = False" in text
    assert "l_int_threshold" in text
    # zero interaction always satisfies the threshold inequality
    text, code = run_admissibility_report(linear1d(0.0))
    assert code == 0 and "eq3_ok = True" in text


def test_contraction_driver(tmp_path):
    ec = ExperimentConfig(kind="frozen", k=0.04, dt=0.01, n_steps=300,
                          n_pairs=16, seed=9, n_reference=512)
    rep = run_contraction(ec, str(tmp_path))
    assert rep.fitted_rate < 0
    header, data = _parse_csv(tmp_path / "contract.csv")
    assert header == "t,mean_rho,stderr"
    assert np.allclose(data[:, 1], rep.mean_rho, rtol=0, atol=0)
    with open(tmp_path / "contract_summary.txt") as fh:
        assert "c3_reference" in fh.read()


def test_contraction_stderr_monte_carlo_scaling(tmp_path):
    # doubling the pair count shrinks the cross-pair stderr about 1/sqrt(2)
    base = dict(kind="frozen", k=0.04, dt=0.01, n_steps=200, seed=9,
                n_reference=512)
    small = run_contraction(ExperimentConfig(n_pairs=64, **base),
                            str(tmp_path / "s"))
    large = run_contraction(ExperimentConfig(n_pairs=128, **base),
                            str(tmp_path / "l"))
    keep = small.stderr > 0
    ratio = float(np.mean(large.stderr[keep] / small.stderr[keep]))
    assert 0.55 < ratio < 0.9


def test_moments_driver(tmp_path):
    ec = ExperimentConfig(kind="frozen", dt=0.01, n_steps=400, n_paths=32,
                          seed=10, n_reference=512, init_variance=10.0)
    rep = run_moments(ec, str(tmp_path))
    assert not rep.growth_flag
    header, data = _parse_csv(tmp_path / "moments.csv")
    assert header == "t,second_moment,running_sup"
    assert np.allclose(data[:, 1], rep.second_moments, rtol=0, atol=0)


# ---------------------------------------------------------------------------
# CLI


def test_cli_constants_exit_codes(capsys):
    assert main(["constants", "--k", "0.05"]) == 0
    assert "admissible = True" in capsys.readouterr().out
    assert main(["constants", "--k", "0.4"]) == 1


def test_cli_dump_config(capsys):
    assert main(["constants", "--k", "0.05", "--dump-config"]) == 0
    out = capsys.readouterr().out
    assert parse_config(out).k == 0.05


def test_cli_figure_and_overrides(tmp_path, capsys):
    out = str(tmp_path / "fig")
    code = main(["figure", "--steps", "200", "--paths", "2", "--out", out,
                 "--k-list", "0.4", "--seed", "1"])
    assert code == 0
    assert os.path.exists(os.path.join(out, "decay_k0.4.csv"))


def test_cli_remaining_verbs(tmp_path, capsys):
    out = str(tmp_path / "c")
    assert main(["converge", "--steps", "500", "--paths", "2",
                 "--out", out, "--seed", "2"]) == 0
    assert "fitted_slope" in capsys.readouterr().out
    assert main(["contract", "--steps", "100", "--out", str(tmp_path / "ct"),
                 "--seed", "2"]) == 0
    assert "c3_reference" in capsys.readouterr().out
    assert main(["moments", "--steps", "300", "--paths", "8",
                 "--out", str(tmp_path / "m"), "--seed", "2"]) == 0
    assert "growth_flag" in capsys.readouterr().out


def test_cli_bad_config(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nwhat = 1\n")
    assert main(["constants", "--config", str(bad)]) == 2


def test_cli_config_file_round_trip(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(serialize_config(ExperimentConfig(k=0.02)))
    assert main(["constants", "--config", str(cfg)]) == 0
