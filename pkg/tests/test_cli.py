import csv
import io

import pytest

from noisestab.bounds import BoundReport
from noisestab.cli import run_subcommand
from noisestab.config import KEYS, ExperimentConfig, parse_config_text, reference_markdown
from noisestab.core import ConfigurationError
from noisestab.montecarlo import COMPARE_COLUMNS


def run(capsys, *argv):
    code = run_subcommand(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_certify_cubic(capsys):
    code, out, _ = run(capsys, "certify", "--system", "cubic-bistable")
    assert code == 0
    assert "passed: true" in out


def test_certify_failure_exit_code(capsys, tmp_path):
    p = tmp_path / "viol.csv"
    code, out, _ = run(capsys, "certify", "--system", "cubic-bistable", "--r0", "1.0", "--out", str(p))
    assert code == 1
    assert "passed: false" in out
    assert p.read_text().startswith("x_1,t,inequality,margin\n")


def test_gamma_zero_higher_order_is_config_error(capsys):
    code, _, err = run(capsys, "bound", "--gamma", "0", "--class", "A_h", "--N", "2")
    assert code == 2
    assert "gamma = 0" in err and "remark2_bound" in err


def test_pure_noise_needs_explicit_horizon(capsys):
    code, _, err = run(capsys, "bound", "--system", "pure-noise")
    assert code == 2


def test_unknown_config_keys_listed(capsys, tmp_path):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("params.mu = 0.1\nfoo.bar = 1\nzap = 2\n")
    code, _, err = run(capsys, "bound", "--config", str(cfg))
    assert code == 2
    assert "foo.bar" in err and "zap" in err


def test_unparseable_value(capsys):
    code, _, err = run(capsys, "bound", "--mu", "abc")
    assert code == 2 and "params.mu" in err


def test_epsilon_beyond_radius(capsys):
    code, _, err = run(capsys, "bound", "--epsilon", "0.7")
    assert code == 2 and "r0" in err


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_flags_override_file(capsys, tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("params.mu = 0.2\nparams.epsilon = 0.3\n")
    _, out, _ = run(capsys, "bound", "--config", str(cfg), "--mu", "0.05")
    assert [r["mu"] for r in rows(out)] == ["0.05"]


def test_bound_sweep_rows_round_trip(capsys):
    code, out, _ = run(capsys, "bound", "--mu", "0.05,0.1,0.2", "--N", "1,2", "--y0", "0.02,0.05")
    assert code == 0
    parsed = rows(out)
    assert len(parsed) == 12
    assert "\r" not in out
    for r in parsed:
        rep = BoundReport.from_row(r)
        assert rep.to_row() == r
        assert 0.0 <= rep.bound <= 1.0


def test_bound_theorem2(capsys):
    code, out, _ = run(capsys, "bound", "--noise", "damped", "--noise-rate", "0.5", "--gamma", "0", "--y0", "0.05")
    assert code == 0
    r = rows(out)[0]
    assert r["regime"] == "theorem2" and float(r["bound"]) == pytest.approx(0.25)


def test_compare_pure_noise_dominated(capsys):
    code, out, err = run(
        capsys, "compare", "--config", "experiments/pure_noise_compare.cfg", "--n-traj", "500"
    )
    assert code == 0
    parsed = rows(out)
    assert tuple(parsed[0]) == COMPARE_COLUMNS
    assert all(r["dominated"] == "true" for r in parsed)


def test_compare_failure_exit_code(capsys):
    # a deliberately wrong certificate: the pure-noise bound with h forced to 0 is V(y0)/eps^2 = 0
    code, out, _ = run(
        capsys, "compare", "--system", "pure-noise", "--h", "0", "--horizon", "explicit", "--T", "10",
        "--mu", "0.1", "--y0", "0", "--n-traj", "500", "--dt", "1e-2",
    )
    assert code == 1
    assert rows(out)[0]["dominated"] == "false"


def test_sweep_byte_identical(tmp_path, capsys):
    args = ["sweep", "--mu", "0.1,0.2", "--t-cap-steps", "500", "--n-traj", "300", "--seed", "77"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, *args, "--out", str(a))[0] == 0
    assert run(capsys, *args, "--out", str(b), "--workers", "1")[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes().endswith(b"\n") and b"\r\n" not in a.read_bytes()


def test_simulate_single(capsys):
    code, out, _ = run(capsys, "simulate", "--system", "linear-ou", "--horizon", "explicit", "--T", "1",
                       "--mu", "0.1", "--epsilon", "0.5", "--y0", "0", "--n-traj", "200")
    assert code == 0
    r = rows(out)[0]
    assert int(r["n"]) == 200 and 0.0 <= float(r["p_hat"]) <= 1.0


def test_simulate_rejects_lists(capsys):
    assert run(capsys, "simulate", "--mu", "0.1,0.2")[0] == 2


def test_simulate_horizon_beyond_step_cap(capsys):
    code, _, err = run(capsys, "simulate", "--mu", "0.01", "--N", "2", "--max-steps", "1000")
    assert code == 2 and "max_steps" in err


def test_escape_demo_small(capsys, tmp_path):
    paths = tmp_path / "p.csv"
    code, out, err = run(capsys, "escape-demo", "--demo-trajectories", "5", "--demo-T", "200",
                         "--path-out", str(paths))
    assert code == 0
    assert len(rows(out)) == 5
    assert paths.read_text().startswith("trajectory,t,y_1\n")


def test_inline_system(capsys):
    code, out, _ = run(capsys, "certify", "--system", "inline", "--drift=-y1", "--gamma", "2", "--r0", "1")
    assert code == 0 and "passed: true" in out


def test_config_parsing():
    raw = parse_config_text("# comment\n\nparams.mu = 0.1, 0.2  # trailing\nrun.seed=5\n")
    cfg = ExperimentConfig(raw)
    assert cfg["params.mu"] == [0.1, 0.2] and cfg["run.seed"] == 5
    with pytest.raises(ConfigurationError):
        parse_config_text("no equals sign here\n")


def test_workers_env(monkeypatch):
    monkeypatch.setenv("NOISESTAB_WORKERS", "3")
    assert ExperimentConfig().workers == 3


def test_reference_page_lists_every_key():
    page = reference_markdown()
    for k in KEYS:
        assert f"`{k.name}`" in page and f"`{k.flag}`" in page


def test_reference_page_is_current():
    from pathlib import Path

    page = Path(__file__).resolve().parents[1] / "docs" / "config_reference.md"
    assert page.read_text() == reference_markdown()


def test_help_lists_defaults(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    assert "integrator.dt" in out and "run.seed" in out
