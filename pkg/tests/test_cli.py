"""End-to-end CLI tests: config parsing, CSV contracts, exit codes."""

import numpy as np
import pytest

from liqzone import (
    CappedBachelier,
    CostParams,
    GKernel,
    Martingale,
    TargetZoneState,
    ac_policy,
    extra_rate,
    estimate_value,
    urgency,
)
from liqzone.cli import ConfigError, load_config, main

BASE = """
model = bachelier-capped
m0 = 1.0
sigma = 0.5
p_bar = 1.0
lambda = 0.1
gamma = 1.0
big_gamma = 1.0
T = 1.0
x0 = 1.0
"""


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_load_config_defaults_and_values(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.model == "bachelier-capped"
    assert cfg.n_steps == 4096 and cfg.n_paths == 10000 and cfg.seed == 0
    assert cfg.tau_count == 50 and cfg.money_count == 50
    assert cfg.tau_max == 1.0 and cfg.money_max == 1.0


def test_missing_required_key_names_it(tmp_path, capsys):
    bad = BASE.replace("gamma = 1.0\n", "", 1)
    code = main(["surface", "--config", write(tmp_path, bad),
                 "--output", str(tmp_path / "s.csv")])
    assert code == 2
    assert "gamma" in capsys.readouterr().err


def test_unknown_key_rejected_with_line_number(tmp_path):
    with pytest.raises(ConfigError, match="volatility"):
        load_config(write(tmp_path, BASE + "volatility = 2\n"))


def test_duplicate_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="sigma"):
        load_config(write(tmp_path, BASE + "sigma = 0.4\n"))


def test_non_numeric_value_rejected(tmp_path):
    with pytest.raises(ConfigError, match="lambda"):
        load_config(write(tmp_path, BASE.replace("lambda = 0.1", "lambda = fast")))


def test_unknown_model_exits_2(tmp_path, capsys):
    bad = BASE.replace("bachelier-capped", "heston")
    assert main(["surface", "--config", write(tmp_path, bad),
                 "--output", str(tmp_path / "s.csv")]) == 2
    assert "model" in capsys.readouterr().err


def test_drift_key_requires_drift_model(tmp_path):
    with pytest.raises(ConfigError, match="drift"):
        load_config(write(tmp_path, BASE + "drift = -0.1\n"))


def test_surface_csv_contract(tmp_path):
    cfg = BASE + "tau_count = 3\nmoney_count = 4\ntau_min = 0.5\nmoney_max = 0.5\n"
    out = tmp_path / "surf.csv"
    assert main(["surface", "--config", write(tmp_path, cfg),
                 "--output", str(out)]) == 0
    raw = out.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().split("\n")
    assert lines[0] == "tau,moneyness,rate,rate_ac,rate_extra,relative_increase"
    assert lines[-1] == ""
    assert len(lines) == 2 + 3 * 4  # header + cells + trailing newline

    # one cell against the library, full 17-digit round trip
    costs = CostParams(lam=0.1, gamma=1.0, big_gamma=1.0, horizon=1.0, x0=1.0)
    kernel = GKernel.from_costs(costs)
    model = CappedBachelier(m0=1.0, sigma=0.5, p_bar=1.0)
    tau, money, rate, rate_ac, rate_extra, rel = map(float, lines[1].split(","))
    assert (tau, money) == (0.5, 0.0)
    st = TargetZoneState(t=1.0 - tau, m=model.p_bar - money, p=model.p_bar - money)
    extra = extra_rate(kernel, costs, model, st)
    assert rate_extra == pytest.approx(extra, rel=1e-15)
    assert rate_ac == pytest.approx(urgency(kernel, 1.0 - tau) * costs.x0, rel=1e-15)
    assert rate == pytest.approx(rate_ac + rate_extra, rel=1e-15)
    assert rel == pytest.approx(rate_extra / rate_ac, rel=1e-15)

    # rerun is byte identical
    out2 = tmp_path / "surf2.csv"
    main(["surface", "--config", write(tmp_path, cfg, "again.cfg"),
          "--output", str(out2)])
    assert out2.read_bytes() == raw


def test_simulate_csv_contract(tmp_path):
    cfg = BASE.replace("gamma = 1.0", "gamma = 1e-5").replace(
        "big_gamma = 1.0", "big_gamma = 1e-5")
    cfg += "n_paths = 200\nn_steps = 64\nseed = 9\n"
    out = tmp_path / "sim.csv"
    assert main(["simulate", "--config", write(tmp_path, cfg),
                 "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "policy,mean,std_error,n_paths,seed"
    assert lines[1].startswith("optimal,") and lines[2].startswith("almgren-chriss,")
    assert lines[1].endswith(",200,9") and lines[2].endswith(",200,9")

    # the almgren-chriss row is the plain estimate of the signal-free policy
    costs = CostParams(lam=0.1, gamma=1e-5, big_gamma=1e-5, horizon=1.0, x0=1.0)
    model = CappedBachelier(m0=1.0, sigma=0.5, p_bar=1.0)
    est = estimate_value(model, ac_policy(GKernel.from_costs(costs)), costs,
                         n_paths=200, n_steps=64, master_seed=9)
    assert float(lines[2].split(",")[1]) == pytest.approx(est.mean, rel=1e-15)


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = BASE + "n_paths = 50\nn_steps = 32\n"
    path = write(tmp_path, cfg)
    a, b, c = (str(tmp_path / name) for name in ("a.csv", "b.csv", "c.csv"))
    main(["simulate", "--config", path, "--output", a])
    main(["simulate", "--config", path, "--output", b, "--seed", "1"])
    main(["simulate", "--config", path, "--output", c])
    assert open(a).read() != open(b).read()
    assert open(a).read() == open(c).read()


def test_value_csv_martingale_closed_form(tmp_path):
    cfg = """
model = martingale
m0 = 2.0
sigma = 0.5
lambda = 0.1
gamma = 1.0
big_gamma = 1.0
T = 1.0
x0 = 1.0
n_paths = 100
n_steps = 64
"""
    out = tmp_path / "val.csv"
    assert main(["value", "--config", write(tmp_path, cfg),
                 "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "p0,x0,v2_0,v1_0,v0_0,v0_se,value,mc_value,mc_se"
    p0, x0, v2_0, v1_0, v0_0, v0_se, value, mc_value, mc_se = map(
        float, lines[1].split(","))
    costs = CostParams(lam=0.1, gamma=1.0, big_gamma=1.0, horizon=1.0, x0=1.0)
    kernel = GKernel.from_costs(costs)
    assert (p0, x0) == (2.0, 1.0)
    assert v2_0 == pytest.approx(-urgency(kernel, 0.0), rel=1e-15)
    assert v1_0 == 0.0 and v0_0 == 0.0 and v0_se == 0.0
    assert value == pytest.approx(p0 + costs.lam * v2_0, rel=1e-15)
    assert abs(mc_value - value) < 3.0 * mc_se + 2e-2


def test_value_row_is_self_consistent(tmp_path):
    cfg = BASE + "n_paths = 100\nn_steps = 64\nseed = 5\n"
    out = tmp_path / "val0.csv"
    assert main(["value", "--config", write(tmp_path, cfg),
                 "--output", str(out)]) == 0
    row = list(map(float, out.read_text().splitlines()[1].split(",")))
    p0, x0, v2_0, v1_0, v0_0, _, value = row[:7]
    assert v0_0 > 0.0 and v1_0 < 0.0  # capped model: paid optionality
    quad = v0_0 + 2.0 * v1_0 * x0 + v2_0 * x0 * x0
    assert value == pytest.approx(p0 * x0 + 0.1 * quad, rel=1e-12)


def test_verify_passes_at_moderate_resolution(tmp_path, capsys):
    cfg = """
model = drift
drift = -0.1
m0 = 1.0
lambda = 0.1
gamma = 1.0
big_gamma = 1.0
T = 1.0
x0 = 1.0
n_steps = 400
"""
    assert main(["verify", "--config", write(tmp_path, cfg)]) == 0
    out = capsys.readouterr().out
    assert "verify: PASS" in out
    for check in ("trajectory error", "convergence order",
                  "initial rate error", "terminal residual"):
        assert check in out


def test_verify_fails_on_coarse_grid(tmp_path, capsys):
    # 40 steps leave a first-cell rate error of ~2.7e-4, over the 1e-4 gate
    cfg = """
model = martingale
m0 = 1.0
lambda = 0.1
gamma = 1.0
big_gamma = 1.0
T = 1.0
x0 = 1.0
n_steps = 40
"""
    assert main(["verify", "--config", write(tmp_path, cfg)]) == 1
    out = capsys.readouterr().out
    assert "verify: FAIL" in out
    assert "initial rate error" in out


def test_verify_rejects_capped_models(tmp_path):
    assert main(["verify", "--config", write(tmp_path, BASE)]) == 2


def test_surface_rejects_uncapped_models(tmp_path):
    cfg = BASE.replace("model = bachelier-capped", "model = martingale")
    assert main(["surface", "--config", write(tmp_path, cfg),
                 "--output", str(tmp_path / "s.csv")]) == 2


def test_invalid_overrides_exit_2(tmp_path):
    path = write(tmp_path, BASE)
    assert main(["simulate", "--config", path, "--output",
                 str(tmp_path / "x.csv"), "--steps", "0"]) == 2
    assert main(["simulate", "--config", path, "--output",
                 str(tmp_path / "x.csv"), "--paths", "1"]) == 2
    assert main(["simulate", "--config", path, "--output",
                 str(tmp_path / "x.csv"), "--seed", "-3"]) == 2


def test_missing_output_named(tmp_path, capsys):
    assert main(["surface", "--config", write(tmp_path, BASE)]) == 2
    assert "output" in capsys.readouterr().err


def test_missing_config_file_exit_2(tmp_path):
    assert main(["surface", "--config", str(tmp_path / "nope.cfg")]) == 2
