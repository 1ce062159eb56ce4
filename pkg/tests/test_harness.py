import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ehrl.agents.training import make_env
from ehrl.cli import main
from ehrl.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config, save_config
from ehrl.env import channel_gain, rate_per_ue
from ehrl.experiment import compare_policies, metrics_filename, run_experiment, window_bounds
from ehrl.metrics import (HEADER, TRUNCATION_MARKER, moving_average, read_metrics, relative_change,
                          stabilization_step)
from ehrl.nn import NumericalFault

# ---------------------------------------------------------------------------
# config


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = load_config(path)
    assert cfg == ExperimentConfig()
    assert cfg.beta == 100.0 and cfg.gamma == 0.99 and cfg.learning_rate == 1e-4
    assert cfg.batch_size == 16 and cfg.replay_capacity == 100_000 and cfg.lstm_units == 128
    assert cfg.history_window == 10 and cfg.gamma_pred == 0.9


@pytest.mark.parametrize("text", ["k_channels = 0", "gamma = 1.0", "learning_rate = -1", "bogus_key = 3",
                                  "n_ues 4", "fading_enabled = yes", "n_ues = 2.5", "algorithm = sarsa"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_config_comments_and_tuples():
    cfg = parse_config("# header\nn_ues = 3  # three\nenergy_rates = 1.0, 0.5,0.25\ninitial_battery = none\n")
    assert cfg.n_ues == 3 and cfg.energy_rates == (1.0, 0.5, 0.25) and cfg.initial_battery is None


@given(st.builds(
    ExperimentConfig,
    n_ues=st.integers(3, 40), k_channels=st.integers(1, 3), battery_capacity=st.integers(2, 9),
    seed=st.integers(0, 2**40), gamma=st.floats(0.0, 0.999), learning_rate=st.floats(0.0, 1.0),
    fading_enabled=st.booleans(), energy_rate_range=st.tuples(st.floats(0, 1), st.floats(1, 3)),
    initial_battery=st.one_of(st.none(), st.integers(0, 2)), out_dir=st.text("abc/_-", min_size=1, max_size=12),
    action_mode=st.sampled_from(["enumerated", "factorized"]), history_scatter=st.booleans()))
def test_config_roundtrip(cfg):
    assert parse_config(dump_config(cfg)) == cfg


def test_config_save_load(tmp_path):
    cfg = ExperimentConfig(n_ues=7, energy_rates=(0.1,) * 7, algorithm="joint")
    save_config(cfg, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == cfg
    assert load_config(tmp_path / "c.cfg", seed=5).seed == 5

# ---------------------------------------------------------------------------
# metrics


def test_moving_average_examples():
    assert moving_average([1.0, 2.0, 3.0], 2).tolist() == [1.0, 1.5, 2.5]
    x = np.random.default_rng(0).normal(size=50)
    assert np.array_equal(moving_average(x, 1), x)
    np.testing.assert_array_equal(moving_average(np.full(40, 3.25), 7), np.full(40, 3.25))
    with pytest.raises(ValueError):
        moving_average([1.0], 0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=80), st.integers(1, 100))
def test_moving_average_definition(xs, window):
    x = np.array(xs)
    ref = [np.mean(x[max(0, i - window + 1): i + 1]) for i in range(x.size)]
    np.testing.assert_allclose(moving_average(x, window), ref, rtol=1e-9, atol=1e-6)


def test_stabilization_step():
    assert stabilization_step(np.ones(100), 10) == 0
    x = np.concatenate([np.linspace(1, 10, 50), np.full(100, 10.0)])
    step = stabilization_step(x, 10)
    assert relative_change(x, 10)[step - 1] >= 0.1 and np.all(relative_change(x, 10)[step:] < 0.1)
    assert stabilization_step(np.arange(1, 100.0), 10) is None or stabilization_step(np.arange(1, 100.0), 10) > 0
    assert stabilization_step(np.ones(5), 10) is None
    assert stabilization_step(np.r_[np.ones(50), 2.0], 10) is None

# ---------------------------------------------------------------------------
# experiments

TINY = dict(n_ues=4, k_channels=2, battery_capacity=3, total_steps=120, lstm_units=4, history_window=3,
            warmup_steps=8, batch_size=4, smoothing_window=20)


@pytest.mark.parametrize("algo", ["access", "predict", "joint", "baseline:rr", "baseline:random", "baseline:mp",
                                  "baseline:oracle"])
def test_run_experiment_is_deterministic(tmp_path, algo):
    cfg = ExperimentConfig(algorithm=algo, seed=3, **TINY)
    _, s1 = run_experiment(cfg, tmp_path / "a")
    _, s2 = run_experiment(cfg, tmp_path / "b")
    a = (tmp_path / "a" / metrics_filename(algo, 3)).read_bytes()
    assert a == (tmp_path / "b" / metrics_filename(algo, 3)).read_bytes()
    data = read_metrics(tmp_path / "a" / metrics_filename(algo, 3))
    assert a.decode().splitlines()[0] == HEADER and not data["truncated"]
    assert np.all(np.diff(data["step"]) == 1) and data["step"][0] == 0
    np.testing.assert_array_equal(data["reward_smooth"], moving_average(data["reward"], 20))
    assert s1["final_reward_smooth"] == s2["final_reward_smooth"] == data["reward_smooth"][-1]


def test_run_experiment_truncates_on_failure(tmp_path):
    cfg = ExperimentConfig(algorithm="access", learning_rate=1e12, grad_clip=1e300, **TINY)
    with pytest.raises(NumericalFault), np.errstate(all="ignore"):
        run_experiment(cfg, tmp_path)
    text = (tmp_path / metrics_filename("access", 0)).read_text().splitlines()
    assert text[-1].startswith(TRUNCATION_MARKER)
    assert read_metrics(tmp_path / metrics_filename("access", 0))["truncated"]


def _fixed_gain_config(**kw):
    pos = (100.0, 250.0, 250.0, 400.0, 400.0, 250.0, 250.0, 150.0)
    # two units arrive every slot and P = 2, so every scheduled UE always transmits
    return ExperimentConfig(n_ues=4, k_channels=2, battery_capacity=4, tx_power=2, arrival_mode="deterministic",
                            energy_rates=(2.0,) * 4, initial_battery=4, fading_enabled=False, ue_speed_mps=0.0,
                            ue_positions=pos, total_steps=400, **kw)


def test_random_baseline_matches_expectation():
    cfg = _fixed_gain_config(algorithm="baseline:random")
    scen = cfg.scenario()
    pos = np.array(scen.ue_positions).reshape(4, 2)
    r = rate_per_ue(channel_gain(pos, scen.bs_position), scen)
    n, k = 4, 2
    mean = k / n * r.sum()
    # variance of a K-of-N sample sum drawn without replacement
    var = k * (n - k) / (n - 1) * r.var()
    finals = [run_experiment(cfg.replace(seed=s), write=False)[1]["final_reward_smooth"] for s in range(10)]
    se = np.sqrt(var / cfg.smoothing_window / len(finals))
    assert abs(np.mean(finals) - mean) < 3 * se


def test_compare_identical_rows_and_bounds():
    cfg = ExperimentConfig(**{**TINY, "total_steps": 300})
    table = compare_policies(cfg, ["baseline:rr", "baseline:mp", "baseline:rr"], seeds=[0, 1])
    names = [r.name for r in table.rows]
    assert names == ["baseline:rr", "baseline:mp", "baseline:rr", "bound:relaxation", "bound:oracle"]
    assert table.rows[0].values == table.rows[2].values
    assert table.row("bound:relaxation").mean >= table.row("bound:oracle").mean >= table.row("baseline:mp").mean
    assert "bound:relaxation" in table.format()


def test_bound_rows_skip_oracle_when_too_large():
    cfg = ExperimentConfig(n_ues=10, k_channels=3, total_steps=300)
    assert set(window_bounds(cfg, 200)) == {"relaxation"}


def test_common_random_numbers():
    # the environment stream depends only on the seed, never on the algorithm or its actions
    cfg = ExperimentConfig(**TINY)
    e1, e2 = make_env(cfg.replace(algorithm="baseline:rr")), make_env(cfg.replace(algorithm="joint"))
    for _ in range(50):
        assert np.array_equal(e1.gains, e2.gains)
        a1, a2 = e1.step([0, 1]).arrivals, e2.step([2, 3]).arrivals
        assert np.array_equal(a1, a2)

# ---------------------------------------------------------------------------
# command line


def test_cli_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text("n_ues = 4\nk_channels = 2\nbattery_capacity = 3\ntotal_steps = 60\n")
    assert main(["baseline", "rr", "--config", str(good), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "baseline_rr-0.csv").exists()
    assert main(["train-access", "--config", str(good), "--seed", "2", "--steps", "30",
                 "--out", str(tmp_path / "o")]) == 0
    assert len(read_metrics(tmp_path / "o" / "access-2.csv")["step"]) == 30
    bad = tmp_path / "bad.cfg"
    bad.write_text("k_channels = 0\n")
    assert main(["train-joint", "--config", str(bad)]) == 2
    assert main(["train-joint", "--config", str(tmp_path / "missing.cfg")]) == 2
    boom = tmp_path / "boom.cfg"
    boom.write_text("n_ues = 4\nk_channels = 2\ntotal_steps = 200\nlstm_units = 4\nlearning_rate = 1e12\n"
                    "grad_clip = 1e300\n")
    with np.errstate(all="ignore"):
        assert main(["train-access", "--config", str(boom), "--out", str(tmp_path / "o")]) == 3
    assert main(["oracle", "--steps", "1000"]) == 4
    assert main(["oracle", "--config", str(good), "--horizon", "10"]) == 0
    out = capsys.readouterr().out
    assert "relaxation_bound" in out and "dp_oracle" in out


def test_cli_compare(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text("n_ues = 4\nk_channels = 2\nbattery_capacity = 3\ntotal_steps = 100\n")
    assert main(["compare", "--config", str(good), "--policies", "baseline:rr,baseline:random",
                 "--n-seeds", "2"]) == 0
    assert "bound:oracle" in capsys.readouterr().out
    assert main(["compare", "--config", str(good), "--policies", "baseline:nope"]) == 2


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--n-seeds", "1"]) == 0
    assert main(["gradcheck", "--n-seeds", "1", "--tol", "1e-20"]) == 1
    assert "FAIL" in capsys.readouterr().out
