"""Acceptance suite: every release criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion. The heavy criteria (learnability, strategy sanity, the
end-to-end run) use the synthetic market at desk scale and respect the
stated runtime budgets.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from quantformer.autodiff import Tape, gradient
from quantformer.labeling import LabelScheme, assign_label, boundary_term, quantile_ranks
from quantformer.market_data import CrossSection, FeatureWindow
from quantformer.metrics import (alpha_beta, annualized_return, max_drawdown, sharpe, sortino,
                                 turnover, var_99, volatility, win_rate, ReturnSeries)
from quantformer.model import ModelConfig, forward, init_parameters, mse_loss, predict
from quantformer.strategy import StrategyConfig, run_backtest, run_equal_weight
from quantformer.trainer import TrainConfig, split_by_time, train

from conftest import rel_err, synthetic_pipeline


def announce(number, name):
    print(f"\nACCEPTANCE {number} ({name}): PASS")


# -- 1: gradients --------------------------------------------------------------

def test_c1_full_network_gradients_match_finite_differences():
    started = time.time()
    rng = np.random.default_rng(42)
    x = rng.standard_normal((8, 20, 2))
    targets = np.eye(3)[rng.integers(0, 3, 8)]
    params = init_parameters(ModelConfig(hidden_dim=4, heads=2, blocks=1, classes=3, seed=7))

    tape = Tape()
    loss = mse_loss(forward(x, params, tape), targets, tape)
    grads = gradient(loss, tape, params.values())

    h = 1e-5
    worst = 0.0
    for name, tensor in params.tensors.items():
        flat = tensor.data.ravel()
        analytic = grads[params.names().index(name)].ravel()
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + h
            up = float(mse_loss(forward(x, params), targets).data)
            flat[j] = original - h
            down = float(mse_loss(forward(x, params), targets).data)
            flat[j] = original
            numeric = (up - down) / (2.0 * h)
            err = float(rel_err(analytic[j], numeric))
            worst = max(worst, err)
            assert err <= 1e-4, f"{name}[{j}]: rel err {err:.3e}"
    elapsed = time.time() - started
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s"
    print(f"\n  checked every coordinate of {len(params.tensors)} parameter tensors, "
          f"worst rel err {worst:.2e}, {elapsed:.1f}s")
    announce(1, "gradient correctness")


# -- 2: architecture invariant ---------------------------------------------------

def test_c2_pooling_controls_permutation_sensitivity():
    rng = np.random.default_rng(1)
    mean_cfg = ModelConfig(hidden_dim=8, heads=4, blocks=2, classes=3, pooling="mean", seed=3)
    mean_params = init_parameters(mean_cfg)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal((1, 20, 2))
        base = predict(x, mean_params)
        perm = rng.permutation(20)
        delta = float(np.abs(predict(x[:, perm, :], mean_params) - base).max())
        worst = max(worst, delta)
    assert worst <= 1e-10, f"mean pooling moved by {worst:.2e} under permutation"

    last_cfg = ModelConfig(hidden_dim=8, heads=4, blocks=2, classes=3, pooling="last", seed=3)
    last_params = init_parameters(last_cfg)
    x = rng.standard_normal((1, 20, 2))
    base = predict(x, last_params)
    biggest = 0.0
    for _ in range(20):
        perm = rng.permutation(20)
        biggest = max(biggest, float(np.abs(predict(x[:, perm, :], last_params) - base).max()))
    assert biggest > 1e-6, "last-token pooling should be position sensitive"
    print(f"\n  mean pooling worst delta {worst:.2e}; last pooling max delta {biggest:.2e}")
    announce(2, "architecture invariant")


# -- 3: labeling exactness -------------------------------------------------------

def test_c3_labeling_exactness():
    assert boundary_term(3, 0.2) == 0.2
    assert boundary_term(5, 0.2) == 0.0

    rng = np.random.default_rng(3)
    returns = rng.standard_normal(100)
    assert len(np.unique(returns)) == 100
    psis = quantile_ranks(returns)

    five = LabelScheme(bins=5, fraction=0.2)
    counts5 = np.stack([assign_label(p, five) for p in psis]).sum(axis=0)
    np.testing.assert_array_equal(counts5, [20, 20, 20, 20, 20])

    three = LabelScheme(bins=3, fraction=0.2)
    labels3 = np.stack([assign_label(p, three) for p in psis])
    np.testing.assert_array_equal(labels3.sum(axis=0), [20, 20, 20])
    assert int((labels3.sum(axis=1) == 0).sum()) == 40
    print("\n  5-band: 20 per bin; 3-band: 20/20/20 labeled + 40 null; "
          "xi(3,.2)=0.2 and xi(5,.2)=0 exact")
    announce(3, "labeling exactness")


# -- 4: accounting identity ------------------------------------------------------

def test_c4_hand_computed_backtest():
    scheme = LabelScheme(bins=3, fraction=0.2)
    realized = {19: {"A": 0.10, "B": 0.05},
                20: {"A": -0.05, "B": 0.20},
                21: {"A": 0.02, "B": 0.01}}
    choices = {19: "A", 20: "B", 21: "A"}
    labels = {19: "t19", 20: "t20", 21: "t21", 22: "t22"}

    def sections():
        return [CrossSection(t, [FeatureWindow(n, t, np.zeros((20, 2))) for n in ("A", "B")],
                             normalized=True) for t in (19, 20, 21)]

    def predictor(section):
        chosen = choices[section.decision_time]
        p1 = np.array([0.2 if t == chosen else 0.8 for t in section.tickers])
        rest = (1.0 - p1) / 2.0
        return np.column_stack([p1, rest, rest])

    free = run_backtest(predictor, sections(), realized, scheme,
                        StrategyConfig(selection=(0, 1, 0), fee_rate=0.0, initial_cash=100.0),
                        labels)
    assert abs(free.values[-1] / (100.0 * 1.10 * 1.20 * 1.02) - 1.0) <= 1e-9

    paid = run_backtest(predictor, sections(), realized, scheme,
                        StrategyConfig(selection=(0, 1, 0), fee_rate=0.003, initial_cash=100.0),
                        labels)
    hand = 100.0 * (1 - 0.003)          # enter A
    hand *= 1.10 * (1 - 0.003 * 2.0)    # A gains, rotate to B
    hand *= 1.20 * (1 - 0.003 * 2.0)    # B gains, rotate to A
    hand *= 1.02                        # settle
    assert abs(paid.values[-1] / hand - 1.0) <= 1e-9

    for curve in (free, paid):
        for snapshot in curve.weights_history:
            total = sum(snapshot.values())
            assert total == pytest.approx(1.0, abs=1e-12) or total == 0.0
            assert all(w >= 0.0 for w in snapshot.values())
    print(f"\n  fee-free equity {free.values[-1]:.6f} and fee-paying {paid.values[-1]:.6f} "
          "match hand accounting to 1e-9")
    announce(4, "accounting identity")


# -- 5: learnability ---------------------------------------------------------------

def test_c5_learnability_at_desk_scale():
    started = time.time()
    samples, _, _, _, _ = synthetic_pipeline(seed=11, n_stocks=50, n_periods=120, signal=1.0)
    cutoff = 99
    train_set, test_set = split_by_time(samples, cutoff - 1)
    params, history = train(
        train_set,
        ModelConfig(hidden_dim=16, heads=4, blocks=2, classes=3, seed=11),
        TrainConfig(epochs=50, batch_size=64, learning_rate=1e-3, seed=11, cutoff=cutoff - 1))
    x = np.stack([s.features.matrix for s in test_set])
    y = np.stack([s.target for s in test_set])
    accuracy = float(np.mean(predict(x, params).argmax(axis=1) == y.argmax(axis=1)))
    elapsed = time.time() - started
    assert accuracy >= 0.80, f"held-out accuracy {accuracy:.3f} < 0.80"
    assert elapsed < 300.0, f"learnability run took {elapsed:.0f}s"
    print(f"\n  held-out bin accuracy {accuracy:.3f} (chance 0.333) on {len(test_set)} samples; "
          f"loss {history[0]:.3f} -> {history[-1]:.3f}; {elapsed:.0f}s")
    announce(5, "learnability")


# -- 6: strategy sanity --------------------------------------------------------------

def test_c6_strategy_beats_uniform_benchmark():
    scheme_cfg = dict(bins=3, fraction=0.2, include_null=False)
    strategy = StrategyConfig(selection=(1, 0, 0), fee_rate=0.003, initial_cash=1e6)
    cutoff = 99
    model_wins = 0
    oracle_wins = 0
    for seed in range(5):
        samples, sections, panel, scheme, returns_by_time = synthetic_pipeline(
            seed=seed, n_stocks=50, n_periods=120, signal=1.0, **scheme_cfg)
        train_set, _ = split_by_time(samples, cutoff - 1)
        params, _ = train(
            train_set,
            ModelConfig(hidden_dim=8, heads=2, blocks=1, classes=3, seed=seed),
            TrainConfig(epochs=12, batch_size=64, learning_rate=1e-3, seed=seed,
                        cutoff=cutoff - 1))
        bt_sections = [s for s in sections if s.decision_time >= cutoff]
        realized = {s.decision_time: returns_by_time[s.decision_time] for s in bt_sections}
        labels = dict(enumerate(panel.labels))

        model_curve = run_backtest(lambda s: predict(s.stacked(), params), bt_sections,
                                   realized, scheme, strategy, labels)
        bench_curve = run_equal_weight(bt_sections, realized, labels, initial_cash=1e6)

        def oracle(section):
            rets = np.array([realized[section.decision_time][t] for t in section.tickers])
            p1 = 1.0 - 0.9 * quantile_ranks(rets)  # decreasing in the true next return
            rest = (1.0 - p1) / 2.0
            return np.column_stack([p1, rest, rest])

        oracle_curve = run_backtest(oracle, bt_sections, realized, scheme, strategy, labels)

        model_wins += model_curve.values[-1] > bench_curve.values[-1]
        oracle_wins += (oracle_curve.values[-1] > bench_curve.values[-1]
                        and oracle_curve.values[-1] > model_curve.values[-1])
    assert model_wins >= 4, f"trained strategy beat the benchmark in only {model_wins}/5 seeds"
    assert oracle_wins == 5, f"oracle beat both in only {oracle_wins}/5 seeds"
    print(f"\n  trained strategy beat equal weight in {model_wins}/5 seeds; "
          f"oracle beat both in {oracle_wins}/5")
    announce(6, "strategy sanity")


# -- 7: metric oracles ----------------------------------------------------------------

def test_c7_metrics_match_brute_force():
    rng = np.random.default_rng(99)
    returns = rng.normal(0.004, 0.03, 1000)
    benchmark = 0.5 * returns + rng.normal(0.001, 0.02, 1000)
    series = ReturnSeries(returns, benchmark, periods_per_year=12, risk_free_rate=0.02)
    equity = 100.0 * np.cumprod(1.0 + returns)

    # annual return: explicit product loop
    growth = 1.0
    for r in returns:
        growth *= 1.0 + r
    assert abs(annualized_return(returns, 12) - (growth ** (12 / 1000) - 1)) <= 1e-12

    # sharpe and volatility: two-pass mean/std
    mean = sum(returns) / len(returns)
    sd = math.sqrt(sum((r - mean) ** 2 for r in returns) / (len(returns) - 1))
    assert abs(sharpe(series) - (mean * 12 - 0.02) / (sd * math.sqrt(12))) <= 1e-12
    assert abs(volatility(returns, 12) - sd * math.sqrt(12)) <= 1e-12

    # alpha/beta: explicit covariance sums
    mb = sum(benchmark) / len(benchmark)
    cov = sum((p - mean) * (m - mb) for p, m in zip(returns, benchmark)) / (len(returns) - 1)
    var_m = sum((m - mb) ** 2 for m in benchmark) / (len(benchmark) - 1)
    beta_o = cov / var_m
    alpha_o = (mean * 12 - 0.02) - beta_o * (mb * 12 - 0.02)
    alpha_v, beta_v = alpha_beta(series)
    assert abs(beta_v - beta_o) <= 1e-12
    assert abs(alpha_v - alpha_o) <= 1e-12

    # drawdown: quadratic scan
    worst = 0.0
    for i in range(len(equity)):
        for j in range(i, len(equity)):
            worst = max(worst, (equity[i] - equity[j]) / equity[i])
    assert abs(max_drawdown(equity) - worst) <= 1e-12

    # sortino: explicit downside mass
    rf_p = 0.02 / 12
    downside = [min(r - rf_p, 0.0) for r in returns]
    dd = math.sqrt(sum(d * d for d in downside) / len(downside)) * math.sqrt(12)
    assert abs(sortino(series) - (mean * 12 - 0.02) / dd) <= 1e-12

    # VaR99: sorted-loss order statistic
    losses = sorted(-r for r in returns)
    assert var_99(returns) == losses[math.ceil(0.99 * 1000) - 1]

    # turnover: direct half-L1
    hist = [{"A": 1.0}, {"A": 0.25, "B": 0.75}, {"B": 1.0}]
    tr_series, tr_mean = turnover(hist)
    np.testing.assert_allclose(tr_series, [0.75, 0.25], atol=1e-15)

    # closed-form spot checks
    identical = ReturnSeries(benchmark.copy(), benchmark, 12, risk_free_rate=0.01)
    alpha_i, beta_i = alpha_beta(identical)
    assert abs(beta_i - 1.0) <= 1e-12 and abs(alpha_i) <= 1e-12
    assert max_drawdown([1.0, 1.01, 1.02]) == 0.0
    assert var_99(np.full(200, 0.007)) == pytest.approx(-0.007, abs=1e-15)
    assert win_rate([0.01, -0.01, 0.0, 0.02]) == 0.5
    print("\n  AR, SR, alpha/beta, MD, Sortino, VaR99, TR, sigma all match "
          "independent oracles at 1e-12")
    announce(7, "metric oracles")


# -- 8: determinism ---------------------------------------------------------------------

def _run_pipeline_subprocess(config_path, hash_seed):
    env = dict(os.environ, PYTHONHASHSEED=str(hash_seed))
    for command in ("synth", "train", "backtest", "report"):
        subprocess.run([sys.executable, "-m", "quantformer", command,
                        "--config", str(config_path)],
                       check=True, env=env, capture_output=True)


def test_c8_bit_identical_reruns(tmp_path):
    artifacts = ("checkpoint.bin", "loss_history.csv", "equity.csv", "weights.csv",
                 "benchmark.csv", "report.json")
    digests = []
    for run, hash_seed in (("a", "1"), ("b", "371")):
        out_dir = tmp_path / run
        config = {
            "name": "det", "seed": 17, "frequency": "monthly",
            "synthetic_stocks": 12, "synthetic_periods": 45, "synthetic_signal": 1.0,
            "label_bins": 3, "label_fraction": 0.2,
            "hidden_dim": 8, "heads": 2, "blocks": 1,
            "epochs": 2, "batch_size": 32, "train_cutoff": 35,
            "output_dir": str(out_dir),
        }
        config_path = tmp_path / f"det_{run}.json"
        config_path.write_text(json.dumps(config), encoding="utf-8")
        _run_pipeline_subprocess(config_path, hash_seed)
        digests.append({name: (out_dir / name).read_bytes() for name in artifacts})

    for name in artifacts:
        assert digests[0][name] == digests[1][name], f"{name} differs between reruns"
    print("\n  two fresh processes (different hash seeds) produced byte-identical "
          "checkpoint, CSVs and report")
    announce(8, "determinism")


# -- 9: end-to-end smoke -------------------------------------------------------------------

def test_c9_smoke_pipeline(tmp_path):
    from quantformer.cli import main

    started = time.time()
    out_dir = tmp_path / "smoke"
    config = {
        "name": "smoke", "seed": 23, "frequency": "monthly",
        "synthetic_stocks": 30, "synthetic_periods": 80, "synthetic_signal": 1.0,
        "label_bins": 3, "label_fraction": 0.2,
        "hidden_dim": 16, "heads": 4, "blocks": 2,
        "epochs": 10, "batch_size": 64, "train_cutoff": 64,
        "output_dir": str(out_dir),
    }
    config_path = tmp_path / "smoke.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    for command in ("synth", "train", "backtest", "report"):
        assert main([command, "--config", str(config_path)]) == 0, command
    report = json.loads((out_dir / "report.json").read_text())
    assert set(report) == {"AR", "AER", "TR", "WR", "SR", "Alpha", "Beta", "MD",
                           "Sigma", "Sortino", "VaR99"}
    elapsed = time.time() - started
    assert elapsed < 600.0, f"smoke run took {elapsed:.0f}s"
    print(f"\n  synth->train->backtest->report in {elapsed:.0f}s; "
          f"AR {report['AR']:+.2%}, MD {report['MD']:.2%}")
    announce(9, "end-to-end smoke")
