"""Command-line pipeline: synth/ingest -> train -> backtest -> report.

Stages communicate only through files in the config's output directory:

    periods.csv          aggregated period records (synth/ingest)
    synthetic_daily.csv  generated daily bars (synth)
    checkpoint.bin       trained model (train)
    loss_history.csv     per-epoch mean MSE (train)
    equity.csv           strategy equity curve (backtest)
    weights.csv          target-weight history (backtest)
    benchmark.csv        fee-free equal-weight benchmark curve (backtest)
    report.json          ten-metric report (report)
    equity.svg           equity line plot (report)
    manifest.json        config hash + seeds + versions per stage

Every stage is deterministic given the config: rerunning a command with
the same config and seed reproduces each artifact byte for byte.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, kernels
from .errors import ConfigError, QuantformerError
from .labeling import build_dataset
from .market_data import (WINDOW, aggregate_period, build_sections, ingest_daily_csv,
                          next_returns, read_periods_csv, write_periods_csv)
from .metrics import compute_report
from .model import load_checkpoint, predict, save_checkpoint
from .runconfig import load_config
from .strategy import (read_equity_csv, run_backtest, run_equal_weight, write_equity_csv,
                       write_weights_csv)
from .synthetic import generate_period_panel, generate_universe, write_daily_csv
from .trainer import grid_search, trailing_split, train, write_loss_history


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _require(cfg, name, producer):
    path = _out(cfg, name)
    if not os.path.exists(path):
        raise ConfigError(f"missing artifact {path}; run `{producer}` first")
    return path


def _update_manifest(cfg, stage, artifacts):
    path = _out(cfg, "manifest.json")
    manifest = {}
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest[stage] = {
        "config_sha256": cfg.sha256,
        "seed": cfg.seed,
        "quantformer_version": __version__,
        "numpy_version": np.__version__,
        "numba_active": kernels.USE_NUMBA,
        "artifacts": sorted(artifacts),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_cutoff(cfg, n_periods):
    """Last period index whose data may enter training; trading starts at
    the decision made with the window ending exactly there."""
    cutoff = cfg.train_cutoff
    if cutoff is None:
        cutoff = int(round(n_periods * 0.8))
    if not WINDOW <= cutoff <= n_periods - 2:
        raise ConfigError(
            f"train_cutoff {cutoff} must lie in [{WINDOW}, {n_periods - 2}] "
            f"for {n_periods} periods")
    return cutoff


def _load_panel(cfg):
    path = _require(cfg, "periods.csv", "synth or ingest")
    return read_periods_csv(path, cfg.frequency)


def _training_samples(cfg, panel, cutoff):
    times = range(WINDOW - 1, cutoff)
    sections = build_sections(panel, times)
    returns_by_time = {s.decision_time: next_returns(panel, s.decision_time + 1)
                       for s in sections}
    samples, report = build_dataset(sections, returns_by_time, cfg.scheme)
    if not samples:
        raise ConfigError("no training samples; check train_cutoff and the data range")
    return samples, report


def cmd_synth(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    panel = generate_universe(cfg.synthetic)
    daily_path = _out(cfg, "synthetic_daily.csv")
    write_daily_csv(daily_path, panel)
    periods = aggregate_period(panel, cfg.frequency)
    periods_path = _out(cfg, "periods.csv")
    write_periods_csv(periods_path, periods)
    print(f"synth: {periods.n_periods} periods x {len(periods.tickers)} tickers "
          f"-> {periods_path}")
    _update_manifest(cfg, "synth", ["synthetic_daily.csv", "periods.csv"])
    return 0


def cmd_ingest(cfg):
    if cfg.data_csv is None:
        raise ConfigError("config field 'data_csv': required for ingest")
    if not os.path.exists(cfg.data_csv):
        raise ConfigError(f"config field 'data_csv': file not found: {cfg.data_csv}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    panel = ingest_daily_csv(cfg.data_csv)
    periods = aggregate_period(panel, cfg.frequency)
    periods_path = _out(cfg, "periods.csv")
    write_periods_csv(periods_path, periods)
    print(f"ingest: {sum(len(b) for b in panel.values())} bars -> "
          f"{periods.n_periods} periods x {len(periods.tickers)} tickers -> {periods_path}")
    _update_manifest(cfg, "ingest", ["periods.csv"])
    return 0


def cmd_train(cfg):
    panel = _load_panel(cfg)
    cutoff = _resolve_cutoff(cfg, panel.n_periods)
    samples, report = _training_samples(cfg, panel, cutoff)
    train_config = replace(cfg.train, cutoff=cutoff - 1)

    model_config = cfg.model
    if cfg.grid:
        candidates = []
        for entry in cfg.grid:
            mc = replace(model_config, **{k: v for k, v in entry.items()
                                          if k in ("hidden_dim", "heads", "blocks")})
            tc = replace(train_config, **{k: v for k, v in entry.items()
                                          if k in ("learning_rate", "epochs")})
            candidates.append((mc, tc))
        fit_part, val_part = trailing_split(samples)
        model_config, train_config = grid_search(candidates, fit_part, val_part)
        print(f"grid: selected d={model_config.hidden_dim} H={model_config.heads} "
              f"L={model_config.blocks}")

    params, history = train(samples, model_config, train_config)
    ckpt_path = _out(cfg, "checkpoint.bin")
    save_checkpoint(ckpt_path, params)
    write_loss_history(_out(cfg, "loss_history.csv"), history)
    print(f"train: {report['samples']} samples over {report['sections']} sections, "
          f"{train_config.epochs} epochs; MSE {history[0]:.6f} -> {history[-1]:.6f}; "
          f"wrote {ckpt_path}")
    _update_manifest(cfg, "train", ["checkpoint.bin", "loss_history.csv"])
    return 0


def cmd_backtest(cfg):
    panel = _load_panel(cfg)
    params = load_checkpoint(_require(cfg, "checkpoint.bin", "train"))
    cutoff = _resolve_cutoff(cfg, panel.n_periods)
    times = range(cutoff, panel.n_periods - 1)
    sections = build_sections(panel, times)
    realized = {s.decision_time: next_returns(panel, s.decision_time + 1) for s in sections}
    labels = dict(enumerate(panel.labels))

    curve = run_backtest(lambda s: predict(s.stacked(), params), sections, realized,
                         cfg.scheme, cfg.strategy, labels)
    benchmark = run_equal_weight(sections, realized, labels,
                                 initial_cash=cfg.strategy.initial_cash)
    write_equity_csv(_out(cfg, "equity.csv"), curve)
    write_weights_csv(_out(cfg, "weights.csv"), curve)
    write_equity_csv(_out(cfg, "benchmark.csv"), benchmark)
    print(f"backtest: {len(sections)} periods, final equity {curve.values[-1]:,.2f} "
          f"(benchmark {benchmark.values[-1]:,.2f}) -> {_out(cfg, 'equity.csv')}")
    _update_manifest(cfg, "backtest", ["equity.csv", "weights.csv", "benchmark.csv"])
    return 0


def _plot_equity(path, curve, benchmark):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9.0, 4.5))
    x = range(len(curve.values))
    ax.plot(x, curve.values, label="strategy", linewidth=1.6)
    if benchmark is not None:
        ax.plot(range(len(benchmark.values)), benchmark.values,
                label="equal weight", linewidth=1.2)
    step = max(1, len(curve.timestamps) // 10)
    ticks = list(range(0, len(curve.timestamps), step))
    ax.set_xticks(ticks)
    ax.set_xticklabels([curve.timestamps[i] for i in ticks], rotation=45, ha="right")
    ax.set_ylabel("portfolio value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_report(cfg):
    curve = read_equity_csv(_require(cfg, "equity.csv", "backtest"))
    bench_path = cfg.benchmark_csv or _out(cfg, "benchmark.csv")
    if not os.path.exists(bench_path):
        raise ConfigError(f"missing benchmark series {bench_path}; run `backtest` "
                          "or set 'benchmark_csv'")
    benchmark = read_equity_csv(bench_path)
    if len(benchmark.period_returns) != len(curve.period_returns):
        raise ConfigError("benchmark series length does not match the equity curve")

    report = compute_report(curve.period_returns, benchmark.period_returns,
                            curve.values, curve.turnovers,
                            cfg.periods_per_year, cfg.risk_free_rate)
    report_path = _out(cfg, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _plot_equity(_out(cfg, "equity.svg"), curve, benchmark)
    print(f"report: AR {report.AR:+.2%}, SR {report.SR if report.SR is None else round(report.SR, 3)}, "
          f"MD {report.MD:.2%} -> {report_path}")
    _update_manifest(cfg, "report", ["report.json", "equity.svg"])
    return 0


def cmd_replicate_table1(config_paths, out_path=None):
    """Per-config pipeline inventory formatted like a strategy table.

    Counts every usable decision section and the resulting training
    samples under each config's labeling regime (the whole data range,
    no train/test cut), so rows differing only in null handling share
    their section count.
    """
    rows = []
    for path in config_paths:
        cfg = load_config(path)
        if cfg.data_csv is not None:
            panel = aggregate_period(ingest_daily_csv(cfg.data_csv), cfg.frequency)
        else:
            panel = generate_period_panel(cfg.synthetic)
        times = range(WINDOW - 1, panel.n_periods - 1)
        sections = build_sections(panel, times)
        returns_by_time = {s.decision_time: next_returns(panel, s.decision_time + 1)
                           for s in sections}
        samples, report = build_dataset(sections, returns_by_time, cfg.scheme)
        rows.append((cfg.name, cfg.frequency, cfg.scheme.bins, len(samples),
                     report["sections"], "w/" if cfg.scheme.include_null else "w/o"))

    header = f"{'Strategy':<16} {'Frequency':<10} {'Label dim':>9} " \
             f"{'Training samples':>17} {'Section':>8} {'Null-label':>11}"
    lines = [header, "-" * len(header)]
    for name, freq, bins, n_samples, n_sections, null_mode in rows:
        lines.append(f"{name:<16} {freq:<10} {bins:>9} {n_samples:>17,} "
                     f"{n_sections:>8} {null_mode:>11}")
    text = "\n".join(lines)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="quantformer",
        description="Cross-sectional ranking model: data, training, backtest, report")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("ingest", "aggregate a daily-bar CSV into period records"),
                       ("synth", "generate a synthetic market and its period records"),
                       ("train", "fit the model on the training window"),
                       ("backtest", "run the quantile strategy over the test window"),
                       ("report", "compute the metric report and equity plot")):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the run config JSON")
    table = sub.add_parser("replicate-table1",
                           help="summarize sample/section counts for a set of configs")
    table.add_argument("--configs", nargs="+", required=True,
                       help="one config JSON per strategy row")
    table.add_argument("--out", default=None, help="also write the table to this file")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replicate-table1":
            return cmd_replicate_table1(args.configs, args.out)
        cfg = load_config(args.config)
        os.makedirs(cfg.output_dir, exist_ok=True)
        handler = {"ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train,
                   "backtest": cmd_backtest, "report": cmd_report}[args.command]
        return handler(cfg)
    except QuantformerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
