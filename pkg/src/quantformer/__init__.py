"""Attention-based cross-sectional stock ranking with a quantile trading
strategy and a fee-aware backtest, self-contained on numpy."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, gradient, softmax
from .labeling import LabelScheme, assign_label, boundary_term, build_dataset, empirical_quantile
from .market_data import (CrossSection, FeatureWindow, PeriodRecord, aggregate_period,
                          build_sections, build_windows, ingest_daily_csv,
                          normalize_cross_section)
from .metrics import MetricsReport, ReturnSeries, compute_report
from .model import (ModelConfig, ModelParameters, forward, init_parameters, load_checkpoint,
                    mse_loss, predict, save_checkpoint)
from .optim import AdamState, adam_step
from .strategy import (EquityCurve, PortfolioState, StrategyConfig, compute_weights,
                       run_backtest, run_equal_weight, sort_label, step_portfolio)
from .synthetic import SyntheticSpec, generate_period_panel, generate_universe
from .trainer import TrainConfig, grid_search, split_by_time, train

__all__ = [
    "Tape", "Tensor", "gradient", "softmax",
    "LabelScheme", "assign_label", "boundary_term", "build_dataset", "empirical_quantile",
    "CrossSection", "FeatureWindow", "PeriodRecord", "aggregate_period", "build_sections",
    "build_windows", "ingest_daily_csv", "normalize_cross_section",
    "MetricsReport", "ReturnSeries", "compute_report",
    "ModelConfig", "ModelParameters", "forward", "init_parameters", "load_checkpoint",
    "mse_loss", "predict", "save_checkpoint",
    "AdamState", "adam_step",
    "EquityCurve", "PortfolioState", "StrategyConfig", "compute_weights", "run_backtest",
    "run_equal_weight", "sort_label", "step_portfolio",
    "SyntheticSpec", "generate_period_panel", "generate_universe",
    "TrainConfig", "grid_search", "split_by_time", "train",
]
