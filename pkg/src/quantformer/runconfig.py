"""Run configuration: one flat JSON file drives every pipeline stage.

Every experiment variant (frequency, band count, null handling, model
size, fees) lives in config, never in code, so a strategy row is fully
described by its config file. Unknown keys are rejected to catch typos
early; every error names the offending field.
"""

import hashlib
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .labeling import LabelScheme
from .metrics import PERIODS_PER_YEAR
from .model import ATTENTION_SCALES, POOLINGS, ModelConfig
from .strategy import StrategyConfig
from .synthetic import SyntheticSpec
from .trainer import TrainConfig

_DEFAULTS = {
    "name": None,
    "seed": 0,
    "frequency": "monthly",
    "data_csv": None,
    "synthetic_stocks": 50,
    "synthetic_periods": 120,
    "synthetic_signal": 1.0,
    "synthetic_volatility": 0.04,
    "label_bins": 3,
    "label_fraction": 0.2,
    "include_null": False,
    "hidden_dim": 16,
    "heads": 16,
    "blocks": 6,
    "head_dim": None,
    "attention_scale": "sqrt_d",
    "pooling": "mean",
    "ffn_width": None,
    "use_residual_norm": True,
    "epochs": 50,
    "batch_size": 64,
    "learning_rate": 1e-3,
    "train_cutoff": None,
    "grid": None,
    "long_bins": None,
    "fee_rate": 0.003,
    "initial_cash": 1_000_000.0,
    "require_persistence": False,
    "risk_free_rate": 0.0,
    "benchmark_csv": None,
    "output_dir": "runs/default",
}

_TYPES = {
    "name": (str, type(None)),
    "seed": (int,),
    "frequency": (str,),
    "data_csv": (str, type(None)),
    "synthetic_stocks": (int,),
    "synthetic_periods": (int,),
    "synthetic_signal": (int, float),
    "synthetic_volatility": (int, float),
    "label_bins": (int,),
    "label_fraction": (int, float),
    "include_null": (bool,),
    "hidden_dim": (int,),
    "heads": (int,),
    "blocks": (int,),
    "head_dim": (int, type(None)),
    "attention_scale": (str,),
    "pooling": (str,),
    "ffn_width": (int, type(None)),
    "use_residual_norm": (bool,),
    "epochs": (int,),
    "batch_size": (int,),
    "learning_rate": (int, float),
    "train_cutoff": (int, type(None)),
    "grid": (list, type(None)),
    "long_bins": (list, type(None)),
    "fee_rate": (int, float),
    "initial_cash": (int, float),
    "require_persistence": (bool,),
    "risk_free_rate": (int, float),
    "benchmark_csv": (str, type(None)),
    "output_dir": (str,),
}

_GRID_KEYS = {"hidden_dim", "heads", "blocks", "learning_rate", "epochs"}


@dataclass
class RunConfig:
    raw: dict
    name: str
    seed: int
    frequency: str
    data_csv: str
    synthetic: SyntheticSpec
    scheme: LabelScheme
    model: ModelConfig
    train: TrainConfig
    strategy: StrategyConfig
    train_cutoff: int
    grid: list
    risk_free_rate: float
    benchmark_csv: str
    output_dir: str
    sha256: str = field(default="")

    @property
    def periods_per_year(self):
        return PERIODS_PER_YEAR[self.frequency]


def _fail(key, message):
    raise ConfigError(f"config field {key!r}: {message}")


def validate_config(data, name_hint="run"):
    """Typed, cross-checked RunConfig from a decoded JSON object."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(data) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    merged = dict(_DEFAULTS)
    merged.update(data)

    for key, types in _TYPES.items():
        value = merged[key]
        if isinstance(value, bool) and bool not in types:
            _fail(key, f"expected {types}, got bool")
        if not isinstance(value, types):
            _fail(key, f"expected {' or '.join(t.__name__ for t in types)}, "
                       f"got {type(value).__name__}")

    if merged["frequency"] not in PERIODS_PER_YEAR:
        _fail("frequency", f"must be one of {sorted(PERIODS_PER_YEAR)}")
    if merged["pooling"] not in POOLINGS:
        _fail("pooling", f"must be one of {POOLINGS}")
    if merged["attention_scale"] not in ATTENTION_SCALES:
        _fail("attention_scale", f"must be one of {ATTENTION_SCALES}")

    bins = merged["label_bins"]
    fraction = float(merged["label_fraction"])
    if bins < 3:
        _fail("label_bins", "must be >= 3")
    if not 0.0 < fraction:
        _fail("label_fraction", "must be positive")
    if fraction * bins > 1.0:
        _fail("label_fraction", f"label_fraction*label_bins = {fraction * bins} exceeds 1")
    try:
        scheme = LabelScheme(bins=bins, fraction=fraction, include_null=merged["include_null"])
    except ConfigError as exc:
        _fail("label_fraction", str(exc))

    long_bins = merged["long_bins"]
    if long_bins is None:
        long_bins = [1] + [0] * (bins - 1)
    if len(long_bins) != bins:
        _fail("long_bins", f"length {len(long_bins)} != label_bins {bins}")
    try:
        strategy = StrategyConfig(selection=tuple(long_bins),
                                  fee_rate=float(merged["fee_rate"]),
                                  initial_cash=float(merged["initial_cash"]),
                                  require_persistence=merged["require_persistence"])
    except ConfigError as exc:
        _fail("long_bins/fee_rate/initial_cash", str(exc))

    try:
        model = ModelConfig(hidden_dim=merged["hidden_dim"], heads=merged["heads"],
                            blocks=merged["blocks"], classes=bins,
                            head_dim=merged["head_dim"],
                            attention_scale=merged["attention_scale"],
                            pooling=merged["pooling"], ffn_width=merged["ffn_width"],
                            use_residual_norm=merged["use_residual_norm"],
                            seed=merged["seed"])
    except ConfigError as exc:
        _fail("hidden_dim/heads/blocks", str(exc))

    if merged["epochs"] < 1:
        _fail("epochs", "must be >= 1")
    if merged["batch_size"] < 1:
        _fail("batch_size", "must be >= 1")
    if merged["learning_rate"] < 0:
        _fail("learning_rate", "must be >= 0")
    cutoff = merged["train_cutoff"]
    train = TrainConfig(epochs=merged["epochs"], batch_size=merged["batch_size"],
                        learning_rate=float(merged["learning_rate"]), seed=merged["seed"],
                        cutoff=None if cutoff is None else cutoff - 1)

    grid = merged["grid"]
    if grid is not None:
        for i, entry in enumerate(grid):
            if not isinstance(entry, dict):
                _fail("grid", f"candidate {i} must be an object")
            bad = set(entry) - _GRID_KEYS
            if bad:
                _fail("grid", f"candidate {i} has unknown key(s) {sorted(bad)}")

    if merged["data_csv"] is None:
        try:
            synth = SyntheticSpec(seed=merged["seed"], n_stocks=merged["synthetic_stocks"],
                                  n_periods=merged["synthetic_periods"],
                                  frequency=merged["frequency"],
                                  base_volatility=float(merged["synthetic_volatility"]),
                                  signal_strength=float(merged["synthetic_signal"]))
        except ConfigError as exc:
            _fail("synthetic_*", str(exc))
    else:
        synth = None

    canonical = json.dumps(merged, sort_keys=True).encode("utf-8")
    return RunConfig(
        raw=merged,
        name=merged["name"] or name_hint,
        seed=merged["seed"],
        frequency=merged["frequency"],
        data_csv=merged["data_csv"],
        synthetic=synth,
        scheme=scheme,
        model=model,
        train=train,
        strategy=strategy,
        train_cutoff=cutoff,
        grid=grid,
        risk_free_rate=float(merged["risk_free_rate"]),
        benchmark_csv=merged["benchmark_csv"],
        output_dir=merged["output_dir"],
        sha256=hashlib.sha256(canonical).hexdigest(),
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    import os

    hint = os.path.splitext(os.path.basename(path))[0]
    return validate_config(data, name_hint=hint)
