"""Training loop, time-based splits and grid search.

Splits are strictly by decision time so no post-cutoff sample can touch
a parameter update; the loop re-asserts this on every batch. Shuffling
draws a fresh permutation per epoch from a seed derived from
(shuffle seed, epoch), which makes whole runs reproducible bit for bit.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, TrainingDiverged
from .model import ModelConfig, forward, init_parameters, mse_loss
from .optim import AdamState, adam_step

EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    cutoff: int = None  # latest decision time allowed into training
    grid: tuple = None  # optional ((ModelConfig, TrainConfig), ...) candidates

    def __post_init__(self):
        if self.epochs < 1:
            raise ContractError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ContractError(f"learning_rate must be >= 0, got {self.learning_rate}")


def split_by_time(samples, cutoff):
    """Partition samples into (t <= cutoff, t > cutoff)."""
    train = [s for s in samples if s.decision_time <= cutoff]
    test = [s for s in samples if s.decision_time > cutoff]
    return train, test


def _stack(samples):
    x = np.stack([s.features.matrix for s in samples])
    y = np.stack([s.target for s in samples])
    t = np.array([s.decision_time for s in samples])
    return x, y, t


def train(samples, model_config, train_config):
    """Fit the network on labeled samples; returns (parameters, history).

    ``history`` holds one mean MSE per epoch. A learning rate of zero
    runs the epochs without updating (useful as a null baseline). Raises
    TrainingDiverged with the epoch index if the loss stops being
    finite.
    """
    if not samples:
        raise ContractError("empty training set")
    x_all, y_all, t_all = _stack(samples)
    n = len(samples)

    params = init_parameters(model_config)
    updating = train_config.learning_rate > 0
    state = None
    if updating:
        state = AdamState.for_params(params.arrays(), learning_rate=train_config.learning_rate)

    history = []
    for epoch in range(train_config.epochs):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence((train_config.seed, epoch))))
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            if train_config.cutoff is not None and (t_all[idx] > train_config.cutoff).any():
                raise ContractError("post-cutoff sample reached the training loop")
            if updating:
                from .autodiff import Tape, gradient

                tape = Tape()
                yhat = forward(x_all[idx], params, tape)
                loss = mse_loss(yhat, y_all[idx], tape)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch)
                grads = gradient(loss, tape, params.values())
                params = params.replaced(adam_step(params.arrays(), grads, state))
            else:
                yhat = forward(x_all[idx], params)
                value = float(mse_loss(yhat, y_all[idx]).data)
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch)
            total += value * len(idx)
        history.append(total / n)
    return params, history


def evaluate_mse(samples, params):
    """Mean squared error of the fitted network on a sample list."""
    if not samples:
        raise ContractError("empty evaluation set")
    x_all, y_all, _ = _stack(samples)
    total = 0.0
    for start in range(0, len(samples), EVAL_BATCH):
        xb, yb = x_all[start:start + EVAL_BATCH], y_all[start:start + EVAL_BATCH]
        total += float(mse_loss(forward(xb, params), yb).data) * len(xb)
    return total / len(samples)


def trailing_split(samples, fraction=0.1):
    """Split off the trailing ``fraction`` of decision times as validation."""
    times = sorted({s.decision_time for s in samples})
    if len(times) < 2:
        raise ContractError("need at least 2 distinct decision times to split")
    keep = max(1, min(len(times) - 1, int(round(len(times) * (1.0 - fraction)))))
    cutoff = times[keep - 1]
    return split_by_time(samples, cutoff)


def grid_search(candidates, train_samples, val_samples):
    """Train every (ModelConfig, TrainConfig) candidate and return the one
    with the lowest validation MSE; ties go to the earlier candidate."""
    if not candidates:
        raise ContractError("empty candidate list")
    best = None
    best_loss = np.inf
    for pair in candidates:
        model_config, train_config = pair
        params, _ = train(train_samples, model_config, train_config)
        loss = evaluate_mse(val_samples, params)
        if loss < best_loss:
            best, best_loss = pair, loss
    return best


def default_grid(base_model, base_train, dims=(8, 16), heads=(4, 16), blocks=(2, 6)):
    """Candidate grid over the main capacity knobs, everything else shared."""
    from dataclasses import replace

    grid = []
    for d in dims:
        for h in heads:
            for b in blocks:
                grid.append((replace(base_model, hidden_dim=d, heads=h, blocks=b), base_train))
    return tuple(grid)


def write_loss_history(path, history):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_mse\n")
        for epoch, value in enumerate(history):
            fh.write(f"{epoch},{value:.17g}\n")


def read_loss_history(path):
    history = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            history.append(float(line.strip().split(",")[1]))
    return history
