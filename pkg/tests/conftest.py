import numpy as np
import pytest

from quantformer.autodiff import Tape, Tensor, gradient


def rel_err(analytic, numeric, floor=1e-3):
    """Elementwise relative error with a floor so near-zero true gradients
    do not inflate the ratio."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def finite_difference_check(build_loss, leaves, h=1e-5, tol=1e-4, stride=1):
    """Compare taped gradients of ``build_loss(leaves)`` against central
    finite differences on every ``stride``-th coordinate of each leaf.

    ``build_loss`` must be a pure function of the leaf tensors returning
    a scalar Tensor when handed a tape, and must not capture the tape.
    """
    tape = Tape()
    loss = build_loss(leaves, tape)
    grads = gradient(loss, tape, leaves)

    worst = 0.0
    for li, leaf in enumerate(leaves):
        flat = leaf.data.ravel()
        analytic = grads[li].ravel()
        for j in range(0, flat.size, stride):
            original = flat[j]
            flat[j] = original + h
            up = float(build_loss(leaves, None).data)
            flat[j] = original - h
            down = float(build_loss(leaves, None).data)
            flat[j] = original
            numeric = (up - down) / (2.0 * h)
            err = float(rel_err(analytic[j], numeric))
            worst = max(worst, err)
            assert err <= tol, (
                f"leaf {li} coord {j}: analytic {analytic[j]:.6e} vs "
                f"finite-diff {numeric:.6e} (rel err {err:.2e})")
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def leaf(rng, *shape):
    return Tensor(rng.standard_normal(shape))


def synthetic_pipeline(seed=0, n_stocks=20, n_periods=60, signal=1.0, bins=3,
                       fraction=0.2, include_null=False):
    """Synthetic panel -> normalized sections -> labeled samples.

    Returns (samples, sections, panel, scheme, returns_by_time).
    """
    from quantformer.labeling import LabelScheme, build_dataset
    from quantformer.market_data import WINDOW, build_sections, next_returns
    from quantformer.synthetic import SyntheticSpec, generate_period_panel

    spec = SyntheticSpec(seed=seed, n_stocks=n_stocks, n_periods=n_periods,
                         signal_strength=signal)
    panel = generate_period_panel(spec)
    sections = build_sections(panel, range(WINDOW - 1, panel.n_periods - 1))
    returns_by_time = {s.decision_time: next_returns(panel, s.decision_time + 1)
                       for s in sections}
    scheme = LabelScheme(bins=bins, fraction=fraction, include_null=include_null)
    samples, _ = build_dataset(sections, returns_by_time, scheme)
    return samples, sections, panel, scheme, returns_by_time
