"""Attention encoder over 20x2 return/turnover windows.

Architecture: a linear embedding lifts the two features to the hidden
width (no positional encoding -- time order is carried by the data, and
with mean pooling the network is permutation-equivariant by design),
then ``blocks`` encoder blocks of multi-head self-attention (no mask)
followed by a two-layer relu feed-forward, each optionally wrapped in
residual + layer norm. The 20 time-steps are pooled (mean by default)
and an affine head + softmax yields a probability vector over the
``classes`` quantile bands. Training minimizes mean squared error
against the one-hot band targets.

Per-head projection width defaults to ``classes`` and the attention
scaling to sqrt(hidden_dim); both are configurable
(``head_dim``/``attention_scale``) since other conventions exist.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, ContractError, NumericError

CHECKPOINT_MAGIC = b"QFCHECK1"

POOLINGS = ("mean", "last")
ATTENTION_SCALES = ("sqrt_d", "sqrt_head_dim")


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 16
    heads: int = 16
    blocks: int = 6
    classes: int = 3
    head_dim: int = None  # defaults to classes
    attention_scale: str = "sqrt_d"
    pooling: str = "mean"
    ffn_width: int = None  # defaults to 4 * hidden_dim
    use_residual_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_dim", "heads", "blocks", "classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.head_dim is not None and self.head_dim < 1:
            raise ConfigError(f"head_dim must be >= 1, got {self.head_dim}")
        if self.ffn_width is not None and self.ffn_width < 1:
            raise ConfigError(f"ffn_width must be >= 1, got {self.ffn_width}")
        if self.pooling not in POOLINGS:
            raise ConfigError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")
        if self.attention_scale not in ATTENTION_SCALES:
            raise ConfigError(
                f"attention_scale must be one of {ATTENTION_SCALES}, got {self.attention_scale!r}")

    @property
    def resolved_head_dim(self):
        return self.classes if self.head_dim is None else self.head_dim

    @property
    def resolved_ffn_width(self):
        return 4 * self.hidden_dim if self.ffn_width is None else self.ffn_width

    @property
    def scale_value(self):
        if self.attention_scale == "sqrt_d":
            return float(np.sqrt(self.hidden_dim))
        return float(np.sqrt(self.resolved_head_dim))


class ModelParameters:
    """All trainable weights, by name, as autodiff tensors."""

    def __init__(self, config, tensors):
        self.config = config
        self.tensors = OrderedDict(tensors)

    def names(self):
        return list(self.tensors)

    def values(self):
        return list(self.tensors.values())

    def arrays(self):
        return [t.data for t in self.tensors.values()]

    def __getitem__(self, name):
        return self.tensors[name]

    def replaced(self, arrays):
        """New ModelParameters with the same names bound to new arrays."""
        items = [(name, Tensor(arr)) for name, arr in zip(self.tensors, arrays)]
        return ModelParameters(self.config, items)


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_parameters(config):
    """Seeded Glorot-uniform weight matrices, zero biases, unit norm gains."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    d = config.hidden_dim
    hd = config.resolved_head_dim
    f = config.resolved_ffn_width
    k = config.classes

    items = []

    def mat(name, fan_in, fan_out):
        items.append((name, Tensor(_glorot(rng, fan_in, fan_out, (fan_in, fan_out)))))

    def vec(name, n, value=0.0):
        items.append((name, Tensor(np.full(n, value))))

    mat("embed.weight", 2, d)
    vec("embed.bias", d)
    for b in range(config.blocks):
        for proj in ("q", "k", "v"):
            for h in range(config.heads):
                mat(f"block{b}.attn.{proj}{h}", d, hd)
        mat(f"block{b}.attn.out", config.heads * hd, d)
        if config.use_residual_norm:
            vec(f"block{b}.norm1.gain", d, 1.0)
            vec(f"block{b}.norm1.bias", d)
        mat(f"block{b}.ffn.w1", d, f)
        vec(f"block{b}.ffn.b1", f)
        mat(f"block{b}.ffn.w2", f, d)
        vec(f"block{b}.ffn.b2", d)
        if config.use_residual_norm:
            vec(f"block{b}.norm2.gain", d, 1.0)
            vec(f"block{b}.norm2.bias", d)
    mat("head.weight", d, k)
    vec("head.bias", k)
    return ModelParameters(config, items)


# -- forward pieces -----------------------------------------------------------

def embed(x, params, tape=None):
    """Linear lift of the (..., 20, 2) features to hidden width."""
    w = params["embed.weight"]
    if x.data.shape[-1] != w.data.shape[0]:
        raise ContractError(
            f"feature width {x.data.shape[-1]} != embedding input {w.data.shape[0]}")
    return ad.add(ad.matmul(x, w, tape), params["embed.bias"], tape)


def multi_head_attention(x, block, params, config, tape=None):
    """Scaled dot-product self-attention over the time axis, all heads.

    Per-head projections are concatenated into packed (d, H*hd) weights
    so each of Q/K/V is one matmul; the math is identical to running the
    heads separately.
    """
    heads, hd = config.heads, config.resolved_head_dim
    batch, steps, _ = x.data.shape

    def packed(proj):
        cols = [params[f"block{block}.attn.{proj}{h}"] for h in range(heads)]
        return ad.concat(cols, axis=1, tape=tape) if heads > 1 else cols[0]

    def split_heads(t):
        t = ad.reshape(t, (batch, steps, heads, hd), tape)
        return ad.transpose(t, (0, 2, 1, 3), tape)

    q = split_heads(ad.matmul(x, packed("q"), tape))
    k = split_heads(ad.matmul(x, packed("k"), tape))
    v = split_heads(ad.matmul(x, packed("v"), tape))

    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2), tape), tape),
                      1.0 / config.scale_value, tape)
    weights = ad.softmax_last(scores, tape)
    context = ad.matmul(weights, v, tape)
    merged = ad.reshape(ad.transpose(context, (0, 2, 1, 3), tape),
                        (batch, steps, heads * hd), tape)
    return ad.matmul(merged, params[f"block{block}.attn.out"], tape)


def _feed_forward(x, block, params, tape):
    h = ad.relu(ad.add(ad.matmul(x, params[f"block{block}.ffn.w1"], tape),
                       params[f"block{block}.ffn.b1"], tape), tape)
    return ad.add(ad.matmul(h, params[f"block{block}.ffn.w2"], tape),
                  params[f"block{block}.ffn.b2"], tape)


def forward(x, params, tape=None):
    """Probability vectors over the quantile bands, one row per window.

    ``x`` is (batch, 20, 2) or a single (20, 2) window (treated as a
    batch of one). Returns a (batch, classes) tensor whose rows are
    nonnegative and sum to 1. Raises NumericError naming the block if an
    intermediate stops being finite.
    """
    config = params.config
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ContractError(f"expected (batch, steps, 2) input, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ContractError("input windows must be finite")
    h = embed(Tensor(arr), params, tape)

    for b in range(config.blocks):
        a = multi_head_attention(h, b, params, config, tape)
        if config.use_residual_norm:
            h = ad.layer_norm(ad.add(h, a, tape),
                              params[f"block{b}.norm1.gain"],
                              params[f"block{b}.norm1.bias"], tape)
        else:
            h = a
        f = _feed_forward(h, b, params, tape)
        if config.use_residual_norm:
            h = ad.layer_norm(ad.add(h, f, tape),
                              params[f"block{b}.norm2.gain"],
                              params[f"block{b}.norm2.bias"], tape)
        else:
            h = f
        if not np.isfinite(h.data).all():
            raise NumericError(f"non-finite activations after block {b}", block=b)

    if config.pooling == "mean":
        pooled = ad.mean_axis(h, 1, tape)
    else:
        pooled = ad.take_index(h, 1, h.data.shape[1] - 1, tape)
    logits = ad.add(ad.matmul(pooled, params["head.weight"], tape),
                    params["head.bias"], tape)
    if not np.isfinite(logits.data).all():
        raise NumericError("non-finite output logits", block=config.blocks)
    return ad.softmax_last(logits, tape)


def predict(x, params):
    """Inference-only forward; returns a plain (batch, classes) array."""
    return forward(x, params).data


def mse_loss(yhat, targets, tape=None):
    """Batch-mean squared Euclidean distance between prediction and target
    vectors (the per-sample norm is summed over classes, not averaged)."""
    t = np.asarray(targets, dtype=np.float64)
    if isinstance(yhat, Tensor) and yhat.data.shape != t.shape:
        raise ContractError(f"prediction shape {yhat.data.shape} != target shape {t.shape}")
    n = t.shape[0] if t.ndim > 1 else 1
    if t.size == 0:
        raise ContractError("empty batch")
    diff = ad.sub(yhat, Tensor(t), tape)
    return ad.scale(ad.sum_all(ad.square(diff, tape), tape), 1.0 / n, tape)


# -- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, params):
    """Write config + all parameter tensors to a deterministic binary file.

    Layout: magic, config JSON (length-prefixed), parameter count, then
    per parameter: name, shape header, raw little-endian float64 data.
    Identical parameters always produce identical bytes.
    """
    cfg = json.dumps(asdict(params.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.tensors.items():
            encoded = name.encode("utf-8")
            arr = tensor.data
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into ModelParameters, bit-exactly."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ContractError(f"{path} is not a model checkpoint (bad magic {magic!r})")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        config = ModelConfig(**json.loads(fh.read(cfg_len).decode("utf-8")))
        (count,) = struct.unpack("<I", fh.read(4))
        items = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n_items = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n_items), dtype="<f8").reshape(shape)
            items.append((name, Tensor(data.copy())))
    return ModelParameters(config, items)
