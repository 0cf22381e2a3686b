"""Reference neural operations on sphere-grid images.

All operations consume the integer gather tables from :mod:`icogrid.indexing`
and plain numpy arrays; backward passes are hand written adjoints.  Arrays
are either (C, N) single images or (B, C, N) batches; every op accepts both.

The reference classifier is fully convolutional: two conv + max-pool stages,
a final conv, global average pooling and softmax cross entropy, trained with
plain SGD.  Given a seed, initialization and single-threaded training are
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import pixel_count
from .indexing import CONV_ARITY, ConvTable, PoolTable, build_conv_table, build_pool_table


class ShapeMismatchError(ValueError):
    """Raised when an operand does not match the table it is used with."""


class ConfigurationError(ValueError):
    """Raised for network configurations the grid cannot support."""


@dataclass
class ConvParams:
    """Shared-weight kernel: one weight per (out channel, in channel, tap).

    A single weight set serves upward and downward pixels; the orientation
    handling lives entirely in the gather table's tap ordering.
    """

    weights: np.ndarray  # (C_out, C_in, arity)
    bias: np.ndarray  # (C_out,)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]


def init_conv_params(
    in_channels: int,
    out_channels: int,
    rng: np.random.Generator,
    arity: int = CONV_ARITY,
    dtype=np.float64,
) -> ConvParams:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), fans counted over
    channels x taps."""
    fan_in = in_channels * arity
    fan_out = out_channels * arity
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    w = rng.uniform(-limit, limit, size=(out_channels, in_channels, arity))
    return ConvParams(w.astype(dtype), np.zeros(out_channels, dtype=dtype))


def _as_batch(x: np.ndarray, n: int, what: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if x.ndim == 2:
        batched = False
        x = x[None]
    elif x.ndim == 3:
        batched = True
    else:
        raise ShapeMismatchError(f"{what} must be (C, N) or (B, C, N), got {x.shape}")
    if x.shape[2] != n:
        raise ShapeMismatchError(f"{what} has {x.shape[2]} pixels, table expects {n}")
    return x, batched


def conv_forward(x: np.ndarray, table: ConvTable, params: ConvParams) -> np.ndarray:
    """Gather-contract convolution: out[o, i] = sum_{c,k} w[o,c,k] x[c, taps[i,k]] + b[o]."""
    x3, batched = _as_batch(x, table.num_pixels, "conv input")
    if x3.shape[1] != params.in_channels:
        raise ShapeMismatchError(
            f"input has {x3.shape[1]} channels, weights expect {params.in_channels}"
        )
    if params.weights.shape[2] != table.arity:
        raise ShapeMismatchError("weight tap count does not match the table")
    b, ci, n = x3.shape
    k = table.arity
    gathered = x3[:, :, table.taps]  # (B, Ci, N, K)
    flat = np.ascontiguousarray(np.swapaxes(gathered, 1, 2)).reshape(b, n, ci * k)
    w2 = params.weights.reshape(params.out_channels, ci * k)
    out = flat @ w2.T + params.bias
    out = np.swapaxes(out, 1, 2)
    return out if batched else out[0]


def conv_backward(
    grad_out: np.ndarray, x: np.ndarray, table: ConvTable, params: ConvParams
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact adjoint of :func:`conv_forward`.

    Returns (grad_x, grad_weights, grad_bias); gradients flowing through
    duplicate taps accumulate.
    """
    x3, batched = _as_batch(x, table.num_pixels, "conv input")
    g3, gbatched = _as_batch(grad_out, table.num_pixels, "conv grad")
    if gbatched != batched or g3.shape[0] != x3.shape[0]:
        raise ShapeMismatchError("grad batch does not match input batch")
    if g3.shape[1] != params.out_channels:
        raise ShapeMismatchError("grad channel count does not match the weights")
    b, ci, n = x3.shape
    co = params.out_channels
    k = table.arity

    gathered = x3[:, :, table.taps]
    flat = np.ascontiguousarray(np.swapaxes(gathered, 1, 2)).reshape(b, n, ci * k)
    gt = np.ascontiguousarray(np.swapaxes(g3, 1, 2))  # (B, N, Co)

    grad_w = np.tensordot(gt, flat, axes=([0, 1], [0, 1])).reshape(co, ci, k)
    grad_b = g3.sum(axis=(0, 2))

    w2 = params.weights.reshape(co, ci * k)
    gg = (gt @ w2).reshape(b, n, ci, k).transpose(0, 2, 1, 3)  # (B, Ci, N, K)
    # scatter-add through the taps; bincount keeps duplicates accumulating
    chan_base = np.arange(b * ci, dtype=np.int64)[:, None, None] * n
    target = (chan_base + table.taps[None]).reshape(b * ci, n, k)
    grad_x = np.bincount(
        target.ravel(), weights=gg.reshape(b * ci, n, k).ravel(), minlength=b * ci * n
    ).reshape(b, ci, n)
    grad_x = grad_x.astype(x3.dtype, copy=False)
    return (grad_x if batched else grad_x[0]), grad_w, grad_b


def max_pool(x: np.ndarray, pool: PoolTable) -> tuple[np.ndarray, np.ndarray]:
    """Max over each parent's 4 children; ties pick the lowest child slot.

    Returns (pooled (.., C, N/4), argmax slots of the same shape).
    """
    x3, batched = _as_batch(x, pool.children.size, "pool input")
    kids = x3[:, :, pool.children]  # (B, C, P, 4)
    rec = kids.argmax(axis=-1)
    out = np.take_along_axis(kids, rec[..., None], axis=-1)[..., 0]
    if not batched:
        return out[0], rec[0]
    return out, rec


def avg_pool(x: np.ndarray, pool: PoolTable) -> np.ndarray:
    x3, batched = _as_batch(x, pool.children.size, "pool input")
    out = np.ascontiguousarray(x3[:, :, pool.children]).mean(axis=-1)
    return out if batched else out[0]


def max_pool_backward(grad_out: np.ndarray, record: np.ndarray, pool: PoolTable) -> np.ndarray:
    """Route each parent gradient to its recorded child."""
    g3, batched = _as_batch(grad_out, pool.num_parents, "pool grad")
    rec = record[None] if not batched else record
    if rec.shape != g3.shape:
        raise ShapeMismatchError("pool record does not match the gradient shape")
    child = pool.children[np.arange(pool.num_parents)[None, None], rec]  # (B, C, P)
    grad_x = np.zeros(g3.shape[:2] + (pool.children.size,), dtype=g3.dtype)
    b_idx = np.arange(g3.shape[0])[:, None, None]
    c_idx = np.arange(g3.shape[1])[None, :, None]
    grad_x[b_idx, c_idx, child] = g3
    return grad_x if batched else grad_x[0]


def avg_pool_backward(grad_out: np.ndarray, pool: PoolTable) -> np.ndarray:
    g3, batched = _as_batch(grad_out, pool.num_parents, "pool grad")
    grad_x = np.zeros(g3.shape[:2] + (pool.children.size,), dtype=g3.dtype)
    grad_x[:, :, pool.children] = (g3 / 4.0)[..., None]
    return grad_x if batched else grad_x[0]


def max_unpool(y: np.ndarray, record: np.ndarray, pool: PoolTable) -> np.ndarray:
    """Write each parent value to its recorded child slot; other children
    stay zero.  Reuses the pooling rows in the opposite direction."""
    return max_pool_backward(y, record, pool)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Per-channel mean over pixels: (.., C, N) -> (.., C)."""
    x = np.asarray(x)
    if x.ndim not in (2, 3) or x.shape[-1] < 1:
        raise ShapeMismatchError("expected (C, N) or (B, C, N) with N >= 1")
    return x.mean(axis=-1)


def global_avg_pool_backward(grad_out: np.ndarray, num_pixels: int) -> np.ndarray:
    g = np.asarray(grad_out)
    return np.repeat(g[..., None] / num_pixels, num_pixels, axis=-1)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, grad_out, 0.0)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy over a batch and its logit gradient.

    ``logits`` is (B, classes); ``labels`` integer class ids (B,).
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(b), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    return float(loss), grad / b


@dataclass
class _ConvStage:
    table: ConvTable
    params: ConvParams
    pool: PoolTable | None


class SphdClassifier:
    """Fully convolutional classifier on sphere-grid images.

    conv -> relu -> max pool, conv -> relu -> max pool, conv -> global
    average pool -> logits.  Needs subdivision >= 3 so the last convolution
    still has a valid gather table after two pooling steps.
    """

    def __init__(
        self,
        subdivision: int = 3,
        in_channels: int = 1,
        hidden: tuple[int, int] = (32, 64),
        classes: int = 10,
        seed: int = 0,
        dtype=np.float64,
    ):
        if subdivision < 3:
            raise ConfigurationError(
                "two pooling stages need subdivision >= 3 so the final "
                "convolution runs at subdivision >= 1"
            )
        self.subdivision = subdivision
        self.classes = classes
        rng = np.random.default_rng(seed)
        c1, c2 = hidden
        self.stages = [
            _ConvStage(
                build_conv_table(_mesh(subdivision)),
                init_conv_params(in_channels, c1, rng, dtype=dtype),
                build_pool_table(subdivision),
            ),
            _ConvStage(
                build_conv_table(_mesh(subdivision - 1)),
                init_conv_params(c1, c2, rng, dtype=dtype),
                build_pool_table(subdivision - 1),
            ),
            _ConvStage(
                build_conv_table(_mesh(subdivision - 2)),
                init_conv_params(c2, classes, rng, dtype=dtype),
                None,
            ),
        ]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for s in self.stages:
            out.extend([s.params.weights, s.params.bias])
        return out

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        """Logits (B, classes) for a batch (B, C, N)."""
        cache = []
        h = np.asarray(x)
        for stage in self.stages:
            pre = conv_forward(h, stage.table, stage.params)
            if stage.pool is not None:
                act = relu(pre)
                pooled, rec = max_pool(act, stage.pool)
                cache.append((h, pre, rec))
                h = pooled
            else:
                cache.append((h, pre, None))
                h = pre
        logits = global_avg_pool(h)
        if keep_cache:
            return logits, cache
        return logits

    def loss_and_grads(self, x: np.ndarray, labels: np.ndarray):
        """Mean cross-entropy loss and gradients for every parameter."""
        logits, cache = self.forward(x, keep_cache=True)
        loss, grad_logits = softmax_cross_entropy(logits, labels)
        n_last = self.stages[-1].table.num_pixels
        g = global_avg_pool_backward(grad_logits, n_last)
        grads = []
        for stage, (h, pre, rec) in zip(reversed(self.stages), reversed(cache)):
            if stage.pool is not None:
                g = max_pool_backward(g, rec, stage.pool)
                g = relu_backward(g, pre)
            g, gw, gb = conv_backward(g, h, stage.table, stage.params)
            grads.append((gw, gb))
        grads.reverse()
        return loss, grads, logits

    def train_step(self, x: np.ndarray, labels: np.ndarray, lr: float) -> float:
        """One full-batch SGD update; returns the pre-update loss."""
        loss, grads, _ = self.loss_and_grads(x, labels)
        for stage, (gw, gb) in zip(self.stages, grads):
            stage.params.weights -= lr * gw
            stage.params.bias -= lr * gb
        return loss

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).argmax(axis=1)

    def accuracy(self, x: np.ndarray, labels: np.ndarray) -> float:
        return float((self.predict(x) == np.asarray(labels)).mean())


def _mesh(subdivision: int):
    from .geometry import build_mesh

    return build_mesh(subdivision)
