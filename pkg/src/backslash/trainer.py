"""Rate-constrained training of a small rectifier classifier.

Every batch the shape of the GG prior is re-fitted to all in-scope
parameters, the cost ``J = cross_entropy + lam * soft_rate`` is evaluated and
plain SGD steps along its gradient, treating the fitted shape as a constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import codec, ggd, rate
from .errors import DegenerateSampleError, DivergenceError, DomainError, FormatError, ShapeError
from .tensorstore import ParameterTensor, dequantize, prune, quantize

LOG_COST_BETA = 0.995
DIVERGENCE_FACTOR = 1e6
METRIC_QUANT_EXPONENT = 8

# Desk task used by the CLI defaults and the acceptance runs. The input is
# wide so that 1/sqrt(fan_in) initialization puts first-layer weights far
# below the 2**-5 rounding threshold of a 2**-4 quantization step.
DESK_TASK = {
    "classes": 50,
    "per_class": 20,
    "dim": 16384,
    "spread": 3.0,
    "hidden": (32,),
    "learning_rate": 3e-4,
    "epsilon": 1e-3,
    "epochs": 30,
    "batch_size": 32,
}


# -- data -------------------------------------------------------------------


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    classes: int

    def split(self, name):
        if name == "train":
            return self.x_train, self.y_train
        if name == "test":
            return self.x_test, self.y_test
        raise DomainError(f"unknown split {name!r}")


def gen_blobs(classes, per_class, dim, spread, seed):
    """Gaussian blobs around class centers drawn as ``3 * N(0, I)``.

    Points are ``center + spread * N(0, I)``; a seeded shuffle then splits
    80/20 into train and test.
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise DomainError("classes, per_class and dim must be positive")
    if spread < 0:
        raise DomainError("spread must be nonnegative")
    rng = np.random.default_rng(seed)
    centers = 3.0 * rng.standard_normal((classes, dim))
    y = np.repeat(np.arange(classes), per_class)
    x = centers[y] + spread * rng.standard_normal((y.size, dim))
    perm = rng.permutation(y.size)
    x, y = x[perm], y[perm]
    cut = int(round(0.8 * y.size))
    return Dataset(x[:cut], y[:cut], x[cut:], y[cut:], classes)


# -- model ------------------------------------------------------------------


@dataclass
class Model:
    """Feed-forward classifier: affine + ReLU on hidden layers, affine output.

    ``weights[i]`` has shape ``(layer_dims[i], layer_dims[i + 1])``.
    """

    layer_dims: tuple
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or min(self.layer_dims) < 1:
            raise ShapeError(f"invalid layer dims {self.layer_dims}")
        n = len(self.layer_dims) - 1
        if len(self.weights) != n or len(self.biases) != n:
            raise ShapeError("need one weight matrix and one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (self.layer_dims[i], self.layer_dims[i + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ShapeError(f"layer {i}: weight {w.shape}, bias {b.shape}, expected {want}")

    @classmethod
    def init(cls, layer_dims, seed):
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in))
            biases.append(np.zeros(fan_out))
        return cls(tuple(layer_dims), weights, biases)

    @classmethod
    def zeros(cls, layer_dims):
        dims = tuple(layer_dims)
        return cls(
            dims,
            [np.zeros((a, b)) for a, b in zip(dims[:-1], dims[1:])],
            [np.zeros(b) for b in dims[1:]],
        )

    def parameters(self):
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self, include_biases=True):
        arrays = self.parameters() if include_biases else self.weights
        return np.concatenate([a.ravel() for a in arrays])

    def set_flat(self, values):
        values = np.asarray(values, dtype=np.float64)
        off = 0
        for a in self.parameters():
            a[...] = values[off : off + a.size].reshape(a.shape)
            off += a.size
        if off != values.size:
            raise ShapeError(f"expected {off} values, got {values.size}")

    @property
    def num_parameters(self):
        return sum(a.size for a in self.parameters())

    def copy(self):
        return Model(self.layer_dims, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_tensors(self):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append(ParameterTensor.from_array(f"layer{i}.weight", w))
            out.append(ParameterTensor.from_array(f"layer{i}.bias", b))
        return out

    @classmethod
    def from_tensors(cls, tensors):
        if len(tensors) % 2 or not tensors:
            raise FormatError("model archive must hold weight/bias pairs")
        weights, biases = [], []
        for w, b in zip(tensors[0::2], tensors[1::2]):
            if len(w.dims) != 2 or len(b.dims) != 1:
                raise FormatError(f"unexpected tensor ranks in {w.name!r}/{b.name!r}")
            weights.append(w.to_array().copy())
            biases.append(b.to_array().copy())
        dims = (weights[0].shape[0],) + tuple(w.shape[1] for w in weights)
        try:
            return cls(dims, weights, biases)
        except ShapeError as exc:
            raise FormatError(str(exc)) from None


def forward(model, inputs):
    """Logits for a batch of inputs of shape (batch, layer_dims[0])."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"input shape {x.shape} does not match input dim {model.layer_dims[0]}")
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def loss_and_grad(model, inputs, labels):
    """Mean softmax cross-entropy and its gradient for every parameter.

    Gradients are returned in :meth:`Model.parameters` order.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] == 0:
        raise DomainError("empty batch")
    if x.ndim != 2 or x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"input shape {x.shape} does not match input dim {model.layer_dims[0]}")
    n_out = model.layer_dims[-1]
    if y.shape != (x.shape[0],) or y.min() < 0 or y.max() >= n_out:
        raise DomainError(f"labels must be integers in [0, {n_out})")

    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)

    n = x.shape[0]
    logp = _log_softmax(acts[-1])
    loss = -float(np.mean(logp[np.arange(n), y]))

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * (2 * len(model.weights))
    for i in range(last, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0)
    return loss, grads


def evaluate(model, inputs, labels):
    """Fraction of argmax-correct predictions (ties go to the lowest class)."""
    y = np.asarray(labels)
    if y.size == 0:
        raise DomainError("cannot evaluate on an empty split")
    pred = np.argmax(forward(model, inputs), axis=1)
    return float(np.mean(pred == y))


# -- BackSlash --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one run.

    ``fixed_shape=None`` is the adaptive mode; ``include_biases`` controls
    whether biases fall under the rate term.
    """

    lam: float = 0.0
    epsilon: float = rate.DEFAULT_EPSILON
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    fixed_shape: Optional[float] = None
    include_biases: bool = True
    hidden: tuple = (64,)

    def __post_init__(self):
        rate.RateConfig(self.lam, self.epsilon, self.fixed_shape)
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise DomainError(f"learning rate must be positive, got {self.learning_rate!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be positive")
        if any(int(h) < 1 for h in self.hidden):
            raise DomainError(f"hidden sizes must be positive, got {self.hidden}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def rate_config(self):
        return rate.RateConfig(self.lam, self.epsilon, self.fixed_shape)


@dataclass
class StepResult:
    distortion: float
    rate: float
    cost: float
    shape: float


def _scope_arrays(model, include_biases):
    return model.parameters() if include_biases else list(model.weights)


def estimate_shape(model, cfg, fallback=2.0):
    """Shape used for the rate term: fitted to all in-scope parameters, or fixed."""
    if cfg.fixed_shape is not None:
        return float(cfg.fixed_shape)
    try:
        return ggd.fit_gg(model.flat(cfg.include_biases)).shape
    except DegenerateSampleError:
        return fallback


def rd_gradient(model, inputs, labels, cfg, shape):
    """Cost ``J`` and its gradient with the rate shape held at ``shape``."""
    d, grads = loss_and_grad(model, inputs, labels)
    scoped = model.flat(cfg.include_biases)
    r = rate.soft_rate(scoped, shape, cfg.epsilon)
    j = rate.rd_cost(d, r, cfg.lam)
    if cfg.lam:
        g_rate = rate.soft_rate_grad(scoped, shape, cfg.epsilon)
        off = 0
        for i, a in enumerate(model.parameters()):
            if i % 2 and not cfg.include_biases:
                continue
            grads[i] = grads[i] + cfg.lam * g_rate[off : off + a.size].reshape(a.shape)
            off += a.size
    return StepResult(d, r, j, shape), grads


def backslash_step(model, inputs, labels, cfg, fallback_shape=2.0):
    """One BackSlash update of ``model`` in place; returns the pre-update step costs."""
    shape = estimate_shape(model, cfg, fallback_shape)
    res, grads = rd_gradient(model, inputs, labels, cfg, shape)
    if not math.isfinite(res.cost) or not all(np.all(np.isfinite(g)) for g in grads):
        raise DivergenceError(f"non-finite cost or gradient (J={res.cost})")
    for a, g in zip(model.parameters(), grads):
        a -= cfg.learning_rate * g
    return res


# -- training loop ----------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    distortion: float
    rate: float
    cost: float
    shape: float
    train_accuracy: float
    test_accuracy: float
    eg_bits: float
    log_cost: Optional[float] = None


@dataclass
class TrainMetrics:
    records: list = field(default_factory=list)

    def finalize(self):
        """Fill ``log_cost = log10(J - 0.995 * J_min)`` over the whole run."""
        j_min = min(r.cost for r in self.records)
        for r in self.records:
            r.log_cost = math.log10(r.cost - LOG_COST_BETA * j_min)

    def to_jsonl(self):
        return "".join(json.dumps(asdict(r), sort_keys=True) + "\n" for r in self.records)

    @property
    def last(self):
        return self.records[-1]

    def column(self, name):
        return [getattr(r, name) for r in self.records]


def model_eg_bits(model, quant_exponent=METRIC_QUANT_EXPONENT, k=0):
    """EG average bits per parameter over all parameters of ``model``."""
    return codec.eg_avg_bits(model.flat(True), quant_exponent, k)


def _epoch_record(epoch, model, data, cfg):
    shape = estimate_shape(model, cfg)
    x, y = data.x_train, data.y_train
    d, _ = loss_and_grad(model, x, y)
    r = rate.soft_rate(model.flat(cfg.include_biases), shape, cfg.epsilon)
    return EpochRecord(
        epoch=epoch,
        distortion=d,
        rate=r,
        cost=rate.rd_cost(d, r, cfg.lam),
        shape=shape,
        train_accuracy=evaluate(model, x, y),
        test_accuracy=evaluate(model, data.x_test, data.y_test),
        eg_bits=model_eg_bits(model),
    )


def train(cfg, data, model=None):
    """Run ``cfg.epochs`` epochs of BackSlash on ``data``; deterministic given the seed.

    Returns ``(model, metrics)``. Raises :class:`DivergenceError` with epoch and
    batch context if the cost becomes non-finite or grows by more than
    ``DIVERGENCE_FACTOR`` over its first-epoch value.
    """
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        dims = (data.x_train.shape[1],) + cfg.hidden + (data.classes,)
        model = Model.init(dims, int(rng.integers(2**63)))
    metrics = TrainMetrics()
    n = data.y_train.size
    shape = 2.0
    ref_cost = None
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start : start + cfg.batch_size]
            try:
                res = backslash_step(model, data.x_train[idx], data.y_train[idx], cfg, shape)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch {b}: {exc}", epoch, b) from None
            shape = res.shape
            if ref_cost is None:
                ref_cost = abs(res.cost)
            if res.cost > DIVERGENCE_FACTOR * max(ref_cost, 1e-12):
                raise DivergenceError(
                    f"epoch {epoch}, batch {b}: cost {res.cost:.3g} grew over "
                    f"{DIVERGENCE_FACTOR:g}x its reference {ref_cost:.3g}",
                    epoch,
                    b,
                )
        rec = _epoch_record(epoch, model, data, cfg)
        if not math.isfinite(rec.cost):
            raise DivergenceError(f"epoch {epoch}: non-finite cost", epoch)
        if epoch == 1:
            ref_cost = abs(rec.cost)
        metrics.records.append(rec)
    metrics.finalize()
    return model, metrics


# -- deployment transforms --------------------------------------------------


def prune_model(model, pruning_rate):
    """Global magnitude pruning over every parameter of the model."""
    out = model.copy()
    out.set_flat(prune(model.flat(True), pruning_rate))
    return out


def quantize_model(model, n):
    """Round every parameter to the grid of step ``2**-n``."""
    out = model.copy()
    out.set_flat(dequantize(quantize(model.flat(True), n), n))
    return out
