"""One-hidden-layer tanh network trained from scratch with Adam.

Covers both the single-output and the lead-augmented multi-output heads:
the only difference is the width of the output layer and, optionally, a
per-output weighting of the squared-error loss. Training is full-batch
by default, monitors validation MSE after every epoch, and returns the
parameter snapshot from the best validation epoch (early stopping).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import EmbeddingSpec, NarxDataset, ScalerStats
from .errors import ConfigError, DivergenceError, ShapeError

__all__ = [
    "MlpModel",
    "TrainConfig",
    "TrainTrace",
    "Gradients",
    "AdamState",
    "init_model",
    "forward",
    "mse_loss",
    "backward",
    "adam_step",
    "train",
]


@dataclass
class MlpModel:
    """Network parameters plus the embedding and scaler they were trained with.

    hidden_weights: (n_hidden, n_inputs); output_weights: (n_outputs, n_hidden).
    Hidden activation is tanh, output activation is identity.
    """

    hidden_weights: np.ndarray = field(repr=False)
    hidden_bias: np.ndarray = field(repr=False)
    output_weights: np.ndarray = field(repr=False)
    output_bias: np.ndarray = field(repr=False)
    embedding: EmbeddingSpec | None = None
    scaler: ScalerStats | None = None

    def __post_init__(self):
        w1, b1, w2, b2 = (
            np.asarray(self.hidden_weights, dtype=np.float64),
            np.asarray(self.hidden_bias, dtype=np.float64),
            np.asarray(self.output_weights, dtype=np.float64),
            np.asarray(self.output_bias, dtype=np.float64),
        )
        if w1.ndim != 2 or w2.ndim != 2 or b1.ndim != 1 or b2.ndim != 1:
            raise ShapeError("weights must be 2-D and biases 1-D")
        if b1.size != w1.shape[0] or w2.shape[1] != w1.shape[0] or b2.size != w2.shape[0]:
            raise ShapeError(
                f"inconsistent parameter shapes: W1 {w1.shape}, b1 {b1.shape}, "
                f"W2 {w2.shape}, b2 {b2.shape}"
            )
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ConfigError("model parameters must be finite")
        self.hidden_weights, self.hidden_bias = w1, b1
        self.output_weights, self.output_bias = w2, b2

    @property
    def n_inputs(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.output_weights.shape[0]

    def params(self) -> list[np.ndarray]:
        return [self.hidden_weights, self.hidden_bias, self.output_weights, self.output_bias]

    def copy(self) -> "MlpModel":
        return MlpModel(
            hidden_weights=self.hidden_weights.copy(),
            hidden_bias=self.hidden_bias.copy(),
            output_weights=self.output_weights.copy(),
            output_bias=self.output_bias.copy(),
            embedding=self.embedding,
            scaler=self.scaler,
        )


@dataclass(frozen=True)
class TrainConfig:
    """Adam and early-stopping settings.

    batch_size=None trains full-batch. loss_weights=None uses the plain
    (uniform) MSE; an explicit vector must sum to 1 with a dominant first
    entry and an equal tail, matching the weighted-loss constraint.
    """

    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 5000
    patience: int = 100
    batch_size: int | None = None
    rng_seed: int = 0
    loss_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss_weights is not None:
            w = tuple(float(v) for v in self.loss_weights)
            object.__setattr__(self, "loss_weights", w)
            if abs(sum(w) - 1.0) > 1e-12:
                raise ConfigError(f"loss weights must sum to 1, got {sum(w)!r}")
            if len(w) >= 2:
                if not w[0] > w[1]:
                    raise ConfigError("first loss weight must dominate the rest")
                if any(v != w[1] for v in w[2:]):
                    raise ConfigError("loss weights after the first must be equal")


@dataclass(frozen=True)
class TrainTrace:
    """Per-epoch loss history. Epochs are 1-based.

    train_loss[i] is the loss entering epoch i+1 (before that epoch's
    update); val_loss[i] is the validation loss after it.
    """

    train_loss: tuple[float, ...]
    val_loss: tuple[float, ...]
    best_epoch: int
    stopped_epoch: int


@dataclass
class Gradients:
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    output_bias: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        return [self.hidden_weights, self.hidden_bias, self.output_weights, self.output_bias]


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]

    @classmethod
    def zeros_like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def init_model(
    n_inputs: int,
    n_hidden: int,
    n_outputs: int,
    seed: int,
    embedding: EmbeddingSpec | None = None,
    scaler: ScalerStats | None = None,
) -> MlpModel:
    """Fan-balanced uniform init: weights ~ U(+-sqrt(6/(fan_in+fan_out))),
    biases zero. Deterministic per seed; hidden layer drawn first."""
    if min(n_inputs, n_hidden, n_outputs) < 1:
        raise ConfigError("all layer sizes must be >= 1")
    rng = np.random.default_rng(seed)
    bound1 = math.sqrt(6.0 / (n_inputs + n_hidden))
    bound2 = math.sqrt(6.0 / (n_hidden + n_outputs))
    return MlpModel(
        hidden_weights=rng.uniform(-bound1, bound1, (n_hidden, n_inputs)),
        hidden_bias=np.zeros(n_hidden),
        output_weights=rng.uniform(-bound2, bound2, (n_outputs, n_hidden)),
        output_bias=np.zeros(n_outputs),
        embedding=embedding,
        scaler=scaler,
    )


def forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """outputs = W2 @ tanh(W1 @ u + b1) + b2, for a single row or a batch."""
    u = np.asarray(inputs, dtype=np.float64)
    single = u.ndim == 1
    if single:
        u = u[None, :]
    if u.ndim != 2 or u.shape[1] != model.n_inputs:
        raise ShapeError(f"expected input width {model.n_inputs}, got shape {u.shape}")
    hidden = np.tanh(u @ model.hidden_weights.T + model.hidden_bias)
    out = hidden @ model.output_weights.T + model.output_bias
    return out[0] if single else out


def _output_weight_vector(n_outputs: int, weights) -> np.ndarray:
    """Per-output loss weights; uniform (1/k each) when weights is None."""
    if weights is None:
        return np.full(n_outputs, 1.0 / n_outputs)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n_outputs,):
        raise ShapeError(f"expected {n_outputs} loss weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ConfigError("loss weights must be finite")
    if abs(float(w.sum()) - 1.0) > 1e-12:
        raise ConfigError(f"loss weights must sum to 1, got {float(w.sum())!r}")
    return w


def mse_loss(pred: np.ndarray, target: np.ndarray, weights=None) -> float:
    """Mean squared error; with weights, sum of a_k times output-k's MSE."""
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise ShapeError(f"pred shape {p.shape} != target shape {t.shape}")
    if weights is None:
        return float(np.mean((p - t) ** 2))
    w = _output_weight_vector(p.shape[1], weights)
    per_output = np.mean((p - t) ** 2, axis=0)
    return float(per_output @ w)


def backward(
    model: MlpModel, inputs: np.ndarray, targets: np.ndarray, weights=None
) -> Gradients:
    """Analytic gradients of mse_loss(forward(model, inputs), targets, weights)."""
    grads, _ = _loss_and_gradients(model, np.atleast_2d(inputs), np.atleast_2d(targets), weights)
    return grads


def _loss_and_gradients(model, u, t, weights):
    """Shared forward/backward pass; returns (Gradients, loss)."""
    if u.shape[1] != model.n_inputs:
        raise ShapeError(f"expected input width {model.n_inputs}, got {u.shape[1]}")
    if t.shape != (u.shape[0], model.n_outputs):
        raise ShapeError(f"expected target shape {(u.shape[0], model.n_outputs)}, got {t.shape}")
    w = _output_weight_vector(model.n_outputs, weights)
    n = u.shape[0]

    hidden = np.tanh(u @ model.hidden_weights.T + model.hidden_bias)
    pred = hidden @ model.output_weights.T + model.output_bias
    resid = pred - t
    loss = float(np.mean(resid**2, axis=0) @ w)

    d_out = (2.0 / n) * resid * w  # d loss / d pred
    g_w2 = d_out.T @ hidden
    g_b2 = d_out.sum(axis=0)
    d_hidden = (d_out @ model.output_weights) * (1.0 - hidden**2)
    g_w1 = d_hidden.T @ u
    g_b1 = d_hidden.sum(axis=0)
    return Gradients(g_w1, g_b1, g_w2, g_b2), loss


def adam_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    state: AdamState,
    config: TrainConfig,
    t: int,
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update with bias correction; t is the 1-based step index."""
    if t < 1:
        raise ConfigError(f"adam step index must be >= 1, got {t}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_params: list[np.ndarray] = []
    new_m: list[np.ndarray] = []
    new_v: list[np.ndarray] = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v)


def _set_params(model: MlpModel, params: list[np.ndarray]) -> None:
    model.hidden_weights, model.hidden_bias, model.output_weights, model.output_bias = params


def train(
    dataset: NarxDataset, arch: tuple[int, EmbeddingSpec], config: TrainConfig
) -> tuple[MlpModel, TrainTrace]:
    """Train on the training block, early-stop on validation uniform MSE.

    Returns the parameter snapshot from the best validation epoch. With
    patience p >= 1, training stops once p consecutive epochs fail to
    improve the validation loss (so stopped_epoch - best_epoch == p); with
    p = 0 it stops at the first non-improving epoch.
    """
    n_hidden, embedding = arch
    if dataset.partition is None or dataset.scaler is None:
        raise ConfigError("dataset must be partitioned and scaled before training")
    if dataset.embedding != embedding:
        raise ConfigError(
            f"architecture embedding {embedding} does not match dataset {dataset.embedding}"
        )

    train_in, train_tg = dataset.rows("train")
    val_in, val_tg = dataset.rows("val")
    model = init_model(
        embedding.n_inputs, n_hidden, embedding.n_outputs, config.rng_seed, embedding, dataset.scaler
    )
    params = model.params()
    state = AdamState.zeros_like(params)
    shuffle_rng = np.random.default_rng([config.rng_seed, 0x5B])

    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = math.inf
    best_epoch = 0
    best_params = [p.copy() for p in params]
    stop_after = max(1, config.patience)
    step = 0

    for epoch in range(1, config.max_epochs + 1):
        if config.batch_size is None:
            grads, train_loss = _loss_and_gradients(model, train_in, train_tg, config.loss_weights)
            step += 1
            params, state = adam_step(params, grads.as_list(), state, config, step)
            _set_params(model, params)
        else:
            order = shuffle_rng.permutation(train_in.shape[0])
            loss_acc = 0.0
            for lo in range(0, order.size, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                grads, batch_loss = _loss_and_gradients(
                    model, train_in[idx], train_tg[idx], config.loss_weights
                )
                loss_acc += batch_loss * idx.size
                step += 1
                params, state = adam_step(params, grads.as_list(), state, config, step)
                _set_params(model, params)
            train_loss = loss_acc / order.size

        val_pred = np.tanh(val_in @ model.hidden_weights.T + model.hidden_bias)
        val_pred = val_pred @ model.output_weights.T + model.output_bias
        val_loss = float(np.mean((val_pred - val_tg) ** 2))

        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceError("training loss became non-finite", step=epoch)
        train_losses.append(train_loss)
        val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = [p.copy() for p in params]
        elif epoch - best_epoch >= stop_after:
            break

    best_model = MlpModel(
        hidden_weights=best_params[0],
        hidden_bias=best_params[1],
        output_weights=best_params[2],
        output_bias=best_params[3],
        embedding=embedding,
        scaler=dataset.scaler,
    )
    trace = TrainTrace(
        train_loss=tuple(train_losses),
        val_loss=tuple(val_losses),
        best_epoch=best_epoch,
        stopped_epoch=len(val_losses),
    )
    return best_model, trace
