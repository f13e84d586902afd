"""Dense denoising network with hand-rolled reverse-mode gradients.

The network maps a noisy data vector plus a sinusoidal embedding of the step
fraction to a prediction of the clean data.  Forward, backward (weighted MSE),
and a decoupled-weight-decay adaptive optimizer with gradient clipping and an
EMA shadow copy are all implemented directly on numpy arrays so that every
gradient can be checked against finite differences.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PredictorNet",
    "OptimizerState",
    "NonFiniteLossError",
    "time_embed",
    "time_embed_batch",
    "init_predictor",
    "forward",
    "forward_batch",
    "backward",
    "backward_batch",
    "init_optimizer",
    "clip_gradients",
    "optimizer_step",
    "cosine_lr",
    "ema_net",
    "silu",
    "silu_grad",
]

# Highest angular frequency of the time embedding, in radians per unit of
# schedule fraction.  Nets are trained on a T-point time grid but sampled on
# rebudgeted grids, so the ladder must stay below the training grid's Nyquist
# rate (pi/(1/T) ~ 63 for T = 20) or predictions alias between grid points.
MAX_TIME_FREQ = 50.0


class NonFiniteLossError(FloatingPointError):
    """Loss or gradient became non-finite (diverged training)."""


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def silu(z: np.ndarray) -> np.ndarray:
    """Smooth ramp z * sigmoid(z)."""
    return z * _sigmoid(z)


def silu_grad(z: np.ndarray) -> np.ndarray:
    s = _sigmoid(z)
    return s * (1.0 + z * (1.0 - s))


def time_embed(t_frac: float, dim: int) -> np.ndarray:
    """Sinusoidal embedding of a step fraction in [0, 1].

    Interleaved sin/cos over a geometric frequency ladder from 1 up to
    MAX_TIME_FREQ radians per unit.  The base frequency keeps one unit of t
    under half a period, so t = 0 and t = 1 stay distinguishable even at
    dim = 2.
    """
    return time_embed_batch(np.asarray([t_frac]), dim)[0]


def time_embed_batch(t_frac: np.ndarray, dim: int) -> np.ndarray:
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"time embedding dim must be even and >= 2, got {dim}")
    t = np.asarray(t_frac, dtype=np.float64).reshape(-1)
    half = dim // 2
    if half == 1:
        freqs = np.ones(1)
    else:
        freqs = MAX_TIME_FREQ ** (np.arange(half) / (half - 1))
    phase = t[:, None] * freqs[None, :]
    emb = np.empty((t.size, dim))
    emb[:, 0::2] = np.sin(phase)
    emb[:, 1::2] = np.cos(phase)
    return emb


@dataclass
class PredictorNet:
    """MLP predicting clean data from (noisy vector, step fraction).

    Layer l computes z = a @ W^T + b; hidden layers apply the smooth ramp,
    the final layer is linear and unbounded.  The input layer sees the data
    vector concatenated with its time embedding.
    """

    data_dim: int
    time_dim: int
    hidden: tuple
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @property
    def layer_sizes(self) -> list:
        return [self.data_dim + self.time_dim, *self.hidden, self.data_dim]

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def params(self) -> list:
        """Parameter arrays in canonical order [W0, b0, W1, b1, ...]."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_params(self, arrays: list) -> None:
        expected = [p.shape for p in self.params()]
        got = [np.asarray(a).shape for a in arrays]
        if expected != got:
            raise ValueError(f"parameter shapes {got} do not match network {expected}")
        for i in range(len(self.weights)):
            self.weights[i] = np.array(arrays[2 * i], dtype=np.float64)
            self.biases[i] = np.array(arrays[2 * i + 1], dtype=np.float64)

    def copy(self) -> "PredictorNet":
        return PredictorNet(
            data_dim=self.data_dim,
            time_dim=self.time_dim,
            hidden=tuple(self.hidden),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def init_predictor(
    data_dim: int,
    hidden: tuple = (128, 128),
    time_dim: int = 16,
    rng: np.random.Generator | None = None,
) -> PredictorNet:
    """He-style random initialization; biases start at zero."""
    if rng is None:
        rng = np.random.default_rng()
    sizes = [data_dim + time_dim, *hidden, data_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return PredictorNet(
        data_dim=data_dim, time_dim=time_dim, hidden=tuple(hidden), weights=weights, biases=biases
    )


def _forward_cached(net: PredictorNet, X: np.ndarray, t_frac) -> tuple:
    n = X.shape[0]
    if X.shape[1] != net.data_dim:
        raise ValueError(f"input dimension {X.shape[1]} does not match network {net.data_dim}")
    t = np.broadcast_to(np.asarray(t_frac, dtype=np.float64), (n,))
    a = np.concatenate([X, time_embed_batch(t, net.time_dim)], axis=1)
    activations = [a]
    pre = []
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if l == last else silu(z)
        activations.append(a)
    return activations, pre


def forward_batch(net: PredictorNet, X: np.ndarray, t_frac) -> np.ndarray:
    """Predict clean data for a batch of rows; t_frac is scalar or per-row."""
    activations, _ = _forward_cached(net, np.asarray(X, dtype=np.float64), t_frac)
    return activations[-1]


def forward(net: PredictorNet, x: np.ndarray, t_frac: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return forward_batch(net, x, t_frac)[0]


def backward_batch(net: PredictorNet, X, t_frac, X0, loss_weight=1.0) -> tuple:
    """Weighted-MSE loss and exact parameter gradients for a batch.

    Per-example loss is loss_weight * mean_j (pred_j - x0_j)^2; the batch
    loss is the mean over examples.  loss_weight may be a scalar or one
    weight per example and must be positive.
    """
    X = np.asarray(X, dtype=np.float64)
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.shape != (X.shape[0], net.data_dim):
        raise ValueError(f"target shape {X0.shape} does not match ({X.shape[0]}, {net.data_dim})")
    n, d = X0.shape
    w_ex = np.broadcast_to(np.asarray(loss_weight, dtype=np.float64), (n,))
    if np.any(w_ex <= 0.0):
        raise ValueError("loss weights must be positive")

    activations, pre = _forward_cached(net, X, t_frac)
    err = activations[-1] - X0
    loss = float(np.mean(w_ex * np.mean(err * err, axis=1)))
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss {loss}")

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    dz = (2.0 / (n * d)) * w_ex[:, None] * err
    for l in range(len(net.weights) - 1, -1, -1):
        grad_w[l] = dz.T @ activations[l]
        grad_b[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ net.weights[l]
            dz = da * silu_grad(pre[l - 1])
    grads = []
    for gw, gb in zip(grad_w, grad_b):
        grads.extend((gw, gb))
    return loss, grads


def backward(net: PredictorNet, x, t_frac: float, x0, loss_weight: float = 1.0) -> tuple:
    """Single-example convenience wrapper around backward_batch."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    x0 = np.asarray(x0, dtype=np.float64).reshape(1, -1)
    return backward_batch(net, x, t_frac, x0, loss_weight)


@dataclass
class OptimizerState:
    """Adaptive-moment optimizer with decoupled decay, clipping, and EMA shadow."""

    lr: float = 2e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 1.0
    ema_decay: float = 0.999
    step: int = 0
    m: list = field(default_factory=list, repr=False)
    v: list = field(default_factory=list, repr=False)
    ema: list = field(default_factory=list, repr=False)


def init_optimizer(net: PredictorNet, **kwargs) -> OptimizerState:
    state = OptimizerState(**kwargs)
    params = net.params()
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]
    state.ema = [p.copy() for p in params]
    return state


def clip_gradients(grads: list, max_norm: float) -> float:
    """Scale grads in place to global norm <= max_norm; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def optimizer_step(net: PredictorNet, grads: list, state: OptimizerState):
    """One update: clip, bias-corrected moments, decoupled decay, EMA shadow."""
    params = net.params()
    if len(grads) != len(params):
        raise ValueError("gradient list does not match parameter list")
    if state.clip_norm is not None:
        clip_gradients(grads, state.clip_norm)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError("non-finite gradient encountered")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)
        if not np.all(np.isfinite(p)):
            raise NonFiniteLossError("non-finite parameter after update")
        state.ema[i] = state.ema_decay * state.ema[i] + (1.0 - state.ema_decay) * p
    return net, state


def cosine_lr(base_lr: float, step: int, total_steps: int) -> float:
    """Cosine annealing from base_lr at step 0 to 0 at total_steps."""
    if total_steps <= 0:
        return base_lr
    frac = min(max(step / total_steps, 0.0), 1.0)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * frac))


def ema_net(net: PredictorNet, state: OptimizerState) -> PredictorNet:
    """Copy of the network carrying the EMA shadow parameters."""
    shadow = net.copy()
    shadow.set_params(state.ema)
    return shadow
