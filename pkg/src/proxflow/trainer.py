"""Training loop: belief trajectories driven by true targets, stepwise MSE supervision.

Training never feeds network predictions back into the belief trajectory.  A
training instance is drawn directly from the closed-form true-target belief at
a random step (W2 regime) or from the accuracy-curve flow distribution at a
random continuous time (Bayesian regime); the network is then supervised to
recover the clean vector from it.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .belief import BfnSchedule, GaussianBelief, Schedule, belief_sample, cosine_schedule
from .predictor import (
    PredictorNet,
    backward_batch,
    cosine_lr,
    ema_net,
    init_optimizer,
    optimizer_step,
)

__all__ = [
    "REGIME_GPFN",
    "REGIME_BFN",
    "TrainConfig",
    "TrainResult",
    "TrainingDivergedError",
    "gpfn_belief_at",
    "make_training_instance_gpfn",
    "make_training_instance_bfn",
    "train",
    "write_loss_csv",
]

REGIME_GPFN = "gpfn"
REGIME_BFN = "bfn"


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite; carries (step, t, loss) diagnostics."""

    def __init__(self, step: int, t, loss: float):
        self.step = step
        self.t = t
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at step {step} (t={t})")


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    epochs = 0 is allowed and leaves the network untouched (useful for
    plumbing tests); production configs should train for at least one epoch.
    """

    regime: str = REGIME_GPFN
    T: int = 20
    shift: float = 0.008
    sigma1: float = 0.001
    epochs: int = 30
    batch_size: int = 128
    lr: float = 2e-4
    weight_decay: float = 0.01
    ema_decay: float = 0.999
    clip_norm: float | None = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.regime not in (REGIME_GPFN, REGIME_BFN):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not 0.0 < self.sigma1 < 1.0:
            raise ValueError("sigma1 must lie in (0, 1)")


@dataclass
class TrainResult:
    net: PredictorNet
    ema: PredictorNet
    epoch_losses: np.ndarray
    steps: int


def gpfn_belief_at(x0: np.ndarray, schedule: Schedule, t: int) -> GaussianBelief:
    """True-target belief after t W2 steps from the standard-normal prior.

    Iterating mean' = tau x0 + (1 - tau) mean from mean 0 telescopes to
    mean_t = (1 - gamma_t) x0 with variance gamma_t^2, so the belief at any
    step is available without unrolling.
    """
    if not 0 <= t <= schedule.T:
        raise ValueError(f"step {t} outside 0..{schedule.T}")
    x0 = np.asarray(x0, dtype=np.float64)
    g = schedule.gamma[t]
    return GaussianBelief(mean=(1.0 - g) * x0, variance=g * g)


def make_training_instance_gpfn(
    x0: np.ndarray, schedule: Schedule, t: int, rng: np.random.Generator
) -> tuple:
    """Sample (x_t, t_frac, x0) from the true-target trajectory at step t."""
    x_t = belief_sample(gpfn_belief_at(x0, schedule, t), rng)
    return x_t, t / schedule.T, np.asarray(x0, dtype=np.float64)


def make_training_instance_bfn(
    x0: np.ndarray, t: float, sigma1: float, rng: np.random.Generator
) -> tuple:
    """Sample (mu_t, t, x0, loss_weight) from the accuracy-curve flow at time t.

    mu_t ~ N(gamma x0, gamma (1 - gamma) I) with gamma = 1 - sigma1**(2t);
    the loss weight is the continuous-time factor -ln(sigma1) * sigma1**(-2t).
    """
    sched = BfnSchedule(sigma1=sigma1)
    x0 = np.asarray(x0, dtype=np.float64)
    g = sched.gamma(t)
    mu = belief_sample(GaussianBelief(mean=g * x0, variance=g * (1.0 - g)), rng)
    return mu, float(t), x0, sched.loss_weight(t)


def _gpfn_batch(X0, schedule, rng):
    n = X0.shape[0]
    steps = rng.integers(0, schedule.T, size=n)
    g = schedule.gamma[steps][:, None]
    z = rng.standard_normal(X0.shape)
    x_t = (1.0 - g) * X0 + g * z
    return x_t, steps / schedule.T, np.ones(n)


def _bfn_batch(X0, sigma1, rng):
    n = X0.shape[0]
    t = rng.uniform(0.0, 1.0, size=n)
    log_s = math.log(sigma1)
    g = -np.expm1(2.0 * t * log_s)
    z = rng.standard_normal(X0.shape)
    mu = g[:, None] * X0 + np.sqrt(g * (1.0 - g))[:, None] * z
    weights = -log_s * np.exp(-2.0 * t * log_s)
    return mu, t, weights


def train(
    config: TrainConfig,
    data: np.ndarray,
    net: PredictorNet,
    rng: np.random.Generator | None = None,
) -> TrainResult:
    """Run the full loop: instances -> forward/backward -> clip -> update -> EMA.

    Returns final and EMA parameters plus the per-epoch mean loss.  The
    learning rate follows cosine annealing to zero over the configured run.
    Raises TrainingDivergedError with step diagnostics on a non-finite loss.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty (n, d) matrix")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    schedule = cosine_schedule(config.T, config.shift) if config.regime == REGIME_GPFN else None

    state = init_optimizer(
        net,
        lr=config.lr,
        weight_decay=config.weight_decay,
        ema_decay=config.ema_decay,
        clip_norm=config.clip_norm,
    )
    n = data.shape[0]
    batches_per_epoch = max(1, n // config.batch_size)
    total_steps = config.epochs * batches_per_epoch
    epoch_losses = np.zeros(config.epochs)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running = 0.0
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size : (b + 1) * config.batch_size]
            X0 = data[idx]
            if config.regime == REGIME_GPFN:
                x_in, t_frac, weights = _gpfn_batch(X0, schedule, rng)
            else:
                x_in, t_frac, weights = _bfn_batch(X0, config.sigma1, rng)
            try:
                loss, grads = backward_batch(net, x_in, t_frac, X0, weights)
            except FloatingPointError:
                raise TrainingDivergedError(step, t_frac, float("nan"))
            if not math.isfinite(loss):
                raise TrainingDivergedError(step, t_frac, loss)
            state.lr = cosine_lr(config.lr, step, total_steps)
            optimizer_step(net, grads, state)
            running += loss
            step += 1
        epoch_losses[epoch] = running / batches_per_epoch
    return TrainResult(net=net, ema=ema_net(net, state), epoch_losses=epoch_losses, steps=step)


def write_loss_csv(path, epoch_losses) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(epoch_losses):
            writer.writerow([epoch, f"{loss:.10g}"])
