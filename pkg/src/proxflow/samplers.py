"""The four generation procedures.

Two drive the W2-proximal map with a net trained in the W2 regime
(deterministic particle updates, and a stochastic variant whose noise follows
a mean-reverting AR(1) recursion that preserves the standard-normal marginal),
and two drive a Bayesian-regime net (the standard noisy-update sampler, and a
deterministic W2-proximal map applied to its predictions).  A generation
budget of nfe steps performs exactly nfe predictor calls per sample.
"""

import math
from dataclasses import dataclass

import numpy as np

from .belief import bfn_alpha, cosine_schedule
from .predictor import PredictorNet, forward_batch
from .metrics import SampleSet
from .trainer import REGIME_BFN, REGIME_GPFN

__all__ = [
    "GPFN_DET",
    "GPFN_STOCH",
    "BFN_STOCH",
    "BFN_DET",
    "SAMPLER_TAGS",
    "SamplerKind",
    "TrainedModel",
    "RegimeMismatchError",
    "gpfn_det_step",
    "gpfn_stoch_step",
    "bfn_stoch_step",
    "bfn_det_step",
    "generate",
    "regime_for_sampler",
]

GPFN_DET = "gpfn-det"
GPFN_STOCH = "gpfn-stoch"
BFN_STOCH = "bfn-stoch"
BFN_DET = "bfn-det"
SAMPLER_TAGS = (GPFN_DET, GPFN_STOCH, BFN_STOCH, BFN_DET)


class RegimeMismatchError(ValueError):
    """Sampler asked to drive a net trained under the other regime."""


@dataclass(frozen=True)
class SamplerKind:
    """Which procedure to run and at what function-evaluation budget."""

    tag: str
    nfe: int

    def __post_init__(self):
        if self.tag not in SAMPLER_TAGS:
            raise ValueError(f"unknown sampler {self.tag!r}; expected one of {SAMPLER_TAGS}")
        if self.nfe < 1:
            raise ValueError(f"nfe must be >= 1, got {self.nfe}")


@dataclass
class TrainedModel:
    """A predictor net bundled with its training regime and schedule constants."""

    net: PredictorNet
    regime: str
    shift: float = 0.008
    sigma1: float = 0.001

    @property
    def data_dim(self) -> int:
        return self.net.data_dim

    def predict(self, X: np.ndarray, t_frac: float) -> np.ndarray:
        return forward_batch(self.net, X, t_frac)


def regime_for_sampler(tag: str) -> str:
    return REGIME_GPFN if tag in (GPFN_DET, GPFN_STOCH) else REGIME_BFN


def gpfn_det_step(x_t: np.ndarray, x_hat: np.ndarray, tau: float) -> np.ndarray:
    """Deterministic particle update x' = tau * x_hat + (1 - tau) * x.

    This is an explicit Euler step of dx = (x_hat - x) per unit tau; with a
    perfect predictor the recursion contracts onto the target exactly.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_t.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x_t.shape} vs {x_hat.shape}")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    return tau * x_hat + (1.0 - tau) * x_t


def gpfn_stoch_step(
    m_t: np.ndarray,
    eps_t: np.ndarray,
    x_hat: np.ndarray,
    tau: float,
    gamma_next: float,
    rng: np.random.Generator,
) -> tuple:
    """Stochastic update tracking the belief mean and a persistent noise state.

    The mean follows the W2 rule; the noise follows eps' = rho * eps +
    sqrt(1 - rho^2) * z with rho = sqrt(1 - tau), which preserves a
    standard-normal marginal while correlating consecutive draws.  The
    particle is reassembled as x' = m' + gamma_next * eps'.  tau = 0 is
    accepted as the pure-persistence limit.
    """
    m_t = np.asarray(m_t, dtype=np.float64)
    eps_t = np.asarray(eps_t, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    rho = math.sqrt(1.0 - tau)
    m_next = tau * x_hat + (1.0 - tau) * m_t
    eps_next = rho * eps_t + math.sqrt(1.0 - rho * rho) * rng.standard_normal(eps_t.shape)
    x_next = m_next + gamma_next * eps_next
    return m_next, eps_next, x_next


def bfn_stoch_step(
    mean: np.ndarray,
    precision: float,
    x_hat: np.ndarray,
    i: int,
    n_steps: int,
    sigma1: float,
    rng: np.random.Generator | None,
) -> tuple:
    """One noisy Bayesian update of the belief parameters.

    A sender sample y ~ N(x_hat, I / alpha_i) is absorbed conjugately:
    precision grows by exactly alpha_i and the mean becomes the
    precision-weighted combination.  rng = None suppresses the sender noise
    (test mode, y = x_hat exactly).
    """
    mean = np.asarray(mean, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    alpha = bfn_alpha(i, n_steps, sigma1)
    y = x_hat if rng is None else x_hat + rng.standard_normal(x_hat.shape) / math.sqrt(alpha)
    new_precision = precision + alpha
    new_mean = (precision * mean + alpha * y) / new_precision
    return new_mean, new_precision


def bfn_det_step(x_t: np.ndarray, x_hat: np.ndarray, tau: float) -> np.ndarray:
    """W2-proximal particle update applied to a Bayesian-regime prediction."""
    return gpfn_det_step(x_t, x_hat, tau)


def generate(
    kind: SamplerKind, model: TrainedModel, n_samples: int, rng: np.random.Generator
) -> SampleSet:
    """Draw n_samples vectors from the final belief under the chosen sampler.

    The step schedule is rebuilt at T = nfe so each step costs one predictor
    call.  The model must have been trained under the regime matching the
    sampler, otherwise the comparison would be silently meaningless.
    """
    need = regime_for_sampler(kind.tag)
    if model.regime != need:
        raise RegimeMismatchError(
            f"sampler {kind.tag!r} needs a net trained in the {need!r} regime, "
            f"got {model.regime!r}"
        )
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    d = model.data_dim
    nfe = kind.nfe

    if kind.tag == GPFN_DET:
        sched = cosine_schedule(nfe, model.shift)
        X = rng.standard_normal((n_samples, d))
        for t in range(nfe):
            x_hat = model.predict(X, t / nfe)
            X = gpfn_det_step(X, x_hat, sched.tau[t])
        return SampleSet(data=X)

    if kind.tag == GPFN_STOCH:
        sched = cosine_schedule(nfe, model.shift)
        M = np.zeros((n_samples, d))
        E = rng.standard_normal((n_samples, d))
        X = M + sched.gamma[0] * E
        for t in range(nfe):
            x_hat = model.predict(X, t / nfe)
            M, E, X = gpfn_stoch_step(M, E, x_hat, sched.tau[t], sched.gamma[t + 1], rng)
        return SampleSet(data=X)

    if kind.tag == BFN_STOCH:
        mean = np.zeros((n_samples, d))
        precision = 1.0
        for i in range(1, nfe):
            x_hat = model.predict(mean, (i - 1) / nfe)
            mean, precision = bfn_stoch_step(
                mean, precision, x_hat, i, nfe, model.sigma1, rng
            )
        return SampleSet(data=model.predict(mean, 1.0))

    # BFN_DET: deterministic map from the Bayesian prior mean (zero), queried
    # on a linear time axis.  Every chain is identical by construction.
    sched = cosine_schedule(nfe, model.shift)
    X = np.zeros((n_samples, d))
    for t in range(nfe):
        x_hat = model.predict(X, t / nfe)
        X = bfn_det_step(X, x_hat, sched.tau[t])
    return SampleSet(data=X)
