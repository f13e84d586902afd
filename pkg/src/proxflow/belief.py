"""Gaussian belief state and the discrete schedules that drive its refinement.

The generative process keeps a running belief N(mean, variance * I) over data
space and sharpens it step by step.  Two schedule families live here: the
shifted-cosine step-size schedule of the W2 regime, and the accuracy curve
gamma(t) = 1 - sigma1**(2t) of the Bayesian (BFN) regime.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianBelief",
    "Schedule",
    "BfnSchedule",
    "cosine_schedule",
    "bfn_accuracy",
    "bfn_alpha",
    "belief_sample",
    "prior_belief",
]


def _frozen_vector(x) -> np.ndarray:
    v = np.array(x, dtype=np.float64, copy=True).reshape(-1)
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class GaussianBelief:
    """Axis-aligned Gaussian belief N(mean, variance * I) with one shared variance."""

    mean: np.ndarray
    variance: float

    def __post_init__(self):
        mean = _frozen_vector(self.mean)
        if mean.size == 0:
            raise ValueError("belief mean must be a non-empty vector")
        if not np.all(np.isfinite(mean)):
            raise ValueError("belief mean must be finite")
        variance = float(self.variance)
        if not math.isfinite(variance) or variance < 0.0:
            raise ValueError(f"belief variance must be finite and >= 0, got {variance}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class Schedule:
    """Precomputed step sizes for T refinement steps.

    gamma has T+1 entries with gamma[0] = 1 and gamma[T] = 0, strictly
    decreasing; it doubles as the belief standard deviation at each step
    (variance gamma[t]**2).  tau[t] = 1 - gamma[t+1]/gamma[t] is the fraction
    of the remaining gap closed at step t.  eta = tau/(1-tau) is the raw
    proximal weight; the final entry is +inf because the last step has
    tau = 1 (full replacement), so consumers must branch on isinf rather
    than multiply through.
    """

    T: int
    shift: float
    gamma: np.ndarray
    tau: np.ndarray
    eta: np.ndarray

    @property
    def final_eta_infinite(self) -> bool:
        return bool(np.isinf(self.eta[-1]))


def cosine_schedule(T: int, shift: float = 0.008) -> Schedule:
    """Build the shifted-cosine step schedule on T steps.

    gamma_t = cos(((t/T + s)/(1 + s)) * pi/2) / cos((s/(1 + s)) * pi/2); the
    shift s keeps the first ratio away from a singular step at t = 0.
    """
    if T < 1:
        raise ValueError(f"schedule needs at least one step, got T={T}")
    if shift < 0.0:
        raise ValueError(f"schedule shift must be >= 0, got {shift}")
    t = np.arange(T + 1, dtype=np.float64)
    denom = math.cos((shift / (1.0 + shift)) * math.pi / 2.0)
    gamma = np.cos(((t / T + shift) / (1.0 + shift)) * (math.pi / 2.0)) / denom
    # cos(pi/2) rounds to ~6e-17, not 0; the endpoint is exact by construction.
    gamma[T] = 0.0
    if np.any(np.diff(gamma) >= 0.0):
        raise ValueError("cosine schedule is not strictly decreasing; T too large for the shift")
    tau = 1.0 - gamma[1:] / gamma[:-1]
    with np.errstate(divide="ignore"):
        eta = np.where(tau < 1.0, tau / (1.0 - tau), np.inf)
    gamma.flags.writeable = False
    tau.flags.writeable = False
    eta.flags.writeable = False
    return Schedule(T=T, shift=float(shift), gamma=gamma, tau=tau, eta=eta)


def bfn_accuracy(t, sigma1: float):
    """Accuracy gamma(t) = 1 - sigma1**(2t) of the Bayesian regime, t in [0, 1]."""
    if not 0.0 < sigma1 < 1.0:
        raise ValueError(f"sigma1 must lie in (0, 1), got {sigma1}")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError("t must lie in [0, 1]")
    out = -np.expm1(2.0 * t_arr * math.log(sigma1))
    return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out


def bfn_alpha(i: int, n_steps: int, sigma1: float) -> float:
    """Per-step accuracy increment alpha_i = sigma1**(-2i/n) * (1 - sigma1**(2/n)).

    Telescoping gives total precision sigma1**(-2i/n) after i steps starting
    from 1, matching gamma(t) = 1 - sigma1**(2t) at t = i/n.
    """
    if not 0.0 < sigma1 < 1.0:
        raise ValueError(f"sigma1 must lie in (0, 1), got {sigma1}")
    if not 1 <= i <= n_steps:
        raise ValueError(f"step index {i} outside 1..{n_steps}")
    return sigma1 ** (-2.0 * i / n_steps) * (1.0 - sigma1 ** (2.0 / n_steps))


@dataclass(frozen=True)
class BfnSchedule:
    """Accuracy curve of the Bayesian regime, plus its discrete increments.

    Holds sigma1 and a sampled grid of gamma(t) over [0, 1] (gamma(0) = 0,
    gamma(1) = 1 - sigma1**2, monotone increasing).
    """

    sigma1: float
    n_grid: int = 101
    grid_t: np.ndarray = None
    grid_gamma: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.sigma1 < 1.0:
            raise ValueError(f"sigma1 must lie in (0, 1), got {self.sigma1}")
        if self.n_grid < 2:
            raise ValueError("grid needs at least two points")
        grid_t = np.linspace(0.0, 1.0, self.n_grid)
        grid_gamma = bfn_accuracy(grid_t, self.sigma1)
        grid_t.flags.writeable = False
        grid_gamma.flags.writeable = False
        object.__setattr__(self, "grid_t", grid_t)
        object.__setattr__(self, "grid_gamma", grid_gamma)

    def gamma(self, t):
        return bfn_accuracy(t, self.sigma1)

    def loss_weight(self, t):
        """Continuous-time loss weight -ln(sigma1) * sigma1**(-2t)."""
        t_arr = np.asarray(t, dtype=np.float64)
        out = -math.log(self.sigma1) * np.exp(-2.0 * t_arr * math.log(self.sigma1))
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def alpha(self, i: int, n_steps: int) -> float:
        return bfn_alpha(i, n_steps, self.sigma1)


def belief_sample(belief: GaussianBelief, rng: np.random.Generator) -> np.ndarray:
    """Draw x ~ N(mean, variance * I); a degenerate belief returns its mean."""
    z = rng.standard_normal(belief.dim)
    return belief.mean + belief.std * z


def prior_belief(dim: int) -> GaussianBelief:
    """Standard-normal starting belief N(0, I)."""
    return GaussianBelief(mean=np.zeros(dim), variance=1.0)
