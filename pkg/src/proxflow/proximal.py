"""Proximal update operators on Gaussian beliefs.

Each refinement step solves

    argmin_p  fidelity(p, target) + (1/eta) * D(p, current belief)

over axis-aligned Gaussians.  Two instantiations have closed forms: squared-W2
distance against a point target (mean moves a fraction tau along the segment,
standard deviation shrinks by the same fraction), and KL against a noisy
observation with eta = 1 (the conjugate Gaussian posterior).  A brute-force
numeric minimizer of the same objectives is provided purely as a test oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .belief import GaussianBelief

__all__ = [
    "Dirac",
    "NoisyObservation",
    "ProximalKind",
    "W2_SQUARED",
    "kl_bayes",
    "UnsupportedStepSizeError",
    "OracleFailureError",
    "w2_update",
    "kl_update",
    "oracle_minimize",
    "tau_from_eta",
    "eta_from_tau",
]


class UnsupportedStepSizeError(ValueError):
    """Raised when an update is requested outside its closed-form regime."""


class OracleFailureError(RuntimeError):
    """Numeric oracle failed to converge within its iteration budget."""


@dataclass(frozen=True)
class Dirac:
    """Point-mass target at a clean data vector."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class NoisyObservation:
    """Target given as a noisy measurement of the data."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.asarray(self.value, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class ProximalKind:
    """Which divergence parameterizes the proximity term.

    tag is "w2" (squared 2-Wasserstein) or "kl" (KL against the current
    belief, with a Gaussian likelihood of variance likelihood_var).
    """

    tag: str
    likelihood_var: float | None = None

    def __post_init__(self):
        if self.tag not in ("w2", "kl"):
            raise ValueError(f"unknown proximal kind {self.tag!r}")
        if self.tag == "kl":
            if self.likelihood_var is None or self.likelihood_var <= 0.0:
                raise ValueError("kl kind needs a positive likelihood variance")


W2_SQUARED = ProximalKind(tag="w2")


def kl_bayes(likelihood_var: float) -> ProximalKind:
    return ProximalKind(tag="kl", likelihood_var=float(likelihood_var))


def tau_from_eta(eta: float) -> float:
    """Effective step size tau = eta / (1 + eta); tau -> 1 as eta -> inf."""
    if math.isinf(eta):
        return 1.0
    return eta / (1.0 + eta)


def eta_from_tau(tau: float) -> float:
    """Raw proximal weight eta = tau / (1 - tau); inf at the full step tau = 1."""
    if tau >= 1.0:
        return math.inf
    return tau / (1.0 - tau)


def _check_dims(belief: GaussianBelief, vec: np.ndarray) -> None:
    if vec.size != belief.dim:
        raise ValueError(f"target dimension {vec.size} does not match belief dimension {belief.dim}")


def w2_update(belief: GaussianBelief, target: Dirac, tau: float) -> GaussianBelief:
    """Squared-W2 proximal step toward a point target.

    mean' = tau * x0 + (1 - tau) * mean and std' = (1 - tau) * std.  tau = 1
    collapses the belief onto the target exactly.
    """
    if not isinstance(target, Dirac):
        raise TypeError("w2_update takes a point-mass target")
    _check_dims(belief, target.point)
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    mean = tau * target.point + (1.0 - tau) * belief.mean
    std = (1.0 - tau) * belief.std
    return GaussianBelief(mean=mean, variance=std * std)


def kl_update(
    belief: GaussianBelief,
    target: NoisyObservation,
    likelihood_var: float,
    eta: float = 1.0,
) -> GaussianBelief:
    """KL proximal step with eta = 1: the conjugate Gaussian posterior.

    precision' = 1/variance + 1/likelihood_var and the new mean is the
    precision-weighted combination of the old mean and the observation.
    Only eta = 1 has a closed form, so any other value is rejected.
    """
    if not isinstance(target, NoisyObservation):
        raise TypeError("kl_update takes a noisy-observation target")
    _check_dims(belief, target.value)
    if eta != 1.0:
        raise UnsupportedStepSizeError(f"kl_update only supports eta = 1, got {eta}")
    if likelihood_var <= 0.0:
        raise ValueError(f"likelihood variance must be > 0, got {likelihood_var}")
    if belief.variance <= 0.0:
        raise ValueError("kl_update needs a non-degenerate belief (variance > 0)")
    precision = 1.0 / belief.variance + 1.0 / likelihood_var
    mean = (belief.mean / belief.variance + target.value / likelihood_var) / precision
    return GaussianBelief(mean=mean, variance=1.0 / precision)


# --- numeric oracle -------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0  # 0.618...


def _golden_min(f, lo: float, hi: float, xtol: float) -> float:
    """Golden-section minimum of a unimodal f on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > xtol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _w2_objective(mean, std, belief, x0, eta, dim):
    fid = sum((m - x) ** 2 for m, x in zip(mean, x0)) + dim * std * std
    prox = sum((m - mb) ** 2 for m, mb in zip(mean, belief.mean)) + dim * (std - belief.std) ** 2
    return fid + prox / eta


def _kl_objective(mean, std, belief, y, eta, dim, lvar):
    # E_p[-ln L(x | y)] for Gaussian p and likelihood N(x, lvar * I).
    sq = sum((yy - m) ** 2 for yy, m in zip(y, mean))
    nll = 0.5 * dim * math.log(2.0 * math.pi * lvar) + (sq + dim * std * std) / (2.0 * lvar)
    # KL(N(mean, std^2 I) || belief) in closed form.
    vb = belief.variance
    v = std * std
    kl = 0.5 * dim * (v / vb - 1.0 + math.log(vb / v)) + sum(
        (m - mb) ** 2 for m, mb in zip(mean, belief.mean)
    ) / (2.0 * vb)
    return nll + kl / eta


def oracle_minimize(
    belief: GaussianBelief,
    target,
    kind: ProximalKind,
    eta: float,
    max_sweeps: int = 200,
    obj_tol: float = 1e-12,
) -> GaussianBelief:
    """Minimize the proximal objective numerically (test oracle only).

    Coordinate descent over (mean components, std) with a golden-section line
    search per coordinate, run until the objective improves by less than
    obj_tol.  Intended for dimensions up to 4; raises OracleFailureError if
    the sweep budget is exhausted so a silent non-converged answer can never
    leak into a test.
    """
    dim = belief.dim
    if dim > 4:
        raise ValueError("oracle is meant for small instances (dim <= 4)")
    if eta <= 0.0 or math.isinf(eta):
        raise ValueError(f"oracle needs finite eta > 0, got {eta}")

    if kind.tag == "w2":
        if not isinstance(target, Dirac):
            raise TypeError("w2 oracle takes a point-mass target")
        anchor = target.point
        objective = lambda m, s: _w2_objective(m, s, belief, anchor, eta, dim)
        std_hi = belief.std + 1.0
    else:
        if not isinstance(target, NoisyObservation):
            raise TypeError("kl oracle takes a noisy-observation target")
        if belief.variance <= 0.0:
            raise ValueError("kl oracle needs a non-degenerate belief")
        anchor = target.value
        lvar = kind.likelihood_var
        objective = lambda m, s: _kl_objective(m, s, belief, anchor, eta, dim, lvar)
        std_hi = belief.std + 1.0

    _check_dims(belief, anchor)
    mean = [float(m) for m in belief.mean]
    std = belief.std if belief.std > 0.0 else 0.5 * std_hi
    lo_m = [min(a, b) - 1.0 for a, b in zip(anchor, belief.mean)]
    hi_m = [max(a, b) + 1.0 for a, b in zip(anchor, belief.mean)]
    std_lo = 1e-12

    best = objective(mean, std)
    for _ in range(max_sweeps):
        for j in range(dim):
            def along(mj, j=j):
                trial = mean.copy()
                trial[j] = mj
                return objective(trial, std)

            mean[j] = _golden_min(along, lo_m[j], hi_m[j], xtol=1e-11)
        std = _golden_min(lambda s: objective(mean, s), std_lo, std_hi, xtol=1e-11)
        now = objective(mean, std)
        if best - now <= obj_tol * max(1.0, abs(now)):
            return GaussianBelief(mean=np.array(mean), variance=std * std)
        best = now
    raise OracleFailureError(
        f"oracle did not converge in {max_sweeps} sweeps (last objective {best!r})"
    )
