"""Evaluation stack for generated sample sets.

Distributional distance (sliced Wasserstein on raw samples, Frechet distance
on extractor features), quality/coverage (inception-style score, k-NN
precision/recall and density/coverage on features), and intra-set diversity
(structural similarity for image-shaped data, mean pairwise distance
otherwise).  The feature extractor is a small dense classifier trained on the
labeled data; its penultimate activations are the feature space.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .predictor import (
    NonFiniteLossError,
    OptimizerState,
    clip_gradients,
    silu,
    silu_grad,
)

__all__ = [
    "SampleSet",
    "FeatureExtractor",
    "MetricsReport",
    "ExtractorAccuracyError",
    "METRICS_CSV_HEADER",
    "swd",
    "frechet_distance",
    "frechet_from_moments",
    "is_score",
    "precision_recall",
    "density_coverage",
    "diversity",
    "ssim",
    "train_feature_extractor",
    "compute_report",
]

METRICS_CSV_HEADER = ["nfe", "sampler", "swd", "afid", "is", "p", "r", "d", "c", "div"]


class ExtractorAccuracyError(RuntimeError):
    """Feature extractor failed its accuracy bar; metrics would be meaningless."""


@dataclass
class SampleSet:
    """A batch of real or generated vectors, optionally image-shaped."""

    data: np.ndarray
    image_shape: tuple | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("sample set must be an (n, d) matrix")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sample set contains non-finite entries")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != self.data.shape[1]:
                raise ValueError(
                    f"image shape {self.image_shape} does not match row size {self.data.shape[1]}"
                )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _mat(x) -> np.ndarray:
    if isinstance(x, SampleSet):
        return x.data
    out = np.asarray(x, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError("expected an (n, d) matrix")
    return out


# --- sliced Wasserstein ----------------------------------------------------


def _wasserstein2_1d(u: np.ndarray, v: np.ndarray) -> float:
    """Exact squared 2-Wasserstein distance between 1-D empirical measures."""
    u = np.sort(u)
    v = np.sort(v)
    nu, nv = u.size, v.size
    if nu == nv:
        d = u - v
        return float(np.mean(d * d))
    # Both quantile functions are piecewise constant; integrate on the merged
    # breakpoint grid.
    qs = np.union1d(np.arange(1, nu + 1) / nu, np.arange(1, nv + 1) / nv)
    widths = np.diff(np.concatenate([[0.0], qs]))
    mids = qs - 0.5 * widths
    qu = u[np.minimum((np.ceil(mids * nu) - 1).astype(int), nu - 1)]
    qv = v[np.minimum((np.ceil(mids * nv) - 1).astype(int), nv - 1)]
    return float(np.sum(widths * (qu - qv) ** 2))


def swd(a, b, n_proj: int = 128, rng: np.random.Generator | None = None) -> float:
    """Sliced Wasserstein distance: mean squared 1-D W2 over random directions."""
    A, B = _mat(a), _mat(b)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    if min(A.shape[0], B.shape[0]) < 2:
        raise ValueError("need at least two samples per set")
    if rng is None:
        rng = np.random.default_rng()
    d = A.shape[1]
    dirs = rng.standard_normal((n_proj, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    total = 0.0
    for u in dirs:
        total += _wasserstein2_1d(A @ u, B @ u)
    return total / n_proj


# --- Frechet distance ------------------------------------------------------


def _psd_sqrt_eigvals(mat: np.ndarray, what: str) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    vals = np.linalg.eigvalsh(sym)
    floor = -1e-6 * max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < floor:
        raise ValueError(f"{what} is not PSD (min eigenvalue {vals.min():.3e})")
    return np.sqrt(np.clip(vals, 0.0, None))


def _psd_sqrt(mat: np.ndarray, what: str) -> np.ndarray:
    sym = 0.5 * (mat + mat.T)
    vals, vecs = np.linalg.eigh(sym)
    floor = -1e-6 * max(1.0, float(np.max(np.abs(vals))))
    if vals.min() < floor:
        raise ValueError(f"{what} is not PSD (min eigenvalue {vals.min():.3e})")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    """Frechet distance between two Gaussians given their moments.

    ||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}), with the
    cross term evaluated through the symmetrized product
    sqrt(cov_a) cov_b sqrt(cov_a).  Small negative eigenvalues of that
    product are clipped at zero; magnitudes above 1e-6 trigger a warning.
    """
    mu_a = np.asarray(mu_a, dtype=np.float64).reshape(-1)
    mu_b = np.asarray(mu_b, dtype=np.float64).reshape(-1)
    cov_a = np.atleast_2d(np.asarray(cov_a, dtype=np.float64))
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=np.float64))
    root_a = _psd_sqrt(cov_a, "first covariance")
    _psd_sqrt_eigvals(cov_b, "second covariance")
    prod = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh(0.5 * (prod + prod.T))
    if vals.min() < -1e-6:
        warnings.warn(
            f"clipping negative eigenvalue {vals.min():.3e} in Frechet cross term",
            RuntimeWarning,
        )
    cross = float(np.sum(np.sqrt(np.clip(vals, 0.0, None))))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)
    return max(value, 0.0)


def frechet_distance(a_feats, b_feats) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    A, B = _mat(a_feats), _mat(b_feats)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"feature width mismatch {A.shape[1]} vs {B.shape[1]}")
    d = A.shape[1]
    if min(A.shape[0], B.shape[0]) <= d:
        warnings.warn(
            f"fewer samples than feature width {d}; covariance estimate is rank-deficient",
            RuntimeWarning,
        )
    return frechet_from_moments(
        A.mean(axis=0), np.cov(A, rowvar=False), B.mean(axis=0), np.cov(B, rowvar=False)
    )


# --- inception-style score -------------------------------------------------


def is_score(feats, extractor: "FeatureExtractor") -> float:
    """exp of the mean KL between per-sample class posteriors and their marginal."""
    probs = extractor.posterior_from_features(_mat(feats))
    return _is_from_posteriors(probs)


def _is_from_posteriors(probs: np.ndarray) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("class posteriors must form a probability simplex")
    probs = np.clip(probs, 0.0, None)
    marginal = probs.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(probs > 0.0, np.log(probs) - np.log(marginal), 0.0)
    kl = np.sum(probs * logs, axis=1)
    return float(np.exp(np.mean(kl)))


# --- k-NN manifold metrics -------------------------------------------------


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    sq = np.clip(aa + bb - 2.0 * (a @ b.T), 0.0, None)
    return np.sqrt(sq)


def _knn_radii(x: np.ndarray, k: int) -> np.ndarray:
    """Distance to the k-th nearest neighbor within x, self excluded."""
    d = _pairwise_dist(x, x)
    return np.sort(d, axis=1)[:, k]


def precision_recall(real_feats, gen_feats, k: int = 3) -> tuple:
    """k-NN manifold precision and recall.

    A point counts as covered when it lies within the k-th-neighbor radius of
    some point of the other set (closed balls, so identical sets always score
    1).  precision covers generated-by-real, recall real-by-generated.
    """
    real, gen = _mat(real_feats), _mat(gen_feats)
    _check_knn_args(real, gen, k)
    d = _pairwise_dist(real, gen)
    real_r = _knn_radii(real, k)
    gen_r = _knn_radii(gen, k)
    precision = float(np.mean(np.any(d <= real_r[:, None], axis=0)))
    recall = float(np.mean(np.any(d <= gen_r[None, :], axis=1)))
    return precision, recall


def density_coverage(real_feats, gen_feats, k: int = 5) -> tuple:
    """k-NN density (ball-membership count / k) and coverage (real balls hit)."""
    real, gen = _mat(real_feats), _mat(gen_feats)
    _check_knn_args(real, gen, k)
    d = _pairwise_dist(real, gen)
    real_r = _knn_radii(real, k)
    density = float(np.sum(d <= real_r[:, None]) / (k * gen.shape[0]))
    coverage = float(np.mean(np.min(d, axis=1) <= real_r))
    return density, coverage


def _check_knn_args(real, gen, k):
    if real.shape[1] != gen.shape[1]:
        raise ValueError(f"feature width mismatch {real.shape[1]} vs {gen.shape[1]}")
    if k < 1 or k >= real.shape[0] or k >= gen.shape[0]:
        raise ValueError(f"k={k} must satisfy 1 <= k < n for both sets")


# --- diversity -------------------------------------------------------------


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 2.0) -> float:
    """Structural similarity with full-image statistics and standard constants."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 2:
        raise ValueError("ssim needs two equal-size images with at least two pixels")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a = a.var(ddof=1)
    var_b = b.var(ddof=1)
    cov = float(np.sum((a - mu_a) * (b - mu_b)) / (a.size - 1))
    return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )


def diversity(gen: SampleSet, n_pairs: int = 500, rng: np.random.Generator | None = None) -> float:
    """Intra-set diversity over random sample pairs.

    Image-shaped data: mean 1 - SSIM.  Plain vectors: mean pairwise Euclidean
    distance.  Both are exactly 0 on a set of identical samples, which is the
    collapse signal this metric exists to detect.
    """
    if gen.n < 2:
        raise ValueError("diversity needs at least two samples")
    if rng is None:
        rng = np.random.default_rng()
    i = rng.integers(0, gen.n, size=n_pairs)
    j = rng.integers(0, gen.n - 1, size=n_pairs)
    j = np.where(j >= i, j + 1, j)  # distinct partner
    if gen.image_shape is not None:
        return float(np.mean([1.0 - ssim(gen.data[a], gen.data[b]) for a, b in zip(i, j)]))
    return float(np.mean(np.linalg.norm(gen.data[i] - gen.data[j], axis=1)))


# --- feature extractor -----------------------------------------------------


@dataclass
class FeatureExtractor:
    """Dense classifier whose penultimate activations serve as features."""

    weights: list = field(repr=False)
    biases: list = field(repr=False)
    feat_width: int = 32
    n_classes: int = 2
    train_accuracy: float = 0.0

    def _trunk(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=np.float64)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = silu(a @ w.T + b)
        return a

    def features(self, X) -> np.ndarray:
        """Deterministic penultimate-layer activations, shape (n, feat_width)."""
        return self._trunk(_mat(X))

    def posterior_from_features(self, feats: np.ndarray) -> np.ndarray:
        logits = feats @ self.weights[-1].T + self.biases[-1]
        return _softmax(logits)

    def posterior(self, X) -> np.ndarray:
        return self.posterior_from_features(self.features(X))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_feature_extractor(
    samples,
    labels,
    feat_width: int = 32,
    hidden: tuple = (64,),
    epochs: int = 120,
    batch_size: int = 128,
    lr: float = 3e-3,
    weight_decay: float = 1e-4,
    min_accuracy: float = 0.90,
    rng: np.random.Generator | None = None,
) -> FeatureExtractor:
    """Train the classifier backing all feature-based metrics.

    Cross-entropy on mini-batches with the same adaptive-moment update used
    for the predictor.  Raises ExtractorAccuracyError if the final training
    accuracy falls below min_accuracy, because feature-space metrics computed
    from a weak extractor are meaningless.
    """
    X = _mat(samples)
    y = np.asarray(labels).astype(int).reshape(-1)
    if y.size != X.shape[0]:
        raise ValueError("labels must match samples")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes")
    n_classes = int(classes.max()) + 1
    if rng is None:
        rng = np.random.default_rng()

    sizes = [X.shape[1], *hidden, feat_width, n_classes]
    weights = [
        rng.standard_normal((o, i)) * math.sqrt(2.0 / i) for i, o in zip(sizes[:-1], sizes[1:])
    ]
    biases = [np.zeros(o) for o in sizes[1:]]
    ext = FeatureExtractor(
        weights=weights, biases=biases, feat_width=feat_width, n_classes=n_classes
    )

    params = []
    for w, b in zip(weights, biases):
        params.extend((w, b))
    state = OptimizerState(lr=lr, weight_decay=weight_decay, clip_norm=1.0)
    state.m = [np.zeros_like(p) for p in params]
    state.v = [np.zeros_like(p) for p in params]

    n = X.shape[0]
    onehot = np.eye(n_classes)[y]
    batches = max(1, n // batch_size)
    for _ in range(epochs):
        order = rng.permutation(n)
        for b in range(batches):
            idx = order[b * batch_size : (b + 1) * batch_size]
            grads = _classifier_grads(weights, biases, X[idx], onehot[idx])
            _adam_step(params, grads, state)
    acc = float(np.mean(ext.posterior(X).argmax(axis=1) == y))
    ext.train_accuracy = acc
    if acc < min_accuracy:
        raise ExtractorAccuracyError(
            f"extractor training accuracy {acc:.3f} below required {min_accuracy:.2f}"
        )
    return ext


def _classifier_grads(weights, biases, X, Y):
    acts = [X]
    pre = []
    a = X
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        z = a @ w.T + b
        pre.append(z)
        a = z if l == last else silu(z)
        acts.append(a)
    probs = _softmax(acts[-1])
    dz = (probs - Y) / X.shape[0]
    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    for l in range(last, -1, -1):
        grad_w[l] = dz.T @ acts[l]
        grad_b[l] = dz.sum(axis=0)
        if l > 0:
            dz = (dz @ weights[l]) * silu_grad(pre[l - 1])
    grads = []
    for gw, gb in zip(grad_w, grad_b):
        grads.extend((gw, gb))
    return grads


def _adam_step(params, grads, state: OptimizerState):
    if state.clip_norm is not None:
        clip_gradients(grads, state.clip_norm)
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError("non-finite classifier gradient")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        p -= state.lr * (
            (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + state.eps)
            + state.weight_decay * p
        )


# --- report ----------------------------------------------------------------


@dataclass
class MetricsReport:
    """One evaluation row at a given function-evaluation budget."""

    nfe: int
    sampler: str
    swd: float
    afid: float
    is_score: float
    precision: float
    recall: float
    density: float
    coverage: float
    diversity: float

    def to_row(self) -> list:
        return [
            str(self.nfe),
            self.sampler,
            *(
                f"{v:.6g}"
                for v in (
                    self.swd,
                    self.afid,
                    self.is_score,
                    self.precision,
                    self.recall,
                    self.density,
                    self.coverage,
                    self.diversity,
                )
            ),
        ]


def compute_report(
    real: SampleSet,
    gen: SampleSet,
    extractor: FeatureExtractor,
    nfe: int,
    sampler: str,
    rng: np.random.Generator | None = None,
    n_proj: int = 128,
    k_pr: int = 3,
    k_dc: int = 5,
    n_pairs: int = 500,
) -> MetricsReport:
    """Evaluate one generated set against the real set across all metrics."""
    if rng is None:
        rng = np.random.default_rng()
    real_feats = extractor.features(real)
    gen_feats = extractor.features(gen)
    p, r = precision_recall(real_feats, gen_feats, k=k_pr)
    d, c = density_coverage(real_feats, gen_feats, k=k_dc)
    return MetricsReport(
        nfe=nfe,
        sampler=sampler,
        swd=swd(real, gen, n_proj=n_proj, rng=rng),
        afid=frechet_distance(real_feats, gen_feats),
        is_score=is_score(gen_feats, extractor),
        precision=p,
        recall=r,
        density=d,
        coverage=c,
        diversity=diversity(gen, n_pairs=n_pairs, rng=rng),
    )
