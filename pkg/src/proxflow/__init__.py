"""Proximal belief-refinement generative models.

A generator keeps a Gaussian belief over data space and sharpens it through a
sequence of proximal steps whose geometry is set by a divergence choice:
squared-W2 steps give straight-line particle transport, KL steps recover the
Bayesian flow network update.  The package covers training, the four sampling
procedures, an evaluation-metric stack, and file formats for checkpoints and
sample sets.
"""

from .belief import (
    BfnSchedule,
    GaussianBelief,
    Schedule,
    belief_sample,
    bfn_accuracy,
    bfn_alpha,
    cosine_schedule,
    prior_belief,
)
from .proximal import (
    Dirac,
    NoisyObservation,
    OracleFailureError,
    ProximalKind,
    UnsupportedStepSizeError,
    W2_SQUARED,
    kl_bayes,
    kl_update,
    oracle_minimize,
    w2_update,
)
from .predictor import (
    OptimizerState,
    PredictorNet,
    backward,
    backward_batch,
    forward,
    forward_batch,
    init_optimizer,
    init_predictor,
    optimizer_step,
    time_embed,
)
from .trainer import (
    REGIME_BFN,
    REGIME_GPFN,
    TrainConfig,
    TrainResult,
    TrainingDivergedError,
    make_training_instance_bfn,
    make_training_instance_gpfn,
    train,
)
from .samplers import (
    BFN_DET,
    BFN_STOCH,
    GPFN_DET,
    GPFN_STOCH,
    RegimeMismatchError,
    SamplerKind,
    TrainedModel,
    generate,
)
from .metrics import (
    FeatureExtractor,
    MetricsReport,
    SampleSet,
    compute_report,
    density_coverage,
    diversity,
    frechet_distance,
    is_score,
    precision_recall,
    swd,
    train_feature_extractor,
)
from .data_io import (
    Checkpoint,
    Dataset,
    ScalingRecord,
    gen_synthetic,
    read_checkpoint,
    read_idx,
    read_samples,
    write_checkpoint,
    write_sample_grid,
    write_samples,
)

__version__ = "0.1.0"
