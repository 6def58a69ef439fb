"""Long-horizon event sequence prediction: an autoregressive temporal point
process proposes continuations and a learned sequence energy reranks them."""

from .core import (
    Dataset,
    Event,
    EventSequence,
    HorizonRangeError,
    HorizonSplit,
    SequenceError,
    SequenceLengthError,
    perturb_ties,
    split_at_horizon,
    split_by_token_budget,
    split_dataset,
)
from .energy import EnergyFunction, FeatureConfig, energy, energy_grad, featurize
from .fitting import NumericalError, OptimizerConfig, fit_mle
from .inference import InferConfig, WeightedProposal, normalized_weights, predict
from .metrics import (
    CascadingReport,
    EvalReport,
    InsufficientDataError,
    OtdConfig,
    cascading_analysis,
    count_rmse,
    energy_histogram_export,
    evaluate,
    otd,
    otd_alignment,
    otd_sweep,
    paired_permutation_test,
)
from .models import (
    HawkesExpModel,
    IntensityModel,
    OrderingError,
    PoissonModel,
    intensity_at,
    log_likelihood,
    log_likelihood_grad,
    thinning_upper_bound,
)
from .nce import (
    ContrastiveBatch,
    TrainConfig,
    binary_nce_loss,
    distance_margin_reg,
    make_batch,
    multi_nce_loss,
    train_energy,
)
from .rng import RngStream
from .synth import SynthSpec, SynthSpecError, generate
from .thinning import ThinningError, draw_noise, thinning_sample

__version__ = "0.1.0"
