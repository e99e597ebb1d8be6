"""Window decomposition for local next-step prediction on grid PDE data.

The pipeline expands a batched grid with zero padding, decomposes it into
equal windows, runs a window-to-center predictor over every decomposition
offset, and integrates the predicted centers back into a full field in which
each cell was predicted from exactly its local neighborhood.  Companion
modules supply PDE data generators, window-size selection rules, stencil
predictors, and evaluation metrics.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateSignal,
    DegenerateTruth,
    DivisibilityError,
    DomainError,
    FormatError,
    PredictorContractError,
    ProbeDomainTooSmall,
    RankError,
    ShapeMismatchError,
    SingularSystem,
    SliceBoundsError,
    StabilityError,
    UnsupportedBoundary,
    WindecError,
    WindowTooLarge,
    WindowTooSmall,
)
from .tensor import BatchTensor, Shape, impulse, pad_zeros, slice_region, split, stack
from .windowing import (
    CallCounter,
    ExpansionRecord,
    WindowSpec,
    chunk_domain,
    expand_domain,
    integrate_predictions,
    receptive_field_probe,
    window_offsets,
    window_patch,
)
from .generators import (
    BOUNDARIES,
    Dataset,
    GridPde,
    InitialCondition,
    advect_exact,
    burgers_step,
    gaussian_bump_field,
    generate_dataset,
    harmonic_field,
    heat_step,
    read_dataset,
    sample_bumps,
    sin_field,
    write_dataset,
)
from .sizing import (
    SizingReport,
    bandwidth_estimate,
    char_length,
    courant,
    min_window_for_bandwidth,
    recommend_window,
)
from .models import (
    DiffusionStencil,
    GlobalLinearModel,
    IdentityPredictor,
    LearnedStencil,
    MetricsRecord,
    Predictor,
    UpwindStencil,
    fit_global_linear,
    fit_stencil,
    metrics_record,
    paper_l2,
    r2,
    read_stencil,
    rel_l2,
    sample_training_pairs,
    write_stencil,
)
from .config import DatasetConfig, ExperimentConfig, IcConfig, PredictorConfig, load_config
