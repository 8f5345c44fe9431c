"""Quantum vortex detection: statevector emulation of sliding-window
spectral detection circuits for 2D vorticity fields, with dataset
generation, parameter training, and density-spectrum classification."""

from .qstate import (
    PermutationSpec,
    ProjectionEmptyError,
    Register,
    RegisterLayout,
    StateVector,
    apply_permutation,
    apply_qft,
    apply_shift,
    encode_flow,
    project_low,
    project_rank1,
    sample,
)
from .flowgen import (
    DatasetSpec,
    FlowField,
    NoiseConfig,
    ParamRanges,
    PlacementError,
    VortexParams,
    curl2d,
    eval_lamb_oseen,
    generate_dataset,
    synthesize_velocity,
)
from .seqqvd import (
    ContourTemplate,
    Detection,
    DetectionParams,
    DetectionReport,
    InfeasibleContourError,
    PowerSpectrum,
    dedup,
    detect_field,
    detect_window,
    power_spectrum,
    window_positions,
)
from .parqvd import (
    DensitySpectrum,
    EmpiricalDistribution,
    ParallelConfig,
    density_spectrum,
    full_circuit_density_spectrum,
    representative_distribution,
    sample_empirical,
)
from .trainer import LossHistory, SearchSpace, accuracy, bayes_opt, grid_search, mse_loss
from .classifier import (
    ClassMetrics,
    ForestConfig,
    ForestModel,
    LabeledSample,
    evaluate_cv,
    predict_proba,
    shots_sweep,
    train_forest,
)

__version__ = "0.1.0"
