"""Mixture slow feature analysis for multi-pattern health monitoring."""

from .embedding import (
    AugmentedMatrix,
    LagSelection,
    TimeSeriesFrame,
    augment,
    build_lagged,
    difference,
    select_lag,
)
from .fusion import (
    BipVector,
    HealthState,
    HealthStatus,
    MsfaModel,
    PatternModel,
    classify,
    fuse,
    monitor_stream,
    update_with_new_pattern,
)
from .limits import ControlLimits, fit_limits, local_probabilities, score
from .metrics import (
    DetectionSummary,
    EvaluationReport,
    build_report,
    far,
    fdd_fdr,
    segmentation_accuracy,
)
from .mixture import (
    EmConfig,
    GaussianComponent,
    MixtureModel,
    Responsibilities,
    assign,
    em_fit,
    log_likelihood,
    responsibilities,
)
from .model_io import (
    ModelChecksumError,
    ModelCorruptError,
    ModelFileError,
    ModelVersionError,
    load_model,
    models_equal,
    save_model,
)
from .pipeline import (
    DpcaModel,
    DpcaScores,
    TrainConfig,
    fit_msfa,
    score_dpca,
    split_frame,
    train,
    train_dpca,
)
from .sfa import PatternSfa, fit_pattern, fit_sfa, project, select_num_slow_features
from .simulator import (
    FaultSpec,
    HeatingPattern,
    LabeledDataset,
    ScheduleEntry,
    SimConfig,
    generate,
    reference_scenarios,
)

__version__ = "0.1.0"
