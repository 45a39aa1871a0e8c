"""Neuron-level training dynamics of two-layer ReLU classifiers."""

from ._racedyn import (
    AlignmentScore,
    Dataset,
    Error,
    ExperimentConfig,
    GrowthFit,
    MergeReport,
    NetworkParams,
    NeuronDiagnostics,
    Plateau,
    PruneReport,
    RaceSpec,
    RaceTrajectory,
    RunManifest,
    Snapshot,
    SweepResult,
    TrainConfig,
    TrainingTrace,
    ValidationError,
    __version__,
    alignment_score,
    build_dataset,
    count_drop_events,
    detect_plateau,
    diagnostics,
    early_prediction_correlation,
    fit_exponential_growth,
    init_params,
    integrate_race,
    load_csv_dataset,
    loss,
    merge_aligned_neurons,
    prune_by_norm,
    run_experiment,
    similarity_matrix,
    standardize,
    sweep_init_scale,
    train,
    xor_like_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
