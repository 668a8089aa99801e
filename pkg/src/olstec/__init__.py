"""Streaming low-rank subspace tracking over partially observed slices."""

from .core import (
    CpFactors,
    Dims,
    SliceObservation,
    entry_product_g,
    masked_frobenius_sq,
    reconstruct_slice,
)
from .exceptions import (
    ConfigError,
    FormatError,
    OlstecError,
    ShapeError,
    SingularGramError,
)
from .experiments import (
    BenchSpec,
    FileSource,
    RunSpec,
    SynthSource,
    run_bench,
    run_experiment,
)
from .metrics import MetricsRecord, RunningAverage, normalized_residual
from .sgd import SgdConfig, SgdTracker
from .synth import SynthConfig, generate_stream, rotation_matrix, rotation_plane
from .tracker import (
    OlstecTracker,
    StepOutput,
    TrackerConfig,
    TrackerState,
    initial_state,
    solve_weights,
)

__version__ = "0.1.0"

__all__ = [
    "BenchSpec",
    "ConfigError",
    "CpFactors",
    "Dims",
    "FileSource",
    "FormatError",
    "MetricsRecord",
    "OlstecError",
    "OlstecTracker",
    "RunSpec",
    "RunningAverage",
    "SgdConfig",
    "SgdTracker",
    "ShapeError",
    "SingularGramError",
    "SliceObservation",
    "StepOutput",
    "SynthConfig",
    "SynthSource",
    "TrackerConfig",
    "TrackerState",
    "entry_product_g",
    "generate_stream",
    "initial_state",
    "masked_frobenius_sq",
    "normalized_residual",
    "reconstruct_slice",
    "rotation_matrix",
    "rotation_plane",
    "run_bench",
    "run_experiment",
    "solve_weights",
    "__version__",
]
