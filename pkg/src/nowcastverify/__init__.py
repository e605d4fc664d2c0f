"""Verification toolkit for ensemble precipitation nowcasts.

Submodules
----------
grid            radar fields, sequences, examples, crops
io              radar-stack / ensemble file formats and dataset manifests
sampler         importance-subsampled dataset construction
verify_point    weighted MSE, correlation, and critical success index
verify_ensemble fair CRPS, reliability diagrams, rank histograms
verify_pooled   neighborhood (FSS, pooled CRPS) scores
spectral        radially averaged power spectral density
stats           paired permutation test, exact binomial intervals, weekly units
losses          training-objective terms as pure functions
baselines       persistence forecasts, noise ensembles, synthetic events
evaluate        dataset-level scoring engine with mergeable accumulators
cli             command-line entry points
"""

__version__ = "0.1.0"

from .grid import (  # noqa: F401
    DEFAULT_CONTEXT_FRAMES,
    DEFAULT_FRAME_SECONDS,
    DEFAULT_SCORING_WINDOW,
    DEFAULT_TARGET_FRAMES,
    MISSING_VALUE,
    RATE_CAP,
    RATE_STEP,
    EnsembleForecast,
    Example,
    RadarField,
    RadarSequence,
    central_window,
    extract_crop,
    ingest_frame,
)
