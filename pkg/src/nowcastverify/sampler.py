"""Importance-subsampled dataset construction.

Dense radar archives are dominated by empty frames.  Instead of keeping
every crop, each candidate crop is kept with a probability that grows with
its (saturated) rain content:

    q = min(1, q_min + multiplier * mean(1 - exp(-x / saturation)))

where the mean runs over every cell of the candidate window, masked cells
contributing 0.  Statistics of the full population are then recovered by
weighting each kept example by 1/q, which is what
:func:`weighted_estimate` does and what the verification modules consume
through ``Example.inclusion_probability``.

Candidate enumeration is deterministic: sequences in input order, start
frames every ``temporal_offset`` seconds, rows then columns at
``spatial_offset`` strides.  Each candidate's accept/reject draw (and, in
training mode, its random sub-offset) comes from a counter-based generator
keyed by (seed, sequence index, t0, y0, x0), so results do not depend on
scan order or sharding.

Training mode adds a uniform random offset in [0, 32) to both spatial
coordinates of each accepted crop and divides the recorded inclusion
probability by 32^2, accounting for the larger population of unit-offset
crops each candidate then stands for.  Candidates whose offset crop could
leave the frame are not enumerated.  Evaluation mode keeps the aligned crop
and the unmodified probability.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from ._rng import keyed_generator
from .errors import ConfigError, EmptyDataError, InvalidWeightError
from .grid import Example, RadarSequence, extract_crop

#: Training-mode random offsets are drawn from [0, RANDOM_OFFSET_RANGE) per axis.
RANDOM_OFFSET_RANGE = 32


@dataclass(frozen=True)
class SamplingParams:
    """Geometry and acceptance parameters for dataset construction.

    ``frames`` is the temporal length of the candidate window the
    acceptance probability integrates over; built examples may use fewer
    frames (context + targets) than the window contains.
    """

    saturation: float
    multiplier: float
    q_min: float
    spatial_offset: int
    random_offset: bool
    temporal_offset: int
    frames: int
    height: int
    width: int

    def __post_init__(self):
        if self.saturation <= 0.0:
            raise ValueError("saturation must be positive")
        if self.multiplier < 0.0:
            raise ValueError("multiplier must be nonnegative")
        if not (0.0 < self.q_min <= 1.0):
            raise ValueError("q_min must lie in (0, 1]")
        if self.spatial_offset < 1 or self.temporal_offset < 1:
            raise ValueError("offsets must be positive")
        if self.frames < 2 or self.height < 1 or self.width < 1:
            raise ValueError("window must span at least 2 frames and 1 cell")


#: Sampling configurations for the standard dataset splits.
PRESETS: dict[str, SamplingParams] = {
    "uk-train": SamplingParams(1.0, 0.1, 2e-4, 32, True, 300, 24, 256, 256),
    "uk-valid": SamplingParams(1.0, 2.2, 5e-3, 256, False, 1200, 24, 256, 256),
    "uk-test": SamplingParams(10.0, 1.0, 2e-5, 64, False, 1200, 24, 512, 512),
    "us-train": SamplingParams(1.0, 0.1, 2e-4, 32, True, 360, 20, 256, 256),
    "us-valid": SamplingParams(1.0, 0.2, 5e-3, 256, False, 1440, 20, 256, 256),
    "us-test": SamplingParams(30.0, 0.2, 2.5e-4, 64, False, 1440, 20, 512, 512),
}

#: Rain-rate bin edges (mm/hr) for distribution summaries: the bins are
#: {exactly edge0}, (edge0, edge1], ..., (last edge, inf).
DEFAULT_RATE_EDGES = (0.0, 0.1, 1.0, 4.0, 5.0, 8.0, 10.0)


@dataclass(frozen=True)
class WeightedExample:
    """An accepted example together with its inclusion probability."""

    example: Example
    inclusion_probability: float
    source_index: int = 0

    def __post_init__(self):
        if not (0.0 < self.inclusion_probability <= 1.0):
            raise ValueError("inclusion probability must lie in (0, 1]")


def saturate(x, saturation: float):
    """Soft-saturating transform 1 - exp(-x / saturation), elementwise."""
    if saturation <= 0.0:
        raise ValueError("saturation must be positive")
    return 1.0 - np.exp(-np.asarray(x, dtype=np.float64) / saturation)


def _window_acceptance(values: np.ndarray, masks: np.ndarray, p: SamplingParams) -> float:
    """Acceptance probability for one (T, h, w) window of values and masks."""
    x = np.where(masks, values, 0.0)
    total = float(np.sum(saturate(x, p.saturation)))
    q = p.q_min + p.multiplier * total / x.size
    return min(1.0, q)


def acceptance_probability(example: Example, p: SamplingParams) -> float:
    """Probability with which the scheme would keep ``example``.

    The example's geometry (frame count and grid shape) must match the
    candidate window geometry in ``p``.
    """
    h, w = example.grid_shape
    frames = example.n_context + example.n_targets
    if (frames, h, w) != (p.frames, p.height, p.width):
        raise ConfigError(
            f"example geometry {(frames, h, w)} does not match "
            f"sampling window {(p.frames, p.height, p.width)}")
    values = np.concatenate([example.context_values, example.target_values])
    masks = np.concatenate([example.context_masks, example.target_masks])
    return _window_acceptance(values, masks, p)


def build_subsampled_dataset(
    sources: list[RadarSequence],
    p: SamplingParams,
    mode: str,
    seed: int,
    n_context: int,
    n_targets: int,
) -> list[WeightedExample]:
    """Scan sequences and keep an importance sample of crops.

    Parameters
    ----------
    sources : list of RadarSequence
        Input archives; their order defines candidate identity, so pass a
        stable ordering for reproducible builds.
    mode : {"train", "eval"}
        Training mode randomizes crop offsets (see module docstring).
    n_context, n_targets : int
        Frame split of built examples; ``n_context + n_targets`` may be at
        most ``p.frames`` (the acceptance window may overhang the scored
        frames).

    Returns
    -------
    list of WeightedExample, in deterministic scan order.  Entirely masked
    examples are dropped after acceptance.  An empty list (with a warning)
    means no candidate fit or none was accepted; that is not an error.
    """
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    if n_context < 1 or n_targets < 1:
        raise ConfigError("need at least one context and one target frame")
    if n_context + n_targets > p.frames:
        raise ConfigError(
            f"context+target frames {n_context + n_targets} exceed window frames {p.frames}")
    randomize = p.random_offset and mode == "train"
    margin = RANDOM_OFFSET_RANGE - 1 if randomize else 0

    kept: list[WeightedExample] = []
    any_candidates = False
    for si, seq in enumerate(sources):
        if p.temporal_offset % seq.interval:
            raise ConfigError(
                f"temporal offset {p.temporal_offset}s is not a multiple of the "
                f"frame interval {seq.interval}s of source {si}")
        t_step = p.temporal_offset // seq.interval
        big_h, big_w = seq.grid_shape
        t_starts = range(0, len(seq) - p.frames + 1, t_step)
        y_starts = range(0, big_h - p.height - margin + 1, p.spatial_offset)
        x_starts = range(0, big_w - p.width - margin + 1, p.spatial_offset)
        for t0 in t_starts:
            window_values = seq.values[t0:t0 + p.frames]
            window_masks = seq.masks[t0:t0 + p.frames]
            for y0 in y_starts:
                for x0 in x_starts:
                    any_candidates = True
                    q = _window_acceptance(
                        np.ascontiguousarray(
                            window_values[:, y0:y0 + p.height, x0:x0 + p.width]),
                        window_masks[:, y0:y0 + p.height, x0:x0 + p.width],
                        p)
                    gen = keyed_generator(seed, si, t0, y0, x0)
                    if gen.random() >= q:
                        continue
                    if randomize:
                        dy, dx = gen.integers(0, RANDOM_OFFSET_RANGE, size=2)
                        y, x = y0 + int(dy), x0 + int(dx)
                        q_recorded = q / RANDOM_OFFSET_RANGE**2
                    else:
                        y, x = y0, x0
                        q_recorded = q
                    example = extract_crop(
                        seq, t0, y, x, n_context, n_targets, p.height, p.width,
                        inclusion_probability=q_recorded)
                    if not (example.context_masks.any() or example.target_masks.any()):
                        continue  # entirely masked examples carry no information
                    kept.append(WeightedExample(
                        example=example,
                        inclusion_probability=q_recorded,
                        source_index=si))
    if not any_candidates:
        warnings.warn("no candidate crop fits the requested geometry", stacklevel=2)
    return kept


def weighted_estimate(scores, inclusion_probabilities) -> float:
    """Unbiased population total: sum of per-example scores over their q.

    With each example kept independently with probability q and scored by
    S, the sum of S/q over kept examples estimates the sum of S over the
    full candidate population.
    """
    s = np.asarray(scores, dtype=np.float64)
    q = np.asarray(inclusion_probabilities, dtype=np.float64)
    if s.shape != q.shape:
        raise ValueError(f"scores shape {s.shape} != probabilities shape {q.shape}")
    if s.size and (q.min() <= 0.0 or q.max() > 1.0):
        raise InvalidWeightError("inclusion probabilities must lie in (0, 1]")
    return float(np.sum(s / q)) if s.size else 0.0


def rainfall_distribution(data, edges=DEFAULT_RATE_EDGES):
    """Percentages of valid cells falling in each rain-rate bin.

    Parameters
    ----------
    data : iterable
        Any mix of RadarField, RadarSequence, Example, and WeightedExample
        items; every valid cell of every frame is counted once, unweighted.
    edges : increasing sequence of floats
        Bin boundaries.  Bins are: exactly ``edges[0]``, then half-open
        intervals ``(edges[i], edges[i+1]]``, then ``> edges[-1]``.

    Returns
    -------
    labels : list of str
    percentages : ndarray summing to 100 over all bins
    """
    edges = tuple(float(e) for e in edges)
    if len(edges) < 1 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be strictly increasing")
    counts = np.zeros(len(edges) + 1, dtype=np.int64)
    for item in data:
        for values in _iter_valid_values(item):
            counts[0] += int(np.sum(values == edges[0]))
            inner = values[values > edges[0]]
            counts[1:] += np.bincount(
                np.searchsorted(edges[1:], inner, side="left"),
                minlength=len(edges))[:len(edges)]
    total = counts.sum()
    if total == 0:
        raise EmptyDataError("no valid cells to summarize")
    labels = [f"= {edges[0]:g}"]
    labels += [f"({a:g}, {b:g}]" for a, b in zip(edges, edges[1:])]
    labels.append(f"> {edges[-1]:g}")
    return labels, counts / total * 100.0


def _iter_valid_values(item):
    if isinstance(item, WeightedExample):
        item = item.example
    if isinstance(item, Example):
        for f in (*item.context, *item.targets):
            yield f.values[f.mask]
    elif isinstance(item, RadarSequence):
        for f in item.frames:
            yield f.values[f.mask]
    elif hasattr(item, "values") and hasattr(item, "mask"):
        yield item.values[item.mask]
    else:
        raise TypeError(f"cannot extract radar values from {type(item).__name__}")


def preset(name: str) -> SamplingParams:
    """Look up a named sampling configuration (see :data:`PRESETS`)."""
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; valid: {', '.join(sorted(PRESETS))}") from None


def with_overrides(p: SamplingParams, **overrides) -> SamplingParams:
    """A copy of ``p`` with the given fields replaced."""
    return replace(p, **overrides)
