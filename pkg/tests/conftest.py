"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from nowcastverify.grid import Example, RadarField, RadarSequence, ingest_frame


def field_from(values) -> RadarField:
    """Canonical field from raw values (negatives become missing cells)."""
    return ingest_frame(np.asarray(values, dtype=float))


def constant_field(h: int, w: int, value: float = 0.0) -> RadarField:
    return field_from(np.full((h, w), value))


def sequence_from(stacks, start: int = 1_600_000_000, interval: int = 300) -> RadarSequence:
    """Sequence from a (T, H, W) array of raw values."""
    stacks = np.asarray(stacks, dtype=float)
    frames = tuple(field_from(frame) for frame in stacks)
    ts = start + interval * np.arange(len(frames), dtype=np.int64)
    return RadarSequence(frames=frames, timestamps=ts, interval=interval)


def example_from(context, targets, q: float = 1.0) -> Example:
    """Example from raw (M, h, w) and (N, h, w) arrays."""
    return Example(
        context=tuple(field_from(f) for f in np.asarray(context, dtype=float)),
        targets=tuple(field_from(f) for f in np.asarray(targets, dtype=float)),
        inclusion_probability=q,
    )


def random_rain(rng: np.random.Generator, shape, scale: float = 2.0) -> np.ndarray:
    """Nonnegative raw rain rates with a realistic mix of zeros and bursts."""
    base = rng.gamma(0.6, scale, size=shape)
    base[rng.random(shape) < 0.4] = 0.0
    return base
