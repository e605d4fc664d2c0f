"""Neighborhood-pooled verification at multiple spatial scales.

Scores here aggregate over K x K windows of the target grid rather than
single cells.  Windows are placed on a regular grid with stride
ceil(K / 4) (so adjacent windows overlap for K > 4), restricted to the
example's central scoring region, and a window is excluded outright --
weight zero -- whenever any of its cells is invalid in the supplied mask.
Valid windows inherit the example weight 1/q from importance sampling.

Two families are provided:

* Fractions skill: compare the ensemble-mean fraction of cells at or
  above a rate threshold inside each window against the observed
  fraction, scored as one minus the ratio of the weighted squared-error
  sum to its weighted worst-case sum.  Both sums use plug-in (biased)
  fraction estimates.  The score lies in [0, 1], 1 being best.

* Pooled CRPS: reduce each window to one value per ensemble member and
  for the observation -- window mean ("average") or window maximum
  ("maximum") -- and score the pooled values with the fair CRPS,
  weighted per window.  K = 1 reduces exactly to the unpooled score.

Window sums are computed from a summed-area table, which is exact for
quantized rates (all partial sums are representable in double
precision), so K = 1 results are bit-identical to their cell-level
counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, UndefinedScoreError
from .grid import DEFAULT_SCORING_WINDOW, central_window
from .verify_ensemble import CrpsAccumulator, crps_accumulate

POOLINGS = ("average", "maximum")


def neighborhood_stride(size: int) -> int:
    """Spacing between window origins: a quarter of the side, rounded up."""
    return -(-int(size) // 4)


def _check_window_geometry(shape, size):
    if size < 1:
        raise ConfigError(f"window size must be >= 1, got {size}")
    if size > shape[-2] or size > shape[-1]:
        raise ConfigError(
            f"window size {size} exceeds grid {shape[-2]}x{shape[-1]}")


def _window_sums(a, size):
    """Sum of every K x K window over the last two axes.

    Summed-area table with a zero border; exact when all partial sums are
    exactly representable (true for quantized rates and 0/1 indicators).
    Size 1 bypasses the table so unit windows are the identity for any
    input, not just quantized ones.
    """
    if size == 1:
        return np.asarray(a, dtype=np.float64)
    c = np.cumsum(np.cumsum(np.asarray(a, dtype=np.float64), axis=-2), axis=-1)
    pad = [(0, 0)] * (c.ndim - 2) + [(1, 0), (1, 0)]
    s = np.pad(c, pad)
    k = size
    return (s[..., k:, k:] - s[..., :-k, k:]
            - s[..., k:, :-k] + s[..., :-k, :-k])


def _window_max(a, size):
    return sliding_window_view(a, (size, size), axis=(-2, -1)).max(axis=(-2, -1))


def _strided(a, size):
    step = neighborhood_stride(size)
    return a[..., ::step, ::step]


@dataclass(frozen=True)
class Neighborhood:
    """One pooling window: lead index, top-left cell, side length, weight."""

    lead: int
    row: int
    col: int
    size: int
    weight: float


def enumerate_neighborhoods(example, size,
                            window_side=DEFAULT_SCORING_WINDOW):
    """All scored windows of an example's target frames.

    Windows are laid out at stride ceil(size/4) inside the central
    ``window_side`` square of the target grid; ``row``/``col`` are
    absolute target-grid indices.  A window overlapping any invalid cell
    gets weight 0, otherwise 1/q of the example.
    """
    first = example.targets[0]
    rs, cs = central_window(first.values.shape, window_side)
    if size > window_side:
        raise ConfigError(
            f"window size {size} exceeds scoring window {window_side}")
    _check_window_geometry((window_side, window_side), size)
    step = neighborhood_stride(size)
    out = []
    for lead, frame in enumerate(example.targets):
        sub = frame.mask[rs, cs]
        counts = _window_sums(sub.astype(np.float64), size)
        full = counts == float(size * size)
        for i in range(0, window_side - size + 1, step):
            for j in range(0, window_side - size + 1, step):
                w = 1.0 / example.inclusion_probability if full[i, j] else 0.0
                out.append(Neighborhood(lead=lead, row=rs.start + i,
                                        col=cs.start + j, size=size, weight=w))
    return out


@dataclass
class FssAccumulator:
    """Mergeable weighted sums for the fractions skill score."""

    fbs_sum: float = 0.0
    fbs_worst_sum: float = 0.0
    weight: float = 0.0

    def __add__(self, other: "FssAccumulator") -> "FssAccumulator":
        return FssAccumulator(self.fbs_sum + other.fbs_sum,
                              self.fbs_worst_sum + other.fbs_worst_sum,
                              self.weight + other.weight)

    @property
    def fss(self) -> float:
        if self.fbs_worst_sum == 0.0:
            raise UndefinedScoreError(
                "fractions skill undefined: no events in forecast or observation")
        return 1.0 - self.fbs_sum / self.fbs_worst_sum


def fss_accumulate(members, obs, threshold, size, mask=None,
                   inclusion_probability=1.0) -> FssAccumulator:
    """Weighted fractions-skill sums for one field at one scale.

    Parameters
    ----------
    members : array, shape (S, h, w)
        Ensemble forecast rates for one lead time.
    obs : array, shape (h, w)
        Observed rates.
    threshold : float
        Event is rate >= threshold; must be positive.
    size : int
        Window side length K.
    mask : bool array (h, w), optional
        Valid cells; windows touching an invalid cell are excluded.
    inclusion_probability : float
        Example sampling probability q; valid windows weigh 1/q.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    x = np.asarray(members, dtype=np.float64)
    y = np.asarray(obs, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != y.shape:
        raise ValueError(
            f"members shape {x.shape} must be (S,) + obs shape {y.shape}")
    _check_window_geometry(y.shape, size)
    area = float(size * size)
    p_fcst = _window_sums((x >= threshold).mean(axis=0), size) / area
    p_obs = _window_sums((y >= threshold).astype(np.float64), size) / area
    w = _weights_grid(y.shape, size, mask, inclusion_probability)
    p_fcst, p_obs, w = (_strided(a, size) for a in (p_fcst, p_obs, w))
    fbs = (p_fcst - p_obs) ** 2
    worst = p_fcst ** 2 + p_obs ** 2
    return FssAccumulator(fbs_sum=float((w * fbs).sum()),
                          fbs_worst_sum=float((w * worst).sum()),
                          weight=float(w.sum()))


def _weights_grid(shape, size, mask, inclusion_probability):
    q = float(inclusion_probability)
    if not 0.0 < q <= 1.0:
        raise ValueError(f"inclusion probability must be in (0, 1], got {q}")
    out_shape = (shape[0] - size + 1, shape[1] - size + 1)
    if mask is None:
        return np.full(out_shape, 1.0 / q)
    m = np.asarray(mask)
    if m.shape != tuple(shape):
        raise ValueError(f"mask shape {m.shape} != grid shape {tuple(shape)}")
    counts = _window_sums(m.astype(np.float64), size)
    return np.where(counts == float(size * size), 1.0 / q, 0.0)


def fss(members, obs, threshold, size, mask=None,
        inclusion_probability=1.0) -> float:
    """Fractions skill score in [0, 1] for one field; 1 is best."""
    return fss_accumulate(members, obs, threshold, size, mask,
                          inclusion_probability).fss


def pooled_crps_accumulate(members, obs, size, pooling="average", mask=None,
                           inclusion_probability=1.0,
                           estimator="fair") -> CrpsAccumulator:
    """Weighted fair-CRPS sums over pooled K x K windows of one field."""
    if pooling not in POOLINGS:
        raise ValueError(f"pooling must be one of {POOLINGS}, got {pooling!r}")
    x = np.asarray(members, dtype=np.float64)
    y = np.asarray(obs, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != y.shape:
        raise ValueError(
            f"members shape {x.shape} must be (S,) + obs shape {y.shape}")
    _check_window_geometry(y.shape, size)
    if pooling == "average":
        area = float(size * size)
        px = _window_sums(x, size) / area
        py = _window_sums(y, size) / area
    else:
        px = _window_max(x, size)
        py = _window_max(y, size)
    w = _weights_grid(y.shape, size, mask, inclusion_probability)
    px, py, w = _strided(px, size), _strided(py, size), _strided(w, size)
    return crps_accumulate(px, py, w, estimator=estimator)


def pooled_crps(members, obs, size, pooling="average", mask=None,
                inclusion_probability=1.0, estimator="fair") -> float:
    """Weighted mean CRPS of window-pooled values; K=1 is the unpooled score."""
    return pooled_crps_accumulate(members, obs, size, pooling, mask,
                                  inclusion_probability, estimator).mean
