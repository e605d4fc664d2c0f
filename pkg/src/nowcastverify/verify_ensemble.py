"""Probabilistic verification of ensemble forecasts.

CRPS
----
For an ensemble x_1..x_S and observation y, the unbiased ("fair") estimator

    CRPS = (1/S) sum_i |x_i - y|  -  (1/(2 S (S-1))) sum_{i != j} |x_i - x_j|

is computed here in O(S log S) per cell from the sorted members: the member
spread term equals sum_k k (S - k) g_k / (S (S-1)) over the S-1 sorted-value
gaps g_k, since the gap between order statistics k and k+1 is crossed by
exactly k (S - k) member pairs.  The gap form is exactly zero for an
ensemble of identical members and never negative.  The plug-in estimator of
the empirical-CDF CRPS divides the spread by S^2 instead and is available
via ``estimator="plugin"``.

Reliability
-----------
Forecast probabilities for an event (rate >= threshold) are the member
proportions k/S, which take S+1 exact values; the table keeps one bin per
value and reports how often each probability was issued (weighted) and how
often the event then occurred (weighted conditional frequency).

Rank histograms
---------------
The observation's rank among the sorted members, 0..S.  Ties are broken
uniformly at random with a counter-based generator keyed by (seed, example
key, cell index), so histograms are reproducible and independent of how the
dataset was sharded.  Rank histograms are intentionally unweighted: they
diagnose dispersion of the sampled forecasts, not a population statistic;
only masked cells are excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import cell_uniforms, mix_key
from .errors import EmptyDataError, EnsembleSizeError, UndefinedScoreError

_ESTIMATORS = ("fair", "plugin")


def _check_members(members, obs):
    x = np.asarray(members, dtype=np.float64)
    y = np.asarray(obs, dtype=np.float64)
    if x.ndim == 0 or x.shape[1:] != y.shape:
        raise ValueError(
            f"members shape {x.shape} must be (S,) + obs shape {y.shape}")
    return x, y


def crps_fair(members, obs, estimator: str = "fair"):
    """Per-cell CRPS of an ensemble against observations.

    Parameters
    ----------
    members : array, shape (S, ...)
        Ensemble values, members along the first axis.
    obs : array, shape (...)
        Observed values, one per cell.
    estimator : {"fair", "plugin"}
        Unbiased estimator (default) or the empirical-CDF plug-in form.

    Returns
    -------
    ndarray of shape (...) (0-d for scalar input), nonnegative.
    """
    if estimator not in _ESTIMATORS:
        raise ValueError(f"estimator must be one of {_ESTIMATORS}, got {estimator!r}")
    x, y = _check_members(members, obs)
    s = x.shape[0]
    if s < 2:
        raise EnsembleSizeError(f"CRPS needs at least 2 members, got {s}")
    x = np.sort(x, axis=0)
    abs_err = np.abs(x - y[np.newaxis]).mean(axis=0)
    gaps = np.diff(x, axis=0)
    k = np.arange(1, s, dtype=np.float64)
    pair_counts = k * (s - k)
    denom = s * (s - 1.0) if estimator == "fair" else float(s * s)
    spread = np.tensordot(pair_counts / denom, gaps, axes=(0, 0))
    return abs_err - spread


@dataclass
class CrpsAccumulator:
    """Weighted CRPS mass: closed under addition for sharded scoring."""

    weighted_sum: float = 0.0
    weight: float = 0.0

    def __add__(self, other: "CrpsAccumulator") -> "CrpsAccumulator":
        return CrpsAccumulator(self.weighted_sum + other.weighted_sum,
                               self.weight + other.weight)

    @property
    def mean(self) -> float:
        if self.weight <= 0.0:
            raise EmptyDataError("no positively weighted cells")
        return self.weighted_sum / self.weight


def crps_accumulate(members, obs, weights, estimator: str = "fair") -> CrpsAccumulator:
    """Weighted per-cell CRPS sums for one batch of cells."""
    per_cell = crps_fair(members, obs, estimator=estimator)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != per_cell.shape:
        raise ValueError(f"weights shape {w.shape} != cell shape {per_cell.shape}")
    if w.size and w.min() < 0.0:
        raise ValueError("weights must be nonnegative")
    return CrpsAccumulator(weighted_sum=float((w * per_cell).sum()),
                           weight=float(w.sum()))


def crps_dataset(members, obs, weights, estimator: str = "fair") -> float:
    """Weighted mean CRPS over cells: sum(w * CRPS_i) / sum(w)."""
    return crps_accumulate(members, obs, weights, estimator=estimator).mean


@dataclass
class ReliabilityTable:
    """Occupancy and event mass per issued-probability bin.

    ``pred_weight[k]`` is the weight of cells whose forecast probability was
    exactly k/S; ``event_weight[k]`` the weight of those where the event
    then occurred.
    """

    pred_weight: np.ndarray
    event_weight: np.ndarray

    @classmethod
    def empty(cls, n_members: int) -> "ReliabilityTable":
        return cls(np.zeros(n_members + 1), np.zeros(n_members + 1))

    def __post_init__(self):
        self.pred_weight = np.asarray(self.pred_weight, dtype=np.float64)
        self.event_weight = np.asarray(self.event_weight, dtype=np.float64)
        if self.pred_weight.shape != self.event_weight.shape or self.pred_weight.ndim != 1:
            raise ValueError("pred_weight and event_weight must be equal-length vectors")

    def __add__(self, other: "ReliabilityTable") -> "ReliabilityTable":
        if self.pred_weight.shape != other.pred_weight.shape:
            raise ValueError("cannot merge tables for different ensemble sizes")
        return ReliabilityTable(self.pred_weight + other.pred_weight,
                                self.event_weight + other.event_weight)

    @property
    def n_members(self) -> int:
        return len(self.pred_weight) - 1

    @property
    def probabilities(self) -> np.ndarray:
        """The exact issued probabilities k/S, k = 0..S."""
        return np.arange(self.n_members + 1) / self.n_members

    @property
    def forecast_frequency(self) -> np.ndarray:
        """How often each probability was issued, normalized to sum to 1."""
        total = self.pred_weight.sum()
        if total <= 0.0:
            raise EmptyDataError("no positively weighted cells in the table")
        return self.pred_weight / total

    @property
    def observed_frequency(self) -> np.ndarray:
        """Conditional event frequency per bin; NaN where a bin is empty."""
        out = np.full(self.n_members + 1, np.nan)
        occupied = self.pred_weight > 0.0
        out[occupied] = self.event_weight[occupied] / self.pred_weight[occupied]
        return out


def reliability_accumulate(members, obs, threshold: float, weights) -> ReliabilityTable:
    """Bin cells by issued probability of rate >= threshold.

    ``weights`` carry the mask-over-q scoring weights; a zero weight drops
    the cell from the table.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    x, y = _check_members(members, obs)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != y.shape:
        raise ValueError(f"weights shape {w.shape} != obs shape {y.shape}")
    if w.size and w.min() < 0.0:
        raise ValueError("weights must be nonnegative")
    s = x.shape[0]
    k = (x >= threshold).sum(axis=0).ravel()
    wf = w.ravel()
    event = (y >= threshold).ravel()
    pred = np.bincount(k, weights=wf, minlength=s + 1)
    evt = np.bincount(k, weights=wf * event, minlength=s + 1)
    return ReliabilityTable(pred_weight=pred, event_weight=evt)


@dataclass
class RankHistogram:
    """Counts of observation ranks 0..S among the ensemble members."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)

    def __add__(self, other: "RankHistogram") -> "RankHistogram":
        if len(self.counts) == 0:
            return RankHistogram(other.counts.copy())
        if len(other.counts) == 0:
            return RankHistogram(self.counts.copy())
        if self.counts.shape != other.counts.shape:
            raise ValueError("cannot merge histograms for different ensemble sizes")
        return RankHistogram(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def rank_histogram(members, obs, mask=None, seed: int = 0,
                   example_key: int = 0) -> RankHistogram:
    """Histogram of observation ranks within the sorted ensemble.

    A rank of r means r members fell below the observation; ties are placed
    uniformly at random among the tied positions.  The tie-break draw for a
    cell depends only on (seed, example_key, its flat cell index), so pass a
    distinct ``example_key`` per example (its dataset index) to keep draws
    unique yet reproducible under any sharding.

    ``mask`` excludes cells (False = drop); no other weighting is applied.
    """
    x, y = _check_members(members, obs)
    s = x.shape[0]
    below = (x < y[np.newaxis]).sum(axis=0).ravel()
    ties = (x == y[np.newaxis]).sum(axis=0).ravel()
    u = cell_uniforms(mix_key(seed, example_key), y.size)
    rank = below + np.minimum((u * (ties + 1)).astype(np.int64), ties)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != y.shape:
            raise ValueError(f"mask shape {m.shape} != obs shape {y.shape}")
        rank = rank[m.ravel()]
    counts = np.bincount(rank, minlength=s + 1)
    return RankHistogram(counts=counts)
