"""Grid-cell verification of point forecasts: MSE, correlation, CSI.

Every score weights cell i by

    w_i = m_i / q_i

where m_i is 1 for cells with a valid radar observation and 0 otherwise,
and q_i is the inclusion probability of the example the cell came from.
Scores are means under the normalized weights, so subsampled datasets
reproduce full-dataset statistics in expectation.

All scores are built from mergeable partial sums, allowing a dataset to be
scored in shards: merging shard accumulators gives the same result as one
pass (bit for bit when the partials are added in the same order, and to
~1e-12 under reordering).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, EmptyDataError, UndefinedScoreError


def cell_weights(mask, inclusion_probability: float) -> np.ndarray:
    """Per-cell scoring weights: mask / q."""
    q = float(inclusion_probability)
    if not (0.0 < q <= 1.0):
        raise ValueError(f"inclusion probability must lie in (0, 1], got {q}")
    return np.asarray(mask, dtype=np.float64) / q


def _as_fow(forecast, obs, weights):
    f = np.asarray(forecast, dtype=np.float64).ravel()
    o = np.asarray(obs, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if not (f.shape == o.shape == w.shape):
        raise ValueError(
            f"forecast {f.shape}, obs {o.shape}, weights {w.shape} must match")
    if w.size and w.min() < 0.0:
        raise ValueError("weights must be nonnegative")
    return f, o, w


@dataclass
class WeightedMoments:
    """Weighted first/second moments of a (forecast, observation) pairing.

    Enough state to answer MSE and correlation queries, and closed under
    addition, so shards can be scored independently and merged.
    """

    weight: float = 0.0
    f_sum: float = 0.0
    o_sum: float = 0.0
    ff_sum: float = 0.0
    oo_sum: float = 0.0
    fo_sum: float = 0.0
    sq_err_sum: float = 0.0

    @classmethod
    def from_arrays(cls, forecast, obs, weights) -> "WeightedMoments":
        f, o, w = _as_fow(forecast, obs, weights)
        return cls(
            weight=float(w.sum()),
            f_sum=float((w * f).sum()),
            o_sum=float((w * o).sum()),
            ff_sum=float((w * f * f).sum()),
            oo_sum=float((w * o * o).sum()),
            fo_sum=float((w * f * o).sum()),
            sq_err_sum=float((w * (f - o) ** 2).sum()),
        )

    def __add__(self, other: "WeightedMoments") -> "WeightedMoments":
        return WeightedMoments(*(a + b for a, b in
                                 zip(self._astuple(), other._astuple())))

    def _astuple(self):
        return (self.weight, self.f_sum, self.o_sum, self.ff_sum,
                self.oo_sum, self.fo_sum, self.sq_err_sum)

    @property
    def mse(self) -> float:
        """Weighted mean squared error."""
        if self.weight <= 0.0:
            raise EmptyDataError("no positively weighted cells")
        return self.sq_err_sum / self.weight

    @property
    def pcc(self) -> float:
        """Weighted Pearson correlation between forecast and observation."""
        if self.weight <= 0.0:
            raise EmptyDataError("no positively weighted cells")
        mu_f = self.f_sum / self.weight
        mu_o = self.o_sum / self.weight
        var_f = self.ff_sum / self.weight - mu_f * mu_f
        var_o = self.oo_sum / self.weight - mu_o * mu_o
        if var_f <= 0.0 or var_o <= 0.0:
            raise DegenerateVarianceError(
                "correlation undefined: zero weighted variance")
        cov = self.fo_sum / self.weight - mu_f * mu_o
        r = cov / np.sqrt(var_f * var_o)
        return float(min(1.0, max(-1.0, r)))


def mse(forecast, obs, weights) -> float:
    """Weighted mean squared error over cells.

    ``sum(w * (F - O)^2) / sum(w)``.  Raises :class:`EmptyDataError` when
    all weights are zero.
    """
    return WeightedMoments.from_arrays(forecast, obs, weights).mse


def pcc(forecast, obs, weights) -> float:
    """Weighted Pearson correlation coefficient over cells.

    Means and standard deviations are taken under the normalized weights.
    Computed from raw moments (mergeable, single pass); for data whose mean
    dwarfs its spread the usual cancellation caveat applies.  The result is
    clamped to [-1, 1] to absorb last-bit rounding.  Raises
    :class:`DegenerateVarianceError` if either series is constant where
    weighted (detected exactly before any arithmetic).
    """
    f, o, w = _as_fow(forecast, obs, weights)
    seen = w > 0.0
    if not seen.any():
        raise EmptyDataError("no positively weighted cells")
    for series in (f, o):
        live = series[seen]
        if np.all(live == live[0]):
            raise DegenerateVarianceError(
                "correlation undefined: constant values under the weights")
    return WeightedMoments.from_arrays(f, o, w).pcc


@dataclass
class CsiCounts:
    """Weighted hit/false-alarm/miss mass for one threshold.

    ``tp``: forecast and observation both at or above threshold;
    ``fp``: forecast above, observation below; ``fn``: the reverse.
    Correct negatives are not tracked; CSI does not use them.
    """

    tp: float = 0.0
    fp: float = 0.0
    fn: float = 0.0

    def __add__(self, other: "CsiCounts") -> "CsiCounts":
        return CsiCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def relevant_weight(self) -> float:
        return self.tp + self.fp + self.fn


def csi_accumulate(forecast, obs, threshold: float, weights) -> CsiCounts:
    """Accumulate weighted contingency mass at ``threshold`` (mm/hr)."""
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    f, o, w = _as_fow(forecast, obs, weights)
    f_event = f >= threshold
    o_event = o >= threshold
    return CsiCounts(
        tp=float(w[f_event & o_event].sum()),
        fp=float(w[f_event & ~o_event].sum()),
        fn=float(w[~f_event & o_event].sum()),
    )


def csi(counts: CsiCounts) -> float:
    """Critical success index tp / (tp + fp + fn).

    Equals f1 / (2 - f1) for the same counts.  Raises
    :class:`UndefinedScoreError` when no weighted cell had an event on
    either side.
    """
    denom = counts.relevant_weight
    if denom <= 0.0:
        raise UndefinedScoreError("CSI undefined: no events forecast or observed")
    return counts.tp / denom


def f1(counts: CsiCounts) -> float:
    """F1 score 2*tp / (2*tp + fp + fn) for the same weighted counts."""
    denom = 2.0 * counts.tp + counts.fp + counts.fn
    if counts.relevant_weight <= 0.0:
        raise UndefinedScoreError("F1 undefined: no events forecast or observed")
    return 2.0 * counts.tp / denom
