"""Significance tests and confidence intervals for forecast comparisons.

Scores of two systems evaluated on the same period are strongly
dependent, so comparisons are made on paired, temporally separated units:
per-example scores are grouped into ISO weeks, every other week is kept
so adjacent units do not share weather, and each kept week is reduced to
an importance-weighted mean.  The difference of two systems is then
tested with a paired sign-flip permutation test, and binomial proportions
(for example "share of weeks where B beats A") get exact
Clopper-Pearson intervals.

Conventions fixed here:

* permutation p-values use the add-one rule p = (1 + #{|T*| >= |T|}) /
  (n_perm + 1), which is a valid Monte Carlo p-value;
* the test statistic is the mean per-unit difference;
* "alternating weeks" keeps even-numbered ISO weeks unless asked
  otherwise.

Sign flips come from counter-based generators keyed by (seed, chunk), so
the p-value is reproducible and independent of how the permutation range
is chunked or sharded.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass

import numpy as np
from scipy.special import betaincinv

from ._rng import keyed_generator
from .errors import AlignmentError, InsufficientDataError

PERMUTATION_CHUNK = 65536
_PERMUTATION_DOMAIN = 0x5045524D  # distinguishes these draws from other keyed RNG uses
_PARITIES = ("even", "odd")


@dataclass(frozen=True)
class PairedSample:
    """Per-unit scores of two systems over the same disjoint time units."""

    units: tuple
    score_a: np.ndarray
    score_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.score_a, dtype=np.float64)
        b = np.asarray(self.score_b, dtype=np.float64)
        units = tuple(self.units)
        if not (a.ndim == b.ndim == 1 and len(a) == len(b) == len(units)):
            raise ValueError("units, score_a, score_b must have equal length")
        if len(set(units)) != len(units):
            raise ValueError("unit ids must be distinct")
        if not (np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("unit scores must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "units", units)
        object.__setattr__(self, "score_a", a)
        object.__setattr__(self, "score_b", b)

    def __len__(self):
        return len(self.units)

    @property
    def differences(self) -> np.ndarray:
        return self.score_a - self.score_b


def paired_permutation_test(sample: PairedSample, n_perm: int = 1_000_000,
                            seed: int = 0) -> float:
    """Two-sided sign-flip test of equal mean scores.

    Flips the sign of each unit's difference independently ``n_perm``
    times and returns p = (1 + #{|T*| >= |T_obs|}) / (n_perm + 1) for the
    mean-difference statistic T.
    """
    if len(sample) < 2:
        raise InsufficientDataError(
            f"paired test needs at least 2 units, got {len(sample)}")
    if n_perm < 1:
        raise ValueError(f"n_perm must be >= 1, got {n_perm}")
    d = sample.differences
    n_units = len(d)
    observed = abs(d.mean())
    exceed = 0
    for chunk_index, start in enumerate(range(0, n_perm, PERMUTATION_CHUNK)):
        m = min(PERMUTATION_CHUNK, n_perm - start)
        gen = keyed_generator(_PERMUTATION_DOMAIN, seed, chunk_index)
        signs = gen.integers(0, 2, size=(m, n_units)).astype(np.float64)
        signs = 2.0 * signs - 1.0
        stats = np.abs(signs @ d) / n_units
        exceed += int((stats >= observed).sum())
    return (1 + exceed) / (n_perm + 1)


def clopper_pearson(k: int, n: int, alpha: float = 0.05):
    """Exact two-sided binomial confidence interval for k successes in n.

    Uses the beta-quantile characterization of the binomial tail; the
    boundary cases pin lo = 0 at k = 0 and hi = 1 at k = n.
    """
    k = int(k)
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one trial, got n={n}")
    if not 0 <= k <= n:
        raise ValueError(f"successes k={k} outside 0..{n}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lo = 0.0 if k == 0 else float(betaincinv(k, n - k + 1, alpha / 2.0))
    hi = 1.0 if k == n else float(betaincinv(k + 1, n - k, 1.0 - alpha / 2.0))
    return lo, hi


def _iso_week(timestamp: int):
    day = datetime.datetime.fromtimestamp(
        int(timestamp), tz=datetime.timezone.utc).date()
    iso = day.isocalendar()
    return int(iso[0]), int(iso[1])


def weekly_units(timestamps, scores, weights=None, parity: str = "even"):
    """Group per-example scores into alternating ISO-week units.

    Returns {(iso_year, iso_week): weighted mean score} over weeks whose
    number has the requested parity.  Examples with NaN scores are
    dropped before aggregation.  Fewer than two resulting units cannot
    support a paired comparison and raise.
    """
    if parity not in _PARITIES:
        raise ValueError(f"parity must be one of {_PARITIES}, got {parity!r}")
    times = np.asarray(timestamps, dtype=np.int64)
    values = np.asarray(scores, dtype=np.float64)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("timestamps and scores must be equal-length 1-D")
    w = (np.ones_like(values) if weights is None
         else np.asarray(weights, dtype=np.float64))
    if w.shape != values.shape:
        raise ValueError("weights must match scores in length")
    if w.size and w.min() < 0.0:
        raise ValueError("weights must be nonnegative")
    keep_remainder = 0 if parity == "even" else 1
    sums: dict = {}
    for t, s, wi in zip(times, values, w):
        if not np.isfinite(s):
            continue
        year, week = _iso_week(t)
        if week % 2 != keep_remainder:
            continue
        acc = sums.setdefault((year, week), [0.0, 0.0])
        acc[0] += wi * s
        acc[1] += wi
    units = {key: num / den for key, (num, den) in sorted(sums.items())
             if den > 0.0}
    if len(units) < 2:
        raise InsufficientDataError(
            f"only {len(units)} {parity}-week unit(s) with data; paired "
            "comparison needs at least 2")
    return units


def make_paired_sample(units_a: dict, units_b: dict) -> PairedSample:
    """Align two unit->score mappings into one paired sample."""
    keys_a = set(units_a)
    keys_b = set(units_b)
    if keys_a != keys_b:
        only_a = sorted(keys_a - keys_b)
        only_b = sorted(keys_b - keys_a)
        raise AlignmentError(
            "unit mismatch between systems: "
            f"missing from B {only_a or 'none'}, missing from A {only_b or 'none'}")
    keys = sorted(keys_a)
    return PairedSample(units=tuple(keys),
                        score_a=np.array([units_a[k] for k in keys]),
                        score_b=np.array([units_b[k] for k in keys]))
