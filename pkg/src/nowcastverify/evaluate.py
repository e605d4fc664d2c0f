"""Dataset-level scoring: fold per-example verification into one report.

The engine consumes (example, forecast) pairs, restricts both to the
centered scoring window, weights valid cells by 1/q, and accumulates every
score family as mergeable partial sums.  Per-example partials are always
folded in dataset order, so the merged result is byte-identical no matter
how the work was sharded across workers.

Point scores (MSE, correlation, CSI) are computed on the ensemble mean.
CRPS-family scores need at least two members and are skipped for
single-member forecasts; reliability and rank histograms are kept for any
ensemble size.  A cell contributes only where both the observation and the
forecast are valid.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateVarianceError,
    EmptyDataError,
    UndefinedScoreError,
)
from .grid import (
    DEFAULT_FRAME_SECONDS,
    DEFAULT_SCORING_WINDOW,
    EnsembleForecast,
    Example,
    central_window,
)
from .verify_ensemble import (
    CrpsAccumulator,
    RankHistogram,
    ReliabilityTable,
    crps_accumulate,
    rank_histogram,
    reliability_accumulate,
)
from .verify_point import CsiCounts, WeightedMoments, cell_weights, csi, csi_accumulate
from .verify_pooled import POOLINGS, FssAccumulator, fss_accumulate, pooled_crps_accumulate

DEFAULT_THRESHOLDS = (1.0, 4.0, 8.0)
DEFAULT_SCALES = (1, 4, 16)

_ESTIMATORS = ("fair", "plugin")


@dataclass(frozen=True)
class EvalConfig:
    """What to score: event thresholds, pooling scales, window, estimator."""

    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    scales: tuple[int, ...] = DEFAULT_SCALES
    scoring_window: int = DEFAULT_SCORING_WINDOW
    poolings: tuple[str, ...] = POOLINGS
    crps_estimator: str = "fair"
    rank_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, "scales", tuple(int(k) for k in self.scales))
        object.__setattr__(self, "poolings", tuple(str(p) for p in self.poolings))
        object.__setattr__(self, "scoring_window", int(self.scoring_window))
        object.__setattr__(self, "rank_seed", int(self.rank_seed))
        if not self.thresholds:
            raise ConfigError("need at least one event threshold")
        if any(t <= 0.0 for t in self.thresholds):
            raise ConfigError(f"thresholds must be positive, got {self.thresholds}")
        if tuple(sorted(set(self.thresholds))) != self.thresholds:
            raise ConfigError(f"thresholds must be strictly increasing, got {self.thresholds}")
        if not self.scales:
            raise ConfigError("need at least one pooling scale")
        if any(k < 1 for k in self.scales):
            raise ConfigError(f"pooling scales must be >= 1, got {self.scales}")
        if tuple(sorted(set(self.scales))) != self.scales:
            raise ConfigError(f"pooling scales must be strictly increasing, got {self.scales}")
        if self.scoring_window < 1:
            raise ConfigError(f"scoring window must be positive, got {self.scoring_window}")
        if self.scales[-1] > self.scoring_window:
            raise ConfigError(
                f"largest pooling scale {self.scales[-1]} exceeds "
                f"scoring window {self.scoring_window}")
        if not self.poolings or len(set(self.poolings)) != len(self.poolings):
            raise ConfigError(f"poolings must be a non-empty set, got {self.poolings}")
        for p in self.poolings:
            if p not in POOLINGS:
                raise ConfigError(f"unknown pooling {p!r}; choose from {POOLINGS}")
        if self.crps_estimator not in _ESTIMATORS:
            raise ConfigError(
                f"estimator must be one of {_ESTIMATORS}, got {self.crps_estimator!r}")

    def digest(self) -> str:
        """Short stable fingerprint of the configuration."""
        text = repr((self.thresholds, self.scales, self.scoring_window,
                     self.poolings, self.crps_estimator, self.rank_seed))
        return hashlib.sha256(text.encode("ascii")).hexdigest()[:12]


@dataclass(frozen=True)
class EvalItem:
    """One scoring unit: an example, its forecast, and identifying metadata.

    ``init_time`` is the unix time the forecast was issued (by convention
    the timestamp of the last context frame); it places the example into a
    calendar week when scores are aggregated into comparison units.
    """

    example: Example
    forecast: EnsembleForecast
    key: str = ""
    init_time: int = 0


@dataclass(frozen=True)
class ExampleScore:
    """Scalar per-example scores used for paired significance testing."""

    key: str
    init_time: int
    weight: float
    mse: float
    crps: float
    csi: tuple[float, ...]


@dataclass
class EvalAccumulator:
    """All metric partial sums for a set of examples; closed under ``+``.

    Lists are indexed [threshold][scale][lead] in config order.  ``crps``
    and ``pooled`` stay at zero weight for single-member forecasts.
    """

    config: EvalConfig
    lead_minutes: tuple[float, ...]
    n_members: int
    n_examples: int
    point: list
    csi_counts: list
    crps: list
    pooled: dict
    fss_sums: list
    reliability: list
    rank: RankHistogram

    @classmethod
    def empty(cls, config: EvalConfig, lead_minutes, n_members: int) -> "EvalAccumulator":
        leads = tuple(float(m) for m in lead_minutes)
        nl, nt, nk = len(leads), len(config.thresholds), len(config.scales)
        return cls(
            config=config,
            lead_minutes=leads,
            n_members=int(n_members),
            n_examples=0,
            point=[WeightedMoments() for _ in range(nl)],
            csi_counts=[[CsiCounts() for _ in range(nl)] for _ in range(nt)],
            crps=[CrpsAccumulator() for _ in range(nl)],
            pooled={p: [[CrpsAccumulator() for _ in range(nl)] for _ in range(nk)]
                    for p in config.poolings},
            fss_sums=[[[FssAccumulator() for _ in range(nl)] for _ in range(nk)]
                      for _ in range(nt)],
            reliability=[ReliabilityTable.empty(n_members) for _ in range(nt)],
            rank=RankHistogram(),
        )

    def __add__(self, other: "EvalAccumulator") -> "EvalAccumulator":
        if (self.config != other.config or self.lead_minutes != other.lead_minutes
                or self.n_members != other.n_members):
            raise ValueError("cannot merge accumulators from different runs")
        cfg = self.config
        nl = len(self.lead_minutes)
        return EvalAccumulator(
            config=cfg,
            lead_minutes=self.lead_minutes,
            n_members=self.n_members,
            n_examples=self.n_examples + other.n_examples,
            point=[a + b for a, b in zip(self.point, other.point)],
            csi_counts=[[a + b for a, b in zip(ra, rb)]
                        for ra, rb in zip(self.csi_counts, other.csi_counts)],
            crps=[a + b for a, b in zip(self.crps, other.crps)],
            pooled={p: [[self.pooled[p][ki][li] + other.pooled[p][ki][li]
                         for li in range(nl)] for ki in range(len(cfg.scales))]
                    for p in cfg.poolings},
            fss_sums=[[[self.fss_sums[ti][ki][li] + other.fss_sums[ti][ki][li]
                        for li in range(nl)] for ki in range(len(cfg.scales))]
                      for ti in range(len(cfg.thresholds))],
            reliability=[a + b for a, b in zip(self.reliability, other.reliability)],
            rank=self.rank + other.rank,
        )


@dataclass(frozen=True)
class EvalResult:
    """Merged accumulator plus per-example scalar scores in dataset order."""

    total: EvalAccumulator
    scores: tuple[ExampleScore, ...]


def _lead_minutes(forecast: EnsembleForecast) -> tuple[float, ...]:
    """Lead times in minutes; position * default cadence when unlabeled."""
    if forecast.lead_seconds is None:
        return tuple(DEFAULT_FRAME_SECONDS * (i + 1) / 60.0
                     for i in range(forecast.n_leads))
    return tuple(float(s) / 60.0 for s in forecast.lead_seconds)


def _check_item(item: EvalItem, index: int, reference: EnsembleForecast | None,
                window: int) -> None:
    name = item.key or f"example {index}"
    ex, fc = item.example, item.forecast
    if fc.n_leads != ex.n_targets:
        raise AlignmentError(
            f"{name}: forecast has {fc.n_leads} lead times but the example "
            f"has {ex.n_targets} target frames")
    if fc.grid_shape != ex.grid_shape:
        raise AlignmentError(
            f"{name}: forecast grid {fc.grid_shape} does not match "
            f"example grid {ex.grid_shape}")
    if min(ex.grid_shape) < window:
        raise AlignmentError(
            f"{name}: grid {ex.grid_shape} is smaller than the "
            f"{window}x{window} scoring window")
    if reference is not None:
        if fc.n_members != reference.n_members:
            raise AlignmentError(
                f"{name}: ensemble size {fc.n_members} differs from "
                f"{reference.n_members} in the first example")
        if _lead_minutes(fc) != _lead_minutes(reference):
            raise AlignmentError(
                f"{name}: lead times {_lead_minutes(fc)} differ from "
                f"{_lead_minutes(reference)} in the first example")


def evaluate_item(item: EvalItem, config: EvalConfig,
                  example_index: int = 0) -> tuple[EvalAccumulator, ExampleScore]:
    """Score a single (example, forecast) pair.

    Returns the example's own partial accumulator together with its scalar
    summary.  ``example_index`` keys the rank-histogram tie-breaking draws,
    so it must be the example's position in the dataset, not in a shard.
    """
    _check_item(item, example_index, None, config.scoring_window)
    ex, fc = item.example, item.forecast
    q = ex.inclusion_probability
    s_count = fc.n_members
    acc = EvalAccumulator.empty(config, _lead_minutes(fc), s_count)
    acc.n_examples = 1
    rows, cols = central_window(ex.grid_shape, config.scoring_window)

    for li in range(fc.n_leads):
        obs = ex.targets[li].values[rows, cols]
        joint = ex.targets[li].mask[rows, cols] & fc.mask[li][rows, cols]
        weights = cell_weights(joint, q)
        members = fc.members[:, li, rows, cols]
        mean_fcst = members.mean(axis=0)

        acc.point[li] += WeightedMoments.from_arrays(mean_fcst, obs, weights)
        for ti, thr in enumerate(config.thresholds):
            acc.csi_counts[ti][li] += csi_accumulate(mean_fcst, obs, thr, weights)
            acc.reliability[ti] += reliability_accumulate(members, obs, thr, weights)
            for ki, scale in enumerate(config.scales):
                acc.fss_sums[ti][ki][li] += fss_accumulate(
                    members, obs, thr, scale, mask=joint, inclusion_probability=q)
        if s_count >= 2:
            acc.crps[li] += crps_accumulate(members, obs, weights,
                                            config.crps_estimator)
            for pooling in config.poolings:
                for ki, scale in enumerate(config.scales):
                    acc.pooled[pooling][ki][li] += pooled_crps_accumulate(
                        members, obs, scale, pooling, mask=joint,
                        inclusion_probability=q, estimator=config.crps_estimator)
        acc.rank += rank_histogram(members, obs, mask=joint,
                                   seed=config.rank_seed, example_key=example_index)

    return acc, _summarize(item, acc)


def _summarize(item: EvalItem, acc: EvalAccumulator) -> ExampleScore:
    moments = sum(acc.point, WeightedMoments())
    try:
        mse_value = moments.mse
    except EmptyDataError:
        mse_value = float("nan")
    crps_total = sum(acc.crps, CrpsAccumulator())
    if acc.n_members >= 2 and crps_total.weight > 0.0:
        crps_value = crps_total.mean
    else:
        crps_value = float("nan")
    csi_values = []
    for per_lead in acc.csi_counts:
        counts = sum(per_lead, CsiCounts())
        try:
            csi_values.append(csi(counts))
        except UndefinedScoreError:
            csi_values.append(float("nan"))
    return ExampleScore(key=item.key, init_time=int(item.init_time),
                        weight=moments.weight, mse=mse_value, crps=crps_value,
                        csi=tuple(csi_values))


def evaluate_dataset(items, config: EvalConfig | None = None,
                     workers: int = 1) -> EvalResult:
    """Score a dataset of :class:`EvalItem`; invariant to ``workers``.

    Work is split round-robin across ``workers`` in-process shards and each
    example's partial is stored at its dataset position; the fold then runs
    in dataset order.  A multi-process runner sharding the same way would
    merge to the identical bytes, which is what the knob is for.
    """
    config = config if config is not None else EvalConfig()
    items = list(items)
    if not items:
        raise EmptyDataError("no examples to evaluate")
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    reference = items[0].forecast
    # Validate everything up front so a misaligned example aborts the run
    # before any scoring work is spent.
    for i, item in enumerate(items):
        _check_item(item, i, reference, config.scoring_window)

    partials: list[EvalAccumulator | None] = [None] * len(items)
    scores: list[ExampleScore | None] = [None] * len(items)
    for shard in range(workers):
        for i in range(shard, len(items), workers):
            partials[i], scores[i] = evaluate_item(items[i], config, i)

    total = partials[0]
    for part in partials[1:]:
        total = total + part
    return EvalResult(total=total, scores=tuple(scores))


# ---------------------------------------------------------------------------
# CSV serialization.  All floats are written with repr() so reruns are
# byte-identical; the leading comment carries the toolkit version and the
# config digest and nothing run-dependent.


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    return repr(float(value))


def provenance_comment(config: EvalConfig) -> str:
    from . import __version__

    return f"# nowcastverify {__version__} config {config.digest()}"


def _open_writer(path, config):
    handle = open(path, "w", newline="")
    handle.write(provenance_comment(config) + "\n")
    return handle, csv.writer(handle, lineterminator="\n")


def metric_rows(result: EvalResult) -> list[tuple[str, str, str, str, str, str]]:
    """All aggregate metric rows: metric, lead, threshold, scale_km, value, weight_sum.

    Undefined scores (no events, degenerate variance, zero weight) appear
    as ``nan`` with their weight recorded, so row layout never depends on
    the data.
    """
    acc = result.total
    cfg = acc.config
    rows = []

    def guarded(fn):
        try:
            return fn()
        except (EmptyDataError, UndefinedScoreError, DegenerateVarianceError):
            return float("nan")

    for li, minutes in enumerate(acc.lead_minutes):
        m = acc.point[li]
        rows.append(("mse", _fmt(minutes), "", "", _fmt(guarded(lambda: m.mse)),
                     _fmt(m.weight)))
    for li, minutes in enumerate(acc.lead_minutes):
        m = acc.point[li]
        rows.append(("pcc", _fmt(minutes), "", "", _fmt(guarded(lambda: m.pcc)),
                     _fmt(m.weight)))
    for ti, thr in enumerate(cfg.thresholds):
        for li, minutes in enumerate(acc.lead_minutes):
            counts = acc.csi_counts[ti][li]
            rows.append(("csi", _fmt(minutes), _fmt(thr), "",
                         _fmt(guarded(lambda: csi(counts))),
                         _fmt(counts.relevant_weight)))
    if acc.n_members >= 2:
        for li, minutes in enumerate(acc.lead_minutes):
            c = acc.crps[li]
            rows.append(("crps", _fmt(minutes), "", "",
                         _fmt(guarded(lambda: c.mean)), _fmt(c.weight)))
        for pooling in cfg.poolings:
            name = f"crps_pool_{pooling}"
            for ki, scale in enumerate(cfg.scales):
                for li, minutes in enumerate(acc.lead_minutes):
                    c = acc.pooled[pooling][ki][li]
                    rows.append((name, _fmt(minutes), "", _fmt(scale),
                                 _fmt(guarded(lambda: c.mean)), _fmt(c.weight)))
    for ti, thr in enumerate(cfg.thresholds):
        for ki, scale in enumerate(cfg.scales):
            for li, minutes in enumerate(acc.lead_minutes):
                f = acc.fss_sums[ti][ki][li]
                rows.append(("fss", _fmt(minutes), _fmt(thr), _fmt(scale),
                             _fmt(guarded(lambda: f.fss)), _fmt(f.weight)))
    return rows


def write_metrics_csv(path, result: EvalResult) -> None:
    handle, writer = _open_writer(path, result.total.config)
    with handle:
        writer.writerow(("metric", "lead_time_minutes", "threshold", "scale_km",
                         "value", "weight_sum"))
        writer.writerows(metric_rows(result))


def write_reliability_csv(path, result: EvalResult) -> None:
    """Per-threshold reliability bins with forecast/observed frequencies."""
    acc = result.total
    handle, writer = _open_writer(path, acc.config)
    with handle:
        writer.writerow(("threshold", "bin", "forecast_probability",
                         "forecast_frequency", "observed_frequency", "weight_sum"))
        for thr, table in zip(acc.config.thresholds, acc.reliability):
            try:
                fcst_freq = table.forecast_frequency
            except EmptyDataError:
                fcst_freq = np.full(table.n_members + 1, np.nan)
            obs_freq = table.observed_frequency
            for k in range(table.n_members + 1):
                writer.writerow((_fmt(thr), str(k), _fmt(table.probabilities[k]),
                                 _fmt(fcst_freq[k]), _fmt(obs_freq[k]),
                                 _fmt(table.pred_weight[k])))


def write_rank_histogram_csv(path, result: EvalResult) -> None:
    acc = result.total
    handle, writer = _open_writer(path, acc.config)
    with handle:
        writer.writerow(("bin", "count"))
        for rank, count in enumerate(acc.rank.counts):
            writer.writerow((str(rank), str(int(count))))


def score_metric_names(config: EvalConfig) -> tuple[str, ...]:
    """Per-example score files written for a run: one metric per file."""
    names = ["mse", "crps"]
    names.extend(f"csi_{thr:g}mm" for thr in config.thresholds)
    return tuple(names)


def _score_value(score: ExampleScore, metric: str, config: EvalConfig) -> float:
    if metric == "mse":
        return score.mse
    if metric == "crps":
        return score.crps
    for ti, thr in enumerate(config.thresholds):
        if metric == f"csi_{thr:g}mm":
            return score.csi[ti]
    raise ValueError(f"unknown score metric {metric!r}")


def write_scores_csv(path, result: EvalResult, metric: str) -> None:
    """One row per example: key, init_time, weight, value (nan preserved)."""
    config = result.total.config
    handle, writer = _open_writer(path, config)
    with handle:
        writer.writerow(("example", "init_time", "weight", "value"))
        for score in result.scores:
            writer.writerow((score.key, str(score.init_time), _fmt(score.weight),
                             _fmt(_score_value(score, metric, config))))


def read_scores_csv(path) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Read a per-example score file: keys, init times, weights, values."""
    keys: list[str] = []
    times: list[float] = []
    weights: list[float] = []
    values: list[float] = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header_seen = False
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if not header_seen:
                if row != ["example", "init_time", "weight", "value"]:
                    raise ValueError(f"{path}: not a score file (header {row})")
                header_seen = True
                continue
            keys.append(row[0])
            times.append(float(row[1]))
            weights.append(float(row[2]))
            values.append(float(row[3]))
    if not header_seen:
        raise ValueError(f"{path}: empty score file")
    return keys, np.asarray(times), np.asarray(weights), np.asarray(values)
