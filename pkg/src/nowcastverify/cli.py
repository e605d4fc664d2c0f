"""Command-line front end for reproducible batch runs.

Subcommands
-----------
dataset build   importance-sample examples from radar stacks into a manifest
dataset stats   example counts, acceptance summary, rain-rate distribution
baseline run    write persistence / noise-ensemble forecasts for a manifest
evaluate        score forecasts against observations, emit metric CSVs
compare         paired permutation test between two per-example score files
psd             radially averaged power spectra of two field stacks
loss eval       training-objective terms for stored tensors and score lists

Conventions shared by every command: a ``--config`` key=value file supplies
defaults and explicit flags win; ``NOWCASTVERIFY_OUTPUT_DIR`` overrides the
output *directory* flags (and nothing else); every run is deterministic
given its arguments, so reruns produce byte-identical files.

Exit codes: 0 success, 1 usage or configuration problem, 2 unreadable or
inconsistent data, 3 the command ran but produced an empty result.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import eulerian_persistence, lagrangian_persistence, perturbed_ensemble
from .errors import ConfigError, MaskedFrameError, NowcastVerifyError
from .evaluate import (
    EvalConfig,
    EvalItem,
    evaluate_dataset,
    read_scores_csv,
    score_metric_names,
    write_metrics_csv,
    write_rank_histogram_csv,
    write_reliability_csv,
    write_scores_csv,
)
from .io import (
    ManifestEntry,
    load_example,
    read_ensemble,
    read_manifest,
    read_radar_stack,
    resolve_source,
    write_ensemble,
    write_manifest,
)
from .losses import (
    generator_objective,
    grid_cell_regularizer,
    hinge_discriminator_loss,
)
from .sampler import (
    PRESETS,
    build_subsampled_dataset,
    rainfall_distribution,
    with_overrides,
)
from .spectral import psd_radial
from .stats import clopper_pearson, make_paired_sample, paired_permutation_test, weekly_units

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EMPTY = 3

OUTPUT_DIR_ENV = "NOWCASTVERIFY_OUTPUT_DIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1.
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# key=value config files and flag resolution


def read_config_file(path) -> dict[str, str]:
    """Parse a key=value file; '#' starts a comment, blank lines ignored."""
    mapping: dict[str, str] = {}
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


class _Settings:
    """Flag > config file > default resolution for one command."""

    def __init__(self, args, allowed_keys):
        self.args = args
        self.file_values: dict[str, str] = {}
        if getattr(args, "config", None):
            self.file_values = read_config_file(args.config)
            unknown = sorted(set(self.file_values) - set(allowed_keys))
            if unknown:
                raise ConfigError(
                    f"{args.config}: unknown config keys {', '.join(unknown)}")

    def get(self, name, cast, default):
        flag = getattr(self.args, name)
        if flag is not None:
            return flag
        if name in self.file_values:
            try:
                return cast(self.file_values[name])
            except ValueError as exc:
                raise ConfigError(f"config key {name}: {exc}") from exc
        return default


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(","))


def _float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _float_list(text: str) -> np.ndarray:
    return np.asarray([float(part) for part in text.split(",")])


def _bool01(text: str) -> bool:
    if text not in ("0", "1"):
        raise ValueError(f"expected 0 or 1, got {text!r}")
    return text == "1"


def _output_dir(settings, default=None) -> Path:
    """Resolve an output directory: flag, then environment, then config."""
    flag = getattr(settings.args, "output", None)
    if flag is not None:
        return Path(flag)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env)
    if "output" in settings.file_values:
        return Path(settings.file_values["output"])
    if default is not None:
        return Path(default)
    raise ConfigError(f"no output directory: pass --output or set {OUTPUT_DIR_ENV}")


def _comment(parameters) -> str:
    digest = hashlib.sha256(repr(parameters).encode("ascii")).hexdigest()[:12]
    return f"# nowcastverify {__version__} config {digest}"


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# dataset build / dataset stats

_BUILD_KEYS = ("preset", "mode", "seed", "n_context", "n_targets", "q_min",
               "multiplier", "saturation", "spatial_offset", "temporal_offset",
               "frames", "height", "width", "random_offset", "output")


def cmd_dataset_build(args) -> int:
    settings = _Settings(args, _BUILD_KEYS)
    preset_name = settings.get("preset", str, None)
    if preset_name is None:
        raise ConfigError("no sampling preset: pass --preset or set it in --config")
    if preset_name not in PRESETS:
        raise ConfigError(
            f"unknown preset {preset_name!r}; choose from {', '.join(sorted(PRESETS))}")
    overrides = {}
    for name, cast in (("q_min", float), ("multiplier", float), ("saturation", float),
                       ("spatial_offset", int), ("temporal_offset", int),
                       ("frames", int), ("height", int), ("width", int),
                       ("random_offset", _bool01)):
        value = settings.get(name, cast, None)
        if value is not None:
            overrides[name] = value
    params = with_overrides(PRESETS[preset_name], **overrides)
    mode = settings.get("mode", str, "eval")
    seed = settings.get("seed", int, 0)
    n_context = settings.get("n_context", int, 4)
    n_targets = settings.get("n_targets", int, 18)

    out_value = args.output or settings.file_values.get("output")
    if not out_value:
        raise ConfigError("no manifest path: pass --output")
    out_path = Path(out_value)

    sources = [read_radar_stack(p) for p in args.input]
    kept = build_subsampled_dataset(sources, params, mode=mode, seed=seed,
                                    n_context=n_context, n_targets=n_targets)

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_dir = out_path.parent.resolve()
    entries = []
    for we in kept:
        ex = we.example
        t0, y0, x0 = ex.origin
        source = os.path.relpath(Path(args.input[we.source_index]).resolve(), out_dir)
        entries.append(ManifestEntry(
            source=source, t0=t0, y0=y0, x0=x0,
            height=ex.grid_shape[0], width=ex.grid_shape[1],
            n_context=ex.n_context, n_targets=ex.n_targets,
            inclusion_probability=we.inclusion_probability,
        ))
    write_manifest(out_path, entries,
                   comment_lines=[f"preset {preset_name} mode {mode} seed {seed}"])

    print(f"sources: {len(sources)}")
    print(f"examples kept: {len(entries)}")
    if entries:
        qs = np.array([e.inclusion_probability for e in entries])
        print(f"inclusion probability: mean {_fmt(qs.mean())} "
              f"min {_fmt(qs.min())} max {_fmt(qs.max())}")
        print(f"estimated source examples: {_fmt((1.0 / qs).sum())}")
        print(f"manifest: {out_path}")
        return EXIT_OK
    print("warning: no examples accepted", file=sys.stderr)
    return EXIT_EMPTY


def _load_entries(manifest_path) -> tuple[list[ManifestEntry], dict[str, object]]:
    """Manifest entries plus a source-path -> sequence cache."""
    entries = read_manifest(manifest_path)
    cache: dict[str, object] = {}
    for entry in entries:
        path = str(resolve_source(entry, manifest_path))
        if path not in cache:
            cache[path] = read_radar_stack(path)
    return entries, cache


def _entry_sequence(entry, manifest_path, cache):
    return cache[str(resolve_source(entry, manifest_path))]


def cmd_dataset_stats(args) -> int:
    entries, cache = _load_entries(args.manifest)
    if not entries:
        print("warning: empty manifest", file=sys.stderr)
        return EXIT_EMPTY
    examples = [load_example(e, _entry_sequence(e, args.manifest, cache))
                for e in entries]
    qs = np.array([e.inclusion_probability for e in entries])
    print(f"examples: {len(entries)}")
    print(f"sources: {len(cache)}")
    print(f"inclusion probability: mean {_fmt(qs.mean())} "
          f"min {_fmt(qs.min())} max {_fmt(qs.max())}")
    print(f"estimated source examples: {_fmt((1.0 / qs).sum())}")
    labels, percentages = rainfall_distribution(examples)
    for label, pct in zip(labels, percentages):
        print(f"rain {label}: {_fmt(pct)}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# baseline run

_BASELINE_KEYS = ("method", "members", "sigma", "length_scale", "max_shift",
                  "seed", "interval", "output")

_METHODS = ("eulerian", "lagrangian", "perturbed")


def cmd_baseline_run(args) -> int:
    settings = _Settings(args, _BASELINE_KEYS)
    method = settings.get("method", str, None)
    if method not in _METHODS:
        raise ConfigError(f"method must be one of {', '.join(_METHODS)}, got {method!r}")
    members = settings.get("members", int, 20)
    sigma = settings.get("sigma", float, 1.0)
    length_scale = settings.get("length_scale", int, 4)
    max_shift = settings.get("max_shift", int, 8)
    seed = settings.get("seed", int, 0)
    interval_flag = settings.get("interval", int, None)
    out_dir = _output_dir(settings)

    entries, cache = _load_entries(args.manifest)
    if not entries:
        print("warning: empty manifest, no forecasts written", file=sys.stderr)
        return EXIT_EMPTY
    out_dir.mkdir(parents=True, exist_ok=True)

    for index, entry in enumerate(entries):
        seq = _entry_sequence(entry, args.manifest, cache)
        example = load_example(entry, seq)
        interval = interval_flag if interval_flag is not None else seq.interval
        if method == "eulerian":
            forecast = eulerian_persistence(example.context, example.n_targets,
                                            interval=interval)
        else:
            forecast = lagrangian_persistence(example.context, example.n_targets,
                                              max_shift=max_shift, interval=interval)
            if method == "perturbed":
                forecast = perturbed_ensemble(forecast, n_members=members,
                                              noise_sigma=sigma,
                                              length_scale=length_scale,
                                              seed=seed + index)
        write_ensemble(out_dir / f"{index:05d}.rge", forecast)

    print(f"method: {method}")
    print(f"forecasts written: {len(entries)}")
    print(f"output: {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

_EVAL_KEYS = ("thresholds", "scales", "window", "estimator", "rank_seed",
              "workers", "output")


def cmd_evaluate(args) -> int:
    settings = _Settings(args, _EVAL_KEYS)
    config = EvalConfig(
        thresholds=settings.get("thresholds", _float_tuple, (1.0, 4.0, 8.0)),
        scales=settings.get("scales", _int_tuple, (1, 4, 16)),
        scoring_window=settings.get("window", int, 64),
        crps_estimator=settings.get("estimator", str, "fair"),
        rank_seed=settings.get("rank_seed", int, 0),
    )
    workers = settings.get("workers", int, 1)
    out_dir = _output_dir(settings)

    entries, cache = _load_entries(args.manifest)
    if not entries:
        print("warning: empty manifest, nothing to score", file=sys.stderr)
        return EXIT_EMPTY
    forecast_dir = Path(args.forecasts)
    items = []
    for index, entry in enumerate(entries):
        seq = _entry_sequence(entry, args.manifest, cache)
        example = load_example(entry, seq)
        forecast = read_ensemble(forecast_dir / f"{index:05d}.rge")
        init_time = int(seq.timestamps[entry.t0 + entry.n_context - 1])
        items.append(EvalItem(example=example, forecast=forecast,
                              key=f"{index:05d}", init_time=init_time))

    result = evaluate_dataset(items, config, workers=workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(out_dir / "metrics.csv", result)
    write_reliability_csv(out_dir / "reliability.csv", result)
    write_rank_histogram_csv(out_dir / "rank_histogram.csv", result)
    for metric in score_metric_names(config):
        write_scores_csv(out_dir / f"scores_{metric}.csv", result, metric)

    total = result.total
    print(f"examples scored: {total.n_examples}")
    print(f"ensemble members: {total.n_members}")
    print(f"lead times (minutes): {', '.join(_fmt(m) for m in total.lead_minutes)}")
    print(f"output: {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    if args.n_perm < 1:
        raise ConfigError(f"n_perm must be >= 1, got {args.n_perm}")
    label_a = Path(args.scores_a).name
    label_b = Path(args.scores_b).name
    _, times_a, weights_a, values_a = read_scores_csv(args.scores_a)
    _, times_b, weights_b, values_b = read_scores_csv(args.scores_b)
    units_a = weekly_units(times_a, values_a, weights_a, parity=args.parity)
    units_b = weekly_units(times_b, values_b, weights_b, parity=args.parity)
    sample = make_paired_sample(units_a, units_b)
    p_value = paired_permutation_test(sample, n_perm=args.n_perm, seed=args.seed)

    diffs = sample.differences
    lower_is_better = args.direction == "lower-better"
    improved = int((diffs > 0).sum()) if lower_is_better else int((diffs < 0).sum())
    low, high = clopper_pearson(improved, len(sample), alpha=args.alpha)

    print(f"A: {label_a}")
    print(f"B: {label_b}")
    print(f"units: {len(sample)} (parity={args.parity})")
    print(f"mean difference (A - B): {_fmt(float(diffs.mean()))}")
    print(f"permutation p-value: {_fmt(p_value)} "
          f"(n_perm={args.n_perm}, seed={args.seed})")
    print(f"units where B improves ({args.direction}): {improved}/{len(sample)}")
    print(f"{_fmt(1 - args.alpha)} interval for improvement share: "
          f"[{_fmt(low)}, {_fmt(high)}]")
    print("week\tA\tB\tA-B")
    for unit, a_score, b_score in zip(sample.units, sample.score_a, sample.score_b):
        year, week = unit
        print(f"{year}-W{week:02d}\t{_fmt(a_score)}\t{_fmt(b_score)}"
              f"\t{_fmt(a_score - b_score)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# psd


def _psd_rows(path, label, spacing_km):
    seq = read_radar_stack(path)
    interval = seq.interval
    rows, skipped = [], 0
    for index in range(len(seq)):
        try:
            curve = psd_radial(seq.frames[index], spacing_km=spacing_km)
        except MaskedFrameError:
            skipped += 1
            continue
        minutes = interval * (index + 1) / 60.0
        for ring in range(len(curve.total_power)):
            rows.append((_fmt(minutes), _fmt(curve.wavelength_km[ring]),
                         _fmt(curve.mean_power[ring]), label))
    return rows, skipped


def cmd_psd(args) -> int:
    model_rows, model_skipped = _psd_rows(args.model, "model", args.spacing_km)
    obs_rows, obs_skipped = _psd_rows(args.obs, "obs", args.spacing_km)
    for label, skipped in (("model", model_skipped), ("obs", obs_skipped)):
        if skipped:
            print(f"warning: skipped {skipped} masked {label} frames", file=sys.stderr)
    rows = model_rows + obs_rows
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = [_comment(("psd", args.spacing_km)),
             "lead_time_minutes,wavelength_km,power,source"]
    lines += [",".join(row) for row in rows]
    out.write_text("\n".join(lines) + "\n")
    if not rows:
        print("warning: every frame was masked, empty table", file=sys.stderr)
        return EXIT_EMPTY
    print(f"rows written: {len(rows)}")
    print(f"output: {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# loss eval


def cmd_loss_eval(args) -> int:
    printed = False
    if args.samples or args.targets:
        if not (args.samples and args.targets):
            raise ConfigError("--samples and --targets must be given together")
        forecast = read_ensemble(args.samples)
        seq = read_radar_stack(args.targets)
        if len(seq) != forecast.n_leads:
            raise ConfigError(
                f"targets hold {len(seq)} frames but the forecast has "
                f"{forecast.n_leads} lead times")
        target = np.stack([f.values for f in seq.frames])
        mask = np.stack([f.mask for f in seq.frames]) & forecast.mask
        reg = grid_cell_regularizer(forecast.members, target, mask=mask,
                                    clipped=not args.unclipped)
        print(f"grid_cell_regularizer: {_fmt(reg)}")
        printed = True
        if args.d_gen is not None and args.t_gen is not None:
            objective = generator_objective(args.d_gen, args.t_gen, reg,
                                            lam=args.lam)
            print(f"generator_objective: {_fmt(objective)}")
    if args.d_real is not None and args.d_fake is not None:
        loss = hinge_discriminator_loss(args.d_real, args.d_fake)
        print(f"hinge_discriminator_loss: {_fmt(loss)}")
        printed = True
    if not printed:
        raise ConfigError(
            "nothing to evaluate: give --samples/--targets or --d-real/--d-fake")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="nowcastverify",
                     description="Ensemble nowcast verification toolkit")
    parser.add_argument("--version", action="version",
                        version=f"nowcastverify {__version__}")
    top = parser.add_subparsers(dest="command", required=True)

    dataset = top.add_parser("dataset", help="dataset construction and summaries")
    dataset_sub = dataset.add_subparsers(dest="subcommand", required=True)

    build = dataset_sub.add_parser("build", help="importance-sample a dataset")
    build.add_argument("--input", nargs="+", required=True, metavar="STACK",
                       help="radar stack files, order defines candidate identity")
    build.add_argument("--output", help="manifest file to write")
    build.add_argument("--config", help="key=value defaults file")
    build.add_argument("--preset", help="sampling preset name")
    build.add_argument("--mode", choices=("train", "eval"))
    build.add_argument("--seed", type=int)
    build.add_argument("--n-context", dest="n_context", type=int)
    build.add_argument("--n-targets", dest="n_targets", type=int)
    build.add_argument("--q-min", dest="q_min", type=float)
    build.add_argument("--multiplier", type=float)
    build.add_argument("--saturation", type=float)
    build.add_argument("--spatial-offset", dest="spatial_offset", type=int)
    build.add_argument("--temporal-offset", dest="temporal_offset", type=int)
    build.add_argument("--frames", type=int)
    build.add_argument("--height", type=int)
    build.add_argument("--width", type=int)
    build.add_argument("--random-offset", dest="random_offset", type=_bool01)
    build.set_defaults(func=cmd_dataset_build)

    stats = dataset_sub.add_parser("stats", help="summarize a built dataset")
    stats.add_argument("--manifest", required=True)
    stats.set_defaults(func=cmd_dataset_stats)

    baseline = top.add_parser("baseline", help="reference forecasts")
    baseline_sub = baseline.add_subparsers(dest="subcommand", required=True)
    run = baseline_sub.add_parser("run", help="write forecasts for a manifest")
    run.add_argument("--manifest", required=True)
    run.add_argument("--output", help="directory for forecast files")
    run.add_argument("--config", help="key=value defaults file")
    run.add_argument("--method", choices=_METHODS)
    run.add_argument("--members", type=int)
    run.add_argument("--sigma", type=float)
    run.add_argument("--length-scale", dest="length_scale", type=int)
    run.add_argument("--max-shift", dest="max_shift", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--interval", type=int, help="lead spacing in seconds")
    run.set_defaults(func=cmd_baseline_run)

    evaluate = top.add_parser("evaluate", help="score forecasts, write CSVs")
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--forecasts", required=True,
                          help="directory holding NNNNN.rge forecast files")
    evaluate.add_argument("--output", help="directory for CSV output")
    evaluate.add_argument("--config", help="key=value defaults file")
    evaluate.add_argument("--thresholds", type=_float_tuple,
                          help="comma-separated mm/hr event thresholds")
    evaluate.add_argument("--scales", type=_int_tuple,
                          help="comma-separated pooling sides in cells")
    evaluate.add_argument("--window", type=int, help="scoring window side")
    evaluate.add_argument("--estimator", choices=("fair", "plugin"))
    evaluate.add_argument("--rank-seed", dest="rank_seed", type=int)
    evaluate.add_argument("--workers", type=int)
    evaluate.set_defaults(func=cmd_evaluate)

    compare = top.add_parser("compare", help="paired permutation comparison")
    compare.add_argument("--scores-a", dest="scores_a", required=True)
    compare.add_argument("--scores-b", dest="scores_b", required=True)
    compare.add_argument("--n-perm", dest="n_perm", type=int, default=1_000_000)
    compare.add_argument("--seed", type=int, default=0)
    compare.add_argument("--parity", choices=("even", "odd"), default="even")
    compare.add_argument("--alpha", type=float, default=0.05)
    compare.add_argument("--direction", choices=("lower-better", "higher-better"),
                         default="lower-better",
                         help="which way an improvement points for the share interval")
    compare.set_defaults(func=cmd_compare)

    psd = top.add_parser("psd", help="radially averaged power spectra")
    psd.add_argument("--model", required=True, help="radar stack of predictions")
    psd.add_argument("--obs", required=True, help="radar stack of observations")
    psd.add_argument("--output", required=True, help="CSV file to write")
    psd.add_argument("--spacing-km", dest="spacing_km", type=float, default=1.0)
    psd.set_defaults(func=cmd_psd)

    loss = top.add_parser("loss", help="training-objective terms")
    loss_sub = loss.add_subparsers(dest="subcommand", required=True)
    loss_eval = loss_sub.add_parser("eval", help="evaluate loss terms")
    loss_eval.add_argument("--samples", help="ensemble forecast file")
    loss_eval.add_argument("--targets", help="radar stack of target frames")
    loss_eval.add_argument("--unclipped", action="store_true",
                           help="use the unclipped rain weighting")
    loss_eval.add_argument("--lam", type=float, default=20.0)
    loss_eval.add_argument("--d-gen", dest="d_gen", type=_float_list,
                           help="critic scores of generated samples")
    loss_eval.add_argument("--t-gen", dest="t_gen", type=_float_list,
                           help="temporal critic scores of generated samples")
    loss_eval.add_argument("--d-real", dest="d_real", type=_float_list,
                           help="critic scores of real samples")
    loss_eval.add_argument("--d-fake", dest="d_fake", type=_float_list,
                           help="critic scores of generated samples")
    loss_eval.set_defaults(func=cmd_loss_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NowcastVerifyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
