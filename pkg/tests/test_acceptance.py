"""Release gate: nine end-to-end checks the toolkit must pass.

Each check prints a single ``[PASS]``/``[FAIL]`` line directly to the
terminal (bypassing capture) so a plain pytest run reads as a checklist.
Tolerances and time budgets are part of the contract and are asserted,
not just reported.
"""

from __future__ import annotations

import csv
import io
import re
import time
from contextlib import contextmanager, redirect_stdout
from pathlib import Path

import numpy as np
import pytest

from nowcastverify.baselines import synthetic_corpus
from nowcastverify.cli import main as cli
from nowcastverify.io import write_radar_stack
from nowcastverify.losses import (generator_objective, grid_cell_regularizer,
                                  hinge_discriminator_loss, rain_weight)
from nowcastverify.sampler import (SamplingParams, build_subsampled_dataset,
                                   weighted_estimate)
from nowcastverify.spectral import average_psd, psd_radial
from nowcastverify.stats import (PairedSample, clopper_pearson,
                                 paired_permutation_test)
from nowcastverify.verify_ensemble import (RankHistogram, ReliabilityTable,
                                           crps_fair, rank_histogram,
                                           reliability_accumulate)
from nowcastverify.verify_point import CsiCounts, cell_weights, csi, csi_accumulate
from nowcastverify.verify_pooled import FssAccumulator, fss_accumulate


@contextmanager
def reported(capsys, number: int, label: str):
    """Print one checklist line for the enclosed assertions."""
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[FAIL] criterion {number}: {label}")
        raise
    with capsys.disabled():
        print(f"[PASS] criterion {number}: {label}")


# ---------------------------------------------------------------------------
# 1. CRPS estimator against the quadratic double sum


def test_criterion_1_crps_matches_double_sum(capsys):
    with reported(capsys, 1, "sorted-form CRPS matches the pairwise double "
                             "sum to 1e-12 and is exactly 0 when perfect"):
        start = time.perf_counter()
        worst = 0.0
        for s in (2, 5, 20):
            rng = np.random.default_rng(100 + s)
            members = rng.normal(size=(s, 10_000))
            obs = rng.normal(size=10_000)
            got = crps_fair(members, obs)
            # O(S^2) oracle: mean |x - y| minus the mean over ordered
            # member pairs of |x_i - x_j| / 2, bias-corrected with S(S-1).
            term1 = np.abs(members - obs[np.newaxis]).mean(axis=0)
            pair = np.abs(members[:, np.newaxis, :]
                          - members[np.newaxis, :, :]).sum(axis=(0, 1))
            want = term1 - pair / (2.0 * s * (s - 1))
            worst = max(worst, float(np.max(np.abs(got - want))))
        assert worst <= 1e-12

        obs = np.array([1.5, 0.0, 7.25, 128.0])
        perfect = np.tile(obs, (4, 1))
        assert np.all(crps_fair(perfect, obs) == 0.0)
        assert time.perf_counter() - start < 10.0


# ---------------------------------------------------------------------------
# 2. CSI and FSS accumulators against loop-based oracles


def _oracle_csi(fields, threshold):
    tp = fp = fn = 0.0
    for forecast, obs, mask, q in fields:
        h, w = obs.shape
        for i in range(h):
            for j in range(w):
                if not mask[i, j]:
                    continue
                f_event = forecast[i, j] >= threshold
                o_event = obs[i, j] >= threshold
                if f_event and o_event:
                    tp += 1.0 / q
                elif f_event:
                    fp += 1.0 / q
                elif o_event:
                    fn += 1.0 / q
    return tp / (tp + fp + fn)


def _oracle_fss(fields, threshold, size):
    stride = -(-size // 4)
    fbs = worst = 0.0
    for members, obs, mask, q in fields:
        h, w = obs.shape
        for i in range(0, h - size + 1, stride):
            for j in range(0, w - size + 1, stride):
                block = np.s_[i:i + size, j:j + size]
                if not mask[block].all():
                    continue
                p_fcst = float((members[(np.s_[:],) + block] >= threshold)
                               .mean(axis=0).mean())
                p_obs = float((obs[block] >= threshold).mean())
                fbs += (p_fcst - p_obs) ** 2 / q
                worst += (p_fcst ** 2 + p_obs ** 2) / q
    return 1.0 - fbs / worst


def test_criterion_2_csi_fss_match_brute_force(capsys):
    with reported(capsys, 2, "accumulated CSI and FSS match direct-formula "
                             "oracles on 100 masked weighted examples"):
        rng = np.random.default_rng(20)
        det_fields, ens_fields = [], []
        counts = CsiCounts()
        acc4, acc8 = FssAccumulator(), FssAccumulator()
        for _ in range(100):
            forecast = rng.uniform(0.0, 2.0, size=(16, 16))
            members = rng.uniform(0.0, 2.0, size=(3, 16, 16))
            obs = rng.uniform(0.0, 2.0, size=(16, 16))
            mask = rng.random((16, 16)) < 0.97
            q = float(rng.uniform(0.2, 1.0))
            det_fields.append((forecast, obs, mask, q))
            ens_fields.append((members, obs, mask, q))
            counts = counts + csi_accumulate(forecast, obs, 1.0,
                                             cell_weights(mask, q))
            acc4 = acc4 + fss_accumulate(members, obs, 1.0, 4, mask=mask,
                                         inclusion_probability=q)
            acc8 = acc8 + fss_accumulate(members, obs, 1.0, 8, mask=mask,
                                         inclusion_probability=q)
        assert abs(csi(counts) - _oracle_csi(det_fields, 1.0)) <= 1e-12
        assert abs(acc4.fss - _oracle_fss(ens_fields, 1.0, 4)) <= 1e-12
        assert abs(acc8.fss - _oracle_fss(ens_fields, 1.0, 8)) <= 1e-12


# ---------------------------------------------------------------------------
# 3. Importance sampling reproduces the population total


def _rain_total(entry):
    e = entry.example
    values = np.concatenate([e.context_values, e.target_values])
    masks = np.concatenate([e.context_masks, e.target_masks])
    return float(values[masks].sum())


def test_criterion_3_importance_sampling_unbiased(capsys):
    with reported(capsys, 3, "weighted rainfall total over 200 rebuilds "
                             "lands within 3 standard errors of the census"):
        start = time.perf_counter()
        population = synthetic_corpus(4, n_frames=8, height=32, width=32,
                                      seed=7)
        geometry = dict(saturation=1.0, spatial_offset=8, random_offset=False,
                        temporal_offset=300, frames=4, height=16, width=16)
        census = build_subsampled_dataset(
            population, SamplingParams(multiplier=0.0, q_min=1.0, **geometry),
            "eval", seed=0, n_context=2, n_targets=2)
        truth = sum(_rain_total(e) for e in census)
        assert len(census) == 180  # the q_min=1 build keeps every candidate

        thinned = SamplingParams(multiplier=0.5, q_min=0.05, **geometry)
        estimates = []
        for seed in range(200):
            kept = build_subsampled_dataset(population, thinned, "eval",
                                            seed=seed, n_context=2,
                                            n_targets=2)
            estimates.append(weighted_estimate(
                [_rain_total(e) for e in kept],
                [e.inclusion_probability for e in kept]))
        estimates = np.asarray(estimates)
        stderr = estimates.std(ddof=1) / np.sqrt(len(estimates))
        assert stderr > 0.0  # the thinning really is stochastic
        assert abs(estimates.mean() - truth) <= 3.0 * stderr
        assert time.perf_counter() - start < 60.0


# ---------------------------------------------------------------------------
# 4. Rank histogram and reliability for a calibrated ensemble


def test_criterion_4_calibration_machinery(capsys):
    with reported(capsys, 4, "calibrated ensembles give a flat rank "
                             "histogram and a diagonal reliability curve "
                             "within 3 sigma"):
        s = 7
        chunk = 26_000
        rng = np.random.default_rng(42)
        hist = RankHistogram(np.zeros(s + 1, dtype=np.int64))
        for key in range(4):
            members = rng.normal(size=(s, chunk))
            obs = rng.normal(size=chunk)
            hist = hist + rank_histogram(members, obs, seed=0,
                                         example_key=key)
        n_cells = 4 * chunk
        assert n_cells >= 100_000 and hist.total == n_cells
        p_bin = 1.0 / (s + 1)
        sigma = np.sqrt(n_cells * p_bin * (1.0 - p_bin))
        assert np.all(np.abs(hist.counts - n_cells * p_bin) <= 3.0 * sigma)

        # Issued probability k/S with the observation drawn uniformly from
        # the member values themselves, so the true event rate is exactly
        # the issued probability in every bin.
        s2, per_bin = 4, 20_000
        rng = np.random.default_rng(11)
        table = ReliabilityTable.empty(s2)
        for k in range(s2 + 1):
            members = np.zeros((s2, per_bin))
            members[:k] = 2.0
            obs = members[rng.integers(0, s2, size=per_bin),
                          np.arange(per_bin)]
            table = table + reliability_accumulate(members, obs, 1.0,
                                                   np.ones(per_bin))
        assert np.all(table.pred_weight > 0.0)
        freq = table.observed_frequency
        for k, p in enumerate(table.probabilities):
            sigma_k = np.sqrt(p * (1.0 - p) / table.pred_weight[k])
            assert abs(freq[k] - p) <= 3.0 * sigma_k


# ---------------------------------------------------------------------------
# 5. Spectral binning: conservation and localization


def test_criterion_5_psd_conservation_and_localization(capsys):
    with reported(capsys, 5, "ring powers conserve total power, localize a "
                             "pure cosine, and expose block-average "
                             "truncation below 16 km"):
        rng = np.random.default_rng(5)
        field = rng.exponential(1.0, size=(64, 64))
        curve = psd_radial(field)
        centered_power = float(((field - field.mean()) ** 2).sum())
        rel = abs(curve.total_power.sum() - centered_power) / centered_power
        assert rel <= 1e-9

        cols = np.arange(64)
        cosine = 1.0 + np.cos(2.0 * np.pi * 8.0 * cols / 64.0)
        cosine = np.broadcast_to(cosine, (64, 64))
        ring_power = psd_radial(cosine).total_power
        assert ring_power[7] / ring_power.sum() >= 0.999  # ring 8

        n, block = 128, 8
        originals, blocked = [], []
        for i in range(5):
            rng = np.random.default_rng(200 + i)
            frame = rng.exponential(1.0, size=(n, n))
            coarse = frame.reshape(n // block, block,
                                   n // block, block).mean(axis=(1, 3))
            originals.append(psd_radial(frame, spacing_km=1.0))
            blocked.append(psd_radial(np.kron(coarse, np.ones((block, block))),
                                      spacing_km=1.0))
        orig, blk = average_psd(originals), average_psd(blocked)
        fine = orig.wavelength_km < 16.0
        high_ratio = blk.total_power[fine].sum() / orig.total_power[fine].sum()
        low_ratio = (blk.total_power[~fine].sum()
                     / orig.total_power[~fine].sum())
        assert high_ratio < 0.05      # the short-wavelength tail collapses
        assert low_ratio > 0.4        # while the long wavelengths survive
        assert high_ratio < low_ratio / 10.0


# ---------------------------------------------------------------------------
# 6. Permutation test extremes and the exact binomial interval


def test_criterion_6_statistics(capsys):
    with reported(capsys, 6, "permutation p-values hit both extremes and "
                             "the binomial lower bound matches the closed "
                             "form"):
        units = tuple(range(26))
        diffs = np.linspace(1.0, 3.5, 26)
        same = PairedSample(units, diffs, diffs)
        assert paired_permutation_test(same, n_perm=1_000_000, seed=0) == 1.0

        start = time.perf_counter()
        separated = PairedSample(units, diffs, np.zeros(26))
        p = paired_permutation_test(separated, n_perm=1_000_000, seed=0)
        assert p == 1.0 / 1_000_001
        assert time.perf_counter() - start < 30.0

        lo, hi = clopper_pearson(56, 56, alpha=0.05)
        assert hi == 1.0
        assert abs(lo - 0.9363) <= 1e-4
        assert abs(lo - 0.025 ** (1.0 / 56.0)) <= 1e-12


# ---------------------------------------------------------------------------
# 7. Training-objective formulas


def test_criterion_7_loss_math(capsys):
    with reported(capsys, 7, "loss formulas reproduce worked examples "
                             "exactly and the hinge is zero iff margins "
                             "hold"):
        assert rain_weight(0.0) == 1.0
        assert rain_weight(23.0) == 24.0
        assert rain_weight(1000.0) == 24.0

        target = np.array([[1.0]])
        assert grid_cell_regularizer(np.array([[[0.0]], [[2.0]]]), target) == 0.0
        assert grid_cell_regularizer(np.array([[[0.0]], [[0.0]]]), target) == 2.0
        samples = np.array([[[1.0, 3.0]], [[3.0, 1.0]]])
        assert grid_cell_regularizer(samples, np.array([[2.0, 2.0]])) == 0.0

        assert hinge_discriminator_loss([1.0, 2.5], [-1.0, -4.0]) == 0.0
        assert hinge_discriminator_loss([0.0], [0.0]) == 2.0
        assert hinge_discriminator_loss([2.0], [-3.0]) == 0.0

        assert generator_objective([0.0], [0.0], reg=0.0, lam=20.0) == 0.0
        assert generator_objective([1.0], [1.0], reg=0.1, lam=20.0) == 0.0
        lower = generator_objective([1.0], [1.0], reg=0.3, lam=20.0)
        assert lower < generator_objective([1.0], [1.0], reg=0.2, lam=20.0)

        rng = np.random.default_rng(7)
        for case in range(1000):
            n_real = int(rng.integers(1, 8))
            n_fake = int(rng.integers(1, 8))
            if case % 2:
                real = 1.0 + rng.uniform(0.0, 2.0, n_real)
                fake = -1.0 - rng.uniform(0.0, 2.0, n_fake)
            else:
                real = rng.uniform(-3.0, 3.0, n_real)
                fake = rng.uniform(-3.0, 3.0, n_fake)
            satisfied = bool((real >= 1.0).all() and (fake <= -1.0).all())
            assert (hinge_discriminator_loss(real, fake) == 0.0) == satisfied


# ---------------------------------------------------------------------------
# 8. The full pipeline on an advecting-blob corpus


def _write_corpus(directory: Path, **kwargs) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, seq in enumerate(synthetic_corpus(**kwargs)):
        path = directory / f"stack{i:03d}.rgf"
        write_radar_stack(path, seq)
        paths.append(str(path))
    return paths


def _run(argv: list[str]) -> str:
    buffer = io.StringIO()
    with redirect_stdout(buffer):
        code = cli(argv)
    assert code == 0, f"{argv[:2]} exited {code}:\n{buffer.getvalue()}"
    return buffer.getvalue()


def _manifest_rows(path: Path) -> int:
    lines = [line for line in path.read_text().splitlines()
             if line and not line.startswith(("#", "source"))]
    return len(lines)


def _csi_by_cell(path: Path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(line for line in fh
                               if not line.startswith("#")))
    header, out = rows[0], {}
    for row in rows[1:]:
        record = dict(zip(header, row))
        if record["metric"] == "csi":
            key = (float(record["threshold"]),
                   float(record["lead_time_minutes"]))
            out[key] = float(record["value"])
    return out


EXPECTED_CSVS = {"metrics.csv", "reliability.csv", "rank_histogram.csv",
                 "scores_mse.csv", "scores_crps.csv", "scores_csi_1mm.csv",
                 "scores_csi_4mm.csv", "scores_csi_8mm.csv"}


def test_criterion_8_pipeline_recovers_advection(capsys, tmp_path_factory):
    with reported(capsys, 8, "build/run/evaluate/compare beats static "
                             "persistence at every lead with p < 0.01 in "
                             "under 5 minutes"):
        start = time.perf_counter()
        work = tmp_path_factory.mktemp("pipeline")
        stacks = _write_corpus(work / "corpus", n_sequences=48, n_frames=12,
                               height=48, width=48, seed=0,
                               start_spacing=4 * 86400 + 3600, n_blobs=8)
        manifest = work / "manifest.tsv"
        _run(["dataset", "build", "--input", *stacks,
              "--output", str(manifest), "--preset", "uk-train",
              "--mode", "eval", "--seed", "0", "--n-context", "4",
              "--n-targets", "6", "--frames", "10", "--height", "32",
              "--width", "32", "--spatial-offset", "16",
              "--temporal-offset", "300", "--q-min", "1.0",
              "--random-offset", "0"])
        assert _manifest_rows(manifest) >= 500

        eval_flags = ["--thresholds", "1,4,8", "--scales", "1,4,16",
                      "--window", "16", "--workers", "2"]
        for method, extra in (("eulerian", []),
                              ("lagrangian", ["--max-shift", "4"]),
                              ("perturbed", ["--max-shift", "4",
                                             "--members", "4",
                                             "--sigma", "1.0"])):
            _run(["baseline", "run", "--manifest", str(manifest),
                  "--output", str(work / f"fc_{method}"),
                  "--method", method, "--seed", "0", *extra])
            _run(["evaluate", "--manifest", str(manifest),
                  "--forecasts", str(work / f"fc_{method}"),
                  "--output", str(work / f"scores_{method}"), *eval_flags])
            names = {p.name for p in (work / f"scores_{method}").iterdir()}
            assert names == EXPECTED_CSVS

        static = _csi_by_cell(work / "scores_eulerian" / "metrics.csv")
        advected = _csi_by_cell(work / "scores_lagrangian" / "metrics.csv")
        assert set(static) == set(advected) and len(static) == 18
        for cell in static:
            assert advected[cell] > static[cell], cell

        report = _run(["compare",
                       "--scores-a", str(work / "scores_lagrangian"
                                         / "scores_csi_1mm.csv"),
                       "--scores-b", str(work / "scores_eulerian"
                                         / "scores_csi_1mm.csv"),
                       "--n-perm", "1000000", "--seed", "0",
                       "--direction", "higher-better"])
        p_value = float(re.search(r"permutation p-value: ([0-9.e+-]+)",
                                  report).group(1))
        assert p_value < 0.01
        assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------------------
# 9. Byte-identical reruns for every command


def _tree_bytes(directory: Path) -> dict:
    return {p.name: p.read_bytes()
            for p in sorted(directory.iterdir()) if p.is_file()}


def test_criterion_9_reruns_are_byte_identical(capsys, tmp_path_factory):
    with reported(capsys, 9, "every command rerun with the same seeds and "
                             "config writes byte-identical output"):
        work = tmp_path_factory.mktemp("determinism")
        stacks = _write_corpus(work / "corpus", n_sequences=10, n_frames=10,
                               height=32, width=32, seed=3,
                               start_spacing=4 * 86400 + 3600)

        build = ["dataset", "build", "--input", *stacks, "--preset",
                 "uk-train", "--mode", "eval", "--seed", "1",
                 "--n-context", "3", "--n-targets", "4", "--frames", "8",
                 "--height", "24", "--width", "24", "--spatial-offset", "8",
                 "--temporal-offset", "300", "--q-min", "1.0",
                 "--random-offset", "0"]
        for attempt in ("a", "b"):
            _run(build + ["--output", str(work / f"manifest_{attempt}.tsv")])
        assert ((work / "manifest_a.tsv").read_bytes()
                == (work / "manifest_b.tsv").read_bytes())
        manifest = str(work / "manifest_a.tsv")

        assert (_run(["dataset", "stats", "--manifest", manifest])
                == _run(["dataset", "stats", "--manifest", manifest]))

        for method, extra in (("eulerian", []),
                              ("lagrangian", ["--max-shift", "4"]),
                              ("perturbed", ["--max-shift", "4",
                                             "--members", "3",
                                             "--sigma", "1.0"])):
            for attempt in ("a", "b"):
                _run(["baseline", "run", "--manifest", manifest,
                      "--output", str(work / f"fc_{method}_{attempt}"),
                      "--method", method, "--seed", "2", *extra])
            assert (_tree_bytes(work / f"fc_{method}_a")
                    == _tree_bytes(work / f"fc_{method}_b"))

        eval_base = ["evaluate", "--manifest", manifest,
                     "--forecasts", str(work / "fc_perturbed_a"),
                     "--thresholds", "1,4", "--scales", "1,4",
                     "--window", "16"]
        for attempt, workers in (("a", "1"), ("b", "1"), ("c", "3")):
            _run(eval_base + ["--output", str(work / f"scores_{attempt}"),
                              "--workers", workers])
        reference = _tree_bytes(work / "scores_a")
        assert set(reference) == EXPECTED_CSVS - {"scores_csi_8mm.csv"}
        assert _tree_bytes(work / "scores_b") == reference
        assert _tree_bytes(work / "scores_c") == reference  # worker count

        for attempt in ("d", "e"):
            _run(["evaluate", "--manifest", manifest,
                  "--forecasts", str(work / "fc_eulerian_a"),
                  "--output", str(work / f"scores_{attempt}"),
                  "--thresholds", "1,4", "--scales", "1,4",
                  "--window", "16"])
        compare = ["compare", "--scores-a",
                   str(work / "scores_a" / "scores_mse.csv"),
                   "--scores-b", str(work / "scores_d" / "scores_mse.csv"),
                   "--n-perm", "20000", "--seed", "5"]
        assert _run(compare) == _run(compare)

        for attempt in ("a", "b"):
            _run(["psd", "--model", stacks[0], "--obs", stacks[1],
                  "--output", str(work / f"psd_{attempt}.csv"),
                  "--spacing-km", "1.0"])
        assert ((work / "psd_a.csv").read_bytes()
                == (work / "psd_b.csv").read_bytes())

        loss = ["loss", "eval", "--d-real", "0.5,2.0", "--d-fake=-0.5,-2.0"]
        assert _run(loss) == _run(loss)
