"""Reference forecasts and synthetic radar data.

None of these is a serious nowcasting model.  They exist so the
verification stack can be exercised end-to-end with known-ordering
outcomes: a frozen-field (Eulerian) persistence forecast, an advecting
(Lagrangian) persistence forecast that should beat it on translating
rain, a noise-perturbed ensemble wrapper to give probabilistic scores
something dispersive to chew on, and a generator of advecting-blob
sequences with analytically known behaviour.

Flow is estimated as a single integer displacement per frame interval --
sub-cell advection would only add interpolation choices without
exercising any more of the metrics.  Cells newly exposed by displacement
are filled with zero rain and kept valid, so score weights stay stable
across leads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from ._rng import keyed_generator
from .errors import EnsembleSizeError, ShiftEstimationError
from .grid import EnsembleForecast, RadarField, RadarSequence, ingest_frame

_ENSEMBLE_NOISE_DOMAIN = 0x504E5345


@dataclass(frozen=True)
class MotionVector:
    """Integer cell displacement per frame interval."""

    dy: int
    dx: int

    @property
    def norm_squared(self) -> int:
        return self.dy * self.dy + self.dx * self.dx


def _values_and_mask(field):
    values = getattr(field, "values", None)
    mask = getattr(field, "mask", None)
    if values is None:
        raw = np.asarray(field, dtype=np.float64)
        mask = raw >= 0.0
        return np.where(mask, raw, 0.0), mask
    return (np.where(np.asarray(mask), np.asarray(values, dtype=np.float64),
                     0.0),
            np.asarray(mask, dtype=bool))


def _lead_seconds(n_lead, interval):
    if interval is None:
        return None
    return np.arange(1, n_lead + 1, dtype=np.int64) * int(interval)


def eulerian_persistence(context, n_lead: int,
                         interval=None) -> EnsembleForecast:
    """Repeat the last observed frame at every lead (S = 1)."""
    if len(context) == 0:
        raise ValueError("need at least one context frame")
    if n_lead < 1:
        raise ValueError(f"n_lead must be >= 1, got {n_lead}")
    values, mask = _values_and_mask(context[-1])
    members = np.broadcast_to(values, (1, n_lead) + values.shape).copy()
    masks = np.broadcast_to(mask, (n_lead,) + mask.shape).copy()
    return EnsembleForecast(members=members, mask=masks,
                            lead_seconds=_lead_seconds(n_lead, interval))


def _shift_with_fill(arr, dy, dx, fill):
    """Displace by (dy, dx), filling exposed cells with ``fill``."""
    out = np.full_like(arr, fill)
    h, w = arr.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = arr[ys_src, xs_src]
    return out


def estimate_shift(f1, f2, max_shift: int) -> MotionVector:
    """Integer displacement best aligning f1 onto f2.

    Each candidate (dy, dx) is scored by the normalized (Pearson)
    correlation between the displaced first field and the second over a
    fixed central region of the second frame, inset by ``max_shift`` so
    every candidate is judged on the same support.  An unnormalized
    product over the varying overlap systematically underestimates the
    motion of rain entering or leaving the frame, because larger shifts
    are charged for the overlap area they lose.  Masked cells on either
    side are excluded per candidate.  Ties go to the smallest
    displacement norm, then lexicographic (dy, dx); candidates with no
    jointly valid cells or zero variance score 0.
    """
    if max_shift < 0:
        raise ValueError(f"max_shift must be >= 0, got {max_shift}")
    v1, m1 = _values_and_mask(f1)
    v2, m2 = _values_and_mask(f2)
    if v1.shape != v2.shape:
        raise ValueError(f"field shapes differ: {v1.shape} vs {v2.shape}")
    h, w = v1.shape
    if h < 2 * max_shift + 1 or w < 2 * max_shift + 1:
        raise ValueError(
            f"grid {h}x{w} too small to search shifts up to {max_shift}")
    rows = slice(max_shift, h - max_shift)
    cols = slice(max_shift, w - max_shift)
    ref = v2[rows, cols]
    ref_mask = m2[rows, cols]
    best = None
    any_overlap = False
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            moved = v1[rows.start - dy:rows.stop - dy,
                       cols.start - dx:cols.stop - dx]
            moved_mask = m1[rows.start - dy:rows.stop - dy,
                            cols.start - dx:cols.stop - dx]
            valid = moved_mask & ref_mask
            score = 0.0
            if valid.any():
                any_overlap = True
                a = moved[valid]
                b = ref[valid]
                a = a - a.mean()
                b = b - b.mean()
                denom = np.sqrt((a * a).sum() * (b * b).sum())
                if denom > 0.0:
                    score = float((a * b).sum() / denom)
            norm = dy * dy + dx * dx
            if best is None or score > best[0] or (score == best[0]
                                                  and norm < best[1]):
                best = (score, norm, dy, dx)
    if not any_overlap:
        raise ShiftEstimationError(
            "no candidate displacement leaves any jointly valid cells")
    return MotionVector(dy=best[2], dx=best[3])


def lagrangian_persistence(context, n_lead: int, max_shift: int = 8,
                           interval=None) -> EnsembleForecast:
    """Advect the last frame by the displacement of the last two (S = 1).

    The per-interval shift is estimated once from the final context pair
    and applied cumulatively; exposed cells get zero rain and stay
    valid, while invalid source cells carry their mask along.
    """
    if len(context) < 2:
        raise ValueError("need at least two context frames to estimate motion")
    if n_lead < 1:
        raise ValueError(f"n_lead must be >= 1, got {n_lead}")
    motion = estimate_shift(context[-2], context[-1], max_shift)
    values, mask = _values_and_mask(context[-1])
    members = np.empty((1, n_lead) + values.shape)
    masks = np.empty((n_lead,) + values.shape, dtype=bool)
    for t in range(1, n_lead + 1):
        dy, dx = t * motion.dy, t * motion.dx
        masks[t - 1] = _shift_with_fill(mask, dy, dx, True)
        shifted = _shift_with_fill(values, dy, dx, 0.0)
        members[0, t - 1] = np.where(masks[t - 1], shifted, 0.0)
    return EnsembleForecast(members=members, mask=masks,
                            lead_seconds=_lead_seconds(n_lead, interval))


def perturbed_ensemble(base: EnsembleForecast, n_members: int,
                       noise_sigma: float, length_scale: int = 4,
                       seed: int = 0) -> EnsembleForecast:
    """Spread a deterministic forecast into S members with smooth noise.

    Each member and lead gets independent white noise averaged over a
    length_scale-cell moving window (circular boundaries) and rescaled so
    the per-cell marginal standard deviation is exactly ``noise_sigma``,
    then added to the base and clamped at zero.  The clamp biases member
    means slightly upward wherever the base is near zero; callers wanting
    calibrated spread should keep sigma modest.  Deterministic in
    (seed, member, lead) regardless of sharding.
    """
    if n_members < 2:
        raise EnsembleSizeError(
            f"a perturbed ensemble needs >= 2 members, got {n_members}")
    if noise_sigma < 0.0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if length_scale < 1:
        raise ValueError(f"length_scale must be >= 1, got {length_scale}")
    if base.n_members != 1:
        raise ValueError(
            f"base forecast must be deterministic (S=1), got S={base.n_members}")
    n_lead, h, w = base.members.shape[1:]
    members = np.empty((n_members, n_lead, h, w))
    for m in range(n_members):
        for t in range(n_lead):
            frame = base.members[0, t]
            if noise_sigma > 0.0:
                gen = keyed_generator(_ENSEMBLE_NOISE_DOMAIN, seed, m, t)
                white = gen.standard_normal((h, w))
                smooth = uniform_filter(white, size=length_scale, mode="wrap")
                frame = frame + noise_sigma * length_scale * smooth
            members[m, t] = np.where(base.mask[t], np.maximum(frame, 0.0), 0.0)
    return EnsembleForecast(members=members, mask=base.mask,
                            lead_seconds=base.lead_seconds)


def synthetic_event(n_frames: int, height: int, width: int, n_blobs: int = 3,
                    velocity=(1, 2), intensity: float = 20.0, seed: int = 0,
                    start_time: int = 1_567_296_000, interval: int = 300,
                    growth: float = 0.0) -> RadarSequence:
    """Gaussian rain blobs advecting at a constant integer velocity.

    Frame t evaluates each blob at its initial centre displaced by
    t * velocity, so for a single blob the whole frame is an exact
    integer translation of frame 0 (up to the boundary).  Values run
    through the standard quantization on ingest.  ``growth`` scales
    amplitudes by exp(growth * t) for optional build-up or decay.
    """
    if n_frames < 1 or height < 1 or width < 1:
        raise ValueError("dimensions must be positive")
    if intensity < 0.0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    gen = keyed_generator(0x53594E54, seed)
    centers = np.stack([gen.uniform(0, height, n_blobs),
                        gen.uniform(0, width, n_blobs)], axis=1)
    amplitudes = intensity * gen.uniform(0.5, 1.0, n_blobs)
    sigmas = gen.uniform(2.0, max(3.0, min(height, width) / 6.0), n_blobs)
    vy, vx = velocity
    yy, xx = np.mgrid[0:height, 0:width]
    frames = []
    for t in range(n_frames):
        total = np.zeros((height, width))
        for (cy, cx), amp, sig in zip(centers, amplitudes, sigmas):
            total += (amp * np.exp(growth * t)
                      * np.exp(-(((yy - cy - t * vy) ** 2
                                  + (xx - cx - t * vx) ** 2)
                                 / (2.0 * sig * sig))))
        frames.append(ingest_frame(total))
    timestamps = start_time + interval * np.arange(n_frames, dtype=np.int64)
    return RadarSequence(frames=tuple(frames), timestamps=timestamps,
                         interval=interval)


def synthetic_corpus(n_sequences: int, n_frames: int, height: int, width: int,
                     seed: int = 0, start_time: int = 1_546_300_800,
                     start_spacing: int = 2 * 86400 + 3600,
                     velocity=(1, 2), intensity: float = 20.0,
                     interval: int = 300, n_blobs: int = 3):
    """Sequences with staggered start times spanning several ISO weeks.

    Start times advance by ``start_spacing`` seconds (default just over
    two days) so a few dozen sequences cover enough distinct weeks for
    paired comparisons; blob layouts vary per sequence via the seed.
    """
    if n_sequences < 1:
        raise ValueError(f"n_sequences must be >= 1, got {n_sequences}")
    return [synthetic_event(n_frames, height, width, n_blobs=n_blobs,
                            seed=seed + 1000 * i,
                            start_time=start_time + i * start_spacing,
                            velocity=velocity, intensity=intensity,
                            interval=interval)
            for i in range(n_sequences)]
