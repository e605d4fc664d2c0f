"""Radially-averaged power spectra of full precipitation frames.

The sharpness of generated rain fields shows up in how variance is
distributed over spatial frequency: blurry outputs lose power at short
wavelengths long before any cell-level score notices.  This module
computes an isotropic summary of the 2-D discrete Fourier transform:

* subtract the frame mean (no taper is applied),
* power = |FFT|^2 / (H * W), so that the powers of all non-DC cells sum
  exactly to sum((x - mean)^2) (Parseval),
* each non-DC frequency cell is assigned to the integer ring
  round(sqrt(kx^2 + ky^2)) with k in cycles per frame along each axis,
* report per-ring totals, means, and cell counts; the wavelength of ring
  r is (longest frame side * spacing) / r.

Cell assignment partitions the non-DC plane: ring counts always sum to
H*W - 1.  Rectangular frames are accepted, but cycles-per-frame mix
physical scales when the sides differ, so wavelengths are only
physically meaningful for square frames.

Fields must be fully valid: spectra of partially-observed frames would
depend on how the holes are filled, so masked frames are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MaskedFrameError


@dataclass(frozen=True)
class PsdCurve:
    """Per-ring power of one frame (or an average over frames)."""

    total_power: np.ndarray   # indexed by ring - 1, ring = 1..n_rings
    counts: np.ndarray        # frequency cells per ring
    shape: tuple
    spacing_km: float = 1.0

    def __post_init__(self):
        total = np.asarray(self.total_power, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        if total.shape != counts.shape or total.ndim != 1:
            raise ValueError("per-ring arrays must be 1-D and equal length")
        total.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "total_power", total)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "shape", tuple(self.shape))

    @property
    def rings(self) -> np.ndarray:
        return np.arange(1, len(self.total_power) + 1)

    @property
    def mean_power(self) -> np.ndarray:
        out = np.full(len(self.total_power), np.nan)
        occupied = self.counts > 0
        out[occupied] = self.total_power[occupied] / self.counts[occupied]
        return out

    @property
    def extent_km(self) -> float:
        return max(self.shape) * self.spacing_km

    @property
    def wavelength_km(self) -> np.ndarray:
        return self.extent_km / self.rings


def _frame_values(field):
    values = getattr(field, "values", None)
    mask = getattr(field, "mask", None)
    if values is None:
        values = np.asarray(field, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"expected a 2-D frame, got shape {values.shape}")
        if (values < 0.0).any():
            raise MaskedFrameError(
                "frame contains negative (missing) cells; spectra need "
                "fully-observed frames")
        return values
    if not np.asarray(mask).all():
        n_bad = int((~np.asarray(mask)).sum())
        raise MaskedFrameError(
            f"frame has {n_bad} masked cells; spectra need fully-observed "
            "frames")
    return np.asarray(values, dtype=np.float64)


def _ring_indices(shape):
    h, w = shape
    ky = np.fft.fftfreq(h, d=1.0 / h)
    kx = np.fft.fftfreq(w, d=1.0 / w)
    return np.rint(np.hypot(ky[:, None], kx[None, :])).astype(np.int64)


def psd_radial(field, spacing_km: float = 1.0) -> PsdCurve:
    """Radially-binned spectral power of one fully-valid frame."""
    x = _frame_values(field)
    h, w = x.shape
    centered = x - x.mean()
    power = np.abs(np.fft.fft2(centered)) ** 2 / (h * w)
    rings = _ring_indices((h, w))
    n_rings = int(rings.max())
    flat_rings = rings.ravel()
    keep = flat_rings > 0  # drop the DC cell, ring 0's only occupant
    totals = np.bincount(flat_rings[keep], weights=power.ravel()[keep],
                         minlength=n_rings + 1)[1:]
    counts = np.bincount(flat_rings[keep], minlength=n_rings + 1)[1:]
    return PsdCurve(total_power=totals, counts=counts, shape=(h, w),
                    spacing_km=spacing_km)


def average_psd(curves) -> PsdCurve:
    """Mean curve over frames of identical geometry."""
    curves = list(curves)
    if not curves:
        raise ConfigError("cannot average an empty set of spectra")
    first = curves[0]
    for c in curves[1:]:
        if c.shape != first.shape or c.spacing_km != first.spacing_km:
            raise ConfigError(
                f"mixed geometries in spectrum average: {c.shape} @ "
                f"{c.spacing_km} km vs {first.shape} @ {first.spacing_km} km")
    total = np.mean([c.total_power for c in curves], axis=0)
    return PsdCurve(total_power=total, counts=first.counts,
                    shape=first.shape, spacing_km=first.spacing_km)


def psd_compare(model_frames, obs_frames, spacing_km: float = 1.0):
    """Mean spectra of two frame sets, for plotting against each other.

    Returns (model_curve, obs_curve).  Frame sets must be nonempty and
    share one grid shape.
    """
    model_frames = list(model_frames)
    obs_frames = list(obs_frames)
    if not model_frames or not obs_frames:
        raise ConfigError("both frame sets must be nonempty")
    model = average_psd(psd_radial(f, spacing_km) for f in model_frames)
    obs = average_psd(psd_radial(f, spacing_km) for f in obs_frames)
    if model.shape != obs.shape:
        raise ConfigError(
            f"model frames are {model.shape} but observations are {obs.shape}")
    return model, obs
