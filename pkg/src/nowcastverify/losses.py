"""Adversarial training objectives as pure functions.

Nothing here touches a network: the generator objective, the hinge
discriminator losses, and the rain-weighted grid-cell regularizer are
implemented over plain arrays of scores and fields so the loss
arithmetic can be verified in isolation.  Discriminator scores are
opaque finite reals; generator outputs are S sampled rate stacks per
context window, S = 6 by default.

The rain weight clips at 24: w(y) = min(y + 1, 24).  The source formula
this follows is typeset as a max, which would be the constant 24 for all
ordinary rates and contradicts the stated intent of clipping large
values, so the clipped reading is the default and the literal variant
stays available via ``clipped=False``.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyDataError

DEFAULT_GENERATOR_SAMPLES = 6
DEFAULT_REGULARIZER_WEIGHT = 20.0
RAIN_WEIGHT_CEILING = 24.0


def rain_weight(rate, clipped: bool = True):
    """Loss weight emphasizing heavier rain, saturating at 24 mm/hr."""
    y = np.asarray(rate, dtype=np.float64)
    if y.size and y.min() < 0.0:
        raise ValueError("rates must be nonnegative; mask cells upstream")
    combine = np.minimum if clipped else np.maximum
    return combine(y + 1.0, RAIN_WEIGHT_CEILING)


def _scores(name, scores):
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError(f"{name} must be nonempty")
    if not np.isfinite(s).all():
        raise ValueError(f"{name} must be finite")
    return s


def grid_cell_regularizer(samples, target, mask=None,
                          clipped: bool = True) -> float:
    """Rain-weighted L1 gap between the sample mean and the target.

    ``samples`` has shape (S, ...) over any target geometry; the result
    is mean(|mean_S(samples) - target| * w(target)) over valid cells,
    with masked cells excluded from both the sum and the normalizer.
    """
    x = np.asarray(samples, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.ndim == 0 or x.shape[1:] != y.shape:
        raise ValueError(
            f"samples shape {x.shape} must be (S,) + target shape {y.shape}")
    if mask is None:
        valid = np.ones(y.shape, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != y.shape:
            raise ValueError(
                f"mask shape {valid.shape} != target shape {y.shape}")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyDataError("no valid cells to regularize")
    gap = np.abs(x.mean(axis=0) - y) * rain_weight(np.where(valid, y, 0.0),
                                                   clipped=clipped)
    return float(gap[valid].sum() / n_valid)


def hinge_discriminator_loss(real_scores, fake_scores) -> float:
    """Margin loss pushing real scores above +1 and fake below -1.

    Identical form for spatial and temporal discriminators:
    mean(relu(1 - real)) + mean(relu(1 + fake)).
    """
    real = _scores("real_scores", real_scores)
    fake = _scores("fake_scores", fake_scores)
    return float(np.maximum(0.0, 1.0 - real).mean()
                 + np.maximum(0.0, 1.0 + fake).mean())


def generator_objective(d_fake, t_fake, reg: float,
                        lam: float = DEFAULT_REGULARIZER_WEIGHT) -> float:
    """Value the generator maximizes: fooling scores less the weighted
    regularizer.  Minimizing trainers should negate."""
    d = _scores("d_fake", d_fake)
    t = _scores("t_fake", t_fake)
    if reg < 0.0:
        raise ValueError(f"regularizer value must be >= 0, got {reg}")
    if lam < 0.0:
        raise ValueError(f"regularizer weight must be >= 0, got {lam}")
    return float(d.mean() + t.mean() - lam * reg)
