"""Radar-grid data model.

Conventions
-----------
* Rain rates are in mm/hr, quantized to multiples of ``RATE_STEP`` (1/32
  mm/hr, ties rounding up) and capped at ``RATE_CAP`` (128 mm/hr).
* Cells with no radar observation are invalid: their mask entry is False and
  their stored value is the sentinel ``MISSING_VALUE`` (-1.0).
* Grids are indexed ``[row, col]`` with row 0 at the top; frame stacks are
  time-major.
* All container types are immutable after construction; their arrays are
  copied in and marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, IngestionError, RangeError

RATE_STEP = 1.0 / 32.0
RATE_CAP = 128.0
MISSING_VALUE = -1.0

#: Default example geometry: number of conditioning frames and of scored
#: target frames that follow them.
DEFAULT_CONTEXT_FRAMES = 4
DEFAULT_TARGET_FRAMES = 18

#: Default side length, in cells, of the central square used for scoring.
DEFAULT_SCORING_WINDOW = 64

#: Radar frame cadence assumed when a forecast carries no lead metadata.
DEFAULT_FRAME_SECONDS = 300


def _frozen(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RadarField:
    """One radar frame: a rectangular grid of rain rates plus a validity mask.

    Parameters
    ----------
    values : ndarray, shape (H, W)
        Rain rates in mm/hr.  Invalid cells must hold ``MISSING_VALUE``.
    mask : ndarray of bool, shape (H, W)
        True where the cell holds a valid rate.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        mask = _frozen(self.mask, bool)
        if values.ndim != 2 or values.size == 0:
            raise ValueError(f"values must be a nonempty 2-D grid, got shape {values.shape}")
        if mask.shape != values.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        valid = values[mask]
        if valid.size:
            if valid.min() < 0.0 or valid.max() > RATE_CAP:
                raise ValueError("valid rates must lie in [0, 128] mm/hr")
            steps = valid * 32.0
            if not np.array_equal(steps, np.rint(steps)):
                raise ValueError("valid rates must be exact multiples of 1/32 mm/hr")
        if not np.array_equal(values[~mask], np.full((~mask).sum(), MISSING_VALUE)):
            raise ValueError(f"invalid cells must store the sentinel {MISSING_VALUE}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def ingest_frame(raw) -> RadarField:
    """Convert raw rain-rate estimates to a canonical :class:`RadarField`.

    Negative entries are treated as missing observations.  Nonnegative
    entries are rounded to the nearest multiple of 1/32 mm/hr (ties round
    up) and capped at 128 mm/hr.  Idempotent on already-canonical values.

    Raises
    ------
    IngestionError
        If ``raw`` is not a rectangular 2-D array of finite numbers.
    """
    try:
        a = np.asarray(raw)
    except ValueError as exc:
        raise IngestionError(f"expected a rectangular 2-D array: {exc}") from exc
    if a.dtype == object or a.ndim != 2 or a.size == 0:
        raise IngestionError(f"expected a nonempty rectangular 2-D array, got shape {a.shape}")
    a = a.astype(np.float64)
    bad = ~np.isfinite(a)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise IngestionError(f"non-finite value at cell ({r}, {c})")
    mask = a >= 0.0
    quantized = np.floor(a * 32.0 + 0.5) / 32.0
    quantized = np.minimum(quantized, RATE_CAP)
    return RadarField(values=np.where(mask, quantized, MISSING_VALUE), mask=mask)


@dataclass(frozen=True)
class RadarSequence:
    """Evenly spaced radar frames over a fixed grid.

    ``timestamps`` are Unix seconds, strictly increasing with constant
    spacing equal to ``interval`` (seconds).  A single-frame sequence is
    allowed; ``interval`` then just declares the nominal spacing.
    """

    frames: tuple[RadarField, ...]
    timestamps: np.ndarray
    interval: int

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a sequence needs at least one frame")
        shape = frames[0].shape
        for f in frames:
            if f.shape != shape:
                raise ValueError("all frames in a sequence must share one grid shape")
        ts = _frozen(self.timestamps, np.int64)
        if ts.shape != (len(frames),):
            raise ValueError(f"need {len(frames)} timestamps, got shape {ts.shape}")
        if int(self.interval) <= 0:
            raise ValueError("interval must be a positive number of seconds")
        if len(frames) > 1:
            gaps = np.diff(ts)
            if not np.all(gaps == int(self.interval)):
                raise ValueError("timestamps must increase by exactly the frame interval")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "interval", int(self.interval))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.frames[0].shape

    @cached_property
    def values(self) -> np.ndarray:
        """(T, H, W) stack of frame values, read-only."""
        out = np.stack([f.values for f in self.frames])
        out.setflags(write=False)
        return out

    @cached_property
    def masks(self) -> np.ndarray:
        """(T, H, W) stack of validity masks, read-only."""
        out = np.stack([f.mask for f in self.frames])
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class Example:
    """A model input/output pair cropped from a source sequence.

    ``context`` holds the frames a model conditions on, ``targets`` the
    frames it is scored against.  ``origin`` records (t0, y0, x0): the frame
    index and top-left cell of the crop in its source sequence.
    ``inclusion_probability`` is the probability with which the subsampling
    scheme kept this example; scoring weights divide by it.
    """

    context: tuple[RadarField, ...]
    targets: tuple[RadarField, ...]
    origin: tuple[int, int, int] = (0, 0, 0)
    inclusion_probability: float = 1.0

    def __post_init__(self):
        context = tuple(self.context)
        targets = tuple(self.targets)
        if not context or not targets:
            raise ValueError("an example needs at least one context and one target frame")
        shape = context[0].shape
        for f in (*context, *targets):
            if f.shape != shape:
                raise ValueError("context and target frames must share one grid shape")
        q = float(self.inclusion_probability)
        if not (0.0 < q <= 1.0):
            raise ValueError(f"inclusion probability must lie in (0, 1], got {q}")
        t0, y0, x0 = (int(v) for v in self.origin)
        object.__setattr__(self, "context", context)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "origin", (t0, y0, x0))
        object.__setattr__(self, "inclusion_probability", q)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.context[0].shape

    @property
    def n_context(self) -> int:
        return len(self.context)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @cached_property
    def context_values(self) -> np.ndarray:
        out = np.stack([f.values for f in self.context])
        out.setflags(write=False)
        return out

    @cached_property
    def context_masks(self) -> np.ndarray:
        out = np.stack([f.mask for f in self.context])
        out.setflags(write=False)
        return out

    @cached_property
    def target_values(self) -> np.ndarray:
        out = np.stack([f.values for f in self.targets])
        out.setflags(write=False)
        return out

    @cached_property
    def target_masks(self) -> np.ndarray:
        out = np.stack([f.mask for f in self.targets])
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class EnsembleForecast:
    """S predicted target stacks for one example.

    ``members`` has shape (S, N, h, w); values are finite and nonnegative
    (forecast rates are not required to be quantized).  ``mask`` marks cells
    for which the forecast is defined, shared by all members; cells it marks
    invalid store 0.  ``lead_seconds`` gives each target frame's offset from
    the forecast initialization time.
    """

    members: np.ndarray
    mask: np.ndarray | None = None
    lead_seconds: np.ndarray | None = None

    def __post_init__(self):
        members = _frozen(self.members, np.float64)
        if members.ndim != 4 or members.shape[0] < 1:
            raise ValueError(f"members must have shape (S, N, h, w), got {members.shape}")
        if not np.isfinite(members).all():
            raise ValueError("forecast values must be finite")
        if members.min() < 0.0:
            raise ValueError("forecast values must be nonnegative")
        if self.mask is None:
            mask = np.ones(members.shape[1:], dtype=bool)
            mask.setflags(write=False)
        else:
            mask = _frozen(self.mask, bool)
            if mask.shape != members.shape[1:]:
                raise ValueError(f"mask shape {mask.shape} != member shape {members.shape[1:]}")
            if members[:, ~mask].any():
                raise ValueError("cells the mask marks invalid must store 0")
        if self.lead_seconds is None:
            leads = None
        else:
            leads = _frozen(self.lead_seconds, np.int64)
            if leads.shape != (members.shape[1],):
                raise ValueError(f"need {members.shape[1]} lead offsets, got shape {leads.shape}")
            if np.any(np.diff(leads) <= 0) or leads[0] <= 0:
                raise ValueError("lead offsets must be positive and strictly increasing")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "lead_seconds", leads)

    @property
    def n_members(self) -> int:
        return self.members.shape[0]

    @property
    def n_leads(self) -> int:
        return self.members.shape[1]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.members.shape[2], self.members.shape[3]


def extract_crop(seq: RadarSequence, t0: int, y0: int, x0: int,
                 n_context: int, n_targets: int, height: int, width: int,
                 inclusion_probability: float = 1.0) -> Example:
    """Cut an :class:`Example` out of a sequence.

    The crop spans frames ``t0 .. t0 + n_context + n_targets`` and cells
    ``[y0:y0+height, x0:x0+width]``.  Raises :class:`RangeError` if any part
    falls outside the source sequence.
    """
    for name, v in (("t0", t0), ("y0", y0), ("x0", x0)):
        if v < 0:
            raise RangeError(f"{name} must be nonnegative, got {v}")
    if n_context < 1 or n_targets < 1 or height < 1 or width < 1:
        raise ValueError("crop extents must be positive")
    t1 = t0 + n_context + n_targets
    big_h, big_w = seq.grid_shape
    if t1 > len(seq):
        raise RangeError(f"frames [{t0}, {t1}) exceed sequence length {len(seq)}")
    if y0 + height > big_h or x0 + width > big_w:
        raise RangeError(
            f"window [{y0}:{y0 + height}, {x0}:{x0 + width}] exceeds grid {big_h}x{big_w}")
    rows = slice(y0, y0 + height)
    cols = slice(x0, x0 + width)
    cropped = [
        RadarField(values=f.values[rows, cols], mask=f.mask[rows, cols])
        for f in seq.frames[t0:t1]
    ]
    return Example(
        context=tuple(cropped[:n_context]),
        targets=tuple(cropped[n_context:]),
        origin=(t0, y0, x0),
        inclusion_probability=inclusion_probability,
    )


def central_window(shape: tuple[int, int], side: int) -> tuple[slice, slice]:
    """Row and column slices of the centered ``side`` x ``side`` square.

    ``shape`` may be a (height, width) pair or anything with a ``grid_shape``
    attribute.  The margins ``height - side`` and ``width - side`` must be
    even so the window is exactly centered.
    """
    if hasattr(shape, "grid_shape"):
        shape = shape.grid_shape
    height, width = (int(v) for v in shape)
    side = int(side)
    if side < 1:
        raise ConfigError(f"window side must be positive, got {side}")
    if side > height or side > width:
        raise ConfigError(f"window side {side} exceeds grid {height}x{width}")
    if (height - side) % 2 or (width - side) % 2:
        raise ConfigError(
            f"grid {height}x{width} cannot center a {side}x{side} window: odd margin")
    r0 = (height - side) // 2
    c0 = (width - side) // 2
    return slice(r0, r0 + side), slice(c0, c0 + side)
