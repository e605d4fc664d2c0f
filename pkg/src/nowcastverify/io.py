"""File formats: radar stacks, ensemble containers, dataset manifests.

Radar stack (``.rgf1``)
    Little-endian binary.  Header: magic ``RGF1``, u32 version (1), u32
    frame count T, u32 height H, u32 width W.  Then T int64 Unix-second
    timestamps and T*H*W float32 rain rates, frame-major then row-major.
    Missing cells are stored as -1.0.

Ensemble container (``.rge1``)
    Same style.  Header: magic ``RGE1``, u32 version (1), u32 member count
    S, u32 lead count N, u32 H, u32 W.  Then N int64 lead offsets (seconds
    after initialization) and S*N*H*W float32 values, member-major.  Cells
    masked in the shared validity mask are stored as -1.0 in every member.

Manifest
    Line-delimited text, one record per kept example, tab-separated fields
    ``source t0 y0 x0 h w M N q``.  ``source`` is a path (relative paths are
    resolved against the manifest's own directory), (t0, y0, x0) the crop
    origin, h/w the crop size, M/N the context/target frame counts, and q
    the inclusion probability, printed with full round-trip precision.
    Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .grid import MISSING_VALUE, EnsembleForecast, Example, RadarField, RadarSequence, extract_crop

RADAR_MAGIC = b"RGF1"
ENSEMBLE_MAGIC = b"RGE1"
FORMAT_VERSION = 1

_HEADER4 = struct.Struct("<4sIIII")
_HEADER5 = struct.Struct("<4sIIIII")


def write_radar_stack(path, seq: RadarSequence) -> None:
    """Write a sequence to ``path`` in the radar-stack format."""
    t, (h, w) = len(seq), seq.grid_shape
    with open(path, "wb") as fh:
        fh.write(_HEADER4.pack(RADAR_MAGIC, FORMAT_VERSION, t, h, w))
        fh.write(seq.timestamps.astype("<i8").tobytes())
        fh.write(seq.values.astype("<f4").tobytes())


def _read_exact(fh, n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return buf


def read_radar_stack(path, default_interval: int = 300) -> RadarSequence:
    """Read a radar stack.  ``default_interval`` applies only to single-frame files."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, t, h, w = _HEADER4.unpack(_read_exact(fh, _HEADER4.size, path, "header"))
        if magic != RADAR_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {RADAR_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if min(t, h, w) < 1:
            raise FormatError(f"{path}: degenerate dimensions T={t} H={h} W={w}")
        ts = np.frombuffer(_read_exact(fh, 8 * t, path, "timestamps"), dtype="<i8")
        raw = np.frombuffer(_read_exact(fh, 4 * t * h * w, path, "values"), dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after value block")
    values = raw.astype(np.float64).reshape(t, h, w)
    negative = values < 0.0
    if not np.array_equal(values[negative], np.full(int(negative.sum()), MISSING_VALUE)):
        raise FormatError(f"{path}: negative values other than the {MISSING_VALUE} sentinel")
    frames = []
    for k in range(t):
        try:
            frames.append(RadarField(values=values[k], mask=~negative[k]))
        except ValueError as exc:
            raise FormatError(f"{path}: frame {k}: {exc}") from exc
    interval = int(ts[1] - ts[0]) if t > 1 else int(default_interval)
    try:
        return RadarSequence(frames=tuple(frames), timestamps=ts, interval=interval)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_ensemble(path, forecast: EnsembleForecast) -> None:
    """Write an ensemble forecast to ``path``.

    The forecast must carry ``lead_seconds`` so files are self-describing.
    """
    if forecast.lead_seconds is None:
        raise ValueError("ensemble files require lead_seconds on the forecast")
    s, n = forecast.n_members, forecast.n_leads
    h, w = forecast.grid_shape
    stored = np.where(forecast.mask, forecast.members, MISSING_VALUE)
    with open(path, "wb") as fh:
        fh.write(_HEADER5.pack(ENSEMBLE_MAGIC, FORMAT_VERSION, s, n, h, w))
        fh.write(forecast.lead_seconds.astype("<i8").tobytes())
        fh.write(stored.astype("<f4").tobytes())


def read_ensemble(path) -> EnsembleForecast:
    path = Path(path)
    with open(path, "rb") as fh:
        magic, version, s, n, h, w = _HEADER5.unpack(_read_exact(fh, _HEADER5.size, path, "header"))
        if magic != ENSEMBLE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {ENSEMBLE_MAGIC!r}")
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if min(s, n, h, w) < 1:
            raise FormatError(f"{path}: degenerate dimensions S={s} N={n} H={h} W={w}")
        leads = np.frombuffer(_read_exact(fh, 8 * n, path, "lead offsets"), dtype="<i8")
        raw = np.frombuffer(_read_exact(fh, 4 * s * n * h * w, path, "values"), dtype="<f4")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after value block")
    members = raw.astype(np.float64).reshape(s, n, h, w)
    masks = members != MISSING_VALUE
    mask = masks[0]
    if not np.array_equal(masks, np.broadcast_to(mask, masks.shape)):
        raise FormatError(f"{path}: members disagree on which cells are masked")
    try:
        return EnsembleForecast(
            members=np.where(mask, members, 0.0), mask=mask, lead_seconds=leads)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset record: where an example lives and how likely it was kept."""

    source: str
    t0: int
    y0: int
    x0: int
    height: int
    width: int
    n_context: int
    n_targets: int
    inclusion_probability: float


def write_manifest(path, entries, comment_lines=()) -> None:
    lines = ["# nowcastverify-manifest 1"]
    lines += [f"# {c}" for c in comment_lines]
    lines.append("# source\tt0\ty0\tx0\th\tw\tM\tN\tq")
    for e in entries:
        lines.append("\t".join([
            e.source, str(e.t0), str(e.y0), str(e.x0), str(e.height), str(e.width),
            str(e.n_context), str(e.n_targets), repr(e.inclusion_probability),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 9:
            raise FormatError(f"{path}:{lineno}: expected 9 tab-separated fields, got {len(parts)}")
        try:
            entry = ManifestEntry(
                source=parts[0],
                t0=int(parts[1]), y0=int(parts[2]), x0=int(parts[3]),
                height=int(parts[4]), width=int(parts[5]),
                n_context=int(parts[6]), n_targets=int(parts[7]),
                inclusion_probability=float(parts[8]),
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
        if not (0.0 < entry.inclusion_probability <= 1.0):
            raise FormatError(f"{path}:{lineno}: q={entry.inclusion_probability} outside (0, 1]")
        entries.append(entry)
    return entries


def resolve_source(entry: ManifestEntry, manifest_path) -> Path:
    """Absolute path of an entry's source file, relative paths anchored at the manifest."""
    src = Path(entry.source)
    if src.is_absolute():
        return src
    return Path(manifest_path).parent / src


def load_example(entry: ManifestEntry, seq: RadarSequence) -> Example:
    """Materialize the example an entry describes from its (already read) source."""
    return extract_crop(
        seq, entry.t0, entry.y0, entry.x0,
        entry.n_context, entry.n_targets, entry.height, entry.width,
        inclusion_probability=entry.inclusion_probability,
    )
