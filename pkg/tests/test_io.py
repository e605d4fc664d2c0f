import numpy as np
import pytest

from conftest import random_rain, sequence_from
from nowcastverify.errors import FormatError
from nowcastverify.grid import EnsembleForecast
from nowcastverify.io import (
    ManifestEntry,
    load_example,
    read_ensemble,
    read_manifest,
    read_radar_stack,
    resolve_source,
    write_ensemble,
    write_manifest,
    write_radar_stack,
)


def test_radar_stack_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    stack = random_rain(rng, (5, 9, 7))
    stack[2, 3, 3] = -1.0  # a missing cell survives the trip
    seq = sequence_from(stack, start=1_700_000_000, interval=600)
    path = tmp_path / "stack.rgf1"
    write_radar_stack(path, seq)
    back = read_radar_stack(path)
    assert len(back) == 5 and back.grid_shape == (9, 7)
    assert back.interval == 600
    np.testing.assert_array_equal(back.timestamps, seq.timestamps)
    np.testing.assert_array_equal(back.values, seq.values)
    np.testing.assert_array_equal(back.masks, seq.masks)


def test_radar_stack_write_is_deterministic(tmp_path):
    seq = sequence_from(random_rain(np.random.default_rng(5), (3, 6, 6)))
    p1, p2 = tmp_path / "a.rgf1", tmp_path / "b.rgf1"
    write_radar_stack(p1, seq)
    write_radar_stack(p2, seq)
    assert p1.read_bytes() == p2.read_bytes()


def test_radar_stack_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.rgf1"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError, match="magic"):
        read_radar_stack(path)


def test_radar_stack_rejects_bad_version(tmp_path):
    good = tmp_path / "good.rgf1"
    write_radar_stack(good, sequence_from(np.zeros((1, 2, 2))))
    raw = bytearray(good.read_bytes())
    raw[4] = 9  # version field
    bad = tmp_path / "bad.rgf1"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version"):
        read_radar_stack(bad)


def test_radar_stack_rejects_truncation(tmp_path):
    good = tmp_path / "good.rgf1"
    write_radar_stack(good, sequence_from(np.zeros((2, 3, 3))))
    bad = tmp_path / "trunc.rgf1"
    bad.write_bytes(good.read_bytes()[:-5])
    with pytest.raises(FormatError, match="truncated"):
        read_radar_stack(bad)


def test_radar_stack_rejects_stray_negative(tmp_path):
    good = tmp_path / "good.rgf1"
    write_radar_stack(good, sequence_from(np.zeros((1, 2, 2))))
    raw = bytearray(good.read_bytes())
    # Patch the last float32 to -3.0: negative but not the missing sentinel.
    raw[-4:] = np.float32(-3.0).tobytes()
    bad = tmp_path / "bad.rgf1"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="sentinel"):
        read_radar_stack(bad)


def test_ensemble_roundtrip(tmp_path):
    rng = np.random.default_rng(11)
    members = rng.random((4, 3, 5, 5)) * 6.0
    mask = np.ones((3, 5, 5), dtype=bool)
    mask[1, 2, 2] = False
    members[:, ~mask] = 0.0
    fc = EnsembleForecast(members=members, mask=mask,
                          lead_seconds=np.array([300, 600, 900]))
    path = tmp_path / "fc.rge1"
    write_ensemble(path, fc)
    back = read_ensemble(path)
    assert back.n_members == 4 and back.n_leads == 3
    np.testing.assert_array_equal(back.mask, mask)
    np.testing.assert_array_equal(back.lead_seconds, fc.lead_seconds)
    np.testing.assert_allclose(back.members, members.astype(np.float32))


def test_ensemble_requires_leads(tmp_path):
    fc = EnsembleForecast(members=np.zeros((1, 1, 2, 2)))
    with pytest.raises(ValueError, match="lead_seconds"):
        write_ensemble(tmp_path / "x.rge1", fc)


def test_manifest_roundtrip(tmp_path):
    entries = [
        ManifestEntry("a.rgf1", 0, 0, 32, 64, 64, 4, 6, 0.25),
        ManifestEntry("sub/b.rgf1", 2, 64, 0, 64, 64, 4, 6, 6.103515625e-05),
    ]
    path = tmp_path / "data.manifest"
    write_manifest(path, entries, comment_lines=["seed=1"])
    back = read_manifest(path)
    assert back == entries
    # Full float precision survives the text trip.
    assert back[1].inclusion_probability == 6.103515625e-05


def test_manifest_rejects_bad_q(tmp_path):
    path = tmp_path / "data.manifest"
    path.write_text("a.rgf1\t0\t0\t0\t8\t8\t1\t1\t1.5\n")
    with pytest.raises(FormatError, match="outside"):
        read_manifest(path)


def test_manifest_rejects_short_line(tmp_path):
    path = tmp_path / "data.manifest"
    path.write_text("a.rgf1\t0\t0\n")
    with pytest.raises(FormatError, match="fields"):
        read_manifest(path)


def test_resolve_source_relative_to_manifest(tmp_path):
    entry = ManifestEntry("sub/a.rgf1", 0, 0, 0, 8, 8, 1, 1, 1.0)
    assert resolve_source(entry, tmp_path / "m" / "x.manifest") == tmp_path / "m" / "sub" / "a.rgf1"
    absolute = ManifestEntry("/data/a.rgf1", 0, 0, 0, 8, 8, 1, 1, 1.0)
    assert str(resolve_source(absolute, tmp_path / "x.manifest")) == "/data/a.rgf1"


def test_load_example_applies_entry(tmp_path):
    seq = sequence_from(random_rain(np.random.default_rng(2), (6, 12, 12)))
    entry = ManifestEntry("s.rgf1", 1, 2, 4, 8, 8, 2, 3, 0.5)
    ex = load_example(entry, seq)
    assert ex.origin == (1, 2, 4)
    assert ex.inclusion_probability == 0.5
    np.testing.assert_array_equal(ex.context[0].values, seq.frames[1].values[2:10, 4:12])
