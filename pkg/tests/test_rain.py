import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dtdn.errors import ContractError, DataError, ParameterError
from dtdn.image import decode_p6, encode_p6, read_ppm, write_ppm
from dtdn.rain import (ANGLE_RANGES, CATEGORIES, DatasetManifest, EnrichmentPolicy,
                       EnrichmentRecord, ManifestEntry, StreakSpec, angle_in_category,
                       build_dataset, composite, enrich, is_heavy, load_pairs, partition_heavy,
                       procedural_texture, render_streak_layer)
from dtdn.seeding import derive_seed

SPEC = StreakSpec("right", 20.0, 10.0, 1.5, 6.0, 0.5)


def spec(density=5.0, category="vertical", angle=0.0):
    return StreakSpec(category, angle, 10.0, 1.5, density, 0.5)


@pytest.mark.parametrize("category,angle,ok", [
    ("left", -45.0, True), ("left", -10.0, True), ("left", -9.9, False),
    ("vertical", -10.0, False), ("vertical", 9.99, True), ("vertical", 10.0, False),
    ("right", 10.0, True), ("right", 45.0, True), ("right", 45.1, False),
])
def test_angle_categories(category, angle, ok):
    assert angle_in_category(angle, category) is ok


@pytest.mark.parametrize("kwargs", [
    dict(direction_category="up"), dict(angle=30.0), dict(density=-1.0),
    dict(intensity=0.0), dict(intensity=1.5), dict(length=0.0), dict(width=-1.0),
])
def test_streak_spec_validation(kwargs):
    base = dict(direction_category="vertical", angle=0.0, length=5.0, width=1.0,
                density=2.0, intensity=0.5)
    base.update(kwargs)
    with pytest.raises(ParameterError):
        StreakSpec(**base)


def test_record_validation():
    with pytest.raises(ParameterError):
        EnrichmentRecord(2, (SPEC,), 0)
    with pytest.raises(ParameterError):
        EnrichmentRecord(4, (SPEC,) * 4, 0)


def test_zero_density_layer_is_empty():
    assert not render_streak_layer(spec(0.0), 16, 16, 3).any()


def test_layer_deterministic_and_bounded():
    a = render_streak_layer(SPEC, 20, 24, 7)
    b = render_streak_layer(SPEC, 20, 24, 7)
    assert a.shape == (20, 24, 3)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, render_streak_layer(SPEC, 20, 24, 8))


def test_layer_too_small():
    with pytest.raises(ParameterError):
        render_streak_layer(SPEC, 7, 16, 0)


def test_density_doubles_mean_intensity():
    lo = np.mean([render_streak_layer(spec(5.0), 32, 32, s).mean() for s in range(20)])
    hi = np.mean([render_streak_layer(spec(10.0), 32, 32, s).mean() for s in range(20)])
    assert 1.7 <= hi / lo <= 2.3


def test_streak_orientation_follows_angle():
    # a single long vertical streak lights one column far more than one row
    layer = render_streak_layer(StreakSpec("vertical", 0.0, 30.0, 1.0, 1.0, 1.0), 32, 32, 1)[:, :, 0]
    assert layer.sum(axis=0).max() > layer.sum(axis=1).max()


def test_enrich_k_zero_is_identity():
    clean = procedural_texture(16, 0)
    seeds = [s for s in range(50) if enrich(clean, s)[1].k == 0]
    assert seeds
    for s in seeds:
        rainy, rec = enrich(clean, s)
        assert np.array_equal(rainy, clean)
        assert rec.specs == ()


def test_enrich_record_replay_and_categories():
    clean = procedural_texture(16, 1)
    for s in range(60):
        rainy, rec = enrich(clean, s, source_id="x")
        assert rec.seed == s and rec.source_id == "x"
        assert len(rec.specs) == rec.k
        cats = [sp.direction_category for sp in rec.specs]
        assert len(set(cats)) == len(cats)
        for sp in rec.specs:
            assert angle_in_category(sp.angle, sp.direction_category)
        assert np.array_equal(composite(clean, rec), rainy)
        assert rainy.min() >= 0 and rainy.max() <= 1


def test_enrich_k_max_policy():
    clean = procedural_texture(16, 1)
    assert {enrich(clean, s, EnrichmentPolicy(k_max=1))[1].k for s in range(40)} == {0, 1}
    with pytest.raises(ParameterError):
        enrich(clean, 0, EnrichmentPolicy(k_max=4))


def test_enrich_rejects_out_of_range_clean():
    with pytest.raises(ContractError):
        enrich(np.full((8, 8, 3), 1.5), 0)


def test_k_frequencies_near_uniform():
    clean = procedural_texture(8, 2)
    ks = np.array([enrich(clean, derive_seed(11, "acc", i))[1].k for i in range(400)])
    freq = np.bincount(ks, minlength=4) / len(ks)
    assert np.all((freq > 0.15) & (freq < 0.35))


@pytest.mark.parametrize("k,density,heavy", [
    (3, 1.0, True), (2, 0.5, True), (0, 0.0, False), (1, 8.0, True), (1, 7.999, False),
])
def test_heavy_rule(k, density, heavy):
    specs = tuple(spec(density / k if k else 0.0, c, a)
                  for c, a in zip(CATEGORIES[:k], (-20.0, 0.0, 20.0)[:k]))
    assert is_heavy(EnrichmentRecord(k, specs, 0)) is heavy


def test_heavy_threshold_is_knob():
    rec = EnrichmentRecord(1, (spec(3.0),), 0)
    assert not is_heavy(rec)
    assert is_heavy(rec, density_threshold=3.0)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(0, 12)), min_size=1, max_size=10),
       st.floats(0.5, 20))
def test_partition_heavy_properties(rows, threshold):
    entries = []
    for i, (k, d) in enumerate(rows):
        specs = tuple(spec(d, c, a) for c, a in zip(CATEGORIES[:k], (-20.0, 0.0, 20.0)[:k]))
        entries.append(ManifestEntry(f"clean/{i}.ppm", f"rainy/{i}.ppm", EnrichmentRecord(k, specs, i)))
    m = partition_heavy(DatasetManifest(entries), threshold)
    ids = {e.id for e in m.all()}
    assert {e.id for e in m.heavy()} <= ids
    for e in m.heavy():
        assert e.record.k >= 2 or e.record.total_density >= threshold
    for e in m.all():
        if not e.heavy:
            assert e.record.k < 2 and e.record.total_density < threshold


def test_procedural_texture_is_seeded():
    a, b = procedural_texture(16, 4), procedural_texture(16, 4)
    assert np.array_equal(a, b)
    assert a.shape == (16, 16, 3) and a.min() >= 0 and a.max() <= 1
    assert not np.array_equal(a, procedural_texture(16, 5))


def test_build_dataset_empty(tmp_path):
    m = build_dataset(tmp_path / "d", 0, 16, 0)
    assert len(m) == 0
    assert not (tmp_path / "d").exists()


def test_build_dataset_deterministic(tmp_path):
    a = build_dataset(tmp_path / "a", 12, 16, 3)
    b = build_dataset(tmp_path / "b", 12, 16, 3)
    assert a.dumps() == b.dumps()
    for sub in ("clean", "rainy"):
        for p in sorted((tmp_path / "a" / sub).iterdir()):
            assert p.read_bytes() == (tmp_path / "b" / sub / p.name).read_bytes()
    assert (tmp_path / "a" / "manifest.jsonl").read_text() == a.dumps()


def test_build_dataset_manifest_format_and_replay(tmp_path):
    m = build_dataset(tmp_path, 10, 16, 9)
    lines = (tmp_path / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 10
    for line, entry in zip(lines, m.entries):
        obj = json.loads(line)
        assert set(obj) == {"clean", "rainy", "k", "specs", "seed", "heavy"}
        assert obj["heavy"] == is_heavy(entry.record)
        clean = read_ppm(tmp_path / obj["clean"])
        replay = encode_p6(composite(clean, entry.record))
        assert replay == (tmp_path / obj["rainy"]).read_bytes()
    loaded = DatasetManifest.load(tmp_path / "manifest.jsonl")
    assert loaded.dumps() == m.dumps()
    rainy, clean = load_pairs(loaded)
    assert rainy.shape == clean.shape == (10, 16, 16, 3)


def test_build_dataset_heavy_fraction(tmp_path):
    m = build_dataset(tmp_path, 200, 32, 0)
    assert len(m.heavy()) >= 50
    assert {e.id for e in m.heavy()} <= {e.id for e in m.all()}


def test_build_dataset_from_clean_dir(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    for i in range(2):
        write_ppm(src / f"img{i}.ppm", procedural_texture(20, i))
    m = build_dataset(tmp_path / "out", 5, 16, 1, clean_dir=src)
    assert [e.record.source_id for e in m.entries] == ["img0", "img1", "img0", "img1", "img0"]
    assert read_ppm(tmp_path / "out" / m.entries[0].clean).shape == (16, 16, 3)


def test_build_dataset_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        build_dataset(tmp_path / "out", 3, 16, 0, clean_dir=tmp_path / "nope")


def test_manifest_load_bad_line(tmp_path):
    (tmp_path / "m.jsonl").write_text('{"clean": "a"}\n')
    with pytest.raises(DataError):
        DatasetManifest.load(tmp_path / "m.jsonl")


def test_derive_seed_stable():
    assert derive_seed(0, "enrich", 1) == derive_seed(0, "enrich", 1)
    assert len({derive_seed(0, "enrich", i) for i in range(100)}) == 100
    assert derive_seed(0, "enrich", 1) != derive_seed(0, "texture", 1)
    assert derive_seed(0, "enrich", 1) != derive_seed(1, "enrich", 1)
