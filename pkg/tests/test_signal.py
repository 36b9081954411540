"""Signal pipeline tests: normalization, framing, windows, synthetic data."""

import numpy as np
import pytest

from bearingedge.errors import (
    DegenerateSignal,
    InsufficientData,
    InvalidClass,
    OutOfRange,
)
from bearingedge.signal import (
    FAULT_CLASSES,
    NUM_CLASSES,
    Recording,
    build_dataset,
    frame_direct,
    generate_synthetic,
    label_by_id,
    label_by_name,
    normalize,
    read_manifest,
    read_recording_csv,
    sample_windows,
    write_manifest,
    write_recording_csv,
)


def test_fault_class_table():
    assert NUM_CLASSES == 10
    assert [l.id for l in FAULT_CLASSES] == list(range(10))
    assert FAULT_CLASSES[0].name == "00-Normal"
    assert FAULT_CLASSES[7].name == "21-Ball"
    assert FAULT_CLASSES[7].annotation == "0.021 inch ball fault"
    assert FAULT_CLASSES[9].name == "21-OuterRace6"
    assert label_by_name("14-InnerRace").id == 5
    with pytest.raises(InvalidClass):
        label_by_id(10)


def test_normalize_basic():
    out, params = normalize([2, 4, 6])
    assert np.allclose(out, [0.0, 0.5, 1.0])
    assert params.min == 2 and params.max == 6


def test_normalize_rejects_constant_signal():
    with pytest.raises(DegenerateSignal):
        normalize([5, 5, 5])


def test_normalize_matches_reference_on_sweep():
    # one-line reference implementation as the oracle
    t = np.linspace(0, 1, 1000)
    x = np.sin(2 * np.pi * (2 + 8 * t) * t) * (0.5 + t)
    expected = (x - x.min()) / (x.max() - x.min())
    out, _ = normalize(x)
    assert np.array_equal(out, expected)
    assert out.min() == 0.0 and out.max() == 1.0
    assert np.array_equal(np.argsort(out, kind="stable"),
                          np.argsort(x, kind="stable"))


def test_normalize_is_idempotent():
    rng = np.random.default_rng(3)
    x = rng.normal(size=500)
    once, _ = normalize(x)
    twice, _ = normalize(once)
    assert np.allclose(once, twice, atol=1e-15)


def test_frame_direct_row_major():
    frame = frame_direct([10.0, 11.0, 12.0, 13.0], rows=2, cols=2)
    assert frame.values.tolist() == [[10.0, 11.0], [12.0, 13.0]]


def test_frame_direct_last_cell():
    samples = np.arange(400.0)
    frame = frame_direct(samples, rows=20, cols=20, start=0)
    assert frame.values[19][19] == samples[399]
    assert frame.values[0][0] == samples[0]


def test_frame_direct_out_of_range():
    with pytest.raises(OutOfRange):
        frame_direct(np.arange(400.0), rows=20, cols=20, start=1)


def test_frame_flatten_is_identity_on_slice():
    rng = np.random.default_rng(11)
    samples = rng.uniform(size=900)
    for start in (0, 17, 500):
        frame = frame_direct(samples, rows=20, cols=20, start=start)
        assert np.array_equal(frame.values.ravel(),
                              samples[start:start + 400])


def _recording(samples, class_id=0):
    return Recording(samples=np.asarray(samples, dtype=float),
                     label=FAULT_CLASSES[class_id])


def test_sample_windows_single_possible_offset():
    rng = np.random.default_rng(0)
    rec = _recording(rng.uniform(size=400))
    frames = sample_windows(rec, count=1, seed=5)
    expected, _ = normalize(rec.samples)
    assert np.array_equal(frames[0].values.ravel(), expected)


def test_sample_windows_insufficient_offsets():
    rng = np.random.default_rng(0)
    rec = _recording(rng.uniform(size=500))
    with pytest.raises(InsufficientData):
        sample_windows(rec, count=200, seed=5)  # only 101 valid offsets


def test_sample_windows_deterministic():
    rng = np.random.default_rng(1)
    rec = _recording(rng.uniform(size=2000), class_id=4)
    a = sample_windows(rec, count=30, seed=9)
    b = sample_windows(rec, count=30, seed=9)
    assert len(a) == 30
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.values, fb.values)
        assert fa.label.id == 4


def test_sample_windows_offsets_are_distinct():
    rng = np.random.default_rng(2)
    rec = _recording(rng.uniform(size=460))
    frames = sample_windows(rec, count=61, seed=0)  # all 61 offsets
    normalized, _ = normalize(rec.samples)
    starts = set()
    for f in frames:
        first = f.values[0][0]
        matches = np.flatnonzero(np.isclose(normalized[:61], first, atol=0))
        assert len(matches) >= 1
        starts.add(int(matches[0]))
    assert len(starts) == 61


def test_generate_synthetic_deterministic():
    a = generate_synthetic(9, 2000, seed=77)
    b = generate_synthetic(9, 2000, seed=77)
    assert np.array_equal(a.samples, b.samples)
    assert a.label.id == 9


def test_generate_synthetic_rejects_bad_class():
    with pytest.raises(InvalidClass):
        generate_synthetic(10, 1000, seed=0)


def _band_energy(samples, lo_hz=2000.0, rate=12000):
    spectrum = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(len(samples), d=1.0 / rate)
    return float(spectrum[freqs >= lo_hz].sum())


def test_healthy_class_has_lowest_impulse_band_energy():
    seed = 13
    healthy = _band_energy(generate_synthetic(0, 4000, seed).samples)
    for class_id in range(1, NUM_CLASSES):
        faulted = _band_energy(generate_synthetic(class_id, 4000, seed).samples)
        assert healthy < faulted, f"class {class_id}"


def test_synthetic_classes_linearly_separable_by_fft():
    # Nearest-centroid on FFT magnitudes must beat 50% (chance is 10%).
    rng = np.random.default_rng(5)
    features, labels = [], []
    for class_id in range(NUM_CLASSES):
        rec = generate_synthetic(class_id, 4000, seed=21)
        for frame in sample_windows(rec, count=40, seed=31 + class_id):
            features.append(np.abs(np.fft.rfft(frame.values.ravel())))
            labels.append(class_id)
    features = np.array(features)
    labels = np.array(labels)
    order = rng.permutation(len(labels))
    split = len(order) // 2
    train_idx, test_idx = order[:split], order[split:]
    centroids = np.array([
        features[train_idx][labels[train_idx] == c].mean(axis=0)
        for c in range(NUM_CLASSES)
    ])
    dists = ((features[test_idx][:, None, :] - centroids[None]) ** 2).sum(-1)
    accuracy = float((dists.argmin(1) == labels[test_idx]).mean())
    assert accuracy > 0.5


def test_build_dataset_splits():
    frames = []
    for class_id in range(NUM_CLASSES):
        rec = generate_synthetic(class_id, 1200, seed=3)
        frames.extend(sample_windows(rec, count=20, seed=40 + class_id))
    ds = build_dataset(frames, seed=8)
    all_idx = sorted(ds.split.train + ds.split.validation + ds.split.test)
    assert all_idx == list(range(len(frames)))  # disjoint and covering
    for part in (ds.split.train, ds.split.validation, ds.split.test):
        present = {frames[i].label.id for i in part}
        assert present == set(range(NUM_CLASSES))
    again = build_dataset(frames, seed=8)
    assert again.split == ds.split
    assert build_dataset(frames, seed=9).split != ds.split


def test_recording_csv_roundtrip(tmp_path):
    rec = generate_synthetic(3, 700, seed=2)
    path = tmp_path / "rec.csv"
    write_recording_csv(rec, path)
    back = read_recording_csv(path)
    assert np.array_equal(back.samples, rec.samples)
    assert back.label.id == 3
    assert back.sample_rate_hz == rec.sample_rate_hz
    assert back.rpm == rec.rpm


def test_recording_csv_headerless(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("\n".join(str(v / 500) for v in range(500)) + "\n")
    rec = read_recording_csv(path)
    assert rec.label is None
    assert len(rec) == 500


def test_manifest_roundtrip(tmp_path):
    entries = [(f"c{i}.csv", FAULT_CLASSES[i]) for i in (0, 4, 9)]
    path = tmp_path / "manifest.txt"
    write_manifest(entries, path)
    back = read_manifest(path)
    assert [(p.name, l.id) for p, l in back] == [("c0.csv", 0), ("c4.csv", 4),
                                                 ("c9.csv", 9)]
    assert all(p.parent == tmp_path for p, _ in back)
