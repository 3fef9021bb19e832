"""Synthetic corpus: spectral content, determinism, crop alignment."""

import numpy as np
import pytest

from sdcodec.audio import AudioBuffer, write_wav
from sdcodec.data import FULL_RATE, CropDataset, generate_dataset, synth_signal
from sdcodec.errors import NoData
from sdcodec.metrics import BandSpec, band_energy_fraction
from sdcodec.resample import DEFAULT_KERNEL


def test_synth_signal_has_content_on_both_sides_of_8k():
    for seed in range(8):
        x = synth_signal(np.random.default_rng(seed), 1.0)
        buf = AudioBuffer(x, FULL_RATE)
        lo = band_energy_fraction(buf, BandSpec(0, 8000))
        hi = band_energy_fraction(buf, BandSpec(8000, 16000))
        assert lo > 0.02 and hi > 0.02
        assert abs(lo + hi - 1.0) < 1e-9
    assert np.max(np.abs(x)) == pytest.approx(0.5)


def test_synth_signal_deterministic():
    a = synth_signal(np.random.default_rng(11), 0.5)
    b = synth_signal(np.random.default_rng(11), 0.5)
    assert np.array_equal(a, b)


def test_generate_dataset_files_and_determinism(tmp_path):
    paths = generate_dataset(tmp_path / "a", n_files=3, duration=0.5, seed=5)
    assert [p.name for p in paths] == ["synth_000.wav", "synth_001.wav", "synth_002.wav"]
    again = generate_dataset(tmp_path / "b", n_files=3, duration=0.5, seed=5)
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()


def test_crop_dataset_shapes_and_alignment(tmp_path):
    generate_dataset(tmp_path, n_files=2, duration=1.0, seed=3)
    ds = CropDataset(tmp_path, crop_seconds=0.25)
    assert ds.total_seconds == pytest.approx(2.0, abs=0.01)
    x_lo, x_hi = ds.sample_batch(3, np.random.default_rng(0))
    assert x_lo.shape == (3, 1, 4000)
    assert x_hi.shape == (3, 1, 8000)
    assert x_lo.dtype == np.float32 and x_hi.dtype == np.float32


def test_crop_pairs_are_views_of_the_same_span(tmp_path):
    # the low crop must be the downsampled view of the high crop's span:
    # offsets are drawn at the low rate, so crop starts align by construction
    generate_dataset(tmp_path, n_files=1, duration=1.0, seed=4)
    ds = CropDataset(tmp_path, crop_seconds=0.25)
    rng = np.random.default_rng(1)
    x_lo, x_hi = ds.sample_batch(1, rng)
    starts = [i for i in range(0, len(ds.full[0]) - 8000 + 1, 2)
              if np.array_equal(ds.full[0][i : i + 8000], x_hi[0, 0])]
    assert len(starts) >= 1
    off = starts[0] // 2
    assert np.array_equal(ds.low[0][off : off + 4000], x_lo[0, 0])


def test_crop_dataset_batch_determinism(tmp_path):
    generate_dataset(tmp_path, n_files=2, duration=0.5, seed=6)
    ds = CropDataset(tmp_path, crop_seconds=0.2)
    a = ds.sample_batch(4, np.random.default_rng(42))
    b = ds.sample_batch(4, np.random.default_rng(42))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_empty_dir_raises(tmp_path):
    with pytest.raises(NoData):
        CropDataset(tmp_path)


def test_too_short_files_raise(tmp_path):
    generate_dataset(tmp_path, n_files=1, duration=0.1, seed=7)
    with pytest.raises(NoData):
        CropDataset(tmp_path, crop_seconds=0.5)


def test_mixed_rates_raise(tmp_path):
    generate_dataset(tmp_path, n_files=1, duration=0.5, seed=8)
    odd = AudioBuffer(synth_signal(np.random.default_rng(9), 0.5, rate=16000), 16000)
    write_wav(tmp_path / "synth_999.wav", odd)
    with pytest.raises(NoData):
        CropDataset(tmp_path, crop_seconds=0.2)


def test_crop_length_rounds_to_factor(tmp_path):
    generate_dataset(tmp_path, n_files=1, duration=0.5, seed=10)
    ds = CropDataset(tmp_path, crop_seconds=0.10007, kernel=DEFAULT_KERNEL, factor=2)
    assert ds.crop_high % 2 == 0
    assert ds.crop_low * 2 == ds.crop_high
