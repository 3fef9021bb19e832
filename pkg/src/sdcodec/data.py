"""Synthetic full-band training material and the crop batcher.

Files mix tones on both sides of 8 kHz with spectrally shaped noise, so a
model must code low and high bands to fit them. The 16 kHz view of each
file is derived once from the whole 32 kHz signal (cropping after
filtering keeps every crop pair consistent with the downsampler, which is
not true of filtering after cropping).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import AudioBuffer, read_wav, write_wav
from .errors import NoData
from .resample import DEFAULT_KERNEL, SincKernel, resample_down

FULL_RATE = 32000


def synth_signal(rng: np.random.Generator, duration: float, rate: int = FULL_RATE) -> np.ndarray:
    """One mixture: low tones, high tones, tilted noise; peak about 0.5.

    The upper band carries most of the energy on purpose. Magnitude-led
    losses leave the low branch phase-loose at small training scale, so
    its waveform residual keeps low-band energy comparable to the input's;
    a low-heavy mix would bury the upper band in that error floor.
    """
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    x = np.zeros(n)
    for _ in range(rng.integers(3, 6)):
        f = rng.uniform(150.0, 7000.0)
        amp = rng.uniform(0.05, 0.13)
        mod = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.3, 2.0) * t + rng.uniform(0, 2 * np.pi))
        x += amp * mod * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    for _ in range(rng.integers(3, 7)):
        f = rng.uniform(8600.0, 15200.0)
        amp = rng.uniform(0.10, 0.22)
        mod = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.3, 2.0) * t + rng.uniform(0, 2 * np.pi))
        x += amp * mod * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    noise = rng.normal(0.0, 1.0, n)
    spec = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    shape = 1.0 / np.sqrt(1.0 + freqs / 1500.0)
    shape[freqs >= 8000.0] *= 4.0
    x += 0.06 * np.fft.irfft(spec * shape, n=n) / np.std(noise)
    return 0.5 * x / np.max(np.abs(x))


def generate_dataset(out_dir, n_files: int, duration: float, seed: int,
                     rate: int = FULL_RATE) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_files):
        buf = AudioBuffer(synth_signal(rng, duration, rate), rate)
        path = out / f"synth_{i:03d}.wav"
        write_wav(path, buf)
        paths.append(path)
    return paths


class CropDataset:
    """In-memory 32 kHz corpus with aligned 16 kHz views and random crops."""

    def __init__(self, wav_dir, crop_seconds: float = 0.5,
                 kernel: SincKernel = DEFAULT_KERNEL, factor: int = 2):
        files = sorted(Path(wav_dir).glob("*.wav"))
        if not files:
            raise NoData(f"no .wav files in {wav_dir}")
        self.files = files
        self.factor = factor
        self.full: list[np.ndarray] = []
        self.low: list[np.ndarray] = []
        rate = None
        for path in files:
            buf = read_wav(path)
            rate = buf.sample_rate if rate is None else rate
            if buf.sample_rate != rate:
                raise NoData(f"{path} has rate {buf.sample_rate}, expected {rate}")
            lo = resample_down(buf, factor, kernel)
            keep = (len(buf) // factor) * factor
            self.full.append(buf.samples[:keep].astype(np.float32))
            self.low.append(lo.samples[: keep // factor].astype(np.float32))
        self.rate = rate
        self.crop_high = int(round(crop_seconds * rate))
        self.crop_high -= self.crop_high % factor
        self.crop_low = self.crop_high // factor
        shortest = min(len(a) for a in self.low)
        if shortest < self.crop_low:
            raise NoData(f"files shorter than one {crop_seconds}s crop")

    @property
    def total_seconds(self) -> float:
        return sum(len(a) for a in self.full) / self.rate

    def sample_batch(self, batch: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """(x_low [B,1,Tl], x_high [B,1,Th]) float32 aligned crop pairs."""
        lows, highs = [], []
        for _ in range(batch):
            idx = int(rng.integers(0, len(self.full)))
            lo_len = len(self.low[idx])
            off = int(rng.integers(0, lo_len - self.crop_low + 1))
            lows.append(self.low[idx][off : off + self.crop_low])
            highs.append(self.full[idx][off * self.factor : off * self.factor + self.crop_high])
        return np.stack(lows)[:, None, :], np.stack(highs)[:, None, :]
