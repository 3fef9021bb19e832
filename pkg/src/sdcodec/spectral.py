"""STFT magnitudes, mel filterbanks, and the reconstruction losses.

One differentiable implementation serves both training and evaluation:
AudioBuffer inputs are wrapped as constant tensors, so the evaluation path
pays no graph overhead, while Tensor inputs stay connected for backward.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .audio import AudioBuffer
from .errors import InvalidConfig, ShapeMismatch, SignalTooShort
from .tensor import Tensor

LOG_FLOOR = 1e-5

LOSS_KINDS = ("mel", "stft", "waveform", "gen", "fm", "cb", "cmt", "disc")


@dataclass(frozen=True)
class LossValue:
    value: float
    kind: str

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise InvalidConfig(f"unknown loss kind {self.kind!r}")
        if not np.isfinite(self.value):
            raise InvalidConfig(f"{self.kind} loss is not finite")
        if self.kind != "gen" and self.value < 0:
            raise InvalidConfig(f"{self.kind} loss must be nonnegative, got {self.value}")


@dataclass(frozen=True)
class StftConfig:
    fft_size: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n < 16 or (n & (n - 1)) != 0:
            raise InvalidConfig(f"fft_size must be a power of two >= 16, got {n}")
        if not 1 <= self.hop <= n:
            raise InvalidConfig(f"hop must be in [1, fft_size], got {self.hop}")
        if self.window != "hann":
            raise InvalidConfig(f"unsupported window {self.window!r}")


@lru_cache(maxsize=None)
def _hann_periodic(n: int) -> np.ndarray:
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
    w.setflags(write=False)
    return w


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


class MelFilterbank:
    """Triangular filters on the HTK mel scale over rfft bins.

    Construction fails rather than silently producing empty filters or
    uncovered interior bins.
    """

    def __init__(self, n_mels: int, fft_size: int, sample_rate: int,
                 f_min: float = 0.0, f_max: Optional[float] = None):
        nyquist = sample_rate / 2.0
        if f_max is None:
            f_max = nyquist
        if n_mels < 1:
            raise InvalidConfig(f"n_mels must be >= 1, got {n_mels}")
        if not 0.0 <= f_min < f_max <= nyquist:
            raise InvalidConfig(f"need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]")
        self.n_mels = n_mels
        self.fft_size = fft_size
        self.sample_rate = sample_rate
        self.f_min = float(f_min)
        self.f_max = float(f_max)

        points = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
        bin_freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
        left, center, right = points[:-2], points[1:-1], points[2:]
        up = (bin_freqs[None, :] - left[:, None]) / (center - left)[:, None]
        down = (right[:, None] - bin_freqs[None, :]) / (right - center)[:, None]
        weights = np.maximum(0.0, np.minimum(up, down))

        if not np.all(weights.sum(axis=1) > 0):
            raise InvalidConfig(
                f"empty mel filter: {n_mels} filters cannot be resolved by a {fft_size}-point FFT at {sample_rate} Hz")
        interior = (bin_freqs > f_min) & (bin_freqs < f_max)
        if not np.all(weights.sum(axis=0)[interior] > 0):
            raise InvalidConfig("mel filters leave interior FFT bins uncovered")
        weights.setflags(write=False)
        self.weights = weights

    def apply(self, mag: np.ndarray) -> np.ndarray:
        return mag @ self.weights.T


Scale = tuple[StftConfig, MelFilterbank]


def default_scales(sample_rate: int) -> list[Scale]:
    """Coarse-to-fine analysis scales used by every loss and report."""
    out = []
    for fft_size, n_mels in ((2048, 80), (512, 40), (128, 10)):
        cfg = StftConfig(fft_size, fft_size // 4)
        out.append((cfg, MelFilterbank(n_mels, fft_size, sample_rate)))
    return out


# -- framing ------------------------------------------------------------------

def _frames_t(x: Tensor, cfg: StftConfig) -> Tensor:
    """[batch, time] -> windowed [batch*frames, fft_size]."""
    window = _hann_periodic(cfg.fft_size).astype(x.data.dtype)
    framed = T.frame_signal(x, cfg.fft_size, cfg.hop)
    return T.mul(framed, T.tensor(window))


def stft_mag_t(x: Tensor, cfg: StftConfig) -> Tensor:
    """Differentiable magnitude spectrogram, rows = batch*frames."""
    return T.rfft_mag(_frames_t(x, cfg))


def stft_mag(x: Union[AudioBuffer, np.ndarray], cfg: StftConfig) -> np.ndarray:
    """Magnitude spectrogram [frames, fft_size/2 + 1] of a mono signal."""
    samples = x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)
    if samples.ndim != 1:
        raise ShapeMismatch(f"expected a mono signal, got shape {samples.shape}")
    return stft_mag_t(T.tensor(samples[None, :]), cfg).data


# -- losses -------------------------------------------------------------------

def _check_pair_t(ref: Tensor, est: Tensor) -> None:
    if ref.data.shape != est.data.shape:
        raise ShapeMismatch(f"loss inputs differ in shape: {ref.data.shape} vs {est.data.shape}")


def mel_loss_t(ref: Tensor, est: Tensor, scales: Sequence[Scale]) -> Tensor:
    """Mean over scales of L1 between log-mel spectrograms; [batch, time] inputs."""
    _check_pair_t(ref, est)
    terms = []
    for cfg, bank in scales:
        w = T.tensor(bank.weights.T.astype(ref.data.dtype))
        mel_r = T.log(T.add(T.matmul(stft_mag_t(ref, cfg), w), LOG_FLOOR))
        mel_e = T.log(T.add(T.matmul(stft_mag_t(est, cfg), w), LOG_FLOOR))
        terms.append(T.mean_(T.abs_(T.sub(mel_r, mel_e))))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.mul(total, 1.0 / len(scales))


def stft_loss_t(ref: Tensor, est: Tensor, scales: Sequence[Scale]) -> Tensor:
    """Mean over scales of (L1 on log-magnitude + L1 on magnitude)."""
    _check_pair_t(ref, est)
    terms = []
    for cfg, _ in scales:
        mag_r = stft_mag_t(ref, cfg)
        mag_e = stft_mag_t(est, cfg)
        log_l1 = T.mean_(T.abs_(T.sub(T.log(T.add(mag_r, LOG_FLOOR)),
                                      T.log(T.add(mag_e, LOG_FLOOR)))))
        lin_l1 = T.mean_(T.abs_(T.sub(mag_r, mag_e)))
        terms.append(T.add(log_l1, lin_l1))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.mul(total, 1.0 / len(scales))


def waveform_loss_t(ref: Tensor, est: Tensor) -> Tensor:
    _check_pair_t(ref, est)
    return T.mean_(T.abs_(T.sub(ref, est)))


def _buffer_pair(ref: AudioBuffer, est: AudioBuffer) -> tuple[Tensor, Tensor]:
    if ref.sample_rate != est.sample_rate:
        raise ShapeMismatch(f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}")
    if len(ref) != len(est):
        raise ShapeMismatch(f"lengths differ: {len(ref)} vs {len(est)}")
    return T.tensor(ref.samples[None, :]), T.tensor(est.samples[None, :])


def mel_loss(ref: AudioBuffer, est: AudioBuffer,
             scales: Optional[Sequence[Scale]] = None) -> LossValue:
    ref_t, est_t = _buffer_pair(ref, est)
    scales = default_scales(ref.sample_rate) if scales is None else scales
    return LossValue(mel_loss_t(ref_t, est_t, scales).item(), "mel")


def stft_loss(ref: AudioBuffer, est: AudioBuffer,
              scales: Optional[Sequence[Scale]] = None) -> LossValue:
    ref_t, est_t = _buffer_pair(ref, est)
    scales = default_scales(ref.sample_rate) if scales is None else scales
    return LossValue(stft_loss_t(ref_t, est_t, scales).item(), "stft")


def waveform_loss(ref: AudioBuffer, est: AudioBuffer) -> LossValue:
    ref_t, est_t = _buffer_pair(ref, est)
    return LossValue(waveform_loss_t(ref_t, est_t).item(), "waveform")
