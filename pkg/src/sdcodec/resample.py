"""Windowed-sinc resampling between the codec's two rates.

The upsampler zero-stuffs and convolves with an interpolation kernel whose
polyphase branches are each normalized to unit DC gain (so the taps sum to
the interpolation factor and a constant stays constant). The downsampler
applies the matching anti-alias lowpass, then decimates. Both are
zero-phase: signals are padded with zeros at the edges, output lengths are
exactly length*factor (up) and length//factor (down, trailing remainder
truncated).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import AudioBuffer
from .errors import EmptySignal, InvalidFactor

_WINDOWS = ("hann", "blackman")


@dataclass(frozen=True)
class SincKernel:
    """Design parameters for the interpolation/anti-alias kernel.

    zero_crossings_per_side: sinc zero crossings kept on each side
    window: taper applied over the kept span
    cutoff_ratio: cutoff relative to the lower of the two Nyquists
    """

    zero_crossings_per_side: int = 64
    window: str = "hann"
    cutoff_ratio: float = 1.0

    def __post_init__(self):
        if self.zero_crossings_per_side < 1:
            raise ValueError("zero_crossings_per_side must be >= 1")
        if self.window not in _WINDOWS:
            raise ValueError(f"window must be one of {_WINDOWS}")
        if not 0.0 < self.cutoff_ratio <= 1.0:
            raise ValueError("cutoff_ratio must be in (0, 1]")

    def taps(self, factor: int) -> np.ndarray:
        """Interpolation taps for an integer factor; sum to `factor`."""
        return _design_taps(self.zero_crossings_per_side, self.window, self.cutoff_ratio, factor)


DEFAULT_KERNEL = SincKernel()


@lru_cache(maxsize=32)
def _design_taps(zeros_per_side: int, window: str, cutoff: float, factor: int) -> np.ndarray:
    half = zeros_per_side * factor
    m = np.arange(-half, half + 1, dtype=np.float64)
    core = cutoff * np.sinc(cutoff * m / factor)
    u = m / half
    if window == "hann":
        w = 0.5 * (1.0 + np.cos(np.pi * u))
    else:
        w = 0.42 + 0.5 * np.cos(np.pi * u) + 0.08 * np.cos(2.0 * np.pi * u)
    h = core * w
    # normalize each polyphase branch to unit DC gain
    for p in range(factor):
        sel = (m % factor) == p
        h[sel] /= h[sel].sum()
    h.flags.writeable = False
    return h


def kernel_half_length(kernel: SincKernel, factor: int) -> int:
    """Samples on each side of center, at the higher of the two rates."""
    return kernel.zero_crossings_per_side * factor


def _check(x_len: int, factor) -> int:
    if x_len == 0:
        raise EmptySignal("cannot resample an empty signal")
    if not isinstance(factor, (int, np.integer)) or isinstance(factor, bool) or factor < 2:
        raise InvalidFactor(f"factor must be an integer >= 2, got {factor!r}")
    return int(factor)


def upsample_array(x: np.ndarray, factor: int, taps: np.ndarray) -> np.ndarray:
    """Zero-stuff + interpolate a 1-D array; length becomes len(x)*factor."""
    half = (len(taps) - 1) // 2
    stuffed = np.zeros(x.shape[0] * factor, dtype=np.result_type(x.dtype, taps.dtype))
    stuffed[::factor] = x
    y = np.convolve(stuffed, taps)
    return y[half : half + stuffed.shape[0]]


def upsample_adjoint_array(g: np.ndarray, factor: int, taps: np.ndarray) -> np.ndarray:
    """Adjoint of upsample_array: correlate with the taps, keep every factor-th."""
    half = (len(taps) - 1) // 2
    full = np.convolve(g, taps[::-1])
    return full[half : half + g.shape[0]][::factor]


def downsample_array(x: np.ndarray, factor: int, taps: np.ndarray) -> np.ndarray:
    """Anti-alias + decimate a 1-D array; trailing remainder samples dropped."""
    half = (len(taps) - 1) // 2
    usable = (x.shape[0] // factor) * factor
    y = np.convolve(x[:usable], taps / factor)
    return y[half : half + usable][::factor]


def resample_up(x: AudioBuffer, factor: int, kernel: SincKernel = DEFAULT_KERNEL) -> AudioBuffer:
    """Upsample by an integer factor >= 2; preserves content below the input Nyquist."""
    factor = _check(len(x), factor)
    y = upsample_array(x.samples, factor, kernel.taps(factor))
    return AudioBuffer(y, x.sample_rate * factor)


def resample_down(x: AudioBuffer, factor: int, kernel: SincKernel = DEFAULT_KERNEL) -> AudioBuffer:
    """Downsample by an integer factor >= 2 with anti-alias filtering."""
    factor = _check(len(x), factor)
    if x.sample_rate % factor != 0:
        raise InvalidFactor(f"rate {x.sample_rate} Hz is not divisible by {factor}")
    y = downsample_array(x.samples, factor, kernel.taps(factor))
    return AudioBuffer(y, x.sample_rate // factor)
