"""Mono time-domain signal container and RIFF/WAVE file I/O.

Supported on disk: PCM16 and IEEE float32, mono natively; multi-channel
files are downmixed by averaging on read. Everything in memory is a 1-D
float64 array in nominal [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySignal, MalformedWav, RateMismatch, UnsupportedWav

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    """Immutable mono signal with a sample rate.

    samples: 1-D float64 array, finite, nominal range [-1, 1]
    sample_rate: Hz, positive
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"samples must be 1-D, got ndim={arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("samples contain NaN/Inf")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def energy(self) -> float:
        return float(np.sum(self.samples ** 2))

    def rms(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(np.mean(self.samples ** 2)))


def read_wav(path) -> AudioBuffer:
    """Read a PCM16 or float32 RIFF/WAVE file; averages channels to mono.

    Raises MalformedWav for container damage, UnsupportedWav for valid RIFF
    with an encoding outside the two supported ones.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12:
        raise MalformedWav(f"{path}: file too short for a RIFF header")
    if blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: missing RIFF/WAVE signature")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise MalformedWav(f"{path}: chunk {cid!r} truncated")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise MalformedWav(f"{path}: missing fmt/data chunk")
    if len(fmt) < 16:
        raise MalformedWav(f"{path}: fmt chunk too short")

    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        # sub-format GUID starts with the effective format tag
        (tag,) = struct.unpack_from("<H", fmt, 24)
    if channels < 1:
        raise MalformedWav(f"{path}: zero channels")

    if tag == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(data[: (len(data) // 2) * 2], dtype="<i2")
        x = raw.astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(data[: (len(data) // 4) * 4], dtype="<f4")
        x = raw.astype(np.float64)
    else:
        raise UnsupportedWav(f"{path}: format tag {tag} / {bits}-bit not supported (PCM16 or float32 only)")

    if channels > 1:
        usable = (x.shape[0] // channels) * channels
        x = x[:usable].reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise MalformedWav(f"{path}: non-finite sample values")
    return AudioBuffer(x, int(rate))


def write_wav(path, buf: AudioBuffer, fmt: str = "float32") -> None:
    """Write an AudioBuffer as mono float32 (default) or PCM16.

    PCM16 clips to [-1, 1) before quantizing; float32 is written as-is.
    """
    if fmt == "float32":
        payload = buf.samples.astype("<f4").tobytes()
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    elif fmt == "pcm16":
        clipped = np.clip(buf.samples, -1.0, 32767.0 / 32768.0)
        payload = (np.round(clipped * 32768.0).astype("<i2")).tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 16
    else:
        raise ValueError(f"unknown wav format {fmt!r}")

    block = bits // 8  # mono
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, tag, 1, buf.sample_rate, buf.sample_rate * block, block, bits,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def ensure_rate(buf: AudioBuffer, target_rate: int, auto_resample: bool = False) -> AudioBuffer:
    """Check (or fix, with auto_resample) a buffer's rate for codec use.

    Only integer-ratio conversions are possible; anything else raises
    InvalidFactor even with auto_resample set.
    """
    from . import resample  # local import; resample depends on this module

    if buf.sample_rate == target_rate:
        return buf
    if not auto_resample:
        raise RateMismatch(f"signal is {buf.sample_rate} Hz, codec expects {target_rate} Hz (use auto-resample)")
    if len(buf) == 0:
        raise EmptySignal("cannot resample an empty signal")
    if buf.sample_rate % target_rate == 0:
        return resample.resample_down(buf, buf.sample_rate // target_rate)
    if target_rate % buf.sample_rate == 0:
        return resample.resample_up(buf, target_rate // buf.sample_rate)
    from .errors import InvalidFactor

    raise InvalidFactor(f"no integer factor between {buf.sample_rate} Hz and {target_rate} Hz")
