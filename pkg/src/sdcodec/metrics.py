"""Evaluation metrics: SDR, SI-SDR, band-restricted SDR, and report tables.

Band restriction is a brick-wall mask in the frequency domain so that
complementary bands partition the error energy exactly (up to rounding);
reported decibel values are capped at +/-120 dB to keep serialized output
finite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .audio import AudioBuffer
from .errors import CodecError, InvalidConfig, RateMismatch, ShapeMismatch, UndefinedReference
from .spectral import Scale, default_scales, mel_loss, stft_loss, waveform_loss

DB_CAP = 120.0

# a band is "silent in the reference" when it holds less than this fraction
# of the total reference energy; probing it is then undefined, not ~0 dB.
# Sits above the broadband edge-transient leakage a resampler leaves in an
# otherwise empty band (~1e-5 for half-second signals) and well below any
# band fraction of deliberately placed content.
BAND_ENERGY_FLOOR = 1e-4


@dataclass(frozen=True)
class BandSpec:
    low: float
    high: float

    def __post_init__(self):
        if self.low < 0 or self.high <= self.low:
            raise InvalidConfig(f"need 0 <= low < high, got [{self.low}, {self.high}]")

    def label(self) -> str:
        return f"{_fmt_hz(self.low)}_{_fmt_hz(self.high)}"


def _fmt_hz(f: float) -> str:
    return str(int(f)) if float(f).is_integer() else str(f)


def default_bands() -> list[BandSpec]:
    return [BandSpec(0.0, 8000.0), BandSpec(8000.0, 16000.0)]


INTERFACE_BAND = BandSpec(7900.0, 8100.0)


def _pair_check(ref: AudioBuffer, est: AudioBuffer) -> None:
    if ref.sample_rate != est.sample_rate:
        raise RateMismatch(f"sample rates differ: {ref.sample_rate} vs {est.sample_rate}")
    if len(ref) != len(est):
        raise ShapeMismatch(f"lengths differ: {len(ref)} vs {len(est)}")


def _ratio_db(num: float, den: float) -> float:
    if den == 0.0:
        return DB_CAP
    if num == 0.0:
        return -DB_CAP
    return float(np.clip(10.0 * np.log10(num / den), -DB_CAP, DB_CAP))


def sdr(ref: AudioBuffer, est: AudioBuffer) -> float:
    """10*log10(||ref||^2 / ||ref - est||^2), capped at +/-120 dB."""
    _pair_check(ref, est)
    ref_energy = float(np.sum(ref.samples * ref.samples))
    if ref_energy == 0.0:
        raise UndefinedReference("reference signal is all-zero")
    err = ref.samples - est.samples
    return _ratio_db(ref_energy, float(np.sum(err * err)))


def si_sdr(ref: AudioBuffer, est: AudioBuffer) -> float:
    """Scale-invariant SDR with projection alpha = <est, ref>/||ref||^2."""
    _pair_check(ref, est)
    ref_energy = float(np.sum(ref.samples * ref.samples))
    if ref_energy == 0.0:
        raise UndefinedReference("reference signal is all-zero")
    alpha = float(np.dot(est.samples, ref.samples)) / ref_energy
    target = alpha * ref.samples
    err = est.samples - target
    return _ratio_db(float(np.sum(target * target)), float(np.sum(err * err)))


def band_restrict(x: AudioBuffer, band: BandSpec) -> AudioBuffer:
    """Zero all rfft bins outside [low, high); high == Nyquist is inclusive."""
    nyquist = x.sample_rate / 2.0
    if band.high > nyquist:
        raise InvalidConfig(f"band [{band.low}, {band.high}] exceeds Nyquist {nyquist}")
    spec = np.fft.rfft(x.samples)
    freqs = np.fft.rfftfreq(len(x), 1.0 / x.sample_rate)
    mask = (freqs >= band.low) & ((freqs < band.high) | (band.high == nyquist) & (freqs == nyquist))
    spec[~mask] = 0.0
    return AudioBuffer(np.fft.irfft(spec, n=len(x)), x.sample_rate)


def band_sdr(ref: AudioBuffer, est: AudioBuffer, band: BandSpec) -> float:
    """SDR after brick-wall restriction of both signals to one band."""
    _pair_check(ref, est)
    ref_total = float(np.sum(ref.samples * ref.samples))
    if ref_total == 0.0:
        raise UndefinedReference("reference signal is all-zero")
    ref_band = band_restrict(ref, band)
    band_energy = float(np.sum(ref_band.samples * ref_band.samples))
    if band_energy < BAND_ENERGY_FLOOR * ref_total:
        raise UndefinedReference(
            f"reference has no energy in [{band.low}, {band.high}] Hz "
            f"({band_energy:.3e} of {ref_total:.3e} total)")
    return sdr(ref_band, band_restrict(est, band))


def band_energy_fraction(x: AudioBuffer, band: BandSpec) -> float:
    """Fraction of total signal energy inside the band (brick-wall split)."""
    total = float(np.sum(x.samples * x.samples))
    if total == 0.0:
        raise UndefinedReference("signal is all-zero")
    restricted = band_restrict(x, band)
    return float(np.sum(restricted.samples * restricted.samples)) / total


@dataclass
class MetricReport:
    """Ordered name -> value table; one report per evaluated signal."""

    values: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, value: float) -> None:
        if name in self.values:
            raise InvalidConfig(f"metric {name!r} already present in report")
        self.values[name] = float(value)

    def to_text(self) -> str:
        lines = [f"{name} = {value:.6f}" for name, value in self.values.items()]
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=False) + "\n"


def build_report(ref: AudioBuffer, est: AudioBuffer,
                 bands: Optional[Sequence[BandSpec]] = None,
                 scales: Optional[Sequence[Scale]] = None) -> MetricReport:
    """Losses, SI-SDR/SDR, and per-band SDRs for one (reference, estimate) pair."""
    if bands is None:
        bands = default_bands() if ref.sample_rate >= 32000 else [BandSpec(0.0, ref.sample_rate / 2.0)]
    if scales is None:
        scales = default_scales(ref.sample_rate)
    report = MetricReport()
    steps = [
        ("mel", lambda: mel_loss(ref, est, scales).value),
        ("stft", lambda: stft_loss(ref, est, scales).value),
        ("waveform", lambda: waveform_loss(ref, est).value),
        ("si_sdr", lambda: si_sdr(ref, est)),
        ("sdr", lambda: sdr(ref, est)),
    ]
    steps += [(f"sdr_band_{band.label()}", lambda b=band: band_sdr(ref, est, b)) for band in bands]
    for name, fn in steps:
        try:
            report.add(name, fn())
        except CodecError as exc:
            raise type(exc)(f"{name}: {exc}") from exc
    return report
