"""SDR family closed forms, band splitting, and report composition."""

import json

import numpy as np
import pytest

from sdcodec import (
    AudioBuffer,
    BandSpec,
    InvalidConfig,
    MetricReport,
    RateMismatch,
    ShapeMismatch,
    UndefinedReference,
    band_energy_fraction,
    band_restrict,
    band_sdr,
    build_report,
    default_bands,
    sdr,
    si_sdr,
)
from sdcodec.metrics import DB_CAP, INTERFACE_BAND
from sdcodec.resample import resample_down, resample_up


def _noise(seed=0, n=16000, rate=32000, amp=0.3):
    rng = np.random.default_rng(seed)
    return AudioBuffer(rng.normal(size=n) * amp, rate)


def _scaled(buf, c):
    return AudioBuffer(buf.samples * c, buf.sample_rate)


def test_sdr_half_amplitude():
    ref = _noise(0)
    assert sdr(ref, _scaled(ref, 0.5)) == pytest.approx(6.0206, abs=1e-3)


def test_sdr_zero_estimate():
    ref = _noise(1)
    zero = AudioBuffer(np.zeros(len(ref)), ref.sample_rate)
    assert abs(sdr(ref, zero)) <= 1e-9


def test_sdr_scaling_grid():
    # closed form: est = a*ref gives -20*log10(|1-a|)
    ref = _noise(2)
    for a in (0.25, 0.75, 1.25, 2.0):
        expect = -20.0 * np.log10(abs(1.0 - a))
        assert sdr(ref, _scaled(ref, a)) == pytest.approx(expect, abs=1e-9)


def test_sdr_caps():
    ref = _noise(3)
    assert sdr(ref, ref) == DB_CAP
    tiny = AudioBuffer(ref.samples + np.full(len(ref), 1e-30), ref.sample_rate)
    assert sdr(ref, tiny) == DB_CAP  # clipped, not inf


def test_sdr_guards():
    ref = _noise(4)
    zero = AudioBuffer(np.zeros(len(ref)), ref.sample_rate)
    with pytest.raises(UndefinedReference):
        sdr(zero, ref)
    with pytest.raises(RateMismatch):
        sdr(ref, AudioBuffer(ref.samples, 16000))
    with pytest.raises(ShapeMismatch):
        sdr(ref, AudioBuffer(ref.samples[:-1], ref.sample_rate))


def test_si_sdr_scale_invariance():
    ref = _noise(5)
    est = AudioBuffer(ref.samples + _noise(6).samples * 0.1, ref.sample_rate)
    base = si_sdr(ref, est)
    for c in (0.1, 1.0, 10.0):
        assert si_sdr(ref, _scaled(est, c)) == pytest.approx(base, abs=1e-9)


def test_si_sdr_known_mixture():
    # est = ref + w with w orthogonal to ref: SI-SDR = 10*log10(E_ref/E_w)
    rng = np.random.default_rng(7)
    ref = rng.normal(size=8000)
    w = rng.normal(size=8000)
    w -= (np.dot(w, ref) / np.dot(ref, ref)) * ref
    w *= np.sqrt(np.dot(ref, ref) / np.dot(w, w)) / np.sqrt(10.0)  # E_w = E_ref/10
    got = si_sdr(AudioBuffer(ref, 16000), AudioBuffer(ref + w, 16000))
    assert got == pytest.approx(10.0, abs=1e-6)


def test_si_sdr_orthogonal_estimate():
    ref = AudioBuffer(np.sin(2 * np.pi * 1000 * np.arange(16000) / 16000), 16000)
    est = AudioBuffer(np.cos(2 * np.pi * 1000 * np.arange(16000) / 16000), 16000)
    assert si_sdr(ref, est) == -DB_CAP  # projection is ~zero


def test_band_spec():
    band = BandSpec(0.0, 8000.0)
    assert band.label() == "0_8000"
    with pytest.raises(InvalidConfig):
        BandSpec(8000.0, 8000.0)
    with pytest.raises(InvalidConfig):
        BandSpec(-1.0, 8000.0)
    assert default_bands() == [BandSpec(0.0, 8000.0), BandSpec(8000.0, 16000.0)]
    assert INTERFACE_BAND == BandSpec(7900.0, 8100.0)


def test_band_restrict_tone_selection():
    rate, n = 32000, 32000
    t = np.arange(n) / rate
    lo = np.sin(2 * np.pi * 3000 * t)
    hi = 0.5 * np.sin(2 * np.pi * 12000 * t)
    both = AudioBuffer(lo + hi, rate)
    low_only = band_restrict(both, BandSpec(0.0, 8000.0))
    high_only = band_restrict(both, BandSpec(8000.0, 16000.0))
    assert np.max(np.abs(low_only.samples - lo)) < 1e-9
    assert np.max(np.abs(high_only.samples - hi)) < 1e-9


def test_band_restrict_complementary_energy():
    x = _noise(8)
    parts = [band_restrict(x, b).energy() for b in default_bands()]
    assert sum(parts) == pytest.approx(x.energy(), rel=0.01)


def test_band_restrict_nyquist_guard():
    x = _noise(9)
    with pytest.raises(InvalidConfig):
        band_restrict(x, BandSpec(0.0, 16001.0))


def test_band_sdr_per_band_errors():
    # corrupt only the high band; low-band SDR must stay capped-perfect
    x = _noise(10)
    hi_err = band_restrict(_noise(11), BandSpec(8000.0, 16000.0))
    est = AudioBuffer(x.samples + 0.3 * hi_err.samples, x.sample_rate)
    assert band_sdr(x, est, BandSpec(0.0, 8000.0)) > 100.0
    assert band_sdr(x, est, BandSpec(8000.0, 16000.0)) < 30.0


def _bandlimited(seed, n, rate, upper, amp=0.3):
    rng = np.random.default_rng(seed)
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    spec[np.fft.rfftfreq(n, 1.0 / rate) > upper] = 0.0
    x = np.fft.irfft(spec, n)
    return AudioBuffer(x / np.max(np.abs(x)) * amp, rate)


def test_band_sdr_undefined_on_bandless_reference():
    # an upsampled 16 kHz signal with content clear of the 8 kHz transition
    # band has (near) nothing above 8 kHz
    low = _bandlimited(12, 8000, 16000, 6500.0)
    up = resample_up(low, 2)
    with pytest.raises(UndefinedReference):
        band_sdr(up, up, BandSpec(8000.0, 16000.0))


def test_band_energy_fraction():
    x = _noise(13)
    lo = band_energy_fraction(x, BandSpec(0.0, 8000.0))
    hi = band_energy_fraction(x, BandSpec(8000.0, 16000.0))
    assert lo + hi == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(UndefinedReference):
        band_energy_fraction(AudioBuffer(np.zeros(64), 32000), BandSpec(0.0, 8000.0))


def test_down_up_kills_high_band():
    x = _noise(14)
    stripped = resample_up(resample_down(x, 2), 2)
    # full-band noise keeps a little transition-band leakage, nothing more
    assert band_energy_fraction(stripped, BandSpec(8000.0, 16000.0)) < 2e-3
    clean = _bandlimited(14, 32000, 32000, 6500.0)
    stripped_clean = resample_up(resample_down(clean, 2), 2)
    # only kernel edge transients remain (two passes' worth)
    assert band_energy_fraction(stripped_clean, BandSpec(8000.0, 16000.0)) < 1e-5


def test_report_composition():
    report = MetricReport()
    report.add("sdr", 12.345678)
    report.add("mel", 0.5)
    with pytest.raises(InvalidConfig):
        report.add("sdr", 1.0)
    text = report.to_text()
    assert text == "sdr = 12.345678\nmel = 0.500000\n"
    assert json.loads(report.to_json()) == {"sdr": 12.345678, "mel": 0.5}


def test_build_report_self_evaluation():
    x = _noise(15)
    report = build_report(x, x)
    assert report.values["mel"] == 0.0
    assert report.values["stft"] == 0.0
    assert report.values["waveform"] == 0.0
    assert report.values["sdr"] == DB_CAP
    assert report.values["si_sdr"] == DB_CAP
    assert report.values["sdr_band_0_8000"] == DB_CAP
    assert report.values["sdr_band_8000_16000"] == DB_CAP


def test_build_report_prefixes_errors():
    x = _noise(16)
    lowpassed = band_restrict(x, BandSpec(0.0, 6000.0))
    with pytest.raises(UndefinedReference) as err:
        build_report(lowpassed, lowpassed)
    assert str(err.value).startswith("sdr_band_8000_16000")
