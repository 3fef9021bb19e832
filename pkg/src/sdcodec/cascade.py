"""Two-branch residual cascade and its combined training losses.

The low branch codes the 16 kHz signal; the high branch codes the residual
between the 32 kHz signal and the upsampled low-branch reconstruction; the
full-rate output is their sum. The reported residual-branch output is
re-derived as s_hat_32 - U(d_hat_16) so the summation identity holds
bit-exactly in float arithmetic (adding the decoder output and subtracting
it back would leave one rounding ulp behind).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .audio import AudioBuffer
from .branch import BranchConfig, BranchOutput, CodecBranch
from .errors import IncompleteBreakdown, InvalidConfig, ShapeMismatch
from .metrics import INTERFACE_BAND, BandSpec, MetricReport, band_sdr, sdr
from .nn import Module
from .resample import DEFAULT_KERNEL, SincKernel, resample_up
from .rvq import RVQResult

EQ_TERMS = ("gen", "fm", "mel", "cb", "cmt")
MEANED_TERMS = ("gen", "fm", "mel")   # averaged across branches when finetuning
SUMMED_TERMS = ("cb", "cmt")          # added across branches when finetuning


@dataclass(frozen=True)
class LossWeights:
    gen: float = 1.0
    fm: float = 2.0
    mel: float = 15.0
    cb: float = 1.0
    cmt: float = 0.25

    def __post_init__(self):
        for name in EQ_TERMS:
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidConfig(f"weight {name} must be finite and nonnegative, got {v}")


@dataclass(frozen=True)
class StageSchedule:
    stage1: int = 2000
    stage2: int = 2000
    finetune: int = 1000

    def __post_init__(self):
        for name in ("stage1", "stage2", "finetune"):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"schedule {name} must be >= 0")


@dataclass(frozen=True)
class CascadeConfig:
    branches: tuple[BranchConfig, ...]
    loss_weights: tuple[LossWeights, ...] = (LossWeights(), LossWeights())
    schedule: StageSchedule = field(default_factory=StageSchedule)
    kernel: SincKernel = field(default_factory=lambda: DEFAULT_KERNEL)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "loss_weights", tuple(self.loss_weights))
        if len(self.branches) != 2:
            raise InvalidConfig(f"exactly two branches are supported, got {len(self.branches)}")
        if len(self.loss_weights) != len(self.branches):
            raise InvalidConfig("need one LossWeights per branch")
        lo, hi = self.branches
        if not lo.sample_rate < hi.sample_rate:
            raise InvalidConfig("branches must be ordered by ascending sample_rate")
        if hi.sample_rate % lo.sample_rate != 0:
            raise InvalidConfig(
                f"rate {hi.sample_rate} is not an integer multiple of {lo.sample_rate}")
        if lo.frame_rate != hi.frame_rate:
            raise InvalidConfig(
                f"frame rates differ: {lo.frame_rate} vs {hi.frame_rate} Hz")

    @property
    def up_factor(self) -> int:
        return self.branches[1].sample_rate // self.branches[0].sample_rate


def default_cascade_config() -> CascadeConfig:
    return CascadeConfig(branches=(
        BranchConfig(16000, (2, 4, 5, 8)),
        BranchConfig(32000, (2, 4, 8, 10)),
    ))


@dataclass
class CascadeOutput:
    s_hat_16: AudioBuffer
    s_hat_32: AudioBuffer
    d_hat_16: AudioBuffer
    d_hat_32: AudioBuffer
    tokens_16: RVQResult
    tokens_32: RVQResult
    breakdown_16: dict = field(default_factory=dict)
    breakdown_32: dict = field(default_factory=dict)


class Cascade(Module):
    def __init__(self, cfg: CascadeConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.low = CodecBranch(cfg.branches[0], rng, dtype)
        self.high = CodecBranch(cfg.branches[1], rng, dtype)

    def forward(self, s16: AudioBuffer, s32: AudioBuffer) -> CascadeOutput:
        lo_cfg, hi_cfg = self.cfg.branches
        if s16.sample_rate != lo_cfg.sample_rate or s32.sample_rate != hi_cfg.sample_rate:
            raise ShapeMismatch(
                f"expected rates ({lo_cfg.sample_rate}, {hi_cfg.sample_rate}), "
                f"got ({s16.sample_rate}, {s32.sample_rate})")
        if len(s32) != self.cfg.up_factor * len(s16):
            raise ShapeMismatch(
                f"length mismatch: {len(s32)} != {self.cfg.up_factor} * {len(s16)}")
        out16 = self.low.forward(s16)
        up = resample_up(out16.decoded, self.cfg.up_factor, self.cfg.kernel)
        residual = AudioBuffer(s32.samples - up.samples, s32.sample_rate)
        out32 = self.high.forward(residual)
        s_hat_32 = AudioBuffer(up.samples + out32.decoded.samples, s32.sample_rate)
        d_hat_32 = AudioBuffer(s_hat_32.samples - up.samples, s32.sample_rate)
        return CascadeOutput(
            s_hat_16=out16.decoded, s_hat_32=s_hat_32,
            d_hat_16=out16.decoded, d_hat_32=d_hat_32,
            tokens_16=out16.tokens, tokens_32=out32.tokens,
            breakdown_16=out16.loss_breakdown, breakdown_32=out32.loss_breakdown)

    def inpaint(self, s16: AudioBuffer) -> CascadeOutput:
        """Feed U(s16) in place of the true 32 kHz signal; the residual branch
        then receives only what it can infer, and fills the upper band."""
        up = resample_up(s16, self.cfg.up_factor, self.cfg.kernel)
        return self.forward(s16, up)

    def encode(self, s16: AudioBuffer, s32: Optional[AudioBuffer]) -> tuple[np.ndarray, ...]:
        """Token matrices without loss bookkeeping; s32 None -> low branch only."""
        t16 = self.low.encode(s16)
        if s32 is None:
            return (t16,)
        if len(s32) != self.cfg.up_factor * len(s16):
            raise ShapeMismatch(
                f"length mismatch: {len(s32)} != {self.cfg.up_factor} * {len(s16)}")
        d16 = self.decode_low(t16, length=len(s16))
        up = resample_up(d16, self.cfg.up_factor, self.cfg.kernel)
        residual = AudioBuffer(s32.samples - up.samples, s32.sample_rate)
        return t16, self.high.encode(residual)

    def decode_low(self, tokens16: np.ndarray, length: Optional[int] = None) -> AudioBuffer:
        d16 = self.low.decode_tokens(tokens16)
        if length is not None:
            d16 = AudioBuffer(d16.samples[:length], d16.sample_rate)
        return d16

    def decode_full(self, tokens16: np.ndarray, tokens32: np.ndarray) -> AudioBuffer:
        """U(decode_low) + decode_high, both at full padded token length."""
        d16 = self.low.decode_tokens(tokens16)
        d32 = self.high.decode_tokens(tokens32)
        up = resample_up(d16, self.cfg.up_factor, self.cfg.kernel)
        if len(up) != len(d32):
            raise ShapeMismatch(
                f"branch token durations disagree: {len(up)} vs {len(d32)} samples")
        return AudioBuffer(up.samples + d32.samples, d32.sample_rate)


def eq_total(breakdown: dict, weights: LossWeights):
    """Single-branch weighted total over {gen, fm, mel, cb, cmt}.

    Accepts floats, LossValue, or scalar graph tensors; returns the same
    algebraic type, so it serves training and arithmetic checks alike.
    """
    total = None
    for name in EQ_TERMS:
        if name not in breakdown:
            raise IncompleteBreakdown(f"loss breakdown is missing {name!r}")
        term = breakdown[name]
        value = term.value if hasattr(term, "value") else term
        weighted = value * getattr(weights, name)
        total = weighted if total is None else total + weighted
    return total


def finetune_loss(breakdown16: dict, breakdown32: dict,
                  weights: Sequence[LossWeights]):
    """Joint loss: mean of weighted gen/fm/mel across branches, sum of cb/cmt."""
    w16, w32 = weights
    total = None
    for name in EQ_TERMS:
        for bd in (breakdown16, breakdown32):
            if name not in bd:
                raise IncompleteBreakdown(f"loss breakdown is missing {name!r}")
        t16 = breakdown16[name].value if hasattr(breakdown16[name], "value") else breakdown16[name]
        t32 = breakdown32[name].value if hasattr(breakdown32[name], "value") else breakdown32[name]
        pair = t16 * getattr(w16, name) + t32 * getattr(w32, name)
        if name in MEANED_TERMS:
            pair = pair * 0.5
        total = pair if total is None else total + pair
    return total


def disentanglement_report(s32: AudioBuffer, out: CascadeOutput,
                           bands: Optional[Sequence[BandSpec]] = None) -> MetricReport:
    """Band SDRs of the residual branch and seam checks of the full output."""
    if bands is None:
        bands = [BandSpec(0.0, 8000.0), BandSpec(8000.0, 16000.0)]
    report = MetricReport()
    for band in bands:
        report.add(f"d32_sdr_band_{band.label()}", band_sdr(s32, out.d_hat_32, band))
    report.add(f"s32_sdr_band_{INTERFACE_BAND.label()}",
               band_sdr(s32, out.s_hat_32, INTERFACE_BAND))
    report.add("s32_sdr_overall", sdr(s32, out.s_hat_32))
    report.add("interface_gap",
               abs(report.values[f"s32_sdr_band_{INTERFACE_BAND.label()}"]
                   - report.values["s32_sdr_overall"]))
    return report
