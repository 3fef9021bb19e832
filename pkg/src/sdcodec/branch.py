"""One codec branch: strided conv encoder, RVQ bottleneck, transposed-conv
decoder, and a two-scale waveform discriminator with least-squares losses.

Length bookkeeping: input is right-padded to a multiple of the stride
product, so every block maps lengths exactly (T -> T/s down, T -> T*s up)
and the decoder output is cropped back to the input length. Block kernels
are 2*stride with padding ceil(stride/2); transposed blocks add
output_padding 1 for odd strides to invert the length map exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .audio import AudioBuffer
from .errors import InvalidConfig, RateMismatch, ShapeMismatch, SignalTooShort
from .nn import Conv1d, ConvTranspose1d, LeakyReLU, Module, Snake, Tanh
from .rvq import Codebook, RVQResult, rvq_encode_rows
from .spectral import LossValue, Scale, default_scales, mel_loss_t
from .tensor import Tensor

FM_EPS = 1e-8


@dataclass(frozen=True)
class BranchConfig:
    sample_rate: int
    encoder_strides: tuple[int, ...]
    base_channels: int = 16
    latent_dim: int = 64
    n_quantizers: int = 4
    codebook_bits: int = 10
    activation: str = "snake"

    def __post_init__(self):
        object.__setattr__(self, "encoder_strides", tuple(self.encoder_strides))
        if self.sample_rate <= 0:
            raise InvalidConfig(f"sample_rate must be positive, got {self.sample_rate}")
        if not self.encoder_strides:
            raise InvalidConfig("encoder_strides must not be empty")
        if any(s < 2 for s in self.encoder_strides):
            raise InvalidConfig(f"strides must be >= 2, got {self.encoder_strides}")
        for name in ("base_channels", "latent_dim", "n_quantizers", "codebook_bits"):
            if getattr(self, name) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if self.activation not in ("snake", "tanh"):
            raise InvalidConfig(f"activation must be snake or tanh, got {self.activation!r}")
        if self.sample_rate % self.hop != 0:
            raise InvalidConfig(
                f"stride product {self.hop} must divide sample_rate {self.sample_rate}")

    @property
    def hop(self) -> int:
        return int(np.prod(self.encoder_strides))

    @property
    def frame_rate(self) -> int:
        return self.sample_rate // self.hop

    def channel_plan(self) -> list[int]:
        c = self.base_channels
        return [c] + [min(c * 2 ** (i + 1), 8 * c) for i in range(len(self.encoder_strides))]


def _act(kind: str, channels: int, dtype) -> Module:
    return Snake(channels, dtype=dtype) if kind == "snake" else Tanh()


class Encoder(Module):
    def __init__(self, cfg: BranchConfig, rng: np.random.Generator, dtype=np.float32):
        chans = cfg.channel_plan()
        self.stem = Conv1d(1, chans[0], 7, rng, padding=3, dtype=dtype)
        self.blocks = []
        for i, s in enumerate(cfg.encoder_strides):
            self.blocks.append(_act(cfg.activation, chans[i], dtype))
            self.blocks.append(Conv1d(chans[i], chans[i + 1], 2 * s, rng,
                                      stride=s, padding=math.ceil(s / 2), dtype=dtype))
        self.head_act = _act(cfg.activation, chans[-1], dtype)
        self.head = Conv1d(chans[-1], cfg.latent_dim, 3, rng, padding=1, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.stem(x)
        for layer in self.blocks:
            h = layer(h)
        return self.head(self.head_act(h))


class Decoder(Module):
    def __init__(self, cfg: BranchConfig, rng: np.random.Generator, dtype=np.float32):
        chans = cfg.channel_plan()
        self.stem = Conv1d(cfg.latent_dim, chans[-1], 3, rng, padding=1, dtype=dtype)
        self.blocks = []
        for i, s in reversed(list(enumerate(cfg.encoder_strides))):
            self.blocks.append(_act(cfg.activation, chans[i + 1], dtype))
            self.blocks.append(ConvTranspose1d(chans[i + 1], chans[i], 2 * s, rng,
                                               stride=s, padding=math.ceil(s / 2),
                                               output_padding=s % 2, dtype=dtype))
        self.head_act = _act(cfg.activation, chans[0], dtype)
        self.head = Conv1d(chans[0], 1, 7, rng, padding=3, dtype=dtype)

    def __call__(self, z: Tensor) -> Tensor:
        h = self.stem(z)
        for layer in self.blocks:
            h = layer(h)
        return T.tanh(self.head(self.head_act(h)))


class DiscScale(Module):
    """Strided conv stack over one waveform resolution."""

    def __init__(self, rng: np.random.Generator, dtype=np.float32):
        self.convs = [
            Conv1d(1, 16, 15, rng, stride=2, padding=7, dtype=dtype),
            Conv1d(16, 32, 9, rng, stride=2, padding=4, dtype=dtype),
            Conv1d(32, 64, 9, rng, stride=4, padding=4, dtype=dtype),
            Conv1d(64, 64, 9, rng, stride=4, padding=4, dtype=dtype),
        ]
        self.act = LeakyReLU(0.1)
        self.logits = Conv1d(64, 1, 3, rng, padding=1, dtype=dtype)

    def __call__(self, x: Tensor) -> tuple[Tensor, list[Tensor]]:
        feats = []
        h = x
        for conv in self.convs:
            h = self.act(conv(h))
            feats.append(h)
        return self.logits(h), feats


class Discriminator(Module):
    """Same stack applied to the raw waveform and a 2x-average-pooled copy."""

    def __init__(self, rng: np.random.Generator, n_scales: int = 2, dtype=np.float32):
        if n_scales < 2:
            raise InvalidConfig(f"discriminator needs >= 2 scales, got {n_scales}")
        self.scales = [DiscScale(rng, dtype) for _ in range(n_scales)]

    def __call__(self, x: Tensor) -> list[tuple[Tensor, list[Tensor]]]:
        out = []
        for k, scale in enumerate(self.scales):
            inp = T.avg_pool1d(x, 2 ** k) if k else x
            out.append(scale(inp))
        return out


# -- adversarial losses ---------------------------------------------------------

def generator_losses(disc: Discriminator, real: Tensor, fake: Tensor) -> tuple[Tensor, Tensor]:
    """(gen, fm) with gradients flowing through fake only."""
    if real.data.shape != fake.data.shape:
        raise ShapeMismatch(f"real {real.data.shape} vs fake {fake.data.shape}")
    with T.no_grad():
        real_out = disc(T.tensor(real.data))
    fake_out = disc(fake)
    gen_terms, fm_terms = [], []
    for (logits_r, feats_r), (logits_f, feats_f) in zip(real_out, fake_out):
        df = T.sub(logits_f, 1.0)
        gen_terms.append(T.mean_(T.mul(df, df)))
        for fr, ff in zip(feats_r, feats_f):
            norm = 1.0 / (float(np.mean(np.abs(fr.data))) + FM_EPS)
            fm_terms.append(T.mul(T.mean_(T.abs_(T.sub(T.tensor(fr.data), ff))), norm))
    gen = gen_terms[0]
    for t in gen_terms[1:]:
        gen = T.add(gen, t)
    gen = T.mul(gen, 1.0 / len(gen_terms))
    fm = fm_terms[0]
    for t in fm_terms[1:]:
        fm = T.add(fm, t)
    fm = T.mul(fm, 1.0 / len(fm_terms))
    return gen, fm


def discriminator_loss(disc: Discriminator, real: Tensor, fake: Tensor) -> Tensor:
    """mean((D(real)-1)^2) + mean(D(fake)^2); fake enters as a constant."""
    if real.data.shape != fake.data.shape:
        raise ShapeMismatch(f"real {real.data.shape} vs fake {fake.data.shape}")
    real_out = disc(T.tensor(real.data))
    fake_out = disc(T.tensor(fake.data))
    terms = []
    for (logits_r, _), (logits_f, _) in zip(real_out, fake_out):
        dr = T.sub(logits_r, 1.0)
        terms.append(T.add(T.mean_(T.mul(dr, dr)), T.mean_(T.mul(logits_f, logits_f))))
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return T.mul(total, 1.0 / len(terms))


def adversarial_losses(real: AudioBuffer, fake: AudioBuffer,
                       disc: Discriminator) -> tuple[LossValue, LossValue, LossValue]:
    """Evaluation-side wrapper returning (gen, fm, disc_loss) values."""
    if real.sample_rate != fake.sample_rate:
        raise ShapeMismatch(f"sample rates differ: {real.sample_rate} vs {fake.sample_rate}")
    if len(real) != len(fake):
        raise ShapeMismatch(f"lengths differ: {len(real)} vs {len(fake)}")
    rt = T.tensor(real.samples[None, None, :])
    ft = T.tensor(fake.samples[None, None, :])
    with T.no_grad():
        gen, fm = generator_losses(disc, rt, ft)
        dl = discriminator_loss(disc, rt, ft)
    return (LossValue(gen.item(), "gen"), LossValue(fm.item(), "fm"),
            LossValue(dl.item(), "disc"))


# -- the branch ----------------------------------------------------------------

@dataclass
class BranchOutput:
    decoded: AudioBuffer
    tokens: RVQResult
    loss_breakdown: dict[str, LossValue]


class CodecBranch(Module):
    def __init__(self, cfg: BranchConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.dtype = dtype
        self.encoder = Encoder(cfg, rng, dtype)
        self.decoder = Decoder(cfg, rng, dtype)
        self.books = [Codebook(cfg.codebook_bits, cfg.latent_dim, rng, dtype)
                      for _ in range(cfg.n_quantizers)]
        self.disc = Discriminator(rng, dtype=dtype)

    def generator_parameters(self) -> list[Tensor]:
        skip = {id(p) for p in self.disc.parameters()}
        return [p for p in self.parameters() if id(p) not in skip]

    def _padded(self, x: Tensor) -> tuple[Tensor, int]:
        t = x.data.shape[-1]
        pad = (-t) % self.cfg.hop
        return (T.pad_last(x, 0, pad) if pad else x), t

    def forward_t(self, x: Tensor) -> tuple[Tensor, RVQResult, Tensor]:
        """[B, 1, T] -> (latent [B, D, F], rvq result, decoded [B, 1, T])."""
        xp, t = self._padded(x)
        z = self.encoder(xp)
        b, d, f = z.data.shape
        rows = T.reshape(T.swap_last2(z), (b * f, d))
        res = rvq_encode_rows(rows, self.books)
        q3 = T.swap_last2(T.reshape(T.swap_last2(res.quantized_latent), (b, f, d)))
        decoded = self.decoder(q3)
        return z, res, T.slice_last(decoded, 0, t)

    def _check_input(self, x: AudioBuffer) -> None:
        if x.sample_rate != self.cfg.sample_rate:
            raise RateMismatch(f"branch expects {self.cfg.sample_rate} Hz, got {x.sample_rate}")
        if len(x) < self.cfg.hop:
            raise SignalTooShort(f"need at least {self.cfg.hop} samples, got {len(x)}")

    def forward(self, x: AudioBuffer, scales: Optional[Sequence[Scale]] = None) -> BranchOutput:
        """Full encode-quantize-decode pass plus the per-branch loss breakdown."""
        self._check_input(x)
        xt = T.tensor(x.samples[None, None, :].astype(self.dtype))
        with T.no_grad():
            _, res, dec = self.forward_t(xt)
            rows2 = T.reshape(dec, (1, dec.data.shape[-1]))
            ref2 = T.reshape(xt, (1, len(x)))
            sc = default_scales(x.sample_rate) if scales is None else scales
            mel = mel_loss_t(ref2, rows2, sc)
            gen, fm = generator_losses(self.disc, xt, dec)
        decoded = AudioBuffer(dec.data[0, 0].astype(np.float64), x.sample_rate)
        breakdown = {
            "gen": LossValue(gen.item(), "gen"),
            "fm": LossValue(fm.item(), "fm"),
            "mel": LossValue(mel.item(), "mel"),
            "cb": res.cb_loss,
            "cmt": res.cmt_loss,
        }
        return BranchOutput(decoded, res, breakdown)

    def encode(self, x: AudioBuffer) -> np.ndarray:
        """Token matrix [n_quantizers, ceil(len/hop)]."""
        self._check_input(x)
        xt = T.tensor(x.samples[None, None, :].astype(self.dtype))
        with T.no_grad():
            xp, _ = self._padded(xt)
            z = self.encoder(xp)
            b, d, f = z.data.shape
            rows = T.reshape(T.swap_last2(z), (b * f, d))
            res = rvq_encode_rows(rows, self.books)
        return res.tokens

    def decode_tokens(self, tokens: np.ndarray) -> AudioBuffer:
        """Reconstruct frames*hop samples from a token matrix."""
        from .rvq import rvq_decode

        q = rvq_decode(tokens, self.books)  # [D, F]
        d, f = q.data.shape
        with T.no_grad():
            dec = self.decoder(T.reshape(q, (1, d, f)))
        return AudioBuffer(dec.data[0, 0].astype(np.float64), self.cfg.sample_rate)
