"""One codec branch: shape laws, loss breakdown, adversarial separation,
and end-to-end gradients through the quantizer bottleneck.

The bottleneck passes gradients straight through, so its true forward is
piecewise constant in the encoder weights. The end-to-end check therefore
differentiates the surrogate rows + c, with c frozen at the base point's
snap offset: the surrogate's value and backward coincide with the real
path at the base point, and central differences are well defined on it.
The quantizer losses are checked on the real path against the parameter
group each one trains (cmt -> encoder, cb -> its own codebook).
"""

import numpy as np
import pytest

import sdcodec.tensor as T
from gradcheck import _scales_tiny, check
from sdcodec.audio import AudioBuffer
from sdcodec.branch import (
    BranchConfig,
    CodecBranch,
    Discriminator,
    adversarial_losses,
    discriminator_loss,
    generator_losses,
)
from sdcodec.cascade import LossWeights, eq_total
from sdcodec.errors import InvalidConfig, RateMismatch, ShapeMismatch, SignalTooShort
from sdcodec.nn import Adam
from sdcodec.rvq import mask_pinned_gradients, rvq_encode_rows
from sdcodec.spectral import mel_loss_t
from sdcodec.tensor import Tensor

TINY = BranchConfig(64, (2, 2), base_channels=2, latent_dim=3,
                    n_quantizers=2, codebook_bits=2)


def _tiny_branch(seed=0, dtype=np.float64):
    return CodecBranch(TINY, np.random.default_rng(seed), dtype=dtype)


def _tiny_input(seed=1, n=64):
    rng = np.random.default_rng(seed)
    return T.tensor(0.3 * rng.normal(size=(1, 1, n)))


def test_config_properties():
    cfg = BranchConfig(16000, (2, 4, 5, 8))
    assert cfg.hop == 320
    assert cfg.frame_rate == 50
    assert cfg.channel_plan() == [16, 32, 64, 128, 128]  # capped at 8x base


def test_config_validation():
    with pytest.raises(InvalidConfig):
        BranchConfig(16000, ())
    with pytest.raises(InvalidConfig):
        BranchConfig(16000, (1, 4))
    with pytest.raises(InvalidConfig):
        BranchConfig(16000, (2, 4, 5, 8), activation="relu")
    with pytest.raises(InvalidConfig):
        BranchConfig(16001, (2, 4, 5, 8))  # hop does not divide the rate
    with pytest.raises(InvalidConfig):
        BranchConfig(16000, (2, 4, 5, 8), n_quantizers=0)


def test_forward_one_second_16k():
    cfg = BranchConfig(16000, (2, 4, 5, 8))
    branch = CodecBranch(cfg, np.random.default_rng(0))
    x = AudioBuffer(0.3 * np.sin(2 * np.pi * 440 * np.arange(16000) / 16000), 16000)
    out = branch.forward(x)
    assert out.tokens.tokens.shape == (4, 50)
    assert len(out.decoded) == 16000
    assert out.decoded.sample_rate == 16000
    for name in ("gen", "fm", "mel", "cb", "cmt"):
        assert out.loss_breakdown[name].kind == name
        assert out.loss_breakdown[name].value >= 0.0


def test_forward_input_guards():
    branch = _tiny_branch()
    with pytest.raises(RateMismatch):
        branch.forward(AudioBuffer(np.zeros(64), 32000))
    with pytest.raises(SignalTooShort):
        branch.forward(AudioBuffer(np.zeros(3), 64))


def test_encode_matches_forward_decode():
    branch = _tiny_branch()
    x = AudioBuffer(0.3 * np.random.default_rng(2).normal(size=70), 64)
    tokens = branch.encode(x)
    assert tokens.shape == (2, 18)  # ceil(70 / 4) frames
    full = branch.decode_tokens(tokens)
    assert len(full) == 18 * 4
    out = branch.forward(x, scales=_scales_tiny())
    assert np.array_equal(out.decoded.samples, full.samples[:70])


def test_generator_parameters_partition():
    branch = _tiny_branch()
    gen = branch.generator_parameters()
    disc = branch.disc.parameters()
    assert len(gen) + len(disc) == len(branch.parameters())
    assert not ({id(p) for p in gen} & {id(p) for p in disc})


def test_fm_zero_on_identical_gen_positive():
    branch = _tiny_branch()
    x = _tiny_input()
    gen, fm = generator_losses(branch.disc, x, T.tensor(x.data.copy()))
    assert fm.item() == 0.0
    assert gen.item() > 0.0
    with pytest.raises(ShapeMismatch):
        generator_losses(branch.disc, x, T.tensor(np.zeros((1, 1, 32))))


def test_discriminator_loss_nonnegative_and_guarded():
    branch = _tiny_branch()
    x = _tiny_input()
    dl = discriminator_loss(branch.disc, x, T.tensor(np.zeros_like(x.data)))
    assert dl.item() >= 0.0
    with pytest.raises(ShapeMismatch):
        discriminator_loss(branch.disc, x, T.tensor(np.zeros((1, 1, 32))))
    with pytest.raises(InvalidConfig):
        Discriminator(np.random.default_rng(0), n_scales=1)


def test_adversarial_losses_wrapper():
    branch = _tiny_branch()
    rng = np.random.default_rng(3)
    a = AudioBuffer(0.2 * rng.normal(size=64), 64)
    b = AudioBuffer(0.2 * rng.normal(size=64), 64)
    gen, fm, disc = adversarial_losses(a, b, branch.disc)
    assert (gen.kind, fm.kind, disc.kind) == ("gen", "fm", "disc")
    assert min(gen.value, fm.value, disc.value) >= 0.0
    with pytest.raises(ShapeMismatch):
        adversarial_losses(a, AudioBuffer(b.samples, 128), branch.disc)
    with pytest.raises(ShapeMismatch):
        adversarial_losses(a, AudioBuffer(b.samples[:32], 64), branch.disc)


def _gen_update(branch, x_t, scales):
    z, res, dec = branch.forward_t(x_t)
    mel = mel_loss_t(T.reshape(x_t, (1, x_t.data.shape[-1])),
                     T.reshape(dec, (1, dec.data.shape[-1])), scales)
    gen, fm = generator_losses(branch.disc, x_t, dec)
    terms = {"gen": gen, "fm": fm, "mel": mel, "cb": res.cb_loss_t, "cmt": res.cmt_loss_t}
    total = eq_total(terms, LossWeights())
    branch.zero_grad()
    T.backward(total)
    mask_pinned_gradients(branch.books)
    Adam(branch.generator_parameters(), lr=1e-3).step()
    return dec


def test_generator_update_leaves_disc_untouched():
    branch = _tiny_branch(seed=4)
    before_disc = [p.data.copy() for p in branch.disc.parameters()]
    before_gen = [p.data.copy() for p in branch.generator_parameters()]
    _gen_update(branch, _tiny_input(5), _scales_tiny())
    assert all(np.array_equal(b, p.data)
               for b, p in zip(before_disc, branch.disc.parameters()))
    assert any(not np.array_equal(b, p.data)
               for b, p in zip(before_gen, branch.generator_parameters()))
    for book in branch.books:
        assert np.all(book.entries.data[0] == 0.0)  # pin survives the step


def test_disc_update_leaves_generator_untouched():
    branch = _tiny_branch(seed=6)
    x_t = _tiny_input(7)
    with T.no_grad():
        _, _, dec = branch.forward_t(x_t)
    before_gen = [p.data.copy() for p in branch.generator_parameters()]
    before_disc = [p.data.copy() for p in branch.disc.parameters()]
    branch.zero_grad()
    T.backward(discriminator_loss(branch.disc, x_t, T.tensor(dec.data)))
    Adam(branch.disc.parameters(), lr=1e-3).step()
    assert all(np.array_equal(b, p.data)
               for b, p in zip(before_gen, branch.generator_parameters()))
    assert any(not np.array_equal(b, p.data)
               for b, p in zip(before_disc, branch.disc.parameters()))


# -- end-to-end gradients ---------------------------------------------------


def _weighted_total(branch, x_t, dec, scales):
    gen, fm = generator_losses(branch.disc, x_t, dec)
    mel = mel_loss_t(T.reshape(x_t, (1, x_t.data.shape[-1])),
                     T.reshape(dec, (1, dec.data.shape[-1])), scales)
    return T.add(T.add(gen, T.mul(fm, 2.0)), T.mul(mel, 15.0))


def _rows_of(branch, x_t):
    z = branch.encoder(x_t)
    b, d, f = z.data.shape
    return T.reshape(T.swap_last2(z), (b * f, d)), (b, d, f)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_e2e_gradient_decoder_weight(seed):
    branch = _tiny_branch(seed=seed)
    x_t = _tiny_input(seed + 10)
    scales = _scales_tiny()

    def fn():
        _, _, dec = branch.forward_t(x_t)
        return _weighted_total(branch, x_t, dec, scales)

    check(fn, [branch.decoder.head.weight], rtol=1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_e2e_gradient_encoder_weight_through_quantizer(seed):
    branch = _tiny_branch(seed=seed)
    x_t = _tiny_input(seed + 20)
    scales = _scales_tiny()

    with T.no_grad():
        rows0, (b, d, f) = _rows_of(branch, x_t)
        res0 = rvq_encode_rows(rows0, branch.books)
    # snap offset frozen at the base point; quantized_latent comes back [dim, frames]
    offset = T.tensor(res0.quantized_latent.data.T - rows0.data)

    def fn():
        rows, _ = _rows_of(branch, x_t)
        q3 = T.swap_last2(T.reshape(T.add(rows, offset), (b, f, d)))
        dec = branch.decoder(q3)
        return _weighted_total(branch, x_t, dec, scales)

    check(fn, [branch.encoder.stem.weight], rtol=1e-3)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cmt_gradient_reaches_encoder(seed):
    branch = _tiny_branch(seed=seed)
    x_t = _tiny_input(seed + 30)
    base_tokens = branch.encode(AudioBuffer(x_t.data[0, 0], 64))

    def fn():
        rows, _ = _rows_of(branch, x_t)
        return rvq_encode_rows(rows, branch.books).cmt_loss_t

    check(fn, [branch.encoder.stem.weight], rtol=1e-3)
    assert np.array_equal(branch.encode(AudioBuffer(x_t.data[0, 0], 64)), base_tokens)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cb_gradient_reaches_last_codebook(seed):
    branch = _tiny_branch(seed=seed)
    x_t = _tiny_input(seed + 40)

    def fn():
        rows, _ = _rows_of(branch, x_t)
        return rvq_encode_rows(rows, branch.books).cb_loss_t

    check(fn, [branch.books[-1].entries], rtol=1e-3)
