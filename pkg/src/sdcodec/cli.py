"""Command-line surface: train, encode, decode, eval, inpaint.

Every failure exits nonzero with a single "error: <Kind>: <reason>" line on
stderr. SDC_LOG={debug,info,warning} controls verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, read_wav, write_wav
from .bitstream import BranchTokens, payload_bitrates, read_stream, write_stream
from .cascade import disentanglement_report
from .config import load_run_config
from .errors import CodecError, ConfigMismatch, MalformedStream, RateMismatch
from .metrics import BandSpec, MetricReport, band_energy_fraction, build_report
from .resample import resample_down, resample_up
from .spectral import mel_loss
from .train import load_cascade, train_cascade

log = logging.getLogger("sdcodec.cli")


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING}.get(os.environ.get("SDC_LOG", "").lower(),
                                             logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    seed = run.seed if args.seed is None else args.seed
    cascade, history = train_cascade(run.train_dir, run.cascade, run.out_dir,
                                     seed=seed, batch_size=run.batch_size,
                                     crop_seconds=run.crop_seconds)
    final = Path(run.out_dir) / "final.ckpt"
    steps = sum(len(v) for v in history.values())
    print(f"trained {steps} steps; checkpoint at {final}")
    return 0


def _load_wav_checked(path) -> AudioBuffer:
    return read_wav(path)


def cmd_encode(args) -> int:
    cascade, _ = load_cascade(args.ckpt)
    lo_rate = cascade.cfg.branches[0].sample_rate
    hi_rate = cascade.cfg.branches[1].sample_rate
    wav = _load_wav_checked(getattr(args, "in"))
    if args.branches == 2:
        if wav.sample_rate != hi_rate:
            raise RateMismatch(f"two-branch encode needs {hi_rate} Hz input, got {wav.sample_rate}")
        s16 = resample_down(wav, cascade.cfg.up_factor, cascade.cfg.kernel)
        tokens = cascade.encode(s16, wav)
    else:
        if wav.sample_rate == hi_rate:
            wav = resample_down(wav, cascade.cfg.up_factor, cascade.cfg.kernel)
        elif wav.sample_rate != lo_rate:
            raise RateMismatch(f"expected {lo_rate} or {hi_rate} Hz input, got {wav.sample_rate}")
        tokens = cascade.encode(wav, None)
    rates = (lo_rate, hi_rate)
    bits = [cascade.cfg.branches[i].codebook_bits for i in range(len(tokens))]
    branches = [BranchTokens(rates[i], bits[i], t) for i, t in enumerate(tokens)]
    frame_rate = cascade.cfg.branches[0].frame_rate
    write_stream(args.out, frame_rate, branches)
    bps = payload_bitrates(frame_rate, branches)
    log.info("wrote %s: %s bps payload", args.out, "+".join(str(b) for b in bps))
    print(f"encoded {args.out} ({sum(bps)} bps payload)")
    return 0


def _check_stream_matches(cascade, frame_rate: int, branches: list[BranchTokens]) -> None:
    if frame_rate != cascade.cfg.branches[0].frame_rate:
        raise ConfigMismatch(
            f"stream frame rate {frame_rate} != checkpoint {cascade.cfg.branches[0].frame_rate}")
    for i, br in enumerate(branches):
        cfg = cascade.cfg.branches[i]
        if (br.sample_rate, br.n_quantizers, br.codebook_bits) != \
                (cfg.sample_rate, cfg.n_quantizers, cfg.codebook_bits):
            raise ConfigMismatch(
                f"stream branch {i} ({br.sample_rate} Hz, {br.n_quantizers} books, "
                f"{br.codebook_bits} bits) does not match the checkpoint")


def cmd_decode(args) -> int:
    cascade, _ = load_cascade(args.ckpt)
    frame_rate, branches = read_stream(getattr(args, "in"))
    _check_stream_matches(cascade, frame_rate, branches)
    if args.band == "16k":
        out = cascade.decode_low(branches[0].tokens)
    else:
        if len(branches) < 2:
            raise MalformedStream("stream carries only the low branch; decode with --band 16k")
        out = cascade.decode_full(branches[0].tokens, branches[1].tokens)
    write_wav(args.out, out)
    print(f"decoded {args.out} ({out.sample_rate} Hz, {len(out)} samples)")
    return 0


def cmd_eval(args) -> int:
    cascade, _ = load_cascade(args.ckpt)
    hi_rate = cascade.cfg.branches[1].sample_rate
    ref_dir = Path(args.ref_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(ref_dir.glob("*.wav"))
    if not files:
        from .errors import NoData

        raise NoData(f"no .wav files in {ref_dir}")
    totals: dict[str, list[float]] = {}
    for path in files:
        s32 = _load_wav_checked(path)
        if s32.sample_rate != hi_rate:
            raise RateMismatch(f"{path}: expected {hi_rate} Hz, got {s32.sample_rate}")
        s16 = resample_down(s32, cascade.cfg.up_factor, cascade.cfg.kernel)
        out = cascade.forward(s16, s32)
        report = build_report(s32, out.s_hat_32)
        for name, value in disentanglement_report(s32, out).values.items():
            report.add(name, value)
        (out_dir / f"{path.stem}.report.txt").write_text(report.to_text())
        (out_dir / f"{path.stem}.report.json").write_text(report.to_json())
        for name, value in report.values.items():
            totals.setdefault(name, []).append(value)
        log.info("evaluated %s", path.name)
    aggregate = MetricReport()
    for name, values in totals.items():
        aggregate.add(name, float(np.mean(values)))
    (out_dir / "aggregate.report.txt").write_text(aggregate.to_text())
    (out_dir / "aggregate.report.json").write_text(aggregate.to_json())
    print(f"evaluated {len(files)} files; reports in {out_dir}")
    return 0


def cmd_inpaint(args) -> int:
    cascade, _ = load_cascade(args.ckpt)
    lo_rate = cascade.cfg.branches[0].sample_rate
    s16 = _load_wav_checked(getattr(args, "in"))
    if s16.sample_rate != lo_rate:
        raise RateMismatch(f"inpaint expects {lo_rate} Hz input, got {s16.sample_rate}")
    out = cascade.inpaint(s16)
    write_wav(args.out, out.s_hat_32)

    # the comparison triple: low-branch upsample, band-stripped inpaint, inpaint
    up16 = resample_up(out.d_hat_16, cascade.cfg.up_factor, cascade.cfg.kernel)
    stripped = resample_up(
        resample_down(out.s_hat_32, cascade.cfg.up_factor, cascade.cfg.kernel),
        cascade.cfg.up_factor, cascade.cfg.kernel)
    report = MetricReport()
    high_band = BandSpec(lo_rate / 2.0, cascade.cfg.branches[1].sample_rate / 2.0)
    frac = band_energy_fraction(out.s_hat_32, high_band)
    report.add("inpaint_high_band_energy_fraction", frac)
    report.add("inpaint_high_band_energy_db", 10.0 * np.log10(max(frac, 1e-30)))
    if args.ref is not None:
        ref = _load_wav_checked(args.ref)
        if ref.sample_rate != out.s_hat_32.sample_rate or len(ref) != len(out.s_hat_32):
            raise RateMismatch("reference must match the inpainted output rate and length")
        report.add("mel_upsampled_low", mel_loss(ref, up16).value)
        report.add("mel_band_stripped", mel_loss(ref, stripped).value)
        report.add("mel_inpainted", mel_loss(ref, out.s_hat_32).value)
    else:
        report.add("mel_inpaint_vs_upsampled_low", mel_loss(up16, out.s_hat_32).value)
        report.add("mel_inpaint_vs_band_stripped", mel_loss(stripped, out.s_hat_32).value)
    report_path = Path(str(args.out) + ".report.txt")
    report_path.write_text(report.to_text())
    Path(str(args.out) + ".report.json").write_text(report.to_json())
    print(f"inpainted {args.out}; report at {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdcodec",
                                     description="two-branch residual neural audio codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the cascade from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("encode", help="compress a wav file to a token stream")
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--branches", type=int, choices=(1, 2), default=2)
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct audio from a token stream")
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--band", choices=("16k", "32k"), default="32k")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("eval", help="evaluate the codec over a directory of wavs")
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("inpaint", help="synthesize the upper band from 16 kHz input")
    p.add_argument("--in", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ref", default=None, help="true 32 kHz wav for reference metrics")
    p.set_defaults(fn=cmd_inpaint)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CodecError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
