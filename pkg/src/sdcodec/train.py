"""Staged cascade training: low branch, then the residual branch against a
frozen low branch, then joint finetuning of everything.

Each step alternates one generator update and one discriminator update.
Frozen parameters are never touched: stage 2 runs the low branch inside
no_grad and steps only the high-branch optimizers, so low-branch arrays
stay bit-identical. All randomness flows from three seeded generators
(init, batching, codebook revival), making runs reproducible.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .cascade import Cascade, CascadeConfig, eq_total, finetune_loss
from .data import CropDataset
from .errors import TrainingDiverged
from .nn import Adam, load_into, load_checkpoint, save_checkpoint
from .branch import CodecBranch, discriminator_loss, generator_losses
from .resample import upsample_array
from .rvq import mask_pinned_gradients, record_usage, revive_dead_entries
from .spectral import default_scales, mel_loss_t

log = logging.getLogger("sdcodec.train")

GEN_TERMS = ("gen", "fm", "mel", "cb", "cmt")


def _rows(x: T.Tensor) -> T.Tensor:
    b, _, t = x.data.shape
    return T.reshape(x, (b, t))


def _latent_rows(z: T.Tensor) -> np.ndarray:
    b, d, f = z.data.shape
    return z.data.swapaxes(1, 2).reshape(b * f, d)


def smoothed_drop(values: list[float], window: int = 25) -> float:
    """Fractional drop between the first and last `window`-step means."""
    if len(values) < 2 * window:
        window = max(1, len(values) // 2)
    head = float(np.mean(values[:window]))
    tail = float(np.mean(values[-window:]))
    if head == 0.0:
        return 0.0
    return (head - tail) / head


class Trainer:
    def __init__(self, cascade: Cascade, dataset: CropDataset, out_dir,
                 seed: int = 0, batch_size: int = 2):
        self.cascade = cascade
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.batch_size = batch_size
        self.data_rng = np.random.default_rng(seed + 1)
        self.revive_rng = np.random.default_rng(seed + 2)
        self.scales_low = default_scales(cascade.cfg.branches[0].sample_rate)
        self.scales_high = default_scales(cascade.cfg.branches[1].sample_rate)
        self.up_taps = cascade.cfg.kernel.taps(cascade.cfg.up_factor).astype(np.float32)

        self.opt_gen_low = Adam(cascade.low.generator_parameters())
        self.opt_disc_low = Adam(cascade.low.disc.parameters())
        self.opt_gen_high = Adam(cascade.high.generator_parameters())
        self.opt_disc_high = Adam(cascade.high.disc.parameters())
        self.history: dict[str, list[dict]] = {"stage1": [], "stage2": [], "finetune": []}

    # -- shared pieces ---------------------------------------------------

    def _branch_terms(self, branch: CodecBranch, x_t: T.Tensor, scales):
        """Forward one branch and build its five tensor loss terms."""
        z, res, dec = branch.forward_t(x_t)
        mel = mel_loss_t(_rows(x_t), _rows(dec), scales)
        gen, fm = generator_losses(branch.disc, x_t, dec)
        terms = {"gen": gen, "fm": fm, "mel": mel, "cb": res.cb_loss_t, "cmt": res.cmt_loss_t}
        return z, res, dec, terms

    def _check_finite(self, stage: str, step: int, floats: dict[str, float]) -> None:
        for name, value in floats.items():
            if not np.isfinite(value):
                raise TrainingDiverged(f"{stage}: loss term {name!r} diverged at step {step}")

    def _disc_update(self, branch: CodecBranch, opt: Adam, real: T.Tensor,
                     fake: T.Tensor) -> float:
        branch.zero_grad()
        dl = discriminator_loss(branch.disc, real, fake)
        T.backward(dl)
        opt.step()
        return dl.item()

    def _book_maintenance(self, branch: CodecBranch, tokens: np.ndarray,
                          latents: np.ndarray) -> None:
        record_usage(branch.books, tokens)
        revive_dead_entries(branch.books, latents, self.revive_rng)

    def _log_step(self, stage: str, step: int, floats: dict[str, float]) -> None:
        self.history[stage].append({"step": step, **floats})
        if step % 50 == 0 or step < 3:
            msg = " ".join(f"{k}={v:.4f}" for k, v in floats.items())
            log.info("stage=%s step=%d %s", stage, step, msg)
        else:
            log.debug("stage=%s step=%d total=%.4f", stage, step, floats["total"])

    def _upsample_np(self, rows: np.ndarray) -> np.ndarray:
        return np.stack([upsample_array(r, self.cascade.cfg.up_factor, self.up_taps)
                         for r in rows])

    # -- stages ----------------------------------------------------------

    def _single_branch_step(self, stage: str, step: int, branch: CodecBranch,
                            opt_gen: Adam, opt_disc: Adam, x: np.ndarray,
                            scales, weights) -> None:
        x_t = T.tensor(x)
        z, res, dec, terms = self._branch_terms(branch, x_t, scales)
        total = eq_total(terms, weights)
        floats = {k: v.item() for k, v in terms.items()}
        floats["total"] = total.item()
        self._check_finite(stage, step, floats)
        branch.zero_grad()
        T.backward(total)
        mask_pinned_gradients(branch.books)
        opt_gen.step()
        floats["disc"] = self._disc_update(branch, opt_disc, x_t, dec)
        self._check_finite(stage, step, {"disc": floats["disc"]})
        self._book_maintenance(branch, res.tokens, _latent_rows(z))
        self._log_step(stage, step, floats)

    def _stage1(self, steps: int) -> None:
        w = self.cascade.cfg.loss_weights[0]
        for step in range(steps):
            x16, _ = self.dataset.sample_batch(self.batch_size, self.data_rng)
            self._single_branch_step("stage1", step, self.cascade.low,
                                     self.opt_gen_low, self.opt_disc_low,
                                     x16, self.scales_low, w)

    def _stage2(self, steps: int) -> None:
        w = self.cascade.cfg.loss_weights[1]
        for step in range(steps):
            x16, x32 = self.dataset.sample_batch(self.batch_size, self.data_rng)
            with T.no_grad():
                _, _, d16 = self.cascade.low.forward_t(T.tensor(x16))
            up = self._upsample_np(d16.data[:, 0, :])
            residual = x32 - up[:, None, :]
            self._single_branch_step("stage2", step, self.cascade.high,
                                     self.opt_gen_high, self.opt_disc_high,
                                     residual, self.scales_high, w)

    def _finetune(self, steps: int) -> None:
        w_low, w_high = self.cascade.cfg.loss_weights
        factor = self.cascade.cfg.up_factor
        for step in range(steps):
            x16, x32 = self.dataset.sample_batch(self.batch_size, self.data_rng)
            x16_t, x32_t = T.tensor(x16), T.tensor(x32)

            z1, res1, dec1 = self.cascade.low.forward_t(x16_t)
            up = T.upsample_sinc(_rows(dec1), factor, self.up_taps)
            b, th = up.data.shape
            residual = T.sub(x32_t, T.reshape(up, (b, 1, th)))
            z2, res2, dec2 = self.cascade.high.forward_t(residual)

            mel1 = mel_loss_t(_rows(x16_t), _rows(dec1), self.scales_low)
            gen1, fm1 = generator_losses(self.cascade.low.disc, x16_t, dec1)
            mel2 = mel_loss_t(_rows(residual), _rows(dec2), self.scales_high)
            gen2, fm2 = generator_losses(self.cascade.high.disc, residual, dec2)
            bd1 = {"gen": gen1, "fm": fm1, "mel": mel1, "cb": res1.cb_loss_t, "cmt": res1.cmt_loss_t}
            bd2 = {"gen": gen2, "fm": fm2, "mel": mel2, "cb": res2.cb_loss_t, "cmt": res2.cmt_loss_t}
            total = finetune_loss(bd1, bd2, (w_low, w_high))

            floats = {f"{k}16": v.item() for k, v in bd1.items()}
            floats.update({f"{k}32": v.item() for k, v in bd2.items()})
            floats["total"] = total.item()
            self._check_finite("finetune", step, floats)

            self.cascade.zero_grad()
            T.backward(total)
            mask_pinned_gradients(self.cascade.low.books)
            mask_pinned_gradients(self.cascade.high.books)
            self.opt_gen_low.step()
            self.opt_gen_high.step()

            floats["disc16"] = self._disc_update(self.cascade.low, self.opt_disc_low, x16_t, dec1)
            floats["disc32"] = self._disc_update(self.cascade.high, self.opt_disc_high,
                                                 T.tensor(residual.data), dec2)
            self._check_finite("finetune", step, {"disc16": floats["disc16"],
                                                  "disc32": floats["disc32"]})
            self._book_maintenance(self.cascade.low, res1.tokens, _latent_rows(z1))
            self._book_maintenance(self.cascade.high, res2.tokens, _latent_rows(z2))
            self._log_step("finetune", step, floats)

    # -- driver ----------------------------------------------------------

    def train(self) -> dict[str, list[dict]]:
        sched = self.cascade.cfg.schedule
        log.info("stage 1: %d steps on the %d Hz branch",
                 sched.stage1, self.cascade.cfg.branches[0].sample_rate)
        self._stage1(sched.stage1)
        self._save_stage("stage1")
        log.info("stage 2: %d steps on the %d Hz residual branch",
                 sched.stage2, self.cascade.cfg.branches[1].sample_rate)
        self._stage2(sched.stage2)
        self._save_stage("stage2")
        log.info("finetune: %d joint steps", sched.finetune)
        self._finetune(sched.finetune)
        self._save_stage("final")
        return self.history

    def _save_stage(self, tag: str) -> None:
        save_cascade(self.out_dir / f"{tag}.ckpt", self.cascade, tag, self.seed)
        stage_key = {"stage1": "stage1", "stage2": "stage2", "final": "finetune"}[tag]
        rows = self.history[stage_key]
        if rows:
            path = self.out_dir / f"losses_{stage_key}.csv"
            with open(path, "w", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                writer.writerows(rows)


def save_cascade(path, cascade: Cascade, stage: str, seed: int) -> None:
    manifest = {
        "kind": "cascade",
        "stage": stage,
        "seed": seed,
        "config": asdict(cascade.cfg),
    }
    save_checkpoint(path, manifest, {n: p.data for n, p in cascade.named_parameters()})


def load_cascade(path) -> tuple[Cascade, dict]:
    from .branch import BranchConfig
    from .cascade import LossWeights, StageSchedule
    from .resample import SincKernel

    manifest, params = load_checkpoint(path)
    cfg_d = manifest["config"]
    cfg = CascadeConfig(
        branches=tuple(BranchConfig(**{**b, "encoder_strides": tuple(b["encoder_strides"])})
                       for b in cfg_d["branches"]),
        loss_weights=tuple(LossWeights(**w) for w in cfg_d["loss_weights"]),
        schedule=StageSchedule(**cfg_d["schedule"]),
        kernel=SincKernel(**cfg_d["kernel"]),
    )
    cascade = Cascade(cfg, np.random.default_rng(0))
    load_into(cascade, params)
    return cascade, manifest


def train_cascade(dataset_dir, config: CascadeConfig, out_dir, seed: int = 0,
                  batch_size: int = 2, crop_seconds: float = 0.5) -> tuple[Cascade, dict]:
    """Generate-and-train entry point used by the CLI."""
    dataset = CropDataset(dataset_dir, crop_seconds=crop_seconds,
                          kernel=config.kernel, factor=config.up_factor)
    cascade = Cascade(config, np.random.default_rng(seed))
    trainer = Trainer(cascade, dataset, out_dir, seed=seed, batch_size=batch_size)
    history = trainer.train()
    return cascade, history
