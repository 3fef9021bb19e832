"""Run configuration: a strict INI file mapped onto the cascade dataclasses.

Unknown sections or keys are rejected rather than ignored, and referenced
input paths must exist at load time, so a typo fails before a long run
starts instead of silently training with defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .branch import BranchConfig
from .cascade import CascadeConfig, LossWeights, StageSchedule
from .errors import InvalidConfig
from .metrics import BandSpec
from .resample import SincKernel

# section -> {key: parser}; every key is optional and falls back to defaults
_BRANCH_KEYS = {
    "sample_rate": int,
    "strides": lambda s: tuple(int(v) for v in s.split(",")),
    "base_channels": int,
    "latent_dim": int,
    "n_quantizers": int,
    "codebook_bits": int,
    "activation": str,
}
_WEIGHT_KEYS = {name: float for name in ("gen", "fm", "mel", "cb", "cmt")}
_SCHEMA = {
    "data": {"train_dir": str, "eval_dir": str, "crop_seconds": float},
    "training": {"seed": int, "batch_size": int, "out_dir": str,
                 "stage1_steps": int, "stage2_steps": int, "finetune_steps": int},
    "branch_low": _BRANCH_KEYS,
    "branch_high": _BRANCH_KEYS,
    "weights_low": _WEIGHT_KEYS,
    "weights_high": _WEIGHT_KEYS,
    "kernel": {"zero_crossings": int, "window": str, "cutoff_ratio": float},
    "metrics": {"bands": str},
}

_BRANCH_DEFAULTS = {
    "branch_low": {"sample_rate": 16000, "strides": (2, 4, 5, 8)},
    "branch_high": {"sample_rate": 32000, "strides": (2, 4, 8, 10)},
}


@dataclass
class RunConfig:
    cascade: CascadeConfig
    train_dir: Path
    out_dir: Path
    eval_dir: Optional[Path] = None
    seed: int = 0
    batch_size: int = 2
    crop_seconds: float = 0.5
    bands: tuple[BandSpec, ...] = (BandSpec(0.0, 8000.0), BandSpec(8000.0, 16000.0))


def _parse_bands(text: str) -> tuple[BandSpec, ...]:
    bands = []
    for part in text.split(","):
        lo, _, hi = part.partition(":")
        try:
            bands.append(BandSpec(float(lo), float(hi)))
        except ValueError as exc:
            raise InvalidConfig(f"bad band {part!r} (expected low:high)") from exc
    return tuple(bands)


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidConfig(f"config file {path} does not exist")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise InvalidConfig(f"cannot parse {path}: {exc}") from exc

    raw: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise InvalidConfig(f"unknown section [{section}]")
        raw[section] = {}
        for key, text in parser.items(section):
            if key not in _SCHEMA[section]:
                raise InvalidConfig(f"unknown key {key!r} in section [{section}]")
            try:
                raw[section][key] = _SCHEMA[section][key](text)
            except (TypeError, ValueError) as exc:
                raise InvalidConfig(f"bad value for [{section}] {key}: {text!r}") from exc

    data = raw.get("data", {})
    if "train_dir" not in data:
        raise InvalidConfig("config must set [data] train_dir")
    train_dir = Path(data["train_dir"])
    if not train_dir.is_dir():
        raise InvalidConfig(f"train_dir {train_dir} does not exist")
    eval_dir = None
    if "eval_dir" in data:
        eval_dir = Path(data["eval_dir"])
        if not eval_dir.is_dir():
            raise InvalidConfig(f"eval_dir {eval_dir} does not exist")

    training = raw.get("training", {})
    if "out_dir" not in training:
        raise InvalidConfig("config must set [training] out_dir")

    branches = []
    for section in ("branch_low", "branch_high"):
        kw = dict(_BRANCH_DEFAULTS[section])
        kw.update(raw.get(section, {}))
        kw["encoder_strides"] = kw.pop("strides")
        branches.append(BranchConfig(**kw))

    weights = tuple(LossWeights(**raw.get(s, {})) for s in ("weights_low", "weights_high"))
    schedule = StageSchedule(
        stage1=training.get("stage1_steps", 2000),
        stage2=training.get("stage2_steps", 2000),
        finetune=training.get("finetune_steps", 1000),
    )
    kernel_kw = raw.get("kernel", {})
    if "zero_crossings" in kernel_kw:
        kernel_kw["zero_crossings_per_side"] = kernel_kw.pop("zero_crossings")
    cascade = CascadeConfig(branches=tuple(branches), loss_weights=weights,
                            schedule=schedule, kernel=SincKernel(**kernel_kw))

    bands = _parse_bands(raw["metrics"]["bands"]) if "bands" in raw.get("metrics", {}) \
        else RunConfig.__dataclass_fields__["bands"].default

    return RunConfig(
        cascade=cascade,
        train_dir=train_dir,
        eval_dir=eval_dir,
        out_dir=Path(training["out_dir"]),
        seed=training.get("seed", 0),
        batch_size=training.get("batch_size", 2),
        crop_seconds=data.get("crop_seconds", 0.5),
        bands=bands,
    )


def config_template(train_dir: str, out_dir: str, seed: int = 0,
                    stage1: int = 2000, stage2: int = 2000, finetune: int = 1000) -> str:
    """INI text with every supported key spelled out."""
    return f"""\
[data]
train_dir = {train_dir}
crop_seconds = 0.5

[training]
seed = {seed}
batch_size = 2
out_dir = {out_dir}
stage1_steps = {stage1}
stage2_steps = {stage2}
finetune_steps = {finetune}

[branch_low]
sample_rate = 16000
strides = 2,4,5,8
base_channels = 16
latent_dim = 64
n_quantizers = 4
codebook_bits = 10
activation = snake

[branch_high]
sample_rate = 32000
strides = 2,4,8,10
base_channels = 16
latent_dim = 64
n_quantizers = 4
codebook_bits = 10
activation = snake

[weights_low]
gen = 1.0
fm = 2.0
mel = 15.0
cb = 1.0
cmt = 0.25

[weights_high]
gen = 1.0
fm = 2.0
mel = 15.0
cb = 1.0
cmt = 0.25

[kernel]
zero_crossings = 64
window = hann
cutoff_ratio = 1.0

[metrics]
bands = 0:8000,8000:16000
"""
