"""Frequency-split residual audio codec with a self-contained autodiff core."""

from .audio import AudioBuffer, ensure_rate, read_wav, write_wav
from .bitstream import (
    BranchTokens,
    parse_stream,
    pack_stream,
    payload_bitrates,
    read_stream,
    write_stream,
)
from .branch import (
    BranchConfig,
    BranchOutput,
    CodecBranch,
    Discriminator,
    adversarial_losses,
    discriminator_loss,
    generator_losses,
)
from .cascade import (
    Cascade,
    CascadeConfig,
    CascadeOutput,
    LossWeights,
    StageSchedule,
    default_cascade_config,
    disentanglement_report,
    eq_total,
    finetune_loss,
)
from .config import RunConfig, config_template, load_run_config
from .data import CropDataset, generate_dataset, synth_signal
from .errors import (
    CodecError,
    ConfigMismatch,
    EmptySignal,
    IncompleteBreakdown,
    InvalidConfig,
    InvalidFactor,
    InvalidToken,
    IoError,
    MalformedStream,
    MalformedWav,
    NoData,
    NotAScalar,
    RateMismatch,
    ShapeMismatch,
    SignalTooShort,
    StaleGraph,
    TrainingDiverged,
    UndefinedReference,
    UnsupportedWav,
)
from .metrics import (
    BandSpec,
    MetricReport,
    band_energy_fraction,
    band_restrict,
    band_sdr,
    build_report,
    default_bands,
    sdr,
    si_sdr,
)
from .nn import (
    Adam,
    Conv1d,
    ConvTranspose1d,
    LeakyReLU,
    Module,
    Snake,
    Tanh,
    kaiming_uniform,
    load_checkpoint,
    load_into,
    save_checkpoint,
)
from .resample import (
    DEFAULT_KERNEL,
    SincKernel,
    downsample_array,
    resample_down,
    resample_up,
    upsample_array,
)
from .rvq import (
    Codebook,
    RVQResult,
    mask_pinned_gradients,
    record_usage,
    revive_dead_entries,
    rvq_decode,
    rvq_encode,
)
from .spectral import (
    LOG_FLOOR,
    LossValue,
    MelFilterbank,
    StftConfig,
    default_scales,
    mel_loss,
    stft_loss,
    stft_mag,
    waveform_loss,
)
from .tensor import Tensor, no_grad
from .train import Trainer, load_cascade, save_cascade, smoothed_drop, train_cascade

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "ensure_rate", "read_wav", "write_wav",
    "BranchTokens", "parse_stream", "pack_stream", "payload_bitrates",
    "read_stream", "write_stream",
    "BranchConfig", "BranchOutput", "CodecBranch", "Discriminator",
    "adversarial_losses", "discriminator_loss", "generator_losses",
    "Cascade", "CascadeConfig", "CascadeOutput", "LossWeights",
    "StageSchedule", "default_cascade_config", "disentanglement_report",
    "eq_total", "finetune_loss",
    "RunConfig", "config_template", "load_run_config",
    "CropDataset", "generate_dataset", "synth_signal",
    "CodecError", "ConfigMismatch", "EmptySignal", "IncompleteBreakdown",
    "InvalidConfig", "InvalidFactor", "InvalidToken", "IoError",
    "MalformedStream", "MalformedWav", "NoData", "NotAScalar",
    "RateMismatch", "ShapeMismatch", "SignalTooShort", "StaleGraph",
    "TrainingDiverged", "UndefinedReference", "UnsupportedWav",
    "BandSpec", "MetricReport", "band_energy_fraction", "band_restrict",
    "band_sdr", "build_report", "default_bands", "sdr", "si_sdr",
    "Adam", "Conv1d", "ConvTranspose1d", "LeakyReLU", "Module", "Snake",
    "Tanh", "kaiming_uniform", "load_checkpoint", "load_into",
    "save_checkpoint",
    "DEFAULT_KERNEL", "SincKernel", "downsample_array", "resample_down",
    "resample_up", "upsample_array",
    "Codebook", "RVQResult", "mask_pinned_gradients", "record_usage",
    "revive_dead_entries", "rvq_decode", "rvq_encode",
    "LOG_FLOOR", "LossValue", "MelFilterbank", "StftConfig",
    "default_scales", "mel_loss", "stft_loss", "stft_mag", "waveform_loss",
    "Tensor", "no_grad",
    "Trainer", "load_cascade", "save_cascade", "smoothed_drop",
    "train_cascade",
    "__version__",
]
