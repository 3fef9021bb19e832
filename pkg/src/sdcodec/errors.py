"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all errors raised by this package."""


# -- signals -----------------------------------------------------------------

class EmptySignal(CodecError):
    """An operation received a zero-length signal."""


class InvalidFactor(CodecError):
    """Resampling factor is not an integer >= 2."""


class RateMismatch(CodecError):
    """A signal's sample rate does not match what the operation requires."""


class ShapeMismatch(CodecError):
    """Lengths, rates, or tensor shapes are inconsistent."""


class SignalTooShort(CodecError):
    """The signal is shorter than the analysis/model minimum."""


# -- WAV I/O -----------------------------------------------------------------

class UnsupportedWav(CodecError):
    """The WAV file is valid RIFF but uses an unsupported encoding."""


class MalformedWav(CodecError):
    """The file is not a parseable RIFF/WAVE container."""


# -- metrics -----------------------------------------------------------------

class UndefinedReference(CodecError):
    """The reference signal has no energy where the metric needs it."""


# -- autodiff ----------------------------------------------------------------

class NotAScalar(CodecError):
    """backward() was called on a non-scalar tensor."""


class StaleGraph(CodecError):
    """backward() was called twice on the same graph without a re-forward."""


# -- quantizer ---------------------------------------------------------------

class InvalidToken(CodecError):
    """A token index is out of range for its codebook."""


class InvalidConfig(CodecError):
    """A configuration value violates its documented invariants."""


# -- cascade / training ------------------------------------------------------

class IncompleteBreakdown(CodecError):
    """A loss breakdown is missing a required term."""


class NoData(CodecError):
    """The training dataset is empty."""


class TrainingDiverged(CodecError):
    """A loss term became non-finite; carries the stage and term name."""


# -- CLI / containers --------------------------------------------------------

class ConfigMismatch(CodecError):
    """Checkpoint and requested configuration disagree."""


class IoError(CodecError):
    """An input file could not be read or an output could not be written."""


class MalformedStream(CodecError):
    """A token stream file has a corrupt header or truncated payload."""
