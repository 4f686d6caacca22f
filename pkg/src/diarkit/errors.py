"""Exception types shared across the toolkit."""


class DiarkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DiarkitError):
    """A text input (CTM/RTTM/config) could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class ConfigError(DiarkitError):
    """Invalid or inconsistent configuration."""


class UnsupportedSpeakerCountError(DiarkitError):
    """More than two distinct speakers in a dyadic input."""


class DialogueTooShortError(DiarkitError):
    """Dialogue has fewer words than one source window."""


class UnsupportedRateError(DiarkitError):
    """Audio sample rate differs from the 8 kHz the front end expects."""


class SignalTooShortError(DiarkitError):
    """Waveform shorter than a single analysis frame."""


class CheckpointFormatError(DiarkitError):
    """Bad magic, version, or structure in a checkpoint file."""


class ChecksumError(CheckpointFormatError):
    """Checkpoint payload does not match its trailing checksum."""


class NumericError(DiarkitError):
    """A numeric quantity became non-finite where it must not."""


class TrainingDivergedError(NumericError):
    """Loss became NaN/inf during optimization."""


class UndefinedMetricError(DiarkitError):
    """A score is undefined for the given inputs (e.g. no scored speech)."""
