"""Exception taxonomy shared across the toolkit.

Every domain error derives from FaagError so callers (and the CLI) can
distinguish toolkit failures from programming errors. Plain OSError is used
for file-system problems.
"""


class FaagError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(FaagError):
    """A value violates a domain invariant (empty audio, bad range, ...)."""


class UnsupportedFormatError(FaagError):
    """WAV file is not 16-bit mono PCM."""


class SilentAudioError(FaagError):
    """Loudness requested for an all-zero waveform."""


class LengthMismatchError(FaagError):
    """Two waveforms that must be the same length are not."""


class RateMismatchError(FaagError):
    """Two waveforms that must share a sample rate do not."""


class TooShortError(FaagError):
    """Audio shorter than a single analysis window."""


class ShapeMismatchError(FaagError):
    """An array does not match the shape required by the operation."""


class DimMismatchError(FaagError):
    """Feature dimension does not match the model's input dimension."""


class InvalidDimError(FaagError):
    """Model constructed with a non-positive dimension."""


class FormatVersionMismatchError(FaagError):
    """Model file magic/header is not recognized."""


class ChecksumMismatchError(FaagError):
    """Model file is truncated or its CRC does not verify."""


class UnalignableError(FaagError):
    """Target label sequence cannot be aligned within the available windows."""


class EmptyLogitsError(FaagError):
    """CTC loss requested for an empty logit matrix."""


class TooLargeError(FaagError):
    """Brute-force path enumeration requested beyond its size guard."""


class DivergenceError(FaagError):
    """Training loss became non-finite."""


class PhraseTooLongError(FaagError):
    """Target phrase (plus fine-tune margin) exceeds the transcript length."""


class AudioTooShortError(FaagError):
    """Selected clip does not fit inside the audio."""


class EmptyTargetError(FaagError):
    """Error-rate metric requested against an empty target string."""


class NonFiniteLossError(FaagError):
    """Attack optimization produced a non-finite loss."""
