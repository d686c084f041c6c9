"""WAV file I/O, sample-domain conversions, and loudness/distortion metrics.

Samples live in [-1.0, 1.0] as float64; conversion to 16-bit integers happens
only at file boundaries. Loudness is measured on the int16 amplitude scale
(peak magnitude times 32767), so a full-scale waveform sits at ~90.3 dB and a
one-count waveform at 0 dB.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidInputError,
    LengthMismatchError,
    RateMismatchError,
    SilentAudioError,
    UnsupportedFormatError,
)

# dB reference: one int16 count. Peak of 1.0 maps to 20*log10(32767) dB.
DB_FULL_SCALE = 32767.0
# File-boundary scaling. Reads divide by 32768; writes multiply by 32768 and
# clamp symmetrically to +/-32767 so read->write round-trips the integer grid.
INT16_SCALE = 32768.0
INT16_MAX_WRITTEN = 32767


@dataclass(frozen=True)
class Waveform:
    """Immutable mono audio: float64 samples in [-1, 1] plus a sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64, copy=True)
        if s.ndim != 1 or s.size < 1:
            raise InvalidInputError("waveform must be a non-empty 1-D sample array")
        if not np.all(np.isfinite(s)):
            raise InvalidInputError("waveform samples must be finite")
        peak = float(np.max(np.abs(s)))
        if peak > 1.0:
            raise InvalidInputError(f"sample magnitude {peak} exceeds 1.0")
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise InvalidInputError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate


def read_wav(path) -> Waveform:
    """Read a 16-bit mono PCM RIFF/WAVE file.

    Integer samples are divided by 32768, so values land in [-1.0, 0.99997].
    Raises UnsupportedFormatError for stereo / non-16-bit / compressed files
    and OSError for missing or unreadable files.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            samp_width = wf.getsampwidth()
            comp_type = wf.getcomptype()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise OSError(f"{path}: not a readable WAV file ({exc})") from exc
    if comp_type != "NONE":
        raise UnsupportedFormatError(f"{path}: compressed WAV ({comp_type}) not supported")
    if samp_width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * samp_width}-bit samples, expected 16-bit")
    if n_channels != 1:
        raise UnsupportedFormatError(f"{path}: {n_channels} channels, expected mono")
    ints = np.frombuffer(raw, dtype="<i2")
    if ints.size == 0:
        raise InvalidInputError(f"{path}: no audio frames")
    return Waveform(ints.astype(np.float64) / INT16_SCALE, rate)


def write_wav(w: Waveform, path) -> None:
    """Write a waveform as 16-bit mono PCM.

    Samples are clamped to [-1, 1] and quantized to the symmetric integer
    range [-32767, 32767]; a subsequent read_wav reproduces every sample
    within half an int16 step.
    """
    scaled = np.clip(w.samples, -1.0, 1.0) * INT16_SCALE
    ints = np.clip(np.rint(scaled), -INT16_MAX_WRITTEN, INT16_MAX_WRITTEN).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(w.sample_rate)
        wf.writeframes(ints.tobytes())


def loudness_db(w: Waveform) -> float:
    """Peak loudness in dB on the int16 scale: 20*log10(max |sample|*32767)."""
    peak = float(np.max(np.abs(w.samples)))
    if peak == 0.0:
        raise SilentAudioError("loudness of all-zero audio is undefined")
    return 20.0 * math.log10(peak * DB_FULL_SCALE)


def distortion_db(original: Waveform, adversarial: Waveform) -> float:
    """Loudness difference dB(adversarial) - dB(original).

    Positive values mean the modified audio peaks louder than the original;
    the sign convention follows the loudness difference literally.
    """
    if len(original) != len(adversarial):
        raise LengthMismatchError(f"lengths differ: {len(original)} vs {len(adversarial)}")
    if original.sample_rate != adversarial.sample_rate:
        raise RateMismatchError(f"sample rates differ: {original.sample_rate} vs {adversarial.sample_rate}")
    return loudness_db(adversarial) - loudness_db(original)


def concat(a: Waveform, b: Waveform) -> Waveform:
    """Join two waveforms of equal sample rate end to end."""
    if a.sample_rate != b.sample_rate:
        raise RateMismatchError(f"sample rates differ: {a.sample_rate} vs {b.sample_rate}")
    return Waveform(np.concatenate([a.samples, b.samples]), a.sample_rate)


def split(w: Waveform, index: int) -> tuple[Waveform, Waveform]:
    """Split at a sample index into (head, tail); both parts must be non-empty."""
    if not 0 < index < len(w):
        raise InvalidInputError(f"split index {index} outside (0, {len(w)})")
    return Waveform(w.samples[:index], w.sample_rate), Waveform(w.samples[index:], w.sample_rate)
