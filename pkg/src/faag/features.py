"""Deterministic, differentiable MFCC front end.

The pipeline per analysis window: Hann weighting, power spectrum via DFT,
triangular mel filterbank (0 Hz to Nyquist), log(energy + 1e-8), orthonormal
DCT-II keeping the first n_coeffs coefficients. mfcc_backward is the exact
vector-Jacobian product of this pipeline back to waveform samples, with
overlapping windows accumulating additively — this is what lets a loss on the
recognizer's output reach the raw audio.

No pre-emphasis, no per-utterance normalization, no context stacking: the
front end stays a plain differentiable map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform
from .errors import ShapeMismatchError, TooShortError

LOG_FLOOR_EPS = 1e-8  # inside the log; keeps silence (and its gradient) finite


@dataclass(frozen=True)
class FrameParams:
    """Framing and feature-shape parameters.

    window_size_samples is the analysis window w, step_samples the hop s
    (s <= w). Audio of length L yields floor((L - w)/s) + 1 windows; trailing
    samples shorter than a window are ignored.
    """

    window_size_samples: int = 512
    step_samples: int = 320
    n_mels: int = 26
    n_coeffs: int = 13

    def __post_init__(self):
        if min(self.window_size_samples, self.step_samples, self.n_mels, self.n_coeffs) <= 0:
            raise ValueError("all frame parameters must be positive")
        if self.step_samples > self.window_size_samples:
            raise ValueError(
                f"step {self.step_samples} exceeds window {self.window_size_samples}"
            )
        if self.n_coeffs > self.n_mels:
            raise ValueError(f"n_coeffs {self.n_coeffs} exceeds n_mels {self.n_mels}")


def frame_count(len_samples: int, p: FrameParams) -> int:
    """Number of analysis windows for audio of the given sample length."""
    if len_samples < p.window_size_samples:
        raise TooShortError(
            f"audio of {len_samples} samples is shorter than one window ({p.window_size_samples})"
        )
    return (len_samples - p.window_size_samples) // p.step_samples + 1


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(p: FrameParams, sample_rate: int) -> np.ndarray:
    """Triangular filterbank matrix of shape (n_mels, window//2 + 1).

    Filter edges are spaced uniformly on the mel scale from 0 Hz to Nyquist
    and snapped to DFT bins.
    """
    n_bins = p.window_size_samples // 2 + 1
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), p.n_mels + 2)
    bins = np.floor((p.window_size_samples + 1) * _mel_to_hz(mel_points) / sample_rate).astype(int)
    bins = np.minimum(bins, n_bins - 1)
    fb = np.zeros((p.n_mels, n_bins), dtype=np.float64)
    for m in range(p.n_mels):
        left, center, right = bins[m], bins[m + 1], bins[m + 2]
        for k in range(left, center):
            fb[m, k] = (k - left) / max(center - left, 1)
        for k in range(center, right):
            fb[m, k] = (right - k) / max(right - center, 1)
    return fb


def mel_filter_edges_hz(p: FrameParams, sample_rate: int) -> np.ndarray:
    """(n_mels, 3) array of [left, center, right] filter edges in Hz."""
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), p.n_mels + 2)
    hz = _mel_to_hz(mel_points)
    return np.stack([hz[:-2], hz[1:-1], hz[2:]], axis=1)


def _dct_matrix(n_coeffs: int, n_mels: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, first n_coeffs rows."""
    m = np.arange(n_mels, dtype=np.float64)
    k = np.arange(n_coeffs, dtype=np.float64)[:, None]
    mat = np.sqrt(2.0 / n_mels) * np.cos(np.pi * k * (2.0 * m + 1.0) / (2.0 * n_mels))
    mat[0] /= np.sqrt(2.0)
    return mat


_BASIS_CACHE: dict[tuple[int, int, int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _basis(p: FrameParams, sample_rate: int):
    key = (p.window_size_samples, p.n_mels, p.n_coeffs, sample_rate)
    if key not in _BASIS_CACHE:
        window = np.hanning(p.window_size_samples)
        _BASIS_CACHE[key] = (window, mel_filterbank(p, sample_rate), _dct_matrix(p.n_coeffs, p.n_mels))
    return _BASIS_CACHE[key]


def _frames(samples: np.ndarray, p: FrameParams) -> np.ndarray:
    t = frame_count(samples.size, p)
    view = np.lib.stride_tricks.sliding_window_view(samples, p.window_size_samples)
    return view[:: p.step_samples][:t]


def _window_power(frames_windowed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    spectrum = np.fft.rfft(frames_windowed, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return spectrum, power


def log_mel_energies(x: Waveform, p: FrameParams) -> np.ndarray:
    """Pre-DCT log filterbank energies, shape (T, n_mels)."""
    window, fb, _ = _basis(p, x.sample_rate)
    _, power = _window_power(_frames(x.samples, p) * window)
    return np.log(power @ fb.T + LOG_FLOOR_EPS)


def mfcc_forward(x: Waveform, p: FrameParams) -> np.ndarray:
    """Feature matrix of shape (T, n_coeffs); T = frame_count(len(x))."""
    _, _, dct = _basis(p, x.sample_rate)
    return log_mel_energies(x, p) @ dct.T


def mfcc_backward(x: Waveform, p: FrameParams, grad_features: np.ndarray) -> np.ndarray:
    """Exact vector-Jacobian product of mfcc_forward at x.

    grad_features must have shape (frame_count(len(x)), n_coeffs); the return
    value has the shape of x.samples. Samples covered by several windows
    receive the sum of every window's contribution.
    """
    window, fb, dct = _basis(p, x.sample_rate)
    t = frame_count(len(x), p)
    grad_features = np.asarray(grad_features, dtype=np.float64)
    if grad_features.shape != (t, p.n_coeffs):
        raise ShapeMismatchError(
            f"gradient shape {grad_features.shape} does not match features ({t}, {p.n_coeffs})"
        )
    w = p.window_size_samples
    frames_windowed = _frames(x.samples, p) * window
    spectrum, power = _window_power(frames_windowed)
    energies = power @ fb.T

    g_logmel = grad_features @ dct
    g_energy = g_logmel / (energies + LOG_FLOOR_EPS)
    g_power = g_energy @ fb

    # VJP through P_k = |F_k|^2 for the one-sided spectrum: the contribution
    # to sample n is sum_k 2*g_P[k]*Re(F_k e^{2pi i k n / w}). Expressed via
    # irfft, interior bins carry an implicit factor 2, so only the DC (and
    # Nyquist, for even w) bins need explicit doubling.
    g_spec = g_power * spectrum
    g_spec[:, 0] *= 2.0
    if w % 2 == 0:
        g_spec[:, -1] *= 2.0
    g_frames = w * np.fft.irfft(g_spec, n=w, axis=1)
    g_frames *= window

    g_x = np.zeros(len(x), dtype=np.float64)
    for i in range(t):
        start = i * p.step_samples
        g_x[start : start + w] += g_frames[i]
    return g_x
