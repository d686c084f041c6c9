"""The white-box recognizer: features -> tanh RNN -> per-window logits.

A single unidirectional recurrent layer keeps backpropagation through time
short enough to hand-verify against finite differences while exposing the
same attack surface as a deep recognizer: per-window logits over the
character alphabet, decoded greedily with CTC collapse rules.

Parameters are stored float32 (matching the on-disk format exactly, so
save/load is bit-faithful); all arithmetic runs in float64.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .audio import Waveform
from .errors import (
    ChecksumMismatchError,
    DimMismatchError,
    FormatVersionMismatchError,
    InvalidDimError,
    InvalidInputError,
    ShapeMismatchError,
)
from .features import FrameParams, mfcc_forward

MODEL_MAGIC = b"FAAGMDL1"
PARAM_ORDER = ("W_in", "W_rec", "b_rec", "W_out", "b_out")


@dataclass(frozen=True)
class Alphabet:
    """Character set for decoding: 'a'-'z' plus space, blank appended last."""

    symbols: str = "abcdefghijklmnopqrstuvwxyz "

    @property
    def blank_index(self) -> int:
        return len(self.symbols)

    @property
    def num_classes(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> list[int]:
        try:
            return [self.symbols.index(ch) for ch in text]
        except ValueError:
            bad = next(ch for ch in text if ch not in self.symbols)
            raise InvalidInputError(f"character {bad!r} not in alphabet") from None

    def decode_indices(self, indices) -> str:
        return "".join(self.symbols[i] for i in indices)


DEFAULT_ALPHABET = Alphabet()


@dataclass(frozen=True)
class AcousticModel:
    input_dim: int
    hidden_dim: int
    seed: int
    W_in: np.ndarray   # hidden x input
    W_rec: np.ndarray  # hidden x hidden
    b_rec: np.ndarray  # hidden
    W_out: np.ndarray  # classes x hidden
    b_out: np.ndarray  # classes

    def __post_init__(self):
        h, i = self.hidden_dim, self.input_dim
        c = self.W_out.shape[0]
        expected = {"W_in": (h, i), "W_rec": (h, h), "b_rec": (h,), "W_out": (c, h), "b_out": (c,)}
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.shape != shape:
                raise ShapeMismatchError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_classes(self) -> int:
        return int(self.W_out.shape[0])

    def params64(self) -> dict[str, np.ndarray]:
        """Float64 working copies of the parameters, in declaration order."""
        return {name: np.asarray(getattr(self, name), dtype=np.float64) for name in PARAM_ORDER}

    def with_params(self, params: dict[str, np.ndarray]) -> "AcousticModel":
        return AcousticModel(
            input_dim=self.input_dim,
            hidden_dim=self.hidden_dim,
            seed=self.seed,
            **{name: np.asarray(params[name], dtype=np.float32) for name in PARAM_ORDER},
        )


def init_model(input_dim: int = 13, hidden_dim: int = 128, seed: int = 0,
               num_classes: int = DEFAULT_ALPHABET.num_classes) -> AcousticModel:
    """Deterministic initialization from a PCG64 generator.

    Weights are uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases zero.
    """
    if input_dim <= 0 or hidden_dim <= 0 or num_classes <= 1:
        raise InvalidDimError(
            f"dims must be positive (input={input_dim}, hidden={hidden_dim}, classes={num_classes})"
        )
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return AcousticModel(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        seed=seed,
        W_in=uniform((hidden_dim, input_dim), input_dim),
        W_rec=uniform((hidden_dim, hidden_dim), hidden_dim),
        b_rec=np.zeros(hidden_dim),
        W_out=uniform((num_classes, hidden_dim), hidden_dim),
        b_out=np.zeros(num_classes),
    )


def rnn_forward(params: dict[str, np.ndarray], feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Recurrence on raw float64 parameter arrays; returns (logits, hidden trace)."""
    w_in, w_rec, b_rec = params["W_in"], params["W_rec"], params["b_rec"]
    w_out, b_out = params["W_out"], params["b_out"]
    t_len = feats.shape[0]
    hidden = np.zeros((t_len, w_rec.shape[0]), dtype=np.float64)
    drive = feats @ w_in.T + b_rec
    h = np.zeros(w_rec.shape[0], dtype=np.float64)
    for t in range(t_len):
        h = np.tanh(drive[t] + w_rec @ h)
        hidden[t] = h
    logits = hidden @ w_out.T + b_out
    return logits, hidden


def rnn_backward(params, feats, hidden, grad_logits):
    """Exact backpropagation through time on raw arrays.

    Returns (parameter gradients in declaration order, gradient w.r.t. feats).
    """
    w_in, w_rec, w_out = params["W_in"], params["W_rec"], params["W_out"]
    t_len = feats.shape[0]
    g_hidden_out = grad_logits @ w_out
    g_pre = np.zeros_like(hidden)
    carry = np.zeros(hidden.shape[1], dtype=np.float64)
    for t in range(t_len - 1, -1, -1):
        gh = g_hidden_out[t] + carry
        g_pre[t] = (1.0 - hidden[t] ** 2) * gh
        carry = w_rec.T @ g_pre[t]
    grads = {
        "W_in": g_pre.T @ feats,
        "W_rec": g_pre[1:].T @ hidden[:-1] if t_len > 1 else np.zeros_like(w_rec),
        "b_rec": g_pre.sum(axis=0),
        "W_out": grad_logits.T @ hidden,
        "b_out": grad_logits.sum(axis=0),
    }
    return grads, g_pre @ w_in


def forward(m: AcousticModel, feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-window logits (T x classes) plus the hidden-state trace for backward."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != m.input_dim:
        raise DimMismatchError(f"features of shape {feats.shape} do not match input_dim {m.input_dim}")
    return rnn_forward(m.params64(), feats)


def backward(m: AcousticModel, feats: np.ndarray, trace: np.ndarray,
             grad_logits: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Parameter gradients (for training) and input-feature gradients (for attacks)."""
    feats = np.asarray(feats, dtype=np.float64)
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    trace = np.asarray(trace, dtype=np.float64)
    if trace.shape != (feats.shape[0], m.hidden_dim):
        raise ShapeMismatchError(f"trace shape {trace.shape} inconsistent with forward")
    if grad_logits.shape != (feats.shape[0], m.num_classes):
        raise ShapeMismatchError(
            f"grad_logits shape {grad_logits.shape}, expected {(feats.shape[0], m.num_classes)}"
        )
    return rnn_backward(m.params64(), feats, trace, grad_logits)


def greedy_decode(logits: np.ndarray, alphabet: Alphabet = DEFAULT_ALPHABET) -> str:
    """Per-row argmax (ties to the lowest index), merge repeats, drop blanks."""
    logits = np.asarray(logits)
    path = np.argmax(logits, axis=1)
    out = []
    prev = -1
    for c in path:
        if c != prev and c != alphabet.blank_index:
            out.append(alphabet.symbols[c])
        prev = c
    return "".join(out)


def transcribe(m: AcousticModel, x: Waveform, p: FrameParams,
               alphabet: Alphabet = DEFAULT_ALPHABET) -> str:
    """Full pipeline: features, recurrence, greedy decode."""
    logits, _ = forward(m, mfcc_forward(x, p))
    return greedy_decode(logits, alphabet)


def save_model(m: AcousticModel, path) -> None:
    """Binary format: magic, little-endian u32 input_dim, u32 hidden_dim,
    u64 seed, each tensor as row-major little-endian f32 in declaration
    order, then CRC32 of all preceding bytes."""
    blob = MODEL_MAGIC + struct.pack("<IIQ", m.input_dim, m.hidden_dim, m.seed)
    for name in PARAM_ORDER:
        blob += np.ascontiguousarray(getattr(m, name), dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(blob))
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path) -> AcousticModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    header_len = len(MODEL_MAGIC) + struct.calcsize("<IIQ")
    if len(blob) < header_len or blob[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatVersionMismatchError(f"{path}: bad or missing model magic")
    input_dim, hidden_dim, seed = struct.unpack_from("<IIQ", blob, len(MODEL_MAGIC))
    if input_dim == 0 or hidden_dim == 0:
        raise FormatVersionMismatchError(f"{path}: zero dimensions in header")
    fixed = input_dim * hidden_dim + hidden_dim * hidden_dim + hidden_dim
    payload = len(blob) - header_len - 4
    if payload < 0 or (payload // 4 - fixed) % (hidden_dim + 1) != 0:
        raise ChecksumMismatchError(f"{path}: truncated or padded model file")
    num_classes = (payload // 4 - fixed) // (hidden_dim + 1)
    if num_classes <= 1:
        raise ChecksumMismatchError(f"{path}: truncated model file")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ChecksumMismatchError(f"{path}: CRC32 mismatch")
    shapes = {
        "W_in": (hidden_dim, input_dim),
        "W_rec": (hidden_dim, hidden_dim),
        "b_rec": (hidden_dim,),
        "W_out": (num_classes, hidden_dim),
        "b_out": (num_classes,),
    }
    offset = header_len
    tensors = {}
    for name in PARAM_ORDER:
        shape = shapes[name]
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
    return AcousticModel(input_dim=int(input_dim), hidden_dim=int(hidden_dim), seed=int(seed), **tensors)
