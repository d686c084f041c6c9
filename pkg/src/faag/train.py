"""Desk-scale training: synthetic tone corpus plus a CTC trainer.

The corpus maps each letter to a distinct pure tone (space to silence) held
for exactly four analysis hops, so a transcript of k characters produces
exactly 4k windows. That makes the waveform-to-text mapping learnable in
minutes and gives the attack a crisp white-box target. Real recordings can be
substituted through load_corpus (a directory of WAVs plus manifest.tsv).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .ctc import ctc_loss, min_alignment_length
from .errors import DivergenceError, InvalidInputError, UnalignableError
from .features import FrameParams, frame_count, mfcc_forward
from .metrics import cer
from .model import DEFAULT_ALPHABET, AcousticModel, greedy_decode, rnn_backward, rnn_forward
from .optim import Adam

VOCABULARY = (
    "call", "red", "play", "stop", "go", "blue", "door", "open",
    "nine", "one", "two", "help", "send", "text", "music", "home",
)

WINDOWS_PER_CHAR = 4
TONE_AMPLITUDE = 0.5
TONE_BASE_HZ = 300.0
TONE_STEP_HZ = 100.0


@dataclass(frozen=True)
class Utterance:
    audio: Waveform
    transcript: str

    def __post_init__(self):
        if not self.transcript:
            raise InvalidInputError("transcript must be non-empty")
        if any(ch not in DEFAULT_ALPHABET.symbols for ch in self.transcript):
            raise InvalidInputError(f"transcript {self.transcript!r} has characters outside a-z/space")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or self.adam_eps <= 0:
            raise InvalidInputError("epochs must be >= 0, learning_rate and adam_eps positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise InvalidInputError("adam betas must lie in (0, 1)")


def char_tone_hz(ch: str) -> float:
    """Tone frequency for a letter; 300 + 100*index Hz, space is silence (0)."""
    if ch == " ":
        return 0.0
    return TONE_BASE_HZ + TONE_STEP_HZ * (ord(ch) - ord("a"))


def render_transcript(text: str, p: FrameParams = FrameParams(),
                      sample_rate: int = 16000) -> Waveform:
    """Concatenative synthesis: each character held for 4 hops.

    Total length is 4*len(text)*step + (window - step) samples, so the window
    count is exactly 4*len(text). Frequencies complete whole cycles per
    character block, so repeats join seamlessly; the trailing window-step tail
    extends the final character's tone.
    """
    if not text:
        raise InvalidInputError("cannot render empty text")
    block = WINDOWS_PER_CHAR * p.step_samples
    tail = p.window_size_samples - p.step_samples
    out = np.zeros(block * len(text) + tail, dtype=np.float64)
    for i, ch in enumerate(text):
        hz = char_tone_hz(ch)
        if hz == 0.0:
            continue
        length = block + (tail if i == len(text) - 1 else 0)
        n = np.arange(length, dtype=np.float64)
        out[i * block : i * block + length] = TONE_AMPLITUDE * np.sin(2.0 * np.pi * hz * n / sample_rate)
    return Waveform(out, sample_rate)


def synth_corpus(n_utterances: int, words_per_utterance: int = 5, seed: int = 0,
                 p: FrameParams = FrameParams()) -> list[Utterance]:
    """Seeded corpus of tone utterances drawn from the fixed 16-word vocabulary."""
    if n_utterances < 1 or words_per_utterance < 1:
        raise InvalidInputError("need at least one utterance of at least one word")
    rng = np.random.default_rng(seed)
    corpus = []
    for _ in range(n_utterances):
        words = [VOCABULARY[int(i)] for i in rng.integers(0, len(VOCABULARY), size=words_per_utterance)]
        text = " ".join(words)
        corpus.append(Utterance(render_transcript(text, p), text))
    return corpus


def _prepare(corpus, p: FrameParams):
    prepared = []
    for utt in corpus:
        labels = DEFAULT_ALPHABET.encode(utt.transcript)
        t_len = frame_count(len(utt.audio), p)
        if t_len < min_alignment_length(labels):
            raise UnalignableError(
                f"utterance {utt.transcript!r}: {t_len} windows < minimum alignment "
                f"{min_alignment_length(labels)}"
            )
        prepared.append((mfcc_forward(utt.audio, p), labels, utt.transcript))
    return prepared


def train(model: AcousticModel, corpus, cfg: TrainConfig = TrainConfig(),
          p: FrameParams = FrameParams()) -> tuple[AcousticModel, list[dict]]:
    """Per-utterance Adam on the CTC loss; returns (trained model, epoch log).

    Deterministic given (model seed, corpus, cfg). The log holds one record
    per epoch with the mean loss and the corpus character error rate measured
    with that epoch's final weights.
    """
    if not corpus:
        raise InvalidInputError("corpus is empty")
    prepared = _prepare(corpus, p)
    params = model.params64()
    adam = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        losses = []
        for feats, labels, _ in prepared:
            logits, hidden = rnn_forward(params, feats)
            result = ctc_loss(logits, labels, DEFAULT_ALPHABET.blank_index)
            if not np.isfinite(result.loss):
                raise DivergenceError(f"loss became non-finite at epoch {epoch}")
            grads, _ = rnn_backward(params, feats, hidden, result.grad_logits)
            params = adam.step(params, grads)
            losses.append(result.loss)
        cer_sum = 0.0
        for feats, _, transcript in prepared:
            logits, _ = rnn_forward(params, feats)
            cer_sum += cer(transcript, greedy_decode(logits)).cer
        log.append({
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)),
            "corpus_cer": cer_sum / len(prepared),
        })
    return model.with_params(params), log


def evaluate(model: AcousticModel, corpus, p: FrameParams = FrameParams()) -> float:
    """Mean character error rate of greedy decodes against the transcripts."""
    if not corpus:
        return 0.0
    total = 0.0
    for utt in corpus:
        logits, _ = rnn_forward(model.params64(), mfcc_forward(utt.audio, p))
        total += cer(utt.transcript, greedy_decode(logits)).cer
    return total / len(corpus)


def save_corpus(corpus, directory, prefix: str = "utt") -> list[str]:
    """Write WAVs plus manifest.tsv ("<filename>\\t<transcript>" per line)."""
    os.makedirs(directory, exist_ok=True)
    names = []
    lines = []
    for i, utt in enumerate(corpus):
        name = f"{prefix}_{i:04d}.wav"
        write_wav(utt.audio, os.path.join(directory, name))
        lines.append(f"{name}\t{utt.transcript}")
        names.append(name)
    with open(os.path.join(directory, "manifest.tsv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return names


def load_corpus(directory) -> list[Utterance]:
    """Read a corpus directory produced by save_corpus (or hand-assembled)."""
    manifest = os.path.join(directory, "manifest.tsv")
    if not os.path.isfile(manifest):
        raise FileNotFoundError(f"missing manifest: {manifest}")
    corpus = []
    with open(manifest, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise InvalidInputError(f"{manifest}:{line_no}: expected '<filename>\\t<transcript>'")
            name, transcript = parts
            corpus.append(Utterance(read_wav(os.path.join(directory, name)), transcript))
    if not corpus:
        raise InvalidInputError(f"{manifest}: no entries")
    return corpus
