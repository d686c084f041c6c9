"""Metrics and experiment protocols.

Character error rate and its 1 - CER success rate, best-window phrase
containment (the "does the transcript contain the phrase" score), the
prepend-benign-audio defense evaluation, and the clip-attack vs whole-audio
timing benchmark.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .audio import Waveform, concat
from .errors import EmptyTargetError, RateMismatchError
from .features import FrameParams
from .model import AcousticModel, transcribe

PHRASE_PRESENT_THRESHOLD = 0.99


@dataclass(frozen=True)
class CerReport:
    edit_distance: int
    target_len: int
    cer: float
    success_rate: float


def levenshtein(a: str, b: str) -> int:
    """Unit-cost character edit distance."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def cer(target: str, hypothesis: str) -> CerReport:
    """Character error rate: edit distance normalized by target length."""
    if not target:
        raise EmptyTargetError("CER against an empty target is undefined")
    dist = levenshtein(target, hypothesis)
    rate = dist / len(target)
    return CerReport(edit_distance=dist, target_len=len(target), cer=rate,
                     success_rate=max(0.0, 1.0 - rate))


def phrase_success(target_phrase: str, full_transcript: str) -> CerReport:
    """Best embedded occurrence: minimal CER of the phrase against any
    contiguous window of the transcript.

    Approximate substring matching — transcript characters before and after
    the matched window are free, so an exact substring scores 1.0 regardless
    of surrounding text.
    """
    if not target_phrase:
        raise EmptyTargetError("phrase containment against an empty phrase is undefined")
    n = len(target_phrase)
    if not full_transcript:
        return CerReport(edit_distance=n, target_len=n, cer=1.0, success_rate=0.0)
    # rows walk the phrase, columns the transcript; column starts are free
    prev = [0] * (len(full_transcript) + 1)
    for i, ca in enumerate(target_phrase, start=1):
        cur = [i] + [0] * len(full_transcript)
        for j, cb in enumerate(full_transcript, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    dist = min(prev)
    rate = dist / n
    return CerReport(edit_distance=dist, target_len=n, cer=rate,
                     success_rate=max(0.0, 1.0 - rate))


@dataclass(frozen=True)
class DefenseReport:
    phrase_in_transcript: bool
    attack_success_rate: float
    transcription_accuracy: float
    combined_transcript: str

    def to_dict(self) -> dict:
        return {
            "phrase_in_transcript": self.phrase_in_transcript,
            "attack_success_rate": self.attack_success_rate,
            "transcription_accuracy": self.transcription_accuracy,
            "combined_transcript": self.combined_transcript,
        }


def eval_defense(benign: Waveform, suspicious: Waveform, model: AcousticModel,
                 target_phrase: str, ground_truth_texts,
                 p: FrameParams = FrameParams()) -> DefenseReport:
    """Prepend benign audio to the suspicious audio and re-transcribe.

    Reports whether the phrase survives in the combined decode, the phrase
    success rate, and the decode's accuracy against the space-joined ground
    truth texts.
    """
    if benign.sample_rate != suspicious.sample_rate:
        raise RateMismatchError(
            f"sample rates differ: {benign.sample_rate} vs {suspicious.sample_rate}"
        )
    decoded = transcribe(model, concat(benign, suspicious), p)
    phrase = phrase_success(target_phrase, decoded)
    truth = " ".join(ground_truth_texts)
    accuracy = cer(truth, decoded).success_rate if truth else 0.0
    return DefenseReport(
        phrase_in_transcript=phrase.success_rate >= PHRASE_PRESENT_THRESHOLD,
        attack_success_rate=phrase.success_rate,
        transcription_accuracy=accuracy,
        combined_transcript=decoded,
    )


@dataclass(frozen=True)
class BenchRow:
    audio_index: int
    phrase: str
    ratio_frames: float
    faag_seconds: float
    baseline_seconds: float
    speedup: float
    faag_window_ops: int
    baseline_window_ops: int
    faag_success_rate: float
    baseline_success_rate: float

    def to_dict(self) -> dict:
        return {
            "audio_index": self.audio_index,
            "phrase": self.phrase,
            "ratio_frames": self.ratio_frames,
            "faag_seconds": self.faag_seconds,
            "baseline_seconds": self.baseline_seconds,
            "speedup": self.speedup,
            "faag_window_ops": self.faag_window_ops,
            "baseline_window_ops": self.baseline_window_ops,
            "faag_success_rate": self.faag_success_rate,
            "baseline_success_rate": self.baseline_success_rate,
        }


@dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...] = field(default_factory=tuple)

    @property
    def mean_speedup(self) -> float:
        return float(np.mean([r.speedup for r in self.rows])) if self.rows else 0.0

    @property
    def mean_ratio_frames(self) -> float:
        return float(np.mean([r.ratio_frames for r in self.rows])) if self.rows else 0.0


def bench_speedup(waveforms, phrases, model: AcousticModel, cfg,
                  p: FrameParams = FrameParams(), lam: int = 0) -> BenchReport:
    """Clip attack vs whole-audio attack on every (audio, phrase) pair.

    Both attacks run the same iteration budget sequentially on one thread so
    wall times stay comparable; the deterministic window-operation counts are
    the flake-free efficiency signal. speedup = 1 - faag_time/baseline_time.
    """
    from .attack import run_attack, run_baseline, select_clip  # circular at module scope

    if not waveforms or not phrases:
        raise EmptyTargetError("bench needs at least one audio and one phrase")
    rows = []
    for i, wav in enumerate(waveforms):
        for phrase in phrases:
            plan = select_clip(wav, phrase, model, p, lam=lam)
            t0 = time.perf_counter()
            faag = run_attack(wav, phrase, model, plan, cfg, p)
            t1 = time.perf_counter()
            base = run_baseline(wav, phrase, model, cfg, p)
            t2 = time.perf_counter()
            faag_s, base_s = t1 - t0, t2 - t1
            rows.append(BenchRow(
                audio_index=i,
                phrase=phrase.text,
                ratio_frames=plan.ratio_frames,
                faag_seconds=faag_s,
                baseline_seconds=base_s,
                speedup=1.0 - faag_s / base_s,
                faag_window_ops=faag.window_ops,
                baseline_window_ops=base.window_ops,
                faag_success_rate=faag.success_rate,
                baseline_success_rate=base.success_rate,
            ))
    return BenchReport(rows=tuple(rows))
