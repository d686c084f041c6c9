"""Targeted adversarial audio generation.

Two attacks share one constrained optimizer. The clip attack first maps the
target phrase to a minimal stretch of audio using the logit/transcript length
ratio — clip windows = ceil((|c|/|y|) * (|t| + lambda)) with |c| the window
count, |y| the transcript length, and lambda a non-negative fine-tune margin
bounded by |t| + lambda <= |y| — then optimizes additive noise on that clip
only. The whole-audio baseline perturbs every sample.

The optimizer takes Adam steps on the noise against the CTC loss of the
perturbed clip versus the target text, under a shrinking loudness budget:
whenever a checkpoint decode matches the target within the current budget
`con` (dB of the noise relative to the clip), `con` is multiplied by 0.8 and
the noise is boxed to the equivalent max-magnitude bound. The returned
iterate is the successful checkpoint with the smallest noise loudness, else
the final iterate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .audio import DB_FULL_SCALE, Waveform, distortion_db
from .ctc import ctc_loss, min_alignment_length
from .errors import (
    AudioTooShortError,
    InvalidInputError,
    NonFiniteLossError,
    PhraseTooLongError,
    TooShortError,
    UnalignableError,
)
from .features import FrameParams, frame_count, mfcc_backward, mfcc_forward
from .metrics import phrase_success
from .model import DEFAULT_ALPHABET, AcousticModel, greedy_decode, rnn_backward, rnn_forward, transcribe
from .optim import Adam

L2_PENALTY_WEIGHT = 1e-3
# Windows the middle-position attack leaves untouched at the head, so the
# first few decoded characters stay the original speaker's.
MIDDLE_KEPT_CHARS = 3


class Position(Enum):
    BEGIN = "begin"
    MIDDLE = "middle"
    END = "end"


class Suffix(Enum):
    TWO_SPACES = "spaces"
    AND_WORD = "and"
    SINGLE_SPACE = "space"


_SEP_AFTER = {Suffix.TWO_SPACES: "  ", Suffix.AND_WORD: " and", Suffix.SINGLE_SPACE: " "}
_SEP_BEFORE = {Suffix.TWO_SPACES: "  ", Suffix.AND_WORD: "and ", Suffix.SINGLE_SPACE: " "}


@dataclass(frozen=True)
class TargetPhrase:
    """Attacker phrase plus the separator shielding it from the rest of the
    transcript: appended after the phrase at the beginning position, prefixed
    at the end position, both in the middle."""

    text: str
    suffix: Suffix = Suffix.TWO_SPACES

    def __post_init__(self):
        if not self.text:
            raise InvalidInputError("target phrase must be non-empty")
        if any(ch not in DEFAULT_ALPHABET.symbols for ch in self.text):
            raise InvalidInputError(f"phrase {self.text!r} has characters outside a-z/space")

    def effective_text(self, position: Position) -> str:
        if position is Position.BEGIN:
            return self.text + _SEP_AFTER[self.suffix]
        if position is Position.END:
            return _SEP_BEFORE[self.suffix] + self.text
        return _SEP_BEFORE[self.suffix] + self.text + _SEP_AFTER[self.suffix]


@dataclass(frozen=True)
class AttackConfig:
    iterations: int = 1000
    learning_rate: float = 10.0
    initial_con: float = 40.0
    con_decay: float = 0.8
    check_every: int = 100
    loss_weights: float | tuple[float, ...] = 1.0
    seed: int = 0
    clip_bound: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not (0 < self.con_decay < 1):
            raise InvalidInputError("con_decay must lie in (0, 1)")
        if self.learning_rate <= 0 or self.check_every < 1 or self.clip_bound <= 0:
            raise InvalidInputError("learning_rate, check_every, clip_bound must be positive")


@dataclass(frozen=True)
class ClipPlan:
    """Where the attacked clip sits inside the audio.

    index is the sample offset where the clip ends (begin position), where it
    starts (end position), or where it ends with index_prime the start
    (middle position). allocated_windows is the window allocation
    ceil((|c|/|y|) * (|t| + lambda)); clip_len_samples = allocated_windows *
    step.
    """

    position: Position
    index: int
    lam: int
    clip_len_samples: int
    total_len_samples: int
    ratio_frames: float
    allocated_windows: int
    index_prime: int | None = None

    @property
    def clip_start(self) -> int:
        if self.position is Position.BEGIN:
            return 0
        if self.position is Position.MIDDLE:
            return self.index_prime
        return self.index

    @property
    def clip_end(self) -> int:
        return self.clip_start + self.clip_len_samples


@dataclass(frozen=True)
class Checkpoint:
    iteration: int
    loss: float
    con: float
    decoded: str

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "loss": self.loss, "con": self.con, "decoded": self.decoded}


@dataclass(frozen=True)
class AttackResult:
    adversarial: Waveform
    transcript: str
    success_rate: float
    distortion_db: float
    ratio_frames: float
    iterations_run: int
    wall_time_seconds: float
    per_checkpoint_log: tuple[Checkpoint, ...]
    window_ops: int
    plan: ClipPlan
    noise_db: float  # dB of the noise relative to the clip at the returned iterate

    def to_dict(self) -> dict:
        return {
            "transcript": self.transcript,
            "success_rate": self.success_rate,
            "distortion_db": self.distortion_db,
            "ratio_frames": self.ratio_frames,
            "iterations_run": self.iterations_run,
            "wall_time_seconds": self.wall_time_seconds,
            "window_ops": self.window_ops,
            "noise_db": self.noise_db,
            "lambda": self.plan.lam,
            "position": self.plan.position.value,
            "checkpoints": [c.to_dict() for c in self.per_checkpoint_log],
        }


def allocated_windows(c_len: int, y_len: int, t_len: int, lam: int) -> int:
    """Window allocation ceil((|c|/|y|) * (|t| + lambda)), computed exactly.

    Raises PhraseTooLongError unless |t| + lambda <= |y|.
    """
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    if y_len < 1:
        raise PhraseTooLongError(f"transcript is empty; cannot allocate {t_len} characters")
    if t_len + lam > y_len:
        raise PhraseTooLongError(
            f"target needs {t_len} + lambda {lam} characters but the transcript has only {y_len}"
        )
    return -((-c_len * (t_len + lam)) // y_len)


def clip_length_samples(c_len: int, y_len: int, t_len: int, lam: int, step: int) -> int:
    """Sample length of the allocated clip, rounded up to whole windows."""
    return allocated_windows(c_len, y_len, t_len, lam) * step


def select_clip(x: Waveform, t: TargetPhrase, model: AcousticModel,
                p: FrameParams = FrameParams(), lam: int = 0,
                position: Position = Position.BEGIN) -> ClipPlan:
    """Choose the clip to attack from the logit/transcript length ratio.

    Transcribes x to get |y|, counts windows for |c|, and allocates
    ceil((|c|/|y|) * (|t| + lambda)) windows' worth of samples at the chosen
    position. The beginning clip starts at sample 0; the end clip finishes at
    the last sample; the middle clip starts after the allocation for the
    first few transcript characters.
    """
    y = transcribe(model, x, p)
    if not y:
        raise PhraseTooLongError("model transcribes the audio to empty text; nothing to allocate against")
    c_len = frame_count(len(x), p)
    t_len = len(t.effective_text(position))
    s = p.step_samples
    clip_len = clip_length_samples(c_len, len(y), t_len, lam, s)
    n_win = clip_len // s
    total = len(x)
    index_prime = None
    if position is Position.BEGIN:
        if clip_len > total:
            raise AudioTooShortError(f"clip of {clip_len} samples exceeds audio of {total}")
        index = clip_len
    elif position is Position.END:
        if clip_len > total:
            raise AudioTooShortError(f"clip of {clip_len} samples exceeds audio of {total}")
        index = total - clip_len
    else:
        index_prime = -((-c_len * MIDDLE_KEPT_CHARS) // len(y)) * s
        index = index_prime + clip_len
        if index > total:
            raise AudioTooShortError(
                f"middle clip [{index_prime}, {index}) exceeds audio of {total} samples"
            )
    return ClipPlan(
        position=position,
        index=index,
        lam=lam,
        clip_len_samples=clip_len,
        total_len_samples=total,
        ratio_frames=clip_len / total,
        allocated_windows=n_win,
        index_prime=index_prime,
    )


def _noise_db(delta_peak: float, clip_peak: float) -> float:
    """dB of the noise relative to the clip; -inf for zero noise."""
    if delta_peak == 0.0:
        return -math.inf
    return 20.0 * math.log10(delta_peak * DB_FULL_SCALE) - 20.0 * math.log10(clip_peak * DB_FULL_SCALE)


def _noise_box(clip_peak: float, con: float) -> float:
    """Max noise magnitude equivalent to the dB budget con."""
    return clip_peak * 10.0 ** (con / 20.0)


def _optimize(x: Waveform, clip_start: int, clip_end: int, target_text: str,
              model: AcousticModel, cfg: AttackConfig, p: FrameParams):
    """Shared constrained optimization on the clip [clip_start, clip_end)."""
    labels = DEFAULT_ALPHABET.encode(target_text)
    clip0 = x.samples[clip_start:clip_end].copy()
    try:
        t_clip = frame_count(clip0.size, p)
    except TooShortError as exc:
        raise UnalignableError(f"clip of {clip0.size} samples holds no analysis window") from exc
    if t_clip < min_alignment_length(labels):
        raise UnalignableError(
            f"target {target_text!r} needs {min_alignment_length(labels)} windows, clip has {t_clip}"
        )
    clip_peak = float(np.max(np.abs(clip0)))
    if clip_peak == 0.0:
        clip_peak = 1.0 / DB_FULL_SCALE  # silent clip: reference one int16 count
    try:
        weights = np.broadcast_to(np.asarray(cfg.loss_weights, dtype=np.float64), (t_clip,))
    except ValueError:
        raise InvalidInputError(
            f"loss_weights must be scalar or length {t_clip}, got {np.shape(cfg.loss_weights)}"
        ) from None
    params = model.params64()

    def clip_waveform(delta):
        # the projection keeps clip0+delta inside the box up to 1 ulp; clamp
        # so Waveform's [-1, 1] validation never trips on rounding
        return Waveform(np.clip(clip0 + delta, -cfg.clip_bound, cfg.clip_bound), x.sample_rate)

    def loss_and_grad(delta):
        feats = mfcc_forward(clip_waveform(delta), p)
        logits, hidden = rnn_forward(params, feats)
        res = ctc_loss(logits, labels, DEFAULT_ALPHABET.blank_index)
        grad_logits = res.grad_logits * weights[:, None]
        _, grad_feats = rnn_backward(params, feats, hidden, grad_logits)
        grad_wave = mfcc_backward(clip_waveform(delta), p, grad_feats)
        total = float(np.mean(weights)) * res.loss + L2_PENALTY_WEIGHT * float(delta @ delta)
        grad = grad_wave + 2.0 * L2_PENALTY_WEIGHT * delta
        return total, grad, logits

    def decode_and_loss(delta):
        feats = mfcc_forward(clip_waveform(delta), p)
        logits, _ = rnn_forward(params, feats)
        res = ctc_loss(logits, labels, DEFAULT_ALPHABET.blank_index)
        total = float(np.mean(weights)) * res.loss + L2_PENALTY_WEIGHT * float(delta @ delta)
        return greedy_decode(logits), total

    con = cfg.initial_con
    box = _noise_box(clip_peak, con)
    delta = np.zeros_like(clip0)
    adam = Adam(cfg.learning_rate)
    checkpoints: list[Checkpoint] = []
    candidates: list[tuple[float, int, np.ndarray]] = []
    window_ops = 0

    def checkpoint(iteration, delta):
        nonlocal con, box
        decoded, total = decode_and_loss(delta)
        checkpoints.append(Checkpoint(iteration=iteration, loss=total, con=con, decoded=decoded))
        db = _noise_db(float(np.max(np.abs(delta))), clip_peak)
        if decoded == target_text and db <= con:
            candidates.append((db, iteration, delta.copy()))
            con *= cfg.con_decay
            box = _noise_box(clip_peak, con)
        return total

    start = time.perf_counter()
    total = checkpoint(0, delta)
    window_ops += t_clip
    if not np.isfinite(total):
        raise NonFiniteLossError(f"non-finite loss at iteration 0: {total}")
    for it in range(1, cfg.iterations + 1):
        total, grad, _ = loss_and_grad(delta)
        window_ops += t_clip
        if not np.isfinite(total):
            raise NonFiniteLossError(f"non-finite loss at iteration {it}: {total}")
        delta = adam.step({"delta": delta}, {"delta": grad})["delta"]
        np.clip(delta, -box, box, out=delta)
        np.clip(delta, -cfg.clip_bound - clip0, cfg.clip_bound - clip0, out=delta)
        if it % cfg.check_every == 0:
            checkpoint(it, delta)
            window_ops += t_clip
    wall = time.perf_counter() - start

    if candidates:
        best_db, _, best_delta = min(candidates, key=lambda c: (c[0], c[1]))
    else:
        best_delta = delta
        best_db = _noise_db(float(np.max(np.abs(best_delta))), clip_peak)
    adv_samples = x.samples.copy()
    adv_samples[clip_start:clip_end] = np.clip(clip0 + best_delta, -cfg.clip_bound, cfg.clip_bound)
    return adv_samples, best_db, tuple(checkpoints), window_ops, wall


def _finish(x, adv_samples, phrase, plan, cfg, model, p, noise_db, checkpoints, window_ops, wall):
    adversarial = Waveform(adv_samples, x.sample_rate)
    transcript = transcribe(model, adversarial, p)
    return AttackResult(
        adversarial=adversarial,
        transcript=transcript,
        success_rate=phrase_success(phrase.text, transcript).success_rate,
        distortion_db=distortion_db(x, adversarial),
        ratio_frames=plan.ratio_frames,
        iterations_run=cfg.iterations,
        wall_time_seconds=wall,
        per_checkpoint_log=checkpoints,
        window_ops=window_ops,
        plan=plan,
        noise_db=noise_db,
    )


def run_attack(x: Waveform, t: TargetPhrase, model: AcousticModel, plan: ClipPlan,
               cfg: AttackConfig = AttackConfig(), p: FrameParams = FrameParams()) -> AttackResult:
    """Optimize noise on the planned clip; the rest of the audio is untouched.

    The CTC target is the phrase plus its positional separator. Success of
    the returned audio is the best-window containment of the raw phrase in
    the full transcription; distortion is the whole-audio loudness change.
    Deterministic apart from wall_time_seconds.
    """
    if plan.total_len_samples != len(x) or plan.clip_end > len(x):
        raise InvalidInputError(f"plan for {plan.total_len_samples} samples applied to audio of {len(x)}")
    target_text = t.effective_text(plan.position)
    adv, noise_db, checkpoints, ops, wall = _optimize(
        x, plan.clip_start, plan.clip_end, target_text, model, cfg, p
    )
    return _finish(x, adv, t, plan, cfg, model, p, noise_db, checkpoints, ops, wall)


def run_baseline(x: Waveform, t: TargetPhrase, model: AcousticModel,
                 cfg: AttackConfig = AttackConfig(), p: FrameParams = FrameParams()) -> AttackResult:
    """Whole-audio attack: every sample perturbed, transcript rewritten to the
    raw phrase, ratio_frames exactly 1."""
    plan = ClipPlan(
        position=Position.BEGIN,
        index=len(x),
        lam=0,
        clip_len_samples=len(x),
        total_len_samples=len(x),
        ratio_frames=1.0,
        allocated_windows=frame_count(len(x), p),
    )
    adv, noise_db, checkpoints, ops, wall = _optimize(x, 0, len(x), t.text, model, cfg, p)
    return _finish(x, adv, t, plan, cfg, model, p, noise_db, checkpoints, ops, wall)


def sweep_lambda(x: Waveform, t: TargetPhrase, model: AcousticModel, lambdas,
                 cfg: AttackConfig = AttackConfig(), p: FrameParams = FrameParams(),
                 position: Position = Position.BEGIN) -> list[AttackResult]:
    """Attack once per fine-tune margin, returning results ordered by lambda.

    The best margin depends on the specific audio and phrase; pick it from
    the returned list with best_result.
    """
    results = []
    for lam in sorted(set(int(l) for l in lambdas)):
        plan = select_clip(x, t, model, p, lam=lam, position=position)
        results.append(run_attack(x, t, model, plan, cfg, p))
    return results


def best_result(results) -> AttackResult:
    """Highest success rate, ties broken by smaller noise loudness."""
    if not results:
        raise InvalidInputError("no attack results to choose from")
    return max(results, key=lambda r: (r.success_rate, -r.noise_db))
