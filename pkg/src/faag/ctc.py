"""Connectionist Temporal Classification loss with exact gradients.

ctc_loss runs the standard forward-backward recursion over the
blank-interleaved extended label sequence, entirely in log space, and returns
both the negative log total alignment probability and its exact gradient with
respect to the (pre-softmax) logits. ctc_loss_bruteforce enumerates every
alignment path on small instances and serves as the independent oracle;
ctc_grad_check replays randomized finite-difference probes.

The blank symbol defaults to the last logit column.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyLogitsError,
    InvalidInputError,
    TooLargeError,
    UnalignableError,
)

NEG_INF = -np.inf

BRUTEFORCE_MAX_T = 8
BRUTEFORCE_MAX_CLASSES = 6


@dataclass(frozen=True)
class CtcLoss:
    """Loss value (-log total path probability) and gradient w.r.t. logits."""

    loss: float
    grad_logits: np.ndarray


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _validate(logits, labels, blank):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[1] < 2:
        raise EmptyLogitsError(f"logits must be (T >= 1, classes >= 2), got {logits.shape}")
    n_classes = logits.shape[1]
    if blank is None:
        blank = n_classes - 1
    if not 0 <= blank < n_classes:
        raise InvalidInputError(f"blank index {blank} outside [0, {n_classes})")
    labels = [int(l) for l in labels]
    for l in labels:
        if not 0 <= l < n_classes or l == blank:
            raise InvalidInputError(f"label {l} invalid for {n_classes} classes with blank {blank}")
    return logits, labels, blank


def min_alignment_length(labels) -> int:
    """Shortest T that can align the labels: length plus mandatory blanks
    between adjacent repeats."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _extended(labels, blank):
    ext = [blank]
    for l in labels:
        ext.extend((l, blank))
    return np.array(ext, dtype=np.intp)


def ctc_loss(logits, labels, blank: int | None = None) -> CtcLoss:
    """Forward-backward CTC loss and exact logit gradient.

    logits: (T, classes) pre-softmax scores. labels: target class indices,
    never blank. Raises UnalignableError when T is smaller than the minimum
    alignment length (a blank is mandatory between repeated labels).
    """
    logits, labels, blank = _validate(logits, labels, blank)
    t_len = logits.shape[0]
    if t_len < min_alignment_length(labels):
        raise UnalignableError(
            f"{t_len} windows cannot align target of minimum length {min_alignment_length(labels)}"
        )
    lsm = _log_softmax(logits)
    ext = _extended(labels, blank)
    s_len = ext.size

    # skip transition s-2 -> s allowed onto a non-blank that differs from the
    # label two slots back
    can_skip = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        can_skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    emit = lsm[:, ext]  # (T, S)

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        if s_len > 2:
            acc[2:] = np.where(can_skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    log_p = alpha[t_len - 1, s_len - 1]
    if s_len > 1:
        log_p = np.logaddexp(log_p, alpha[t_len - 1, s_len - 2])

    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = emit[t_len - 1, s_len - 1]
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = emit[t_len - 1, s_len - 2]
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        if s_len > 2:
            # skip s -> s+2 mirrors the forward condition evaluated at s+2
            acc[:-2] = np.where(can_skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc + emit[t]

    # gamma double-counts the emission shared by alpha and beta; divide it out
    gamma = alpha + beta - emit
    occupancy = np.full((t_len, logits.shape[1]), NEG_INF)
    for s in range(s_len):
        c = ext[s]
        occupancy[:, c] = np.logaddexp(occupancy[:, c], gamma[:, s])
    grad = np.exp(lsm) - np.exp(occupancy - log_p)
    return CtcLoss(loss=float(-log_p), grad_logits=grad)


def collapse_path(path, blank: int) -> tuple[int, ...]:
    """CTC collapse: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for c in path:
        if c != prev and c != blank:
            out.append(c)
        prev = c
    return tuple(out)


def ctc_loss_bruteforce(logits, labels, blank: int | None = None) -> float:
    """Oracle loss by enumerating all classes**T alignment paths.

    Exponential; guarded to T <= 8 and classes <= 6. Sums the softmax
    probability of every path that collapses to the target.
    """
    logits, labels, blank = _validate(logits, labels, blank)
    t_len, n_classes = logits.shape
    if t_len > BRUTEFORCE_MAX_T or n_classes > BRUTEFORCE_MAX_CLASSES:
        raise TooLargeError(
            f"refusing {n_classes}**{t_len} paths (limits: T <= {BRUTEFORCE_MAX_T}, "
            f"classes <= {BRUTEFORCE_MAX_CLASSES})"
        )
    if t_len < min_alignment_length(labels):
        raise UnalignableError(
            f"{t_len} windows cannot align target of minimum length {min_alignment_length(labels)}"
        )
    probs = np.exp(_log_softmax(logits))
    target = tuple(labels)
    total = 0.0
    for path in itertools.product(range(n_classes), repeat=t_len):
        if collapse_path(path, blank) == target:
            p = 1.0
            for t, c in enumerate(path):
                p *= probs[t, c]
            total += p
    return float(-np.log(total))


def ctc_grad_check(seed: int = 0, trials: int = 20, h: float = 1e-5) -> dict:
    """Central finite-difference probe of ctc_loss gradients.

    Returns a report with the max relative L2 error over random small
    instances (T <= 8). Deterministic under a fixed seed.
    """
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    for _ in range(trials):
        t_len = int(rng.integers(2, 9))
        n_classes = int(rng.integers(2, 6))
        blank = n_classes - 1
        while True:
            tgt_len = int(rng.integers(0, 4))
            labels = [int(c) for c in rng.integers(0, n_classes - 1, size=tgt_len)]
            if min_alignment_length(labels) <= t_len:
                break
        logits = rng.normal(0.0, 2.0, size=(t_len, n_classes))
        analytic = ctc_loss(logits, labels, blank).grad_logits
        fd = np.zeros_like(logits)
        for t in range(t_len):
            for c in range(n_classes):
                bump = np.zeros_like(logits)
                bump[t, c] = h
                up = ctc_loss(logits + bump, labels, blank).loss
                down = ctc_loss(logits - bump, labels, blank).loss
                fd[t, c] = (up - down) / (2.0 * h)
        denom = max(np.linalg.norm(fd), np.linalg.norm(analytic), 1e-12)
        max_rel = max(max_rel, float(np.linalg.norm(fd - analytic) / denom))
    return {"trials": trials, "seed": seed, "step": h, "max_rel_error": max_rel}
