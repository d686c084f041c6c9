"""Toolkit for targeted adversarial audio against a small CTC recognizer.

Train the toy recognizer on the synthetic tone corpus, then run the clip
attack (noise optimized on a minimal beginning stretch of the audio) or the
whole-audio baseline, measure success/distortion/timing, and evaluate the
prepend-benign-audio defense.
"""

__version__ = "0.1.0"

from . import errors
from .attack import (
    AttackConfig,
    AttackResult,
    ClipPlan,
    Position,
    Suffix,
    TargetPhrase,
    best_result,
    run_attack,
    run_baseline,
    select_clip,
    sweep_lambda,
)
from .audio import Waveform, concat, distortion_db, loudness_db, read_wav, split, write_wav
from .ctc import CtcLoss, ctc_grad_check, ctc_loss, ctc_loss_bruteforce
from .features import FrameParams, frame_count, mfcc_backward, mfcc_forward
from .metrics import (
    BenchReport,
    CerReport,
    DefenseReport,
    bench_speedup,
    cer,
    eval_defense,
    phrase_success,
)
from .model import (
    DEFAULT_ALPHABET,
    AcousticModel,
    Alphabet,
    backward,
    forward,
    greedy_decode,
    init_model,
    load_model,
    save_model,
    transcribe,
)
from .train import TrainConfig, Utterance, evaluate, load_corpus, save_corpus, synth_corpus, train
