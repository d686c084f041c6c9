"""Operator surface: corpus synthesis, training, transcription, attacks,
lambda sweeps, defense evaluation, and benchmarking.

Every subcommand writes a run manifest (JSON) next to its outputs with the
resolved configuration, seeds, tool version, and the model file checksum, so
published results replay bit-exactly (timings aside). Reports are JSON Lines,
one object per experiment row. A TOML config file can pre-set any flag;
explicit flags win. FAAG_SEED provides the global default seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .attack import (
    AttackConfig,
    Position,
    Suffix,
    TargetPhrase,
    best_result,
    run_attack,
    select_clip,
    sweep_lambda,
)
from .audio import read_wav, write_wav
from .errors import (
    AudioTooShortError,
    ChecksumMismatchError,
    DivergenceError,
    EmptyLogitsError,
    FaagError,
    FormatVersionMismatchError,
    InvalidInputError,
    NonFiniteLossError,
    PhraseTooLongError,
    TooShortError,
    UnalignableError,
    UnsupportedFormatError,
)
from .features import FrameParams
from .metrics import bench_speedup, eval_defense
from .model import init_model, load_model, save_model, transcribe
from .train import TrainConfig, load_corpus, save_corpus, synth_corpus, train

EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_PHRASE = 5
EXIT_ALIGNMENT = 6
EXIT_NUMERIC = 7
EXIT_INVALID = 8

_ERROR_EXIT = (
    ((UnsupportedFormatError, FormatVersionMismatchError, ChecksumMismatchError), EXIT_FORMAT),
    ((PhraseTooLongError, AudioTooShortError), EXIT_PHRASE),
    ((UnalignableError, TooShortError, EmptyLogitsError), EXIT_ALIGNMENT),
    ((NonFiniteLossError, DivergenceError), EXIT_NUMERIC),
    ((FaagError,), EXIT_INVALID),
    ((OSError,), EXIT_IO),
)

EPILOG = """\
exit codes:
  0  success
  2  usage error
  3  file I/O error (missing/unreadable path)
  4  format error (bad WAV format, bad model magic/checksum)
  5  phrase/clip selection error (phrase too long, clip exceeds audio)
  6  alignment error (audio too short, target unalignable)
  7  numeric failure (non-finite loss, training divergence)
  8  invalid input value

environment:
  FAAG_SEED  default seed when --seed is not given

config file (--config FILE, TOML): one table per subcommand, keys matching
flag names with dashes as underscores, e.g.  [attack] iterations = 500
explicit command-line flags take precedence over the config file.
"""


def _default_seed() -> int:
    return int(os.environ.get("FAAG_SEED", "0"))


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _nonneg_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return n


def _lambda_list(value: str) -> list[int]:
    try:
        lams = [int(part) for part in value.split(",") if part != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}")
    if not lams or any(l < 0 for l in lams):
        raise argparse.ArgumentTypeError("lambdas must be non-negative integers")
    return lams


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_path, command: str, args: argparse.Namespace, outputs,
                    model_path=None, extra=None):
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "config") and not callable(v)
    }
    manifest = {
        "tool": "faag",
        "version": __version__,
        "command": command,
        "config": config,
        "seeds": {"seed": args.seed} if hasattr(args, "seed") else {},
        "outputs": [str(o) for o in outputs],
    }
    if model_path:
        manifest["model_sha256"] = _sha256(model_path)
    if extra:
        manifest.update(extra)
    path = str(out_path) + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _append_jsonl(path, rows):
    with open(path, "a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def _frame_params(args) -> FrameParams:
    return FrameParams(
        window_size_samples=args.window,
        step_samples=args.step,
        n_mels=args.n_mels,
        n_coeffs=args.n_coeffs,
    )


def _add_frame_flags(parser):
    parser.add_argument("--window", type=_positive_int, default=512, help="analysis window in samples")
    parser.add_argument("--step", type=_positive_int, default=320, help="hop between windows in samples")
    parser.add_argument("--n-mels", type=_positive_int, default=26, help="mel filterbank size")
    parser.add_argument("--n-coeffs", type=_positive_int, default=13, help="cepstral coefficients kept")


def _add_attack_flags(parser):
    parser.add_argument("--iterations", type=_positive_int, default=1000)
    parser.add_argument("--lr", type=float, default=10.0, help="Adam step size on the noise")
    parser.add_argument("--initial-con", type=float, default=40.0, help="starting noise budget in dB")
    parser.add_argument("--con-decay", type=float, default=0.8, help="budget multiplier at successful checkpoints")
    parser.add_argument("--check-every", type=_positive_int, default=100, help="iterations between decode checkpoints")
    parser.add_argument("--suffix", choices=[s.value for s in Suffix], default=Suffix.TWO_SPACES.value,
                        help="separator shielding the phrase from the rest of the transcript")


def _attack_config(args) -> AttackConfig:
    return AttackConfig(
        iterations=args.iterations,
        learning_rate=args.lr,
        initial_con=args.initial_con,
        con_decay=args.con_decay,
        check_every=args.check_every,
        seed=args.seed,
    )


def cmd_synth(args) -> int:
    corpus = synth_corpus(args.n, args.words, args.seed, _frame_params(args))
    names = save_corpus(corpus, args.out)
    manifest = _write_manifest(os.path.join(args.out, "corpus"), "synth", args,
                               [os.path.join(args.out, n) for n in names])
    print(f"wrote {len(names)} utterances to {args.out} (manifest: {manifest})")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    p = _frame_params(args)
    model = init_model(input_dim=args.n_coeffs, hidden_dim=args.hidden, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr, seed=args.seed)
    model, log = train(model, corpus, cfg, p)
    save_model(model, args.out)
    log_path = args.log or str(args.out) + ".train.jsonl"
    _append_jsonl(log_path, log)
    _write_manifest(args.out, "train", args, [args.out, log_path], model_path=args.out)
    final_cer = log[-1]["corpus_cer"] if log else float("nan")
    print(f"model saved to {args.out}; final corpus CER {final_cer:.4f}")
    return 0


def cmd_transcribe(args) -> int:
    model = load_model(args.model)
    wav = read_wav(args.wav)
    print(transcribe(model, wav, _frame_params(args)))
    return 0


def cmd_attack(args) -> int:
    model = load_model(args.model)
    wav = read_wav(args.wav)
    p = _frame_params(args)
    phrase = TargetPhrase(args.phrase, Suffix(args.suffix))
    plan = select_clip(wav, phrase, model, p, lam=args.lam, position=Position(args.position))
    result = run_attack(wav, phrase, model, plan, _attack_config(args), p)
    write_wav(result.adversarial, args.out)
    _append_jsonl(args.report, [result.to_dict()])
    _write_manifest(args.out, "attack", args, [args.out, args.report], model_path=args.model)
    print(
        f"success_rate={result.success_rate:.4f} distortion_db={result.distortion_db:.2f} "
        f"ratio_frames={result.ratio_frames:.4f} wall={result.wall_time_seconds:.2f}s"
    )
    print(f"transcript: {result.transcript}")
    return 0


def _sweep_one(task):
    model_path, wav_path, phrase_text, suffix, position, lam, cfg_kwargs, frame_kwargs = task
    model = load_model(model_path)
    wav = read_wav(wav_path)
    p = FrameParams(**frame_kwargs)
    phrase = TargetPhrase(phrase_text, Suffix(suffix))
    plan = select_clip(wav, phrase, model, p, lam=lam, position=Position(position))
    return lam, run_attack(wav, phrase, model, plan, AttackConfig(**cfg_kwargs), p)


def cmd_sweep(args) -> int:
    model = load_model(args.model)
    wav = read_wav(args.wav)
    p = _frame_params(args)
    phrase = TargetPhrase(args.phrase, Suffix(args.suffix))
    lams = sorted(set(args.lambdas))
    if args.jobs > 1:
        cfg_kwargs = {
            "iterations": args.iterations, "learning_rate": args.lr,
            "initial_con": args.initial_con, "con_decay": args.con_decay,
            "check_every": args.check_every, "seed": args.seed,
        }
        frame_kwargs = {
            "window_size_samples": args.window, "step_samples": args.step,
            "n_mels": args.n_mels, "n_coeffs": args.n_coeffs,
        }
        tasks = [(args.model, args.wav, args.phrase, args.suffix, args.position, lam,
                  cfg_kwargs, frame_kwargs) for lam in lams]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = [r for _, r in sorted(pool.map(_sweep_one, tasks), key=lambda t: t[0])]
    else:
        results = sweep_lambda(wav, phrase, model, lams, _attack_config(args), p,
                               Position(args.position))
    _append_jsonl(args.report, [r.to_dict() for r in results])
    _write_manifest(args.report, "sweep", args, [args.report], model_path=args.model)
    best = best_result(results)
    for r in results:
        print(f"lambda={r.plan.lam} success_rate={r.success_rate:.4f} "
              f"noise_db={r.noise_db:.2f} ratio_frames={r.ratio_frames:.4f}")
    print(f"best lambda: {best.plan.lam} (success_rate={best.success_rate:.4f})")
    return 0


def cmd_defend(args) -> int:
    model = load_model(args.model)
    benign = read_wav(args.benign)
    suspicious = read_wav(args.suspicious)
    p = _frame_params(args)
    truths = args.truth
    if not truths:
        # no ground truth given: measure against the model's own decodes of
        # the two parts taken separately
        truths = [transcribe(model, benign, p), transcribe(model, suspicious, p)]
    report = eval_defense(benign, suspicious, model, args.phrase, truths, p)
    out = report.to_dict()
    print(json.dumps(out, indent=2, sort_keys=True))
    if args.report:
        _append_jsonl(args.report, [out])
        _write_manifest(args.report, "defend", args, [args.report], model_path=args.model)
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.model)
    corpus = load_corpus(args.corpus)
    with open(args.phrases, "r", encoding="utf-8") as fh:
        phrase_texts = [line.strip() for line in fh if line.strip()]
    if not phrase_texts:
        raise InvalidInputError(f"{args.phrases}: no phrases")
    phrases = [TargetPhrase(t, Suffix(args.suffix)) for t in phrase_texts]
    p = _frame_params(args)
    # timing comparability requires sequential runs; --jobs is ignored here
    report = bench_speedup([u.audio for u in corpus], phrases, model, _attack_config(args), p,
                           lam=args.lam)
    _append_jsonl(args.out, [row.to_dict() for row in report.rows])
    _write_manifest(args.out, "bench", args, [args.out], model_path=args.model)
    print(f"{'audio':>5} {'phrase':<28} {'ratio':>6} {'faag_s':>8} {'base_s':>8} {'speedup':>8}")
    for row in report.rows:
        print(f"{row.audio_index:>5} {row.phrase:<28} {row.ratio_frames:>6.3f} "
              f"{row.faag_seconds:>8.2f} {row.baseline_seconds:>8.2f} {row.speedup:>8.3f}")
    print(f"mean speedup: {report.mean_speedup:.3f} over {len(report.rows)} runs")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faag",
        description=__doc__,
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"faag {__version__}")
    parser.add_argument("--config", help="TOML file with per-subcommand flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic tone corpus")
    sp.add_argument("--out", required=True, help="corpus directory")
    sp.add_argument("--n", type=_positive_int, required=True, help="number of utterances")
    sp.add_argument("--words", type=_positive_int, default=5, help="words per utterance")
    sp.add_argument("--seed", type=int, default=None)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train the recognizer on a corpus directory")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--out", required=True, help="model file path")
    sp.add_argument("--epochs", type=_nonneg_int, default=30)
    sp.add_argument("--hidden", type=_positive_int, default=128)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--log", default=None, help="training log JSONL (default: <out>.train.jsonl)")
    sp.add_argument("--seed", type=int, default=None)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("transcribe", help="print the model's transcription of a WAV")
    sp.add_argument("--model", required=True)
    sp.add_argument("--wav", required=True)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_transcribe, seed=None)

    sp = sub.add_parser("attack", help="embed a phrase in a clip of the audio")
    sp.add_argument("--model", required=True)
    sp.add_argument("--wav", required=True)
    sp.add_argument("--phrase", required=True)
    sp.add_argument("--position", choices=[pos.value for pos in Position], default="begin")
    sp.add_argument("--lambda", dest="lam", type=_nonneg_int, default=0,
                    help="extra characters of clip allocation")
    sp.add_argument("--out", required=True, help="adversarial WAV path")
    sp.add_argument("--report", required=True, help="JSONL results file (appended)")
    sp.add_argument("--seed", type=int, default=None)
    _add_attack_flags(sp)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("sweep", help="attack once per lambda and report the best")
    sp.add_argument("--model", required=True)
    sp.add_argument("--wav", required=True)
    sp.add_argument("--phrase", required=True)
    sp.add_argument("--position", choices=[pos.value for pos in Position], default="begin")
    sp.add_argument("--lambdas", type=_lambda_list, default=[0, 1, 2, 3],
                    help="comma-separated, e.g. 0,1,2,3")
    sp.add_argument("--report", required=True)
    sp.add_argument("--jobs", type=_positive_int, default=1, help="parallel attack runs")
    sp.add_argument("--seed", type=int, default=None)
    _add_attack_flags(sp)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("defend", help="prepend benign audio and re-transcribe")
    sp.add_argument("--model", required=True)
    sp.add_argument("--benign", required=True)
    sp.add_argument("--suspicious", required=True)
    sp.add_argument("--phrase", required=True)
    sp.add_argument("--truth", action="append", default=[],
                    help="ground-truth transcript (repeatable; default: model decodes of the parts)")
    sp.add_argument("--report", default=None, help="optional JSONL output")
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_defend, seed=None)

    sp = sub.add_parser("bench", help="clip attack vs whole-audio attack timing")
    sp.add_argument("--model", required=True)
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--phrases", required=True, help="file with one phrase per line")
    sp.add_argument("--out", required=True, help="JSONL report path")
    sp.add_argument("--lambda", dest="lam", type=_nonneg_int, default=0)
    sp.add_argument("--jobs", type=_positive_int, default=1,
                    help="accepted for symmetry; bench always runs sequentially")
    sp.add_argument("--seed", type=int, default=None)
    _add_attack_flags(sp)
    _add_frame_flags(sp)
    sp.set_defaults(func=cmd_bench)
    return parser


def _apply_config(parser, argv):
    """Pre-scan for --config and install its tables as subcommand defaults."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    with open(known.config, "rb") as fh:
        data = tomllib.load(fh)
    for action in parser._subparsers._group_actions:  # subparser registry
        for name, sub in action.choices.items():
            table = data.get(name)
            if table:
                sub.set_defaults(**{k.replace("-", "_"): v for k, v in table.items()})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if getattr(args, "seed", None) is None:
            args.seed = _default_seed()
        return args.func(args)
    except SystemExit as exit_:  # argparse usage errors / --help / --version
        return int(exit_.code) if exit_.code is not None else 0
    except tomllib.TOMLDecodeError as err:
        print(f"error: bad config file: {err}", file=sys.stderr)
        return EXIT_INVALID
    except tuple(exc for excs, _ in _ERROR_EXIT for exc in excs) as err:
        for exc_types, code in _ERROR_EXIT:
            if isinstance(err, exc_types):
                print(f"error: {err}", file=sys.stderr)
                return code
        raise  # unreachable


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
