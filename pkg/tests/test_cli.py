import json

import numpy as np
import pytest

from faag import init_model, load_model, read_wav, save_model, transcribe, write_wav
from faag.cli import EXIT_ALIGNMENT, EXIT_FORMAT, EXIT_IO, EXIT_PHRASE, main
from faag.model import PARAM_ORDER
from faag.train import save_corpus


@pytest.fixture(scope="module")
def ref_model_file(ref_setup, tmp_path_factory):
    model, corpus, _ = ref_setup
    root = tmp_path_factory.mktemp("cli")
    model_path = root / "ref.faag"
    save_model(model, model_path)
    return str(model_path)


@pytest.fixture(scope="module")
def ref_wav_file(ref_setup, tmp_path_factory):
    _, corpus, _ = ref_setup
    root = tmp_path_factory.mktemp("wavs")
    path = root / "utt0.wav"
    write_wav(corpus[0].audio, path)
    return str(path)


def _read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def test_synth_writes_corpus_and_manifest(tmp_path, capsys):
    out = tmp_path / "corp"
    assert main(["synth", "--out", str(out), "--n", "3", "--seed", "5"]) == 0
    wavs = sorted(out.glob("*.wav"))
    assert len(wavs) == 3
    manifest_lines = (out / "manifest.tsv").read_text().strip().split("\n")
    assert len(manifest_lines) == 3
    assert (out / "corpus.manifest.json").exists()
    run_manifest = json.loads((out / "corpus.manifest.json").read_text())
    assert run_manifest["command"] == "synth"
    assert run_manifest["seeds"] == {"seed": 5}
    assert run_manifest["version"]

    first_bytes = [w.read_bytes() for w in wavs]
    out2 = tmp_path / "corp2"
    assert main(["synth", "--out", str(out2), "--n", "3", "--seed", "5"]) == 0
    assert [w.read_bytes() for w in sorted(out2.glob("*.wav"))] == first_bytes


def test_synth_rejects_zero(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x"), "--n", "0"]) == 2


def test_train_and_transcribe_roundtrip(tmp_path, ref_setup, ref_params, capsys):
    model, corpus, _ = ref_setup
    corpus_dir = tmp_path / "corp"
    save_corpus(corpus[:3], corpus_dir)
    model_path = tmp_path / "m.faag"
    code = main(["train", "--corpus", str(corpus_dir), "--out", str(model_path),
                 "--epochs", "2", "--seed", "1"])
    captured = capsys.readouterr()
    assert code == 0
    assert "CER" in captured.out
    assert model_path.exists()
    assert (tmp_path / "m.faag.train.jsonl").exists()
    assert (tmp_path / "m.faag.manifest.json").exists()
    log_rows = _read_jsonl(tmp_path / "m.faag.train.jsonl")
    assert len(log_rows) == 2 and {"epoch", "mean_loss", "corpus_cer"} <= set(log_rows[0])


def test_train_epochs_zero_saves_initialization(tmp_path, ref_setup):
    _, corpus, _ = ref_setup
    corpus_dir = tmp_path / "corp"
    save_corpus(corpus[:2], corpus_dir)
    model_path = tmp_path / "init.faag"
    assert main(["train", "--corpus", str(corpus_dir), "--out", str(model_path),
                 "--epochs", "0", "--seed", "9"]) == 0
    saved = load_model(model_path)
    fresh = init_model(input_dim=13, hidden_dim=128, seed=9)
    for name in PARAM_ORDER:
        assert np.array_equal(getattr(saved, name), getattr(fresh, name))


def test_train_missing_manifest(tmp_path, capsys):
    missing = tmp_path / "nocorpus"
    missing.mkdir()
    code = main(["train", "--corpus", str(missing), "--out", str(tmp_path / "m.faag")])
    assert code == EXIT_IO
    assert str(missing) in capsys.readouterr().err


def test_transcribe_prints_transcript(ref_setup, ref_params, ref_model_file, tmp_path, capsys):
    model, corpus, _ = ref_setup
    # pick an utterance that still decodes exactly after 16-bit quantization
    # (training is deterministic, so this choice is stable)
    wav_path = tmp_path / "u.wav"
    for utt in corpus:
        write_wav(utt.audio, wav_path)
        if transcribe(model, read_wav(wav_path), ref_params) == utt.transcript:
            break
    else:
        pytest.fail("no training utterance survives quantization exactly")
    assert main(["transcribe", "--model", ref_model_file, "--wav", str(wav_path)]) == 0
    assert capsys.readouterr().out.strip() == utt.transcript


def test_transcribe_corrupt_model(tmp_path, ref_wav_file, capsys):
    bad = tmp_path / "bad.faag"
    bad.write_bytes(b"FAAGMDL1" + b"\x01" * 40)
    assert main(["transcribe", "--model", str(bad), "--wav", ref_wav_file]) == EXIT_FORMAT


def test_transcribe_too_short_wav(tmp_path, ref_model_file, capsys):
    from faag import Waveform

    short = tmp_path / "short.wav"
    write_wav(Waveform(np.zeros(100) + 0.01), short)
    assert main(["transcribe", "--model", ref_model_file, "--wav", str(short)]) == EXIT_ALIGNMENT


def test_attack_end_to_end(tmp_path, ref_model_file, ref_wav_file, capsys):
    adv = tmp_path / "adv.wav"
    report = tmp_path / "rows.jsonl"
    code = main([
        "attack", "--model", ref_model_file, "--wav", ref_wav_file,
        "--phrase", "call red", "--iterations", "30", "--check-every", "10",
        "--lr", "0.02", "--seed", "0", "--out", str(adv), "--report", str(report),
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "success_rate=" in out and "transcript:" in out
    original = read_wav(ref_wav_file)
    adversarial = read_wav(adv)
    assert len(adversarial) == len(original)
    rows = _read_jsonl(report)
    assert len(rows) == 1
    assert {"success_rate", "distortion_db", "ratio_frames", "wall_time_seconds"} <= set(rows[0])
    assert (tmp_path / "adv.wav.manifest.json").exists()
    manifest = json.loads((tmp_path / "adv.wav.manifest.json").read_text())
    assert "model_sha256" in manifest and len(manifest["model_sha256"]) == 64


def test_attack_phrase_too_long(tmp_path, ref_model_file, ref_wav_file, capsys):
    code = main([
        "attack", "--model", ref_model_file, "--wav", ref_wav_file,
        "--phrase", "a" * 200, "--iterations", "5",
        "--out", str(tmp_path / "a.wav"), "--report", str(tmp_path / "r.jsonl"),
    ])
    assert code == EXIT_PHRASE
    err = capsys.readouterr().err
    assert "202" in err  # |t| including the two-space separator
    assert any(ch.isdigit() for ch in err.split("only")[-1])  # transcript length printed


def test_sweep_rows_ordered(tmp_path, ref_model_file, ref_wav_file, capsys):
    report = tmp_path / "sweep.jsonl"
    code = main([
        "sweep", "--model", ref_model_file, "--wav", ref_wav_file,
        "--phrase", "go", "--lambdas", "1,0", "--iterations", "10",
        "--check-every", "5", "--lr", "0.02", "--report", str(report),
    ])
    assert code == 0
    rows = _read_jsonl(report)
    assert [row["lambda"] for row in rows] == [0, 1]
    assert rows[0]["ratio_frames"] < rows[1]["ratio_frames"]
    assert "best lambda:" in capsys.readouterr().out
    assert (tmp_path / "sweep.jsonl.manifest.json").exists()

    # deterministic rerun appends identical rows
    assert main([
        "sweep", "--model", ref_model_file, "--wav", ref_wav_file,
        "--phrase", "go", "--lambdas", "1,0", "--iterations", "10",
        "--check-every", "5", "--lr", "0.02", "--report", str(report),
    ]) == 0
    rows2 = _read_jsonl(report)
    for a, b in zip(rows2[:2], rows2[2:]):
        a.pop("wall_time_seconds"), b.pop("wall_time_seconds")
        assert a == b


def test_defend_clean_plus_clean(tmp_path, ref_model_file, ref_wav_file, capsys):
    report = tmp_path / "defense.jsonl"
    code = main([
        "defend", "--model", ref_model_file, "--benign", ref_wav_file,
        "--suspicious", ref_wav_file, "--phrase", "zzz zzz", "--report", str(report),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["phrase_in_transcript"] is False
    assert {"attack_success_rate", "transcription_accuracy"} <= set(payload)
    assert _read_jsonl(report) == [payload]


def test_defend_rate_mismatch(tmp_path, ref_model_file, ref_setup):
    from faag import Waveform

    _, corpus, _ = ref_setup
    other = tmp_path / "other.wav"
    write_wav(Waveform(corpus[0].audio.samples, sample_rate=8000), other)
    code = main([
        "defend", "--model", ref_model_file, "--benign", str(other),
        "--suspicious", str(other).replace("other", "missing"), "--phrase", "x",
    ])
    assert code == EXIT_IO  # missing file surfaces as I/O


def test_bench_summary(tmp_path, ref_model_file, ref_setup, capsys):
    _, corpus, _ = ref_setup
    corpus_dir = tmp_path / "bcorp"
    save_corpus(corpus[:2], corpus_dir)
    phrases = tmp_path / "phrases.txt"
    phrases.write_text("call red\n")
    out = tmp_path / "bench.jsonl"
    code = main([
        "bench", "--model", ref_model_file, "--corpus", str(corpus_dir),
        "--phrases", str(phrases), "--iterations", "10", "--check-every", "5",
        "--lr", "0.02", "--out", str(out),
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "mean speedup:" in stdout
    rows = _read_jsonl(out)
    assert len(rows) == 2
    for row in rows:
        assert 0.0 < row["ratio_frames"] <= 1.0
        assert row["faag_window_ops"] < row["baseline_window_ops"]


def test_config_file_defaults(tmp_path, ref_model_file, ref_wav_file, capsys):
    config = tmp_path / "faag.toml"
    config.write_text('[attack]\niterations = 5\nlr = 0.02\ncheck_every = 5\n')
    adv = tmp_path / "adv.wav"
    report = tmp_path / "r.jsonl"
    code = main([
        "--config", str(config), "attack", "--model", ref_model_file,
        "--wav", ref_wav_file, "--phrase", "go",
        "--out", str(adv), "--report", str(report),
    ])
    assert code == 0
    rows = _read_jsonl(report)
    assert rows[0]["iterations_run"] == 5
    # explicit flag beats the config value
    code = main([
        "--config", str(config), "attack", "--model", ref_model_file,
        "--wav", ref_wav_file, "--phrase", "go", "--iterations", "3",
        "--out", str(adv), "--report", str(report),
    ])
    assert code == 0
    assert _read_jsonl(report)[1]["iterations_run"] == 3


def test_env_seed_default(tmp_path, monkeypatch):
    monkeypatch.setenv("FAAG_SEED", "77")
    out = tmp_path / "corp"
    assert main(["synth", "--out", str(out), "--n", "1"]) == 0
    manifest = json.loads((out / "corpus.manifest.json").read_text())
    assert manifest["seeds"] == {"seed": 77}


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "exit codes" in capsys.readouterr().out
