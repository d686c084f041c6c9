import numpy as np
import pytest

from faag import (
    DEFAULT_ALPHABET,
    backward,
    ctc_loss,
    forward,
    greedy_decode,
    init_model,
    load_model,
    save_model,
)
from faag.ctc import min_alignment_length
from faag.errors import (
    ChecksumMismatchError,
    DimMismatchError,
    FormatVersionMismatchError,
    InvalidDimError,
    InvalidInputError,
    ShapeMismatchError,
)
from faag.model import MODEL_MAGIC, PARAM_ORDER, rnn_forward


def test_alphabet():
    assert len(DEFAULT_ALPHABET.symbols) == 27
    assert DEFAULT_ALPHABET.blank_index == 27
    assert DEFAULT_ALPHABET.num_classes == 28
    assert DEFAULT_ALPHABET.encode("ab z") == [0, 1, 26, 25]
    with pytest.raises(InvalidInputError):
        DEFAULT_ALPHABET.encode("a-b")


def test_init_deterministic():
    a = init_model(4, 8, seed=5)
    b = init_model(4, 8, seed=5)
    for name in PARAM_ORDER:
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = init_model(4, 8, seed=6)
    assert any(not np.array_equal(getattr(a, n), getattr(c, n)) for n in PARAM_ORDER)


def test_init_bounds_and_biases():
    m = init_model(16, 32, seed=0)
    assert np.all(np.abs(m.W_in) <= 1 / np.sqrt(16) + 1e-7)
    assert np.all(np.abs(m.W_rec) <= 1 / np.sqrt(32) + 1e-7)
    assert np.array_equal(m.b_rec, np.zeros(32, dtype=np.float32))
    assert np.array_equal(m.b_out, np.zeros(28, dtype=np.float32))


def test_init_invalid_dims():
    with pytest.raises(InvalidDimError):
        init_model(4, 0, seed=0)
    with pytest.raises(InvalidDimError):
        init_model(0, 4, seed=0)


def test_forward_shapes_and_zero_weights():
    m = init_model(3, 4, seed=0, num_classes=5)
    bias = np.arange(5, dtype=np.float64)
    params = {n: np.zeros_like(getattr(m, n)) for n in PARAM_ORDER}
    params["b_out"] = bias
    zeroed = m.with_params(params)
    feats = np.random.default_rng(0).normal(size=(6, 3))
    logits, trace = forward(zeroed, feats)
    assert logits.shape == (6, 5)
    assert trace.shape == (6, 4)
    assert np.array_equal(logits, np.tile(bias, (6, 1)))  # hidden stays zero

    one_row, _ = forward(m, feats[:1])
    assert one_row.shape == (1, 5)

    again, _ = forward(m, feats)
    full, _ = forward(m, feats)
    assert np.array_equal(again, full)

    with pytest.raises(DimMismatchError):
        forward(m, np.zeros((2, 7)))


def test_backward_shape_checks():
    m = init_model(3, 4, seed=1, num_classes=5)
    feats = np.zeros((2, 3))
    logits, trace = forward(m, feats)
    with pytest.raises(ShapeMismatchError):
        backward(m, feats, trace, np.zeros((2, 9)))
    with pytest.raises(ShapeMismatchError):
        backward(m, feats, trace[:1], np.zeros((2, 5)))
    grads, gfeats = backward(m, feats, trace, np.zeros((2, 5)))
    assert all(np.array_equal(g, np.zeros_like(g)) for g in grads.values())
    assert np.array_equal(gfeats, np.zeros((2, 3)))


def _loss_on(params, feats, labels, blank):
    logits, _ = rnn_forward(params, feats)
    return ctc_loss(logits, labels, blank).loss


def test_gradients_match_finite_differences_many_instances():
    rng = np.random.default_rng(20)
    h = 1e-6
    for _ in range(20):
        input_dim = int(rng.integers(2, 5))
        hidden = int(rng.integers(2, 9))
        classes = int(rng.integers(3, 6))
        t_len = int(rng.integers(1, 6))
        m = init_model(input_dim, hidden, seed=int(rng.integers(0, 1000)), num_classes=classes)
        feats = rng.normal(size=(t_len, input_dim))
        while True:
            labels = [int(v) for v in rng.integers(0, classes - 1, size=rng.integers(0, 3))]
            if min_alignment_length(labels) <= t_len:
                break
        logits, trace = forward(m, feats)
        res = ctc_loss(logits, labels, classes - 1)
        grads, gfeats = backward(m, feats, trace, res.grad_logits)
        params = m.params64()

        for name in PARAM_ORDER:
            fd = np.zeros_like(params[name])
            it = np.nditer(fd, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                up = {k: v.copy() for k, v in params.items()}
                up[name][idx] += h
                down = {k: v.copy() for k, v in params.items()}
                down[name][idx] -= h
                fd[idx] = (_loss_on(up, feats, labels, classes - 1)
                           - _loss_on(down, feats, labels, classes - 1)) / (2 * h)
            denom = max(np.linalg.norm(fd), np.linalg.norm(grads[name]), 1e-10)
            assert np.linalg.norm(fd - grads[name]) / denom < 1e-4, name

        fd_in = np.zeros_like(feats)
        for t in range(t_len):
            for d in range(input_dim):
                up, down = feats.copy(), feats.copy()
                up[t, d] += h
                down[t, d] -= h
                fd_in[t, d] = (_loss_on(params, up, labels, classes - 1)
                               - _loss_on(params, down, labels, classes - 1)) / (2 * h)
        denom = max(np.linalg.norm(fd_in), np.linalg.norm(gfeats), 1e-10)
        assert np.linalg.norm(fd_in - gfeats) / denom < 1e-4


def _logits_for_path(path):
    logits = np.full((len(path), 28), -5.0)
    for t, c in enumerate(path):
        logits[t, c] = 5.0
    return logits


def test_greedy_decode_examples():
    a, b = DEFAULT_ALPHABET.encode("ab")
    blank = DEFAULT_ALPHABET.blank_index
    assert greedy_decode(_logits_for_path([a, a, blank, b])) == "ab"
    assert greedy_decode(_logits_for_path([blank, blank])) == ""
    assert greedy_decode(_logits_for_path([a, blank, a])) == "aa"


def test_greedy_decode_tie_breaks_low_index():
    assert greedy_decode(np.zeros((3, 28))) == "a"


def test_decode_length_bound():
    rng = np.random.default_rng(21)
    for _ in range(20):
        t_len = int(rng.integers(1, 30))
        assert len(greedy_decode(rng.normal(size=(t_len, 28)))) <= t_len


def test_decode_depends_only_on_argmaxes():
    rng = np.random.default_rng(22)
    for _ in range(20):
        logits = rng.normal(size=(12, 28))
        shifted = logits + rng.normal()  # per-matrix constant keeps every argmax
        assert greedy_decode(shifted) == greedy_decode(logits)
        rescaled = logits * 3.0  # positive scaling keeps every argmax
        assert greedy_decode(rescaled) == greedy_decode(logits)


def test_save_load_roundtrip(tmp_path):
    m = init_model(13, 32, seed=99)
    path = tmp_path / "m.faag"
    save_model(m, path)
    back = load_model(path)
    assert (back.input_dim, back.hidden_dim, back.seed) == (13, 32, 99)
    for name in PARAM_ORDER:
        assert np.array_equal(getattr(back, name), getattr(m, name)), name
    # stability: a second save produces identical bytes
    path2 = tmp_path / "m2.faag"
    save_model(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_bad_magic(tmp_path):
    path = tmp_path / "bad.faag"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(FormatVersionMismatchError):
        load_model(path)


def test_load_truncated(tmp_path):
    m = init_model(4, 4, seed=0)
    path = tmp_path / "trunc.faag"
    save_model(m, path)
    blob = path.read_bytes()
    for cut in (len(MODEL_MAGIC) - 2, len(blob) // 2, len(blob) - 1):
        path.write_bytes(blob[:cut])
        with pytest.raises((FormatVersionMismatchError, ChecksumMismatchError)):
            load_model(path)


def test_load_corrupted_payload(tmp_path):
    m = init_model(4, 4, seed=0)
    path = tmp_path / "flip.faag"
    save_model(m, path)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ChecksumMismatchError):
        load_model(path)
