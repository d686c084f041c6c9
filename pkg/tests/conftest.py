import pytest

from faag import FrameParams, TrainConfig, init_model, synth_corpus, train
from faag.train import Utterance, render_transcript

REF_SEED = 7


@pytest.fixture(scope="session")
def ref_params():
    return FrameParams()


@pytest.fixture(scope="session")
def ref_setup(ref_params):
    """Reference recognizer: 20 utterances, seed 7, 30 epochs.

    The corpus CER gate below is the precondition for every attack experiment.
    """
    corpus = synth_corpus(20, seed=REF_SEED)
    model = init_model(seed=REF_SEED)
    model, log = train(model, corpus, TrainConfig(epochs=30, seed=REF_SEED), ref_params)
    assert log[-1]["corpus_cer"] < 0.10
    return model, corpus, log


@pytest.fixture(scope="session")
def overfit_setup(ref_params):
    """Model overfit on one utterance whose transcript equals a phrase plus
    its word separator, so the selected beginning clip already decodes to the
    effective attack target."""
    utt = Utterance(render_transcript("go and", ref_params), "go and")
    model = init_model(seed=3)
    model, log = train(model, [utt], TrainConfig(epochs=250, learning_rate=5e-3, seed=3), ref_params)
    assert log[-1]["corpus_cer"] == 0.0
    return model, utt
