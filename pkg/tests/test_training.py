import os

import numpy as np
import pytest
from helpers import TINY_DIMS, TemporaryDirectory, random_features, tiny_vocab

from tcpgen_biasing.checkpoint import load_checkpoint
from tcpgen_biasing.config import BiasingMode, ExperimentConfig, ModelMode
from tcpgen_biasing.data import Utterance
from tcpgen_biasing.errors import NonFiniteLoss
from tcpgen_biasing.models import ToyModelParams
from tcpgen_biasing.training import (
    METRICS_COLUMNS,
    checkpoint_paths,
    clip_gradients,
    global_norm,
    prepare_examples,
    sgd_step,
    train,
    train_step,
)

LISTS = {"u1": ["ab", "cab"], "u2": ["bad"]}


def utterances():
    return [
        Utterance("u1", "s1", "ab cab", features=random_features(6, seed=1)),
        Utterance("u2", "s1", "bad", features=random_features(5, seed=2)),
    ]


def experiment(**values):
    dims = {name: getattr(TINY_DIMS, name) for name in ("d_feat", "d_enc", "d_dec", "d_emb", "d_tree", "d_joint")}
    return ExperimentConfig(**dims).override(**values)


def initial_params(mode=ModelMode.AED, seed=0):
    return ToyModelParams.initialize(mode, len(tiny_vocab()), TINY_DIMS, seed=seed)


def test_prepare_examples_builds_trees_only_when_biasing():
    """Test that trees are built only for biased systems"""
    vocab = tiny_vocab()
    examples = prepare_examples(utterances(), vocab, LISTS, BiasingMode.TCPGEN_GNN)
    assert examples[0].tree.word_count == 2
    assert examples[1].tree.word_count == 1
    assert all(example.tree is None for example in prepare_examples(utterances(), vocab, LISTS, BiasingMode.OFF))


def test_missing_list_gives_an_empty_tree():
    examples = prepare_examples(utterances(), tiny_vocab(), {}, BiasingMode.TCPGEN)
    assert examples[0].tree.word_count == 0


def test_clip_gradients():
    """Test global norm clipping"""
    gradients = {"a": np.array([3.0, 0.0]), "b": np.array([4.0])}
    assert global_norm(gradients) == pytest.approx(5.0)
    clipped, norm = clip_gradients(gradients, 1.0)
    assert norm == pytest.approx(5.0)
    assert global_norm(clipped) == pytest.approx(1.0)
    np.testing.assert_allclose(clipped["a"], [0.6, 0.0])
    unchanged, _ = clip_gradients(gradients, 10.0)
    assert unchanged is gradients


def test_sgd_step_is_out_of_place():
    """Test that an update leaves the old parameters untouched"""
    params = initial_params()
    before = params.arrays["enc.W"].copy()
    updated = sgd_step(params, {"enc.W": np.ones_like(before)}, 0.5)
    np.testing.assert_array_equal(params.arrays["enc.W"], before)
    np.testing.assert_allclose(updated.arrays["enc.W"], before - 0.5)
    assert updated.arrays["dec.W"] is params.arrays["dec.W"]


def test_zero_learning_rate_leaves_parameters_unchanged():
    """Test training with a zero learning rate"""
    vocab = tiny_vocab()
    params = initial_params()
    examples = prepare_examples(utterances(), vocab, LISTS)
    result = train(examples, params, vocab, experiment(learning_rate=0.0, epochs=2))
    for name, array in params.arrays.items():
        np.testing.assert_array_equal(result.params.arrays[name], array)
    assert result.epochs[0].mean_loss == pytest.approx(result.epochs[1].mean_loss)


@pytest.mark.parametrize("mode", ModelMode.ALL)
def test_training_reduces_the_loss(mode):
    """Test that a few epochs reduce the training loss"""
    vocab = tiny_vocab()
    examples = prepare_examples(utterances(), vocab, LISTS)
    result = train(examples, initial_params(mode), vocab, experiment(mode=mode, learning_rate=0.1, epochs=15))
    assert len(result.epochs) == 15
    assert result.final_loss < result.epochs[0].mean_loss
    assert 0.0 < result.epochs[-1].mean_p_gen < 1.0


def five_utterances():
    texts = ["ab cab", "bad", "dab bead", "ace cab", "deed ab"]
    return [Utterance(f"u{i}", "s1", text, features=random_features(7, seed=i)) for i, text in enumerate(texts, 1)]


@pytest.mark.parametrize("mode", ModelMode.ALL)
@pytest.mark.parametrize("biasing", [BiasingMode.OFF, BiasingMode.TCPGEN_GNN])
def test_repeated_steps_on_one_utterance_never_raise_its_loss(mode, biasing):
    """Test that 50 updates on one utterance of a 5-utterance corpus lower its loss at every step"""
    vocab = tiny_vocab()
    lists = {"u1": ["ab", "cab"], "u2": ["bad"], "u3": ["bead"], "u4": ["ace"], "u5": ["deed"]}
    example = prepare_examples(five_utterances(), vocab, lists, biasing)[0]
    params = initial_params(mode)
    losses = []
    for _ in range(50):
        params, loss, _, _ = train_step(params, vocab, example, biasing, 0.01, 5.0)
        losses.append(loss)
    for previous, current in zip(losses, losses[1:]):
        assert current <= previous
    assert losses[-1] < losses[0]


def test_train_step_reports_the_unclipped_norm():
    vocab = tiny_vocab()
    example = prepare_examples(utterances(), vocab, LISTS)[0]
    _, loss, p_gens, norm = train_step(initial_params(), vocab, example, BiasingMode.TCPGEN_GNN, 0.1, 1e-6)
    assert loss > 0.0
    assert norm > 1e-6
    assert len(p_gens) == len(example.target_ids) + 1


def test_non_finite_loss_names_the_utterance():
    """Test that a NaN loss aborts with the epoch and utterance id"""
    vocab = tiny_vocab()
    params = initial_params()
    params.arrays["out.b"] = np.full_like(params.arrays["out.b"], np.nan)
    examples = prepare_examples(utterances()[:1], vocab, LISTS)
    with pytest.raises(NonFiniteLoss) as info:
        train(examples, params, vocab, experiment(epochs=1))
    assert info.value.batch_id == "1:u1"


def test_checkpoint_and_metrics_are_written_every_epoch():
    """Test the checkpoint and metrics files written during training"""
    vocab = tiny_vocab()
    examples = prepare_examples(utterances(), vocab, LISTS)
    with TemporaryDirectory() as directory:
        settings = experiment(epochs=2, checkpoint_dir=os.path.join(directory, "ckpt"), seed=3)
        checkpoint_path, metrics_path = checkpoint_paths(settings)
        assert os.path.basename(checkpoint_path) == "aed-tcpgen-gnn-seed3.ckpt"
        result = train(examples, initial_params(), vocab, settings, checkpoint_path, metrics_path)
        checkpoint = load_checkpoint(checkpoint_path)
        with open(metrics_path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    assert checkpoint.metadata["epoch"] == 2
    np.testing.assert_array_equal(checkpoint.params.arrays["gnn.W1"], result.params.arrays["gnn.W1"])
    assert lines[0].split("\t") == list(METRICS_COLUMNS)
    assert len(lines) == 3


def test_training_is_reproducible():
    """Test that training twice with one seed gives the same parameters"""
    vocab = tiny_vocab()
    examples = prepare_examples(utterances(), vocab, LISTS)
    first = train(examples, initial_params(), vocab, experiment(epochs=2))
    second = train(examples, initial_params(), vocab, experiment(epochs=2))
    for name, array in first.params.arrays.items():
        np.testing.assert_array_equal(second.params.arrays[name], array)
