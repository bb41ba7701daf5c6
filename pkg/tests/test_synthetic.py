import os

import numpy as np
import pytest
from helpers import TemporaryDirectory

from tcpgen_biasing.config import MAX_TOY_VOCAB_SIZE, load_config
from tcpgen_biasing.data import load_biasing_lists, load_corpus, load_transcripts
from tcpgen_biasing.synthetic import (
    ALPHABET,
    CONFUSABLE_PAIRS,
    FeatureRenderer,
    generate_task,
    piece_prototypes,
    write_task,
)
from tcpgen_biasing.vocab import load_vocab, words_to_ids


@pytest.fixture(scope="module")
def task():
    return generate_task(seed=0, n_train=40, n_test=12, n_oov=2, n_distractors=3)


def test_vocabulary_fits_the_toy_limit(task):
    """Test that the synthetic vocabulary stays small"""
    assert len(task.vocab) <= MAX_TOY_VOCAB_SIZE
    for letter in ALPHABET:
        assert letter in task.vocab.id_of
        assert letter + "_" in task.vocab.id_of


def test_rare_words_are_rare_in_training(task):
    """Test the training counts of rare and held-out words"""
    for word in task.rare_words:
        assert 1 <= task.train_counts.get(word) <= 3
    for word in task.oov_words:
        assert task.train_counts.get(word) == 0


def test_held_out_words_appear_in_the_first_test_utterances(task):
    """Test that held-out words are placed in the test set"""
    for index, utterance in enumerate(task.test[:4]):
        assert task.oov_words[index % 2] in utterance.text.split()


def test_every_test_utterance_has_a_biasing_word(task):
    for utterance in task.test:
        assert task.biasing_words & set(utterance.text.split())


def test_lists_hold_the_reference_words_and_distractors(task):
    """Test the synthetic biasing lists"""
    for utterance in task.train + task.test:
        words = task.biasing_lists[utterance.utterance_id]
        own = task.biasing_words & set(utterance.text.split())
        assert own <= set(words)
        assert len(words) == len(own) + 3


def test_every_word_can_be_tokenized(task):
    for utterance in task.train + task.test:
        assert words_to_ids(utterance.text, task.vocab)


def test_features_match_the_rendering(task):
    utterance = task.test[0]
    renderer = FeatureRenderer(task.vocab, seed=0)
    np.testing.assert_array_equal(utterance.features, renderer(utterance))
    pieces = len(words_to_ids(utterance.text, task.vocab))
    assert utterance.features.shape == (2 + 2 * pieces, 8)


def test_generation_is_seeded(task):
    """Test that the task depends only on the seed"""
    again = generate_task(seed=0, n_train=40, n_test=12, n_oov=2, n_distractors=3)
    assert [u.text for u in again.train] == [u.text for u in task.train]
    np.testing.assert_array_equal(again.test[5].features, task.test[5].features)
    other = generate_task(seed=1, n_train=40, n_test=12, n_oov=2, n_distractors=3)
    assert [u.text for u in other.train] != [u.text for u in task.train]


def test_noiseless_rendering_is_prototypes_plus_speaker_offset(task):
    """Test rendering without noise"""
    renderer = FeatureRenderer(task.vocab, seed=0, noise=0.0)
    first = renderer.render("ab", "u1", "spk0")
    second = renderer.render("ab", "u2", "spk0")
    np.testing.assert_array_equal(first, second)
    offset = first[0]
    ids = words_to_ids("ab", task.vocab)
    np.testing.assert_allclose(first[1] - offset, renderer.prototypes[ids[0]])
    np.testing.assert_allclose(first[1], first[2])


def test_confusable_letters_sit_close_together(task):
    prototypes = piece_prototypes(task.vocab, 8, seed=0)
    ids = task.vocab.id_of
    for pair in CONFUSABLE_PAIRS:
        close = np.linalg.norm(prototypes[ids[pair[0]]] - prototypes[ids[pair[1]]])
        assert close < 3.0
    assert not np.any(prototypes[task.vocab.ool_id])


def test_written_task_can_be_read_back(task):
    """Test that a written task loads back through the regular readers"""
    with TemporaryDirectory() as directory:
        config_path = write_task(task, directory, seed=0)
        experiment = load_config(config_path)
        vocab = load_vocab(experiment.vocab)
        train = load_corpus(experiment.corpus)
        lists = load_biasing_lists(experiment.biasing_dir, [u.utterance_id for u in train])
        references = load_transcripts(os.path.join(directory, "test_ref.txt"))
    assert vocab.pieces == task.vocab.pieces
    assert [u.text for u in train] == [u.text for u in task.train]
    assert train[0].feature_path is None
    assert lists[train[0].utterance_id] == task.biasing_lists[train[0].utterance_id]
    assert len(references) == len(task.test)


def test_custom_word_end_marker():
    """Test a synthetic task with its own word-end marker"""
    task = generate_task(seed=0, n_train=6, n_test=2, n_oov=1, n_distractors=2, word_end_marker="@")
    assert task.vocab.word_end_suffix == "@"
    assert "a@" in task.vocab.id_of
    assert "a_" not in task.vocab.id_of
    with TemporaryDirectory() as directory:
        experiment = load_config(write_task(task, directory, seed=0))
    assert experiment.word_end_marker == "@"
