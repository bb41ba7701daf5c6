"""
Synthetic recognition task: a small letter alphabet, a wordpiece vocabulary of at most
64 pieces, Zipf-distributed common words, rare words that occur at most three times in
training, held-out words that never occur in training, and acoustics rendered from the
wordpiece sequence.

Each piece has a fixed prototype frame; an utterance is one silence frame, then
`frames_per_piece` noisy copies of each piece prototype, then another silence frame,
all shifted by a per-speaker offset. Letters come in confusable pairs whose prototypes
sit close together, so the acoustics alone leave rare words ambiguous.
"""

import logging
import os
import zlib
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from . import config
from .biasing_lists import WordCounts, save_counts, save_word_list, simulate_utterance_list
from .data import Utterance, references_of, save_biasing_lists, save_corpus, save_transcripts
from .vocab import Vocab, save_vocab, words_to_ids

logger = logging.getLogger(__name__)

CONFUSABLE_PAIRS = ("bp", "dt", "gk", "mn", "ei", "ou", "lr", "as")
ALPHABET = "".join(sorted("".join(CONFUSABLE_PAIRS)))
CONFUSION_OFFSET = 0.25
SPEAKER_OFFSET = 0.1
PREFIX_LENGTH = 3

_PROTOTYPE_STREAM = 1
_SPEAKER_STREAM = 2
_UTTERANCE_STREAM = 3


def _stream(seed, stream, name=""):
    return np.random.default_rng([seed, stream, zlib.crc32(name.encode("utf-8"))])


def piece_prototypes(vocab: Vocab, d_feat, seed) -> np.ndarray:
    """One prototype frame per vocabulary id; reserved ids get the zero (silence) frame"""
    rng = _stream(seed, _PROTOTYPE_STREAM)
    partner = {}
    for pair in CONFUSABLE_PAIRS:
        partner[pair[0]], partner[pair[1]] = pair[1], pair[0]

    letters = sorted({c for i in range(len(vocab)) if not vocab.is_reserved(i) for c in vocab.surface(i)})
    groups = {}
    letter_prototypes = {}
    for letter in letters:
        group = min(letter, partner.get(letter, letter))
        if group not in groups:
            groups[group] = rng.normal(size=d_feat)
        letter_prototypes[letter] = groups[group] + CONFUSION_OFFSET * rng.normal(size=d_feat)
    boundary = rng.normal(size=d_feat)

    prototypes = np.zeros((len(vocab), d_feat))
    for piece_id in range(len(vocab)):
        if vocab.is_reserved(piece_id):
            continue
        surface = vocab.surface(piece_id)
        prototypes[piece_id] = np.mean([letter_prototypes[c] for c in surface], axis=0)
        if len(surface) > 1:
            prototypes[piece_id] += CONFUSION_OFFSET * rng.normal(size=d_feat)
        if vocab.is_word_end(piece_id):
            prototypes[piece_id] += boundary
    return prototypes


class FeatureRenderer:
    """Renders deterministic features for an utterance from its text, id and speaker"""

    def __init__(
        self,
        vocab: Vocab,
        seed,
        d_feat=config.DEFAULT_D_FEAT,
        frames_per_piece=config.DEFAULT_FRAMES_PER_PIECE,
        noise=config.DEFAULT_FEATURE_NOISE,
    ):
        self.vocab = vocab
        self.seed = seed
        self.d_feat = d_feat
        self.frames_per_piece = frames_per_piece
        self.noise = noise
        self.prototypes = piece_prototypes(vocab, d_feat, seed)

    @classmethod
    def from_config(cls, vocab, experiment):
        return cls(vocab, experiment.seed, experiment.d_feat, experiment.frames_per_piece, experiment.feature_noise)

    def render(self, text, utterance_id, speaker) -> np.ndarray:
        ids = words_to_ids(text, self.vocab)
        silence = np.zeros((1, self.d_feat))
        frames = [silence]
        if ids:
            frames.append(np.repeat(self.prototypes[ids], self.frames_per_piece, axis=0))
        frames.append(silence)
        clean = np.concatenate(frames)
        offset = SPEAKER_OFFSET * _stream(self.seed, _SPEAKER_STREAM, speaker).normal(size=self.d_feat)
        noise = self.noise * _stream(self.seed, _UTTERANCE_STREAM, utterance_id).normal(size=clean.shape)
        return clean + offset + noise

    def __call__(self, utterance: Utterance) -> np.ndarray:
        return self.render(utterance.text, utterance.utterance_id, utterance.speaker)


@dataclass
class SyntheticTask:
    vocab: Vocab
    train: List[Utterance]
    test: List[Utterance]
    common_words: List[str]
    rare_words: List[str]
    oov_words: List[str]
    train_counts: WordCounts
    biasing_lists: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def biasing_words(self):
        """Every word a biasing list may hold: the rare training words and the held-out words"""
        return set(self.rare_words) | set(self.oov_words)


def _new_word(rng, taken, prefix="", min_length=2, max_length=5):
    while True:
        length = int(rng.integers(min_length, max_length + 1))
        word = prefix + "".join(rng.choice(list(ALPHABET), size=length))
        if word not in taken:
            taken.add(word)
            return word


def _zipf_choice(rng, words, size):
    weights = 1.0 / np.arange(1, len(words) + 1)
    return [words[i] for i in rng.choice(len(words), size=size, p=weights / weights.sum())]


def generate_task(
    seed=config.DEFAULT_SEED,
    n_train=500,
    n_test=100,
    n_speakers=8,
    n_common=40,
    n_families=8,
    family_size=4,
    n_oov=5,
    n_distractors=10,
    max_rare_occurrences=3,
    d_feat=config.DEFAULT_D_FEAT,
    frames_per_piece=config.DEFAULT_FRAMES_PER_PIECE,
    noise=config.DEFAULT_FEATURE_NOISE,
    word_end_marker=config.DEFAULT_WORD_END_MARKER,
) -> SyntheticTask:
    """Rare words come in families sharing a three-letter prefix piece; held-out words reuse those prefixes"""
    rng = np.random.default_rng(seed)
    taken = set()
    prefixes = []
    while len(prefixes) < n_families:
        prefix = "".join(rng.choice(list(ALPHABET), size=PREFIX_LENGTH))
        if prefix not in prefixes:
            prefixes.append(prefix)

    rare_words = [_new_word(rng, taken, prefix, 1, 3) for prefix in prefixes for _ in range(family_size)]
    oov_words = [_new_word(rng, taken, prefixes[i % n_families], 1, 3) for i in range(n_oov)]
    common_words = []
    while len(common_words) < n_common:
        word = _new_word(rng, taken)
        if not any(word.startswith(prefix) for prefix in prefixes):
            common_words.append(word)
        else:
            taken.discard(word)

    pieces = list(ALPHABET) + [letter + word_end_marker for letter in ALPHABET] + prefixes
    vocab = Vocab.build(pieces, word_end_suffix=word_end_marker)
    if len(vocab) > config.MAX_TOY_VOCAB_SIZE:
        raise ValueError(f"toy vocabulary has {len(vocab)} pieces, the limit is {config.MAX_TOY_VOCAB_SIZE}")

    renderer = FeatureRenderer(vocab, seed, d_feat, frames_per_piece, noise)

    # Rare words: 1 to max_rare_occurrences training occurrences each, one per utterance where possible
    occurrences = [word for word in rare_words for _ in range(int(rng.integers(1, max_rare_occurrences + 1)))]
    hosts = rng.choice(n_train, size=len(occurrences), replace=len(occurrences) > n_train)
    inserted = {}
    for host, word in zip(hosts, occurrences):
        inserted.setdefault(int(host), []).append(word)

    def utterance(prefix, index, words):
        utterance_id = f"{prefix}-{index:04d}"
        speaker = f"spk{index % n_speakers}"
        text = " ".join(words)
        return Utterance(utterance_id, speaker, text, features=renderer.render(text, utterance_id, speaker))

    train = []
    for index in range(n_train):
        words = _zipf_choice(rng, common_words, int(rng.integers(3, 6)))
        for word in inserted.get(index, []):
            words.insert(int(rng.integers(0, len(words) + 1)), word)
        train.append(utterance("train", index, words))

    test = []
    for index in range(n_test):
        target = oov_words[index % n_oov] if index < 2 * n_oov else rare_words[int(rng.integers(len(rare_words)))]
        words = _zipf_choice(rng, common_words, int(rng.integers(2, 5)))
        words.insert(int(rng.integers(0, len(words) + 1)), target)
        test.append(utterance("test", index, words))

    pool = sorted(set(rare_words) | set(oov_words))
    biasing_lists = {}
    for index, item in enumerate(train + test):
        biasing_lists[item.utterance_id] = list(
            simulate_utterance_list(item.text, set(pool), pool, n_distractors, seed=[seed, index])
        )

    task = SyntheticTask(
        vocab=vocab,
        train=train,
        test=test,
        common_words=common_words,
        rare_words=rare_words,
        oov_words=oov_words,
        train_counts=WordCounts.from_texts(u.text for u in train),
        biasing_lists=biasing_lists,
    )
    logger.info(
        f"Synthetic task: {len(vocab)} pieces, {len(train)} training / {len(test)} test utterances, "
        f"{len(rare_words)} rare and {len(oov_words)} held-out words"
    )
    return task


def write_task(task: SyntheticTask, directory, seed=config.DEFAULT_SEED):
    """Lay the task out as files the command line reads, plus a matching experiment configuration"""
    os.makedirs(directory, exist_ok=True)
    save_vocab(task.vocab, os.path.join(directory, "vocab.txt"))
    save_corpus(task.train, os.path.join(directory, "train.tsv"))
    save_corpus(task.test, os.path.join(directory, "test.tsv"))
    save_transcripts(references_of(task.test), os.path.join(directory, "test_ref.txt"))
    save_biasing_lists(task.biasing_lists, os.path.join(directory, "biasing"))
    save_counts(task.train_counts, os.path.join(directory, "train_counts.tsv"))
    save_word_list(sorted(task.rare_words), os.path.join(directory, "rare_words.txt"))
    save_word_list(sorted(task.oov_words), os.path.join(directory, "oov_words.txt"))
    save_word_list([], os.path.join(directory, "empty.txt"))
    config_path = os.path.join(directory, "experiment.conf")
    with open(config_path, "w", encoding="utf-8") as file:
        file.write(f"vocab = {os.path.join(directory, 'vocab.txt')}\n")
        file.write(f"corpus = {os.path.join(directory, 'train.tsv')}\n")
        file.write(f"biasing_dir = {os.path.join(directory, 'biasing')}\n")
        file.write(f"checkpoint_dir = {os.path.join(directory, 'checkpoints')}\n")
        file.write(f"seed = {seed}\n")
        file.write(f"word_end_marker = {task.vocab.word_end_suffix}\n")
    logger.info(f"Wrote synthetic task to {directory}")
    return config_path
