"""
Biasing lists: rare words by frequency cutoff, simulated per-utterance lists with
distractors, and lists read from slide text (OCR output).

Slide text is tokenized on whitespace; each token has leading and trailing
non-alphanumeric characters stripped (internal hyphens and apostrophes stay) and is
lowercased.
"""

import logging
import os
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from .errors import DataError, PoolTooSmall
from .utils import atomic_write, parallel_map, read_lines, read_text

logger = logging.getLogger(__name__)

_EDGE_PUNCTUATION = re.compile(r"^[\W_]+|[\W_]+$")
_SERIES_NAME = re.compile(r"^(?P<series>.+?\d+)[a-z]?$", re.IGNORECASE)


@dataclass
class WordCounts:
    counts: Dict[str, int]

    def __post_init__(self):
        for word, count in self.counts.items():
            if not word or count <= 0:
                raise DataError(f"word counts must be positive, got '{word}': {count}")

    @classmethod
    def from_texts(cls, texts: Iterable[str]):
        counter = Counter()
        for text in texts:
            counter.update(word.lower() for word in text.split())
        return cls(dict(counter))

    @property
    def total(self):
        return sum(self.counts.values())

    def __len__(self):
        return len(self.counts)

    def get(self, word):
        return self.counts.get(word, 0)

    def ranked(self) -> List[Tuple[str, int]]:
        """Most frequent first; equal counts in lexicographic order"""
        return sorted(self.counts.items(), key=lambda item: (-item[1], item[0]))


@dataclass(frozen=True)
class BiasingList:
    scope: str
    words: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.words)) != len(self.words):
            raise DataError(f"biasing list '{self.scope}' contains duplicates")
        if not all(self.words):
            raise DataError(f"biasing list '{self.scope}' contains an empty word")

    @classmethod
    def from_words(cls, scope, words: Iterable[str]):
        return cls(scope, tuple(sorted({word for word in words if word})))

    def __len__(self):
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def __contains__(self, word):
        return word in self.words


def load_counts(path) -> WordCounts:
    """Counts file: `word<TAB>count` per line"""
    counts = {}
    for number, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t")
        try:
            word, count = fields[0].strip(), int(fields[1])
        except (IndexError, ValueError):
            raise DataError(f"{path}:{number}: expected 'word<TAB>count', got '{line}'")
        counts[word] = counts.get(word, 0) + count
    return WordCounts(counts)


def save_counts(counts: WordCounts, path):
    with atomic_write(path) as file:
        for word, count in counts.ranked():
            file.write(f"{word}\t{count}\n")


def load_word_list(path) -> List[str]:
    return [line.strip() for line in read_lines(path)]


def save_word_list(words: Iterable[str], path):
    with atomic_write(path) as file:
        for word in words:
            file.write(word + "\n")


def build_rare_word_list(counts: WordCounts, top_k: int) -> Set[str]:
    """Every counted word except the top_k most frequent ones (ties at the cutoff broken lexicographically)"""
    if top_k < 0:
        raise ValueError("top_k must not be negative")
    ranked = counts.ranked()
    return {word for word, _ in ranked[top_k:]}


def simulate_utterance_list(
    reference: str,
    rare_words: Set[str],
    distractor_pool: Iterable[str],
    n_distractors: int,
    seed,
    scope="",
) -> BiasingList:
    """The reference's rare words plus n_distractors words drawn without replacement from the rest of the pool"""
    own = {word for word in reference.lower().split() if word in rare_words}
    candidates = sorted(set(distractor_pool) - own)
    if n_distractors > len(candidates):
        raise PoolTooSmall(len(candidates), n_distractors)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(candidates), size=n_distractors, replace=False) if n_distractors else []
    return BiasingList.from_words(scope, own | {candidates[i] for i in chosen})


def normalize_ocr_token(token: str) -> str:
    return _EDGE_PUNCTUATION.sub("", token).lower()


def _slide_tokens(path) -> Set[str]:
    tokens = {normalize_ocr_token(token) for token in read_text(path).split()}
    tokens.discard("")
    return tokens


def extract_slide_list(
    ocr_text_files: Sequence[str],
    rare_words: Set[str],
    train_counts: WordCounts,
    max_count: int,
    scope="",
    threads=1,
) -> BiasingList:
    """Distinct slide tokens that are rare words seen fewer than max_count times in training"""
    tokens = set()
    for file_tokens in parallel_map(_slide_tokens, sorted(ocr_text_files), threads):
        tokens |= file_tokens
    words = {token for token in tokens if token in rare_words and train_counts.get(token) < max_count}
    logger.debug(f"Slide list '{scope}': {len(words)} words from {len(tokens)} distinct tokens")
    return BiasingList.from_words(scope, words)


def series_of(path) -> str:
    """Meeting series of a slide file: `ES2011a.txt` belongs to `ES2011`"""
    name = os.path.splitext(os.path.basename(path))[0]
    match = _SERIES_NAME.match(name)
    return match.group("series") if match else name


def group_by_series(paths: Iterable[str]) -> Dict[str, List[str]]:
    groups = {}
    for path in sorted(paths):
        groups.setdefault(series_of(path), []).append(path)
    return groups


def extract_series_lists(
    slides_dir, rare_words: Set[str], train_counts: WordCounts, max_count: int, threads=1
) -> Dict[str, BiasingList]:
    """One slide list per meeting series found in `slides_dir`"""
    paths = [os.path.join(slides_dir, name) for name in os.listdir(slides_dir) if name.endswith(".txt")]
    lists = {}
    for series, files in group_by_series(paths).items():
        lists[series] = extract_slide_list(files, rare_words, train_counts, max_count, scope=series, threads=threads)
        logger.info(f"Series {series}: {len(files)} slide file(s), {len(lists[series])} biasing words")
    return lists


def coverage(references: Iterable[str], words) -> float:
    """Fraction of reference word tokens that are in `words`"""
    words = set(words)
    total = covered = 0
    for reference in references:
        for token in reference.lower().split():
            total += 1
            covered += token in words
    return covered / total if total else 0.0
