"""
Wordpiece vocabulary with the trailing word-end marker convention.

A word such as "turner" is written as pieces ["tur", "n", "e", "r_"]: every piece
except the last one is a plain piece, the last one carries the word-end marker.
Four ids are reserved and never appear inside a word: the transducer null symbol,
the out-of-list (OOL) token, and the sentence boundaries.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import DEFAULT_WORD_END_MARKER, ModelMode
from .errors import MalformedSequence, UncoverableWord, VocabError
from .utils import atomic_write, read_lines

logger = logging.getLogger(__name__)

NULL_TOKEN = "<null>"
OOL_TOKEN = "<ool>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"

# Names used on "#!" lines of a vocab file
RESERVED_DECLARATIONS = {"NULL": NULL_TOKEN, "OOL": OOL_TOKEN, "BOS": BOS_TOKEN, "EOS": EOS_TOKEN}

DEFAULT_WORD_END_SUFFIX = DEFAULT_WORD_END_MARKER


@dataclass(frozen=True)
class Vocab:
    pieces: Tuple[str, ...]
    null_id: int
    ool_id: int
    bos_id: int
    eos_id: int
    word_end_suffix: str = DEFAULT_WORD_END_SUFFIX
    case_sensitive: bool = False
    id_of: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.word_end_suffix:
            raise VocabError("the word-end marker must not be empty")
        if len(set(self.pieces)) != len(self.pieces):
            raise VocabError("duplicate wordpieces in vocabulary")
        reserved = (self.null_id, self.ool_id, self.bos_id, self.eos_id)
        if len(set(reserved)) != 4 or not all(0 <= i < len(self.pieces) for i in reserved):
            raise VocabError(f"reserved ids {reserved} must be distinct and inside the vocabulary")
        object.__setattr__(self, "id_of", {piece: i for i, piece in enumerate(self.pieces)})

    @classmethod
    def build(cls, pieces: Sequence[str], word_end_suffix=DEFAULT_WORD_END_SUFFIX, case_sensitive=False):
        """Vocabulary with ids 0..3 reserved for null, OOL, BOS and EOS followed by `pieces` in order"""
        ordered = [NULL_TOKEN, OOL_TOKEN, BOS_TOKEN, EOS_TOKEN]
        for piece in pieces:
            piece = piece if case_sensitive else piece.lower()
            if piece not in ordered:
                ordered.append(piece)
        return cls(tuple(ordered), 0, 1, 2, 3, word_end_suffix, case_sensitive)

    def __len__(self):
        return len(self.pieces)

    @property
    def reserved_ids(self):
        return frozenset((self.null_id, self.ool_id, self.bos_id, self.eos_id))

    def is_reserved(self, piece_id):
        return piece_id in self.reserved_ids

    def is_word_end(self, piece_id):
        piece = self.pieces[piece_id]
        return (
            not self.is_reserved(piece_id)
            and piece.endswith(self.word_end_suffix)
            and len(piece) > len(self.word_end_suffix)
        )

    def surface(self, piece_id):
        """Text a piece contributes to a word (the piece without its word-end marker)"""
        piece = self.pieces[piece_id]
        return piece[: -len(self.word_end_suffix)] if self.is_word_end(piece_id) else piece

    def normalize(self, word):
        return word if self.case_sensitive else word.lower()

    def emittable_mask(self, mode):
        """Ids a model may put probability on. OOL and BOS never are."""
        mask = np.ones(len(self), dtype=bool)
        mask[self.ool_id] = False
        mask[self.bos_id] = False
        if mode == ModelMode.AED:
            mask[self.null_id] = False
        else:
            mask[self.eos_id] = False
        return mask


def tokenize_word(word: str, vocab: Vocab) -> List[int]:
    """Greedy longest match, left to right. Only the final piece may (and must) carry the word-end marker."""
    text = vocab.normalize(word)
    if not text:
        raise VocabError("cannot tokenize an empty word")

    ids = []
    start = 0
    while start < len(text):
        for end in range(len(text), start, -1):
            candidate = text[start:end] + (vocab.word_end_suffix if end == len(text) else "")
            piece_id = vocab.id_of.get(candidate)
            if piece_id is not None and not vocab.is_reserved(piece_id):
                ids.append(piece_id)
                start = end
                break
        else:
            missing = text[start] + (vocab.word_end_suffix if start == len(text) - 1 else "")
            raise UncoverableWord(word, missing)
    return ids


def detokenize(ids: Sequence[int], vocab: Vocab) -> List[str]:
    """Join pieces into words, splitting after every word-end piece. Reserved ids carry no text and are skipped."""
    words = []
    current = []
    for piece_id in ids:
        if vocab.is_reserved(piece_id):
            continue
        current.append(vocab.surface(piece_id))
        if vocab.is_word_end(piece_id):
            words.append("".join(current))
            current = []
    if current:
        raise MalformedSequence(words, "".join(current))
    return words


def words_to_ids(text: str, vocab: Vocab) -> List[int]:
    """Tokenize a whitespace-separated transcript"""
    ids = []
    for word in text.split():
        ids.extend(tokenize_word(word, vocab))
    return ids


def ids_to_text(ids: Sequence[int], vocab: Vocab) -> str:
    """Detokenize for display; a trailing partial word is kept as its own word"""
    try:
        words = detokenize(ids, vocab)
    except MalformedSequence as e:
        logger.debug(f"Hypothesis ends mid-word, keeping partial word '{e.partial}'")
        words = e.words + [e.partial]
    return " ".join(words)


def covering_pieces(words, word_end_suffix=DEFAULT_WORD_END_SUFFIX):
    """Single characters plus marked final characters, enough for every word in `words` to be tokenizable"""
    pieces = set()
    for word in words:
        pieces.update(word[:-1])
        pieces.add(word[-1] + word_end_suffix)
    return sorted(pieces)


def load_vocab(path, word_end_suffix=DEFAULT_WORD_END_SUFFIX, case_sensitive=False) -> Vocab:
    """Read a vocab file: one wordpiece per line, "#! OOL" style lines declare the reserved tokens in place"""
    pieces = []
    reserved = {}
    for line in read_lines(path):
        if line.startswith("#!"):
            name = line[2:].strip().upper()
            if name not in RESERVED_DECLARATIONS:
                raise VocabError(f"{path}: unknown reserved token declaration '{line}'")
            if name in reserved:
                raise VocabError(f"{path}: reserved token {name} declared twice")
            reserved[name] = len(pieces)
            pieces.append(RESERVED_DECLARATIONS[name])
        else:
            piece = line.strip()
            pieces.append(piece if case_sensitive else piece.lower())

    missing = [name for name in RESERVED_DECLARATIONS if name not in reserved]
    if missing:
        raise VocabError(f"{path}: missing reserved token declaration(s): {', '.join(missing)}")

    vocab = Vocab(
        tuple(pieces),
        null_id=reserved["NULL"],
        ool_id=reserved["OOL"],
        bos_id=reserved["BOS"],
        eos_id=reserved["EOS"],
        word_end_suffix=word_end_suffix,
        case_sensitive=case_sensitive,
    )
    logger.info(f"Loaded {len(vocab)} wordpieces from {path}")
    return vocab


def save_vocab(vocab: Vocab, path):
    names = {
        vocab.null_id: "NULL",
        vocab.ool_id: "OOL",
        vocab.bos_id: "BOS",
        vocab.eos_id: "EOS",
    }
    with atomic_write(path) as file:
        for piece_id, piece in enumerate(vocab.pieces):
            file.write(f"#! {names[piece_id]}\n" if piece_id in names else piece + "\n")
