"""
Corpus, transcript and biasing-list files.

    corpus       utterance_id<TAB>speaker_id<TAB>feature_file<TAB>text
                 feature_file is a .npy path relative to the corpus file, or "-" when
                 features are rendered from the text (synthetic acoustics)
    transcripts  utterance_id<TAB>speaker_id<TAB>text     (references and hypotheses)
    biasing      a single word-list file shared by every utterance, or a directory of
                 <utterance_id>.txt word-list files (a missing file is an empty list)
"""

import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np

from .biasing_lists import load_word_list
from .errors import DataError, UnreadableFile
from .utils import atomic_write, read_lines

logger = logging.getLogger(__name__)

NO_FEATURES = "-"


@dataclass
class Utterance:
    utterance_id: str
    speaker: str
    text: str
    feature_path: Optional[str] = None
    features: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Transcript:
    utterance_id: str
    speaker: str
    text: str


def load_corpus(path) -> List[Utterance]:
    directory = os.path.dirname(os.path.abspath(path))
    utterances = []
    seen = set()
    for number, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataError(f"{path}:{number}: expected 4 tab-separated fields, got {len(fields)}")
        utterance_id, speaker, feature_file, text = (field.strip() for field in fields)
        if utterance_id in seen:
            raise DataError(f"{path}:{number}: duplicate utterance id '{utterance_id}'")
        seen.add(utterance_id)
        feature_path = None if feature_file == NO_FEATURES else os.path.join(directory, feature_file)
        utterances.append(Utterance(utterance_id, speaker, text, feature_path))
    logger.info(f"Loaded {len(utterances)} utterances from {path}")
    return utterances


def save_features(features, path):
    with atomic_write(path, mode="wb") as file:
        np.save(file, np.asarray(features, dtype=np.float64))


def load_features(path) -> np.ndarray:
    try:
        return np.load(path)
    except (OSError, ValueError) as e:
        raise UnreadableFile(path, e)


def save_corpus(utterances: Iterable[Utterance], path, feature_dir=None):
    """Write the corpus; with `feature_dir` (relative to the corpus file) features are written as .npy files"""
    directory = os.path.dirname(os.path.abspath(path))
    with atomic_write(path) as file:
        for utterance in utterances:
            feature_file = NO_FEATURES
            if feature_dir is not None and utterance.features is not None:
                feature_file = os.path.join(feature_dir, f"{utterance.utterance_id}.npy")
                save_features(utterance.features, os.path.join(directory, feature_file))
            file.write(f"{utterance.utterance_id}\t{utterance.speaker}\t{feature_file}\t{utterance.text}\n")


def utterance_features(utterance: Utterance, render=None) -> np.ndarray:
    """Features held in memory, else from the feature file, else rendered from the text by `render(utterance)`"""
    if utterance.features is not None:
        return utterance.features
    if utterance.feature_path is not None:
        return load_features(utterance.feature_path)
    if render is None:
        raise DataError(f"utterance '{utterance.utterance_id}' has no features and none can be rendered")
    return render(utterance)


def load_transcripts(path) -> List[Transcript]:
    transcripts = []
    for number, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t", 2)
        if len(fields) < 2:
            raise DataError(f"{path}:{number}: expected 'utterance_id<TAB>speaker_id<TAB>text'")
        text = fields[2].strip() if len(fields) == 3 else ""
        transcripts.append(Transcript(fields[0].strip(), fields[1].strip(), text))
    return transcripts


def save_transcripts(transcripts: Iterable[Transcript], path):
    with atomic_write(path) as file:
        for transcript in transcripts:
            file.write(f"{transcript.utterance_id}\t{transcript.speaker}\t{transcript.text}\n")


def references_of(utterances: Iterable[Utterance]) -> List[Transcript]:
    return [Transcript(u.utterance_id, u.speaker, u.text) for u in utterances]


def load_biasing_lists(path, utterance_ids: Iterable[str]) -> Dict[str, List[str]]:
    """Biasing words per utterance; `path` may be None (no biasing), a shared list file or a directory"""
    utterance_ids = list(utterance_ids)
    if path is None:
        return {utterance_id: [] for utterance_id in utterance_ids}
    if os.path.isdir(path):
        lists = {}
        for utterance_id in utterance_ids:
            list_path = os.path.join(path, f"{utterance_id}.txt")
            lists[utterance_id] = load_word_list(list_path) if os.path.exists(list_path) else []
        return lists
    shared = load_word_list(path)
    return {utterance_id: shared for utterance_id in utterance_ids}


def save_biasing_lists(lists: Dict[str, Iterable[str]], directory):
    for utterance_id, words in lists.items():
        with atomic_write(os.path.join(directory, f"{utterance_id}.txt")) as file:
            for word in words:
                file.write(word + "\n")
