import os
import shutil
import string
import tempfile

import numpy as np

from tcpgen_biasing.config import BiasingMode, ModelMode
from tcpgen_biasing.models import ModelDims, ToyModel, ToyModelParams
from tcpgen_biasing.prefix_tree import build_tree
from tcpgen_biasing.vocab import Vocab

# Biasing list of the running example: "tur" is shared by two words and branches into "in_" and "n"
RUNNING_EXAMPLE_WORDS = ["turner", "turin", "copied"]

TINY_DIMS = ModelDims(d_feat=3, d_enc=4, d_dec=4, d_emb=3, d_tree=3, d_joint=4)


class TextFile:
    def __init__(self, filename, content):
        self.filename = filename
        self.content = content

    def __enter__(self):
        # Create a temporary directory
        self.directory = tempfile.mkdtemp()

        # Create the file
        self.file_path = os.path.join(self.directory, self.filename)
        with open(self.file_path, "w", encoding="utf-8") as f:
            f.write(self.content)

        return self.file_path

    def __exit__(self, exc_type, exc_val, exc_tb):
        # Delete the file and temporary directory
        shutil.rmtree(self.directory)


class TemporaryDirectory:
    def __enter__(self):
        self.directory = tempfile.mkdtemp()
        return self.directory

    def __exit__(self, exc_type, exc_val, exc_tb):
        shutil.rmtree(self.directory)


def write_file(directory, name, content):
    path = os.path.join(directory, name)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(content)
    return path


def running_example_vocab():
    """Every letter with and without the word-end marker, plus the pieces "tur" and "in_" """
    letters = list(string.ascii_lowercase)
    return Vocab.build(["tur", "in_"] + letters + [letter + "_" for letter in letters])


def running_example_tree(vocab=None):
    vocab = vocab or running_example_vocab()
    return build_tree(RUNNING_EXAMPLE_WORDS, vocab)


def tiny_vocab():
    letters = "abcde"
    return Vocab.build(list(letters) + [letter + "_" for letter in letters] + ["ab"])


def tiny_model(mode=ModelMode.AED, biasing=BiasingMode.TCPGEN_GNN, seed=0, vocab=None, **kwargs):
    vocab = vocab or tiny_vocab()
    params = ToyModelParams.initialize(mode, len(vocab), TINY_DIMS, seed=seed)
    return ToyModel(params, vocab, biasing=biasing, **kwargs)


def random_features(frames, d_feat=TINY_DIMS.d_feat, seed=0):
    return np.random.default_rng(seed).normal(size=(frames, d_feat))
