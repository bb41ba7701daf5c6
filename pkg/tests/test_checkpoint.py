import os

import numpy as np
import pytest
from helpers import TINY_DIMS, TemporaryDirectory, tiny_vocab

from tcpgen_biasing.checkpoint import MAGIC, load_checkpoint, read_arrays, save_checkpoint, write_arrays
from tcpgen_biasing.config import BiasingMode, ModelMode
from tcpgen_biasing.errors import CheckpointError, DimensionMismatch, UnreadableFile
from tcpgen_biasing.models import ToyModelParams


@pytest.mark.parametrize("mode", ModelMode.ALL)
def test_round_trip_is_bit_exact(mode):
    """Test that a saved checkpoint loads back bit for bit"""
    vocab = tiny_vocab()
    params = ToyModelParams.initialize(mode, len(vocab), TINY_DIMS, seed=7)
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "model.ckpt")
        save_checkpoint(path, params, vocab, BiasingMode.TCPGEN, extra={"epoch": 3})
        checkpoint = load_checkpoint(path)
    assert checkpoint.params.mode == mode
    assert checkpoint.params.dims == TINY_DIMS
    assert checkpoint.biasing == BiasingMode.TCPGEN
    assert checkpoint.metadata == {"epoch": 3}
    assert checkpoint.vocab.pieces == vocab.pieces
    assert checkpoint.vocab.ool_id == vocab.ool_id
    assert set(checkpoint.params.arrays) == set(params.arrays)
    for name, array in params.arrays.items():
        assert checkpoint.params.arrays[name].tobytes() == array.tobytes()
        assert checkpoint.params.arrays[name].shape == array.shape


def test_file_starts_with_the_magic():
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "arrays.bin")
        write_arrays(path, {"x": np.arange(3.0)}, {"note": "test"})
        with open(path, "rb") as f:
            assert f.read(8) == MAGIC
        arrays, metadata = read_arrays(path)
    np.testing.assert_array_equal(arrays["x"], [0.0, 1.0, 2.0])
    assert metadata == {"note": "test"}


def test_scalar_arrays_keep_their_shape():
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "arrays.bin")
        write_arrays(path, {"b": np.array(1.5)}, {})
        arrays, _ = read_arrays(path)
    assert arrays["b"].shape == ()
    assert float(arrays["b"]) == 1.5


def test_bad_magic_is_rejected():
    """Test loading a file that is not a checkpoint"""
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "bad.ckpt")
        with open(path, "wb") as f:
            f.write(b"NOTACKPT" + bytes(16))
        with pytest.raises(CheckpointError):
            read_arrays(path)


def test_truncated_file_is_rejected():
    """Test loading a checkpoint cut short"""
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "arrays.bin")
        write_arrays(path, {"x": np.arange(4.0)}, {})
        with open(path, "rb") as f:
            content = f.read()
        with open(path, "wb") as f:
            f.write(content[:-8])
        with pytest.raises(CheckpointError):
            read_arrays(path)
        with open(path, "wb") as f:
            f.write(content[:5])
        with pytest.raises(CheckpointError):
            read_arrays(path)


def test_missing_file():
    with pytest.raises(UnreadableFile):
        read_arrays("/nonexistent/model.ckpt")


def test_shape_mismatch_on_load():
    """Test loading parameters whose shapes disagree with the stored dimensions"""
    vocab = tiny_vocab()
    params = ToyModelParams.initialize(ModelMode.AED, len(vocab), TINY_DIMS)
    params.arrays["enc.W"] = np.zeros((2, 2))
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "model.ckpt")
        save_checkpoint(path, params, vocab, BiasingMode.OFF)
        with pytest.raises(DimensionMismatch):
            load_checkpoint(path)


def test_metadata_without_a_model_is_rejected():
    """Test loading an array file that holds no model"""
    with TemporaryDirectory() as directory:
        path = os.path.join(directory, "arrays.bin")
        write_arrays(path, {"x": np.zeros(2)}, {"mode": "aed"})
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
