import argparse

import pytest
from helpers import TemporaryDirectory, TextFile

from tcpgen_biasing import validation
from tcpgen_biasing.config import (
    DEFAULT_BEAM_WIDTH,
    BiasingMode,
    ExperimentConfig,
    ModelMode,
    format_config,
    load_config,
    parse_config_text,
)
from tcpgen_biasing.errors import ConfigError, UnreadableFile


def test_defaults():
    """Test the default experiment configuration"""
    config = ExperimentConfig()
    assert config.mode == ModelMode.AED
    assert config.biasing == BiasingMode.TCPGEN_GNN
    assert config.beam_width == DEFAULT_BEAM_WIDTH
    assert config.d_emb == config.d_tree


def test_parse_key_value_lines():
    """Test parsing a configuration file with comments"""
    config = parse_config_text("# toy run\nmode = rnnt\nepochs = 3  # short\nlearning_rate = 0.1\ntrace = yes\n")
    assert config.mode == ModelMode.RNNT
    assert config.epochs == 3
    assert config.learning_rate == 0.1
    assert config.trace is True


def test_hash_inside_a_value_is_not_a_comment():
    """Test that only a "#" at the start of a line or after whitespace opens a comment"""
    config = parse_config_text("checkpoint_dir = runs/#3  # third run\nword_end_marker = _#\n#epochs = 1\n")
    assert config.checkpoint_dir == "runs/#3"
    assert config.word_end_marker == "_#"
    assert config.epochs == ExperimentConfig().epochs


def test_unknown_key_and_bad_values():
    """Test that configuration errors name the offending key"""
    with pytest.raises(ConfigError) as info:
        parse_config_text("beam = 4\n")
    assert info.value.key == "beam"
    with pytest.raises(ConfigError):
        parse_config_text("epochs = many\n")
    with pytest.raises(ConfigError):
        parse_config_text("trace = maybe\n")
    with pytest.raises(ConfigError):
        parse_config_text("epochs\n")


def test_override_skips_missing_values():
    config = ExperimentConfig(epochs=3).override(epochs=None, beam_width="2", mode=ModelMode.RNNT)
    assert config.epochs == 3
    assert config.beam_width == 2
    assert config.mode == ModelMode.RNNT


def test_validate():
    """Test configuration validation"""
    with pytest.raises(ConfigError):
        ExperimentConfig(mode="ctc").validate(())
    with pytest.raises(ConfigError):
        ExperimentConfig(biasing="gnn").validate(())
    with pytest.raises(ConfigError):
        ExperimentConfig(d_emb=8, d_tree=16).validate(())
    with pytest.raises(ConfigError):
        ExperimentConfig(beam_width=0).validate(())
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(word_end_marker="").validate(())
    assert info.value.key == "word_end_marker"
    with pytest.raises(ConfigError):
        ExperimentConfig(word_end_marker="< /w>").validate(())
    with pytest.raises(ConfigError) as info:
        ExperimentConfig().validate(("vocab",))
    assert info.value.key == "vocab"
    with pytest.raises(ConfigError):
        ExperimentConfig(vocab="/nonexistent/vocab.txt").validate(("vocab",))
    assert ExperimentConfig().validate(()).epochs > 0


def test_config_file_round_trip():
    """Test writing and reading a configuration file"""
    config = ExperimentConfig(vocab="vocab.txt", mode=ModelMode.RNNT, epochs=2, trace=True)
    with TextFile("experiment.conf", format_config(config)) as path:
        assert load_config(path) == config


def test_missing_config_file():
    with pytest.raises(UnreadableFile):
        load_config("/nonexistent/experiment.conf")


def test_argparse_config_file():
    with TextFile("experiment.conf", "epochs = 2\n") as path:
        assert validation.argparse_config_file(path).epochs == 2
    with TextFile("experiment.conf", "epochs = two\n") as path:
        with pytest.raises(argparse.ArgumentTypeError):
            validation.argparse_config_file(path)


def test_argparse_paths():
    """Test the path validators used by the command line"""
    with TemporaryDirectory() as directory:
        assert validation.argparse_directory_exists(directory) == directory
        assert validation.argparse_path_exists(directory) == directory
        with pytest.raises(argparse.ArgumentTypeError):
            validation.argparse_file_exists(directory)
    with pytest.raises(argparse.ArgumentTypeError):
        validation.argparse_path_exists("/nonexistent/path")


def test_argparse_logging_level():
    """Test the logging level validator"""
    assert validation.argparse_logging_level("debug") == "DEBUG"
    assert validation.argparse_logging_level("warning") == "WARNING"
    with pytest.raises(argparse.ArgumentTypeError):
        validation.argparse_logging_level("loud")


def test_argparse_integers():
    assert validation.argparse_positive_int("3") == 3
    assert validation.argparse_non_negative_int("0") == 0
    with pytest.raises(argparse.ArgumentTypeError):
        validation.argparse_positive_int("0")
    with pytest.raises(argparse.ArgumentTypeError):
        validation.argparse_non_negative_int("-1")
    with pytest.raises(argparse.ArgumentTypeError):
        validation.argparse_positive_int("x")


def test_argparse_word_end_marker():
    """Test the word-end marker validator"""
    assert validation.argparse_word_end_marker("@") == "@"
    assert validation.argparse_word_end_marker("</w>") == "</w>"
    for marker in ("", " ", "a b", "#"):
        with pytest.raises(argparse.ArgumentTypeError):
            validation.argparse_word_end_marker(marker)
