import argparse
import logging
import os

from .config import load_config
from .errors import TcpgenError


def argparse_file_exists(file_path):
    """Validates whether a file exists."""
    if not os.path.isfile(file_path):
        raise argparse.ArgumentTypeError(f"File does not exist: {file_path}")

    return os.path.abspath(file_path)


def argparse_directory_exists(directory_path):
    """Validates whether a directory exists."""
    if not os.path.isdir(directory_path):
        raise argparse.ArgumentTypeError(f"Directory does not exist: {directory_path}")

    return os.path.abspath(directory_path)


def argparse_path_exists(path):
    """Validates whether a file or directory exists (biasing lists may be either)."""
    if not os.path.exists(path):
        raise argparse.ArgumentTypeError(f"Path does not exist: {path}")

    return os.path.abspath(path)


def argparse_config_file(file_path):
    """Validates that a file holds a parsable experiment configuration and returns it."""
    if not os.path.isfile(file_path):
        raise argparse.ArgumentTypeError("Provided configuration file does not exist")

    try:
        return load_config(file_path)
    except TcpgenError as e:
        raise argparse.ArgumentTypeError("Cannot parse provided configuration file:\n" + str(e))


def argparse_logging_level(level):
    """Validates that a string value is a valid logging level and returns the corresponding value."""
    if hasattr(logging, level.upper()):
        return level.upper()
    raise argparse.ArgumentTypeError("Invalid logging level: " + str(level))


def argparse_positive_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not an integer: {value}")
    if number < 1:
        raise argparse.ArgumentTypeError(f"Must be at least 1: {value}")
    return number


def argparse_non_negative_int(value):
    try:
        number = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Not an integer: {value}")
    if number < 0:
        raise argparse.ArgumentTypeError(f"Must not be negative: {value}")
    return number


def argparse_word_end_marker(value):
    """Validates a word-end marker: non-empty, no whitespace, and not a comment in a configuration file."""
    if not value or value.startswith("#") or any(c.isspace() for c in value):
        raise argparse.ArgumentTypeError(f"Invalid word-end marker: '{value}'")
    return value
