import logging
import os
import re
from dataclasses import dataclass, fields
from typing import Optional

from .errors import ConfigError
from .utils import read_text

logger = logging.getLogger(__name__)


class ModelMode:
    AED = "aed"
    RNNT = "rnnt"

    ALL = (AED, RNNT)


class BiasingMode:
    OFF = "off"
    TCPGEN = "tcpgen"
    TCPGEN_GNN = "tcpgen+gnn"

    ALL = (OFF, TCPGEN, TCPGEN_GNN)


# Toy dimensions, sized for minutes of training on a laptop
DEFAULT_D_FEAT = 8
DEFAULT_D_ENC = 32
DEFAULT_D_DEC = 32
DEFAULT_D_EMB = 16
DEFAULT_D_TREE = 16
DEFAULT_D_JOINT = 32
MAX_TOY_VOCAB_SIZE = 64

# Training and decoding
DEFAULT_LEARNING_RATE = 0.05
DEFAULT_EPOCHS = 8
DEFAULT_CLIP_NORM = 5.0
DEFAULT_BEAM_WIDTH = 4
DEFAULT_MAX_DECODE_LENGTH = 60
DEFAULT_SEED = 0

# Wordpieces: the suffix that marks a word-final piece
DEFAULT_WORD_END_MARKER = "_"

# Synthetic acoustics
DEFAULT_FRAMES_PER_PIECE = 2
DEFAULT_FEATURE_NOISE = 0.3

# Biasing lists
DEFAULT_COMMON_WORD_CUTOFF = 5000
DEFAULT_DISTRACTORS = 1000
DEFAULT_SLIDE_MAX_COUNT = 100

# Gradient checking
FINITE_DIFFERENCE_STEP = 1e-5
GRADIENT_CHECK_TOLERANCE = 1e-4

# Number of p_ptr entries written per step by --trace
TRACE_TOP_K = 5

# "#" opens a comment only at the start of a line or after whitespace
COMMENT_PATTERN = re.compile(r"(?:^|(?<=\s))#")

# Argument-influenced configuration
threads = 1


@dataclass
class ExperimentConfig:
    vocab: Optional[str] = None
    corpus: Optional[str] = None
    biasing_dir: Optional[str] = None
    checkpoint_dir: str = "checkpoints"
    mode: str = ModelMode.AED
    biasing: str = BiasingMode.TCPGEN_GNN
    seed: int = DEFAULT_SEED
    d_feat: int = DEFAULT_D_FEAT
    d_enc: int = DEFAULT_D_ENC
    d_dec: int = DEFAULT_D_DEC
    d_emb: int = DEFAULT_D_EMB
    d_tree: int = DEFAULT_D_TREE
    d_joint: int = DEFAULT_D_JOINT
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    clip_norm: float = DEFAULT_CLIP_NORM
    beam_width: int = DEFAULT_BEAM_WIDTH
    max_decode_length: int = DEFAULT_MAX_DECODE_LENGTH
    frames_per_piece: int = DEFAULT_FRAMES_PER_PIECE
    feature_noise: float = DEFAULT_FEATURE_NOISE
    word_end_marker: str = DEFAULT_WORD_END_MARKER
    trace: bool = False

    def override(self, **values):
        """Apply command line values; None means "not given" and keeps the current value"""
        for key, value in values.items():
            if value is not None:
                setattr(self, key, _coerce(key, _field_types()[key], value))
        return self

    def validate(self, required_paths=("vocab", "corpus")):
        if self.mode not in ModelMode.ALL:
            raise ConfigError("mode", f"expected one of {', '.join(ModelMode.ALL)}, got '{self.mode}'")
        if self.biasing not in BiasingMode.ALL:
            raise ConfigError("biasing", f"expected one of {', '.join(BiasingMode.ALL)}, got '{self.biasing}'")
        for key in ("d_feat", "d_enc", "d_dec", "d_emb", "d_tree", "d_joint", "beam_width", "frames_per_piece"):
            if getattr(self, key) < 1:
                raise ConfigError(key, "must be at least 1")
        if self.d_emb != self.d_tree:
            raise ConfigError("d_emb", f"must equal d_tree ({self.d_tree}), raw embeddings stand in for node encodings")
        if self.epochs < 0:
            raise ConfigError("epochs", "must not be negative")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate", "must not be negative")
        marker = self.word_end_marker
        if not marker or marker.startswith("#") or any(c.isspace() for c in marker):
            raise ConfigError("word_end_marker", f"must be non-empty without whitespace or a leading #: '{marker}'")
        for key in required_paths:
            path = getattr(self, key)
            if path is None:
                raise ConfigError(key, "is required")
            if not os.path.exists(path):
                raise ConfigError(key, f"path does not exist: {path}")
        if self.biasing_dir is not None and not os.path.isdir(self.biasing_dir):
            raise ConfigError("biasing_dir", f"not a directory: {self.biasing_dir}")
        return self


def _field_types():
    return {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, field_type, value):
    if isinstance(value, str):
        value = value.strip()
    try:
        if field_type in (bool, "bool"):
            if isinstance(value, bool):
                return value
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if field_type in (int, "int"):
            return int(value)
        if field_type in (float, "float"):
            return float(value)
    except ValueError:
        raise ConfigError(key, f"cannot parse value '{value}'")
    return value


def parse_config_text(text, source="<config>"):
    """Parse flat `key = value` lines into an ExperimentConfig"""
    config = ExperimentConfig()
    types = _field_types()
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = COMMENT_PATTERN.split(raw_line, maxsplit=1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"{source}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ConfigError(key, f"{source}:{number}: unknown key")
        setattr(config, key, _coerce(key, types[key], value))
    return config


def load_config(path):
    config = parse_config_text(read_text(path), source=path)
    logger.info(f"Loaded experiment configuration from {path}")
    return config


def format_config(config):
    lines = []
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if value is not None:
            lines.append(f"{f.name} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"
