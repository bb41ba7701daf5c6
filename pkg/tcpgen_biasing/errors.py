class TcpgenError(Exception):
    """Base class for every error the command line maps to an exit code."""

    exit_code = 2


class UsageError(TcpgenError):
    exit_code = 1


class ConfigError(UsageError):
    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


class DataError(TcpgenError):
    exit_code = 2


class VocabError(DataError):
    pass


class UncoverableWord(DataError):
    def __init__(self, word, character):
        super().__init__(f"cannot tokenize '{word}': no wordpiece covers '{character}'")
        self.word = word
        self.character = character


class MalformedSequence(DataError):
    """A wordpiece sequence stopped in the middle of a word."""

    def __init__(self, words, partial):
        super().__init__(f"sequence ends mid-word after {len(words)} word(s), partial word '{partial}'")
        self.words = words
        self.partial = partial


class UnreadableFile(DataError):
    def __init__(self, path, reason):
        super().__init__(f"unable to read {path}: {reason}")
        self.path = path


class PoolTooSmall(DataError):
    def __init__(self, available, requested):
        super().__init__(f"distractor pool has {available} candidate(s), {requested} requested")
        self.available = available
        self.requested = requested


class DimensionMismatch(DataError):
    pass


class CheckpointError(DataError):
    pass


class NumericalError(TcpgenError):
    exit_code = 3


class NonFiniteLoss(NumericalError):
    def __init__(self, batch_id, value):
        super().__init__(f"non-finite loss {value} on batch {batch_id}")
        self.batch_id = batch_id
        self.value = value


class MissingForwardCache(NumericalError):
    pass
