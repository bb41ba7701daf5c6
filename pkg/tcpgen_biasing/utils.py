import contextlib
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor

from .errors import UnreadableFile


@contextlib.contextmanager
def atomic_write(path, mode="w", encoding="utf-8"):
    """Write to a temporary file next to `path` and rename it into place once the block succeeds"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, temporary_path = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        kwargs = {} if "b" in mode else {"encoding": encoding}
        with os.fdopen(handle, mode, **kwargs) as file:
            yield file
        os.replace(temporary_path, path)
    except BaseException:
        if os.path.exists(temporary_path):
            os.remove(temporary_path)
        raise


def read_text(path):
    """Read a whole UTF-8 file, raising UnreadableFile with the path on failure"""
    try:
        with open(path, "r", encoding="utf-8") as file:
            return file.read()
    except (OSError, UnicodeDecodeError) as e:
        raise UnreadableFile(path, e)


def read_lines(path):
    """Non-empty, right-stripped lines of a UTF-8 file"""
    return [line.rstrip("\r\n") for line in read_text(path).splitlines() if line.strip()]


def parallel_map(function, items, threads=1):
    """Map in order; fans out over a thread pool when more than one thread is requested"""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(function, items))
