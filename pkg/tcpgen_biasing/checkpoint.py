"""
Self-describing checkpoint container.

    bytes 0-7     magic "TCPGCKPT"
    bytes 8-11    format version, uint32 little-endian
    bytes 12-19   header length H, uint64 little-endian
    next H bytes  UTF-8 JSON header:
                    {"metadata": {...},
                     "arrays": [{"name", "shape", "dtype": "<f8", "offset", "nbytes"}, ...]}
    remainder     array data, little-endian float64, C order; offsets count from the
                  first byte after the header
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import CheckpointError, UnreadableFile
from .models import ModelDims, ToyModelParams
from .utils import atomic_write
from .vocab import Vocab

logger = logging.getLogger(__name__)

MAGIC = b"TCPGCKPT"
FORMAT_VERSION = 1
DTYPE = "<f8"
_PREAMBLE = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    params: ToyModelParams
    vocab: Vocab
    biasing: str
    metadata: Dict[str, object] = field(default_factory=dict)


def write_arrays(path, arrays: Dict[str, np.ndarray], metadata: Dict[str, object]):
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        blob = np.ascontiguousarray(arrays[name], dtype=DTYPE).tobytes()
        shape = list(np.shape(arrays[name]))
        entries.append({"name": name, "shape": shape, "dtype": DTYPE, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"metadata": metadata, "arrays": entries}, sort_keys=True).encode("utf-8")
    with atomic_write(path, mode="wb") as file:
        file.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        file.write(header)
        for blob in blobs:
            file.write(blob)


def read_arrays(path):
    try:
        with open(path, "rb") as file:
            content = file.read()
    except OSError as e:
        raise UnreadableFile(path, e)

    if len(content) < _PREAMBLE.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, header_length = _PREAMBLE.unpack_from(content)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    data_start = _PREAMBLE.size + header_length
    try:
        header = json.loads(content[_PREAMBLE.size : data_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})")

    arrays = {}
    for entry in header["arrays"]:
        if entry["dtype"] != DTYPE:
            raise CheckpointError(f"{path}: array {entry['name']} has unsupported type {entry['dtype']}")
        start = data_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(content):
            raise CheckpointError(f"{path}: array {entry['name']} runs past the end of the file")
        values = np.frombuffer(content[start:end], dtype=DTYPE).astype(np.float64)
        arrays[entry["name"]] = values.reshape(tuple(entry["shape"]))
    return arrays, header["metadata"]


def save_checkpoint(path, params: ToyModelParams, vocab: Vocab, biasing, extra=None):
    metadata = {
        "mode": params.mode,
        "biasing": biasing,
        "dims": params.dims.to_dict(),
        "vocab": {
            "pieces": list(vocab.pieces),
            "null_id": vocab.null_id,
            "ool_id": vocab.ool_id,
            "bos_id": vocab.bos_id,
            "eos_id": vocab.eos_id,
            "word_end_suffix": vocab.word_end_suffix,
            "case_sensitive": vocab.case_sensitive,
        },
        "extra": extra or {},
    }
    write_arrays(path, params.arrays, metadata)
    logger.info(f"Wrote checkpoint {path}")


def load_checkpoint(path) -> Checkpoint:
    arrays, metadata = read_arrays(path)
    try:
        stored = metadata["vocab"]
        vocab = Vocab(
            tuple(stored["pieces"]),
            null_id=stored["null_id"],
            ool_id=stored["ool_id"],
            bos_id=stored["bos_id"],
            eos_id=stored["eos_id"],
            word_end_suffix=stored["word_end_suffix"],
            case_sensitive=stored["case_sensitive"],
        )
        params = ToyModelParams(metadata["mode"], ModelDims(**metadata["dims"]), len(vocab), arrays).check()
        biasing = metadata["biasing"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: incomplete metadata ({e})")
    logger.info(f"Loaded {params.mode} checkpoint {path} ({len(arrays)} arrays, biasing {biasing})")
    return Checkpoint(params, vocab, biasing, metadata.get("extra", {}))
