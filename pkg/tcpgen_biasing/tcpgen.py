"""
One TCPGen step: masked pointer attention over the valid wordpieces, the pointer
output vector, the scaled generation probability and the final interpolation

    P(y) = P_mdl(y) (1 - P_gen_hat) + P_ptr(y) P_gen        for y != OOL

Every function takes numpy arrays or tape tensors and returns tensors; a leading
batch axis (one row per encoder frame) is supported throughout.

Transducer mode: the null symbol never receives pointer mass, and the generation
probability is scaled by (1 - P_mdl(null)) before it enters either term, so that

    sum over y != OOL of P_ptr(y) P_gen = P_gen (1 - P_ptr(OOL)) = P_gen_hat

holds in both modes and the final distribution stays normalized.
"""

import logging
from dataclasses import dataclass
from typing import FrozenSet, Sequence

import numpy as np

from .autodiff import as_tensor, gather, matmul, mul, reduce_sum, reshape, scatter, softmax, transpose
from .config import ModelMode

logger = logging.getLogger(__name__)


@dataclass
class TcpgenStep:
    """Snapshot of one step, detached from the tape"""

    valid_ids: FrozenSet[int]
    p_ptr: np.ndarray
    h_ptr: np.ndarray
    p_gen_raw: float
    p_gen: float
    p_gen_hat: float
    p_final: np.ndarray


def _column(x):
    """Give a per-row scalar a trailing axis so it broadcasts over the vocabulary"""
    return x if x.ndim == 0 else reshape(x, x.shape + (1,))


def pointer_attention(query, keys, values, valid_ids: Sequence[int], vocab_size):
    """
    Softmax(Mask(q K^T / sqrt(d))) over the vocabulary and h_ptr = sum_j P_ptr(j) v_j.
    Rows of `keys`/`values` line up with `valid_ids`, which always holds OOL.
    """
    assert len(valid_ids) > 0, "the valid set always contains OOL"
    query, keys, values = as_tensor(query), as_tensor(keys), as_tensor(values)
    scale = 1.0 / np.sqrt(query.shape[-1])
    scores = mul(matmul(query, transpose(keys)), scale)
    logits = scatter(scores, valid_ids, vocab_size, fill=-np.inf)
    mask = np.zeros(vocab_size, dtype=bool)
    mask[list(valid_ids)] = True
    p_ptr = softmax(logits, mask=mask)
    h_ptr = matmul(gather(p_ptr, valid_ids), values)
    return p_ptr, h_ptr


def generation_weight(p_gen_raw, mode, p_mdl_null=None):
    """Generation probability as used in the pointer term: scaled by (1 - P_mdl(null)) for transducers"""
    p_gen_raw = as_tensor(p_gen_raw)
    if mode == ModelMode.RNNT:
        return p_gen_raw * (1.0 - as_tensor(p_mdl_null))
    return p_gen_raw


def scale_generation_probability(p_gen_raw, p_ptr_ool, mode, p_mdl_null=None):
    """P_gen_hat = P_gen (1 - P_ptr(OOL)), times (1 - P_mdl(null)) in transducer mode"""
    return generation_weight(p_gen_raw, mode, p_mdl_null) * (1.0 - as_tensor(p_ptr_ool))


def interpolate(p_mdl, p_ptr, p_gen, p_gen_hat, ool_id):
    """P_mdl (1 - P_gen_hat) + P_ptr P_gen; the pointer's OOL mass is dropped, it is accounted for by P_gen_hat"""
    p_mdl, p_ptr = as_tensor(p_mdl), as_tensor(p_ptr)
    keep = np.ones(p_ptr.shape[-1])
    keep[ool_id] = 0.0
    return p_mdl * (1.0 - _column(as_tensor(p_gen_hat))) + (p_ptr * keep) * _column(as_tensor(p_gen))


def rnnt_null_adjustment(p_ptr, p_mdl, null_id):
    """
    Force P_ptr(null) = 0 and return (P_ptr, P_mdl(null)) for the generation-probability scaling.
    Mass on null is spread over the remaining entries; a pointer with all of its mass on null is
    a masking bug upstream and fails the assertion.
    """
    p_ptr, p_mdl = as_tensor(p_ptr), as_tensor(p_mdl)
    if np.any(p_ptr.data[..., null_id] != 0.0):
        keep = np.ones(p_ptr.shape[-1])
        keep[null_id] = 0.0
        kept = p_ptr * keep
        remaining = reduce_sum(kept, axis=-1, keepdims=True)
        assert np.all(remaining.data > 0.0), "pointer distribution has all of its mass on null"
        p_ptr = kept / remaining
    return p_ptr, gather(p_mdl, null_id)


def output_distribution(p_mdl, p_ptr, p_gen_raw, mode, ool_id, null_id):
    """Final distribution for either model type. Returns (p_final, p_gen, p_gen_hat) as tensors."""
    p_mdl_null = None
    if mode == ModelMode.RNNT:
        p_ptr, p_mdl_null = rnnt_null_adjustment(p_ptr, p_mdl, null_id)
    p_ptr = as_tensor(p_ptr)
    p_ptr_ool = gather(p_ptr, ool_id)
    p_gen = generation_weight(p_gen_raw, mode, p_mdl_null)
    p_gen_hat = scale_generation_probability(p_gen_raw, p_ptr_ool, mode, p_mdl_null)
    return interpolate(p_mdl, p_ptr, p_gen, p_gen_hat, ool_id), p_gen, p_gen_hat


def tcpgen_step(p_mdl, query, keys, values, valid_ids, p_gen_raw, mode, ool_id, null_id) -> TcpgenStep:
    """Run one unbatched step end to end and return plain arrays"""
    p_mdl = as_tensor(p_mdl)
    p_ptr, h_ptr = pointer_attention(query, keys, values, valid_ids, p_mdl.shape[-1])
    p_final, p_gen, p_gen_hat = output_distribution(p_mdl, p_ptr, p_gen_raw, mode, ool_id, null_id)
    return TcpgenStep(
        valid_ids=frozenset(int(i) for i in valid_ids),
        p_ptr=p_ptr.data,
        h_ptr=h_ptr.data,
        p_gen_raw=float(as_tensor(p_gen_raw).data),
        p_gen=float(p_gen.data),
        p_gen_hat=float(p_gen_hat.data),
        p_final=p_final.data,
    )
