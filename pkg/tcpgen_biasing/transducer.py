"""
Transducer loss over the (t, u) lattice in log space.

    log_blank[t, u]  log P(null | t, u)           shape (T, U + 1)
    log_emit[t, u]   log P(y_{u+1} | t, u)        shape (T, U)

alpha(t, u) = logaddexp(alpha(t-1, u) + log_blank(t-1, u), alpha(t, u-1) + log_emit(t, u-1)) and the
log-likelihood is alpha(T-1, U) + log_blank(T-1, U). Gradients come from the matching beta recursion.
"""

import itertools
import logging

import numpy as np

from .autodiff import as_tensor, record
from .errors import DimensionMismatch

logger = logging.getLogger(__name__)


def _check_lattice(log_blank, log_emit):
    log_blank = np.asarray(log_blank, dtype=np.float64)
    log_emit = np.asarray(log_emit, dtype=np.float64)
    if log_blank.ndim != 2 or log_emit.ndim != 2:
        raise DimensionMismatch(f"lattice arrays must be 2-d, got {log_blank.shape} and {log_emit.shape}")
    frames, positions = log_blank.shape
    if frames < 1 or log_emit.shape != (frames, positions - 1):
        raise DimensionMismatch(f"log_emit {log_emit.shape} does not fit log_blank {log_blank.shape}")
    return log_blank, log_emit


def compute_alphas(log_blank, log_emit):
    log_blank, log_emit = _check_lattice(log_blank, log_emit)
    frames, positions = log_blank.shape
    alphas = np.full((frames, positions), -np.inf)
    alphas[0, 0] = 0.0
    for t in range(frames):
        for u in range(positions):
            if t == 0 and u == 0:
                continue
            from_blank = alphas[t - 1, u] + log_blank[t - 1, u] if t > 0 else -np.inf
            from_emit = alphas[t, u - 1] + log_emit[t, u - 1] if u > 0 else -np.inf
            alphas[t, u] = np.logaddexp(from_blank, from_emit)
    log_likelihood = alphas[frames - 1, positions - 1] + log_blank[frames - 1, positions - 1]
    return alphas, log_likelihood


def compute_betas(log_blank, log_emit):
    log_blank, log_emit = _check_lattice(log_blank, log_emit)
    frames, positions = log_blank.shape
    betas = np.full((frames, positions), -np.inf)
    betas[frames - 1, positions - 1] = log_blank[frames - 1, positions - 1]
    for t in reversed(range(frames)):
        for u in reversed(range(positions)):
            if t == frames - 1 and u == positions - 1:
                continue
            to_blank = betas[t + 1, u] + log_blank[t, u] if t < frames - 1 else -np.inf
            to_emit = betas[t, u + 1] + log_emit[t, u] if u < positions - 1 else -np.inf
            betas[t, u] = np.logaddexp(to_blank, to_emit)
    return betas, betas[0, 0]


def log_likelihood_gradients(log_blank, log_emit):
    """Returns (log_likelihood, d/d log_blank, d/d log_emit)"""
    log_blank, log_emit = _check_lattice(log_blank, log_emit)
    frames, positions = log_blank.shape
    alphas, log_likelihood = compute_alphas(log_blank, log_emit)
    betas, _ = compute_betas(log_blank, log_emit)

    grad_blank = np.zeros_like(log_blank)
    grad_blank[:-1] = np.exp(alphas[:-1] + log_blank[:-1] + betas[1:] - log_likelihood)
    grad_blank[frames - 1, positions - 1] = np.exp(
        alphas[frames - 1, positions - 1] + log_blank[frames - 1, positions - 1] - log_likelihood
    )
    grad_emit = np.exp(alphas[:, :-1] + log_emit + betas[:, 1:] - log_likelihood)
    return log_likelihood, grad_blank, grad_emit


def transducer_loss(log_blank, log_emit):
    """-log of the summed probability of every alignment, as a tape operation"""
    log_blank, log_emit = as_tensor(log_blank), as_tensor(log_emit)
    log_likelihood, grad_blank, grad_emit = log_likelihood_gradients(log_blank.data, log_emit.data)
    return record(-log_likelihood, (log_blank, log_emit), lambda g: (-g * grad_blank, -g * grad_emit))


def iter_alignments(frames, labels):
    """Every alignment as a string of 'b' (null, next frame) and 'e' (emit) moves; each ends on the final null"""
    for emit_positions in itertools.combinations(range(frames - 1 + labels), labels):
        moves = ["b"] * (frames - 1 + labels)
        for position in emit_positions:
            moves[position] = "e"
        yield "".join(moves) + "b"


def exhaustive_log_likelihood(log_blank, log_emit):
    """Reference log-likelihood by enumerating every alignment; exponential, for small lattices only"""
    log_blank, log_emit = _check_lattice(log_blank, log_emit)
    frames, positions = log_blank.shape
    totals = []
    for moves in iter_alignments(frames, positions - 1):
        t = u = 0
        total = 0.0
        for move in moves:
            if move == "b":
                total += log_blank[t, u]
                t += 1
            else:
                total += log_emit[t, u]
                u += 1
        totals.append(total)
    return float(np.logaddexp.reduce(totals))
