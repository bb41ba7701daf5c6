import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tcpgen_biasing import autodiff as ad
from tcpgen_biasing.config import GRADIENT_CHECK_TOLERANCE
from tcpgen_biasing.errors import DimensionMismatch
from tcpgen_biasing.transducer import (
    compute_alphas,
    compute_betas,
    exhaustive_log_likelihood,
    iter_alignments,
    log_likelihood_gradients,
    transducer_loss,
)


def random_lattice(frames, labels, seed=0):
    """Log-probabilities from a real softmax over a 5-symbol vocabulary whose symbol 0 is the null"""
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(frames, labels + 1, 5))
    log_probs = logits - np.logaddexp.reduce(logits, axis=-1, keepdims=True)
    targets = rng.integers(1, 5, size=labels)
    log_blank = log_probs[:, :, 0]
    log_emit = np.zeros((frames, labels))
    for u in range(labels):
        log_emit[:, u] = log_probs[:, u, targets[u]]
    return log_blank, log_emit


def test_single_frame_without_labels():
    log_blank = np.log([[0.25]])
    log_emit = np.zeros((1, 0))
    assert transducer_loss(log_blank, log_emit).item() == pytest.approx(-np.log(0.25))


def test_alignment_count():
    for frames, labels in [(1, 0), (2, 1), (3, 2), (4, 3)]:
        alignments = list(iter_alignments(frames, labels))
        assert len(alignments) == len(set(alignments))
        assert all(moves.count("e") == labels and moves.endswith("b") for moves in alignments)
        assert len(alignments) == math.comb(frames - 1 + labels, labels)


@pytest.mark.parametrize("frames", [1, 2, 3, 4])
@pytest.mark.parametrize("labels", [0, 1, 2, 3])
def test_forward_matches_enumeration(frames, labels):
    log_blank, log_emit = random_lattice(frames, labels, seed=frames * 10 + labels)
    _, log_likelihood = compute_alphas(log_blank, log_emit)
    assert log_likelihood == pytest.approx(exhaustive_log_likelihood(log_blank, log_emit), rel=1e-9)


@pytest.mark.parametrize("frames, labels", [(1, 2), (3, 1), (4, 3)])
def test_backward_recursion_agrees_with_forward(frames, labels):
    log_blank, log_emit = random_lattice(frames, labels, seed=7)
    _, forward = compute_alphas(log_blank, log_emit)
    _, backward = compute_betas(log_blank, log_emit)
    assert forward == pytest.approx(backward, rel=1e-12)


def test_occupancy_sums_to_one_per_frame():
    """Test that the gradient of the log-likelihood with respect to the blank lattice sums to 1 per frame."""
    log_blank, log_emit = random_lattice(4, 3, seed=2)
    _, grad_blank, grad_emit = log_likelihood_gradients(log_blank, log_emit)
    assert_allclose(grad_blank.sum(axis=1), np.ones(4))
    assert_allclose(grad_emit.sum(axis=0), np.ones(3))


def test_loss_gradients_match_finite_differences():
    log_blank, log_emit = random_lattice(3, 2, seed=5)
    errors = ad.gradient_check(
        lambda t: transducer_loss(t["log_blank"], t["log_emit"]),
        {"log_blank": log_blank, "log_emit": log_emit},
    )
    for name, error in errors.items():
        assert error < GRADIENT_CHECK_TOLERANCE, f"{name}: {error}"


def test_loss_is_positive_for_normalized_lattices():
    log_blank, log_emit = random_lattice(4, 2, seed=11)
    assert transducer_loss(log_blank, log_emit).item() > 0.0


def test_mismatched_lattice_is_rejected():
    with pytest.raises(DimensionMismatch):
        compute_alphas(np.zeros((3, 3)), np.zeros((3, 3)))
    with pytest.raises(DimensionMismatch):
        compute_alphas(np.zeros((0, 1)), np.zeros((0, 0)))
