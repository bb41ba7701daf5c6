"""
Per-utterance gradient descent for the toy recognizers.

Each update runs one teacher-forced forward pass, back-propagates the loss through
the tape, clips the global gradient norm and takes a plain gradient step. Utterances
are visited in a fresh seeded permutation every epoch.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .checkpoint import save_checkpoint
from .config import BiasingMode, ExperimentConfig
from .data import Utterance, utterance_features
from .errors import NonFiniteLoss
from .models import ToyModel, ToyModelParams
from .prefix_tree import PrefixTree, build_tree
from .utils import atomic_write
from .vocab import Vocab, words_to_ids

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "mean_loss", "mean_p_gen", "gradient_norm")


@dataclass
class TrainingExample:
    utterance_id: str
    features: np.ndarray
    target_ids: List[int]
    tree: Optional[PrefixTree]


@dataclass
class EpochSummary:
    epoch: int
    mean_loss: float
    mean_p_gen: float
    gradient_norm: float


@dataclass
class TrainingResult:
    params: ToyModelParams
    epochs: List[EpochSummary] = field(default_factory=list)

    @property
    def final_loss(self):
        return self.epochs[-1].mean_loss if self.epochs else math.nan


def prepare_examples(
    utterances: Sequence[Utterance],
    vocab: Vocab,
    biasing_lists: Dict[str, Sequence[str]],
    biasing=BiasingMode.TCPGEN_GNN,
    render=None,
) -> List[TrainingExample]:
    """Tokenize the references and build each utterance's prefix tree once, up front"""
    examples = []
    for utterance in utterances:
        tree = None
        if biasing != BiasingMode.OFF:
            tree = build_tree(biasing_lists.get(utterance.utterance_id, ()), vocab)
        examples.append(
            TrainingExample(
                utterance_id=utterance.utterance_id,
                features=utterance_features(utterance, render),
                target_ids=words_to_ids(utterance.text, vocab),
                tree=tree,
            )
        )
    return examples


def global_norm(gradients: Dict[str, np.ndarray]) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in gradients.values())))


def clip_gradients(gradients: Dict[str, np.ndarray], max_norm):
    """Scale every gradient by the same factor so the global norm is at most max_norm"""
    norm = global_norm(gradients)
    if max_norm is None or max_norm <= 0 or norm <= max_norm:
        return gradients, norm
    scale = max_norm / norm
    return {name: g * scale for name, g in gradients.items()}, norm


def sgd_step(params: ToyModelParams, gradients: Dict[str, np.ndarray], learning_rate) -> ToyModelParams:
    arrays = dict(params.arrays)
    for name, gradient in gradients.items():
        arrays[name] = arrays[name] - learning_rate * gradient
    return ToyModelParams(params.mode, params.dims, params.vocab_size, arrays)


def train_step(params: ToyModelParams, vocab: Vocab, example: TrainingExample, biasing, learning_rate, clip_norm):
    """One update on one utterance. Returns (new params, loss, p_gen values, gradient norm before clipping)."""
    model = ToyModel(params, vocab, biasing=biasing, trainable=True)
    result = model.forward(example.features, example.target_ids, example.tree)
    loss = result.loss.item()
    if not math.isfinite(loss):
        return params, loss, result.p_gens, math.nan
    result.loss.backward()
    gradients, norm = clip_gradients(model.gradients(), clip_norm)
    return sgd_step(params, gradients, learning_rate), loss, result.p_gens, norm


def write_metrics(epochs: Sequence[EpochSummary], path):
    with atomic_write(path) as file:
        file.write("\t".join(METRICS_COLUMNS) + "\n")
        for summary in epochs:
            file.write(
                f"{summary.epoch}\t{summary.mean_loss:.6f}\t{summary.mean_p_gen:.6f}\t{summary.gradient_norm:.6f}\n"
            )


def train(
    examples: Sequence[TrainingExample],
    params: ToyModelParams,
    vocab: Vocab,
    experiment: ExperimentConfig,
    checkpoint_path=None,
    metrics_path=None,
) -> TrainingResult:
    """
    Train for experiment.epochs epochs. A non-finite loss aborts with NonFiniteLoss naming
    "<epoch>:<utterance id>". The checkpoint (if a path is given) is rewritten after every epoch.
    """
    rng = np.random.default_rng(experiment.seed)
    result = TrainingResult(params=params)
    for epoch in range(1, experiment.epochs + 1):
        losses, p_gens, norms = [], [], []
        for index in rng.permutation(len(examples)):
            example = examples[int(index)]
            params, loss, step_p_gens, norm = train_step(
                params, vocab, example, experiment.biasing, experiment.learning_rate, experiment.clip_norm
            )
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"{epoch}:{example.utterance_id}", loss)
            losses.append(loss)
            p_gens.extend(step_p_gens)
            norms.append(norm)
            logger.debug(f"Epoch {epoch} {example.utterance_id}: loss {loss:.4f}, gradient norm {norm:.4f}")

        summary = EpochSummary(
            epoch=epoch,
            mean_loss=float(np.mean(losses)) if losses else math.nan,
            mean_p_gen=float(np.mean(p_gens)) if p_gens else 0.0,
            gradient_norm=float(np.mean(norms)) if norms else 0.0,
        )
        result.epochs.append(summary)
        result.params = params
        logger.info(
            f"Epoch {epoch}/{experiment.epochs}: mean loss {summary.mean_loss:.4f}, "
            f"mean p_gen {summary.mean_p_gen:.4f}, gradient norm {summary.gradient_norm:.4f}"
        )
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, vocab, experiment.biasing, extra={"epoch": epoch})
        if metrics_path is not None:
            write_metrics(result.epochs, metrics_path)
    return result


def checkpoint_paths(experiment: ExperimentConfig):
    """Checkpoint and metrics file names inside experiment.checkpoint_dir"""
    name = f"{experiment.mode}-{experiment.biasing.replace('+', '-')}-seed{experiment.seed}"
    directory = experiment.checkpoint_dir or "."
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, f"{name}.ckpt"), os.path.join(directory, f"{name}.metrics.tsv")
