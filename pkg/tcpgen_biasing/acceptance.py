"""
The acceptance suite behind `tcpgen accept`: property checks of every building block,
then the toy-scale training experiments comparing no biasing, TCPGen and TCPGen with
tree-RNN encodings.
"""

import functools
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from . import config
from .autodiff import gradient_check
from .config import BiasingMode, ExperimentConfig, ModelMode
from .gnn_encoder import GnnParams, encode_tree
from .metrics import edit_distance, score, score_utterance, sign_test
from .models import ModelDims, ToyModel, ToyModelParams
from .prefix_tree import build_tree
from .synthetic import generate_task
from .tcpgen import output_distribution
from .training import prepare_examples, train
from .transducer import compute_alphas, exhaustive_log_likelihood
from .utils import parallel_map
from .vocab import Vocab, words_to_ids

logger = logging.getLogger(__name__)

SYSTEMS = (BiasingMode.OFF, BiasingMode.TCPGEN, BiasingMode.TCPGEN_GNN)
ACCEPTANCE_SEEDS = (0, 1, 2)

_SMALL_LETTERS = "abcde"
_SMALL_DIMS = ModelDims(d_feat=3, d_enc=4, d_dec=4, d_emb=3, d_tree=3, d_joint=4)


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class SystemRun:
    """Test-set results of one trained system"""

    biasing: str
    seed: int
    r_wer: float
    oov_wer: float
    first_piece_p_gen: List[float] = field(default_factory=list)

    @property
    def mean_first_piece_p_gen(self):
        return float(np.mean(self.first_piece_p_gen)) if self.first_piece_p_gen else 0.0


def _small_vocab():
    return Vocab.build(list(_SMALL_LETTERS) + [c + "_" for c in _SMALL_LETTERS] + ["ab", "cd"])


def _random_words(rng, count, min_length=2, max_length=4):
    words = set()
    while len(words) < count:
        length = int(rng.integers(min_length, max_length + 1))
        words.add("".join(rng.choice(list(_SMALL_LETTERS), size=length)))
    return sorted(words)


def _random_distributions(rng, shape, mask):
    logits = rng.normal(size=shape) * 3.0
    logits[..., ~mask] = -np.inf
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def _random_step_inputs(rng, vocab, mode, draws):
    """Random P_mdl rows, P_ptr rows masked to random valid sets (OOL always valid) and raw P_gen values"""
    p_mdl = _random_distributions(rng, (draws, len(vocab)), vocab.emittable_mask(mode))
    valid = rng.random((draws, len(vocab))) < 0.4
    valid[:, list(vocab.reserved_ids)] = False
    valid[:, vocab.ool_id] = True
    logits = rng.normal(size=(draws, len(vocab))) * 3.0
    logits[~valid] = -np.inf
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    p_ptr = shifted / shifted.sum(axis=-1, keepdims=True)
    return p_mdl, p_ptr, valid, rng.random(draws)


def check_normalization(seed, draws=10_000) -> CriterionResult:
    rng = np.random.default_rng(seed)
    vocab = _small_vocab()
    worst = 0.0
    for mode in ModelMode.ALL:
        p_mdl, p_ptr, _, p_gen_raw = _random_step_inputs(rng, vocab, mode, draws)
        p_final, _, _ = output_distribution(p_mdl, p_ptr, p_gen_raw, mode, vocab.ool_id, vocab.null_id)
        worst = max(worst, float(np.max(np.abs(p_final.data.sum(axis=-1) - 1.0))))
    return CriterionResult("normalization", worst < 1e-6, f"max |sum - 1| = {worst:.2e} over {draws} draws per mode")


def check_mask_soundness(seed, draws=1_000) -> CriterionResult:
    rng = np.random.default_rng(seed)
    vocab = _small_vocab()
    worst = 0.0
    for mode in ModelMode.ALL:
        p_mdl, p_ptr, valid, p_gen_raw = _random_step_inputs(rng, vocab, mode, draws)
        p_final, _, p_gen_hat = output_distribution(p_mdl, p_ptr, p_gen_raw, mode, vocab.ool_id, vocab.null_id)
        expected = p_mdl * (1.0 - p_gen_hat.data[:, None])
        outside = ~valid
        worst = max(worst, float(np.max(np.abs(p_final.data[outside] - expected[outside]))))
    return CriterionResult("mask soundness", worst <= 1e-12, f"max deviation outside the valid set {worst:.2e}")


def _gradient_instance(rng, vocab, mode, seed):
    params = ToyModelParams.initialize(mode, len(vocab), _SMALL_DIMS, seed=seed)
    words = _random_words(rng, 10)
    tree = build_tree(words, vocab)
    text = " ".join([words[int(rng.integers(len(words)))], _random_words(rng, 1)[0]])
    targets = words_to_ids(text, vocab)
    features = rng.normal(size=(len(targets) + 2, _SMALL_DIMS.d_feat))
    return params, tree, targets, features


def check_gradients(seed, trials=2) -> CriterionResult:
    rng = np.random.default_rng(seed)
    vocab = _small_vocab()
    worst = 0.0
    worst_name = ""
    for mode in ModelMode.ALL:
        for trial in range(trials):
            params, tree, targets, features = _gradient_instance(rng, vocab, mode, seed + trial)

            def loss_function(tensors):
                model = ToyModel(params, vocab, biasing=BiasingMode.TCPGEN_GNN, weights=tensors)
                return model.forward(features, targets, tree).loss

            for name, error in gradient_check(loss_function, params.arrays).items():
                if error > worst:
                    worst, worst_name = error, f"{mode} {name}"
    return CriterionResult(
        "gradient oracle",
        worst < config.GRADIENT_CHECK_TOLERANCE,
        f"max relative error {worst:.2e} ({worst_name or 'all zero'})",
    )


def check_subtree_locality(seed, trees=100) -> CriterionResult:
    rng = np.random.default_rng(seed)
    vocab = _small_vocab()
    failures = 0
    probes = 0
    for _ in range(trees):
        tree = build_tree(_random_words(rng, int(rng.integers(3, 11))), vocab)
        params = GnnParams.initialize(len(vocab), 4, 4, 4, 4, rng)
        probe = int(rng.integers(1, len(tree)))
        inside = {tree.nodes[node].wordpiece for node in tree.subtree(probe)}
        outside = [piece for piece in range(len(vocab)) if piece not in inside and not vocab.is_reserved(piece)]
        if not outside:
            continue
        before = encode_tree(tree, params, store=False).encodings[probe].copy()
        params.embeddings[int(rng.choice(outside))] += rng.normal(size=params.d_emb)
        params.root_embedding += rng.normal(size=params.d_emb)
        after = encode_tree(tree, params, store=False).encodings[probe]
        probes += 1
        failures += not np.array_equal(before, after)
    return CriterionResult("subtree locality", failures == 0, f"{failures} of {probes} probed nodes changed")


def check_transducer_oracle(seed, draws_per_shape=5, vocab_size=5) -> CriterionResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    lattices = 0
    for frames in range(1, 5):
        for labels in range(0, 4):
            for _ in range(draws_per_shape):
                logits = rng.normal(size=(frames, labels + 1, vocab_size))
                log_probs = logits - np.logaddexp.reduce(logits, axis=-1, keepdims=True)
                targets = rng.integers(1, vocab_size, size=labels)
                log_blank = log_probs[:, :, 0]
                log_emit = log_probs[:, np.arange(labels), targets] if labels else np.zeros((frames, 0))
                _, log_likelihood = compute_alphas(log_blank, log_emit)
                worst = max(worst, abs(log_likelihood - exhaustive_log_likelihood(log_blank, log_emit)))
                lattices += 1
    return CriterionResult("transducer oracle", worst < 1e-6, f"max |difference| {worst:.2e} over {lattices} lattices")


def brute_force_edit_distance(ref, hyp):
    """Exponential-time recursion, memoized per call"""

    @functools.lru_cache(maxsize=None)
    def distance(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            distance(i - 1, j) + 1,
            distance(i, j - 1) + 1,
            distance(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
        )

    return distance(len(ref), len(hyp))


def insertion_rule_fixtures():
    """(description, passed) for the scoring fixtures of the rare-word insertion rule"""
    correct = score_utterance("we met turner today", "we met turner today", biasing={"turner"})
    truncated = score_utterance("we met turner today", "we met turn today", biasing={"turner"})
    repeated = score_utterance("we met turner today", "we met turner turner today", biasing={"turner"})
    no_list = score_utterance("we met turner today", "we met turn today")
    over = score_utterance("turner", "turner turner turner", biasing={"turner"})
    return [
        ("exact match", correct.counts.rate == 0.0 and correct.rare.rate == 0.0),
        ("truncated rare word", truncated.counts.rate == 0.25 and truncated.rare.rate == 1.0),
        ("inserted rare word", repeated.rare.errors == 1),
        ("empty list is undefined", no_list.rare.rate is None),
        ("R-WER above 100%", over.rare.rate == 2.0),
    ]


def check_edit_distance(seed, pairs=1_000) -> CriterionResult:
    rng = np.random.default_rng(seed)
    alphabet = ["a", "b", "c"]
    mismatches = 0
    for _ in range(pairs):
        ref = tuple(rng.choice(alphabet, size=int(rng.integers(0, 7))))
        hyp = tuple(rng.choice(alphabet, size=int(rng.integers(0, 7))))
        mismatches += edit_distance(list(ref), list(hyp)) != brute_force_edit_distance(ref, hyp)
    failed = [name for name, passed in insertion_rule_fixtures() if not passed]
    detail = f"{mismatches} of {pairs} pairs differ; fixtures failed: {', '.join(failed) or 'none'}"
    return CriterionResult("edit-distance oracle", mismatches == 0 and not failed, detail)


def check_degeneracy(seed, utterances=50, beam_width=2, max_length=20) -> CriterionResult:
    task = generate_task(seed, n_train=1, n_test=utterances)
    empty = build_tree([], task.vocab)
    differences = 0
    for mode in ModelMode.ALL:
        params = ToyModelParams.initialize(mode, len(task.vocab), ModelDims(), seed=seed)
        biased = ToyModel(params, task.vocab, biasing=BiasingMode.TCPGEN_GNN)
        plain = ToyModel(params, task.vocab, biasing=BiasingMode.OFF)
        for utterance in task.test:
            a = biased.beam_search(utterance.features, empty, beam_width, max_length)
            b = plain.beam_search(utterance.features, None, beam_width, max_length)
            differences += a.tokens != b.tokens or a.score != b.score
    return CriterionResult(
        "degeneracy", differences == 0, f"{differences} of {2 * utterances} decodes differ with an empty list"
    )


def check_sign_test() -> CriterionResult:
    all_positive = sign_test([(i + 1.0, float(i)) for i in range(8)]).p_value
    seven_of_eight = sign_test([(i + 1.0, float(i)) for i in range(7)] + [(0.0, 1.0)]).p_value
    passed = all_positive == 0.0078125 and seven_of_eight == 0.0703125
    return CriterionResult("sign test", passed, f"p = {all_positive} (8 of 8), {seven_of_eight} (7 of 8)")


def first_piece_generation_probabilities(result, reference, biasing_words):
    """P_gen at the first wordpiece of every hypothesis word that is a biasing word found in the reference"""
    hypothesis_words = result.text.split()
    reference_words = set(reference.lower().split())
    values = []
    for step in result.trace:
        if not step.word_start or step.word_index >= len(hypothesis_words):
            continue
        word = hypothesis_words[step.word_index]
        if word in biasing_words and word in reference_words:
            values.append(step.p_gen)
    return values


def run_system(task, biasing, seed, experiment: ExperimentConfig, threads=1) -> SystemRun:
    """Train one system on the task's training set and score it on the test set"""
    experiment = ExperimentConfig(**vars(experiment))
    experiment.biasing = biasing
    experiment.seed = seed
    params = ToyModelParams.initialize(
        experiment.mode, len(task.vocab), ModelDims.from_config(experiment), seed=seed
    )
    examples = prepare_examples(task.train, task.vocab, task.biasing_lists, biasing)
    params = train(examples, params, task.vocab, experiment).params
    model = ToyModel(params, task.vocab, biasing=biasing)

    def decode(utterance):
        words = task.biasing_lists.get(utterance.utterance_id, [])
        tree = build_tree(words, task.vocab) if biasing != BiasingMode.OFF else None
        return model.beam_search(utterance.features, tree, experiment.beam_width, experiment.max_decode_length)

    results = parallel_map(decode, task.test, threads)
    hypotheses = []
    first_piece = []
    for utterance, result in zip(task.test, results):
        hypotheses.append(_Hypothesis(utterance.utterance_id, utterance.speaker, result.text))
        words = set(task.biasing_lists.get(utterance.utterance_id, []))
        first_piece.extend(first_piece_generation_probabilities(result, utterance.text, words))

    report = score(task.test, hypotheses, biasing=task.biasing_lists, oov=task.oov_words)
    run = SystemRun(biasing, seed, report.r_wer or 0.0, report.oov_wer or 0.0, first_piece)
    logger.info(
        f"{biasing} seed {seed}: WER {report.wer}, R-WER {run.r_wer:.4f}, OOV WER {run.oov_wer:.4f}, "
        f"first-piece p_gen {run.mean_first_piece_p_gen:.4f}"
    )
    return run


@dataclass(frozen=True)
class _Hypothesis:
    utterance_id: str
    speaker: str
    text: str


def run_toy_experiments(experiment: ExperimentConfig, seeds=ACCEPTANCE_SEEDS, threads=1) -> Dict[str, List[SystemRun]]:
    runs = {system: [] for system in SYSTEMS}
    for seed in seeds:
        task = generate_task(
            seed,
            d_feat=experiment.d_feat,
            frames_per_piece=experiment.frames_per_piece,
            noise=experiment.feature_noise,
        )
        for system in SYSTEMS:
            runs[system].append(run_system(task, system, seed, experiment, threads))
    return runs


def _spread(values):
    return float(np.max(values) - np.min(values)) if len(values) else 0.0


def toy_criteria(runs: Dict[str, List[SystemRun]]) -> List[CriterionResult]:
    baseline, tcpgen, gnn = (runs[system] for system in SYSTEMS)
    r_wer = {system: [run.r_wer for run in runs[system]] for system in SYSTEMS}
    means = {system: float(np.mean(values)) for system, values in r_wer.items()}

    margin = means[BiasingMode.OFF] - means[BiasingMode.TCPGEN]
    spread = max(_spread(r_wer[BiasingMode.OFF]), _spread(r_wer[BiasingMode.TCPGEN]))
    effect = CriterionResult(
        "toy biasing effect",
        margin > spread and means[BiasingMode.TCPGEN_GNN] <= means[BiasingMode.TCPGEN],
        "mean R-WER " + ", ".join(f"{system} {100 * means[system]:.1f}%" for system in SYSTEMS)
        + f"; margin {100 * margin:.1f} vs spread {100 * spread:.1f} points",
    )

    lookahead_gnn = float(np.mean([run.mean_first_piece_p_gen for run in gnn]))
    lookahead_plain = float(np.mean([run.mean_first_piece_p_gen for run in tcpgen]))
    lookahead = CriterionResult(
        "lookahead effect",
        lookahead_gnn > lookahead_plain,
        f"mean first-piece p_gen {lookahead_gnn:.3f} with tree encodings vs {lookahead_plain:.3f} without",
    )

    ordered = sum(1 for a, b, c in zip(gnn, tcpgen, baseline) if a.oov_wer < b.oov_wer < c.oov_wer)
    zero_shot = CriterionResult(
        "zero-shot OOV",
        ordered >= 2,
        f"OOV WER ordered in {ordered} of {len(gnn)} seeds "
        + "; ".join(f"{a.oov_wer:.2f}<{b.oov_wer:.2f}<{c.oov_wer:.2f}" for a, b, c in zip(gnn, tcpgen, baseline)),
    )
    return [effect, lookahead, zero_shot]


def _timed(function, *args):
    start = time.perf_counter()
    result = function(*args)
    result.seconds = time.perf_counter() - start
    logger.info(f"{result.name}: {'pass' if result.passed else 'FAIL'} ({result.seconds:.1f}s) {result.detail}")
    return result


def run_acceptance(seed=config.DEFAULT_SEED, skip_training=False, experiment=None, threads=1) -> List[CriterionResult]:
    results = [
        _timed(check_normalization, seed),
        _timed(check_mask_soundness, seed),
        _timed(check_gradients, seed),
        _timed(check_subtree_locality, seed),
        _timed(check_transducer_oracle, seed),
        _timed(check_edit_distance, seed),
        _timed(check_degeneracy, seed),
        _timed(check_sign_test),
    ]
    if skip_training:
        return results

    start = time.perf_counter()
    runs = run_toy_experiments(experiment or ExperimentConfig(), threads=threads)
    elapsed = time.perf_counter() - start
    for result in toy_criteria(runs):
        result.seconds = elapsed
        results.append(result)
    return results


def format_results(results: List[CriterionResult]) -> str:
    width = max(len(result.name) for result in results)
    lines = [
        f"{'PASS' if result.passed else 'FAIL'}  {result.name.ljust(width)}  {result.seconds:7.1f}s  {result.detail}"
        for result in results
    ]
    passed = sum(result.passed for result in results)
    lines.append(f"{passed}/{len(results)} criteria passed")
    return "\n".join(lines)
