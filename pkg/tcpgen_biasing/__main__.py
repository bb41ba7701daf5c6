import argparse
import logging
import os
import sys

from . import __version__, config, validation
from .acceptance import format_results, run_acceptance
from .biasing_lists import (
    build_rare_word_list,
    coverage,
    extract_series_lists,
    extract_slide_list,
    load_counts,
    load_word_list,
    save_word_list,
    simulate_utterance_list,
)
from .checkpoint import load_checkpoint, save_checkpoint, write_arrays
from .config import BiasingMode, ExperimentConfig, ModelMode
from .data import (
    Transcript,
    load_biasing_lists,
    load_corpus,
    load_transcripts,
    save_biasing_lists,
    save_transcripts,
    utterance_features,
)
from .errors import DataError, TcpgenError
from .gnn_encoder import encode_tree, project_keys_values
from .metrics import (
    Metric,
    format_report,
    paired_speaker_metric,
    read_speaker_table,
    score,
    sign_test,
    write_speaker_table,
)
from .models import TRACE_HEADER, ModelDims, ToyModel, ToyModelParams, format_trace_step
from .prefix_tree import build_tree, dump_lines, dump_tree
from .synthetic import FeatureRenderer, generate_task, write_task
from .training import checkpoint_paths, prepare_examples, train
from .utils import atomic_write, parallel_map
from .vocab import load_vocab

logger = logging.getLogger(__name__)

LOGGING_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors print the full help and exit with status 1"""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(1, f"\n{self.prog}: error: {message}\n")


def experiment_from_args(args, required_paths=()):
    """The --config file (or defaults) with the command line values laid over it"""
    experiment = args.config if args.config is not None else ExperimentConfig()
    experiment.override(
        seed=args.seed,
        vocab=getattr(args, "vocab", None),
        corpus=getattr(args, "corpus", None),
        biasing_dir=getattr(args, "biasing_dir", None),
        checkpoint_dir=getattr(args, "checkpoint_dir", None),
        mode=getattr(args, "model", None),
        biasing=getattr(args, "biasing_mode", None),
        epochs=getattr(args, "epochs", None),
        learning_rate=getattr(args, "learning_rate", None),
        beam_width=getattr(args, "beam_width", None),
        max_decode_length=getattr(args, "max_length", None),
        word_end_marker=args.word_end_marker,
    )
    return experiment.validate(required_paths)


def _biasing_words(path):
    return load_word_list(path) if path is not None else []


def build_tree_command(args):
    vocab = load_vocab(args.vocab, word_end_suffix=args.word_end_marker or config.DEFAULT_WORD_END_MARKER)
    tree = build_tree(_biasing_words(args.biasing), vocab)
    if args.dump == "-":
        print("\n".join(dump_lines(tree, vocab)))
    elif args.dump is not None:
        dump_tree(tree, vocab, args.dump)
    print(f"{tree.word_count} biasing words, {len(tree)} nodes")
    return 0


def encode_tree_command(args):
    checkpoint = load_checkpoint(args.checkpoint)
    tree = build_tree(_biasing_words(args.biasing), checkpoint.vocab)
    gnn = checkpoint.params.gnn()
    encoding = encode_tree(tree, gnn, use_gnn=not args.no_gnn)
    table = project_keys_values(encoding, gnn)
    arrays = {"encodings": encoding.encodings, "keys": table.keys, "values": table.values}
    write_arrays(args.out, arrays, {"nodes": dump_lines(tree, checkpoint.vocab), "use_gnn": not args.no_gnn})
    print(f"Encoded {len(tree)} nodes into {args.out}")
    return 0


def _renderer(vocab, experiment, d_feat):
    return FeatureRenderer(vocab, experiment.seed, d_feat, experiment.frames_per_piece, experiment.feature_noise)


def train_command(args):
    experiment = experiment_from_args(args, required_paths=("vocab", "corpus"))
    vocab = load_vocab(experiment.vocab, word_end_suffix=experiment.word_end_marker)
    utterances = load_corpus(experiment.corpus)
    lists = load_biasing_lists(experiment.biasing_dir, (u.utterance_id for u in utterances))
    dims = ModelDims.from_config(experiment)
    examples = prepare_examples(
        utterances, vocab, lists, experiment.biasing, render=_renderer(vocab, experiment, dims.d_feat)
    )
    params = ToyModelParams.initialize(experiment.mode, len(vocab), dims, seed=experiment.seed)
    checkpoint_path, metrics_path = checkpoint_paths(experiment)
    if args.out is not None:
        checkpoint_path = args.out
    result = train(examples, params, vocab, experiment, checkpoint_path, metrics_path)
    if experiment.epochs == 0:
        save_checkpoint(checkpoint_path, result.params, vocab, experiment.biasing, extra={"epoch": 0})
    print(f"Trained {experiment.mode} / {experiment.biasing} for {experiment.epochs} epoch(s): {checkpoint_path}")
    return 0


def _decoder(args):
    """(model, vocab, experiment, utterances, biasing lists) for decode and step"""
    checkpoint = load_checkpoint(args.checkpoint)
    experiment = experiment_from_args(args)
    biasing = args.biasing_mode or checkpoint.biasing
    if biasing not in BiasingMode.ALL:
        raise DataError(f"checkpoint names an unknown biasing mode '{biasing}'")
    model = ToyModel(checkpoint.params, checkpoint.vocab, biasing=biasing)
    utterances = load_corpus(args.corpus)
    lists = load_biasing_lists(args.biasing, (u.utterance_id for u in utterances))
    return model, checkpoint.vocab, experiment, utterances, lists


def _decode_one(model, vocab, experiment, utterance, words, render):
    tree = build_tree(words, vocab) if model.biasing != BiasingMode.OFF else None
    features = utterance_features(utterance, render)
    result = model.beam_search(features, tree, experiment.beam_width, experiment.max_decode_length)
    logger.debug(f"{utterance.utterance_id}: {result.text} (score {result.score:.4f})")
    return result


def decode_command(args):
    model, vocab, experiment, utterances, lists = _decoder(args)
    render = _renderer(vocab, experiment, model.params.dims.d_feat)

    def decode(utterance):
        return _decode_one(model, vocab, experiment, utterance, lists[utterance.utterance_id], render)

    results = parallel_map(decode, utterances, config.threads)
    hypotheses = [Transcript(u.utterance_id, u.speaker, r.text) for u, r in zip(utterances, results)]
    if args.out is not None:
        save_transcripts(hypotheses, args.out)
    else:
        for hypothesis in hypotheses:
            print(f"{hypothesis.utterance_id}\t{hypothesis.speaker}\t{hypothesis.text}")
    if args.trace is not None:
        with atomic_write(args.trace) as file:
            file.write(TRACE_HEADER + "\n")
            for utterance, result in zip(utterances, results):
                for step in result.trace:
                    file.write(format_trace_step(utterance.utterance_id, step, vocab) + "\n")
    return 0


def step_command(args):
    model, vocab, experiment, utterances, lists = _decoder(args)
    selected = [u for u in utterances if u.utterance_id == args.utterance] if args.utterance else utterances[:1]
    if not selected:
        raise DataError(f"utterance '{args.utterance}' is not in {args.corpus}")
    utterance = selected[0]
    render = _renderer(vocab, experiment, model.params.dims.d_feat)
    result = _decode_one(model, vocab, experiment, utterance, lists[utterance.utterance_id], render)
    print(TRACE_HEADER)
    for step in result.trace:
        print(format_trace_step(utterance.utterance_id, step, vocab))
    return 0


def extract_biasing_command(args):
    if args.slides_dir is None and args.corpus is None:
        raise DataError("extract-biasing needs --slides-dir (slide lists) or --corpus (simulated lists)")
    counts = load_counts(args.train_counts) if args.train_counts is not None else None
    if args.rare_list is not None:
        rare_words = set(load_word_list(args.rare_list))
    elif counts is not None:
        rare_words = build_rare_word_list(counts, args.common_cutoff)
    else:
        raise DataError("extract-biasing needs --rare-list or --train-counts to know the rare words")

    if args.slides_dir is not None:
        if counts is None:
            raise DataError("slide extraction needs --train-counts")
        if args.per_series:
            series = extract_series_lists(args.slides_dir, rare_words, counts, args.max_count, config.threads)
            for name, words in series.items():
                save_word_list(words, os.path.join(args.out, f"{name}.txt"))
            print(f"Wrote {len(series)} series lists to {args.out}")
            return 0
        files = [os.path.join(args.slides_dir, n) for n in sorted(os.listdir(args.slides_dir)) if n.endswith(".txt")]
        words = extract_slide_list(files, rare_words, counts, args.max_count, threads=config.threads)
        save_word_list(words, args.out)
        print(f"{len(words)} slide biasing words from {len(files)} file(s)")
        return 0

    utterances = load_corpus(args.corpus)
    seed = args.seed if args.seed is not None else config.DEFAULT_SEED
    pool = sorted(rare_words)
    lists = {}
    for index, utterance in enumerate(utterances):
        lists[utterance.utterance_id] = list(
            simulate_utterance_list(
                utterance.text, rare_words, pool, args.distractors, seed=[seed, index], scope=utterance.utterance_id
            )
        )
    save_biasing_lists(lists, args.out)
    covered = coverage((u.text for u in utterances), rare_words)
    print(f"Wrote {len(lists)} utterance lists to {args.out}; rare words cover {100 * covered:.2f}% of tokens")
    return 0


def score_command(args):
    references = load_transcripts(args.ref)
    hypotheses = load_transcripts(args.hyp)
    ids = [r.utterance_id for r in references]
    biasing = load_biasing_lists(args.biasing, ids)
    slides = load_biasing_lists(args.slides_biasing, ids) if args.slides_biasing is not None else None
    oov = load_word_list(args.oov_list) if args.oov_list is not None else None
    report = score(references, hypotheses, biasing=biasing, slides=slides, oov=oov)
    print(format_report(report, include_slides=slides is not None, include_oov=oov is not None))
    if args.speaker_table is not None:
        write_speaker_table(report, args.speaker_table)
    return 0


def signtest_command(args):
    pairs = paired_speaker_metric(read_speaker_table(args.a), read_speaker_table(args.b), args.metric)
    result = sign_test(pairs)
    print(
        f"{args.metric}: A > B for {result.positive}, A < B for {result.negative}, ties {result.ties}; "
        f"p = {result.p_value:.6g}"
    )
    return 0


def accept_command(args):
    experiment = experiment_from_args(args)
    results = run_acceptance(experiment.seed, args.skip_training, experiment, config.threads)
    print(format_results(results))
    return 0 if all(result.passed for result in results) else 3


def synthesize_command(args):
    seed = args.seed if args.seed is not None else config.DEFAULT_SEED
    marker = args.word_end_marker or config.DEFAULT_WORD_END_MARKER
    task = generate_task(seed, n_train=args.train, n_test=args.test, word_end_marker=marker)
    config_path = write_task(task, args.out, seed=seed)
    print(f"Synthetic task written to {args.out} (configuration {config_path})")
    return 0


def _add_experiment_arguments(parser, decoding=False, training=False):
    parser.add_argument(
        "--config", type=validation.argparse_config_file, default=None, help="experiment configuration file"
    )
    parser.add_argument(
        "--biasing-mode",
        "--mode",
        dest="biasing_mode",
        choices=BiasingMode.ALL,
        default=None,
        help="biasing component: off, tcpgen, or tcpgen+gnn",
    )
    if decoding:
        parser.add_argument("--beam-width", type=validation.argparse_positive_int, default=None)
        parser.add_argument("--max-length", type=validation.argparse_positive_int, default=None)
    if training:
        parser.add_argument("--model", choices=ModelMode.ALL, default=None, help="recognizer type")
        parser.add_argument("--vocab", type=validation.argparse_file_exists, default=None)
        parser.add_argument("--corpus", type=validation.argparse_file_exists, default=None)
        parser.add_argument("--biasing-dir", type=validation.argparse_directory_exists, default=None)
        parser.add_argument("--checkpoint-dir", default=None)
        parser.add_argument("--epochs", type=validation.argparse_non_negative_int, default=None)
        parser.add_argument("--learning-rate", type=float, default=None)


def build_parser():
    parser = ArgumentParser(prog="tcpgen", description="Tree-constrained pointer generator for contextual biasing")
    parser.add_argument("--seed", type=validation.argparse_non_negative_int, default=None, help="random seed")
    parser.add_argument(
        "--threads", type=validation.argparse_positive_int, default=1, help="worker threads for per-utterance work"
    )
    parser.add_argument(
        "--logging-level",
        nargs="?",
        type=validation.argparse_logging_level,
        choices=LOGGING_LEVELS,
        help="the level to use for logging - defaults to WARNING",
        default="WARNING",
    )
    parser.add_argument(
        "--word-end-marker",
        type=validation.argparse_word_end_marker,
        default=None,
        help=f"suffix marking a word-final wordpiece - defaults to '{config.DEFAULT_WORD_END_MARKER}'",
    )
    parser.add_argument("-v", "--version", action="version", version=f"tcpgen-biasing {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    subparsers.required = True

    sub = subparsers.add_parser("build-tree", help="build the prefix tree of a biasing list")
    sub.add_argument("--vocab", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--biasing", type=validation.argparse_file_exists, default=None)
    sub.add_argument("--dump", default=None, help="write 'node_id parent_id wordpiece is_word_end' lines ('-': stdout)")
    sub.set_defaults(handler=build_tree_command)

    sub = subparsers.add_parser("encode-tree", help="encode a biasing list's tree with a checkpoint's tree-RNN")
    sub.add_argument("--checkpoint", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--biasing", type=validation.argparse_file_exists, default=None)
    sub.add_argument("--no-gnn", action="store_true", help="use the raw wordpiece embeddings")
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=encode_tree_command)

    sub = subparsers.add_parser("train", help="train a toy recognizer")
    _add_experiment_arguments(sub, training=True)
    sub.add_argument("--out", default=None, help="checkpoint path (default: inside the checkpoint directory)")
    sub.set_defaults(handler=train_command)

    for name, handler, description in (
        ("decode", decode_command, "decode a corpus"),
        ("step", step_command, "print the per-step TCPGen trace of one utterance"),
    ):
        sub = subparsers.add_parser(name, help=description)
        _add_experiment_arguments(sub, decoding=True)
        sub.add_argument("--checkpoint", type=validation.argparse_file_exists, required=True)
        sub.add_argument("--corpus", type=validation.argparse_file_exists, required=True)
        sub.add_argument("--biasing", type=validation.argparse_path_exists, default=None, help="list file or directory")
        if name == "decode":
            sub.add_argument("--out", default=None, help="hypothesis file (default: stdout)")
            sub.add_argument("--trace", default=None, help="write the per-token TCPGen trace to this file")
        else:
            sub.add_argument("--utterance", default=None, help="utterance id (default: the first one)")
            sub.add_argument("--trace", action="store_true", help="accepted for symmetry; the trace is always printed")
        sub.set_defaults(handler=handler)

    sub = subparsers.add_parser("extract-biasing", help="build biasing lists from slides or by simulation")
    sub.add_argument("--slides-dir", type=validation.argparse_directory_exists, default=None)
    sub.add_argument("--corpus", type=validation.argparse_file_exists, default=None)
    sub.add_argument("--rare-list", type=validation.argparse_file_exists, default=None)
    sub.add_argument("--train-counts", type=validation.argparse_file_exists, default=None)
    sub.add_argument(
        "--common-cutoff", type=validation.argparse_non_negative_int, default=config.DEFAULT_COMMON_WORD_CUTOFF
    )
    sub.add_argument("--max-count", type=validation.argparse_positive_int, default=config.DEFAULT_SLIDE_MAX_COUNT)
    sub.add_argument("--distractors", type=validation.argparse_non_negative_int, default=config.DEFAULT_DISTRACTORS)
    sub.add_argument("--per-series", action="store_true", help="one list per meeting series")
    sub.add_argument("--out", required=True)
    sub.set_defaults(handler=extract_biasing_command)

    sub = subparsers.add_parser("score", help="WER, R-WER and Rs-WER")
    sub.add_argument("--ref", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--hyp", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--biasing", type=validation.argparse_path_exists, default=None)
    sub.add_argument("--slides-biasing", type=validation.argparse_path_exists, default=None)
    sub.add_argument("--oov-list", type=validation.argparse_file_exists, default=None)
    sub.add_argument("--speaker-table", default=None, help="write the per-speaker table for signtest")
    sub.set_defaults(handler=score_command)

    sub = subparsers.add_parser("signtest", help="speaker-by-speaker sign test of two speaker tables")
    sub.add_argument("--a", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--b", type=validation.argparse_file_exists, required=True)
    sub.add_argument("--metric", choices=Metric.ALL, default=Metric.WER)
    sub.set_defaults(handler=signtest_command)

    sub = subparsers.add_parser("accept", help="run the acceptance suite")
    _add_experiment_arguments(sub, decoding=True)
    sub.add_argument("--epochs", type=validation.argparse_non_negative_int, default=None)
    sub.add_argument("--skip-training", action="store_true", help="run only the property criteria")
    sub.set_defaults(handler=accept_command)

    sub = subparsers.add_parser("synthesize", help="write a synthetic toy task")
    sub.add_argument("--out", required=True)
    sub.add_argument("--train", type=validation.argparse_positive_int, default=500)
    sub.add_argument("--test", type=validation.argparse_positive_int, default=100)
    sub.set_defaults(handler=synthesize_command)

    # Also accepted after the subcommand; SUPPRESS keeps a value given before it
    for sub in subparsers.choices.values():
        sub.add_argument("--word-end-marker", type=validation.argparse_word_end_marker, default=argparse.SUPPRESS)
    return parser


def main(argv=None):
    """Run one subcommand and return its exit code"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(getattr(logging, args.logging_level))
    config.threads = args.threads

    try:
        return args.handler(args)
    except TcpgenError as e:
        logger.error(str(e))
        return e.exit_code


def run():
    """Module entry point"""
    sys.exit(main())


if __name__ == "__main__":
    run()
