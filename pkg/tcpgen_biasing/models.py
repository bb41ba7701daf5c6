"""
Toy recognizers with TCPGen hooks: an attention encoder-decoder (AED) and a recurrent
transducer (RNN-T), both over an Elman-RNN acoustic encoder.

The same step functions serve teacher-forced training (weights wrapped as tape leaves)
and decoding (weights wrapped as constants, nothing is recorded).

AED step i:
    s_i  = tanh(W [emb(y_{i-1}); c_{i-1}] + U s_{i-1} + b)
    c_i  = attention over the encoder states with scores h_t . (A s_i)
    P_mdl = softmax(O [s_i; c_i] + o)
    query = Wq [c_i; emb(y_{i-1})],   P_gen = sigmoid(w_s . s_i + w_p . h_ptr + b_g)

RNN-T lattice point (t, u):
    z    = tanh(Je h_t + Jp g_u + j)
    P_mdl = softmax(O z + o)
    query = Wq_enc h_t + Wq_pred g_u,   P_gen = sigmoid(w_s . z + w_p . h_ptr + b_g)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import config
from .autodiff import (
    Tensor,
    concat,
    constants,
    gather,
    getitem,
    linear,
    log,
    matmul,
    parameters,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
)
from .config import BiasingMode, ModelMode
from .errors import DimensionMismatch
from .gnn_encoder import GnnParams, tree_encode_op, uniform_init
from .prefix_tree import PrefixTree, TreeSearchState, advance, valid_nodes
from .tcpgen import output_distribution, pointer_attention
from .transducer import transducer_loss
from .vocab import Vocab, ids_to_text

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelDims:
    d_feat: int = config.DEFAULT_D_FEAT
    d_enc: int = config.DEFAULT_D_ENC
    d_dec: int = config.DEFAULT_D_DEC
    d_emb: int = config.DEFAULT_D_EMB
    d_tree: int = config.DEFAULT_D_TREE
    d_joint: int = config.DEFAULT_D_JOINT

    @classmethod
    def from_config(cls, experiment):
        return cls(
            d_feat=experiment.d_feat,
            d_enc=experiment.d_enc,
            d_dec=experiment.d_dec,
            d_emb=experiment.d_emb,
            d_tree=experiment.d_tree,
            d_joint=experiment.d_joint,
        )

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def parameter_shapes(mode, vocab_size, dims: ModelDims) -> Dict[str, Tuple[tuple, int]]:
    """Name to (shape, fan-in) for every array of a model, in initialization order"""
    d = dims
    shapes = {
        "enc.W": ((d.d_enc, d.d_feat), d.d_feat),
        "enc.U": ((d.d_enc, d.d_enc), d.d_enc),
        "enc.b": ((d.d_enc,), d.d_enc),
    }
    if mode == ModelMode.AED:
        shapes.update(
            {
                "dec.embedding": ((vocab_size, d.d_emb), d.d_emb),
                "dec.W": ((d.d_dec, d.d_emb + d.d_enc), d.d_emb + d.d_enc),
                "dec.U": ((d.d_dec, d.d_dec), d.d_dec),
                "dec.b": ((d.d_dec,), d.d_dec),
                "att.W": ((d.d_enc, d.d_dec), d.d_dec),
                "out.W": ((vocab_size, d.d_dec + d.d_enc), d.d_dec + d.d_enc),
                "out.b": ((vocab_size,), d.d_dec + d.d_enc),
                "tcpgen.Wq": ((d.d_tree, d.d_enc + d.d_emb), d.d_enc + d.d_emb),
                "gen.w_state": ((d.d_dec,), d.d_dec),
            }
        )
    elif mode == ModelMode.RNNT:
        shapes.update(
            {
                "pred.embedding": ((vocab_size, d.d_emb), d.d_emb),
                "pred.W": ((d.d_dec, d.d_emb), d.d_emb),
                "pred.U": ((d.d_dec, d.d_dec), d.d_dec),
                "pred.b": ((d.d_dec,), d.d_dec),
                "joint.We": ((d.d_joint, d.d_enc), d.d_enc),
                "joint.Wp": ((d.d_joint, d.d_dec), d.d_dec),
                "joint.b": ((d.d_joint,), d.d_joint),
                "out.W": ((vocab_size, d.d_joint), d.d_joint),
                "out.b": ((vocab_size,), d.d_joint),
                "tcpgen.Wq_enc": ((d.d_tree, d.d_enc), d.d_enc),
                "tcpgen.Wq_pred": ((d.d_tree, d.d_dec), d.d_dec),
                "gen.w_state": ((d.d_joint,), d.d_joint),
            }
        )
    else:
        raise ValueError(f"Unknown model mode '{mode}'")
    shapes.update(
        {
            "gen.w_ptr": ((d.d_tree,), d.d_tree),
            "gen.b": ((), 1),
            "gnn.W1": ((d.d_tree, d.d_emb), d.d_emb),
            "gnn.W2": ((d.d_tree, d.d_tree), d.d_tree),
            "gnn.embeddings": ((vocab_size, d.d_emb), d.d_emb),
            "gnn.root_embedding": ((d.d_emb,), d.d_emb),
            "gnn.Wk": ((d.d_tree, d.d_tree), d.d_tree),
            "gnn.Wv": ((d.d_tree, d.d_tree), d.d_tree),
            "gnn.ool_key": ((d.d_tree,), d.d_tree),
            "gnn.ool_value": ((d.d_tree,), d.d_tree),
        }
    )
    return shapes


@dataclass
class ToyModelParams:
    mode: str
    dims: ModelDims
    vocab_size: int
    arrays: Dict[str, np.ndarray]

    @classmethod
    def initialize(cls, mode, vocab_size, dims: ModelDims, seed=config.DEFAULT_SEED):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices and zero biases, drawn in a fixed order"""
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, (shape, fan_in) in parameter_shapes(mode, vocab_size, dims).items():
            if name.endswith(".b"):
                arrays[name] = np.zeros(shape)
            else:
                arrays[name] = uniform_init(rng, shape, fan_in)
        return cls(mode=mode, dims=dims, vocab_size=vocab_size, arrays=arrays).check()

    def gnn(self) -> GnnParams:
        return GnnParams.from_arrays(self.arrays)

    def copy(self):
        return ToyModelParams(self.mode, self.dims, self.vocab_size, {k: v.copy() for k, v in self.arrays.items()})

    def check(self):
        """Raise DimensionMismatch unless every array is present, correctly shaped and finite"""
        if self.dims.d_emb != self.dims.d_tree:
            raise DimensionMismatch(f"d_emb ({self.dims.d_emb}) must equal d_tree ({self.dims.d_tree})")
        expected = parameter_shapes(self.mode, self.vocab_size, self.dims)
        missing = sorted(set(expected) - set(self.arrays))
        extra = sorted(set(self.arrays) - set(expected))
        if missing or extra:
            raise DimensionMismatch(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, (shape, _) in expected.items():
            array = self.arrays[name]
            if array.shape != shape:
                raise DimensionMismatch(f"{name} has shape {array.shape}, expected {shape}")
            if not np.all(np.isfinite(array)):
                raise DimensionMismatch(f"{name} contains non-finite values")
        return self


@dataclass
class BiasingOutputs:
    valid_ids: List[int]
    p_ptr: Tensor
    p_gen_raw: Tensor
    p_gen: Tensor
    p_gen_hat: Tensor


@dataclass
class TreeMemory:
    """Keys and values of every node of one prefix tree, plus the OOL entry, as tape tensors"""

    tree: PrefixTree
    keys: Tensor
    values: Tensor
    ool_key: Tensor
    ool_value: Tensor

    def rows(self, search: TreeSearchState, ool_id):
        valid = valid_nodes(self.tree, search)
        ids = list(valid) + [ool_id]
        if not valid:
            return ids, self.ool_key, self.ool_value
        nodes = list(valid.values())
        keys = concat([getitem(self.keys, nodes), self.ool_key], axis=0)
        values = concat([getitem(self.values, nodes), self.ool_value], axis=0)
        return ids, keys, values


@dataclass(frozen=True)
class TraceStep:
    """What TCPGen did when one token was emitted"""

    position: int
    frame: int
    token: int
    word_index: int
    word_start: bool
    p_gen_raw: float
    p_gen: float
    p_gen_hat: float
    valid_ids: Tuple[int, ...]
    top_pointer: Tuple[Tuple[int, float], ...]


@dataclass
class Hypothesis:
    tokens: Tuple[int, ...]
    score: float
    state: object
    search: TreeSearchState
    trace: Tuple[TraceStep, ...] = ()


@dataclass
class ForwardResult:
    loss: Tensor
    distributions: np.ndarray
    p_gens: List[float] = field(default_factory=list)


@dataclass
class DecodeResult:
    tokens: Tuple[int, ...]
    text: str
    score: float
    trace: Tuple[TraceStep, ...] = ()


def _ranking(candidate):
    """Best score first; equal scores fall back to the token ids"""
    return -candidate.score, candidate.tokens


def _word_position(tokens, vocab: Vocab):
    word_index = 0
    word_start = True
    for token in tokens:
        if vocab.is_reserved(token):
            continue
        word_start = vocab.is_word_end(token)
        word_index += int(word_start)
    return word_index, word_start


class ToyModel:
    def __init__(
        self,
        params: ToyModelParams,
        vocab: Vocab,
        biasing=BiasingMode.TCPGEN_GNN,
        force_p_gen_zero=False,
        trainable=False,
        weights: Optional[Dict[str, Tensor]] = None,
    ):
        """`weights` replaces the tensors built from params.arrays (used by gradient checks)"""
        if params.vocab_size != len(vocab):
            raise DimensionMismatch(f"model has {params.vocab_size} outputs, vocabulary has {len(vocab)} pieces")
        if biasing not in BiasingMode.ALL:
            raise ValueError(f"Unknown biasing mode '{biasing}'")
        self.params = params
        self.vocab = vocab
        self.mode = params.mode
        self.biasing = biasing
        self.force_p_gen_zero = force_p_gen_zero
        if weights is None:
            weights = parameters(params.arrays) if trainable else constants(params.arrays)
        self.weights = weights
        self.emit_mask = vocab.emittable_mask(params.mode)

    def gradients(self) -> Dict[str, np.ndarray]:
        """Gradients collected by the last backward pass, for the arrays that received one"""
        return {name: leaf.grad for name, leaf in self.weights.items() if leaf.grad is not None}

    def encode(self, features) -> Tensor:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.params.dims.d_feat or len(features) == 0:
            raise DimensionMismatch(f"features of shape {features.shape} do not fit d_feat={self.params.dims.d_feat}")
        w = self.weights
        projected = linear(features, w["enc.W"], w["enc.b"])
        hidden = Tensor(np.zeros(self.params.dims.d_enc))
        states = []
        for t in range(len(features)):
            hidden = tanh(getitem(projected, t) + matmul(w["enc.U"], hidden))
            states.append(hidden)
        return stack(states)

    def tree_memory(self, tree: Optional[PrefixTree]) -> Optional[TreeMemory]:
        """Node keys and values for `tree`; None when biasing is off"""
        if self.biasing == BiasingMode.OFF or tree is None:
            return None
        w = self.weights
        encodings = tree_encode_op(
            tree,
            w["gnn.W1"],
            w["gnn.W2"],
            w["gnn.embeddings"],
            w["gnn.root_embedding"],
            use_gnn=self.biasing == BiasingMode.TCPGEN_GNN,
        )
        return TreeMemory(
            tree=tree,
            keys=linear(encodings, w["gnn.Wk"]),
            values=linear(encodings, w["gnn.Wv"]),
            ool_key=reshape(w["gnn.ool_key"], (1, -1)),
            ool_value=reshape(w["gnn.ool_value"], (1, -1)),
        )

    def _generation_probability(self, state, h_ptr):
        if self.force_p_gen_zero:
            return Tensor(np.zeros(state.shape[:-1]))
        w = self.weights
        return sigmoid(matmul(state, w["gen.w_state"]) + matmul(h_ptr, w["gen.w_ptr"]) + w["gen.b"])

    def _bias(self, p_mdl, query, state, memory: TreeMemory, search: TreeSearchState):
        ids, keys, values = memory.rows(search, self.vocab.ool_id)
        p_ptr, h_ptr = pointer_attention(query, keys, values, ids, len(self.vocab))
        p_gen_raw = self._generation_probability(state, h_ptr)
        p_final, p_gen, p_gen_hat = output_distribution(
            p_mdl, p_ptr, p_gen_raw, self.mode, self.vocab.ool_id, self.vocab.null_id
        )
        return p_final, BiasingOutputs(ids, p_ptr, p_gen_raw, p_gen, p_gen_hat)

    # Attention encoder-decoder

    def initial_decoder_state(self):
        return Tensor(np.zeros(self.params.dims.d_dec)), Tensor(np.zeros(self.params.dims.d_enc))

    def aed_step(self, encoded, memory, previous, decoder_state, search):
        """One decoder step. Returns (decoder state, P_final, BiasingOutputs or None)."""
        w = self.weights
        state, context = decoder_state
        embedding = getitem(w["dec.embedding"], previous)
        state = tanh(linear(concat([embedding, context]), w["dec.W"], w["dec.b"]) + matmul(w["dec.U"], state))
        alignment = softmax(matmul(encoded, linear(state, w["att.W"])))
        context = matmul(alignment, encoded)
        p_mdl = softmax(linear(concat([state, context]), w["out.W"], w["out.b"]), mask=self.emit_mask)
        if memory is None:
            return (state, context), p_mdl, None
        query = linear(concat([context, embedding]), w["tcpgen.Wq"])
        p_final, biasing = self._bias(p_mdl, query, state, memory, search)
        return (state, context), p_final, biasing

    def aed_forward(self, features, target_ids, tree=None) -> ForwardResult:
        """Teacher-forced pass; the loss is the mean negative log P_final over the targets and EOS"""
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        decoder_state = self.initial_decoder_state()
        previous = self.vocab.bos_id
        search = TreeSearchState()
        targets = list(target_ids) + [self.vocab.eos_id]

        total = Tensor(0.0)
        distributions = []
        p_gens = []
        for target in targets:
            decoder_state, p_final, biasing = self.aed_step(encoded, memory, previous, decoder_state, search)
            total = total - log(getitem(p_final, target))
            distributions.append(p_final.data)
            if biasing is not None:
                p_gens.append(float(biasing.p_gen.data))
                search = advance(tree, search, target)
            previous = target
        return ForwardResult(total * (1.0 / len(targets)), np.stack(distributions), p_gens)

    # Transducer

    def initial_predictor_state(self):
        return self.predictor_step(self.vocab.bos_id, Tensor(np.zeros(self.params.dims.d_dec)))

    def predictor_step(self, previous, state):
        w = self.weights
        embedding = getitem(w["pred.embedding"], previous)
        return tanh(linear(embedding, w["pred.W"], w["pred.b"]) + matmul(w["pred.U"], state))

    def rnnt_joint(self, encoded, predicted, memory, search):
        """P_final for every frame in `encoded` (one row each, or a single frame) against one predictor state"""
        w = self.weights
        joint = tanh(linear(encoded, w["joint.We"]) + linear(predicted, w["joint.Wp"], w["joint.b"]))
        p_mdl = softmax(linear(joint, w["out.W"], w["out.b"]), mask=self.emit_mask)
        if memory is None:
            return p_mdl, None
        query = linear(encoded, w["tcpgen.Wq_enc"]) + linear(predicted, w["tcpgen.Wq_pred"])
        return self._bias(p_mdl, query, joint, memory, search)

    def rnnt_forward(self, features, target_ids, tree=None) -> ForwardResult:
        """Full (t, u) lattice of P_final and the transducer loss over it"""
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        targets = list(target_ids)
        predicted = self.initial_predictor_state()
        search = TreeSearchState()

        log_blank, log_emit = [], []
        distributions = []
        p_gens = []
        for u in range(len(targets) + 1):
            p_final, biasing = self.rnnt_joint(encoded, predicted, memory, search)
            distributions.append(p_final.data)
            log_blank.append(log(gather(p_final, self.vocab.null_id)))
            if biasing is not None:
                p_gens.extend(float(p) for p in np.atleast_1d(biasing.p_gen.data))
            if u == len(targets):
                break
            log_emit.append(log(gather(p_final, targets[u])))
            if memory is not None:
                search = advance(tree, search, targets[u])
            predicted = self.predictor_step(targets[u], predicted)

        blank_lattice = stack(log_blank, axis=1)
        emit_lattice = stack(log_emit, axis=1) if log_emit else Tensor(np.zeros((len(encoded.data), 0)))
        lattice = np.stack(distributions, axis=1)
        return ForwardResult(transducer_loss(blank_lattice, emit_lattice), lattice, p_gens)

    def forward(self, features, target_ids, tree=None) -> ForwardResult:
        if self.mode == ModelMode.AED:
            return self.aed_forward(features, target_ids, tree)
        return self.rnnt_forward(features, target_ids, tree)

    # Decoding

    def _trace_step(self, position, frame, parent_tokens, token, biasing):
        word_index, word_start = _word_position(parent_tokens, self.vocab)
        if biasing is None:
            return TraceStep(position, frame, token, word_index, word_start, 0.0, 0.0, 0.0, (), ())
        p_ptr = np.atleast_2d(biasing.p_ptr.data)[0]
        ranked = sorted(biasing.valid_ids, key=lambda i: (-p_ptr[i], i))[: config.TRACE_TOP_K]
        return TraceStep(
            position=position,
            frame=frame,
            token=token,
            word_index=word_index,
            word_start=word_start,
            p_gen_raw=float(np.ravel(biasing.p_gen_raw.data)[0]),
            p_gen=float(np.ravel(biasing.p_gen.data)[0]),
            p_gen_hat=float(np.ravel(biasing.p_gen_hat.data)[0]),
            valid_ids=tuple(sorted(biasing.valid_ids)),
            top_pointer=tuple((int(i), float(p_ptr[i])) for i in ranked),
        )

    def _result(self, hypothesis: Hypothesis) -> DecodeResult:
        tokens = tuple(t for t in hypothesis.tokens if t != self.vocab.eos_id)
        return DecodeResult(tokens, ids_to_text(tokens, self.vocab), hypothesis.score, hypothesis.trace)

    def aed_beam_search(
        self, features, tree=None, beam_width=config.DEFAULT_BEAM_WIDTH, max_length=config.DEFAULT_MAX_DECODE_LENGTH
    ):
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        beam = [Hypothesis((), 0.0, self.initial_decoder_state(), TreeSearchState())]
        finished = []
        for position in range(max_length):
            candidates = []
            for hypothesis in beam:
                previous = hypothesis.tokens[-1] if hypothesis.tokens else self.vocab.bos_id
                state, p_final, biasing = self.aed_step(encoded, memory, previous, hypothesis.state, hypothesis.search)
                probabilities = p_final.data
                for token in np.flatnonzero(probabilities > 0):
                    token = int(token)
                    score = hypothesis.score + math.log(probabilities[token])
                    tokens = hypothesis.tokens + (token,)
                    candidates.append(_Candidate(score, tokens, hypothesis, token, state, biasing))
            beam = []
            for candidate in sorted(candidates, key=_ranking)[:beam_width]:
                parent = candidate.parent
                search = advance(tree, parent.search, candidate.token) if memory is not None else parent.search
                step = self._trace_step(position, position, parent.tokens, candidate.token, candidate.biasing)
                trace = parent.trace + (step,)
                extended = Hypothesis(candidate.tokens, candidate.score, candidate.state, search, trace)
                (finished if candidate.token == self.vocab.eos_id else beam).append(extended)
            if not beam or len(finished) >= beam_width:
                break
        best = min(finished or beam, key=_ranking)
        logger.debug(f"AED beam search finished with {len(finished)} complete hypotheses")
        return self._result(best)

    def aed_greedy_search(self, features, tree=None, max_length=config.DEFAULT_MAX_DECODE_LENGTH):
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        hypothesis = Hypothesis((), 0.0, self.initial_decoder_state(), TreeSearchState())
        for position in range(max_length):
            previous = hypothesis.tokens[-1] if hypothesis.tokens else self.vocab.bos_id
            state, p_final, biasing = self.aed_step(encoded, memory, previous, hypothesis.state, hypothesis.search)
            token = int(np.argmax(p_final.data))
            search = advance(tree, hypothesis.search, token) if memory is not None else hypothesis.search
            hypothesis = Hypothesis(
                hypothesis.tokens + (token,),
                hypothesis.score + math.log(p_final.data[token]),
                state,
                search,
                hypothesis.trace + (self._trace_step(position, position, hypothesis.tokens, token, biasing),),
            )
            if token == self.vocab.eos_id:
                break
        return self._result(hypothesis)

    def rnnt_beam_search(self, features, tree=None, beam_width=config.DEFAULT_BEAM_WIDTH):
        """Time-synchronous search emitting at most one symbol per frame; equal token sequences are merged"""
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        null_id = self.vocab.null_id
        beam = [Hypothesis((), 0.0, self.initial_predictor_state(), TreeSearchState())]
        for t in range(len(encoded.data)):
            frame = getitem(encoded, t)
            merged = {}
            for hypothesis in beam:
                p_final, biasing = self.rnnt_joint(frame, hypothesis.state, memory, hypothesis.search)
                probabilities = p_final.data
                for token in np.flatnonzero(probabilities > 0):
                    token = int(token)
                    tokens = hypothesis.tokens if token == null_id else hypothesis.tokens + (token,)
                    score = hypothesis.score + math.log(probabilities[token])
                    if tokens in merged:
                        merged[tokens].score = float(np.logaddexp(merged[tokens].score, score))
                    else:
                        merged[tokens] = _Candidate(score, tokens, hypothesis, token, None, biasing)
            selected = sorted(merged.values(), key=_ranking)[:beam_width]
            beam = [self._extend_rnnt(candidate, tree, memory, t) for candidate in selected]
        return self._result(min(beam, key=_ranking))

    def _extend_rnnt(self, candidate, tree, memory, frame):
        parent = candidate.parent
        if candidate.token == self.vocab.null_id:
            return Hypothesis(candidate.tokens, candidate.score, parent.state, parent.search, parent.trace)
        search = advance(tree, parent.search, candidate.token) if memory is not None else parent.search
        step = self._trace_step(len(parent.tokens), frame, parent.tokens, candidate.token, candidate.biasing)
        state = self.predictor_step(candidate.token, parent.state)
        return Hypothesis(candidate.tokens, candidate.score, state, search, parent.trace + (step,))

    def rnnt_greedy_search(self, features, tree=None):
        encoded = self.encode(features)
        memory = self.tree_memory(tree)
        hypothesis = Hypothesis((), 0.0, self.initial_predictor_state(), TreeSearchState())
        for t in range(len(encoded.data)):
            p_final, biasing = self.rnnt_joint(getitem(encoded, t), hypothesis.state, memory, hypothesis.search)
            token = int(np.argmax(p_final.data))
            candidate = _Candidate(
                hypothesis.score + math.log(p_final.data[token]),
                hypothesis.tokens if token == self.vocab.null_id else hypothesis.tokens + (token,),
                hypothesis,
                token,
                None,
                biasing,
            )
            hypothesis = self._extend_rnnt(candidate, tree, memory, t)
        return self._result(hypothesis)

    def beam_search(
        self, features, tree=None, beam_width=config.DEFAULT_BEAM_WIDTH, max_length=config.DEFAULT_MAX_DECODE_LENGTH
    ):
        if beam_width < 1:
            raise ValueError("beam width must be at least 1")
        if self.mode == ModelMode.AED:
            return self.aed_beam_search(features, tree, beam_width, max_length)
        return self.rnnt_beam_search(features, tree, beam_width)

    def greedy_search(self, features, tree=None, max_length=config.DEFAULT_MAX_DECODE_LENGTH):
        if self.mode == ModelMode.AED:
            return self.aed_greedy_search(features, tree, max_length)
        return self.rnnt_greedy_search(features, tree)


@dataclass
class _Candidate:
    score: float
    tokens: Tuple[int, ...]
    parent: Hypothesis
    token: int
    state: object
    biasing: Optional[BiasingOutputs]


def generation_probability_trace(
    model: ToyModel,
    features,
    tree=None,
    beam_width=config.DEFAULT_BEAM_WIDTH,
    max_length=config.DEFAULT_MAX_DECODE_LENGTH,
):
    """Per emitted token: P_gen, the scaled P_gen, the valid set and the top pointer entries"""
    return model.beam_search(features, tree, beam_width, max_length).trace


def format_trace_step(utterance_id, step: TraceStep, vocab: Vocab):
    """One tab-separated trace line"""
    valid = ",".join(vocab.pieces[i] for i in step.valid_ids)
    pointer = ",".join(f"{vocab.pieces[i]}:{p:.6f}" for i, p in step.top_pointer)
    return "\t".join(
        [
            utterance_id,
            str(step.position),
            str(step.frame),
            vocab.pieces[step.token],
            str(step.word_index),
            str(int(step.word_start)),
            f"{step.p_gen_raw:.6f}",
            f"{step.p_gen:.6f}",
            f"{step.p_gen_hat:.6f}",
            valid,
            pointer,
        ]
    )


TRACE_COLUMNS = (
    "utterance",
    "position",
    "frame",
    "piece",
    "word_index",
    "word_start",
    "p_gen_raw",
    "p_gen",
    "p_gen_hat",
    "valid",
    "top_pointer",
)
TRACE_HEADER = "\t".join(TRACE_COLUMNS)
