"""
Tree-RNN node encodings for the prefix tree and their key/value projections.

Each node is encoded bottom-up as

    h(n) = ReLU(W1 y(n) + W2 * sum of h(child) over the children of n)

so the encoding of "tur" already carries the pieces of every biasing word that
continues from it. Keys and values are k = Wk h and v = Wv h. With the GNN switched
off the raw wordpiece embedding takes the place of h, which is plain TCPGen.
The out-of-list token is not a node: it has its own learned key and value.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .autodiff import Tensor, record
from .errors import DimensionMismatch, MissingForwardCache
from .prefix_tree import PrefixTree

logger = logging.getLogger(__name__)

GNN_PARAMETER_NAMES = ("W1", "W2", "embeddings", "root_embedding", "Wk", "Wv", "ool_key", "ool_value")


def uniform_init(rng, shape, fan_in):
    """uniform(-s, s) with s = 1/sqrt(fan_in)"""
    scale = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-scale, scale, size=shape)


@dataclass
class GnnParams:
    W1: np.ndarray
    W2: np.ndarray
    embeddings: np.ndarray
    root_embedding: np.ndarray
    Wk: np.ndarray
    Wv: np.ndarray
    ool_key: np.ndarray
    ool_value: np.ndarray

    @classmethod
    def initialize(cls, vocab_size, d_emb, d_tree, d_q, d_v, rng):
        return cls(
            W1=uniform_init(rng, (d_tree, d_emb), d_emb),
            W2=uniform_init(rng, (d_tree, d_tree), d_tree),
            embeddings=uniform_init(rng, (vocab_size, d_emb), d_emb),
            root_embedding=uniform_init(rng, (d_emb,), d_emb),
            Wk=uniform_init(rng, (d_q, d_tree), d_tree),
            Wv=uniform_init(rng, (d_v, d_tree), d_tree),
            ool_key=uniform_init(rng, (d_q,), d_tree),
            ool_value=uniform_init(rng, (d_v,), d_tree),
        )

    @classmethod
    def from_arrays(cls, arrays, prefix="gnn."):
        return cls(**{name: arrays[prefix + name] for name in GNN_PARAMETER_NAMES})

    def to_arrays(self, prefix="gnn."):
        return {prefix + name: getattr(self, name) for name in GNN_PARAMETER_NAMES}

    @property
    def d_emb(self):
        return self.embeddings.shape[1]

    @property
    def d_tree(self):
        return self.W1.shape[0]

    def check(self):
        """Raise DimensionMismatch unless every shape agrees and every value is finite"""
        d_tree, d_emb = self.W1.shape
        d_q, d_v = self.Wk.shape[0], self.Wv.shape[0]
        expected = {
            "W2": (d_tree, d_tree),
            "embeddings": (self.embeddings.shape[0], d_emb),
            "root_embedding": (d_emb,),
            "Wk": (d_q, d_tree),
            "Wv": (d_v, d_tree),
            "ool_key": (d_q,),
            "ool_value": (d_v,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionMismatch(f"gnn.{name} has shape {actual}, expected {shape}")
        for name in GNN_PARAMETER_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise DimensionMismatch(f"gnn.{name} contains non-finite values")
        return self


@dataclass
class TreeEncoding:
    """Node encodings plus what the backward pass needs from the forward pass"""

    encodings: np.ndarray
    inputs: np.ndarray
    order: List[int]
    use_gnn: bool
    pre_activations: Optional[np.ndarray] = None
    child_sums: Optional[np.ndarray] = None


def _node_inputs(tree, embeddings, root_embedding):
    if root_embedding.shape != (embeddings.shape[1],):
        raise DimensionMismatch(
            f"root embedding has shape {root_embedding.shape}, embeddings have width {embeddings.shape[1]}"
        )
    inputs = np.empty((len(tree), embeddings.shape[1]))
    for node_id, node in enumerate(tree.nodes):
        if node.wordpiece is None:
            inputs[node_id] = root_embedding
        elif node.wordpiece >= embeddings.shape[0]:
            raise DimensionMismatch(f"wordpiece id {node.wordpiece} outside an embedding table of {len(embeddings)}")
        else:
            inputs[node_id] = embeddings[node.wordpiece]
    return inputs


def _encode(tree, W1, W2, embeddings, root_embedding, use_gnn):
    inputs = _node_inputs(tree, embeddings, root_embedding)
    order = tree.post_order()
    if not use_gnn:
        return TreeEncoding(encodings=inputs.copy(), inputs=inputs, order=order, use_gnn=False)

    d_tree = W1.shape[0]
    if W1.shape[1] != inputs.shape[1] or W2.shape != (d_tree, d_tree):
        raise DimensionMismatch(f"W1 {W1.shape} / W2 {W2.shape} do not fit embeddings of width {inputs.shape[1]}")

    encodings = np.zeros((len(tree), d_tree))
    pre_activations = np.zeros((len(tree), d_tree))
    child_sums = np.zeros((len(tree), d_tree))
    for node_id in order:
        for child in tree.nodes[node_id].children.values():
            child_sums[node_id] += encodings[child]
        pre_activations[node_id] = W1 @ inputs[node_id] + W2 @ child_sums[node_id]
        encodings[node_id] = np.maximum(pre_activations[node_id], 0.0)
    return TreeEncoding(
        encodings=encodings,
        inputs=inputs,
        order=order,
        use_gnn=True,
        pre_activations=pre_activations,
        child_sums=child_sums,
    )


def encode_tree(tree: PrefixTree, params: GnnParams, use_gnn=True, store=True) -> TreeEncoding:
    """Encode every node, children before parents. With `store` the rows are also attached to the nodes."""
    encoding = _encode(tree, params.W1, params.W2, params.embeddings, params.root_embedding, use_gnn)
    if store:
        for node_id, node in enumerate(tree.nodes):
            node.encoding = encoding.encodings[node_id]
    return encoding


def _encode_backward(tree, W1, W2, vocab_size, cache, upstream):
    if cache is None:
        raise MissingForwardCache("encode_tree_backward needs the TreeEncoding of the forward pass")
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cache.encodings.shape:
        raise DimensionMismatch(f"upstream gradient {upstream.shape} does not match encodings {cache.encodings.shape}")

    d_emb = cache.inputs.shape[1]
    grad_embeddings = np.zeros((vocab_size, d_emb))
    grad_root = np.zeros(d_emb)

    if not cache.use_gnn:
        for node_id, node in enumerate(tree.nodes):
            if node.wordpiece is None:
                grad_root += upstream[node_id]
            else:
                grad_embeddings[node.wordpiece] += upstream[node_id]
        return {"W1": None, "W2": None, "embeddings": grad_embeddings, "root_embedding": grad_root}

    if cache.pre_activations is None or cache.child_sums is None:
        raise MissingForwardCache("forward pass did not keep its pre-activations")

    grad_W1 = np.zeros_like(W1)
    grad_W2 = np.zeros_like(W2)
    carried = upstream.copy()
    # Parents first, so a node has received every contribution before it passes its own on
    for node_id in reversed(cache.order):
        node = tree.nodes[node_id]
        grad_pre = carried[node_id] * (cache.pre_activations[node_id] > 0)
        grad_W1 += np.outer(grad_pre, cache.inputs[node_id])
        grad_W2 += np.outer(grad_pre, cache.child_sums[node_id])
        grad_input = W1.T @ grad_pre
        if node.wordpiece is None:
            grad_root += grad_input
        else:
            grad_embeddings[node.wordpiece] += grad_input
        if node.children:
            grad_child = W2.T @ grad_pre
            for child in node.children.values():
                carried[child] += grad_child
    return {"W1": grad_W1, "W2": grad_W2, "embeddings": grad_embeddings, "root_embedding": grad_root}


def encode_tree_backward(tree: PrefixTree, params: GnnParams, cache: TreeEncoding, upstream) -> Dict[str, np.ndarray]:
    """Exact gradients of the recursion given dLoss/dh for every node"""
    return _encode_backward(tree, params.W1, params.W2, params.embeddings.shape[0], cache, upstream)


def tree_encode_op(tree: PrefixTree, W1: Tensor, W2: Tensor, embeddings: Tensor, root_embedding: Tensor, use_gnn=True):
    """The tree-RNN as one tape operation, so node encodings train jointly with the recognizer"""
    cache = _encode(tree, W1.data, W2.data, embeddings.data, root_embedding.data, use_gnn)

    def backward(g):
        grads = _encode_backward(tree, W1.data, W2.data, embeddings.shape[0], cache, g)
        return grads["W1"], grads["W2"], grads["embeddings"], grads["root_embedding"]

    return record(cache.encodings, (W1, W2, embeddings, root_embedding), backward)


@dataclass
class KeyValueTable:
    """Keys and values for every tree node plus the OOL entry"""

    keys: np.ndarray
    values: np.ndarray
    ool_key: np.ndarray
    ool_value: np.ndarray

    def lookup(self, valid: Dict[int, int], ool_id) -> Tuple[List[int], np.ndarray, np.ndarray]:
        """Rows for one step: the valid pieces in the order given, then OOL"""
        ids = list(valid) + [ool_id]
        nodes = list(valid.values())
        keys = np.vstack([self.keys[nodes], self.ool_key[None, :]])
        values = np.vstack([self.values[nodes], self.ool_value[None, :]])
        return ids, keys, values


def project_keys_values(encoding, params: GnnParams) -> KeyValueTable:
    """k = Wk h and v = Wv h for every node"""
    encodings = encoding.encodings if isinstance(encoding, TreeEncoding) else np.asarray(encoding)
    if encodings.ndim != 2 or encodings.shape[1] != params.Wk.shape[1] or encodings.shape[1] != params.Wv.shape[1]:
        raise DimensionMismatch(
            f"encodings {encodings.shape} do not fit Wk {params.Wk.shape} / Wv {params.Wv.shape}"
        )
    return KeyValueTable(
        keys=encodings @ params.Wk.T,
        values=encodings @ params.Wv.T,
        ool_key=params.ool_key,
        ool_value=params.ool_value,
    )
