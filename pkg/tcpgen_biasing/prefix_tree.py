"""
Wordpiece prefix tree over a biasing list and the per-hypothesis search state.

The search keeps a single node per hypothesis. From the root (or from a word-end
node, which is always a leaf) any first piece of a biasing word is valid; from an
interior node only its children are. On a mismatch the search restarts from the
root's children before falling back to the root itself.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional

from .utils import atomic_write
from .vocab import Vocab, tokenize_word

logger = logging.getLogger(__name__)

ROOT_ID = 0


@dataclass
class TreeNode:
    wordpiece: Optional[int]
    parent: int
    is_word_end: bool = False
    children: Dict[int, int] = field(default_factory=dict)
    encoding: Optional[object] = None


@dataclass
class PrefixTree:
    nodes: List[TreeNode]
    word_count: int
    root_id: int = ROOT_ID

    def __len__(self):
        return len(self.nodes)

    @property
    def root(self):
        return self.nodes[self.root_id]

    def walk(self, pieces) -> Optional[int]:
        """Node reached by following `pieces` from the root, or None if the path leaves the tree"""
        node_id = self.root_id
        for piece in pieces:
            node_id = self.nodes[node_id].children.get(piece)
            if node_id is None:
                return None
        return node_id

    def subtree(self, node_id) -> List[int]:
        """Ids of `node_id` and all its descendants"""
        found = []
        stack = [node_id]
        while stack:
            current = stack.pop()
            found.append(current)
            stack.extend(self.nodes[current].children.values())
        return found

    def post_order(self) -> List[int]:
        """Children before parents, iteratively so deep trees never hit the recursion limit"""
        order = []
        stack = [(self.root_id, False)]
        while stack:
            node_id, expanded = stack.pop()
            if expanded:
                order.append(node_id)
                continue
            stack.append((node_id, True))
            for child in reversed(list(self.nodes[node_id].children.values())):
                stack.append((child, False))
        return order


@dataclass(frozen=True)
class TreeSearchState:
    current_node: int = ROOT_ID
    at_root: bool = True


def build_tree(biasing_words: Iterable[str], vocab: Vocab) -> PrefixTree:
    """Insert the tokenization of every distinct biasing word, merging shared prefixes"""
    nodes = [TreeNode(wordpiece=None, parent=-1)]
    seen = set()
    for word in biasing_words:
        normalized = vocab.normalize(word.strip())
        if not normalized or normalized in seen:
            continue
        seen.add(normalized)

        node_id = ROOT_ID
        for piece in tokenize_word(normalized, vocab):
            child = nodes[node_id].children.get(piece)
            if child is None:
                child = len(nodes)
                nodes.append(TreeNode(wordpiece=piece, parent=node_id, is_word_end=vocab.is_word_end(piece)))
                nodes[node_id].children[piece] = child
            node_id = child

    tree = PrefixTree(nodes=nodes, word_count=len(seen))
    if tree.word_count == 0:
        logger.info("Empty biasing list; the tree is just a root and TCPGen will always point at OOL")
    else:
        logger.debug(f"Built prefix tree with {len(tree)} nodes for {tree.word_count} biasing words")
    return tree


def valid_nodes(tree: PrefixTree, state: TreeSearchState) -> Dict[int, int]:
    """Wordpiece to node map of the valid next pieces, ordered by wordpiece id"""
    node = tree.nodes[state.current_node]
    if state.at_root or node.is_word_end or state.current_node == tree.root_id:
        candidates = tree.root.children
    else:
        candidates = node.children
    return {piece: candidates[piece] for piece in sorted(candidates)}


def valid_set(tree: PrefixTree, state: TreeSearchState, vocab: Vocab) -> FrozenSet[int]:
    """Y^tree for this step; OOL is always a member"""
    return frozenset(valid_nodes(tree, state)) | {vocab.ool_id}


def advance(tree: PrefixTree, state: TreeSearchState, emitted: int) -> TreeSearchState:
    """Move the search after `emitted` was output. Total over every (state, wordpiece) pair."""
    node = tree.nodes[state.current_node]
    if not state.at_root and emitted in node.children:
        target = node.children[emitted]
    elif emitted in tree.root.children:
        target = tree.root.children[emitted]
    else:
        return TreeSearchState()
    return TreeSearchState(current_node=target, at_root=tree.nodes[target].is_word_end)


def advance_through(tree: PrefixTree, pieces: Iterable[int], state: Optional[TreeSearchState] = None):
    """Search state after each piece of `pieces`, starting from `state` (the root by default)"""
    state = state or TreeSearchState()
    states = []
    for piece in pieces:
        state = advance(tree, state, piece)
        states.append(state)
    return states


def iter_words(tree: PrefixTree, vocab: Vocab):
    """Yield every biasing word spelled by a root-to-word-end path"""
    stack = [(tree.root_id, "")]
    while stack:
        node_id, prefix = stack.pop()
        node = tree.nodes[node_id]
        if node.is_word_end:
            yield prefix
        for piece, child in node.children.items():
            stack.append((child, prefix + vocab.surface(piece)))


def contains_word(tree: PrefixTree, word: str, vocab: Vocab) -> bool:
    node_id = tree.walk(tokenize_word(word, vocab))
    return node_id is not None and tree.nodes[node_id].is_word_end


def dump_lines(tree: PrefixTree, vocab: Vocab) -> List[str]:
    """`node_id parent_id wordpiece is_word_end` per node; the root is written as `0 -1 <root> 0`"""
    lines = []
    for node_id, node in enumerate(tree.nodes):
        piece = "<root>" if node.wordpiece is None else vocab.pieces[node.wordpiece]
        lines.append(f"{node_id} {node.parent} {piece} {int(node.is_word_end)}")
    return lines


def dump_tree(tree: PrefixTree, vocab: Vocab, path):
    with atomic_write(path) as file:
        file.write("\n".join(dump_lines(tree, vocab)) + "\n")
