"""
Sequence-form view of a game tree.

Sequences of each player are numbered with the empty sequence at 0 followed by
one entry per (infoset, action), appended when the infoset is first reached in
the depth-first traversal. A parent sequence therefore always has a smaller id
than its descendants, and the sequences of one infoset are contiguous.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from efce_resolver.constants import GameMessages
from efce_resolver.exceptions import GameStructureError, InputError
from .tree import GameTree, PLAYERS

logger = logging.getLogger(__name__)

EMPTY = 0
EMPTY_LABEL = '∅'


class SequenceIndex:
    """Per-player sequence lists, parent maps, successor relation and leaf map."""

    def __init__(self, tree: GameTree):
        self.tree = tree
        n = tree.num_nodes
        node_sequences = np.zeros((n, 2), dtype=np.int64)

        seq_infoset = {p: [-1] for p in PLAYERS}
        seq_action = {p: [-1] for p in PLAYERS}
        infoset_first = {p: np.full(len(tree.infosets(p)), -1, dtype=np.int64) for p in PLAYERS}
        infoset_parent = {p: np.full(len(tree.infosets(p)), -1, dtype=np.int64) for p in PLAYERS}

        for v in range(n):
            if v > 0:
                parent = int(tree.parents[v])
                node_sequences[v] = node_sequences[parent]
                owner = int(tree.players[parent])
                infoset = int(tree.node_infosets[parent])
                node_sequences[v, owner - 1] = infoset_first[owner][infoset] + tree.parent_actions[v]
            player = int(tree.players[v])
            if player == 0:
                continue
            infoset = int(tree.node_infosets[v])
            current = node_sequences[v, player - 1]
            if infoset_first[player][infoset] < 0:
                infoset_first[player][infoset] = len(seq_infoset[player])
                infoset_parent[player][infoset] = current
                for a in range(tree.infoset(player, infoset).action_count):
                    seq_infoset[player].append(infoset)
                    seq_action[player].append(a)
            elif infoset_parent[player][infoset] != current:
                raise GameStructureError(
                    f"Infoset {player}:{infoset} is reached with different own histories; "
                    f"the game does not have perfect recall.", tree.labels[v])

        self.node_sequences = node_sequences
        self.seq_infoset = {p: np.asarray(seq_infoset[p], dtype=np.int64) for p in PLAYERS}
        self.seq_action = {p: np.asarray(seq_action[p], dtype=np.int64) for p in PLAYERS}
        self.infoset_first = infoset_first
        self.infoset_parent = infoset_parent
        self.seq_parent = {}
        self.child_infosets: Dict[int, List[List[int]]] = {}
        for p in PLAYERS:
            parent = np.full(len(seq_infoset[p]), -1, dtype=np.int64)
            has_infoset = self.seq_infoset[p] >= 0
            parent[has_infoset] = infoset_parent[p][self.seq_infoset[p][has_infoset]]
            self.seq_parent[p] = parent
            children = [[] for _ in range(len(seq_infoset[p]))]
            for infoset, seq in enumerate(infoset_parent[p]):
                children[int(seq)].append(infoset)
            self.child_infosets[p] = children

        leaves = tree.leaves
        self.leaf_nodes = leaves
        self.leaf_sequences = {p: node_sequences[leaves, p - 1].copy() for p in PLAYERS}
        self.leaf_payoffs = {p: tree.payoffs[leaves, p - 1].copy() for p in PLAYERS}
        self.leaf_of_pair: Dict[Tuple[int, int], int] = {}
        for position, node in enumerate(leaves):
            pair = (int(self.leaf_sequences[1][position]), int(self.leaf_sequences[2][position]))
            if pair in self.leaf_of_pair:
                raise GameStructureError(
                    f"Leaves '{tree.labels[self.leaf_of_pair[pair]]}' and '{tree.labels[node]}' "
                    f"share the sequence pair {pair}.", tree.labels[node])
            self.leaf_of_pair[pair] = int(node)

        self._leaf_groups = {p: self._group_leaves(p) for p in PLAYERS}
        self._subtree_cache: Dict[Tuple[int, int], Tuple[int, ...]] = {}
        self._prefix_cache: Dict[int, sp.csr_matrix] = {}
        logger.debug("Sequence index: |Σ1|=%d |Σ2|=%d leaves=%d", self.size(1), self.size(2), len(leaves))

    def _group_leaves(self, player: int):
        order = np.argsort(self.leaf_sequences[player], kind='stable')
        counts = np.bincount(self.leaf_sequences[player], minlength=self.size(player))
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return order, indptr

    def size(self, player: int) -> int:
        return len(self.seq_infoset[player])

    def infoset_count(self, player: int) -> int:
        return len(self.infoset_first[player])

    def sequences_of(self, player: int, infoset: int) -> range:
        first = int(self.infoset_first[player][infoset])
        return range(first, first + self.tree.infoset(player, infoset).action_count)

    def action_count(self, player: int, infoset: int) -> int:
        return self.tree.infoset(player, infoset).action_count

    def infoset_of(self, player: int, sequence: int) -> int:
        return int(self.seq_infoset[player][sequence])

    def parent_of(self, player: int, sequence: int) -> int:
        return int(self.seq_parent[player][sequence])

    def successors(self, player: int, sequence: int) -> List[int]:
        """Immediate successors of ``sequence`` (the ≺₁ relation)."""
        out = []
        for infoset in self.child_infosets[player][sequence]:
            out.extend(self.sequences_of(player, infoset))
        return out

    def is_prefix(self, player: int, ancestor: int, sequence: int) -> bool:
        """True when ``ancestor`` ⊑ ``sequence``."""
        while sequence > ancestor:
            sequence = int(self.seq_parent[player][sequence])
        return sequence == ancestor

    def label(self, player: int, sequence: int) -> str:
        if sequence == EMPTY:
            return EMPTY_LABEL
        infoset = self.tree.infoset(player, int(self.seq_infoset[player][sequence]))
        return infoset.actions[int(self.seq_action[player][sequence])]

    def sequence_by_label(self, player: int, label: str) -> int:
        for sequence in range(self.size(player)):
            if self.label(player, sequence) == label:
                return sequence
        raise InputError(f"Player {player} has no sequence labelled '{label}'.")

    def payoff(self, first: int, second: int) -> Tuple[float, float]:
        node = self.leaf_of_pair[(first, second)]
        return float(self.tree.payoffs[node, 0]), float(self.tree.payoffs[node, 1])

    def leaves_at(self, player: int, sequence: int) -> np.ndarray:
        """Positions (into ``leaf_nodes``) of leaves whose ``player`` sequence is ``sequence``."""
        order, indptr = self._leaf_groups[player]
        return order[indptr[sequence]:indptr[sequence + 1]]

    def subtree_infosets(self, player: int, sequence: int) -> Tuple[int, ...]:
        """Infosets of ``player`` below ``sequence`` in preorder."""
        key = (player, sequence)
        cached = self._subtree_cache.get(key)
        if cached is not None:
            return cached
        out = []
        stack = list(reversed(self.child_infosets[player][sequence]))
        while stack:
            infoset = stack.pop()
            out.append(infoset)
            for seq in reversed(self.sequences_of(player, infoset)):
                stack.extend(reversed(self.child_infosets[player][seq]))
        result = tuple(out)
        self._subtree_cache[key] = result
        return result

    def prefix_matrix(self, player: int) -> sp.csr_matrix:
        """M[s, t] = 1 when s is a prefix of t; M @ c sums c over each sequence's extensions."""
        cached = self._prefix_cache.get(player)
        if cached is None:
            rows, cols = [], []
            parents = self.seq_parent[player]
            for t in range(self.size(player)):
                s = t
                while s >= 0:
                    rows.append(s)
                    cols.append(t)
                    s = int(parents[s])
            n = self.size(player)
            cached = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            self._prefix_cache[player] = cached
        return cached


def build_sequence_index(tree: GameTree) -> SequenceIndex:
    return SequenceIndex(tree)


@dataclass(frozen=True)
class SequenceFormStrategy:
    player: int
    values: np.ndarray

    def flow_residual(self, index: SequenceIndex) -> float:
        residual = abs(float(self.values[EMPTY]) - 1.0)
        for infoset in range(index.infoset_count(self.player)):
            seqs = index.sequences_of(self.player, infoset)
            parent = index.infoset_parent[self.player][infoset]
            residual = max(residual, abs(float(self.values[seqs.start:seqs.stop].sum() - self.values[parent])))
        return residual


def uniform_behavioral(tree: GameTree, player: int) -> List[np.ndarray]:
    return [np.full(i.action_count, 1.0 / i.action_count) for i in tree.infosets(player)]


def behavioral_to_sequence_form(
    tree: GameTree,
    behavioral,
    player: int,
    index: Optional[SequenceIndex] = None,
    tol: float = 1e-9,
) -> SequenceFormStrategy:
    """Convert per-infoset action distributions into realization weights.

    ``behavioral`` is indexed by infoset id (a list or a mapping).
    """
    index = index or SequenceIndex(tree)
    x = np.zeros(index.size(player))
    x[EMPTY] = 1.0
    for infoset in range(index.infoset_count(player)):
        expected = index.action_count(player, infoset)
        probs = np.asarray(behavioral[infoset], dtype=np.float64)
        if probs.shape != (expected,):
            raise InputError(GameMessages.INPUT['BEHAVIORAL_SIZE'].format(
                infoset=infoset, player=player, got=probs.size, expected=expected))
        if probs.min() < -tol or abs(probs.sum() - 1.0) > tol:
            raise InputError(GameMessages.INPUT['NOT_NORMALIZED'].format(infoset=infoset, player=player))
        seqs = index.sequences_of(player, infoset)
        x[seqs.start:seqs.stop] = x[index.infoset_parent[player][infoset]] * probs
    return SequenceFormStrategy(player, x)


def pure_behavioral(tree: GameTree, player: int, choice: Mapping[int, int] = None) -> List[np.ndarray]:
    """Point-mass distributions; action 0 unless ``choice`` overrides an infoset."""
    choice = choice or {}
    out = []
    for infoset in tree.infosets(player):
        probs = np.zeros(infoset.action_count)
        probs[choice.get(infoset.index, 0)] = 1.0
        out.append(probs)
    return out
