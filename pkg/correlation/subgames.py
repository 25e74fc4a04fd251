"""
Subgame decompositions and the induced partition of relevant pairs.

Subgames are numbered 1..J; class 0 is the pre-subgame remainder. A sequence
belongs to the subgame of its infoset (the empty sequence is pre-subgame), and
a relevant pair belongs to the class of whichever of its sequences lies in a
subgame, or to class 0 when neither does.
"""

import hashlib
import logging
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from efce_resolver.constants import PlanMessages
from efce_resolver.exceptions import InputError, InvariantViolation
from games.generators import PLACEMENT_DEPTH, battleship_frontier
from games.sequences import SequenceIndex, build_sequence_index
from games.tree import GameTree, PLAYERS
from .relevance import RelevantPairSet, relevant_pairs

logger = logging.getLogger(__name__)

PRE_SUBGAME = 0


class SubgameDecomposition:
    def __init__(self, tree: GameTree, node_sets: Sequence[Iterable[int]],
                 index: Optional[SequenceIndex] = None, pairs: Optional[RelevantPairSet] = None):
        self.tree = tree
        self.index = index or build_sequence_index(tree)
        self.pairs = pairs or relevant_pairs(tree, self.index)
        self.count = len(node_sets)

        node_subgame = np.zeros(tree.num_nodes, dtype=np.int64)
        for j, nodes in enumerate(node_sets, start=1):
            for v in nodes:
                v = int(v)
                if not 0 <= v < tree.num_nodes:
                    raise InputError(f"Subgame {j} names unknown node {v}.")
                if node_subgame[v] not in (PRE_SUBGAME, j):
                    raise InputError(PlanMessages.SUBGAME['OVERLAP'].format(
                        node=tree.labels[v], first=int(node_subgame[v]), second=j))
                node_subgame[v] = j
        self.node_subgame = node_subgame
        self._validate_closure()

        self.infoset_subgame: Dict[int, np.ndarray] = {}
        self.seq_subgame: Dict[int, np.ndarray] = {}
        for p in PLAYERS:
            labels = np.zeros(self.index.infoset_count(p), dtype=np.int64)
            for infoset in tree.infosets(p):
                classes = set(node_subgame[list(infoset.nodes)].tolist())
                if len(classes) > 1:
                    raise InputError(PlanMessages.SUBGAME['STRADDLE'].format(
                        player=p, infoset=infoset.label, subgame=max(classes)))
                labels[infoset.index] = classes.pop()
            self.infoset_subgame[p] = labels
            seq_labels = np.zeros(self.index.size(p), dtype=np.int64)
            has_infoset = self.index.seq_infoset[p] >= 0
            seq_labels[has_infoset] = labels[self.index.seq_infoset[p][has_infoset]]
            self.seq_subgame[p] = seq_labels

        self.pair_labels = self.pair_class(self.pairs.first, self.pairs.second)
        self.leaf_subgame = node_subgame[self.index.leaf_nodes]
        self._restricted: Dict[int, RelevantPairSet] = {}
        logger.info("Decomposition: J=%d, class sizes %s", self.count, self.class_sizes[:6].tolist())

    def _validate_closure(self) -> None:
        tree = self.tree
        for v in np.flatnonzero(self.node_subgame).tolist():
            j = self.node_subgame[v]
            for child in tree.children[v]:
                if self.node_subgame[child] != j:
                    raise InputError(PlanMessages.SUBGAME['NOT_CLOSED'].format(subgame=int(j), node=tree.labels[child]))

    def _check(self, j: int) -> None:
        if not 1 <= j <= self.count:
            raise InputError(PlanMessages.SUBGAME['UNKNOWN_SUBGAME'].format(subgame=j, count=self.count))

    def pair_class(self, first, second) -> np.ndarray:
        """Class of each pair; raises when a pair joins two different subgames."""
        c1 = self.seq_subgame[1][np.asarray(first)]
        c2 = self.seq_subgame[2][np.asarray(second)]
        spanning = (c1 > 0) & (c2 > 0) & (c1 != c2)
        if np.any(spanning):
            bad = int(np.flatnonzero(np.atleast_1d(spanning))[0])
            f, s = np.atleast_1d(first)[bad], np.atleast_1d(second)[bad]
            raise InvariantViolation(PlanMessages.SUBGAME['SPANNING_PAIR'].format(
                first=int(f), second=int(s), a=int(np.atleast_1d(c1)[bad]), b=int(np.atleast_1d(c2)[bad])))
        return np.maximum(c1, c2)

    @cached_property
    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.pair_labels, minlength=self.count + 1)

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256(self.node_subgame.tobytes()).hexdigest()[:16]
        return f'{self.count}:{digest}'

    def subgame_nodes(self, j: int) -> np.ndarray:
        self._check(j)
        return np.flatnonzero(self.node_subgame == j)

    def allowed(self, player: int, j: int) -> np.ndarray:
        """Mask of the player's sequences that index the restricted polytope of subgame j."""
        labels = self.seq_subgame[player]
        return (labels == PRE_SUBGAME) | (labels == j)

    def restricted_pairs(self, j: int) -> RelevantPairSet:
        self._check(j)
        if j not in self._restricted:
            self._restricted[j] = self.pairs.restrict(self.allowed(1, j), self.allowed(2, j))
        return self._restricted[j]

    def subgame_sequences(self, player: int, j: int) -> np.ndarray:
        return np.flatnonzero(self.seq_subgame[player] == j)

    def pre_sequences(self, player: int) -> np.ndarray:
        return np.flatnonzero(self.seq_subgame[player] == PRE_SUBGAME)

    def is_pre_subgame(self, player: int, sequence: int) -> bool:
        return self.seq_subgame[player][sequence] == PRE_SUBGAME

    def triggers(self, player: int, j: int = PRE_SUBGAME) -> List[int]:
        """Non-empty sequences of class ``j`` whose infoset offers an alternative."""
        out = []
        for sequence in np.flatnonzero(self.seq_subgame[player] == j).tolist():
            if sequence == 0:
                continue
            if self.index.action_count(player, self.index.infoset_of(player, sequence)) > 1:
                out.append(sequence)
        return out

    def heads(self, player: int, j: int) -> Tuple[int, ...]:
        return head_infosets(self, player, j)

    def leaves_in(self, j: int) -> np.ndarray:
        """Positions (into the index leaf arrays) of the leaves of subgame j."""
        return np.flatnonzero(self.leaf_subgame == j)

    def __repr__(self):
        return f"SubgameDecomposition(J={self.count})"


def head_infosets(decomp: SubgameDecomposition, player: int, j: int) -> Tuple[int, ...]:
    """Infosets of subgame j whose parent sequence is pre-subgame."""
    decomp._check(j)
    labels = decomp.infoset_subgame[player]
    parents = decomp.index.infoset_parent[player]
    heads = (labels == j) & (decomp.seq_subgame[player][parents] == PRE_SUBGAME)
    return tuple(np.flatnonzero(heads).tolist())


def partition_pairs(decomp: SubgameDecomposition, pairs: RelevantPairSet) -> np.ndarray:
    return decomp.pair_class(pairs.first, pairs.second)


def restrict_pairs(decomp: SubgameDecomposition, j: int) -> RelevantPairSet:
    return decomp.restricted_pairs(j)


def _max_rounds(tree: GameTree) -> int:
    return (int(tree.depths.max()) - PLACEMENT_DEPTH) // 2


def decompose_by_public_state(tree: GameTree, boundary: Union[int, Sequence[Iterable[int]]],
                              index: Optional[SequenceIndex] = None,
                              pairs: Optional[RelevantPairSet] = None) -> SubgameDecomposition:
    """Decompose along explicit node sets, or after ``boundary`` Battleship rounds."""
    if isinstance(boundary, (int, np.integer)):
        turns = _max_rounds(tree)
        if not 1 <= boundary < turns:
            raise InputError(PlanMessages.SUBGAME['ROUNDS'].format(turns=turns, rounds=boundary))
        node_sets = battleship_frontier(tree, int(boundary))
    else:
        node_sets = [list(nodes) for nodes in boundary]
    return SubgameDecomposition(tree, node_sets, index=index, pairs=pairs)


def dump_decomposition(decomp: SubgameDecomposition) -> str:
    lines = []
    for j in range(1, decomp.count + 1):
        labels = ' '.join(decomp.tree.labels[v] for v in decomp.subgame_nodes(j))
        lines.append(f'subgame {j}: {labels}')
    return '\n'.join(lines) + '\n'


def parse_decomposition(tree: GameTree, text: str, index: Optional[SequenceIndex] = None,
                        pairs: Optional[RelevantPairSet] = None) -> SubgameDecomposition:
    sets: Dict[int, List[int]] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        head, sep, body = line.partition(':')
        parts = head.split()
        if not sep or len(parts) != 2 or parts[0] != 'subgame' or not parts[1].isdigit():
            raise InputError(PlanMessages.SUBGAME['BAD_LINE'].format(line=line_number))
        try:
            sets[int(parts[1])] = [tree.node_by_label[label] for label in body.split()]
        except KeyError as exc:
            raise InputError(f"Decomposition line {line_number} names unknown node {exc}.") from exc
    if sorted(sets) != list(range(1, len(sets) + 1)):
        raise InputError(PlanMessages.SUBGAME['BAD_LINE'].format(line='numbering'))
    return SubgameDecomposition(tree, [sets[j] for j in sorted(sets)], index=index, pairs=pairs)


def save_decomposition(decomp: SubgameDecomposition, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_decomposition(decomp), encoding='utf-8')


def load_decomposition(tree: GameTree, path, index: Optional[SequenceIndex] = None,
                       pairs: Optional[RelevantPairSet] = None) -> SubgameDecomposition:
    return parse_decomposition(tree, Path(path).read_text(encoding='utf-8'), index=index, pairs=pairs)
