"""
Infoset connectivity and relevant sequence pairs.

Two infosets of different players are connected when some root-to-leaf path
passes through nodes of both. A pair of sequences is relevant when either is
the empty sequence or their infosets are connected.
"""

import logging
from typing import Dict, Optional

import numpy as np

from efce_resolver.constants import PlanMessages
from efce_resolver.exceptions import InputError
from games.sequences import EMPTY, SequenceIndex
from games.tree import GameTree, LEAF, PLAYERS, opponent

logger = logging.getLogger(__name__)


class Connectivity:
    """Symmetric infoset connection relation, stored as sorted partner arrays."""

    def __init__(self, tree: GameTree):
        self.tree = tree
        n = tree.num_nodes
        nearest = {p: np.full(n, -1, dtype=np.int64) for p in PLAYERS}
        for v in range(1, n):
            parent = int(tree.parents[v])
            owner = int(tree.players[parent])
            for p in PLAYERS:
                nearest[p][v] = parent if owner == p else nearest[p][parent]

        firsts, seconds = [], []
        for v in range(n):
            player = int(tree.players[v])
            if player == LEAF:
                continue
            own = int(tree.node_infosets[v])
            u = int(nearest[opponent(player)][v])
            while u >= 0:
                other = int(tree.node_infosets[u])
                if player == 1:
                    firsts.append(own)
                    seconds.append(other)
                else:
                    firsts.append(other)
                    seconds.append(own)
                u = int(nearest[opponent(player)][u])

        counts = {p: len(tree.infosets(p)) for p in PLAYERS}
        keys = np.unique(np.asarray(firsts, dtype=np.int64) * max(counts[2], 1) + np.asarray(seconds, dtype=np.int64))
        pairs1, pairs2 = keys // max(counts[2], 1), keys % max(counts[2], 1)
        self._partners: Dict[int, list] = {
            1: self._group(pairs1, pairs2, counts[1]),
            2: self._group(*self._by_second(pairs1, pairs2), counts[2]),
        }
        self.pair_count = len(keys)
        logger.debug("Connectivity: %d connected infoset pairs", self.pair_count)

    @staticmethod
    def _by_second(first, second):
        order = np.lexsort((first, second))
        return second[order], first[order]

    @staticmethod
    def _group(owners, partners, count):
        bounds = np.searchsorted(owners, np.arange(count + 1))
        return [partners[bounds[i]:bounds[i + 1]] for i in range(count)]

    def partners(self, player: int, infoset: int) -> np.ndarray:
        """Opponent infosets connected to ``infoset``, ascending."""
        return self._partners[player][infoset]

    def connected(self, first: int, second: int) -> bool:
        partners = self._partners[1][first]
        pos = np.searchsorted(partners, second)
        return bool(pos < len(partners) and partners[pos] == second)


class RelevantPairSet:
    """Row-major ordered relevant pairs with vectorised reverse lookup."""

    def __init__(self, index: SequenceIndex, first: np.ndarray, second: np.ndarray,
                 connectivity: Optional[Connectivity] = None):
        self.index = index
        self.connectivity = connectivity
        self.first = np.asarray(first, dtype=np.int64)
        self.second = np.asarray(second, dtype=np.int64)
        self.width = index.size(2)
        self.keys = self.first * self.width + self.second
        if len(self.keys) > 1 and np.any(np.diff(self.keys) <= 0):
            order = np.argsort(self.keys, kind='stable')
            self.first, self.second, self.keys = self.first[order], self.second[order], self.keys[order]
        self._column_order = None

    def __len__(self):
        return len(self.keys)

    def __iter__(self):
        return zip(self.first.tolist(), self.second.tolist())

    def __repr__(self):
        return f"RelevantPairSet({len(self)} pairs)"

    def index_of(self, first, second) -> np.ndarray:
        """Dense positions of the given pairs; -1 where a pair is absent."""
        keys = np.asarray(first, dtype=np.int64) * self.width + np.asarray(second, dtype=np.int64)
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        found = (self.keys[pos] == keys) if len(self.keys) else np.zeros(np.shape(keys), dtype=bool)
        return np.where(found, pos, -1)

    def position(self, first: int, second: int) -> int:
        pos = int(self.index_of(first, second))
        if pos < 0:
            raise InputError(PlanMessages.PLAN['MISSING_PAIR'].format(first=first, second=second))
        return pos

    def contains(self, first: int, second: int) -> bool:
        return int(self.index_of(first, second)) >= 0

    def row(self, first: int) -> slice:
        """Positions of all pairs whose first sequence is ``first``."""
        lo = np.searchsorted(self.keys, first * self.width)
        hi = np.searchsorted(self.keys, (first + 1) * self.width)
        return slice(int(lo), int(hi))

    def column(self, second: int) -> np.ndarray:
        """Positions of all pairs whose second sequence is ``second``, by first sequence."""
        if self._column_order is None:
            self._column_order = np.lexsort((self.first, self.second))
            self._column_keys = self.second[self._column_order]
        lo = np.searchsorted(self._column_keys, second)
        hi = np.searchsorted(self._column_keys, second + 1)
        return self._column_order[lo:hi]

    def restrict(self, allowed1: np.ndarray, allowed2: np.ndarray) -> 'RelevantPairSet':
        """Pairs whose sequences are both allowed by the boolean masks."""
        keep = allowed1[self.first] & allowed2[self.second]
        return RelevantPairSet(self.index, self.first[keep], self.second[keep], self.connectivity)


def relevant_pairs(tree: GameTree, index: SequenceIndex, connectivity: Optional[Connectivity] = None) -> RelevantPairSet:
    connectivity = connectivity or Connectivity(tree)
    n1, n2 = index.size(1), index.size(2)
    firsts = [np.zeros(n2, dtype=np.int64)]
    seconds = [np.arange(n2, dtype=np.int64)]
    for sequence in range(1, n1):
        partners = connectivity.partners(1, index.infoset_of(1, sequence))
        columns = [np.asarray([EMPTY], dtype=np.int64)]
        for infoset in partners.tolist():
            seqs = index.sequences_of(2, infoset)
            columns.append(np.arange(seqs.start, seqs.stop, dtype=np.int64))
        column = np.concatenate(columns)
        firsts.append(np.full(len(column), sequence, dtype=np.int64))
        seconds.append(column)
    pairs = RelevantPairSet(index, np.concatenate(firsts), np.concatenate(seconds), connectivity)
    logger.info("Relevant pairs: %d of %d x %d sequence pairs", len(pairs), n1, n2)
    return pairs
