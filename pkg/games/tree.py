"""
Two-player, no-chance extensive-form game trees.

Trees are assembled with ``GameTreeBuilder`` and frozen into a ``GameTree`` whose
nodes are renumbered in depth-first preorder, so the subtree of node ``v`` is the
contiguous range ``[v, tree.subtree_end[v])``. Infosets are dense per player in
order of first visit.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from efce_resolver.constants import GameMessages
from efce_resolver.exceptions import GameStructureError

logger = logging.getLogger(__name__)

PLAYERS = (1, 2)
LEAF = 0


def opponent(player: int) -> int:
    return 3 - player


@dataclass(frozen=True)
class Infoset:
    player: int
    index: int
    label: str
    actions: Tuple[str, ...]
    nodes: Tuple[int, ...]

    @property
    def action_count(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class RecallViolation:
    """Two nodes of one infoset whose owner remembers different own histories.

    ``condition`` is 1 when the histories pass through distinct infosets and 2
    when they pass through the same infoset with different actions.
    """
    condition: int
    player: int
    infoset: int
    first_node: str
    second_node: str


class GameTree:
    """Immutable game tree. Build it with ``GameTreeBuilder``."""

    def __init__(self, labels, players, node_infosets, children, parents, parent_actions, payoffs, infosets):
        self.labels: Tuple[str, ...] = labels
        self.players: np.ndarray = players
        self.node_infosets: np.ndarray = node_infosets
        self.children: Tuple[Tuple[int, ...], ...] = children
        self.parents: np.ndarray = parents
        self.parent_actions: np.ndarray = parent_actions
        self.payoffs: np.ndarray = payoffs
        self._infosets: Dict[int, Tuple[Infoset, ...]] = infosets
        self.root = 0
        self.node_by_label = {label: v for v, label in enumerate(labels)}
        self.subtree_end = self._subtree_ends()
        self.depths = self._depths()

    def _subtree_ends(self) -> np.ndarray:
        ends = np.arange(1, self.num_nodes + 1, dtype=np.int64)
        for v in range(self.num_nodes - 1, -1, -1):
            if self.children[v]:
                ends[v] = ends[self.children[v][-1]]
        return ends

    def _depths(self) -> np.ndarray:
        depths = np.zeros(self.num_nodes, dtype=np.int64)
        for v in range(1, self.num_nodes):
            depths[v] = depths[self.parents[v]] + 1
        return depths

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.players == LEAF)

    def is_leaf(self, node: int) -> bool:
        return self.players[node] == LEAF

    def infosets(self, player: int) -> Tuple[Infoset, ...]:
        return self._infosets[player]

    def infoset(self, player: int, index: int) -> Infoset:
        return self._infosets[player][index]

    def infoset_at(self, node: int) -> Optional[Infoset]:
        player = int(self.players[node])
        if player == LEAF:
            return None
        return self._infosets[player][self.node_infosets[node]]

    def is_ancestor(self, ancestor: int, node: int) -> bool:
        """True when ``ancestor`` lies on the root path of ``node`` (inclusive)."""
        return ancestor <= node < self.subtree_end[ancestor]

    def path(self, node: int) -> List[int]:
        """Nodes from the root down to ``node``."""
        out = []
        while node >= 0:
            out.append(node)
            node = int(self.parents[node])
        out.reverse()
        return out

    def action_path(self, node: int) -> List[str]:
        """Action labels taken from the root to ``node``."""
        labels = []
        for child in self.path(node)[1:]:
            parent = int(self.parents[child])
            labels.append(self.infoset_at(parent).actions[self.parent_actions[child]])
        return labels

    def __repr__(self):
        return (f"GameTree(nodes={self.num_nodes}, leaves={len(self.leaves)}, "
                f"infosets=({len(self._infosets[1])}, {len(self._infosets[2])}))")


@dataclass
class _RawNode:
    label: str
    player: int
    infoset: Optional[str]
    actions: Tuple[str, ...]
    children: Tuple[str, ...]
    payoff: Tuple[float, float]


class GameTreeBuilder:
    """Collects nodes by label and validates them into a ``GameTree``."""

    def __init__(self):
        self._nodes: Dict[str, _RawNode] = {}

    def __len__(self):
        return len(self._nodes)

    def add_decision(self, label, player: int, infoset, actions: Sequence[str], children: Sequence) -> None:
        label = str(label)
        if player not in PLAYERS:
            raise GameStructureError(GameMessages.TREE['BAD_PLAYER'].format(node=label, player=player), label)
        if not actions:
            raise GameStructureError(GameMessages.TREE['NO_ACTIONS'].format(node=label), label)
        if len(actions) != len(children):
            raise GameStructureError(
                GameMessages.TREE['ACTION_COUNT'].format(node=label, actions=len(actions), children=len(children)),
                label,
            )
        self._add(_RawNode(label, player, str(infoset), tuple(actions), tuple(str(c) for c in children), (0.0, 0.0)))

    def add_leaf(self, label, u1: float, u2: float) -> None:
        label = str(label)
        self._add(_RawNode(label, LEAF, None, (), (), (float(u1), float(u2))))

    def _add(self, node: _RawNode) -> None:
        if node.label in self._nodes:
            raise GameStructureError(GameMessages.TREE['DUPLICATE_NODE'].format(node=node.label), node.label)
        self._nodes[node.label] = node

    def build(self, root) -> GameTree:
        root = str(root)
        if root not in self._nodes:
            raise GameStructureError(GameMessages.TREE['UNKNOWN_ROOT'].format(node=root), root)

        parent_of: Dict[str, str] = {}
        for node in self._nodes.values():
            for child in node.children:
                if child not in self._nodes:
                    raise GameStructureError(
                        GameMessages.TREE['UNKNOWN_CHILD'].format(node=node.label, child=child), node.label)
                if child == root:
                    raise GameStructureError(GameMessages.TREE['CYCLE'].format(node=child), child)
                if child in parent_of:
                    raise GameStructureError(GameMessages.TREE['DUPLICATE_CHILD'].format(child=child), child)
                parent_of[child] = node.label

        order: List[str] = []
        position: Dict[str, int] = {}
        stack = [root]
        while stack:
            label = stack.pop()
            if label in position:
                raise GameStructureError(GameMessages.TREE['CYCLE'].format(node=label), label)
            position[label] = len(order)
            order.append(label)
            stack.extend(reversed(self._nodes[label].children))

        if len(order) != len(self._nodes):
            orphan = next(label for label in self._nodes if label not in position)
            raise GameStructureError(GameMessages.TREE['ORPHAN'].format(node=orphan), orphan)

        n = len(order)
        players = np.zeros(n, dtype=np.int8)
        node_infosets = np.full(n, -1, dtype=np.int64)
        parents = np.full(n, -1, dtype=np.int64)
        parent_actions = np.full(n, -1, dtype=np.int64)
        payoffs = np.zeros((n, 2), dtype=np.float64)
        children: List[Tuple[int, ...]] = []

        infoset_ids: Dict[Tuple[int, str], int] = {}
        infoset_actions: Dict[Tuple[int, str], Tuple[str, ...]] = {}
        members: Dict[Tuple[int, str], List[int]] = {}
        counts = {1: 0, 2: 0}

        for v, label in enumerate(order):
            raw = self._nodes[label]
            kids = tuple(position[c] for c in raw.children)
            children.append(kids)
            for a, child in enumerate(kids):
                parents[child] = v
                parent_actions[child] = a
            if raw.player == LEAF:
                payoffs[v] = raw.payoff
                continue
            players[v] = raw.player
            key = (raw.player, raw.infoset)
            if key not in infoset_ids:
                infoset_ids[key] = counts[raw.player]
                counts[raw.player] += 1
                infoset_actions[key] = raw.actions
                members[key] = []
            elif infoset_actions[key] != raw.actions:
                raise GameStructureError(
                    GameMessages.TREE['INFOSET_ACTIONS'].format(player=raw.player, infoset=raw.infoset, node=label),
                    label,
                )
            node_infosets[v] = infoset_ids[key]
            members[key].append(v)

        infosets: Dict[int, List[Infoset]] = {1: [None] * counts[1], 2: [None] * counts[2]}
        for key, index in infoset_ids.items():
            player, token = key
            infosets[player][index] = Infoset(player, index, token, infoset_actions[key], tuple(members[key]))

        tree = GameTree(
            labels=tuple(order),
            players=players,
            node_infosets=node_infosets,
            children=tuple(children),
            parents=parents,
            parent_actions=parent_actions,
            payoffs=payoffs,
            infosets={p: tuple(infosets[p]) for p in PLAYERS},
        )
        logger.debug("Built %r", tree)
        return tree


def own_histories(tree: GameTree, player: int) -> List[Tuple[Tuple[int, int], ...]]:
    """For every node, the (infoset, action) decisions of ``player`` on its root path."""
    histories: List[Tuple[Tuple[int, int], ...]] = [()] * tree.num_nodes
    for v in range(1, tree.num_nodes):
        parent = int(tree.parents[v])
        history = histories[parent]
        if tree.players[parent] == player:
            history = history + ((int(tree.node_infosets[parent]), int(tree.parent_actions[v])),)
        histories[v] = history
    return histories


def _classify(first, second) -> int:
    for a, b in zip(first, second):
        if a != b:
            return 1 if a[0] != b[0] else 2
    return 1


def validate_perfect_recall(tree: GameTree) -> List[RecallViolation]:
    """Every pair of same-infoset nodes whose owner's own histories differ.

    An empty list means both players have perfect recall.
    """
    violations: List[RecallViolation] = []
    for player in PLAYERS:
        histories = own_histories(tree, player)
        for infoset in tree.infosets(player):
            groups: Dict[tuple, List[int]] = {}
            for node in infoset.nodes:
                groups.setdefault(histories[node], []).append(node)
            if len(groups) < 2:
                continue
            keys = list(groups)
            for x in range(len(keys)):
                for y in range(x + 1, len(keys)):
                    condition = _classify(keys[x], keys[y])
                    for u in groups[keys[x]]:
                        for w in groups[keys[y]]:
                            violations.append(RecallViolation(
                                condition, player, infoset.index, tree.labels[u], tree.labels[w]))
    if violations:
        logger.info("Perfect recall check found %d violating node pairs", len(violations))
    return violations
