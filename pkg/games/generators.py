"""
Benchmark game generators: the modified signaling game, matrix games and Battleship.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Mapping, Sequence, Tuple

import numpy as np

from efce_resolver.constants import GameMessages
from efce_resolver.exceptions import InputError
from .tree import GameTree, GameTreeBuilder

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Signaling game
# ---------------------------------------------------------------------------

SIGNALING_LEAVES: Tuple[Tuple[str, str], ...] = (
    ('X_G', 'lx'), ('X_G', 'rx'),
    ('Y_G', 'ly'), ('Y_G', 'ry'),
    ('X_B', 'lx'), ('X_B', 'rx'),
    ('Y_B', 'ly'), ('Y_B', 'ry'),
)


def build_signaling_game(payoffs: Mapping[Tuple[str, str], Tuple[float, float]]) -> GameTree:
    """P1 picks a signal G/B, then a message X/Y; P2 sees only the message.

    ``payoffs`` maps each (P1 terminal sequence, P2 sequence) leaf pair to (u1, u2).
    """
    missing = sorted(set(SIGNALING_LEAVES) - set(payoffs))
    extra = sorted(set(payoffs) - set(SIGNALING_LEAVES))
    if missing or extra:
        raise InputError(GameMessages.INPUT['PAYOFF_KEYS'].format(missing=missing, extra=extra))

    builder = GameTreeBuilder()
    builder.add_decision('root', 1, 'signal', ('G', 'B'), ('G', 'B'))
    for signal in ('G', 'B'):
        x_seq, y_seq = f'X_{signal}', f'Y_{signal}'
        builder.add_decision(signal, 1, f'after_{signal}', (x_seq, y_seq), (f'{signal}.X', f'{signal}.Y'))
        for message, own in (('X', x_seq), ('Y', y_seq)):
            lower = message.lower()
            responses = (f'l{lower}', f'r{lower}')
            node = f'{signal}.{message}'
            builder.add_decision(node, 2, message, responses, tuple(f'{node}.{r}' for r in responses))
            for response in responses:
                u1, u2 = payoffs[(own, response)]
                builder.add_leaf(f'{node}.{response}', u1, u2)
    return builder.build('root')


def signaling_subgames(tree: GameTree) -> List[List[int]]:
    """The two natural subgames: everything below message X, and below message Y."""
    subgames = []
    for message in ('X', 'Y'):
        nodes = []
        for signal in ('G', 'B'):
            root = tree.node_by_label[f'{signal}.{message}']
            nodes.extend(range(root, int(tree.subtree_end[root])))
        subgames.append(nodes)
    return subgames


# ---------------------------------------------------------------------------
# Matrix games
# ---------------------------------------------------------------------------

def build_matrix_game(row_payoffs, col_payoffs) -> GameTree:
    """Simultaneous-move game written as P1 moving first and P2 not observing it."""
    rows = np.asarray(row_payoffs, dtype=np.float64)
    cols = np.asarray(col_payoffs, dtype=np.float64)
    if rows.ndim != 2 or rows.shape != cols.shape or rows.size == 0:
        raise InputError(GameMessages.INPUT['MATRIX_SHAPE'])
    m, n = rows.shape
    builder = GameTreeBuilder()
    row_actions = tuple(f'r{i}' for i in range(m))
    col_actions = tuple(f'c{k}' for k in range(n))
    builder.add_decision('root', 1, 'row', row_actions, row_actions)
    for i, row in enumerate(row_actions):
        builder.add_decision(row, 2, 'column', col_actions, tuple(f'{row}.{c}' for c in col_actions))
        for k, col in enumerate(col_actions):
            builder.add_leaf(f'{row}.{col}', rows[i, k], cols[i, k])
    return builder.build('root')


def matrix_subgame(tree: GameTree) -> List[List[int]]:
    """P2's simultaneous move and its leaves as a single subgame."""
    return [[v for v in range(1, tree.num_nodes)]]


# ---------------------------------------------------------------------------
# Battleship
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BattleshipConfig:
    """W×H grid, one 1×m ship per player, T firing rounds (P1 then P2 each round)."""
    width: int
    height: int
    ship: int
    # firing rounds, each one P1 shot then one P2 shot; a tile is never fired at twice by the same player
    turns: int
    gamma: float

    @classmethod
    def grid(cls, n: int, turns: int, gamma: float, ship: int = 1) -> 'BattleshipConfig':
        return cls(width=n, height=1, ship=ship, turns=turns, gamma=gamma)

    def validate(self) -> 'BattleshipConfig':
        problems = []
        if self.width < 1 or self.height < 1:
            problems.append('grid dimensions must be positive')
        if self.ship < 1 or self.ship > max(self.width, self.height):
            problems.append(f'ship length {self.ship} does not fit a {self.width}x{self.height} grid')
        if self.turns < 1:
            problems.append('at least one firing round is required')
        elif self.turns > self.width * self.height:
            problems.append('more rounds than tiles; tiles cannot be fired at twice')
        if self.gamma < 0:
            problems.append('gamma must be non-negative')
        if problems:
            raise InputError(GameMessages.INPUT['BATTLESHIP'].format(reason='; '.join(problems)))
        return self

    @property
    def tiles(self) -> List[Tuple[int, int]]:
        return [(x, y) for y in range(self.height) for x in range(self.width)]

    def placements(self) -> List[Tuple[str, FrozenSet[int]]]:
        """(label, tile indices) for every axis-aligned placement; duplicates dropped."""
        index = {tile: k for k, tile in enumerate(self.tiles)}
        out: List[Tuple[str, FrozenSet[int]]] = []
        seen = set()
        candidates = []
        for y in range(self.height):
            for x in range(self.width - self.ship + 1):
                candidates.append(('H', x, y, [(x + k, y) for k in range(self.ship)]))
        for x in range(self.width):
            for y in range(self.height - self.ship + 1):
                candidates.append(('V', x, y, [(x, y + k) for k in range(self.ship)]))
        for orientation, x, y, cells in candidates:
            covered = frozenset(index[c] for c in cells)
            if covered in seen:
                continue
            seen.add(covered)
            prefix = 'S' if self.ship == 1 else orientation
            out.append((f'{prefix}-x{x}y{y}', covered))
        return out

    def tile_label(self, tile: int) -> str:
        x, y = self.tiles[tile]
        return f'x{x}y{y}'


class _BattleshipWriter:
    """Emits the Battleship tree into a builder by depth-first expansion."""

    def __init__(self, cfg: BattleshipConfig):
        self.cfg = cfg
        self.placements = cfg.placements()
        self.tile_labels = [cfg.tile_label(t) for t in range(cfg.width * cfg.height)]
        self.builder = GameTreeBuilder()
        self._counter = itertools.count()

    def _label(self) -> str:
        return str(next(self._counter))

    def write(self) -> GameTree:
        root = self._label()
        place_labels = tuple(label for label, _ in self.placements)
        children = []
        for p1 in range(len(self.placements)):
            node = self._label()
            children.append(node)
            grand = []
            for p2 in range(len(self.placements)):
                child = self._label()
                grand.append(child)
                self._fire(child, p1, p2, (), ())
            self.builder.add_decision(node, 2, 'place', place_labels, grand)
        self.builder.add_decision(root, 1, 'place', place_labels, children)
        return self.builder.build(root)

    def _fire(self, label: str, p1: int, p2: int, shots1: Tuple, shots2: Tuple) -> None:
        # shots are tuples of (tile, hit)
        shooter = 1 if len(shots1) == len(shots2) else 2
        own, theirs = (shots1, shots2) if shooter == 1 else (shots2, shots1)
        own_place = p1 if shooter == 1 else p2
        target = self.placements[p2 if shooter == 1 else p1][1]
        fired = {tile for tile, _ in own}
        legal = [t for t in range(len(self.tile_labels)) if t not in fired]

        own_text = ','.join(f'{self.tile_labels[t]}{"*" if hit else ""}' for t, hit in own)
        their_text = ','.join(self.tile_labels[t] for t, _ in theirs)
        infoset = f'fire|{self.placements[own_place][0]}|{own_text}|{their_text}'

        children = []
        for tile in legal:
            child = self._label()
            children.append(child)
            hit = tile in target
            shot = own + ((tile, hit),)
            if hit and target <= fired | {tile}:
                if shooter == 1:
                    self.builder.add_leaf(child, 1.0, -self.cfg.gamma)
                else:
                    self.builder.add_leaf(child, -self.cfg.gamma, 1.0)
                continue
            next1, next2 = (shot, shots2) if shooter == 1 else (shots1, shot)
            if shooter == 2 and len(next2) == self.cfg.turns:
                self.builder.add_leaf(child, 0.0, 0.0)
                continue
            self._fire(child, p1, p2, next1, next2)
        self.builder.add_decision(label, shooter, infoset, tuple(self.tile_labels[t] for t in legal), children)


def build_battleship(cfg: BattleshipConfig) -> GameTree:
    cfg.validate()
    tree = _BattleshipWriter(cfg).write()
    logger.info("Battleship %dx%d m=%d T=%d gamma=%s: %r", cfg.width, cfg.height, cfg.ship, cfg.turns, cfg.gamma, tree)
    return tree


PLACEMENT_DEPTH = 2


def battleship_frontier(tree: GameTree, rounds: int) -> List[List[int]]:
    """Node sets of the subgames that start after ``rounds`` complete firing rounds.

    Subgame roots are P1 decision nodes whose history holds ``rounds`` shots per
    player; roots sharing the same public fired locations form one subgame.
    Subgames are ordered by their public history.
    """
    depth = PLACEMENT_DEPTH + 2 * rounds
    groups: Dict[Tuple[str, ...], List[int]] = {}
    for node in np.flatnonzero((tree.depths == depth) & (tree.players == 1)):
        node = int(node)
        key = tuple(tree.action_path(node)[PLACEMENT_DEPTH:])
        groups.setdefault(key, []).append(node)

    subgames = []
    for key in sorted(groups, key=_public_order):
        nodes = []
        for root in groups[key]:
            nodes.extend(range(root, int(tree.subtree_end[root])))
        subgames.append(nodes)
    return subgames


def _public_order(key: Sequence[str]):
    out = []
    for label in key:
        x, y = label[1:].split('y')
        out.append((int(y), int(x)))
    return tuple(out)
