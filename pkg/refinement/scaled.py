"""
Scaled-extension programs over plan polytopes.

A program is an ordered list of steps that produces every entry of a plan
from (∅, ∅) = 1:

- EXPAND writes ξ[(I, a), σ'] = ξ[σ, σ'] · y(a) for a point y of the simplex of I;
- BACKFILL writes ξ[σ, (I', b)] = Σ_a ξ[(I*, a), (I', b)] from entries already produced.

At every pair the critical player (the one with at most one child infoset
connected to the opponent's children) expands first; the opponent's side is
then filled in by backfills through the critical infoset. When both players
are critical the one whose child infosets all lie outside the subgames goes
first, which keeps pre-subgame entries from being written from subgame ones.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from correlation.plans import CorrelationPlan
from correlation.relevance import Connectivity, RelevantPairSet
from correlation.subgames import PRE_SUBGAME, SubgameDecomposition
from efce_resolver.constants import SolverMessages
from efce_resolver.exceptions import InputError, InvariantViolation
from games.sequences import EMPTY
from games.tree import PLAYERS, opponent

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpandStep:
    source: int
    player: int
    infoset: int
    targets: np.ndarray
    pinned: bool
    local: int = -1

    @property
    def size(self) -> int:
        return len(self.targets)


@dataclass(frozen=True)
class BackfillStep:
    target: int
    sources: np.ndarray
    pinned: bool


Step = Union[ExpandStep, BackfillStep]


class ScaledExtensionProgram:
    """Steps producing every entry of ``pairs``; ``pinned`` entries are copied from the blueprint."""

    def __init__(self, pairs: RelevantPairSet, steps: Sequence[Step], pinned: np.ndarray,
                 pinned_values: Optional[np.ndarray] = None):
        self.pairs = pairs
        self.steps = list(steps)
        self.pinned = np.asarray(pinned, dtype=bool)
        self.root = pairs.position(EMPTY, EMPTY)
        self.free_expands = [s for s in self.steps if isinstance(s, ExpandStep) and not s.pinned]
        self._free_steps = [s for s in self.steps if not s.pinned]
        self.pinned_values = None
        if pinned_values is not None:
            self.pin(pinned_values)

    def __len__(self):
        return len(self.steps)

    def __repr__(self):
        return (f"ScaledExtensionProgram({len(self.pairs)} entries, {len(self.steps)} steps, "
                f"{len(self.free_expands)} free simplices)")

    @property
    def local_sizes(self) -> List[int]:
        return [step.size for step in self.free_expands]

    @property
    def expand_sources(self) -> List[tuple]:
        """Distinct (σ1, σ2) pairs that some EXPAND step scales, in program order."""
        seen = dict.fromkeys(s.source for s in self.steps if isinstance(s, ExpandStep))
        return [(int(self.pairs.first[p]), int(self.pairs.second[p])) for p in seen]

    @property
    def backfill_targets(self) -> List[tuple]:
        return [(int(self.pairs.first[s.target]), int(self.pairs.second[s.target]))
                for s in self.steps if isinstance(s, BackfillStep)]

    def pin(self, values) -> None:
        """Fix the pinned entries to ``values`` (a plan-sized array or a blueprint oracle)."""
        if hasattr(values, 'values'):
            values = values.values(self.pairs.first, self.pairs.second)
        values = np.asarray(values, dtype=np.float64)
        base = np.zeros(len(self.pairs))
        base[self.pinned] = values[self.pinned]
        base[self.root] = 1.0
        self.pinned_values = base

    def _base(self) -> np.ndarray:
        if self.pinned_values is None:
            if self.pinned.any():
                raise InputError(SolverMessages.CFR['UNPINNED'])
            base = np.zeros(len(self.pairs))
            base[self.root] = 1.0
            return base
        return self.pinned_values.copy()

    def execute(self, choices: Sequence[np.ndarray]) -> np.ndarray:
        """Plan entries for one simplex point per free EXPAND step."""
        x = self._base()
        for step in self._free_steps:
            if isinstance(step, ExpandStep):
                x[step.targets] = x[step.source] * choices[step.local]
            else:
                x[step.target] = x[step.sources].sum()
        return x

    def uniform_choices(self) -> List[np.ndarray]:
        return [np.full(n, 1.0 / n) for n in self.local_sizes]

    def plan(self, entries: np.ndarray) -> CorrelationPlan:
        return CorrelationPlan(self.pairs, entries)


class _Decomposer:
    def __init__(self, pairs: RelevantPairSet, pinned: np.ndarray, infoset_labels: Dict[int, np.ndarray],
                 seq_labels: Dict[int, np.ndarray], tiebreak: bool, first_player: int):
        self.pairs = pairs
        self.index = pairs.index
        self.connectivity = pairs.connectivity or Connectivity(self.index.tree)
        self.pinned = pinned
        self.infoset_labels = infoset_labels
        self.seq_labels = seq_labels
        self.tiebreak = tiebreak
        self.first_player = first_player
        self.steps: List[Step] = []
        self.produced = np.zeros(len(pairs), dtype=bool)
        self.produced[pairs.position(EMPTY, EMPTY)] = True
        self.locals = 0

    @staticmethod
    def ordered(player: int, own: int, other: int):
        return (own, other) if player == 1 else (other, own)

    def lookup(self, player: int, own: int, other: int) -> int:
        return int(self.pairs.index_of(*self.ordered(player, own, other)))

    def children(self, player: int, own: int, other: int) -> List[int]:
        """Child infosets of ``own`` whose sequences pair with ``other`` in the program's index set."""
        out = []
        for infoset in self.index.child_infosets[player][own]:
            first = self.index.sequences_of(player, infoset).start
            if self.lookup(player, first, other) >= 0:
                out.append(infoset)
        return out

    def connected(self, player: int, infoset: int, other: int) -> bool:
        first, second = self.ordered(player, infoset, other)
        return self.connectivity.connected(first, second)

    def _position(self, player: int, own: int, other: int) -> int:
        pos = self.lookup(player, own, other)
        if pos < 0:
            first, second = self.ordered(player, own, other)
            raise InvariantViolation(f"Pair ({first}, {second}) is not relevant.")
        return pos

    def _require(self, pos: int) -> None:
        if not self.produced[pos]:
            raise InvariantViolation(SolverMessages.CFR['UNPRODUCED_SOURCE'].format(
                first=int(self.pairs.first[pos]), second=int(self.pairs.second[pos])))

    def _mark(self, positions) -> None:
        for pos in np.atleast_1d(positions).tolist():
            if self.produced[pos]:
                raise InvariantViolation(SolverMessages.CFR['DUPLICATE'].format(
                    first=int(self.pairs.first[pos]), second=int(self.pairs.second[pos])))
            self.produced[pos] = True

    def expand(self, player: int, own: int, other: int, infoset: int) -> None:
        source = self._position(player, own, other)
        self._require(source)
        targets = np.asarray([self._position(player, s, other)
                              for s in self.index.sequences_of(player, infoset)], dtype=np.int64)
        flags = self.pinned[targets]
        if flags.any() and not flags.all():
            raise InvariantViolation(SolverMessages.CFR['MIXED_EXPAND'].format(
                first=int(self.pairs.first[source]), second=int(self.pairs.second[source])))
        pinned = bool(flags.all())
        local = -1 if pinned else self.locals
        if not pinned:
            self.locals += 1
        self._mark(targets)
        self.steps.append(ExpandStep(source, player, infoset, targets, pinned, local))

    def backfill(self, player: int, own: int, opp_seq: int, star: int) -> None:
        target = self._position(player, own, opp_seq)
        sources = np.asarray([self._position(player, s, opp_seq)
                              for s in self.index.sequences_of(player, star)], dtype=np.int64)
        for pos in sources.tolist():
            self._require(pos)
        if self.pinned[target] and not self.pinned[sources].all():
            raise InvariantViolation(SolverMessages.CFR['BACKFILL_PINNED'].format(
                first=int(self.pairs.first[target]), second=int(self.pairs.second[target])))
        self._mark(target)
        self.steps.append(BackfillStep(target, sources, bool(self.pinned[target])))

    def choose(self, critical: List[int], kids: Dict[int, List[int]]) -> int:
        if len(critical) == 1:
            return critical[0]
        if self.tiebreak:
            outside = {p: all(self.infoset_labels[p][i] == PRE_SUBGAME for i in kids[p]) for p in PLAYERS}
            if outside[1] != outside[2]:
                return 1 if outside[1] else 2
        return self.first_player

    def check_outside(self, player: int, own: int, star: Optional[int], kids: Dict[int, List[int]]) -> None:
        if star is None or self.infoset_labels[player][star] == PRE_SUBGAME:
            return
        if self.seq_labels[player][own] != PRE_SUBGAME:
            return
        for other in kids[opponent(player)]:
            if self.infoset_labels[opponent(player)][other] == PRE_SUBGAME and self.connected(player, star, other):
                raise InvariantViolation(SolverMessages.CFR['CRITICAL_OUTSIDE'].format(
                    infoset=self.index.tree.infoset(player, star).label,
                    other=self.index.tree.infoset(opponent(player), other).label))

    def decompose(self, first: int, second: int) -> None:
        seqs = {1: first, 2: second}
        kids = {p: self.children(p, seqs[p], seqs[opponent(p)]) for p in PLAYERS}
        if not kids[1] and not kids[2]:
            return
        linked = {p: [i for i in kids[p] if any(self.connected(p, i, k) for k in kids[opponent(p)])]
                  for p in PLAYERS}
        critical = [p for p in PLAYERS if len(linked[p]) <= 1]
        if not critical:
            raise InvariantViolation(SolverMessages.CFR['NO_CRITICAL_PLAYER'].format(first=first, second=second))
        player = self.choose(critical, kids)
        star = linked[player][0] if linked[player] else None
        own, other = seqs[player], seqs[opponent(player)]
        self.check_outside(player, own, star, kids)

        for infoset in kids[player]:
            self.expand(player, own, other, infoset)
            for sequence in self.index.sequences_of(player, infoset):
                self.decompose(*self.ordered(player, sequence, other))
        self.fill(player, own, other, star)

    def fill(self, player: int, own: int, other: int, star: Optional[int]) -> None:
        """Produce (own, ·) entries below ``other`` on the opponent's side."""
        opp = opponent(player)
        for infoset in self.children(opp, other, own):
            if star is not None and self.connected(player, star, infoset):
                for sequence in self.index.sequences_of(opp, infoset):
                    self.backfill(player, own, sequence, star)
                    self.fill(player, own, sequence, star)
            else:
                self.expand(opp, other, own, infoset)
                for sequence in self.index.sequences_of(opp, infoset):
                    self.fill(player, own, sequence, None)


def decompose_pairs(pairs: RelevantPairSet, pinned: Optional[np.ndarray] = None,
                    infoset_labels: Optional[Dict[int, np.ndarray]] = None,
                    seq_labels: Optional[Dict[int, np.ndarray]] = None,
                    tiebreak: bool = True, first_player: int = 1) -> ScaledExtensionProgram:
    """Scaled-extension program over an arbitrary relevant-pair set."""
    if first_player not in PLAYERS:
        raise InputError(f"first_player must be 1 or 2, got {first_player}.")
    index = pairs.index
    pinned = np.zeros(len(pairs), dtype=bool) if pinned is None else np.asarray(pinned, dtype=bool)
    infoset_labels = infoset_labels or {p: np.zeros(index.infoset_count(p), dtype=np.int64) for p in PLAYERS}
    seq_labels = seq_labels or {p: np.zeros(index.size(p), dtype=np.int64) for p in PLAYERS}

    builder = _Decomposer(pairs, pinned, infoset_labels, seq_labels, tiebreak, first_player)
    builder.decompose(EMPTY, EMPTY)
    produced = int(builder.produced.sum())
    if produced != len(pairs):
        raise InvariantViolation(SolverMessages.CFR['COVERAGE'].format(produced=produced, expected=len(pairs)))
    program = ScaledExtensionProgram(pairs, builder.steps, pinned)
    logger.debug("Decomposed %r", program)
    return program


def decompose_xi_j(decomp: SubgameDecomposition, j: Optional[int] = None, blueprint=None,
                   tiebreak: bool = True, first_player: int = 1) -> ScaledExtensionProgram:
    """Program for the plan space of subgame j, or for the whole plan space when ``j`` is None.

    For a subgame the pre-subgame entries are pinned; pass ``blueprint`` to fix their values.
    """
    if j is None:
        program = decompose_pairs(decomp.pairs, tiebreak=tiebreak, first_player=first_player)
    else:
        pairs = decomp.restricted_pairs(j)
        pinned = decomp.pair_class(pairs.first, pairs.second) == PRE_SUBGAME
        program = decompose_pairs(pairs, pinned, decomp.infoset_subgame, decomp.seq_subgame,
                                  tiebreak=tiebreak, first_player=first_player)
    if blueprint is not None:
        program.pin(blueprint)
    logger.info("Scaled-extension program for %s: %r", 'full game' if j is None else f'subgame {j}', program)
    return program
