"""
Regret minimizers for the refinement saddle point.

The mediator plays points of the subgame's plan space through a
scaled-extension program with one regret-matching+ learner per free simplex.
The deviator plays multipliers over the refinement constraints together with a
counterfactual-regret learner over each constraint's deviation strategies;
each constraint is linear in the plan once its deviation strategy is fixed.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from correlation.bounds import BoundsLedger
from correlation.deviation import leaf_pairs, subtree_leaves, subtree_of
from correlation.plans import CorrelationPlan
from correlation.relevance import RelevantPairSet
from correlation.subgames import SubgameDecomposition
from efce_resolver.constants import SolverMessages
from efce_resolver.exceptions import InputError, InvariantViolation
from games.sequences import SequenceIndex
from games.tree import PLAYERS
from .safety import LOWER, LOWER_BUNDLE, TRIGGER, UPPER, UPPER_BUNDLE
from .scaled import BackfillStep, ScaledExtensionProgram

logger = logging.getLogger(__name__)


def positive_part(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


class RegretMatchingPlus:
    """Regret matching+ over a probability simplex, fed losses."""

    def __init__(self, size: int, mask: Optional[np.ndarray] = None):
        self.size = size
        self.mask = np.ones(size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self.regrets = np.zeros(size)
        self._last: Optional[np.ndarray] = None

    def recommend(self) -> np.ndarray:
        positive = positive_part(self.regrets) * self.mask
        total = positive.sum()
        if total > 0.0:
            strategy = positive / total
        else:
            strategy = self.mask / self.mask.sum()
        self._last = strategy
        return strategy

    def observe(self, loss: np.ndarray) -> None:
        strategy = self._last if self._last is not None else self.recommend()
        expected = float(strategy @ loss)
        self.regrets = positive_part(self.regrets + (expected - loss)) * self.mask
        self._last = None

    def observe_utility(self, utility: np.ndarray) -> None:
        self.observe(-np.asarray(utility, dtype=np.float64))


class MediatorRegretMinimizer:
    """Points of a plan space built by a scaled-extension program, with t-weighted averaging."""

    def __init__(self, program: ScaledExtensionProgram):
        self.program = program
        self.locals = [RegretMatchingPlus(n) for n in program.local_sizes]
        self.iteration = 0
        self._choices: Optional[List[np.ndarray]] = None
        self._current: Optional[np.ndarray] = None
        self._weighted = np.zeros(len(program.pairs))
        self._weight = 0.0

    def recommend(self) -> np.ndarray:
        self._choices = [local.recommend() for local in self.locals]
        self._current = self.program.execute(self._choices)
        return self._current

    def observe(self, loss: np.ndarray) -> None:
        loss = np.asarray(loss, dtype=np.float64)
        if loss.shape != (len(self.program.pairs),):
            raise InputError(SolverMessages.CFR['LOSS_SIZE'].format(got=loss.size, expected=len(self.program.pairs)))
        if self._current is None:
            self.recommend()
        scaled = loss.copy()
        for step in reversed(self.program.steps):
            if step.pinned:
                continue
            if isinstance(step, BackfillStep):
                scaled[step.sources] += scaled[step.target]
            else:
                local_loss = scaled[step.targets]
                choice = self._choices[step.local]
                self.locals[step.local].observe(local_loss)
                scaled[step.source] += float(choice @ local_loss)

        self.iteration += 1
        self._weighted += self.iteration * self._current
        self._weight += self.iteration
        self._current = None

    def average(self) -> np.ndarray:
        if self._weight == 0.0:
            return self.program.execute(self.program.uniform_choices())
        entries = self._weighted / self._weight
        if self.program.pinned_values is not None:
            pinned = self.program.pinned
            entries[pinned] = self.program.pinned_values[pinned]
        return entries

    def average_plan(self) -> CorrelationPlan:
        return self.program.plan(self.average())


class DeviationTreeMinimizer:
    """CFR+ over a player's sequence-form strategies below ``root``.

    ``excluded`` removes one sequence of the root infoset together with its subtree.
    """

    def __init__(self, index: SequenceIndex, player: int, root: int, excluded: Optional[int] = None):
        self.index = index
        self.player = player
        self.root = root
        self.excluded = excluded
        infosets = [root]
        for sequence in index.sequences_of(player, root):
            if sequence != excluded:
                infosets.extend(index.subtree_infosets(player, sequence))
        self.infosets: Tuple[int, ...] = tuple(infosets)
        self.learners = {}
        for infoset in self.infosets:
            seqs = index.sequences_of(player, infoset)
            mask = None
            if infoset == root and excluded is not None:
                mask = np.arange(seqs.start, seqs.stop) != excluded
            self.learners[infoset] = RegretMatchingPlus(len(seqs), mask)
        self._behavior = {}

    @property
    def sequences(self) -> np.ndarray:
        seqs = [s for i in self.infosets for s in self.index.sequences_of(self.player, i) if s != self.excluded]
        return np.asarray(seqs, dtype=np.int64)

    def recommend(self) -> np.ndarray:
        """Sequence-form strategy with mass 1 at the root infoset, as a vector over all sequences."""
        y = np.zeros(self.index.size(self.player))
        parents = self.index.infoset_parent[self.player]
        for infoset in self.infosets:
            seqs = self.index.sequences_of(self.player, infoset)
            behavior = self.learners[infoset].recommend()
            self._behavior[infoset] = behavior
            scale = 1.0 if infoset == self.root else y[parents[infoset]]
            y[seqs.start:seqs.stop] = scale * behavior
        return y

    def observe(self, utility: np.ndarray) -> None:
        """Counterfactual update for a per-sequence utility vector."""
        values = np.array(utility, dtype=np.float64)
        parents = self.index.infoset_parent[self.player]
        for infoset in reversed(self.infosets):
            seqs = self.index.sequences_of(self.player, infoset)
            local = values[seqs.start:seqs.stop]
            behavior = self._behavior.get(infoset)
            if behavior is None:
                behavior = self.learners[infoset].recommend()
            self.learners[infoset].observe_utility(local)
            if infoset != self.root:
                values[parents[infoset]] += float(behavior @ local)
        self._behavior = {}

    def best_value(self, utility: np.ndarray) -> float:
        """Value of the best pure strategy below ``root`` for a per-sequence utility vector."""
        values = np.array(utility, dtype=np.float64)
        parents = self.index.infoset_parent[self.player]
        best = 0.0
        for infoset in reversed(self.infosets):
            seqs = self.index.sequences_of(self.player, infoset)
            local = values[seqs.start:seqs.stop].copy()
            if infoset == self.root and self.excluded is not None:
                local[self.excluded - seqs.start] = -np.inf
            best = float(local.max())
            if infoset != self.root:
                values[parents[infoset]] += best
        return best


@dataclass
class SafetyConstraint:
    """g(ξ, y) = Σ w_y(ξ)·y + Σ coeffs·ξ[positions] + constant."""
    key: tuple
    player: int
    constant: float
    positions: np.ndarray
    coeffs: np.ndarray
    deviation: Optional[DeviationTreeMinimizer] = None
    dev_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dev_payoffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dev_sequences: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def utility(self, x: np.ndarray) -> np.ndarray:
        """Per-sequence deviation utility at plan entries ``x``."""
        size = self.deviation.index.size(self.player)
        return np.bincount(self.dev_sequences, weights=self.dev_payoffs * x[self.dev_positions], minlength=size)

    def fixed_value(self, x: np.ndarray) -> float:
        return float(self.coeffs @ x[self.positions]) + self.constant

    def value(self, x: np.ndarray, y: Optional[np.ndarray]) -> float:
        total = self.fixed_value(x)
        if self.deviation is not None:
            total += float(self.utility(x) @ y)
        return total

    def best_value(self, x: np.ndarray) -> float:
        total = self.fixed_value(x)
        if self.deviation is not None:
            total += self.deviation.best_value(self.utility(x))
        return total


@dataclass
class DeviatorState:
    multipliers: np.ndarray
    responses: List[Optional[np.ndarray]]


class _ConstraintBuilder:
    def __init__(self, pairs: RelevantPairSet):
        self.pairs = pairs
        self.index = pairs.index

    def locate(self, player: int, positions: np.ndarray, anchor: Optional[int] = None) -> np.ndarray:
        first, second = leaf_pairs(self.index, player, positions, anchor)
        found = self.pairs.index_of(first, second)
        if np.any(found < 0):
            bad = int(np.flatnonzero(found < 0)[0])
            raise InvariantViolation(
                f"Leaf pair ({int(first[bad])}, {int(second[bad])}) lies outside the subgame's plan space.")
        return found

    def follow_leaves(self, player: int, sequence: int) -> np.ndarray:
        """Leaves whose own sequence extends ``sequence``."""
        infosets = self.index.subtree_infosets(player, sequence)
        return np.concatenate([self.index.leaves_at(player, sequence), subtree_leaves(self.index, player, infosets)])

    def fixed(self, player: int, leaves: np.ndarray, sign: float, anchor: Optional[int] = None):
        return self.locate(player, leaves, anchor), sign * self.index.leaf_payoffs[player][leaves]

    def with_deviation(self, constraint: SafetyConstraint, anchor: int, excluded: Optional[int] = None):
        minimizer = constraint.deviation
        infosets = minimizer.infosets
        leaves = subtree_leaves(self.index, constraint.player, infosets)
        if excluded is not None:
            leaves = leaves[self.index.leaf_sequences[constraint.player][leaves] != excluded]
        constraint.dev_positions = self.locate(constraint.player, leaves, anchor)
        constraint.dev_payoffs = self.index.leaf_payoffs[constraint.player][leaves]
        constraint.dev_sequences = self.index.leaf_sequences[constraint.player][leaves]
        return constraint


def build_constraints(decomp: SubgameDecomposition, ledger: BoundsLedger, j: int,
                      pairs: RelevantPairSet) -> List[SafetyConstraint]:
    """Every refinement constraint of subgame j as a bilinear term over ``pairs``."""
    ledger.check(decomp)
    index = decomp.index
    builder = _ConstraintBuilder(pairs)
    empty = np.zeros(0, dtype=np.int64)
    out: List[SafetyConstraint] = []
    for player in PLAYERS:
        for trigger in decomp.triggers(player, j):
            infoset = index.infoset_of(player, trigger)
            positions, coeffs = builder.fixed(player, builder.follow_leaves(player, trigger), -1.0)
            constraint = SafetyConstraint(
                (TRIGGER, player, trigger), player, -ledger.delta(player, trigger), positions, coeffs,
                DeviationTreeMinimizer(index, player, infoset, excluded=trigger))
            out.append(builder.with_deviation(constraint, trigger, excluded=trigger))
    for e in ledger.upper_for(j):
        constraint = SafetyConstraint((UPPER, e.player, e.infoset, e.trigger), e.player, -e.bound,
                                      empty, np.zeros(0), DeviationTreeMinimizer(index, e.player, e.infoset))
        out.append(builder.with_deviation(constraint, e.trigger))
    for e in ledger.lower_for(j):
        leaves = subtree_leaves(index, e.player, subtree_of(index, e.player, e.infoset))
        positions, coeffs = builder.fixed(e.player, leaves, -1.0)
        out.append(SafetyConstraint((LOWER, e.player, e.infoset), e.player, e.bound, positions, coeffs))
    for e in ledger.lower_bundles_for(j):
        positions, coeffs = builder.fixed(e.player, e.positions, -1.0, e.anchor)
        out.append(SafetyConstraint((LOWER_BUNDLE, e.player, e.sequence), e.player, e.bound, positions, coeffs))
    for e in ledger.upper_bundles_for(j):
        positions, coeffs = builder.fixed(e.player, e.positions, 1.0, e.anchor)
        out.append(SafetyConstraint((UPPER_BUNDLE, e.player, e.sequence, e.trigger), e.player, -e.bound,
                                    positions, coeffs))
    return out


class DeviatorRegretMinimizer:
    """Multipliers over the constraints of subgame j plus a deviation strategy per constraint."""

    def __init__(self, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int, pairs: RelevantPairSet):
        self.pairs = pairs
        self.constraints = build_constraints(decomp, ledger, j, pairs)
        self.multipliers = RegretMatchingPlus(max(len(self.constraints), 1))
        self._state: Optional[DeviatorState] = None
        logger.debug("Deviator for subgame %d: %d constraints", j, len(self.constraints))

    def __len__(self):
        return len(self.constraints)

    def recommend(self) -> DeviatorState:
        weights = self.multipliers.recommend()[:len(self.constraints)]
        responses = [c.deviation.recommend() if c.deviation is not None else None for c in self.constraints]
        self._state = DeviatorState(weights, responses)
        return self._state

    def mediator_loss(self, state: Optional[DeviatorState] = None) -> np.ndarray:
        """Gradient of Σ λ_k·g_k(ξ, y_k) with respect to the plan entries."""
        state = state or self._state or self.recommend()
        positions, weights = [], []
        for constraint, weight, y in zip(self.constraints, state.multipliers, state.responses):
            if weight == 0.0:
                continue
            positions.append(constraint.positions)
            weights.append(weight * constraint.coeffs)
            if y is not None:
                positions.append(constraint.dev_positions)
                weights.append(weight * constraint.dev_payoffs * y[constraint.dev_sequences])
        if not positions:
            return np.zeros(len(self.pairs))
        return np.bincount(np.concatenate(positions), weights=np.concatenate(weights), minlength=len(self.pairs))

    def observe(self, x: np.ndarray) -> None:
        state = self._state or self.recommend()
        values = np.zeros(len(self.constraints))
        for k, (constraint, y) in enumerate(zip(self.constraints, state.responses)):
            values[k] = constraint.value(x, y)
            if constraint.deviation is not None:
                constraint.deviation.observe(constraint.utility(x))
        if len(values):
            self.multipliers.observe_utility(values)
        self._state = None

    def best_response_value(self, x: np.ndarray) -> float:
        """max over constraints and deviation strategies of g_k(x, y); 0.0 without constraints."""
        return max((c.best_value(x) for c in self.constraints), default=0.0)


def constraint_keys(constraints: Sequence[SafetyConstraint]) -> List[tuple]:
    return [c.key for c in constraints]
