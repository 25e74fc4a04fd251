"""
Correlation plans, the structural constraints of the correlation polytope, and
blueprint oracles.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Protocol

import numpy as np
import scipy.sparse as sp

from efce_resolver.constants import PlanMessages
from efce_resolver.exceptions import InputError, InvariantViolation
from games.sequences import (
    EMPTY,
    SequenceIndex,
    behavioral_to_sequence_form,
    uniform_behavioral,
)
from games.tree import GameTree
from .relevance import RelevantPairSet

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1


class PlanSource(Protocol):
    """Anything that yields plan entries for arrays of sequence pairs."""

    index: SequenceIndex

    def values(self, first, second) -> np.ndarray:
        ...


class CorrelationPlan:
    """Dense plan entries aligned with a relevant-pair set."""

    def __init__(self, pairs: RelevantPairSet, entries):
        entries = np.asarray(entries, dtype=np.float64)
        if entries.shape != (len(pairs),):
            raise InputError(PlanMessages.PLAN['INDEX_MISMATCH'].format(values=entries.size, pairs=len(pairs)))
        self.pairs = pairs
        self.entries = entries

    @property
    def index(self) -> SequenceIndex:
        return self.pairs.index

    def values(self, first, second) -> np.ndarray:
        """Entries for the given pairs; pairs outside the index are 0."""
        pos = self.pairs.index_of(first, second)
        return np.where(pos >= 0, self.entries[np.maximum(pos, 0)], 0.0)

    def value(self, first: int, second: int) -> float:
        return float(self.values(first, second))

    def materialize(self, pairs: RelevantPairSet) -> 'CorrelationPlan':
        """This plan re-indexed over ``pairs``; missing entries become 0."""
        return CorrelationPlan(pairs, self.values(pairs.first, pairs.second))

    def copy(self) -> 'CorrelationPlan':
        return CorrelationPlan(self.pairs, self.entries.copy())

    def __repr__(self):
        return f"CorrelationPlan({len(self.pairs)} entries)"


class StructuralConstraints:
    """Sparse rows ``A ξ = b`` of the correlation polytope over a pair set.

    Row 0 fixes the (∅, ∅) entry to 1. Every other row states that the entries
    of one infoset's sequences paired with a fixed opponent sequence sum to the
    entry of the infoset's parent sequence. Rows whose child entries are absent
    from the pair set are omitted.
    """

    def __init__(self, pairs: RelevantPairSet):
        self.pairs = pairs
        index = pairs.index
        rows, cols, vals = [0], [int(pairs.position(EMPTY, EMPTY))], [1.0]
        row_count = 1

        for infoset in range(index.infoset_count(1)):
            seqs = index.sequences_of(1, infoset)
            parent = int(index.infoset_parent[1][infoset])
            lead = pairs.row(seqs.start)
            opponents = pairs.second[lead]
            if len(opponents) == 0:
                continue
            block = [pairs.index_of(np.full(len(opponents), s), opponents) for s in seqs]
            parents = pairs.index_of(np.full(len(opponents), parent), opponents)
            row_ids = np.arange(row_count, row_count + len(opponents))
            row_count += len(opponents)
            for positions in block:
                rows.extend(row_ids.tolist())
                cols.extend(positions.tolist())
                vals.extend([1.0] * len(opponents))
            rows.extend(row_ids.tolist())
            cols.extend(parents.tolist())
            vals.extend([-1.0] * len(opponents))

        for infoset in range(index.infoset_count(2)):
            seqs = index.sequences_of(2, infoset)
            parent = int(index.infoset_parent[2][infoset])
            lead = pairs.column(seqs.start)
            opponents = pairs.first[lead]
            if len(opponents) == 0:
                continue
            block = [pairs.index_of(opponents, np.full(len(opponents), s)) for s in seqs]
            parents = pairs.index_of(opponents, np.full(len(opponents), parent))
            row_ids = np.arange(row_count, row_count + len(opponents))
            row_count += len(opponents)
            for positions in block:
                rows.extend(row_ids.tolist())
                cols.extend(positions.tolist())
                vals.extend([1.0] * len(opponents))
            rows.extend(row_ids.tolist())
            cols.extend(parents.tolist())
            vals.extend([-1.0] * len(opponents))

        cols = np.asarray(cols, dtype=np.int64)
        if np.any(cols < 0):
            raise InvariantViolation("A structural row references a pair missing from the pair set.")
        self.matrix = sp.csr_matrix((vals, (rows, cols)), shape=(row_count, len(pairs)))
        self.rhs = np.zeros(row_count)
        self.rhs[0] = 1.0
        logger.debug("Structural constraints: %d rows over %d entries", row_count, len(pairs))

    @property
    def row_count(self) -> int:
        return self.matrix.shape[0]

    def residual(self, entries: np.ndarray) -> float:
        entries = np.asarray(entries, dtype=np.float64)
        if entries.shape != (len(self.pairs),):
            raise InputError(PlanMessages.PLAN['INDEX_MISMATCH'].format(values=entries.size, pairs=len(self.pairs)))
        flow = float(np.max(np.abs(self.matrix @ entries - self.rhs)))
        negative = float(max(0.0, -entries.min())) if len(entries) else 0.0
        return max(flow, negative)


def structural_residual(plan: CorrelationPlan, constraints: Optional[StructuralConstraints] = None) -> float:
    """Largest violation of the polytope constraints; 0 means exact membership."""
    constraints = constraints or StructuralConstraints(plan.pairs)
    if constraints.pairs is not plan.pairs:
        raise InputError(PlanMessages.PLAN['INDEX_MISMATCH'].format(values=len(plan.entries), pairs=len(constraints.pairs)))
    return constraints.residual(plan.entries)


# ---------------------------------------------------------------------------
# Blueprints
# ---------------------------------------------------------------------------

class ProductBlueprint:
    """Players acting independently: ξ[σ1, σ2] = x1[σ1] · x2[σ2]."""

    kind = 'product'

    def __init__(self, index: SequenceIndex, first: np.ndarray, second: np.ndarray, kind: str = 'product'):
        self.index = index
        self.strategies = {1: np.asarray(first, dtype=np.float64), 2: np.asarray(second, dtype=np.float64)}
        self.kind = kind

    def values(self, first, second) -> np.ndarray:
        return self.strategies[1][np.asarray(first)] * self.strategies[2][np.asarray(second)]

    def materialize(self, pairs: RelevantPairSet) -> CorrelationPlan:
        return CorrelationPlan(pairs, self.values(pairs.first, pairs.second))

    def __repr__(self):
        return f"ProductBlueprint(kind={self.kind!r})"


class ExplicitBlueprint:
    """Blueprint backed by a stored plan."""

    kind = 'explicit'

    def __init__(self, plan: CorrelationPlan):
        self.plan = plan
        self.index = plan.index

    def values(self, first, second) -> np.ndarray:
        return self.plan.values(first, second)

    def materialize(self, pairs: RelevantPairSet) -> CorrelationPlan:
        return CorrelationPlan(pairs, self.values(pairs.first, pairs.second))

    def __repr__(self):
        return f"ExplicitBlueprint({self.plan!r})"


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def jitter_uniform(seed: int, player: int, infoset: int, action: int) -> float:
    """Deterministic draw in [0, 1) from (seed, player, infoset, action)."""
    h = splitmix64(seed & MASK64)
    for part in (player, infoset, action):
        h = splitmix64(h ^ (part & MASK64))
    return (h >> 11) * 2.0 ** -53


def jittered_behavioral(tree: GameTree, player: int, weight: float, seed: int) -> List[np.ndarray]:
    """p(a | I) ∝ 1 + w·ε with ε uniform on [-1, 1] per (infoset, action)."""
    out = []
    for infoset in tree.infosets(player):
        eps = np.array([2.0 * jitter_uniform(seed, player, infoset.index, a) - 1.0
                        for a in range(infoset.action_count)])
        kappa = 1.0 + weight * eps
        out.append(kappa / kappa.sum())
    return out


def make_blueprint(kind: str, tree: GameTree, index: SequenceIndex, weight: float = 0.5, seed: int = 0,
                   plan: Optional[CorrelationPlan] = None):
    """Build a blueprint oracle of ``kind`` uniform, jittered or explicit."""
    if kind == 'uniform':
        behavioral = {p: uniform_behavioral(tree, p) for p in (1, 2)}
    elif kind == 'jittered':
        if not 0.0 <= weight <= 1.0:
            raise InputError(PlanMessages.PLAN['JITTER_WEIGHT'].format(weight=weight))
        behavioral = {p: jittered_behavioral(tree, p, weight, seed) for p in (1, 2)}
    elif kind == 'explicit':
        if plan is None:
            raise InputError(PlanMessages.PLAN['EXPLICIT_PLAN'])
        return ExplicitBlueprint(plan)
    else:
        raise InputError(PlanMessages.PLAN['UNKNOWN_KIND'].format(kind=kind))

    x1 = behavioral_to_sequence_form(tree, behavioral[1], 1, index).values
    x2 = behavioral_to_sequence_form(tree, behavioral[2], 2, index).values
    logger.info("Built %s blueprint (w=%s, seed=%s)", kind, weight if kind == 'jittered' else '-', seed)
    return ProductBlueprint(index, x1, x2, kind=kind)


@dataclass(frozen=True)
class BlueprintSpec:
    """Serializable description of a blueprint choice."""
    kind: str = 'uniform'
    weight: float = 0.5
    seed: int = 0

    def build(self, tree: GameTree, index: SequenceIndex, plan: Optional[CorrelationPlan] = None):
        return make_blueprint(self.kind, tree, index, weight=self.weight, seed=self.seed, plan=plan)

    @property
    def label(self) -> str:
        if self.kind == 'jittered':
            return f'jittered(w={self.weight},seed={self.seed})'
        return self.kind
