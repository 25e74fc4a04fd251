"""
Exploitability of a correlation plan.

For a trigger sequence σ! = (I!, a!) of player i, the follow value μ(σ!) is
the payoff i collects below σ! when obeying every recommendation. Deviation
values weight leaf payoffs by the unnormalised posterior ξ[σ!, ·] and take the
best action at every infoset below I!; β* is the best value over the
alternatives a ≠ a!, and δ* = β* − μ.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from efce_resolver.constants import PlanMessages
from efce_resolver.exceptions import InputError
from games.sequences import EMPTY, SequenceIndex
from games.tree import PLAYERS, opponent
from .plans import CorrelationPlan, StructuralConstraints, structural_residual
from .relevance import RelevantPairSet, relevant_pairs

logger = logging.getLogger(__name__)


def leaf_pairs(index: SequenceIndex, player: int, positions=None, anchor: Optional[int] = None):
    """(first, second) arrays for leaves, with the player's own sequence replaced by ``anchor``."""
    own = index.leaf_sequences[player]
    opp = index.leaf_sequences[opponent(player)]
    if positions is not None:
        own, opp = own[positions], opp[positions]
    if anchor is not None:
        own = np.full(len(opp), anchor, dtype=np.int64)
    return (own, opp) if player == 1 else (opp, own)


def leaf_weights(plan, player: int, positions=None, anchor: Optional[int] = None) -> np.ndarray:
    """u_i(z)·ξ[own or anchor, opp] for the selected leaves."""
    index = plan.index
    first, second = leaf_pairs(index, player, positions, anchor)
    payoffs = index.leaf_payoffs[player]
    if positions is not None:
        payoffs = payoffs[positions]
    return payoffs * plan.values(first, second)


@dataclass
class FollowValues:
    player: int
    mu: np.ndarray
    v: np.ndarray

    def infoset_value(self, infoset: int) -> float:
        return float(self.v[infoset])


def follow_values(plan, player: int) -> FollowValues:
    """μ for every sequence of ``player`` and v(I) = Σ_a μ((I, a)) for every infoset."""
    index = plan.index
    n = index.size(player)
    direct = np.bincount(index.leaf_sequences[player], weights=leaf_weights(plan, player), minlength=n)
    mu = index.prefix_matrix(player) @ direct
    v = np.bincount(index.seq_infoset[player][1:], weights=mu[1:], minlength=index.infoset_count(player))
    return FollowValues(player, mu, v)


@dataclass
class DeviationPass:
    """β over sequences and ν over infosets below a root infoset, with argmax actions."""
    beta: np.ndarray
    nu: Dict[int, float]
    best: Dict[int, int]


def subtree_of(index: SequenceIndex, player: int, infoset: int) -> Tuple[int, ...]:
    """``infoset`` followed by every infoset below it, in preorder."""
    out = [infoset]
    for sequence in index.sequences_of(player, infoset):
        out.extend(index.subtree_infosets(player, sequence))
    return tuple(out)


def subtree_leaves(index: SequenceIndex, player: int, infosets: Sequence[int]) -> np.ndarray:
    chunks = [index.leaves_at(player, s) for infoset in infosets for s in index.sequences_of(player, infoset)]
    return np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)


def deviation_pass(plan, player: int, anchor: int, root_infoset: int,
                   policy: Optional[Mapping[int, int]] = None) -> DeviationPass:
    """Evaluate the subtree of ``root_infoset`` with payoffs weighted by ξ[anchor, ·].

    With ``policy`` the given action is taken at each infoset instead of the best one.
    """
    index = plan.index
    infosets = subtree_of(index, player, root_infoset)
    positions = subtree_leaves(index, player, infosets)
    weights = leaf_weights(plan, player, positions, anchor)
    beta = np.bincount(index.leaf_sequences[player][positions], weights=weights, minlength=index.size(player))
    nu: Dict[int, float] = {}
    best: Dict[int, int] = {}
    for infoset in reversed(infosets):
        seqs = index.sequences_of(player, infoset)
        values = beta[seqs.start:seqs.stop]
        action = int(policy[infoset]) if policy is not None and infoset in policy else int(np.argmax(values))
        best[infoset] = action
        nu[infoset] = float(values[action])
        if infoset != root_infoset:
            beta[index.infoset_parent[player][infoset]] += nu[infoset]
    return DeviationPass(beta, nu, best)


@dataclass
class TriggerReport:
    player: int
    trigger: int
    infoset: int
    mu: float
    beta_star: float
    delta: float
    action: int
    continuation: Dict[int, int] = field(default_factory=dict)
    beta: Dict[int, float] = field(default_factory=dict)
    nu: Dict[int, float] = field(default_factory=dict)


def _check_trigger(index: SequenceIndex, player: int, trigger: int) -> int:
    if trigger == EMPTY:
        raise InputError(PlanMessages.DEVIATION['EMPTY_TRIGGER'])
    infoset = index.infoset_of(player, trigger)
    if index.action_count(player, infoset) < 2:
        raise InputError(PlanMessages.DEVIATION['NO_ALTERNATIVE'].format(trigger=trigger, player=player))
    return infoset


def best_deviation(plan, player: int, trigger: int, follow: Optional[FollowValues] = None) -> TriggerReport:
    index = plan.index
    infoset = _check_trigger(index, player, trigger)
    follow = follow or follow_values(plan, player)
    result = deviation_pass(plan, player, trigger, infoset)

    seqs = index.sequences_of(player, infoset)
    values = result.beta[seqs.start:seqs.stop].copy()
    recommended = trigger - seqs.start
    values[recommended] = -np.inf
    action = int(np.argmax(values))
    beta_star = float(values[action])
    mu = float(follow.mu[trigger])

    continuation = dict(result.best)
    continuation[infoset] = action
    beta = {}
    for i in subtree_of(index, player, infoset):
        for s in index.sequences_of(player, i):
            beta[s] = float(result.beta[s])
    return TriggerReport(
        player=player, trigger=trigger, infoset=infoset, mu=mu, beta_star=beta_star,
        delta=beta_star - mu, action=action, continuation=continuation, beta=beta, nu=result.nu,
    )


def evaluate_deviation(plan, player: int, trigger: int, continuation: Mapping[int, int]) -> float:
    """Value of deviating from ``trigger`` and then playing the pure ``continuation``."""
    index = plan.index
    infoset = _check_trigger(index, player, trigger)
    chosen = continuation.get(infoset)
    if chosen is None or chosen == trigger - index.sequences_of(player, infoset).start:
        raise InputError(PlanMessages.DEVIATION['BAD_CONTINUATION'].format(infoset=infoset))
    return deviation_pass(plan, player, trigger, infoset, policy=continuation).nu[infoset]


def infoset_deviation_value(plan, player: int, trigger: int, infoset: int) -> float:
    """ν(I; σ!): best value at ``infoset`` after deviating from ``trigger``."""
    return deviation_pass(plan, player, trigger, infoset).nu[infoset]


def all_triggers(index: SequenceIndex, player: int) -> List[int]:
    return [s for s in range(1, index.size(player))
            if index.action_count(player, index.infoset_of(player, s)) > 1]


def social_welfare(plan) -> float:
    index = plan.index
    first, second = index.leaf_sequences[1], index.leaf_sequences[2]
    total = index.leaf_payoffs[1] + index.leaf_payoffs[2]
    return float(np.dot(total, plan.values(first, second)))


def subgame_welfare(plan, decomp, j: int) -> float:
    """Welfare collected at the leaves of subgame j."""
    index = plan.index
    positions = decomp.leaves_in(j)
    first, second = index.leaf_sequences[1][positions], index.leaf_sequences[2][positions]
    total = index.leaf_payoffs[1][positions] + index.leaf_payoffs[2][positions]
    return float(np.dot(total, plan.values(first, second)))


@dataclass
class ExploitabilityReport:
    reports: List[TriggerReport]
    social_welfare: float
    residual: float

    @property
    def max_delta(self) -> float:
        return max((r.delta for r in self.reports), default=0.0)

    def worst(self) -> Optional[TriggerReport]:
        return max(self.reports, key=lambda r: r.delta, default=None)

    def is_efce(self, tol: float = 1e-6) -> bool:
        return self.max_delta <= tol and self.residual <= tol


def exploitability_report(plan, pairs: Optional[RelevantPairSet] = None,
                          players: Iterable[int] = PLAYERS) -> ExploitabilityReport:
    index = plan.index
    if isinstance(plan, CorrelationPlan):
        residual = structural_residual(plan)
    else:
        pairs = pairs or relevant_pairs(index.tree, index)
        residual = StructuralConstraints(pairs).residual(plan.values(pairs.first, pairs.second))

    reports = []
    for player in players:
        follow = follow_values(plan, player)
        for trigger in all_triggers(index, player):
            reports.append(best_deviation(plan, player, trigger, follow))
    report = ExploitabilityReport(reports, social_welfare(plan), residual)
    logger.info("Exploitability over %d triggers: max δ*=%.3e, SW=%.6f, residual=%.2e",
                len(reports), report.max_delta, report.social_welfare, residual)
    return report
