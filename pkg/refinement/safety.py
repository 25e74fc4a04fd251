"""
Constraint violations of a subgame refinement and the safety audit of a full plan.

The constraint families of subgame j are

- in-subgame triggers:   δ*(ξ̃; σ!) − δ*(ξ0; σ!)
- upper ledger entries:  ν(I, ξ̃; σ!) − ν̌(I; σ!)
- lower ledger entries:  v̆(I) − v(ξ̃, I)
- leaf bundles:          bound − value (lower) and value − bound (upper)

A refinement is feasible when every term is at most 0.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from correlation.bounds import BoundsLedger, bundle_value
from correlation.deviation import best_deviation, follow_values, infoset_deviation_value
from correlation.plans import CorrelationPlan
from correlation.subgames import SubgameDecomposition
from games.tree import PLAYERS

logger = logging.getLogger(__name__)

TRIGGER = 'trigger'
UPPER = 'upper'
LOWER = 'lower'
LOWER_BUNDLE = 'lower_bundle'
UPPER_BUNDLE = 'upper_bundle'


def violation_terms(plan, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int) -> Dict[Tuple, float]:
    """Every constraint of subgame j keyed by (family, player, ...) with its violation at ``plan``."""
    ledger.check(decomp)
    terms: Dict[Tuple, float] = {}
    follow = {p: follow_values(plan, p) for p in PLAYERS}
    for player in PLAYERS:
        for trigger in decomp.triggers(player, j):
            report = best_deviation(plan, player, trigger, follow[player])
            terms[(TRIGGER, player, trigger)] = report.delta - ledger.delta(player, trigger)
    for e in ledger.upper_for(j):
        value = infoset_deviation_value(plan, e.player, e.trigger, e.infoset)
        terms[(UPPER, e.player, e.infoset, e.trigger)] = value - e.bound
    for e in ledger.lower_for(j):
        terms[(LOWER, e.player, e.infoset)] = e.bound - float(follow[e.player].v[e.infoset])
    for e in ledger.lower_bundles_for(j):
        terms[(LOWER_BUNDLE, e.player, e.sequence)] = e.bound - bundle_value(plan, e.player, e.positions, e.anchor)
    for e in ledger.upper_bundles_for(j):
        terms[(UPPER_BUNDLE, e.player, e.sequence, e.trigger)] = \
            bundle_value(plan, e.player, e.positions, e.anchor) - e.bound
    return terms


def max_violation(plan, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int) -> float:
    """Largest constraint violation of subgame j; 0.0 when the subgame carries no constraint."""
    terms = violation_terms(plan, decomp, ledger, j)
    return max(terms.values(), default=0.0)


@dataclass
class ViolationSample:
    iteration: int
    violation: float
    elapsed: float


@dataclass
class RefinementResult:
    subgame: int
    method: str
    plan: CorrelationPlan
    status: str
    subgame_welfare: float
    blueprint_welfare: float
    max_violation: float
    iterations: int = 0
    elapsed: float = 0.0
    converged: bool = True
    series: List[ViolationSample] = field(default_factory=list)
    stats: Dict[str, float] = field(default_factory=dict)

    @property
    def welfare_gain(self) -> float:
        return self.subgame_welfare - self.blueprint_welfare

    def summary(self) -> Dict[str, object]:
        return {
            'subgame': self.subgame,
            'method': self.method,
            'status': self.status,
            'subgame_welfare': self.subgame_welfare,
            'blueprint_welfare': self.blueprint_welfare,
            'max_violation': self.max_violation,
            'iterations': self.iterations,
            'elapsed': self.elapsed,
            'converged': self.converged,
            **self.stats,
        }


@dataclass
class SafetyFailure:
    player: int
    trigger: int
    delta: float
    allowed: float

    @property
    def excess(self) -> float:
        return self.delta - self.allowed


@dataclass
class SafetyAudit:
    checked: int
    failures: List[SafetyFailure]
    max_delta: float

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst_excess(self) -> float:
        return max((f.excess for f in self.failures), default=0.0)


def safety_audit(plan, ledger: BoundsLedger, tol: float = 1e-6, players=PLAYERS) -> SafetyAudit:
    """Check δ*(ξ̃; σ!) <= max(0, δ*(ξ0; σ!)) + tol for every trigger the ledger knows."""
    failures = []
    checked = 0
    worst = 0.0
    for player in players:
        follow = follow_values(plan, player)
        triggers = sorted(t for p, t in ledger.blueprint_delta if p == player)
        for trigger in triggers:
            delta = best_deviation(plan, player, trigger, follow).delta
            allowed = max(0.0, ledger.delta(player, trigger))
            checked += 1
            worst = max(worst, delta)
            if delta > allowed + tol:
                failures.append(SafetyFailure(player, trigger, delta, allowed))
    audit = SafetyAudit(checked, failures, worst)
    if failures:
        logger.warning("Safety audit: %d of %d triggers fail (worst excess %.3e)",
                       len(failures), checked, audit.worst_excess)
    else:
        logger.info("Safety audit passed for %d triggers", checked)
    return audit
