"""
Safe bound ledgers derived from a blueprint.

For every pre-subgame trigger σ! the blueprint's margin is turned into a target
follow value μ̆(σ!) and a target deviation value β̌(σ!). The slack between the
blueprint and each target is split equally over the components below σ (its
child infosets and its leaf bundles) and pushed down until a head infoset of
some subgame is reached. A refinement that respects every recorded bound keeps
each pre-subgame trigger at least as unprofitable as under the blueprint.

Leaf bundles cover leaves of a pre-subgame sequence that sit inside a subgame
(the opponent moved last, inside the subgame). Their value depends on free
entries without passing through a head infoset, so they carry their own bounds.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from efce_resolver.constants import PlanMessages, SolverMessages
from efce_resolver.exceptions import InputError
from games.tree import PLAYERS
from .deviation import FollowValues, TriggerReport, all_triggers, best_deviation, follow_values, leaf_weights
from .subgames import PRE_SUBGAME, SubgameDecomposition

logger = logging.getLogger(__name__)

LOWER = 'lower'
UPPER = 'upper'
LOWER_BUNDLE = 'lower_bundle'
UPPER_BUNDLE = 'upper_bundle'


@dataclass(frozen=True)
class MarginTargets:
    mu: float
    beta: float
    alpha: float


def split_margin(mu: float, beta_star: float) -> MarginTargets:
    """Targets for one trigger; a non-positive margin is shared between both sides."""
    delta = beta_star - mu
    alpha = max(0.0, delta)
    if alpha > 0.0:
        return MarginTargets(mu=mu, beta=beta_star, alpha=alpha)
    return MarginTargets(mu=mu + delta / 2.0, beta=beta_star - delta / 2.0, alpha=alpha)


def margin_targets(blueprint, decomp: SubgameDecomposition, player: int, trigger: int,
                   report: Optional[TriggerReport] = None) -> MarginTargets:
    if not decomp.is_pre_subgame(player, trigger):
        raise InputError(PlanMessages.DEVIATION['SUBGAME_TRIGGER'].format(trigger=trigger, player=player))
    report = report or best_deviation(blueprint, player, trigger)
    return split_margin(report.mu, report.beta_star)


def leaf_bundles(decomp: SubgameDecomposition, player: int) -> Dict[int, Dict[int, np.ndarray]]:
    """sequence -> subgame -> leaf positions, for pre-subgame sequences with leaves inside subgames."""
    index = decomp.index
    own = index.leaf_sequences[player]
    inside = np.flatnonzero((decomp.leaf_subgame > PRE_SUBGAME) & (decomp.seq_subgame[player][own] == PRE_SUBGAME))
    out: Dict[int, Dict[int, np.ndarray]] = {}
    for position in inside.tolist():
        out.setdefault(int(own[position]), {}).setdefault(int(decomp.leaf_subgame[position]), []).append(position)
    return {s: {j: np.asarray(p, dtype=np.int64) for j, p in groups.items()} for s, groups in out.items()}


def bundle_value(plan, player: int, positions: np.ndarray, anchor: Optional[int] = None) -> float:
    return float(np.sum(leaf_weights(plan, player, positions, anchor)))


@dataclass
class SplitStep:
    """One equal split: ``slack`` at ``sequence`` divided over ``components``."""
    sequence: int
    slack: float
    components: int

    @property
    def share(self) -> float:
        return self.slack / self.components


@dataclass
class Propagation:
    heads: Dict[int, float] = field(default_factory=dict)
    bundles: Dict[Tuple[int, int], float] = field(default_factory=dict)
    trace: List[SplitStep] = field(default_factory=list)


def propagate_lower(blueprint, decomp: SubgameDecomposition, player: int, trigger: int, mu_target: float,
                    follow: Optional[FollowValues] = None,
                    bundles: Optional[Dict[int, Dict[int, np.ndarray]]] = None) -> Propagation:
    """Lower bounds v̆ on head infosets and bundles below ``trigger``."""
    index = decomp.index
    follow = follow or follow_values(blueprint, player)
    bundles = leaf_bundles(decomp, player) if bundles is None else bundles
    out = Propagation()
    stack = [(trigger, mu_target)]
    while stack:
        sequence, target = stack.pop()
        children = index.child_infosets[player][sequence]
        groups = bundles.get(sequence, {})
        count = len(children) + len(groups)
        if count == 0:
            continue
        slack = float(follow.mu[sequence]) - target
        step = SplitStep(sequence, slack, count)
        out.trace.append(step)
        d = step.share
        for infoset in children:
            bound = float(follow.v[infoset]) - d
            if decomp.infoset_subgame[player][infoset] != PRE_SUBGAME:
                out.heads[infoset] = bound
                continue
            f = d / index.action_count(player, infoset)
            for child in index.sequences_of(player, infoset):
                stack.append((child, float(follow.mu[child]) - f))
        for j, positions in groups.items():
            out.bundles[(sequence, j)] = bundle_value(blueprint, player, positions) - d
    return out


def propagate_upper(blueprint, decomp: SubgameDecomposition, player: int, trigger: int, beta_target: float,
                    report: Optional[TriggerReport] = None,
                    bundles: Optional[Dict[int, Dict[int, np.ndarray]]] = None) -> Propagation:
    """Upper bounds ν̌(·; trigger) on head infosets and bundles reached by deviating from ``trigger``."""
    index = decomp.index
    report = report or best_deviation(blueprint, player, trigger)
    bundles = leaf_bundles(decomp, player) if bundles is None else bundles
    out = Propagation()
    stack = [(s, beta_target) for s in index.sequences_of(player, report.infoset) if s != trigger]
    while stack:
        sequence, target = stack.pop()
        children = index.child_infosets[player][sequence]
        groups = bundles.get(sequence, {})
        count = len(children) + len(groups)
        if count == 0:
            continue
        step = SplitStep(sequence, target - report.beta[sequence], count)
        out.trace.append(step)
        s = step.share
        for infoset in children:
            bound = report.nu[infoset] + s
            if decomp.infoset_subgame[player][infoset] != PRE_SUBGAME:
                out.heads[infoset] = bound
                continue
            stack.extend((child, bound) for child in index.sequences_of(player, infoset))
        for j, positions in groups.items():
            out.bundles[(sequence, j)] = bundle_value(blueprint, player, positions, anchor=trigger) + s
    return out


@dataclass(frozen=True)
class LowerBound:
    player: int
    subgame: int
    infoset: int
    bound: float
    trigger: int


@dataclass(frozen=True)
class UpperBound:
    player: int
    subgame: int
    infoset: int
    trigger: int
    bound: float


@dataclass(frozen=True)
class BundleBound:
    """Bound on Σ u·ξ[anchor, ·] over the leaves of ``sequence`` inside ``subgame``."""
    player: int
    subgame: int
    sequence: int
    anchor: int
    trigger: int
    bound: float
    positions: np.ndarray = field(compare=False, repr=False)


class BoundsLedger:
    """Tightest bounds per head infoset, per (head, trigger) pair and per bundle."""

    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        self.lower: Dict[Tuple[int, int], LowerBound] = {}
        self.upper: Dict[Tuple[int, int, int], UpperBound] = {}
        self.lower_bundles: Dict[Tuple[int, int, int], BundleBound] = {}
        self.upper_bundles: Dict[Tuple[int, int, int, int], BundleBound] = {}
        self.blueprint_delta: Dict[Tuple[int, int], float] = {}

    def add_lower(self, entry: LowerBound) -> None:
        key = (entry.player, entry.infoset)
        current = self.lower.get(key)
        if current is None or entry.bound > current.bound:
            self.lower[key] = entry

    def add_upper(self, entry: UpperBound) -> None:
        self.upper[(entry.player, entry.infoset, entry.trigger)] = entry

    def add_lower_bundle(self, entry: BundleBound) -> None:
        key = (entry.player, entry.sequence, entry.subgame)
        current = self.lower_bundles.get(key)
        if current is None or entry.bound > current.bound:
            self.lower_bundles[key] = entry

    def add_upper_bundle(self, entry: BundleBound) -> None:
        self.upper_bundles[(entry.player, entry.sequence, entry.subgame, entry.trigger)] = entry

    def check(self, decomp: SubgameDecomposition) -> None:
        if decomp.fingerprint != self.fingerprint:
            raise InputError(SolverMessages.LP['LEDGER_MISMATCH'])

    def lower_for(self, j: int) -> List[LowerBound]:
        return [e for e in self.lower.values() if e.subgame == j]

    def upper_for(self, j: int) -> List[UpperBound]:
        return [e for e in self.upper.values() if e.subgame == j]

    def lower_bundles_for(self, j: int) -> List[BundleBound]:
        return [e for e in self.lower_bundles.values() if e.subgame == j]

    def upper_bundles_for(self, j: int) -> List[BundleBound]:
        return [e for e in self.upper_bundles.values() if e.subgame == j]

    def delta(self, player: int, trigger: int) -> float:
        return self.blueprint_delta[(player, trigger)]

    def __len__(self):
        return len(self.lower) + len(self.upper) + len(self.lower_bundles) + len(self.upper_bundles)

    def rows(self) -> Iterator[Tuple[int, int, int, str, int, float]]:
        """(player, subgame, infoset or sequence, kind, trigger, bound); trigger -1 for lower bounds."""
        for e in sorted(self.lower.values(), key=lambda e: (e.player, e.subgame, e.infoset)):
            yield e.player, e.subgame, e.infoset, LOWER, -1, e.bound
        for e in sorted(self.upper.values(), key=lambda e: (e.player, e.subgame, e.infoset, e.trigger)):
            yield e.player, e.subgame, e.infoset, UPPER, e.trigger, e.bound
        for e in sorted(self.lower_bundles.values(), key=lambda e: (e.player, e.subgame, e.sequence)):
            yield e.player, e.subgame, e.sequence, LOWER_BUNDLE, -1, e.bound
        for e in sorted(self.upper_bundles.values(), key=lambda e: (e.player, e.subgame, e.sequence, e.trigger)):
            yield e.player, e.subgame, e.sequence, UPPER_BUNDLE, e.trigger, e.bound

    def digest(self) -> str:
        text = '\n'.join(','.join(repr(v) for v in row) for row in self.rows())
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def __repr__(self):
        return (f"BoundsLedger(lower={len(self.lower)}, upper={len(self.upper)}, "
                f"bundles={len(self.lower_bundles)}+{len(self.upper_bundles)})")


def build_ledger(blueprint, decomp: SubgameDecomposition) -> BoundsLedger:
    """Blueprint δ* for every trigger and the propagated bounds of every pre-subgame trigger."""
    ledger = BoundsLedger(decomp.fingerprint)
    index = decomp.index
    for player in PLAYERS:
        follow = follow_values(blueprint, player)
        bundles = leaf_bundles(decomp, player)
        for trigger in all_triggers(index, player):
            report = best_deviation(blueprint, player, trigger, follow)
            ledger.blueprint_delta[(player, trigger)] = report.delta
            if not decomp.is_pre_subgame(player, trigger):
                continue
            targets = split_margin(report.mu, report.beta_star)
            lower = propagate_lower(blueprint, decomp, player, trigger, targets.mu, follow, bundles)
            for infoset, bound in lower.heads.items():
                ledger.add_lower(LowerBound(player, int(decomp.infoset_subgame[player][infoset]),
                                            infoset, bound, trigger))
            for (sequence, j), bound in lower.bundles.items():
                ledger.add_lower_bundle(BundleBound(player, j, sequence, sequence, trigger, bound,
                                                    bundles[sequence][j]))
            upper = propagate_upper(blueprint, decomp, player, trigger, targets.beta, report, bundles)
            for infoset, bound in upper.heads.items():
                ledger.add_upper(UpperBound(player, int(decomp.infoset_subgame[player][infoset]),
                                            infoset, trigger, bound))
            for (sequence, j), bound in upper.bundles.items():
                ledger.add_upper_bundle(BundleBound(player, j, sequence, trigger, trigger, bound,
                                                    bundles[sequence][j]))
    logger.info("Built %r", ledger)
    return ledger
