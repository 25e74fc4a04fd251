"""
Online play: a mediator samples recommendations from the blueprint and, the
first time play enters a subgame, refines that subgame once and samples the
rest of the path from the refined plan.

Players are modelled as recommendation followers; incentives are analysed
offline by the audits.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, MutableMapping, Optional, Tuple

import numpy as np

from correlation.bounds import BoundsLedger, build_ledger
from correlation.subgames import PRE_SUBGAME, SubgameDecomposition
from efce_resolver.exceptions import InputError, InvariantViolation
from games.tree import GameTree, opponent
from refinement.lp_refine import REFINERS, refiner
from refinement.safety import RefinementResult

logger = logging.getLogger(__name__)

BLUEPRINT = 'blueprint'
REFINED = 'refined'
RESOLVERS = REFINERS


@dataclass
class PlayStep:
    node: int
    player: int
    infoset: int
    action: int
    label: str
    probability: float
    source: str
    fallback: bool = False
    followed: bool = True


@dataclass
class PlayTranscript:
    seed: Optional[int]
    steps: List[PlayStep] = field(default_factory=list)
    leaf: int = -1
    payoffs: Tuple[float, float] = (0.0, 0.0)
    subgame: int = PRE_SUBGAME
    refinement: Optional[RefinementResult] = None
    refine_seconds: float = 0.0

    @property
    def refinements(self) -> int:
        return 0 if self.refinement is None else 1

    @property
    def fallbacks(self) -> int:
        return sum(step.fallback for step in self.steps)

    @property
    def actions(self) -> List[int]:
        return [step.action for step in self.steps]

    def labels(self) -> List[str]:
        return [step.label for step in self.steps]

    def replay(self, tree: GameTree) -> int:
        """Follow the recorded actions from the root and return the leaf reached."""
        node = tree.root
        for step in self.steps:
            if step.node != node:
                raise InvariantViolation(
                    f"Transcript step at node {step.node} does not match replayed node {node}.")
            node = tree.children[node][step.action]
        return node


def _conditional(source, sequences: range, parent: int, partner: int, first_is_owner: bool, tol: float):
    """ξ[child, partner] / ξ[parent, partner] for every child sequence of one infoset."""
    children = np.arange(sequences.start, sequences.stop)
    partners = np.full(len(children), partner)
    if first_is_owner:
        mass = source.values(np.array([parent]), np.array([partner]))[0]
        child_mass = source.values(children, partners)
    else:
        mass = source.values(np.array([partner]), np.array([parent]))[0]
        child_mass = source.values(partners, children)
    child_mass = np.clip(np.asarray(child_mass, dtype=np.float64), 0.0, None)
    if mass <= tol or child_mass.sum() <= tol:
        return None
    return child_mass / child_mass.sum()


def play_online(tree: GameTree, blueprint, decomp: SubgameDecomposition, resolver: str = 'lp',
                seed: Optional[int] = 0, ledger: Optional[BoundsLedger] = None,
                rng: Optional[np.random.Generator] = None,
                cache: Optional[MutableMapping[int, RefinementResult]] = None,
                tol: float = 1e-12, **options) -> PlayTranscript:
    """
    Sample one recommendation path from the root to a leaf.

    ``rng`` overrides ``seed`` so many plays can share one stream. ``cache``
    maps subgame → refinement and is reused across plays; refinements are
    deterministic given the blueprint, so reusing them does not change the
    sampled distribution.
    """
    refine = refiner(resolver)
    rng = rng if rng is not None else np.random.default_rng(seed)
    index = decomp.index
    transcript = PlayTranscript(seed=seed)
    source = blueprint
    origin = BLUEPRINT

    node = tree.root
    while not tree.is_leaf(node):
        j = int(decomp.node_subgame[node])
        if j != PRE_SUBGAME and transcript.subgame == PRE_SUBGAME:
            transcript.subgame = j
            started = time.perf_counter()
            result = cache.get(j) if cache is not None else None
            if result is None:
                if ledger is None:
                    ledger = build_ledger(blueprint, decomp)
                result = refine(blueprint, decomp, ledger, j, **options)
                if cache is not None:
                    cache[j] = result
            transcript.refinement = result
            transcript.refine_seconds = time.perf_counter() - started
            source = result.plan
            origin = REFINED
            logger.debug("Entered subgame %d at node %s; refined in %.3fs",
                         j, tree.labels[node], transcript.refine_seconds)
        elif j != transcript.subgame and transcript.subgame != PRE_SUBGAME:
            raise InvariantViolation(f"Play left subgame {transcript.subgame} for subgame {j}.")

        player = int(tree.players[node])
        infoset = tree.infoset_at(node)
        sequences = index.sequences_of(player, infoset.index)
        parent = int(index.node_sequences[node, player - 1])
        partner = int(index.node_sequences[node, opponent(player) - 1])
        probs = _conditional(source, sequences, parent, partner, player == 1, tol)
        fallback = probs is None
        if fallback:
            probs = np.full(infoset.action_count, 1.0 / infoset.action_count)
            logger.warning("Zero-probability prefix at node %s; recommending uniformly", tree.labels[node])
        action = int(rng.choice(infoset.action_count, p=probs))
        transcript.steps.append(PlayStep(
            node=node, player=player, infoset=infoset.index, action=action,
            label=infoset.actions[action], probability=float(probs[action]),
            source=origin, fallback=fallback,
        ))
        node = tree.children[node][action]

    transcript.leaf = node
    transcript.payoffs = (float(tree.payoffs[node, 0]), float(tree.payoffs[node, 1]))
    return transcript


def play_many(tree: GameTree, blueprint, decomp: SubgameDecomposition, plays: int, resolver: str = 'lp',
              seed: int = 0, ledger: Optional[BoundsLedger] = None, **options) -> List[PlayTranscript]:
    """``plays`` playthroughs from one random stream, sharing refinements per subgame."""
    if plays < 1:
        raise InputError(f"Number of plays must be positive, got {plays}.")
    rng = np.random.default_rng(seed)
    cache: Dict[int, RefinementResult] = {}
    if ledger is None and decomp.count:
        ledger = build_ledger(blueprint, decomp)
    transcripts = [
        play_online(tree, blueprint, decomp, resolver, seed=seed, ledger=ledger, rng=rng, cache=cache, **options)
        for _ in range(plays)
    ]
    logger.info("Played %d games (%d refinements computed, %d fallbacks)",
                plays, len(cache), sum(t.fallbacks for t in transcripts))
    return transcripts


def leaf_frequencies(transcripts: List[PlayTranscript]) -> Dict[int, float]:
    counts: Dict[int, int] = {}
    for transcript in transcripts:
        counts[transcript.leaf] = counts.get(transcript.leaf, 0) + 1
    total = len(transcripts)
    return {leaf: count / total for leaf, count in counts.items()}
