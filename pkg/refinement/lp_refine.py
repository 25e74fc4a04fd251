"""
Linear programs over correlation plans.

``build_full_game_lp`` states the EFCE conditions of the whole game;
``build_refinement_lp`` keeps the pre-subgame entries at the blueprint and
asks the entries of one subgame to respect the in-subgame trigger constraints
and the bounds ledger. Deviation values are encoded with free ν variables
bounded below by the value of every action; an upper bound on ν then caps the
best deviation.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from correlation.bounds import BoundsLedger
from correlation.deviation import all_triggers, leaf_pairs, subgame_welfare, subtree_of
from correlation.plans import CorrelationPlan, StructuralConstraints
from correlation.relevance import RelevantPairSet, relevant_pairs
from correlation.subgames import PRE_SUBGAME, SubgameDecomposition
from efce_resolver.constants import SolverMessages
from efce_resolver.exceptions import InputError, InvariantViolation, SolverError
from games.sequences import SequenceIndex, build_sequence_index
from games.tree import GameTree, PLAYERS
from .cfr_refine import self_play_refine
from .linear import EQ, EXPORTED, GE, INFEASIBLE, LE, LinearProgram, LpSolution, OPTIMAL, solve_lp
from .safety import RefinementResult, max_violation

logger = logging.getLogger(__name__)

FULL_OBJECTIVES = ('max_sw', 'feasibility')
REFINEMENT_OBJECTIVES = ('max_subgame_sw', 'max_sw', 'feasibility')


@dataclass
class PlanProgram:
    """An LP whose first block of columns are plan entries over ``pairs``."""
    lp: LinearProgram
    pairs: RelevantPairSet
    xi: np.ndarray
    pinned: Optional[np.ndarray] = None
    pinned_values: Optional[np.ndarray] = None

    def plan_from(self, solution: LpSolution) -> CorrelationPlan:
        entries = np.maximum(solution.x[self.xi], 0.0)
        if self.pinned is not None:
            entries[self.pinned] = self.pinned_values[self.pinned]
        return CorrelationPlan(self.pairs, entries)


class _ProgramBuilder:
    """Adds plan-derived expressions and value variables to an LP."""

    def __init__(self, lp: LinearProgram, pairs: RelevantPairSet, xi: np.ndarray):
        self.lp = lp
        self.pairs = pairs
        self.index: SequenceIndex = pairs.index
        self.xi = xi

    def leaf_expression(self, player: int, positions: np.ndarray, anchor: Optional[int] = None):
        """Columns and coefficients of Σ u_i(z)·ξ[own or anchor, opp] over the given leaves."""
        if len(positions) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        first, second = leaf_pairs(self.index, player, positions, anchor)
        found = self.pairs.index_of(first, second)
        if np.any(found < 0):
            bad = int(np.flatnonzero(found < 0)[0])
            raise InvariantViolation(
                f"Leaf pair ({int(first[bad])}, {int(second[bad])}) is missing from the program's pair set.")
        return self.xi[found], self.index.leaf_payoffs[player][positions]

    def sequence_leaves(self, player: int, sequence: int, anchor: Optional[int] = None):
        return self.leaf_expression(player, self.index.leaves_at(player, sequence), anchor)

    def follow_variables(self, player: int, sequences: Iterable[int], tag: str) -> Dict[int, int]:
        """Free μ columns with μ(σ) = own leaves at σ + Σ μ over successors."""
        sequences = sorted(int(s) for s in sequences)
        mu = {s: self.lp.add_variable(f'mu{tag}_{player}_{s}', -math.inf, math.inf) for s in sequences}
        for s in sequences:
            cols, vals = self.sequence_leaves(player, s)
            successors = self.index.successors(player, s)
            missing = [t for t in successors if t not in mu]
            if missing:
                raise InvariantViolation(f"Sequence {missing[0]} below {s} has no follow variable.")
            row_cols = np.concatenate([[mu[s]], [mu[t] for t in successors], cols]).astype(np.int64)
            row_vals = np.concatenate([[1.0], -np.ones(len(successors)), -vals])
            self.lp.add_row(row_cols, row_vals, EQ, 0.0, name=f'mu{tag}_{player}_{s}')
        return mu

    def deviation_block(self, player: int, anchor: int, roots: Sequence[int], tag: str) -> Dict[int, int]:
        """Free ν columns over the subtrees of ``roots`` with ν(I) >= value of each action."""
        infosets: List[int] = []
        for root in roots:
            infosets.extend(subtree_of(self.index, player, root))
        nu = {i: self.lp.add_variable(f'nu{tag}_{player}_{anchor}_{i}', -math.inf, math.inf) for i in infosets}
        for infoset in infosets:
            for sequence in self.index.sequences_of(player, infoset):
                cols, vals = self.beta_expression(player, anchor, sequence, nu)
                self.lp.add_row(np.concatenate([[nu[infoset]], cols]).astype(np.int64),
                                np.concatenate([[1.0], -vals]), GE, 0.0,
                                name=f'nu{tag}_{player}_{anchor}_{infoset}_{sequence}')
        return nu

    def beta_expression(self, player: int, anchor: int, sequence: int, nu: Mapping[int, int]):
        """β(σ; anchor) as leaves at σ weighted by ξ[anchor, ·] plus ν of the child infosets."""
        cols, vals = self.sequence_leaves(player, sequence, anchor)
        children = self.index.child_infosets[player][sequence]
        return (np.concatenate([cols, [nu[i] for i in children]]).astype(np.int64),
                np.concatenate([vals, np.ones(len(children))]))

    def trigger_rows(self, player: int, trigger: int, mu_column: int, slack: float, tag: str) -> None:
        """μ(σ!) − β(σ'; σ!) >= −slack for every alternative σ' at the trigger's infoset."""
        infoset = self.index.infoset_of(player, trigger)
        alternatives = [s for s in self.index.sequences_of(player, infoset) if s != trigger]
        roots = [i for s in alternatives for i in self.index.child_infosets[player][s]]
        nu = self.deviation_block(player, trigger, roots, tag)
        for alternative in alternatives:
            cols, vals = self.beta_expression(player, trigger, alternative, nu)
            self.lp.add_row(np.concatenate([[mu_column], cols]).astype(np.int64),
                            np.concatenate([[1.0], -vals]), GE, -slack,
                            name=f'trigger{tag}_{player}_{trigger}_{alternative}')

    def welfare_objective(self, positions: np.ndarray) -> None:
        first = self.index.leaf_sequences[1][positions]
        second = self.index.leaf_sequences[2][positions]
        found = self.pairs.index_of(first, second)
        total = self.index.leaf_payoffs[1][positions] + self.index.leaf_payoffs[2][positions]
        self.lp.add_objective(self.xi[found], total)


def _plan_columns(lp: LinearProgram, pairs: RelevantPairSet, lower=0.0, upper=math.inf) -> np.ndarray:
    names = [f'xi_{a}_{b}' for a, b in pairs]
    return lp.add_variables(names, lower, upper)


def build_full_game_lp(tree: GameTree, index: Optional[SequenceIndex] = None,
                       pairs: Optional[RelevantPairSet] = None, objective: str = 'max_sw') -> PlanProgram:
    """EFCE conditions over every relevant pair, maximizing welfare or just feasible."""
    if objective not in FULL_OBJECTIVES:
        raise InputError(SolverMessages.LP['UNKNOWN_OBJECTIVE'].format(objective=objective))
    index = index or build_sequence_index(tree)
    pairs = pairs or relevant_pairs(tree, index)
    lp = LinearProgram('efce')
    xi = _plan_columns(lp, pairs)
    constraints = StructuralConstraints(pairs)
    lp.add_matrix(constraints.matrix, xi, EQ, constraints.rhs, prefix='flow')

    builder = _ProgramBuilder(lp, pairs, xi)
    for player in PLAYERS:
        mu = builder.follow_variables(player, range(1, index.size(player)), tag='')
        for trigger in all_triggers(index, player):
            builder.trigger_rows(player, trigger, mu[trigger], 0.0, tag='')
    if objective == 'max_sw':
        builder.welfare_objective(np.arange(len(index.leaf_nodes)))
    logger.info("Full-game LP: %r", lp)
    return PlanProgram(lp, pairs, xi)


def build_refinement_lp(blueprint, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int,
                        objective: str = 'max_subgame_sw') -> PlanProgram:
    """Safe refinement of subgame j: pinned pre-subgame entries plus the three constraint families."""
    if objective not in REFINEMENT_OBJECTIVES:
        raise InputError(SolverMessages.LP['UNKNOWN_OBJECTIVE'].format(objective=objective))
    ledger.check(decomp)
    pairs = decomp.restricted_pairs(j)
    pinned = decomp.pair_class(pairs.first, pairs.second) == PRE_SUBGAME
    values = np.asarray(blueprint.values(pairs.first, pairs.second), dtype=np.float64)
    lp = LinearProgram(f'refine_{j}')
    xi = _plan_columns(lp, pairs, np.where(pinned, values, 0.0), np.where(pinned, values, math.inf))
    constraints = StructuralConstraints(pairs)
    lp.add_matrix(constraints.matrix, xi, EQ, constraints.rhs, prefix='flow')

    builder = _ProgramBuilder(lp, pairs, xi)
    for player in PLAYERS:
        mu = builder.follow_variables(player, decomp.subgame_sequences(player, j), tag='')
        for trigger in decomp.triggers(player, j):
            builder.trigger_rows(player, trigger, mu[trigger], ledger.delta(player, trigger), tag='')
        for entry in ledger.lower_for(j):
            if entry.player != player:
                continue
            seqs = decomp.index.sequences_of(player, entry.infoset)
            lp.add_row([mu[s] for s in seqs], np.ones(len(seqs)), GE, entry.bound,
                       name=f'lower_{player}_{entry.infoset}')

    for entry in ledger.upper_for(j):
        nu = builder.deviation_block(entry.player, entry.trigger, [entry.infoset], tag='c')
        column = nu[entry.infoset]
        lp.set_bounds(column, -math.inf, entry.bound)
    for entry in ledger.lower_bundles_for(j):
        cols, vals = builder.leaf_expression(entry.player, entry.positions, entry.anchor)
        lp.add_row(cols, vals, GE, entry.bound, name=f'lbundle_{entry.player}_{entry.sequence}')
    for entry in ledger.upper_bundles_for(j):
        cols, vals = builder.leaf_expression(entry.player, entry.positions, entry.anchor)
        lp.add_row(cols, vals, LE, entry.bound, name=f'ubundle_{entry.player}_{entry.sequence}_{entry.trigger}')

    if objective != 'feasibility':
        builder.welfare_objective(decomp.leaves_in(j))
    logger.info("Refinement LP for subgame %d: %r (%d pinned entries)", j, lp, int(pinned.sum()))
    return PlanProgram(lp, pairs, xi, pinned, values)


def solve_full_game(tree: GameTree, index: Optional[SequenceIndex] = None, pairs: Optional[RelevantPairSet] = None,
                    objective: str = 'max_sw', backend: str = 'highs', **options) -> CorrelationPlan:
    program = build_full_game_lp(tree, index, pairs, objective)
    solution = solve_lp(program.lp, backend=backend, **options)
    if not solution.optimal:
        raise SolverError(SolverMessages.LP['NOT_OPTIMAL'].format(status=solution.status), solution.status)
    return program.plan_from(solution)


def refine_subgame_lp(blueprint, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int,
                      objective: str = 'max_subgame_sw', backend: str = 'highs', max_iterations: int = 50000,
                      export_path=None, solution_path=None) -> RefinementResult:
    started = time.perf_counter()
    program = build_refinement_lp(blueprint, decomp, ledger, j, objective)
    solution = solve_lp(program.lp, backend=backend, max_iterations=max_iterations,
                        path=export_path, solution=solution_path)
    if solution.status == EXPORTED:
        plan = CorrelationPlan(program.pairs, program.pinned_values.copy())
    elif solution.status == INFEASIBLE:
        raise SolverError(SolverMessages.LP['INFEASIBLE_REFINEMENT'].format(subgame=j), solution.status)
    elif solution.status != OPTIMAL:
        raise SolverError(SolverMessages.LP['NOT_OPTIMAL'].format(status=solution.status), solution.status)
    else:
        plan = program.plan_from(solution)

    result = RefinementResult(
        subgame=j, method='lp', plan=plan, status=solution.status,
        subgame_welfare=subgame_welfare(plan, decomp, j),
        blueprint_welfare=subgame_welfare(blueprint, decomp, j),
        max_violation=max_violation(plan, decomp, ledger, j),
        iterations=solution.iterations, elapsed=time.perf_counter() - started,
        stats={'variables': program.lp.num_variables, 'rows': program.lp.num_rows,
               'lp_residual': solution.residual},
    )
    logger.info("Subgame %d refined by LP: SW %.6g -> %.6g, max violation %.2e (%.2fs)",
                j, result.blueprint_welfare, result.subgame_welfare, result.max_violation, result.elapsed)
    return result


def assemble_complete_refinement(blueprint, decomp: SubgameDecomposition,
                                 results: Mapping[int, RefinementResult]) -> CorrelationPlan:
    """Blueprint over every relevant pair with each refined subgame's entries written in."""
    pairs = decomp.pairs
    entries = np.asarray(blueprint.values(pairs.first, pairs.second), dtype=np.float64).copy()
    for j, result in results.items():
        mask = decomp.pair_labels == j
        entries[mask] = result.plan.values(pairs.first[mask], pairs.second[mask])
    return CorrelationPlan(pairs, entries)


def refine_all(blueprint, decomp: SubgameDecomposition, ledger: BoundsLedger, method: str = 'lp',
               threads: int = 1, subgames: Optional[Iterable[int]] = None, **options) -> Dict[int, RefinementResult]:
    """Refine every requested subgame, concurrently when ``threads`` > 1."""
    run = refiner(method)
    targets = list(subgames) if subgames is not None else list(range(1, decomp.count + 1))
    if threads <= 1:
        return {j: run(blueprint, decomp, ledger, j, **options) for j in targets}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {j: pool.submit(run, blueprint, decomp, ledger, j, **options) for j in targets}
        return {j: futures[j].result() for j in targets}


REFINERS = {
    'lp': refine_subgame_lp,
    'cfr': self_play_refine,
}


def refiner(method: str):
    try:
        return REFINERS[method]
    except KeyError:
        raise InputError(SolverMessages.RESOLVER['UNKNOWN_METHOD'].format(method=method)) from None
