"""
Subgame refinement by regret-minimization self-play.

The mediator minimizes and the deviator maximizes Σ_k λ_k·g_k(ξ, y_k) over
the plan space of subgame j, the multiplier simplex and the deviation
strategies. The t-weighted average of the mediator's iterates is audited
exactly every ``audit_every`` iterations; the run stops once its largest
constraint violation is at most ``epsilon``.
"""

import logging
import time

import numpy as np

from correlation.bounds import BoundsLedger
from correlation.deviation import subgame_welfare
from correlation.plans import CorrelationPlan
from correlation.subgames import SubgameDecomposition
from efce_resolver.constants import SolverMessages
from efce_resolver.exceptions import InputError
from .linear import ITERATION_LIMIT
from .regret import DeviatorRegretMinimizer, MediatorRegretMinimizer
from .safety import RefinementResult, ViolationSample, max_violation
from .scaled import decompose_xi_j

logger = logging.getLogger(__name__)

CONVERGED = 'converged'


def self_play_refine(blueprint, decomp: SubgameDecomposition, ledger: BoundsLedger, j: int,
                     epsilon: float = 1e-2, max_iters: int = 20000, audit_every: int = 50) -> RefinementResult:
    if epsilon <= 0:
        raise InputError(SolverMessages.CFR['EPSILON'].format(epsilon=epsilon))
    if audit_every < 1:
        raise InputError(f"audit_every must be at least 1, got {audit_every}.")
    started = time.perf_counter()
    program = decompose_xi_j(decomp, j, blueprint)
    pairs = program.pairs
    restriction = CorrelationPlan(pairs, np.asarray(blueprint.values(pairs.first, pairs.second), dtype=np.float64))
    deviator = DeviatorRegretMinimizer(decomp, ledger, j, pairs)

    violation = max_violation(restriction, decomp, ledger, j)
    series = [ViolationSample(0, violation, 0.0)]
    plan = restriction
    iterations = 0
    if max_iters > 0 and len(deviator):
        mediator = MediatorRegretMinimizer(program)
        for t in range(1, max_iters + 1):
            x = mediator.recommend()
            state = deviator.recommend()
            mediator.observe(deviator.mediator_loss(state))
            deviator.observe(x)
            iterations = t
            if t % audit_every == 0 or t == max_iters:
                plan = mediator.average_plan()
                violation = max_violation(plan, decomp, ledger, j)
                series.append(ViolationSample(t, violation, time.perf_counter() - started))
                logger.debug("Subgame %d, iteration %d: max violation %.3e", j, t, violation)
                if violation <= epsilon:
                    break
    elif not len(deviator):
        logger.info("Subgame %d carries no constraints; keeping the blueprint", j)

    converged = violation <= epsilon
    elapsed = time.perf_counter() - started
    result = RefinementResult(
        subgame=j, method='cfr', plan=plan, status=CONVERGED if converged else ITERATION_LIMIT,
        subgame_welfare=subgame_welfare(plan, decomp, j),
        blueprint_welfare=subgame_welfare(blueprint, decomp, j),
        max_violation=violation, iterations=iterations, elapsed=elapsed, converged=converged, series=series,
        stats={'constraints': len(deviator), 'steps': len(program), 'simplices': len(program.free_expands),
               'seconds_per_iteration': elapsed / iterations if iterations else 0.0},
    )
    if converged:
        logger.info("Subgame %d refined by self-play in %d iterations: max violation %.2e (%.2fs)",
                    j, iterations, violation, elapsed)
    else:
        logger.warning("Subgame %d self-play stopped after %d iterations at max violation %.2e (target %.1e)",
                       j, iterations, violation, epsilon)
    return result
