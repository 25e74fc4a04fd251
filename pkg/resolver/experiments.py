"""
Experiment harness: blueprint vs refined welfare over a grid of Battleship
instances, and the violation-vs-iteration trace of self-play refinement.

Both experiments write CSV and return the rows so callers can persist them.
"""

import csv
import logging
import time
import tracemalloc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from correlation.bounds import build_ledger
from correlation.plans import BlueprintSpec
from correlation.subgames import decompose_by_public_state
from efce_resolver.exceptions import InputError
from games.generators import BattleshipConfig, build_battleship
from games.sequences import build_sequence_index
from refinement.cfr_refine import self_play_refine
from refinement.lp_refine import refiner
from refinement.safety import RefinementResult, ViolationSample

logger = logging.getLogger(__name__)

WELFARE_HEADER = ['width', 'height', 'ship', 'turns', 'gamma', 'blueprint', 'seeds', 'subgame_pairs',
                  'blueprint_sw', 'refined_sw', 'max_violation', 'seconds']
CONVERGENCE_HEADER = ['iteration', 'violation', 'elapsed']


@dataclass
class WelfareGrid:
    games: List[BattleshipConfig]
    blueprints: List[List[BlueprintSpec]]
    rounds: int = 1
    subgame: int = 1
    method: str = 'lp'
    objective: str = 'max_subgame_sw'


@dataclass
class WelfareResult:
    config: BattleshipConfig
    blueprint: str
    seeds: int
    subgame_pairs: int
    blueprint_welfare: float
    refined_welfare: float
    max_violation: float
    seconds: float

    def as_fields(self) -> Dict[str, object]:
        return {
            'width': self.config.width, 'height': self.config.height, 'ship': self.config.ship,
            'turns': self.config.turns, 'gamma': self.config.gamma, 'blueprint': self.blueprint,
            'seeds': self.seeds, 'subgame_pairs': self.subgame_pairs,
            'blueprint_welfare': self.blueprint_welfare, 'refined_welfare': self.refined_welfare,
            'max_violation': self.max_violation, 'seconds': self.seconds,
        }

    def csv_row(self) -> list:
        fields = self.as_fields()
        fields['blueprint_sw'] = fields.pop('blueprint_welfare')
        fields['refined_sw'] = fields.pop('refined_welfare')
        return [fields[name] for name in WELFARE_HEADER]


@dataclass
class ConvergenceSettings:
    game: BattleshipConfig
    blueprint: BlueprintSpec = field(default_factory=BlueprintSpec)
    rounds: int = 1
    subgame: int = 1
    epsilon: float = 1e-2
    max_iters: int = 20000
    audit_every: int = 50

    def as_config(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class ConvergenceReport:
    result: RefinementResult
    peak_memory_kib: float
    seconds_per_iteration: float

    @property
    def series(self) -> List[ViolationSample]:
        return self.result.series


def welfare_row(config: BattleshipConfig, specs: Sequence[BlueprintSpec], rounds: int = 1, subgame: int = 1,
                method: str = 'lp', **options) -> WelfareResult:
    """Blueprint and refined welfare of one subgame, averaged over the blueprint seeds."""
    refine = refiner(method)
    if method == 'cfr':
        options.pop('objective', None)
    started = time.perf_counter()
    tree = build_battleship(config.validate())
    index = build_sequence_index(tree)
    decomp = decompose_by_public_state(tree, rounds, index=index)
    if not 1 <= subgame <= decomp.count:
        raise InputError(f"Subgame {subgame} does not exist (J = {decomp.count}).")

    before, after, violations = [], [], []
    for spec in specs:
        blueprint = spec.build(tree, index)
        ledger = build_ledger(blueprint, decomp)
        result = refine(blueprint, decomp, ledger, subgame, **options)
        before.append(result.blueprint_welfare)
        after.append(result.subgame_welfare)
        violations.append(result.max_violation)

    row = WelfareResult(
        config=config,
        blueprint=specs[0].kind if len(specs) > 1 else specs[0].label,
        seeds=len(specs),
        subgame_pairs=len(decomp.restricted_pairs(subgame)),
        blueprint_welfare=float(np.mean(before)),
        refined_welfare=float(np.mean(after)),
        max_violation=float(max(violations)),
        seconds=time.perf_counter() - started,
    )
    logger.info("%dx%d T=%d γ=%g %s: BP %.4e -> refined %.4e (%.1fs)", config.width, config.height,
                config.turns, config.gamma, row.blueprint, row.blueprint_welfare, row.refined_welfare, row.seconds)
    return row


def write_welfare_csv(rows: Sequence[WelfareResult], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(WELFARE_HEADER)
        for row in rows:
            writer.writerow(row.csv_row())
    return path


def write_series_csv(series: Sequence[ViolationSample], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(CONVERGENCE_HEADER)
        for sample in series:
            writer.writerow([sample.iteration, repr(float(sample.violation)), f'{sample.elapsed:.6f}'])
    return path


def run_welfare_experiment(grid: WelfareGrid, output_path=None, threads: int = 1, **options) -> List[WelfareResult]:
    """One row per (game, blueprint) pair of the grid, in grid order."""
    if grid.method == 'lp':
        options.setdefault('objective', grid.objective)
    jobs = [(config, specs) for config in grid.games for specs in grid.blueprints]
    logger.info("Welfare experiment: %d rows, method %s, %d threads", len(jobs), grid.method, threads)

    def run(job):
        config, specs = job
        return welfare_row(config, specs, grid.rounds, grid.subgame, grid.method, **options)

    if threads <= 1:
        rows = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, jobs))
    if output_path is not None:
        write_welfare_csv(rows, output_path)
        logger.info("Wrote %d welfare rows to %s", len(rows), output_path)
    return rows


def run_convergence_experiment(settings: ConvergenceSettings, output_path=None,
                               track_memory: bool = True) -> ConvergenceReport:
    tree = build_battleship(settings.game.validate())
    index = build_sequence_index(tree)
    decomp = decompose_by_public_state(tree, settings.rounds, index=index)
    blueprint = settings.blueprint.build(tree, index)
    ledger = build_ledger(blueprint, decomp)

    if track_memory:
        tracemalloc.start()
    try:
        result = self_play_refine(blueprint, decomp, ledger, settings.subgame, epsilon=settings.epsilon,
                                  max_iters=settings.max_iters, audit_every=settings.audit_every)
        peak = tracemalloc.get_traced_memory()[1] / 1024.0 if track_memory else 0.0
    finally:
        if track_memory:
            tracemalloc.stop()

    report = ConvergenceReport(
        result=result,
        peak_memory_kib=peak,
        seconds_per_iteration=result.elapsed / result.iterations if result.iterations else 0.0,
    )
    logger.info("Convergence run: %d iterations, final violation %.3e, %.2f ms/iteration, peak %.0f KiB",
                result.iterations, result.max_violation, 1e3 * report.seconds_per_iteration, peak)
    if output_path is not None:
        write_series_csv(result.series, output_path)
    return report


def experiment_output(output_dir, kind: str, stamp: Optional[str] = None) -> Path:
    stamp = stamp or time.strftime('%Y%m%d-%H%M%S')
    return Path(output_dir) / f'{kind}-{stamp}.csv'
