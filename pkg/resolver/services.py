import logging
import os
from pathlib import Path
from typing import Dict

import yaml

from refinement.linear import BACKENDS
from refinement.lp_refine import FULL_OBJECTIVES
from .models import ConvergenceSample, ExperimentRun, RefinementRecord, WelfareRow

logger = logging.getLogger(__name__)


class ConfigService:
    """Centralized configuration management from environment variables"""

    @staticmethod
    def get_solver_config() -> Dict:
        """Get LP solver configuration"""
        return {
            'tolerance': float(os.getenv('EFCE_TOLERANCE', '1e-6')),
            'backend': os.getenv('EFCE_LP_BACKEND', 'highs'),
            'objective': os.getenv('EFCE_LP_OBJECTIVE', 'max_sw'),
            'max_iterations': int(os.getenv('EFCE_LP_MAX_ITERATIONS', '50000')),
            'threads': int(os.getenv('EFCE_THREADS', '1')),
        }

    @staticmethod
    def get_cfr_config() -> Dict:
        """Get self-play refinement configuration"""
        return {
            'epsilon': float(os.getenv('EFCE_CFR_EPSILON', '1e-2')),
            'max_iters': int(os.getenv('EFCE_CFR_MAX_ITERS', '20000')),
            'audit_every': int(os.getenv('EFCE_CFR_AUDIT_EVERY', '50')),
            'log_every': int(os.getenv('EFCE_CFR_LOG_EVERY', '50')),
        }

    @staticmethod
    def get_experiment_config() -> Dict[str, str]:
        """Get experiment grid and output locations"""
        return {
            'file_path': os.getenv('EFCE_EXPERIMENTS_FILE', 'resolver/experiments.yml'),
            'output_dir': os.getenv('EFCE_OUTPUT_DIR', 'results'),
        }

    @staticmethod
    def get_logging_config() -> Dict:
        """Get logging configuration"""
        return {
            'level': os.getenv('LOG_LEVEL', 'INFO'),
            'debug_enabled': os.getenv('ENABLE_DEBUG_LOGGING', 'False').lower() == 'true'
        }

    @staticmethod
    def validate_config() -> Dict[str, bool]:
        """Validate that the configured values are usable"""
        try:
            solver_config = ConfigService.get_solver_config()
            cfr_config = ConfigService.get_cfr_config()
        except ValueError as exc:
            logger.error("Unparseable solver configuration: %s", exc)
            return {'numbers': False, 'all_valid': False}

        validation = {
            'numbers': True,
            'tolerance': solver_config['tolerance'] > 0,
            'backend': solver_config['backend'] in BACKENDS,
            'objective': solver_config['objective'] in FULL_OBJECTIVES,
            'threads': solver_config['threads'] >= 1,
            'epsilon': cfr_config['epsilon'] > 0,
            'audit_every': cfr_config['audit_every'] >= 1,
            'experiments_file': Path(ConfigService.get_experiment_config()['file_path']).is_file(),
            'all_valid': False
        }

        validation['all_valid'] = all(
            value for key, value in validation.items() if key not in ('all_valid', 'experiments_file')
        )

        return validation


class ExperimentGridLoader:
    def __init__(self, file_path: str = None):
        if file_path is None:
            file_path = ConfigService.get_experiment_config()['file_path']
        self.file_path = Path(file_path)
        self.grid = self.load_grid()

    def load_grid(self) -> Dict:
        """Load experiment grids from YAML file"""
        try:
            with open(self.file_path, 'r', encoding='utf-8') as file:
                grid = yaml.safe_load(file) or {}
                if ConfigService.get_logging_config()['debug_enabled']:
                    logger.debug("Loaded experiment grid from %s", self.file_path)
        except FileNotFoundError:
            logger.warning("Experiment grid not found: %s; using defaults", self.file_path)
            return self.get_default_grid()
        except yaml.YAMLError as e:
            logger.error("Error parsing YAML file %s: %s; using defaults", self.file_path, e)
            return self.get_default_grid()
        defaults = self.get_default_grid()
        return {key: grid.get(key, value) for key, value in defaults.items()}

    def get_default_grid(self) -> Dict:
        """Fallback grid if the YAML file is not available"""
        cfr_config = ConfigService.get_cfr_config()
        return {
            'welfare': {
                'rounds': 1,
                'subgame': 1,
                'method': 'lp',
                'objective': 'max_subgame_sw',
                'games': [
                    {'width': 3, 'turns': 2, 'gamma': 2.0},
                    {'width': 3, 'turns': 2, 'gamma': 5.0},
                    {'width': 4, 'turns': 3, 'gamma': 2.0},
                    {'width': 4, 'turns': 3, 'gamma': 5.0},
                ],
                'blueprints': [
                    {'kind': 'uniform'},
                    {'kind': 'jittered', 'weight': 0.5, 'seeds': list(range(10))},
                ],
            },
            'convergence': {
                'game': {'width': 3, 'height': 2, 'ship': 1, 'turns': 3, 'gamma': 2.0},
                'rounds': 1,
                'subgame': 1,
                'blueprint': {'kind': 'uniform'},
                'epsilon': cfr_config['epsilon'],
                'max_iters': cfr_config['max_iters'],
                'audit_every': cfr_config['audit_every'],
            },
        }

    def get_section(self, name: str) -> Dict:
        return self.grid.get(name) or self.get_default_grid()[name]


class RunRecorder:
    """Persists experiment runs, their rows and refinement diagnostics."""

    @staticmethod
    def start(kind: str, config: Dict) -> ExperimentRun:
        run = ExperimentRun.objects.create(kind=kind, config=config, status='running')
        logger.info("Started %s run #%d", kind, run.id)
        return run

    @staticmethod
    def finish(run: ExperimentRun, output_path=None, error: str = '') -> ExperimentRun:
        run.status = 'failed' if error else 'completed'
        run.error = error
        run.output_path = str(output_path or '')
        run.save(update_fields=['status', 'error', 'output_path', 'updated_at'])
        return run

    @staticmethod
    def record_welfare(run: ExperimentRun, rows) -> int:
        objs = [WelfareRow(run=run, **row.as_fields()) for row in rows]
        WelfareRow.objects.bulk_create(objs)
        return len(objs)

    @staticmethod
    def record_series(run: ExperimentRun, series) -> int:
        objs = [ConvergenceSample(run=run, iteration=s.iteration, violation=s.violation, elapsed=s.elapsed)
                for s in series]
        ConvergenceSample.objects.bulk_create(objs)
        return len(objs)

    @staticmethod
    def record_refinement(result, game: str, blueprint: str, run: ExperimentRun = None) -> RefinementRecord:
        summary = result.summary()
        stats = {key: value for key, value in summary.items() if key not in _RECORD_FIELDS}
        return RefinementRecord.objects.create(
            run=run,
            game=game,
            blueprint=blueprint,
            subgame=result.subgame,
            method=result.method,
            status=result.status,
            subgame_welfare=result.subgame_welfare,
            blueprint_welfare=result.blueprint_welfare,
            max_violation=result.max_violation,
            iterations=result.iterations,
            elapsed=result.elapsed,
            converged=result.converged,
            stats={key: float(value) for key, value in stats.items()},
        )


_RECORD_FIELDS = {
    'subgame', 'method', 'status', 'subgame_welfare', 'blueprint_welfare',
    'max_violation', 'iterations', 'elapsed', 'converged',
}
