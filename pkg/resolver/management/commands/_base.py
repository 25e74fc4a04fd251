"""Shared options and error handling for the resolver commands."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from django.core.management.base import BaseCommand, CommandError

from correlation.planio import load_plan
from correlation.plans import make_blueprint
from correlation.relevance import relevant_pairs
from correlation.subgames import SubgameDecomposition, decompose_by_public_state, load_decomposition
from efce_resolver.exceptions import ResolverError
from efce_resolver.utils import format_serializer_errors
from games.efgio import load_game
from games.generators import build_battleship
from games.sequences import SequenceIndex, build_sequence_index
from games.serializers import BattleshipConfigSerializer
from games.tree import GameTree
from resolver.services import ConfigService

logger = logging.getLogger(__name__)

AUDIT_FAILED = 2


@dataclass
class GameSetup:
    tree: GameTree
    index: SequenceIndex
    label: str
    battleship: bool


class ResolverCommand(BaseCommand):
    """Adds --seed, --tol and --threads and turns ResolverError into CommandError."""

    def add_arguments(self, parser):
        solver = ConfigService.get_solver_config()
        parser.add_argument('--seed', type=int, default=0, help='Random seed (blueprint jitter, sampling).')
        parser.add_argument('--tol', type=float, default=solver['tolerance'], help='Audit tolerance.')
        parser.add_argument('--threads', type=int, default=solver['threads'], help='Worker threads.')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        if options['threads'] < 1:
            raise CommandError('--threads must be at least 1.')
        try:
            self.run(**options)
        except ResolverError as exc:
            raise CommandError(str(exc)) from exc
        except OSError as exc:
            raise CommandError(f"{exc.strerror or exc}: {exc.filename}") from exc

    def run(self, **options):
        raise NotImplementedError('subclasses of ResolverCommand must provide a run() method')

    def audit_failed(self, message: str):
        raise CommandError(message, returncode=AUDIT_FAILED)

    # -- games -------------------------------------------------------------

    @staticmethod
    def add_game_arguments(parser, battleship_only: bool = False):
        group = parser.add_argument_group('game')
        if not battleship_only:
            group.add_argument('--game', help='Game file in efg 2p-nochance v1 format.')
        group.add_argument('--width', type=int, help='Battleship grid width (n for 1×n grids).')
        group.add_argument('--height', type=int, default=1)
        group.add_argument('--ship', type=int, default=1, help='Ship length m.')
        group.add_argument('--turns', type=int, help='Firing rounds T.')
        group.add_argument('--gamma', type=float, default=2.0, help='Loss multiplier γ.')

    def battleship_config(self, options):
        serializer = BattleshipConfigSerializer(data={
            key: options[key] for key in ('width', 'height', 'ship', 'turns', 'gamma') if options.get(key) is not None
        })
        if not serializer.is_valid():
            raise CommandError(format_serializer_errors(serializer.errors))
        return serializer.to_config()

    def load_game(self, options) -> GameSetup:
        path = options.get('game')
        if path:
            tree = load_game(path)
            setup = GameSetup(tree, build_sequence_index(tree), Path(path).stem, battleship=False)
        else:
            config = self.battleship_config(options)
            tree = build_battleship(config)
            label = (f'battleship-{config.width}x{config.height}-m{config.ship}'
                     f'-T{config.turns}-g{config.gamma:g}')
            setup = GameSetup(tree, build_sequence_index(tree), label, battleship=True)
        logger.info("Loaded game %s: %r", setup.label, setup.tree)
        return setup

    # -- decompositions ----------------------------------------------------

    @staticmethod
    def add_decomposition_arguments(parser):
        group = parser.add_argument_group('decomposition')
        group.add_argument('--rounds', type=int,
                           help="Battleship rounds T' before the subgame frontier (default 1 for Battleship).")
        group.add_argument('--decomposition', help='Decomposition file (subgame j: node labels).')

    def decompose(self, setup: GameSetup, options) -> SubgameDecomposition:
        if options.get('decomposition'):
            return load_decomposition(setup.tree, options['decomposition'], index=setup.index)
        rounds = options.get('rounds')
        if rounds is None and setup.battleship:
            rounds = 1
        if rounds is None:
            return SubgameDecomposition(setup.tree, [], index=setup.index)
        return decompose_by_public_state(setup.tree, rounds, index=setup.index)

    # -- blueprints --------------------------------------------------------

    @staticmethod
    def add_blueprint_arguments(parser):
        group = parser.add_argument_group('blueprint')
        group.add_argument('--blueprint', choices=['uniform', 'jittered', 'explicit'], default='uniform')
        group.add_argument('--weight', type=float, default=0.5, help='Jitter weight w in [0, 1].')
        group.add_argument('--blueprint-plan', help='Plan CSV for an explicit blueprint.')

    def build_blueprint(self, setup: GameSetup, options, pairs=None):
        plan: Optional[object] = None
        if options['blueprint'] == 'explicit':
            if not options.get('blueprint_plan'):
                raise CommandError('--blueprint explicit needs --blueprint-plan.')
            plan = load_plan(pairs or relevant_pairs(setup.tree, setup.index), options['blueprint_plan'])
        return make_blueprint(options['blueprint'], setup.tree, setup.index,
                              weight=options['weight'], seed=options['seed'], plan=plan)

    @staticmethod
    def blueprint_label(options) -> str:
        if options['blueprint'] == 'jittered':
            return f"jittered(w={options['weight']},seed={options['seed']})"
        return options['blueprint']

    def output_dir(self, options) -> Path:
        return Path(options.get('output_dir') or ConfigService.get_experiment_config()['output_dir'])
