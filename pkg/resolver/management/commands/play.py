from django.core.management.base import CommandError

from resolver.play import RESOLVERS, leaf_frequencies, play_many
from resolver.services import ConfigService
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = 'Simulate mediated playthroughs: blueprint recommendations, one refinement on subgame entry.'

    def add_command_arguments(self, parser):
        cfr = ConfigService.get_cfr_config()
        self.add_game_arguments(parser)
        self.add_decomposition_arguments(parser)
        self.add_blueprint_arguments(parser)
        parser.add_argument('--resolver', choices=sorted(RESOLVERS), default='lp')
        parser.add_argument('--plays', type=int, default=1)
        parser.add_argument('--eps', type=float, default=cfr['epsilon'])
        parser.add_argument('--max-iters', type=int, default=cfr['max_iters'])
        parser.add_argument('--show-steps', action='store_true', help='Print every recommendation.')

    def run(self, **options):
        if options['plays'] < 1:
            raise CommandError('--plays must be positive.')
        setup = self.load_game(options)
        decomp = self.decompose(setup, options)
        blueprint = self.build_blueprint(setup, options, decomp.pairs)
        extra = {}
        if options['resolver'] == 'cfr':
            extra = {'epsilon': options['eps'], 'max_iters': options['max_iters']}

        transcripts = play_many(setup.tree, blueprint, decomp, options['plays'], resolver=options['resolver'],
                                seed=options['seed'], **extra)
        labels = setup.tree.labels
        for number, transcript in enumerate(transcripts, start=1):
            entered = f'subgame {transcript.subgame}' if transcript.subgame else 'no subgame'
            self.stdout.write(f'play {number}: leaf {labels[transcript.leaf]} payoffs {transcript.payoffs} '
                              f'({entered}, {transcript.fallbacks} fallbacks)')
            if options['show_steps']:
                for step in transcript.steps:
                    self.stdout.write(f'  P{step.player} at {labels[step.node]}: {step.label} '
                                      f'(p={step.probability:.4f}, {step.source})')

        if len(transcripts) > 1:
            self.stdout.write('Leaf frequencies:')
            for leaf, share in sorted(leaf_frequencies(transcripts).items(), key=lambda item: -item[1])[:20]:
                self.stdout.write(f'  {labels[leaf]}: {share:.4f}')
        refined = sum(t.refinements for t in transcripts)
        self.stdout.write(self.style.SUCCESS(f'{len(transcripts)} plays, {refined} entered a subgame.'))
