from correlation.bounds import build_ledger
from correlation.deviation import social_welfare
from correlation.planio import save_ledger, save_plan
from efce_resolver.constants import SolverMessages
from refinement.lp_refine import REFINEMENT_OBJECTIVES, REFINERS, assemble_complete_refinement, refine_all
from refinement.safety import safety_audit
from resolver.experiments import write_series_csv
from resolver.services import ConfigService, RunRecorder
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = 'Refine subgames of a blueprint by LP or self-play and run the safety audit.'

    def add_command_arguments(self, parser):
        solver = ConfigService.get_solver_config()
        cfr = ConfigService.get_cfr_config()
        self.add_game_arguments(parser)
        self.add_decomposition_arguments(parser)
        self.add_blueprint_arguments(parser)
        parser.add_argument('--method', choices=sorted(REFINERS), default='lp')
        parser.add_argument('--subgame', type=int, action='append', dest='subgames',
                            help='Subgame to refine; repeat for several (default: all).')

        lp = parser.add_argument_group('lp')
        lp.add_argument('--objective', choices=REFINEMENT_OBJECTIVES, default='max_subgame_sw')
        lp.add_argument('--backend', default=solver['backend'])
        lp.add_argument('--max-iterations', type=int, default=solver['max_iterations'])

        selfplay = parser.add_argument_group('cfr')
        selfplay.add_argument('--eps', type=float, default=cfr['epsilon'], help='Target max violation.')
        selfplay.add_argument('--max-iters', type=int, default=cfr['max_iters'])
        selfplay.add_argument('--log-every', type=int, default=cfr['log_every'],
                              help='Audit the average plan every k iterations.')

        parser.add_argument('--output-dir', help='Directory for ledger, plans and violation series.')
        parser.add_argument('--no-record', action='store_true', help='Do not store refinement records.')

    def solver_options(self, options):
        if options['method'] == 'lp':
            return {'objective': options['objective'], 'backend': options['backend'],
                    'max_iterations': options['max_iterations']}
        return {'epsilon': options['eps'], 'max_iters': options['max_iters'], 'audit_every': options['log_every']}

    def run(self, **options):
        setup = self.load_game(options)
        decomp = self.decompose(setup, options)
        blueprint = self.build_blueprint(setup, options, decomp.pairs)
        label = self.blueprint_label(options)
        ledger = build_ledger(blueprint, decomp)
        output_dir = self.output_dir(options) / setup.label
        save_ledger(ledger, output_dir / 'ledger.csv')
        self.stdout.write(f'{setup.label}: J={decomp.count}, {len(decomp.pairs)} relevant pairs, '
                          f'{len(ledger)} ledger entries')

        results = refine_all(blueprint, decomp, ledger, method=options['method'], threads=options['threads'],
                             subgames=options.get('subgames'), **self.solver_options(options))
        for j, result in sorted(results.items()):
            save_plan(result.plan, output_dir / f'subgame-{j}-{result.method}.csv')
            if result.method == 'cfr':
                write_series_csv(result.series, output_dir / f'subgame-{j}-series.csv')
            if not options['no_record']:
                RunRecorder.record_refinement(result, setup.label, label)
            style = self.style.SUCCESS if result.converged else self.style.WARNING
            self.stdout.write(style(
                f'subgame {j}: SW {result.blueprint_welfare:.6g} -> {result.subgame_welfare:.6g}, '
                f'max violation {result.max_violation:.2e} [{result.status}]'))

        plan = assemble_complete_refinement(blueprint, decomp, results)
        save_plan(plan, output_dir / 'refined.csv')
        audit = safety_audit(plan, ledger, tol=options['tol'])
        self.stdout.write(f'Full-game SW: {social_welfare(blueprint):.6g} -> {social_welfare(plan):.6g}')
        if not audit.passed:
            self.audit_failed(SolverMessages.RESOLVER['SAFETY_FAILED'].format(
                count=len(audit.failures), excess=audit.worst_excess))
        self.stdout.write(self.style.SUCCESS(f'Safety audit passed for {audit.checked} triggers.'))
