from correlation.deviation import exploitability_report
from correlation.planio import save_plan
from correlation.relevance import relevant_pairs
from efce_resolver.constants import SolverMessages
from refinement.lp_refine import FULL_OBJECTIVES, solve_full_game
from resolver.services import ConfigService
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = 'Solve the whole-game EFCE LP and audit the resulting plan.'

    def add_command_arguments(self, parser):
        solver = ConfigService.get_solver_config()
        self.add_game_arguments(parser)
        parser.add_argument('--objective', choices=FULL_OBJECTIVES, default=solver['objective'])
        parser.add_argument('--backend', default=solver['backend'], help='LP backend: highs, reference or export.')
        parser.add_argument('--max-iterations', type=int, default=solver['max_iterations'])
        parser.add_argument('--output', help='Write the plan as CSV (seq1,seq2,value).')

    def run(self, **options):
        setup = self.load_game(options)
        pairs = relevant_pairs(setup.tree, setup.index)
        self.stdout.write(f'{setup.label}: {len(pairs)} relevant pairs')
        plan = solve_full_game(setup.tree, setup.index, pairs, objective=options['objective'],
                               backend=options['backend'], max_iterations=options['max_iterations'])
        report = exploitability_report(plan, pairs)
        if options.get('output'):
            save_plan(plan, options['output'])
            self.stdout.write(f"Plan written to {options['output']}")

        self.stdout.write(f'Social welfare: {report.social_welfare:.6g}')
        self.stdout.write(f'Max exploitability: {report.max_delta:.3e} over {len(report.reports)} triggers')
        self.stdout.write(f'Structural residual: {report.residual:.2e}')
        if not report.is_efce(options['tol']):
            self.audit_failed(SolverMessages.RESOLVER['AUDIT_FAILED'].format(
                value=max(report.max_delta, report.residual), tol=options['tol']))
        self.stdout.write(self.style.SUCCESS('Plan is an EFCE within tolerance.'))
