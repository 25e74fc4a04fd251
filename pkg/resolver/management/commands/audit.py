from django.core.management.base import CommandError

from correlation.bounds import build_ledger
from correlation.deviation import exploitability_report
from correlation.planio import load_plan
from efce_resolver.constants import SolverMessages
from refinement.safety import safety_audit
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = ('Audit a plan CSV: exploitability over every trigger, or with --safety the '
            'per-trigger safety check against a blueprint.')

    def add_command_arguments(self, parser):
        self.add_game_arguments(parser)
        self.add_decomposition_arguments(parser)
        self.add_blueprint_arguments(parser)
        parser.add_argument('--plan', required=True, help='Plan CSV (seq1,seq2,value).')
        parser.add_argument('--safety', action='store_true',
                            help='Check δ*(plan) <= max(0, δ*(blueprint)) instead of δ* <= tol.')

    def run(self, **options):
        setup = self.load_game(options)
        decomp = self.decompose(setup, options)
        plan = load_plan(decomp.pairs, options['plan'])
        tol = options['tol']

        if options['safety']:
            if decomp.count == 0:
                raise CommandError('--safety needs a decomposition with at least one subgame.')
            blueprint = self.build_blueprint(setup, options, decomp.pairs)
            audit = safety_audit(plan, build_ledger(blueprint, decomp), tol=tol)
            for failure in audit.failures[:10]:
                self.stdout.write(self.style.ERROR(
                    f'  player {failure.player} trigger {setup.index.label(failure.player, failure.trigger)}: '
                    f'δ*={failure.delta:.3e} > {failure.allowed:.3e}'))
            if not audit.passed:
                self.audit_failed(SolverMessages.RESOLVER['SAFETY_FAILED'].format(
                    count=len(audit.failures), excess=audit.worst_excess))
            self.stdout.write(self.style.SUCCESS(f'Safety audit passed for {audit.checked} triggers.'))
            return

        report = exploitability_report(plan)
        worst = report.worst()
        self.stdout.write(f'Social welfare: {report.social_welfare:.6g}')
        self.stdout.write(f'Structural residual: {report.residual:.2e}')
        if worst is not None:
            self.stdout.write(f'Max exploitability: {report.max_delta:.3e} (player {worst.player}, '
                              f'trigger {setup.index.label(worst.player, worst.trigger)})')
        if not report.is_efce(tol):
            self.audit_failed(SolverMessages.RESOLVER['AUDIT_FAILED'].format(
                value=max(report.max_delta, report.residual), tol=tol))
        self.stdout.write(self.style.SUCCESS('Plan is an EFCE within tolerance.'))
