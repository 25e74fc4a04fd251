from django.core.management.base import CommandError

from efce_resolver.exceptions import ResolverError
from efce_resolver.utils import format_serializer_errors
from resolver.experiments import experiment_output, run_convergence_experiment, run_welfare_experiment
from resolver.serializers import ConvergenceConfigSerializer, ExperimentGridSerializer
from resolver.services import ConfigService, ExperimentGridLoader, RunRecorder
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = 'Run the welfare grid or the self-play convergence trace and write CSV.'

    def add_command_arguments(self, parser):
        parser.add_argument('kind', choices=['welfare', 'convergence'])
        parser.add_argument('--config', help='Experiment grid YAML (default: EFCE_EXPERIMENTS_FILE).')
        parser.add_argument('--output', help='CSV path (default: EFCE_OUTPUT_DIR/<kind>-<timestamp>.csv).')
        parser.add_argument('--backend', default=ConfigService.get_solver_config()['backend'],
                            help='LP backend for welfare rows.')
        parser.add_argument('--no-memory', action='store_true', help='Skip peak-memory tracking.')

    def run(self, **options):
        kind = options['kind']
        section = ExperimentGridLoader(options.get('config')).get_section(kind)
        serializer_class = ExperimentGridSerializer if kind == 'welfare' else ConvergenceConfigSerializer
        serializer = serializer_class(data=section)
        if not serializer.is_valid():
            raise CommandError(format_serializer_errors(serializer.errors))

        output = options.get('output') or experiment_output(ConfigService.get_experiment_config()['output_dir'], kind)
        run = RunRecorder.start(kind, dict(section))
        try:
            if kind == 'welfare':
                self.run_welfare(serializer, run, output, options)
            else:
                self.run_convergence(serializer, run, output, options)
        except ResolverError as exc:
            RunRecorder.finish(run, output, error=str(exc))
            raise
        RunRecorder.finish(run, output)
        self.stdout.write(self.style.SUCCESS(f'Run #{run.pk} written to {output}'))

    def run_welfare(self, serializer, run, output, options):
        grid = serializer.to_grid()
        extra = {'backend': options['backend']} if grid.method == 'lp' else {}
        rows = run_welfare_experiment(grid, output, threads=options['threads'], **extra)
        RunRecorder.record_welfare(run, rows)
        for row in rows:
            cfg = row.config
            self.stdout.write(f'{cfg.width}x{cfg.height} T={cfg.turns} γ={cfg.gamma:g} {row.blueprint:>10}: '
                              f'BP {row.blueprint_welfare * 100:.2f}e-2  refined {row.refined_welfare * 100:.2f}e-2')

    def run_convergence(self, serializer, run, output, options):
        report = run_convergence_experiment(serializer.to_settings(), output,
                                            track_memory=not options['no_memory'])
        RunRecorder.record_series(run, report.series)
        result = report.result
        self.stdout.write(f'{result.iterations} iterations, max violation {result.max_violation:.3e} '
                          f'[{result.status}]')
        self.stdout.write(f'{report.seconds_per_iteration * 1e3:.2f} ms/iteration, '
                          f'peak memory {report.peak_memory_kib:.0f} KiB')
