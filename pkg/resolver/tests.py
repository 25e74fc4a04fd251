import csv
import io
import math
import os
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from correlation.planio import save_plan
from correlation.plans import BlueprintSpec, CorrelationPlan, ProductBlueprint, make_blueprint
from correlation.subgames import SubgameDecomposition, save_decomposition
from correlation.tests import battleship_setup, signaling, signaling_setup
from efce_resolver.exceptions import InputError
from games.efgio import save_game
from games.generators import BattleshipConfig
from games.sequences import behavioral_to_sequence_form, pure_behavioral
from games.tree import opponent
from refinement.safety import RefinementResult, ViolationSample
from .experiments import (
    CONVERGENCE_HEADER,
    WELFARE_HEADER,
    ConvergenceSettings,
    WelfareGrid,
    run_convergence_experiment,
    run_welfare_experiment,
    welfare_row,
)
from .models import ConvergenceSample, ExperimentRun, RefinementRecord, WelfareRow
from .play import BLUEPRINT, REFINED, leaf_frequencies, play_many, play_online
from .serializers import ConvergenceConfigSerializer, ExperimentGridSerializer
from .services import ConfigService, ExperimentGridLoader, RunRecorder

EXPERIMENTS_FILE = Path(__file__).resolve().parent / 'experiments.yml'

# (n, T, gamma, blueprint welfare, refined welfare) of subgame 1 under the uniform blueprint
REFERENCE_WELFARE = [
    (4, 3, 2.0, -3.13e-2, -2.95e-2),
    (4, 3, 5.0, -12.5e-2, -11.4e-2),
    (5, 3, 5.0, -7.68e-2, -4.80e-2),
]


def no_subgames(tree=None, kind='uniform'):
    tree, index, _, blueprint = signaling_setup(tree, kind)
    return tree, index, SubgameDecomposition(tree, [], index=index), blueprint


def recomputed_probability(source, index, step):
    player = step.player
    parent = int(index.node_sequences[step.node, player - 1])
    partner = int(index.node_sequences[step.node, opponent(player) - 1])
    child = index.sequences_of(player, step.infoset)[step.action]
    if player == 1:
        return source.values(np.array([child]), np.array([partner]))[0] / \
            source.values(np.array([parent]), np.array([partner]))[0]
    return source.values(np.array([partner]), np.array([child]))[0] / \
        source.values(np.array([partner]), np.array([parent]))[0]


class PlayTests(SimpleTestCase):
    def test_leaf_frequencies_match_blueprint_masses(self):
        tree, index, decomp, blueprint = no_subgames()
        plays = 4000
        transcripts = play_many(tree, blueprint, decomp, plays, seed=11)
        frequencies = leaf_frequencies(transcripts)
        masses = blueprint.values(index.leaf_sequences[1], index.leaf_sequences[2])
        for position, leaf in enumerate(index.leaf_nodes):
            p = float(masses[position])
            sigma = math.sqrt(p * (1 - p) / plays)
            with self.subTest(leaf=tree.labels[leaf]):
                self.assertLessEqual(abs(frequencies.get(int(leaf), 0.0) - p), 4 * sigma)
        self.assertEqual(sum(t.refinements for t in transcripts), 0)

    def test_logged_probabilities_match_the_plan(self):
        tree, index, decomp, blueprint = no_subgames(kind='jittered')
        for seed in range(5):
            transcript = play_online(tree, blueprint, decomp, seed=seed)
            for step in transcript.steps:
                self.assertEqual(step.source, BLUEPRINT)
                self.assertAlmostEqual(step.probability, recomputed_probability(blueprint, index, step), places=12)

    def test_same_seed_same_transcript(self):
        tree, _, decomp, blueprint = no_subgames(kind='jittered')
        first = play_online(tree, blueprint, decomp, seed=3)
        second = play_online(tree, blueprint, decomp, seed=3)
        self.assertEqual(first.actions, second.actions)
        self.assertEqual(first.replay(tree), first.leaf)

    def test_pure_blueprint_has_a_single_transcript(self):
        tree, index, decomp, _ = no_subgames()
        strategies = [behavioral_to_sequence_form(tree, pure_behavioral(tree, p), p, index).values for p in (1, 2)]
        blueprint = ProductBlueprint(index, *strategies, kind='pure')
        leaves = {play_online(tree, blueprint, decomp, seed=seed).leaf for seed in range(10)}
        self.assertEqual(leaves, {tree.node_by_label['G.X.lx']})

    def test_zero_mass_prefix_falls_back_to_uniform(self):
        tree, index, decomp, _ = no_subgames()
        blueprint = make_blueprint('explicit', tree, index, plan=CorrelationPlan(decomp.pairs, np.zeros(len(decomp.pairs))))
        transcript = play_online(tree, blueprint, decomp, seed=0)
        self.assertEqual(transcript.fallbacks, len(transcript.steps))
        self.assertTrue(all(step.probability == 0.5 for step in transcript.steps))

    def test_subgame_entry_refines_once_and_switches_source(self):
        tree, index, decomp, blueprint = signaling_setup()
        cache = {}
        for seed in range(6):
            with self.subTest(seed=seed):
                transcript = play_online(tree, blueprint, decomp, resolver='lp', seed=seed, cache=cache)
                self.assertEqual(transcript.refinements, 1)
                self.assertIn(transcript.subgame, (1, 2))
                self.assertEqual([s.source for s in transcript.steps], [BLUEPRINT, BLUEPRINT, REFINED])
                plan = transcript.refinement.plan
                step = transcript.steps[-1]
                self.assertLess(abs(step.probability - recomputed_probability(plan, index, step)), 1e-6)
        self.assertLessEqual(set(cache), {1, 2})

    def test_unknown_resolver(self):
        tree, _, decomp, blueprint = signaling_setup()
        with self.assertRaises(InputError):
            play_online(tree, blueprint, decomp, resolver='mcts')

    @tag('slow')
    def test_battleship_self_play_refines_at_most_once_per_play(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        transcripts = play_many(tree, blueprint, decomp, 4, resolver='cfr', seed=2, epsilon=1e-2, max_iters=500)
        for transcript in transcripts:
            self.assertLessEqual(transcript.refinements, 1)
            self.assertEqual(transcript.replay(tree), transcript.leaf)


class ExperimentTests(SimpleTestCase):
    def assertWelfare(self, actual, expected):
        self.assertAlmostEqual(actual, expected, delta=max(0.05 * abs(expected), 1e-3))

    def test_welfare_row_for_the_smallest_instance(self):
        row = welfare_row(BattleshipConfig.grid(3, turns=2, gamma=2.0), [BlueprintSpec('uniform')])
        self.assertEqual(row.subgame_pairs, 382)
        self.assertAlmostEqual(row.blueprint_welfare, -3 / 81, places=12)
        self.assertGreaterEqual(row.refined_welfare, row.blueprint_welfare - 1e-8)
        self.assertWelfare(row.refined_welfare, -3.70e-2)
        self.assertLessEqual(row.max_violation, 1e-6)
        self.assertEqual(row.blueprint, 'uniform')

    @tag('slow')
    def test_refined_welfare_of_larger_instances(self):
        for n, turns, gamma, blueprint_sw, refined_sw in REFERENCE_WELFARE:
            with self.subTest(n=n, turns=turns, gamma=gamma):
                row = welfare_row(BattleshipConfig.grid(n, turns=turns, gamma=gamma), [BlueprintSpec('uniform')])
                self.assertWelfare(row.blueprint_welfare, blueprint_sw)
                self.assertWelfare(row.refined_welfare, refined_sw)
                self.assertGreater(row.refined_welfare - row.blueprint_welfare, 5e-4)
                self.assertLessEqual(row.max_violation, 1e-6)

    def test_welfare_experiment_writes_one_row_per_game_and_blueprint(self):
        grid = WelfareGrid(games=[BattleshipConfig.grid(3, turns=2, gamma=2.0)],
                           blueprints=[[BlueprintSpec('uniform')],
                                       [BlueprintSpec('jittered', 0.5, 0), BlueprintSpec('jittered', 0.5, 1)]])
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'welfare.csv'
            rows = run_welfare_experiment(grid, path)
            with path.open(newline='') as handle:
                table = list(csv.reader(handle))
        self.assertEqual(table[0], WELFARE_HEADER)
        self.assertEqual(len(table), 3)
        self.assertEqual([row.seeds for row in rows], [1, 2])
        self.assertEqual(rows[1].blueprint, 'jittered')

    def test_convergence_series_is_deterministic(self):
        settings = ConvergenceSettings(game=BattleshipConfig.grid(3, turns=2, gamma=2.0),
                                       epsilon=1e-9, max_iters=100, audit_every=25)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'series.csv'
            first = run_convergence_experiment(settings, path, track_memory=False)
            with path.open(newline='') as handle:
                table = list(csv.reader(handle))
        second = run_convergence_experiment(settings, track_memory=True)
        self.assertEqual([s.violation for s in first.series], [s.violation for s in second.series])
        self.assertEqual(table[0], CONVERGENCE_HEADER)
        self.assertEqual(len(table), len(first.series) + 1)
        self.assertEqual(first.series[0].iteration, 0)
        self.assertGreater(second.peak_memory_kib, 0.0)

    @tag('slow')
    def test_convergence_on_the_two_row_board(self):
        settings = ConvergenceSettings(game=BattleshipConfig(width=3, height=2, ship=1, turns=3, gamma=2.0),
                                       epsilon=1e-2, max_iters=20000, audit_every=50)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'series.csv'
            report = run_convergence_experiment(settings, path)
            with path.open(newline='') as handle:
                table = list(csv.DictReader(handle))
        result = report.result
        series = report.series
        self.assertGreater(result.iterations, 0)
        self.assertGreaterEqual(len(series), 2)
        self.assertEqual(result.max_violation, series[-1].violation)
        self.assertLessEqual(result.max_violation, 1e-2)
        self.assertLessEqual(series[-1].violation, series[1].violation)
        self.assertEqual([int(row['iteration']) for row in table], [s.iteration for s in series])
        elapsed = [float(row['elapsed']) for row in table]
        self.assertEqual(elapsed, sorted(elapsed))
        self.assertGreater(report.seconds_per_iteration, 0.0)
        self.assertAlmostEqual(report.seconds_per_iteration, result.elapsed / result.iterations)
        self.assertGreater(report.peak_memory_kib, 0.0)

    def test_unknown_method(self):
        with self.assertRaises(InputError):
            welfare_row(BattleshipConfig.grid(3, turns=2, gamma=2.0), [BlueprintSpec('uniform')], method='simplex')


class ConfigurationTests(SimpleTestCase):
    def test_defaults(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            solver = ConfigService.get_solver_config()
            cfr = ConfigService.get_cfr_config()
        self.assertEqual(solver['tolerance'], 1e-6)
        self.assertEqual(solver['backend'], 'highs')
        self.assertEqual(solver['objective'], 'max_sw')
        self.assertEqual(cfr['max_iters'], 20000)
        self.assertEqual(cfr['audit_every'], 50)

    def test_environment_overrides(self):
        with mock.patch.dict(os.environ, {'EFCE_CFR_EPSILON': '0.05', 'EFCE_THREADS': '4'}):
            self.assertEqual(ConfigService.get_cfr_config()['epsilon'], 0.05)
            self.assertEqual(ConfigService.get_solver_config()['threads'], 4)

    def test_invalid_backend_fails_validation(self):
        with mock.patch.dict(os.environ, {'EFCE_LP_BACKEND': 'cplex'}):
            validation = ConfigService.validate_config()
        self.assertFalse(validation['backend'])
        self.assertFalse(validation['all_valid'])

    def test_unparseable_number_fails_validation(self):
        with mock.patch.dict(os.environ, {'EFCE_TOLERANCE': 'tiny'}):
            self.assertFalse(ConfigService.validate_config()['all_valid'])

    def test_missing_grid_file_uses_defaults(self):
        loader = ExperimentGridLoader('/nonexistent/experiments.yml')
        self.assertEqual(loader.grid, loader.get_default_grid())

    def test_invalid_yaml_uses_defaults(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'grid.yml'
            path.write_text('welfare: [unclosed\n')
            loader = ExperimentGridLoader(path)
        self.assertEqual(loader.grid, loader.get_default_grid())

    def test_repository_grid_is_valid(self):
        loader = ExperimentGridLoader(EXPERIMENTS_FILE)
        welfare = ExperimentGridSerializer(data=loader.get_section('welfare'))
        self.assertTrue(welfare.is_valid(), welfare.errors)
        grid = welfare.to_grid()
        self.assertEqual(len(grid.games), 6)
        self.assertEqual([len(specs) for specs in grid.blueprints], [1, 10])
        convergence = ConvergenceConfigSerializer(data=loader.get_section('convergence'))
        self.assertTrue(convergence.is_valid(), convergence.errors)
        self.assertEqual(convergence.to_settings().game.height, 2)

    def test_grid_rejects_a_ship_that_does_not_fit(self):
        serializer = ExperimentGridSerializer(data={
            'games': [{'width': 3, 'ship': 4, 'turns': 2}],
            'blueprints': [{'kind': 'uniform'}],
        })
        self.assertFalse(serializer.is_valid())
        self.assertIn('games', serializer.errors)

    def test_convergence_config_rejects_zero_epsilon(self):
        serializer = ConvergenceConfigSerializer(data={'game': {'width': 3, 'turns': 2}, 'epsilon': 0})
        self.assertFalse(serializer.is_valid())
        self.assertIn('epsilon', serializer.errors)


def dummy_result(subgame=1, method='lp'):
    return RefinementResult(subgame=subgame, method=method, plan=None, status='optimal',
                            subgame_welfare=-0.03, blueprint_welfare=-0.037, max_violation=1e-9,
                            iterations=12, elapsed=0.5, stats={'variables': 400, 'rows': 300})


class ApiTests(TestCase):
    def setUp(self):
        self.run = RunRecorder.start('convergence', {'epsilon': 0.01})
        RunRecorder.record_series(self.run, [ViolationSample(0, 0.2, 0.0), ViolationSample(50, 0.01, 1.0)])
        RunRecorder.finish(self.run, 'results/convergence.csv')
        RunRecorder.record_refinement(dummy_result(), 'battleship-3x1', 'uniform', run=self.run)
        RunRecorder.record_refinement(dummy_result(2, 'cfr'), 'signaling', 'uniform')

    def test_health(self):
        response = self.client.get('/api/health/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['message'], 'healthy')
        self.assertEqual(response.json()['status'], 'success')

    def test_experiment_list_and_filter(self):
        response = self.client.get('/api/experiments/', {'kind': 'convergence'})
        data = response.json()['data']
        self.assertEqual(data['count'], 1)
        self.assertEqual(data['results'][0]['status'], 'completed')
        self.assertEqual(self.client.get('/api/experiments/', {'kind': 'welfare'}).json()['data']['count'], 0)

    def test_experiment_detail_includes_samples(self):
        data = self.client.get(f'/api/experiments/{self.run.pk}/').json()['data']
        self.assertEqual([s['iteration'] for s in data['samples']], [0, 50])
        self.assertEqual(data['welfare_rows'], [])

    def test_missing_experiment(self):
        response = self.client.get('/api/experiments/9999/')
        self.assertEqual(response.status_code, 404)
        self.assertEqual(response.json()['status'], 'error')
        self.assertNotIn('data', response.json())

    def test_refinement_filters(self):
        data = self.client.get('/api/refinements/', {'method': 'cfr'}).json()['data']
        self.assertEqual(data['count'], 1)
        self.assertEqual(data['results'][0]['game'], 'signaling')
        data = self.client.get('/api/refinements/', {'run': self.run.pk}).json()['data']
        self.assertEqual(data['results'][0]['stats'], {'variables': 400.0, 'rows': 300.0})

    def test_bad_page(self):
        self.assertEqual(self.client.get('/api/refinements/', {'page': 'x'}).status_code, 400)


class CommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)
        tree = signaling()
        self.game = self.root / 'signaling.efg'
        save_game(tree, self.game)
        self.decomposition = self.root / 'signaling.dec'
        _, _, decomp, _ = signaling_setup(tree)
        save_decomposition(decomp, self.decomposition)

    def call(self, *args):
        out = io.StringIO()
        call_command(*args, stdout=out)
        return out.getvalue()

    def test_battleship_sizes(self):
        output = self.call('battleship', '--width', '3', '--turns', '2', '--rounds', '1')
        self.assertIn('J=9', output)
        self.assertIn('|Ξ_1|=382', output)

    def test_battleship_rejects_invalid_config(self):
        with self.assertRaises(CommandError):
            self.call('battleship', '--width', '3', '--ship', '5', '--turns', '2')

    def test_battleship_writes_a_game_file(self):
        path = self.root / 'bs.efg'
        self.call('battleship', '--width', '3', '--turns', '2', '--output', str(path))
        self.assertTrue(path.read_text().startswith('efg 2p-nochance v1'))

    def test_refine_then_audit_safety(self):
        output = self.call('refine', '--game', str(self.game), '--decomposition', str(self.decomposition),
                           '--output-dir', str(self.root))
        self.assertIn('Safety audit passed', output)
        self.assertEqual(RefinementRecord.objects.filter(game='signaling').count(), 2)
        refined = self.root / 'signaling' / 'refined.csv'
        self.assertTrue((self.root / 'signaling' / 'ledger.csv').is_file())
        output = self.call('audit', '--game', str(self.game), '--decomposition', str(self.decomposition),
                           '--plan', str(refined), '--safety')
        self.assertIn('Safety audit passed', output)

    def test_audit_of_an_exploitable_plan_exits_with_code_two(self):
        tree, _, decomp, blueprint = signaling_setup()
        path = self.root / 'uniform.csv'
        save_plan(blueprint.materialize(decomp.pairs), path)
        with self.assertRaises(CommandError) as ctx:
            self.call('audit', '--game', str(self.game), '--plan', str(path))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_solve_full_writes_an_efce(self):
        path = self.root / 'full.csv'
        output = self.call('solve_full', '--game', str(self.game), '--output', str(path), '--tol', '1e-5')
        self.assertIn('EFCE within tolerance', output)
        output = self.call('audit', '--game', str(self.game), '--plan', str(path), '--tol', '1e-5')
        self.assertIn('EFCE within tolerance', output)

    def test_play_reports_subgame_entries(self):
        output = self.call('play', '--game', str(self.game), '--decomposition', str(self.decomposition),
                           '--plays', '5', '--seed', '4')
        self.assertIn('5 plays, 5 entered a subgame.', output)

    def test_missing_game_file(self):
        with self.assertRaises(CommandError):
            self.call('solve_full', '--game', str(self.root / 'missing.efg'))

    def test_convergence_experiment_is_recorded(self):
        config = self.root / 'grid.yml'
        config.write_text(
            'convergence:\n'
            '  game: {width: 3, turns: 2, gamma: 2.0}\n'
            '  epsilon: 1.0e-9\n'
            '  max_iters: 50\n'
            '  audit_every: 25\n'
        )
        output_path = self.root / 'convergence.csv'
        self.call('experiment', 'convergence', '--config', str(config), '--output', str(output_path),
                  '--no-memory')
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'completed')
        samples = ConvergenceSample.objects.filter(run=run)
        self.assertGreaterEqual(samples.count(), 2)
        self.assertEqual(samples.first().iteration, 0)
        with output_path.open(newline='') as handle:
            self.assertEqual(len(list(csv.reader(handle))), samples.count() + 1)

    def test_invalid_experiment_grid(self):
        config = self.root / 'grid.yml'
        config.write_text('welfare:\n  games: [{width: 3, ship: 7, turns: 2}]\n  blueprints: [{kind: uniform}]\n')
        with self.assertRaises(CommandError):
            self.call('experiment', 'welfare', '--config', str(config))
        self.assertFalse(WelfareRow.objects.exists())
