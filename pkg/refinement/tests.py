import dataclasses
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag

from correlation.bounds import BoundsLedger, build_ledger, bundle_value
from correlation.deviation import exploitability_report, social_welfare, subgame_welfare
from correlation.plans import CorrelationPlan, StructuralConstraints, make_blueprint, structural_residual
from correlation.subgames import PRE_SUBGAME, SubgameDecomposition
from correlation.tests import battleship_setup, random_signaling, signaling_setup
from efce_resolver.exceptions import InputError, InvariantViolation, SolverError
from games.generators import build_matrix_game, matrix_subgame
from games.sequences import EMPTY, build_sequence_index
from .cfr_refine import CONVERGED, self_play_refine
from .linear import (
    EQ,
    EXPORTED,
    GE,
    LE,
    OPTIMAL,
    LinearProgram,
    read_lp_text,
    solve_lp,
    write_lp_text,
    write_solution,
)
from .lp_refine import (
    assemble_complete_refinement,
    build_refinement_lp,
    refine_all,
    refine_subgame_lp,
    solve_full_game,
)
from .regret import (
    DeviationTreeMinimizer,
    DeviatorRegretMinimizer,
    MediatorRegretMinimizer,
    RegretMatchingPlus,
)
from .safety import max_violation, safety_audit, violation_terms
from .scaled import BackfillStep, decompose_xi_j


def small_program():
    lp = LinearProgram('small')
    x = lp.add_variable('x')
    y = lp.add_variable('y', 0.0, 0.8)
    lp.add_row([x, y], [1.0, 1.0], LE, 1.0, name='cap')
    lp.add_row([x, y], [1.0, -1.0], EQ, 0.0, name='tie')
    lp.add_row([x], [1.0], GE, 0.1, name='floor')
    lp.add_objective([x, y], [1.0, 1.0])
    return lp


def restriction(blueprint, pairs):
    return CorrelationPlan(pairs, np.asarray(blueprint.values(pairs.first, pairs.second), dtype=np.float64))


def restricted_residual(plan):
    return StructuralConstraints(plan.pairs).residual(plan.entries)


def matrix_setup():
    tree = build_matrix_game([[3, 0], [5, 1]], [[3, 5], [0, 1]])
    index = build_sequence_index(tree)
    decomp = SubgameDecomposition(tree, matrix_subgame(tree), index=index)
    return tree, index, decomp


def relaxed_ledger(ledger, slack):
    """Every bound of ``ledger`` loosened by ``slack``, blueprint deltas included."""
    relaxed = BoundsLedger(ledger.fingerprint)
    for name, sign in (('lower', -1.0), ('upper', 1.0), ('lower_bundles', -1.0), ('upper_bundles', 1.0)):
        entries = getattr(ledger, name)
        setattr(relaxed, name, {k: dataclasses.replace(e, bound=e.bound + sign * slack) for k, e in entries.items()})
    relaxed.blueprint_delta = {k: delta + slack for k, delta in ledger.blueprint_delta.items()}
    return relaxed


class LinearProgramTests(SimpleTestCase):
    def test_both_backends_agree_on_a_small_program(self):
        for backend in ('highs', 'reference'):
            with self.subTest(backend=backend):
                solution = solve_lp(small_program(), backend=backend)
                self.assertEqual(solution.status, OPTIMAL)
                self.assertAlmostEqual(solution.objective, 1.0, places=7)
                np.testing.assert_allclose(solution.x, [0.5, 0.5], atol=1e-7)
                self.assertLessEqual(solution.residual, 1e-9)

    def test_infeasible_program_is_reported(self):
        lp = LinearProgram('broken')
        x = lp.add_variable('x', 0.0, 1.0)
        lp.add_row([x], [1.0], GE, 2.0)
        self.assertFalse(solve_lp(lp).optimal)

    def test_unknown_backend(self):
        with self.assertRaises(InputError):
            solve_lp(small_program(), backend='cplex')

    def test_lp_text_round_trip_keeps_the_model(self):
        lp = small_program()
        again = read_lp_text(write_lp_text(lp))
        self.assertEqual(again.matrix_hash(), lp.matrix_hash())
        self.assertEqual(again.num_rows, 3)

    def test_export_backend_audits_a_solution_file(self):
        lp = small_program()
        with tempfile.TemporaryDirectory() as tmp:
            exported = solve_lp(lp, backend='export', path=Path(tmp) / 'small.lp')
            self.assertEqual(exported.status, EXPORTED)
            self.assertTrue(exported.path.exists())
            good = write_solution(lp, np.array([0.5, 0.5]), Path(tmp) / 'good.sol')
            audited = solve_lp(lp, backend='export', path=Path(tmp) / 'small.lp', solution=good)
            self.assertEqual(audited.status, OPTIMAL)
            self.assertAlmostEqual(audited.objective, 1.0)
            bad = write_solution(lp, np.array([0.9, 0.5]), Path(tmp) / 'bad.sol')
            self.assertFalse(solve_lp(lp, backend='export', path=Path(tmp) / 'small.lp', solution=bad).optimal)

    def test_export_needs_a_path(self):
        with self.assertRaises(InputError):
            solve_lp(small_program(), backend='export')


class FullGameLpTests(SimpleTestCase):
    def test_signaling_optimum_is_an_efce(self):
        for seed in range(3):
            with self.subTest(seed=seed):
                tree = random_signaling(seed)
                plan = solve_full_game(tree)
                report = exploitability_report(plan)
                self.assertLessEqual(report.max_delta, 1e-6)
                self.assertLessEqual(structural_residual(plan), 1e-6)

    def test_reference_backend_matches_highs(self):
        tree = random_signaling(7)
        highs = social_welfare(solve_full_game(tree))
        reference = social_welfare(solve_full_game(tree, backend='reference'))
        self.assertAlmostEqual(highs, reference, places=6)

    def test_unknown_objective(self):
        tree, _, _, _ = signaling_setup()
        with self.assertRaises(InputError):
            solve_full_game(tree, objective='min_sw')


class RefinementLpTests(SimpleTestCase):
    def test_signaling_refinements_are_feasible_and_pinned(self):
        _, _, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        for j in (1, 2):
            with self.subTest(subgame=j):
                result = refine_subgame_lp(blueprint, decomp, ledger, j)
                self.assertEqual(result.status, OPTIMAL)
                self.assertLessEqual(result.max_violation, 1e-6)
                self.assertGreaterEqual(result.subgame_welfare, result.blueprint_welfare - 1e-7)
                plan = result.plan
                pinned = decomp.pair_class(plan.pairs.first, plan.pairs.second) == PRE_SUBGAME
                expected = blueprint.values(plan.pairs.first[pinned], plan.pairs.second[pinned])
                self.assertTrue(np.array_equal(plan.entries[pinned], expected))
                self.assertLessEqual(restricted_residual(plan), 1e-6)

    def test_assembled_refinement_is_safe(self):
        fixtures = [signaling_setup()]
        fixtures += [signaling_setup(random_signaling(seed)) for seed in range(2)]
        fixtures += [signaling_setup(random_signaling(5), kind='jittered', weight=0.5, seed=s) for s in range(2)]
        for number, (_, _, decomp, blueprint) in enumerate(fixtures):
            with self.subTest(fixture=number):
                ledger = build_ledger(blueprint, decomp)
                results = refine_all(blueprint, decomp, ledger, method='lp')
                plan = assemble_complete_refinement(blueprint, decomp, results)
                audit = safety_audit(plan, ledger)
                self.assertTrue(audit.passed, audit.failures)
                self.assertLessEqual(structural_residual(plan), 1e-6)
                self.assertGreaterEqual(social_welfare(plan), social_welfare(blueprint) - 1e-7)

    def test_unreachable_ledger_makes_the_refinement_infeasible(self):
        _, index, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        key = (1, index.sequence_by_label(1, 'X_G'), 1)
        ledger.lower_bundles[key] = dataclasses.replace(ledger.lower_bundles[key], bound=100.0)
        with self.assertRaises(SolverError):
            refine_subgame_lp(blueprint, decomp, ledger, 1)

    def test_export_backend_keeps_the_blueprint(self):
        _, _, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        with tempfile.TemporaryDirectory() as tmp:
            result = refine_subgame_lp(blueprint, decomp, ledger, 1, backend='export',
                                       export_path=Path(tmp) / 'refine_1.lp')
            self.assertIn('Maximize', (Path(tmp) / 'refine_1.lp').read_text().splitlines()[:2])
        self.assertEqual(result.status, EXPORTED)
        pairs = result.plan.pairs
        self.assertTrue(np.array_equal(result.plan.entries, blueprint.values(pairs.first, pairs.second)))

    def test_threaded_refinement_matches_sequential(self):
        _, _, decomp, blueprint = signaling_setup(random_signaling(3))
        ledger = build_ledger(blueprint, decomp)
        sequential = refine_all(blueprint, decomp, ledger, threads=1)
        threaded = refine_all(blueprint, decomp, ledger, threads=2)
        self.assertEqual(sorted(threaded), [1, 2])
        for j in (1, 2):
            self.assertAlmostEqual(sequential[j].subgame_welfare, threaded[j].subgame_welfare, places=9)

    def test_unknown_method(self):
        _, _, decomp, blueprint = signaling_setup()
        with self.assertRaises(InputError):
            refine_all(blueprint, decomp, build_ledger(blueprint, decomp), method='annealing')

    def test_refinement_lp_pins_pre_subgame_columns(self):
        _, _, decomp, blueprint = signaling_setup()
        program = build_refinement_lp(blueprint, decomp, build_ledger(blueprint, decomp), 1)
        columns = program.xi[program.pinned]
        lower, upper = np.asarray(program.lp.lower), np.asarray(program.lp.upper)
        self.assertTrue(np.array_equal(lower[columns], upper[columns]))
        self.assertEqual(len(program.pairs), int(decomp.class_sizes[0] + decomp.class_sizes[1]))

    def test_battleship_refinement_keeps_welfare(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        ledger = build_ledger(blueprint, decomp)
        result = refine_subgame_lp(blueprint, decomp, ledger, 1)
        self.assertEqual(result.status, OPTIMAL)
        self.assertAlmostEqual(result.blueprint_welfare, -3 / 81, places=12)
        self.assertGreaterEqual(result.subgame_welfare, -3 / 81 - 1e-8)
        self.assertLessEqual(result.max_violation, 1e-6)

    def assert_battleship_refinement_is_safe(self, n, turns):
        tree, index, decomp = battleship_setup(n=n, turns=turns)
        blueprints = [('uniform', {})] + [('jittered', {'weight': 0.5, 'seed': seed}) for seed in range(3)]
        for kind, kwargs in blueprints:
            with self.subTest(n=n, kind=kind, **kwargs):
                blueprint = make_blueprint(kind, tree, index, **kwargs)
                ledger = build_ledger(blueprint, decomp)
                results = refine_all(blueprint, decomp, ledger, threads=2)
                self.assertEqual(sorted(results), list(range(1, decomp.count + 1)))
                plan = assemble_complete_refinement(blueprint, decomp, results)
                audit = safety_audit(plan, ledger)
                self.assertTrue(audit.passed, audit.failures)
                self.assertLessEqual(structural_residual(plan), 1e-7)
                self.assertGreaterEqual(social_welfare(plan), social_welfare(blueprint) - 1e-7)

    @tag('slow')
    def test_battleship_full_refinement_is_safe(self):
        self.assert_battleship_refinement_is_safe(3, turns=2)

    @tag('slow')
    def test_larger_battleship_full_refinement_is_safe(self):
        self.assert_battleship_refinement_is_safe(4, turns=3)


class ScaledExtensionTests(SimpleTestCase):
    def test_signaling_fill_order(self):
        _, index, decomp, _ = signaling_setup()
        program = decompose_xi_j(decomp)
        p1 = {label: index.sequence_by_label(1, label) for label in ('G', 'B', 'X_G', 'Y_G', 'X_B', 'Y_B')}
        p2 = [index.sequence_by_label(2, label) for label in ('lx', 'rx', 'ly', 'ry')]
        self.assertEqual(len(program.pairs), 35)
        self.assertEqual(set(program.expand_sources), {(EMPTY, EMPTY)} | {(s, EMPTY) for s in p1.values()})
        self.assertEqual(program.expand_sources[0], (EMPTY, EMPTY))
        expected = {(s1, s2) for s1 in (EMPTY, p1['G'], p1['B']) for s2 in p2}
        self.assertEqual(set(program.backfill_targets), expected)
        self.assertEqual(len(program.backfill_targets), 12)
        entries = program.execute(program.uniform_choices())
        self.assertLessEqual(StructuralConstraints(program.pairs).residual(entries), 1e-12)

    def test_matrix_game_tiebreak(self):
        _, _, decomp = matrix_setup()
        program = decompose_xi_j(decomp, 1)
        self.assertEqual(program.expand_sources, [(0, 0), (1, 0), (2, 0)])
        self.assertEqual(program.backfill_targets, [(0, 1), (0, 2)])
        self.assertEqual(program.local_sizes, [2, 2])
        with self.assertRaises(InvariantViolation):
            decompose_xi_j(decomp, 1, tiebreak=False, first_player=2)

    def test_pinned_program_needs_blueprint_values(self):
        _, _, decomp = matrix_setup()
        program = decompose_xi_j(decomp, 1)
        with self.assertRaises(InputError):
            program.execute(program.uniform_choices())

    def test_battleship_program_covers_the_subgame(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        program = decompose_xi_j(decomp, 1, blueprint)
        self.assertEqual(len(program.pairs), 382)
        pinned = program.pinned
        self.assertEqual(int(pinned.sum()), 286)
        self.assertFalse(any(isinstance(s, BackfillStep) and s.pinned and not program.pinned[s.sources].all()
                             for s in program.steps))
        expected = blueprint.values(program.pairs.first[pinned], program.pairs.second[pinned])
        constraints = StructuralConstraints(program.pairs)
        rng = np.random.default_rng(0)
        for _ in range(20):
            choices = [rng.dirichlet(np.ones(n)) for n in program.local_sizes]
            entries = program.execute(choices)
            self.assertLessEqual(constraints.residual(entries), 1e-9)
            self.assertTrue(np.array_equal(entries[pinned], expected))

    def test_uniform_choices_reproduce_a_uniform_blueprint(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        program = decompose_xi_j(decomp, 1, blueprint)
        entries = program.execute(program.uniform_choices())
        expected = blueprint.values(program.pairs.first, program.pairs.second)
        np.testing.assert_allclose(entries, expected, atol=1e-12)


class RegretTests(SimpleTestCase):
    def test_regret_matching_plus_moves_to_the_cheaper_action(self):
        learner = RegretMatchingPlus(2)
        np.testing.assert_allclose(learner.recommend(), [0.5, 0.5])
        learner.observe(np.array([1.0, 0.0]))
        np.testing.assert_allclose(learner.recommend(), [0.0, 1.0])

    def test_masked_action_is_never_played(self):
        learner = RegretMatchingPlus(3, mask=np.array([True, False, True]))
        for loss in ([0.0, -5.0, 1.0], [1.0, -5.0, 0.0], [0.3, -5.0, 0.2]):
            strategy = learner.recommend()
            self.assertEqual(strategy[1], 0.0)
            self.assertAlmostEqual(strategy.sum(), 1.0)
            learner.observe(np.array(loss))

    def test_average_regret_vanishes_against_alternating_losses(self):
        learner = RegretMatchingPlus(2)
        cumulative = np.zeros(2)
        played = 0.0
        horizon = 400
        for t in range(horizon):
            strategy = learner.recommend()
            loss = np.array([1.0, 0.0]) if t % 2 == 0 else np.array([0.0, 1.0])
            played += float(strategy @ loss)
            cumulative += loss
            learner.observe(loss)
        regret = played - cumulative.min()
        self.assertLessEqual(regret / horizon, 2 * math.sqrt(horizon) / horizon)

    def test_mediator_under_zero_loss_stays_uniform(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        program = decompose_xi_j(decomp, 1, blueprint)
        mediator = MediatorRegretMinimizer(program)
        for _ in range(5):
            mediator.recommend()
            mediator.observe(np.zeros(len(program.pairs)))
        plan = mediator.average_plan()
        self.assertLessEqual(restricted_residual(plan), 1e-9)
        np.testing.assert_allclose(plan.entries, program.execute(program.uniform_choices()), atol=1e-12)

    def test_mediator_rejects_wrong_loss_size(self):
        _, _, decomp, blueprint = signaling_setup()
        mediator = MediatorRegretMinimizer(decompose_xi_j(decomp, 1, blueprint))
        mediator.recommend()
        with self.assertRaises(InputError):
            mediator.observe(np.zeros(3))

    def test_mediator_follows_a_welfare_gradient(self):
        tree = random_signaling(2)
        _, index, decomp, blueprint = signaling_setup(tree)
        program = decompose_xi_j(decomp, 1, blueprint)
        pairs = program.pairs
        positions = decomp.leaves_in(1)
        found = pairs.index_of(index.leaf_sequences[1][positions], index.leaf_sequences[2][positions])
        loss = np.zeros(len(pairs))
        np.add.at(loss, found, -(index.leaf_payoffs[1][positions] + index.leaf_payoffs[2][positions]))
        mediator = MediatorRegretMinimizer(program)
        for _ in range(2000):
            mediator.recommend()
            mediator.observe(loss)
        welfare = float(-loss @ mediator.average())
        best = max(float(-loss @ program.execute([np.eye(n)[k] for n, k in zip(program.local_sizes, choice)]))
                   for choice in np.ndindex(*program.local_sizes))
        self.assertAlmostEqual(welfare, best, delta=1e-2)

    def test_deviation_tree_strategy_is_a_flow(self):
        _, index, _, _ = signaling_setup()
        g = index.sequence_by_label(1, 'G')
        root = index.infoset_of(1, g)
        minimizer = DeviationTreeMinimizer(index, 1, root, excluded=g)
        y = minimizer.recommend()
        self.assertEqual(y[g], 0.0)
        seqs = index.sequences_of(1, root)
        self.assertAlmostEqual(float(y[seqs.start:seqs.stop].sum()), 1.0)
        b = index.sequence_by_label(1, 'B')
        below = [index.sequence_by_label(1, s) for s in ('X_B', 'Y_B')]
        self.assertAlmostEqual(float(y[below].sum()), float(y[b]))
        self.assertNotIn(index.infoset_of(1, index.sequence_by_label(1, 'X_G')), minimizer.infosets)

    def test_deviator_best_response_equals_max_violation(self):
        fixtures = [signaling_setup(), signaling_setup(random_signaling(1), kind='jittered', weight=0.5, seed=3)]
        tree, index, decomp = battleship_setup()
        fixtures.append((tree, index, decomp, make_blueprint('jittered', tree, index, weight=0.5, seed=2)))
        rng = np.random.default_rng(11)
        for number, (_, _, decomp, blueprint) in enumerate(fixtures):
            with self.subTest(fixture=number):
                ledger = build_ledger(blueprint, decomp)
                program = decompose_xi_j(decomp, 1, blueprint)
                deviator = DeviatorRegretMinimizer(decomp, ledger, 1, program.pairs)
                for _ in range(3):
                    entries = program.execute([rng.dirichlet(np.ones(n)) for n in program.local_sizes])
                    expected = max_violation(program.plan(entries), decomp, ledger, 1)
                    self.assertAlmostEqual(deviator.best_response_value(entries), expected, places=9)

    def test_blueprint_restriction_has_no_positive_violation(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        ledger = build_ledger(blueprint, decomp)
        plan = restriction(blueprint, decomp.restricted_pairs(1))
        self.assertLessEqual(max_violation(plan, decomp, ledger, 1), 1e-12)

    def test_constructed_lower_bound_violation(self):
        _, index, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        plan = restriction(blueprint, decomp.restricted_pairs(1))
        key = (1, index.sequence_by_label(1, 'X_G'), 1)
        entry = ledger.lower_bundles[key]
        value = bundle_value(plan, entry.player, entry.positions, entry.anchor)
        ledger.lower_bundles[key] = dataclasses.replace(entry, bound=value + 0.05)
        self.assertAlmostEqual(max_violation(plan, decomp, ledger, 1), 0.05, places=12)
        worst = max(violation_terms(plan, decomp, ledger, 1).items(), key=lambda item: item[1])
        self.assertEqual(worst[0][0], 'lower_bundle')


class SelfPlayTests(SimpleTestCase):
    def test_zero_iterations_returns_the_blueprint_restriction(self):
        _, _, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        result = self_play_refine(blueprint, decomp, ledger, 1, max_iters=0)
        pairs = result.plan.pairs
        self.assertTrue(np.array_equal(result.plan.entries, blueprint.values(pairs.first, pairs.second)))
        self.assertEqual(result.iterations, 0)
        self.assertEqual(result.max_violation, max_violation(result.plan, decomp, ledger, 1))
        self.assertEqual(len(result.series), 1)

    def test_epsilon_must_be_positive(self):
        _, _, decomp, blueprint = signaling_setup()
        with self.assertRaises(InputError):
            self_play_refine(blueprint, decomp, build_ledger(blueprint, decomp), 1, epsilon=0.0)

    def test_signaling_self_play_reaches_epsilon(self):
        for tree in (None, random_signaling(4)):
            _, _, decomp, blueprint = signaling_setup(tree)
            ledger = build_ledger(blueprint, decomp)
            for j in (1, 2):
                with self.subTest(subgame=j):
                    result = self_play_refine(blueprint, decomp, ledger, j, epsilon=1e-2, max_iters=20000,
                                              audit_every=25)
                    self.assertEqual(result.status, CONVERGED)
                    self.assertLessEqual(result.max_violation, 1e-2)
                    self.assertLessEqual(restricted_residual(result.plan), 1e-9)
                    pinned = decomp.pair_class(result.plan.pairs.first, result.plan.pairs.second) == PRE_SUBGAME
                    expected = blueprint.values(result.plan.pairs.first[pinned], result.plan.pairs.second[pinned])
                    self.assertTrue(np.array_equal(result.plan.entries[pinned], expected))
                    self.assertEqual([s.iteration for s in result.series][0], 0)

    def test_cfr_runs_through_refine_all(self):
        _, _, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        results = refine_all(blueprint, decomp, ledger, method='cfr', epsilon=1e-2, max_iters=3000)
        self.assertEqual({r.method for r in results.values()}, {'cfr'})
        plan = assemble_complete_refinement(blueprint, decomp, results)
        self.assertLessEqual(structural_residual(plan), 1e-9)

    def test_cfr_refinement_is_safe_up_to_its_remaining_violation(self):
        for tree in (None, random_signaling(4)):
            _, _, decomp, blueprint = signaling_setup(tree)
            ledger = build_ledger(blueprint, decomp)
            results = refine_all(blueprint, decomp, ledger, method='cfr', epsilon=1e-3, max_iters=5000,
                                 audit_every=25)
            # every trigger's excess is covered by the positive constraint violations it passes through
            slack = sum(max(value, 0.0) for j, result in results.items()
                        for value in violation_terms(result.plan, decomp, ledger, j).values())
            plan = assemble_complete_refinement(blueprint, decomp, results)
            audit = safety_audit(plan, ledger, tol=1e-6 + slack)
            self.assertTrue(audit.passed, audit.failures)
            self.assertLessEqual(structural_residual(plan), 1e-7)

    def test_cfr_welfare_stays_below_the_lp_optimum_over_its_slack(self):
        _, _, decomp, blueprint = signaling_setup(random_signaling(4))
        ledger = build_ledger(blueprint, decomp)
        for j in (1, 2):
            with self.subTest(subgame=j):
                cfr = self_play_refine(blueprint, decomp, ledger, j, epsilon=1e-3, max_iters=5000, audit_every=25)
                exact = refine_subgame_lp(blueprint, decomp, ledger, j)
                relaxed = refine_subgame_lp(blueprint, decomp, relaxed_ledger(ledger, max(cfr.max_violation, 0.0)), j)
                self.assertLessEqual(cfr.subgame_welfare, relaxed.subgame_welfare + 1e-6)
                self.assertGreaterEqual(relaxed.subgame_welfare, exact.subgame_welfare - 1e-7)
                self.assertGreaterEqual(exact.subgame_welfare, cfr.blueprint_welfare - 1e-7)
                self.assertLessEqual(exact.max_violation, 1e-6)

    @tag('slow')
    def test_battleship_self_play_reaches_epsilon(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        ledger = build_ledger(blueprint, decomp)
        result = self_play_refine(blueprint, decomp, ledger, 1, epsilon=1e-2, max_iters=20000)
        self.assertLessEqual(result.max_violation, max(1e-2, result.series[1].violation))
        self.assertEqual(result.series[-1].violation, result.max_violation)
        self.assertAlmostEqual(subgame_welfare(blueprint, decomp, 1), -3 / 81, places=12)
