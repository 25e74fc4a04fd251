import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from efce_resolver.exceptions import GameFormatError, InputError, InvariantViolation
from games.generators import (
    SIGNALING_LEAVES,
    BattleshipConfig,
    build_battleship,
    build_matrix_game,
    build_signaling_game,
    signaling_subgames,
)
from games.sequences import EMPTY, build_sequence_index
from .bounds import (
    LOWER,
    build_ledger,
    bundle_value,
    leaf_bundles,
    margin_targets,
    propagate_lower,
    propagate_upper,
    split_margin,
)
from .deviation import (
    all_triggers,
    best_deviation,
    evaluate_deviation,
    exploitability_report,
    follow_values,
    infoset_deviation_value,
    social_welfare,
    subgame_welfare,
    subtree_of,
)
from .planio import load_plan, save_ledger, save_plan
from .plans import CorrelationPlan, StructuralConstraints, jitter_uniform, make_blueprint, structural_residual
from .relevance import Connectivity, relevant_pairs
from .subgames import (
    PRE_SUBGAME,
    SubgameDecomposition,
    decompose_by_public_state,
    dump_decomposition,
    head_infosets,
    parse_decomposition,
)

# u1 only; P2 payoffs mirror them with a sign flip and do not enter P1's ledger.
HAND_PAYOFFS = {
    ('X_G', 'lx'): 4.0, ('X_G', 'rx'): 0.0,
    ('Y_G', 'ly'): 1.0, ('Y_G', 'ry'): 1.0,
    ('X_B', 'lx'): 0.0, ('X_B', 'rx'): 0.0,
    ('Y_B', 'ly'): 0.0, ('Y_B', 'ry'): 0.0,
}


def signaling(payoffs=None):
    payoffs = payoffs or {leaf: (u, -u) for leaf, u in HAND_PAYOFFS.items()}
    return build_signaling_game(payoffs)


def random_signaling(seed):
    rng = np.random.default_rng(seed)
    return build_signaling_game({leaf: tuple(rng.uniform(-1, 1, size=2)) for leaf in SIGNALING_LEAVES})


def signaling_setup(tree=None, kind='uniform', **kwargs):
    tree = tree or signaling()
    index = build_sequence_index(tree)
    decomp = SubgameDecomposition(tree, signaling_subgames(tree), index=index)
    blueprint = make_blueprint(kind, tree, index, **kwargs)
    return tree, index, decomp, blueprint


def battleship_setup(n=3, turns=2, gamma=2.0, rounds=1):
    tree = build_battleship(BattleshipConfig.grid(n, turns=turns, gamma=gamma))
    index = build_sequence_index(tree)
    decomp = decompose_by_public_state(tree, rounds, index=index)
    return tree, index, decomp


class RelevancePairTests(SimpleTestCase):
    def test_signaling_pairs_are_all_connected(self):
        tree = signaling()
        index = build_sequence_index(tree)
        pairs = relevant_pairs(tree, index)
        self.assertEqual(len(pairs), 35)
        connectivity = Connectivity(tree)
        self.assertTrue(connectivity.connected(0, 1))

    def test_matrix_game_pairs(self):
        tree = build_matrix_game([[1, 0], [0, 1]], [[0, 1], [1, 0]])
        pairs = relevant_pairs(tree, build_sequence_index(tree))
        self.assertEqual(len(pairs), 9)
        self.assertEqual(pairs.index_of(np.array([0, 2, 5]), np.array([0, 2, 0])).tolist(), [0, 8, -1])
        self.assertEqual(int(pairs.index_of(5, 0)), -1)

    def test_missing_pair_raises(self):
        tree = signaling()
        pairs = relevant_pairs(tree, build_sequence_index(tree))
        with self.assertRaises(InputError):
            pairs.position(99, 0)

    def test_column_lookup_matches_scan(self):
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=2.0))
        pairs = relevant_pairs(tree, build_sequence_index(tree))
        for second in (0, 5, 17):
            expected = np.flatnonzero(pairs.second == second)
            self.assertEqual(sorted(pairs.column(second).tolist()), expected.tolist())


class PlanTests(SimpleTestCase):
    def test_uniform_blueprint_lies_in_the_polytope(self):
        tree, index, _, blueprint = signaling_setup()
        plan = blueprint.materialize(relevant_pairs(tree, index))
        self.assertLessEqual(structural_residual(plan), 1e-12)
        self.assertAlmostEqual(plan.value(index.sequence_by_label(1, 'X_G'), index.sequence_by_label(2, 'lx')),
                               0.125)

    def test_residual_detects_flow_and_sign_violations(self):
        tree, index, _, blueprint = signaling_setup()
        plan = blueprint.materialize(relevant_pairs(tree, index))
        broken = plan.copy()
        broken.entries[plan.pairs.position(index.sequence_by_label(1, 'G'), EMPTY)] += 0.1
        self.assertAlmostEqual(structural_residual(broken), 0.1)

        negative = CorrelationPlan(plan.pairs, plan.entries.copy())
        position = plan.pairs.position(index.sequence_by_label(1, 'X_G'), index.sequence_by_label(2, 'lx'))
        negative.entries[position] = -0.2
        self.assertGreaterEqual(structural_residual(negative), 0.2)

    def test_constraint_rows_count(self):
        tree = signaling()
        pairs = relevant_pairs(tree, build_sequence_index(tree))
        # (∅,∅) + 3 P1 infosets x 5 P2 sequences + 2 P2 infosets x 7 P1 sequences
        self.assertEqual(StructuralConstraints(pairs).row_count, 1 + 15 + 14)

    def test_zero_weight_jitter_is_uniform(self):
        tree, index, _, uniform = signaling_setup()
        jittered = make_blueprint('jittered', tree, index, weight=0.0, seed=11)
        pairs = relevant_pairs(tree, index)
        np.testing.assert_allclose(jittered.values(pairs.first, pairs.second),
                                   uniform.values(pairs.first, pairs.second), atol=1e-15)

    def test_jitter_is_deterministic_and_in_unit_interval(self):
        draws = [jitter_uniform(5, 1, i, a) for i in range(4) for a in range(3)]
        self.assertEqual(draws, [jitter_uniform(5, 1, i, a) for i in range(4) for a in range(3)])
        self.assertTrue(all(0.0 <= u < 1.0 for u in draws))
        self.assertNotEqual(jitter_uniform(5, 1, 0, 0), jitter_uniform(6, 1, 0, 0))

    def test_jittered_blueprint_is_a_plan(self):
        tree, index, _, blueprint = signaling_setup(kind='jittered', weight=0.8, seed=3)
        plan = blueprint.materialize(relevant_pairs(tree, index))
        self.assertLessEqual(structural_residual(plan), 1e-12)

    def test_unknown_kind(self):
        tree = signaling()
        with self.assertRaises(InputError):
            make_blueprint('optimal', tree, build_sequence_index(tree))
        with self.assertRaises(InputError):
            make_blueprint('jittered', tree, build_sequence_index(tree), weight=1.5)

    def test_plan_csv_round_trip(self):
        tree, index, _, blueprint = signaling_setup(kind='jittered', weight=0.5, seed=1)
        plan = blueprint.materialize(relevant_pairs(tree, index))
        with tempfile.TemporaryDirectory() as tmp:
            path = save_plan(plan, Path(tmp) / 'plan.csv')
            self.assertEqual(path.read_text().splitlines()[0], 'seq1,seq2,value')
            loaded = load_plan(plan.pairs, path)
        np.testing.assert_array_equal(loaded.entries, plan.entries)

    def test_plan_csv_header_is_checked(self):
        tree = signaling()
        pairs = relevant_pairs(tree, build_sequence_index(tree))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'plan.csv'
            path.write_text('a,b,c\n0,0,1\n')
            with self.assertRaises(GameFormatError):
                load_plan(pairs, path)


class SubgameTests(SimpleTestCase):
    def test_signaling_partition(self):
        _, index, decomp, _ = signaling_setup()
        self.assertEqual(decomp.class_sizes.tolist(), [7, 14, 14])
        self.assertEqual(len(decomp.restricted_pairs(1)), 21)
        x_infoset = index.infoset_of(2, index.sequence_by_label(2, 'lx'))
        self.assertEqual(head_infosets(decomp, 2, 1), (x_infoset,))
        self.assertEqual(head_infosets(decomp, 1, 1), ())
        self.assertTrue(decomp.is_pre_subgame(1, index.sequence_by_label(1, 'X_G')))

    def test_battleship_restricted_index_size(self):
        _, index, decomp = battleship_setup()
        self.assertEqual(decomp.count, 9)
        self.assertEqual(int(decomp.class_sizes[PRE_SUBGAME]), 286)
        self.assertEqual(int(decomp.class_sizes[1]), 96)
        self.assertEqual(int(decomp.class_sizes.sum()), len(decomp.pairs))
        self.assertEqual(len(decomp.restricted_pairs(1)), 382)
        for j in (1, 5):
            for player in (1, 2):
                for head in decomp.heads(player, j):
                    parent = index.infoset_parent[player][head]
                    self.assertTrue(decomp.is_pre_subgame(player, parent))

    def test_rounds_must_leave_a_subgame(self):
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=2.0))
        with self.assertRaises(InputError):
            decompose_by_public_state(tree, 2)

    def test_subgames_must_be_closed(self):
        tree = signaling()
        with self.assertRaises(InputError):
            SubgameDecomposition(tree, [[tree.node_by_label['G.X']]])

    def test_straddling_infoset_is_rejected(self):
        tree = signaling()
        g_x = tree.node_by_label['G.X']
        with self.assertRaises(InputError):
            SubgameDecomposition(tree, [list(range(g_x, int(tree.subtree_end[g_x])))])

    def test_spanning_pair_is_an_invariant_violation(self):
        _, _, decomp = battleship_setup()
        first = decomp.subgame_sequences(1, 1)[:1]
        second = decomp.subgame_sequences(2, 2)[:1]
        with self.assertRaises(InvariantViolation):
            decomp.pair_class(first, second)

    def test_decomposition_text_round_trip(self):
        tree, index, decomp, _ = signaling_setup()
        again = parse_decomposition(tree, dump_decomposition(decomp), index=index)
        self.assertEqual(again.fingerprint, decomp.fingerprint)
        with self.assertRaises(InputError):
            parse_decomposition(tree, 'subgame one: root\n', index=index)


class DeviationTests(SimpleTestCase):
    def test_best_deviation_matches_brute_force(self):
        for game, tree in enumerate((signaling(), random_signaling(0), random_signaling(1))):
            index = build_sequence_index(tree)
            pairs = relevant_pairs(tree, index)
            deviations = {}
            for player in (1, 2):
                for trigger in all_triggers(index, player):
                    infoset = index.infoset_of(player, trigger)
                    infosets = subtree_of(index, player, infoset)
                    recommended = trigger - index.sequences_of(player, infoset).start
                    policies = [dict(zip(infosets, choice)) for choice in
                                itertools.product(*(range(index.action_count(player, i)) for i in infosets))]
                    deviations[player, trigger] = [p for p in policies if p[infoset] != recommended]
            rng = np.random.default_rng(100 + game)
            for _ in range(100):
                plan = CorrelationPlan(pairs, rng.uniform(0, 1, size=len(pairs)))
                for (player, trigger), policies in deviations.items():
                    report = best_deviation(plan, player, trigger)
                    best = max(evaluate_deviation(plan, player, trigger, policy) for policy in policies)
                    self.assertAlmostEqual(report.beta_star, best, delta=1e-9)
                    self.assertAlmostEqual(
                        evaluate_deviation(plan, player, trigger, report.continuation), report.beta_star, delta=1e-9)

    def test_hand_computed_signaling_values(self):
        _, index, _, blueprint = signaling_setup()
        x_g, y_g, g = (index.sequence_by_label(1, s) for s in ('X_G', 'Y_G', 'G'))
        report = best_deviation(blueprint, 1, x_g)
        self.assertAlmostEqual(report.mu, 0.5)
        self.assertAlmostEqual(report.beta_star, 0.25)
        self.assertAlmostEqual(report.delta, -0.25)
        self.assertAlmostEqual(best_deviation(blueprint, 1, y_g).delta, 0.25)
        self.assertAlmostEqual(best_deviation(blueprint, 1, g).delta, -0.75)
        follow = follow_values(blueprint, 1)
        self.assertAlmostEqual(follow.v[index.infoset_of(1, g)], 0.75)

    def test_recommended_action_is_not_a_continuation(self):
        _, index, _, blueprint = signaling_setup()
        x_g = index.sequence_by_label(1, 'X_G')
        infoset = index.infoset_of(1, x_g)
        with self.assertRaises(InputError):
            evaluate_deviation(blueprint, 1, x_g, {infoset: x_g - index.sequences_of(1, infoset).start})
        with self.assertRaises(InputError):
            best_deviation(blueprint, 1, EMPTY)

    def test_uniform_battleship_blueprint_is_an_efce(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        report = exploitability_report(blueprint, decomp.pairs)
        self.assertLessEqual(report.max_delta, 1e-9)
        self.assertLessEqual(report.residual, 1e-12)
        self.assertTrue(report.is_efce())

    def test_battleship_subgame_welfare(self):
        for n, turns, expected in ((3, 2, -3 / 81), (4, 3, -8 / 256)):
            with self.subTest(n=n, turns=turns):
                tree, index, decomp = battleship_setup(n=n, turns=turns)
                blueprint = make_blueprint('uniform', tree, index)
                self.assertAlmostEqual(subgame_welfare(blueprint, decomp, 1), expected, places=12)
                total = sum(subgame_welfare(blueprint, decomp, j) for j in range(decomp.count + 1))
                self.assertAlmostEqual(total, social_welfare(blueprint), places=12)

    def test_stronger_gamma_scales_welfare(self):
        tree, index, decomp = battleship_setup(gamma=5.0)
        blueprint = make_blueprint('uniform', tree, index)
        self.assertAlmostEqual(subgame_welfare(blueprint, decomp, 1), -12 / 81, places=12)


class BoundsTests(SimpleTestCase):
    def test_margin_split(self):
        zero = split_margin(1.0, 1.0)
        self.assertEqual((zero.mu, zero.beta, zero.alpha), (1.0, 1.0, 0.0))
        negative = split_margin(1.0, 0.6)
        self.assertAlmostEqual(negative.mu, 0.8)
        self.assertAlmostEqual(negative.beta, 0.8)
        positive = split_margin(1.0, 1.3)
        self.assertEqual((positive.mu, positive.beta), (1.0, 1.3))
        self.assertAlmostEqual(positive.alpha, 0.3)

    def test_in_subgame_trigger_has_no_margin_targets(self):
        _, index, decomp, blueprint = signaling_setup()
        with self.assertRaises(InputError):
            margin_targets(blueprint, decomp, 2, index.sequence_by_label(2, 'lx'))

    def test_signaling_ledger_matches_hand_unrolled_recursion(self):
        _, index, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        g, x_g, y_g, x_b = (index.sequence_by_label(1, s) for s in ('G', 'X_G', 'Y_G', 'X_B'))

        self.assertAlmostEqual(ledger.delta(1, x_g), -0.25)
        self.assertAlmostEqual(ledger.delta(1, g), -0.75)
        # X_G: own margin gives 0.5 - 0.125; the G trigger only asks 0.5 - 0.1875.
        self.assertAlmostEqual(ledger.lower_bundles[(1, x_g, 1)].bound, 0.375)
        self.assertEqual(ledger.lower_bundles[(1, x_g, 1)].trigger, x_g)
        # Y_G has a positive margin, so its own target is the blueprint value.
        self.assertAlmostEqual(ledger.lower_bundles[(1, y_g, 2)].bound, 0.25)
        self.assertAlmostEqual(ledger.upper_bundles[(1, y_g, 2, x_g)].bound, 0.375)
        self.assertAlmostEqual(ledger.upper_bundles[(1, x_b, 1, g)].bound, 0.375)
        self.assertEqual(ledger.lower, {})
        self.assertEqual(ledger.upper, {})

    def test_lower_recursion_trace(self):
        _, index, decomp, blueprint = signaling_setup()
        g = index.sequence_by_label(1, 'G')
        result = propagate_lower(blueprint, decomp, 1, g, 0.375)
        self.assertEqual([step.components for step in result.trace][0], 1)
        self.assertAlmostEqual(result.trace[0].share, 0.375)
        x_g = index.sequence_by_label(1, 'X_G')
        self.assertAlmostEqual(result.bundles[(x_g, 1)], 0.5 - 0.1875)

    def test_upper_recursion_with_zero_slack(self):
        _, index, decomp, blueprint = signaling_setup()
        x_g = index.sequence_by_label(1, 'X_G')
        report = best_deviation(blueprint, 1, x_g)
        result = propagate_upper(blueprint, decomp, 1, x_g, report.beta_star, report)
        y_g = index.sequence_by_label(1, 'Y_G')
        self.assertAlmostEqual(result.bundles[(y_g, 2)], 0.25)
        self.assertTrue(all(abs(step.slack) < 1e-15 for step in result.trace))

    def test_trigger_without_subgame_content_adds_nothing(self):
        tree = signaling()
        index = build_sequence_index(tree)
        decomp = SubgameDecomposition(tree, signaling_subgames(tree)[:1], index=index)
        blueprint = make_blueprint('uniform', tree, index)
        result = propagate_lower(blueprint, decomp, 1, index.sequence_by_label(1, 'Y_G'), 0.0)
        self.assertEqual(result.heads, {})
        self.assertEqual(result.bundles, {})
        self.assertEqual(result.trace, [])

    def test_blueprint_satisfies_its_own_ledger(self):
        tree, index, decomp = battleship_setup()
        for kind, kwargs in (('uniform', {}), ('jittered', {'weight': 0.5, 'seed': 4})):
            with self.subTest(kind=kind):
                blueprint = make_blueprint(kind, tree, index, **kwargs)
                ledger = build_ledger(blueprint, decomp)
                self.assertGreater(len(ledger), 0)
                follow = {p: follow_values(blueprint, p) for p in (1, 2)}
                for entry in ledger.lower.values():
                    self.assertGreaterEqual(follow[entry.player].v[entry.infoset], entry.bound - 1e-12)
                for entry in list(ledger.upper.values())[:200]:
                    value = infoset_deviation_value(blueprint, entry.player, entry.trigger, entry.infoset)
                    self.assertLessEqual(value, entry.bound + 1e-12)
                for entry in ledger.lower_bundles.values():
                    value = bundle_value(blueprint, entry.player, entry.positions, entry.anchor)
                    self.assertGreaterEqual(value, entry.bound - 1e-12)
                for entry in ledger.upper_bundles.values():
                    value = bundle_value(blueprint, entry.player, entry.positions, entry.anchor)
                    self.assertLessEqual(value, entry.bound + 1e-12)

    def test_battleship_ledger_covers_head_infosets(self):
        tree, index, decomp = battleship_setup()
        blueprint = make_blueprint('uniform', tree, index)
        ledger = build_ledger(blueprint, decomp)
        for player in (1, 2):
            heads = set(decomp.heads(player, 1))
            recorded = {e.infoset for e in ledger.lower_for(1) if e.player == player}
            self.assertTrue(recorded <= heads)
        self.assertTrue(all(decomp.is_pre_subgame(e.player, e.trigger) for e in ledger.upper.values()))
        self.assertTrue(leaf_bundles(decomp, 1) or leaf_bundles(decomp, 2))

    def test_ledger_csv(self):
        _, _, decomp, blueprint = signaling_setup()
        ledger = build_ledger(blueprint, decomp)
        with tempfile.TemporaryDirectory() as tmp:
            lines = save_ledger(ledger, Path(tmp) / 'ledger.csv').read_text().splitlines()
        self.assertEqual(lines[0], 'player,subgame,infoset,kind,trigger,bound')
        self.assertEqual(len(lines), 1 + len(ledger))
        self.assertNotIn(f',{LOWER},', ''.join(lines[1:]))
