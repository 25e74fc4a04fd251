import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from efce_resolver.exceptions import GameFormatError, GameStructureError, InputError
from .efgio import dump_game, load_game, parse_game, save_game
from .generators import (
    SIGNALING_LEAVES,
    BattleshipConfig,
    battleship_frontier,
    build_battleship,
    build_matrix_game,
    build_signaling_game,
    signaling_subgames,
)
from .sequences import (
    EMPTY,
    behavioral_to_sequence_form,
    build_sequence_index,
    pure_behavioral,
    uniform_behavioral,
)
from .serializers import BattleshipConfigSerializer
from .tree import GameTreeBuilder, validate_perfect_recall


def signaling(payoffs=None):
    payoffs = payoffs or {leaf: (0.0, 0.0) for leaf in SIGNALING_LEAVES}
    return build_signaling_game(payoffs)


def count_battleship_leaves(n, rounds):
    """Independent playout count for a 1×n grid with a single-tile ship."""

    def play(ship1, ship2, shots1, shots2):
        first_turn = len(shots1) == len(shots2)
        shooter_shots, target = (shots1, ship2) if first_turn else (shots2, ship1)
        total = 0
        for tile in range(n):
            if tile in shooter_shots:
                continue
            if tile == target:
                total += 1
                continue
            if first_turn:
                total += play(ship1, ship2, shots1 + (tile,), shots2)
            elif len(shots2) + 1 == rounds:
                total += 1
            else:
                total += play(ship1, ship2, shots1, shots2 + (tile,))
        return total

    return sum(play(a, b, (), ()) for a in range(n) for b in range(n))


class GameTreeBuilderTests(SimpleTestCase):
    def test_single_leaf_game(self):
        builder = GameTreeBuilder()
        builder.add_leaf('root', 0, 0)
        tree = builder.build('root')
        self.assertEqual(tree.num_nodes, 1)
        self.assertEqual(validate_perfect_recall(tree), [])
        index = build_sequence_index(tree)
        self.assertEqual(index.size(1), 1)
        self.assertEqual(index.size(2), 1)
        self.assertEqual(index.leaf_of_pair, {(EMPTY, EMPTY): 0})

    def test_unknown_child_is_rejected(self):
        builder = GameTreeBuilder()
        builder.add_decision('root', 1, 'i', ('a',), ('missing',))
        with self.assertRaises(GameStructureError) as ctx:
            builder.build('root')
        self.assertEqual(ctx.exception.node_id, 'root')

    def test_duplicate_child_is_rejected(self):
        builder = GameTreeBuilder()
        builder.add_decision('root', 1, 'i', ('a', 'b'), ('x', 'y'))
        builder.add_decision('x', 2, 'j', ('c',), ('y',))
        builder.add_leaf('y', 0, 0)
        with self.assertRaises(GameStructureError) as ctx:
            builder.build('root')
        self.assertEqual(ctx.exception.node_id, 'y')

    def test_orphan_is_rejected(self):
        builder = GameTreeBuilder()
        builder.add_decision('root', 1, 'i', ('a',), ('x',))
        builder.add_leaf('x', 0, 0)
        builder.add_leaf('stray', 0, 0)
        with self.assertRaises(GameStructureError) as ctx:
            builder.build('root')
        self.assertEqual(ctx.exception.node_id, 'stray')

    def test_third_player_is_rejected(self):
        with self.assertRaises(GameStructureError):
            GameTreeBuilder().add_decision('root', 3, 'i', ('a',), ('x',))

    def test_preorder_subtree_ranges(self):
        tree = signaling()
        for v in range(tree.num_nodes):
            for w in range(v, int(tree.subtree_end[v])):
                self.assertIn(v, tree.path(w))


class PerfectRecallTests(SimpleTestCase):
    def test_signaling_game_has_perfect_recall(self):
        self.assertEqual(validate_perfect_recall(signaling()), [])

    def test_merged_infoset_is_a_condition_one_violation(self):
        builder = GameTreeBuilder()
        builder.add_decision('r', 1, 'root', ('a', 'b'), ('A', 'B'))
        builder.add_decision('A', 2, 'u', ('l', 'r'), ('A1', 'A2'))
        builder.add_decision('B', 2, 'w', ('l', 'r'), ('B1', 'B2'))
        builder.add_decision('A1', 2, 'z', ('x', 'y'), ('A1x', 'A1y'))
        builder.add_decision('B1', 2, 'z', ('x', 'y'), ('B1x', 'B1y'))
        for leaf in ('A2', 'B2', 'A1x', 'A1y', 'B1x', 'B1y'):
            builder.add_leaf(leaf, 0, 0)
        violations = validate_perfect_recall(builder.build('r'))
        self.assertEqual(len(violations), 1)
        violation = violations[0]
        self.assertEqual((violation.condition, violation.player), (1, 2))
        self.assertEqual({violation.first_node, violation.second_node}, {'A1', 'B1'})

    def test_forgotten_own_action_is_a_condition_two_violation(self):
        builder = GameTreeBuilder()
        builder.add_decision('r', 1, 'root', ('a', 'b'), ('A', 'B'))
        builder.add_decision('A', 1, 'later', ('x', 'y'), ('Ax', 'Ay'))
        builder.add_decision('B', 1, 'later', ('x', 'y'), ('Bx', 'By'))
        for leaf in ('Ax', 'Ay', 'Bx', 'By'):
            builder.add_leaf(leaf, 0, 0)
        violations = validate_perfect_recall(builder.build('r'))
        self.assertEqual([(v.condition, v.player) for v in violations], [(2, 1)])


class SequenceIndexTests(SimpleTestCase):
    def test_signaling_sequences(self):
        index = build_sequence_index(signaling())
        self.assertEqual([index.label(1, s) for s in range(index.size(1))],
                         ['∅', 'G', 'B', 'X_G', 'Y_G', 'X_B', 'Y_B'])
        self.assertEqual([index.label(2, s) for s in range(index.size(2))], ['∅', 'lx', 'rx', 'ly', 'ry'])
        self.assertEqual(len(index.leaf_of_pair), 8)
        self.assertEqual(index.successors(1, EMPTY), [1, 2])
        self.assertTrue(index.is_prefix(1, 1, 4))
        self.assertFalse(index.is_prefix(1, 2, 4))

    def test_leaf_map_reconstructs_payoffs(self):
        payoffs = {leaf: (float(k), float(-k) / 2) for k, leaf in enumerate(SIGNALING_LEAVES)}
        tree = signaling(payoffs)
        index = build_sequence_index(tree)
        for (first, second), node in index.leaf_of_pair.items():
            self.assertEqual(index.payoff(first, second), tuple(tree.payoffs[node]))
        for (own, response), value in payoffs.items():
            pair = (index.sequence_by_label(1, own), index.sequence_by_label(2, response))
            self.assertEqual(index.payoff(*pair), value)

    def test_battleship_sequence_counts(self):
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=2.0))
        index = build_sequence_index(tree)
        self.assertEqual(index.size(1), 49)
        self.assertEqual(index.size(2), 58)
        for player in (1, 2):
            walked = 1 + sum(infoset.action_count for infoset in tree.infosets(player))
            self.assertEqual(index.size(player), walked)

    def test_subtree_infosets_are_in_preorder(self):
        index = build_sequence_index(signaling())
        self.assertEqual(index.subtree_infosets(1, EMPTY), (0, 1, 2))
        self.assertEqual(index.subtree_infosets(1, 1), (1,))
        self.assertEqual(index.subtree_infosets(2, EMPTY), (0, 1))


class SequenceFormTests(SimpleTestCase):
    def test_uniform_signaling_strategy(self):
        tree = signaling()
        index = build_sequence_index(tree)
        strategy = behavioral_to_sequence_form(tree, uniform_behavioral(tree, 1), 1, index)
        self.assertAlmostEqual(strategy.values[index.sequence_by_label(1, 'G')], 0.5)
        self.assertAlmostEqual(strategy.values[index.sequence_by_label(1, 'B')], 0.5)
        self.assertAlmostEqual(strategy.values[index.sequence_by_label(1, 'X_G')], 0.25)
        self.assertLessEqual(strategy.flow_residual(index), 1e-12)

    def test_pure_strategy_is_zero_one(self):
        tree = signaling()
        index = build_sequence_index(tree)
        values = behavioral_to_sequence_form(tree, pure_behavioral(tree, 1), 1, index).values
        self.assertTrue(set(np.unique(values)) <= {0.0, 1.0})
        self.assertEqual(values.tolist(), [1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0])

    def test_random_behavioral_strategies_satisfy_flow(self):
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=2.0))
        index = build_sequence_index(tree)
        rng = np.random.default_rng(7)
        for player in (1, 2):
            behavioral = [rng.dirichlet(np.ones(i.action_count)) for i in tree.infosets(player)]
            strategy = behavioral_to_sequence_form(tree, behavioral, player, index)
            self.assertLessEqual(strategy.flow_residual(index), 1e-9)
            for node in tree.leaves[:50]:
                expected = 1.0
                for child in tree.path(int(node))[1:]:
                    parent = int(tree.parents[child])
                    if tree.players[parent] == player:
                        expected *= behavioral[tree.node_infosets[parent]][tree.parent_actions[child]]
                sequence = index.node_sequences[node, player - 1]
                self.assertAlmostEqual(strategy.values[sequence], expected, places=12)

    def test_unnormalized_distribution_names_the_infoset(self):
        tree = signaling()
        behavioral = uniform_behavioral(tree, 1)
        behavioral[2] = np.array([0.7, 0.7])
        with self.assertRaisesMessage(InputError, 'infoset 2'):
            behavioral_to_sequence_form(tree, behavioral, 1)


class GeneratorTests(SimpleTestCase):
    def test_signaling_structure(self):
        tree = signaling()
        self.assertEqual(len(tree.leaves), 8)
        self.assertEqual([i.label for i in tree.infosets(2)], ['X', 'Y'])
        first, second = signaling_subgames(tree)
        self.assertEqual(len(first), 6)
        self.assertEqual(len(second), 6)
        self.assertFalse(set(first) & set(second))

    def test_signaling_rejects_wrong_keys(self):
        payoffs = {leaf: (0, 0) for leaf in SIGNALING_LEAVES[:-1]}
        payoffs[('X_G', 'ly')] = (0, 0)
        with self.assertRaisesMessage(InputError, "('Y_B', 'ry')"):
            build_signaling_game(payoffs)

    def test_matrix_game(self):
        tree = build_matrix_game([[1, 2], [3, 4]], [[0, 0], [0, 1]])
        self.assertEqual(len(tree.leaves), 4)
        self.assertEqual(len(tree.infosets(2)), 1)
        self.assertEqual(validate_perfect_recall(tree), [])
        with self.assertRaises(InputError):
            build_matrix_game([[1, 2]], [[1], [2]])

    def test_battleship_leaf_count_matches_playouts(self):
        for n, rounds in ((2, 1), (3, 2), (3, 3)):
            tree = build_battleship(BattleshipConfig.grid(n, turns=rounds, gamma=2.0))
            self.assertEqual(len(tree.leaves), count_battleship_leaves(n, rounds))

    def test_battleship_payoff_support_and_recall(self):
        gamma = 5.0
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=gamma))
        support = {tuple(row) for row in tree.payoffs[tree.leaves]}
        self.assertLessEqual(support, {(1.0, -gamma), (-gamma, 1.0), (0.0, 0.0)})
        self.assertEqual(validate_perfect_recall(tree), [])

    def test_single_tile_board_is_decided_by_the_first_shot(self):
        tree = build_battleship(BattleshipConfig.grid(1, turns=1, gamma=2.0))
        self.assertEqual(tree.payoffs[tree.leaves].tolist(), [[1.0, -2.0]])

    def test_two_dimensional_placements(self):
        cfg = BattleshipConfig(width=3, height=2, ship=2, turns=1, gamma=2.0)
        labels = [label for label, _ in cfg.placements()]
        self.assertEqual(labels, ['H-x0y0', 'H-x1y0', 'H-x0y1', 'H-x1y1', 'V-x0y0', 'V-x1y0', 'V-x2y0'])
        single = BattleshipConfig(width=3, height=2, ship=1, turns=1, gamma=2.0)
        self.assertEqual(len(single.placements()), 6)

    def test_invalid_config(self):
        with self.assertRaises(InputError):
            BattleshipConfig.grid(3, turns=0, gamma=2.0).validate()
        with self.assertRaises(InputError):
            BattleshipConfig.grid(3, turns=1, gamma=2.0, ship=4).validate()

    def test_turns_count_rounds_without_repeat_fire(self):
        config = BattleshipConfig.grid(3, turns=2, gamma=2.0)
        tree = build_battleship(config)
        longest = 0
        for leaf in tree.leaves:
            shots = tree.action_path(leaf)[2:]
            longest = max(longest, len(shots))
            self.assertEqual(len(set(shots[0::2])), len(shots[0::2]))
            self.assertEqual(len(set(shots[1::2])), len(shots[1::2]))
        self.assertEqual(longest, 2 * config.turns)
        with self.assertRaises(InputError):
            BattleshipConfig.grid(3, turns=4, gamma=2.0).validate()

    def test_single_tile_ship_is_location_symmetric(self):
        tree = build_battleship(BattleshipConfig.grid(3, turns=2, gamma=2.0))
        sizes = {int(tree.subtree_end[child]) - child for child in tree.children[tree.root]}
        self.assertEqual(len(sizes), 1)

    def test_frontier_after_one_round(self):
        for n in (3, 4):
            tree = build_battleship(BattleshipConfig.grid(n, turns=2 if n == 3 else 3, gamma=2.0))
            frontier = battleship_frontier(tree, 1)
            self.assertEqual(len(frontier), n * n)
            roots = [nodes[0] for nodes in frontier]
            self.assertEqual(tree.action_path(roots[0])[2:], ['x0y0', 'x0y0'])
            for nodes in frontier:
                members = set(nodes)
                for v in nodes:
                    self.assertTrue(set(tree.children[v]) <= members)


class GameFileTests(SimpleTestCase):
    def test_round_trip_signaling(self):
        payoffs = {leaf: (k / 4, -k) for k, leaf in enumerate(SIGNALING_LEAVES)}
        tree = signaling(payoffs)
        text = dump_game(tree)
        again = parse_game(text)
        self.assertEqual(dump_game(again), text)
        self.assertEqual(again.labels, tree.labels)
        np.testing.assert_array_equal(again.payoffs, tree.payoffs)

    def test_round_trip_battleship_on_disk(self):
        tree = build_battleship(BattleshipConfig.grid(4, turns=3, gamma=2.0))
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'battleship.efg'
            save_game(tree, path)
            again = load_game(path)
        first, second = build_sequence_index(tree), build_sequence_index(again)
        for player in (1, 2):
            self.assertEqual(first.size(player), second.size(player))

    def test_third_player_names_the_line(self):
        text = '\n'.join([
            'efg 2p-nochance v1',
            'root r',
            'node r player=3 infoset=3:i actions=a children=x',
            'leaf x u1=0 u2=0',
        ])
        with self.assertRaises(GameFormatError) as ctx:
            parse_game(text)
        self.assertEqual(ctx.exception.line_number, 3)

    def test_chance_node_is_rejected(self):
        text = 'efg 2p-nochance v1\nroot r\nnode r player=c infoset=c:i actions=a children=x\nleaf x u1=0 u2=0\n'
        with self.assertRaisesMessage(GameFormatError, 'Chance'):
            parse_game(text)

    def test_missing_header(self):
        with self.assertRaises(GameFormatError):
            parse_game('root r\nleaf r u1=0 u2=0\n')


class BattleshipConfigSerializerTests(SimpleTestCase):
    def test_valid_config(self):
        serializer = BattleshipConfigSerializer(data={'width': 3, 'turns': 2, 'gamma': 5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_config(), BattleshipConfig.grid(3, turns=2, gamma=5.0))

    def test_ship_longer_than_board(self):
        serializer = BattleshipConfigSerializer(data={'width': 2, 'ship': 3, 'turns': 1})
        self.assertFalse(serializer.is_valid())
