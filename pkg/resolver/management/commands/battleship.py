from correlation.relevance import relevant_pairs
from games.efgio import save_game
from games.tree import PLAYERS
from ._base import ResolverCommand


class Command(ResolverCommand):
    help = 'Generate a Battleship game, optionally write it as an efg file, and print its sizes.'

    def add_command_arguments(self, parser):
        self.add_game_arguments(parser, battleship_only=True)
        parser.add_argument('--rounds', type=int, help="Also decompose after T' rounds and print subgame sizes.")
        parser.add_argument('--output', help='Write the game in efg 2p-nochance v1 format.')

    def run(self, **options):
        setup = self.load_game(options)
        tree, index = setup.tree, setup.index
        self.stdout.write(f'{setup.label}: {tree.num_nodes} nodes, {len(tree.leaves)} leaves')
        for player in PLAYERS:
            self.stdout.write(f'  player {player}: {len(tree.infosets(player))} infosets, '
                              f'{index.size(player)} sequences')

        if options.get('rounds') is None:
            self.stdout.write(f'  relevant pairs: {len(relevant_pairs(tree, index))}')
        else:
            decomp = self.decompose(setup, options)
            sizes = decomp.class_sizes
            self.stdout.write(f'  relevant pairs: {len(decomp.pairs)}')
            self.stdout.write(f"  T'={options['rounds']}: J={decomp.count}, |S_0|={int(sizes[0])}")
            if decomp.count:
                self.stdout.write(f'  |Ξ_1|={len(decomp.restricted_pairs(1))} (|S_1|={int(sizes[1])})')

        if options.get('output'):
            save_game(tree, options['output'])
            self.stdout.write(self.style.SUCCESS(f"Wrote {options['output']}"))
