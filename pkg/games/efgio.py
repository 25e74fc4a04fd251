"""
Reader and writer for the line-oriented ``efg 2p-nochance v1`` game format::

    efg 2p-nochance v1
    root <id>
    node <id> player=<1|2> infoset=<player>:<infoset> actions=<a1,a2,...> children=<id1,id2,...>
    leaf <id> u1=<float> u2=<float>

Blank lines and lines starting with ``#`` are ignored.
"""

import logging
from pathlib import Path
from typing import Dict, List

from efce_resolver.constants import GameMessages
from efce_resolver.exceptions import GameFormatError, GameStructureError
from .tree import GameTree, GameTreeBuilder, LEAF

logger = logging.getLogger(__name__)

HEADER = 'efg 2p-nochance v1'
CHANCE_RECORDS = {'chance'}


def _fields(tokens: List[str], required, line_number: int) -> Dict[str, str]:
    fields = {}
    for token in tokens:
        key, sep, value = token.partition('=')
        if not sep or not key:
            raise GameFormatError(GameMessages.FORMAT['BAD_FIELD'].format(field=token), line_number)
        fields[key] = value
    for name in required:
        if name not in fields:
            raise GameFormatError(GameMessages.FORMAT['MISSING_FIELD'].format(field=name), line_number)
    return fields


def _player(text: str, line_number: int) -> int:
    if text in ('c', 'chance', '0'):
        raise GameFormatError(GameMessages.FORMAT['CHANCE'], line_number)
    try:
        player = int(text)
    except ValueError:
        raise GameFormatError(GameMessages.FORMAT['BAD_FIELD'].format(field=f'player={text}'), line_number)
    if player not in (1, 2):
        raise GameFormatError(GameMessages.FORMAT['PLAYER'].format(player=player), line_number)
    return player


def parse_game(text: str) -> GameTree:
    lines = text.splitlines()
    builder = GameTreeBuilder()
    root = None
    header_seen = False

    for line_number, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if not header_seen:
            if line != HEADER:
                raise GameFormatError(GameMessages.FORMAT['HEADER'], line_number)
            header_seen = True
            continue

        record, *tokens = line.split()
        try:
            if record == 'root':
                if len(tokens) != 1:
                    raise GameFormatError(GameMessages.FORMAT['BAD_FIELD'].format(field='root'), line_number)
                root = tokens[0]
            elif record == 'leaf':
                label, *rest = tokens or ['']
                fields = _fields(rest, ('u1', 'u2'), line_number)
                try:
                    u1, u2 = float(fields['u1']), float(fields['u2'])
                except ValueError:
                    raise GameFormatError(GameMessages.FORMAT['BAD_FIELD'].format(field='u1/u2'), line_number)
                builder.add_leaf(label, u1, u2)
            elif record == 'node':
                label, *rest = tokens or ['']
                fields = _fields(rest, ('player', 'infoset', 'actions', 'children'), line_number)
                player = _player(fields['player'], line_number)
                owner, sep, infoset = fields['infoset'].partition(':')
                if not sep or not infoset:
                    raise GameFormatError(GameMessages.FORMAT['BAD_FIELD'].format(field='infoset'), line_number)
                if _player(owner, line_number) != player:
                    raise GameFormatError(
                        GameMessages.FORMAT['INFOSET_OWNER'].format(owner=owner, player=player), line_number)
                builder.add_decision(
                    label, player, infoset, fields['actions'].split(','), fields['children'].split(','))
            elif record in CHANCE_RECORDS:
                raise GameFormatError(GameMessages.FORMAT['CHANCE'], line_number)
            else:
                raise GameFormatError(GameMessages.FORMAT['UNKNOWN_RECORD'].format(record=record), line_number)
        except GameStructureError as exc:
            raise GameFormatError(str(exc), line_number) from exc

    if not header_seen:
        raise GameFormatError(GameMessages.FORMAT['HEADER'], 1)
    if root is None:
        raise GameFormatError(GameMessages.FORMAT['NO_ROOT'])
    return builder.build(root)


def _number(value: float) -> str:
    return repr(float(value))


def dump_game(tree: GameTree) -> str:
    out = [HEADER, f'root {tree.labels[tree.root]}']
    for v, label in enumerate(tree.labels):
        player = int(tree.players[v])
        if player == LEAF:
            out.append(f'leaf {label} u1={_number(tree.payoffs[v, 0])} u2={_number(tree.payoffs[v, 1])}')
            continue
        infoset = tree.infoset_at(v)
        children = ','.join(tree.labels[c] for c in tree.children[v])
        out.append(
            f'node {label} player={player} infoset={player}:{infoset.label} '
            f'actions={",".join(infoset.actions)} children={children}')
    return '\n'.join(out) + '\n'


def load_game(path) -> GameTree:
    tree = parse_game(Path(path).read_text(encoding='utf-8'))
    logger.info("Loaded %r from %s", tree, path)
    return tree


def save_game(tree: GameTree, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_game(tree), encoding='utf-8')
    logger.info("Saved %r to %s", tree, path)
