"""
CSV artefacts: correlation plans (``seq1,seq2,value``) and bounds ledgers.
"""

import csv
import logging
from pathlib import Path

import numpy as np

from efce_resolver.constants import PlanMessages
from efce_resolver.exceptions import GameFormatError
from .bounds import BoundsLedger
from .plans import CorrelationPlan
from .relevance import RelevantPairSet

logger = logging.getLogger(__name__)

PLAN_HEADER = ['seq1', 'seq2', 'value']
LEDGER_HEADER = ['player', 'subgame', 'infoset', 'kind', 'trigger', 'bound']


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def save_plan(plan: CorrelationPlan, path) -> Path:
    """Write one row per relevant pair with values in full repr precision."""
    path = _ensure_parent(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(PLAN_HEADER)
        for (first, second), value in zip(plan.pairs, plan.entries.tolist()):
            writer.writerow([first, second, repr(value)])
    logger.info("Saved plan with %d entries to %s", len(plan.entries), path)
    return path


def load_plan(pairs: RelevantPairSet, path) -> CorrelationPlan:
    """Read a plan CSV; pairs absent from the file are 0."""
    entries = np.zeros(len(pairs))
    with Path(path).open(newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != PLAN_HEADER:
            raise GameFormatError(PlanMessages.PLAN['CSV_HEADER'], 1)
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                first, second, value = int(row[0]), int(row[1]), float(row[2])
            except (IndexError, ValueError) as exc:
                raise GameFormatError(f"Malformed plan row {row!r}.", line_number) from exc
            entries[pairs.position(first, second)] = value
    return CorrelationPlan(pairs, entries)


def save_ledger(ledger: BoundsLedger, path) -> Path:
    path = _ensure_parent(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(LEDGER_HEADER)
        for player, subgame, target, kind, trigger, bound in ledger.rows():
            writer.writerow([player, subgame, target, kind, trigger, repr(float(bound))])
    logger.info("Saved ledger (%d entries) to %s", len(ledger), path)
    return path
