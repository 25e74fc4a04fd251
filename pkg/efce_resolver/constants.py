class ActionMessages:
    COMMON = {
        'INVALID': 'Invalid data provided!',
        'NOT_FOUND': 'Requested record does not exist.',
        'SERVER_ERROR': 'An unexpected error occurred while processing the request'
    }


class GameMessages:
    TREE = {
        'UNKNOWN_CHILD': "Node '{node}' references unknown child '{child}'.",
        'DUPLICATE_CHILD': "Node '{child}' has more than one parent.",
        'DUPLICATE_NODE': "Node '{node}' is declared twice.",
        'ORPHAN': "Node '{node}' is not reachable from the root.",
        'CYCLE': "Node '{node}' is reachable from itself.",
        'UNKNOWN_ROOT': "Root '{node}' is not a declared node.",
        'BAD_PLAYER': "Node '{node}' has player {player}; only players 1 and 2 are supported.",
        'ACTION_COUNT': "Node '{node}' declares {actions} actions but {children} children.",
        'INFOSET_ACTIONS': "Infoset {player}:{infoset} has inconsistent action labels at node '{node}'.",
        'NO_ACTIONS': "Decision node '{node}' has no actions.",
    }

    FORMAT = {
        'HEADER': "Expected header 'efg 2p-nochance v1'.",
        'UNKNOWN_RECORD': "Unknown record type '{record}'.",
        'MISSING_FIELD': "Missing field '{field}'.",
        'BAD_FIELD': "Malformed field '{field}'.",
        'CHANCE': "Chance nodes are not supported.",
        'PLAYER': "Player {player} is not supported; only players 1 and 2.",
        'INFOSET_OWNER': "Infoset owner {owner} does not match node player {player}.",
        'NO_ROOT': "Missing 'root' record.",
    }

    INPUT = {
        'PAYOFF_KEYS': "Signaling payoffs must cover exactly the 8 leaves; missing {missing}, extra {extra}.",
        'BATTLESHIP': "Invalid Battleship configuration: {reason}.",
        'NOT_NORMALIZED': "Distribution at infoset {infoset} of player {player} is not a probability vector.",
        'BEHAVIORAL_SIZE': "Distribution at infoset {infoset} of player {player} has {got} entries, expected {expected}.",
        'MATRIX_SHAPE': "Row and column payoff matrices must have the same non-empty shape.",
    }


class PlanMessages:
    PLAN = {
        'INDEX_MISMATCH': "Plan has {values} values but the pair index has {pairs} entries.",
        'UNKNOWN_KIND': "Unknown blueprint kind '{kind}'.",
        'JITTER_WEIGHT': "Jitter weight must lie in [0, 1], got {weight}.",
        'EXPLICIT_PLAN': "An explicit blueprint needs a correlation plan.",
        'MISSING_PAIR': "Pair ({first}, {second}) is not a relevant pair of this index.",
        'CSV_HEADER': "Plan file must start with the header 'seq1,seq2,value'.",
    }

    SUBGAME = {
        'NOT_CLOSED': "Subgame {subgame} is not closed under descendants at node '{node}'.",
        'STRADDLE': "Infoset {player}:{infoset} straddles the boundary of subgame {subgame}.",
        'OVERLAP': "Node '{node}' belongs to subgames {first} and {second}.",
        'SPANNING_PAIR': "Relevant pair ({first}, {second}) spans subgames {a} and {b}.",
        'ROUNDS': "Subgame depth must satisfy 1 <= rounds < {turns}, got {rounds}.",
        'UNKNOWN_SUBGAME': "Subgame {subgame} does not exist (J = {count}).",
        'BAD_LINE': "Malformed decomposition line {line}.",
    }

    DEVIATION = {
        'EMPTY_TRIGGER': "The empty sequence cannot be a trigger.",
        'SUBGAME_TRIGGER': "Trigger {trigger} of player {player} lies inside a subgame; it is handled by the in-subgame constraints.",
        'NO_ALTERNATIVE': "Trigger {trigger} of player {player} sits at a single-action infoset and admits no deviation.",
        'BAD_CONTINUATION': "Continuation must pick an alternative to the recommended action at infoset {infoset}.",
    }


class SolverMessages:
    LP = {
        'UNKNOWN_BACKEND': "Unknown LP backend '{backend}'.",
        'UNKNOWN_OBJECTIVE': "Unknown objective '{objective}'.",
        'UNKNOWN_VARIABLE': "Variable {name} is not registered.",
        'NON_FINITE': "Row '{row}' has a non-finite coefficient.",
        'NOT_OPTIMAL': "LP finished with status '{status}'.",
        'INFEASIBLE_REFINEMENT': "Refinement LP for subgame {subgame} is infeasible; the blueprint should always be feasible.",
        'LEDGER_MISMATCH': "Ledger was built for a different decomposition.",
        'EXPORT_PATH': "The export backend needs an output path.",
        'LP_PARSE': "Cannot parse LP text at line {line}: {reason}.",
        'SOLUTION_SIZE': "Solution file does not match the LP variables.",
    }

    CFR = {
        'NO_CRITICAL_PLAYER': "No critical player at pair ({first}, {second}).",
        'BACKFILL_PINNED': "Backfill would write pre-subgame pair ({first}, {second}) from subgame entries.",
        'CRITICAL_OUTSIDE': "Critical infoset {infoset} lies in a subgame while a connected opponent infoset {other} does not.",
        'LOSS_SIZE': "Loss vector has {got} entries, expected {expected}.",
        'EPSILON': "Epsilon must be positive, got {epsilon}.",
        'COVERAGE': "Scaled-extension program produced {produced} of {expected} entries.",
        'DUPLICATE': "Scaled-extension program produces pair ({first}, {second}) twice.",
        'UNPINNED': "Program has pre-subgame entries but no blueprint values.",
        'MIXED_EXPAND': "Expansion of pair ({first}, {second}) mixes pinned and free entries.",
        'UNPRODUCED_SOURCE': "Pair ({first}, {second}) is used before it is produced.",
    }

    RESOLVER = {
        'UNKNOWN_METHOD': "Unknown refinement method '{method}'.",
        'AUDIT_FAILED': "Audit failed: max exploitability {value:.3e} exceeds tolerance {tol:.1e}.",
        'SAFETY_FAILED': "Safety audit failed for {count} triggers (worst excess {excess:.3e}).",
    }
