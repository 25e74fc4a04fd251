"""
Linear programs: a small model layer and three backends.

``highs``      scipy's HiGHS through ``linprog`` on sparse matrices (default).
``reference``  dense two-phase revised simplex, Dantzig pricing with a Bland
               fallback after a run of degenerate pivots.
``export``     writes LP text (``Maximize / Subject To / Bounds / End``) and,
               when a solution file is given, loads and audits it.

Every program maximizes its objective.
"""

import hashlib
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog

from efce_resolver.constants import SolverMessages
from efce_resolver.exceptions import GameFormatError, InputError

logger = logging.getLogger(__name__)

LE, EQ, GE = '<=', '=', '>='
SENSES = (LE, EQ, GE)
OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
ITERATION_LIMIT = 'iteration_limit'
EXPORTED = 'exported'
BACKENDS = ('highs', 'reference', 'export')

FEASIBILITY_TOL = 1e-8
OPTIMALITY_TOL = 1e-9
DEGENERATE_RUN = 50


class LinearProgram:
    """Named variables with bounds, sparse rows with a relation, and a linear objective."""

    def __init__(self, name: str = 'lp'):
        self.name = name
        self.names: List[str] = []
        self.lower: List[float] = []
        self.upper: List[float] = []
        self._by_name: Dict[str, int] = {}
        self.row_names: List[str] = []
        self.senses: List[str] = []
        self.rhs: List[float] = []
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._vals: List[np.ndarray] = []
        self.objective: Dict[int, float] = {}

    @property
    def num_variables(self) -> int:
        return len(self.names)

    @property
    def num_rows(self) -> int:
        return len(self.senses)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = math.inf) -> int:
        if name in self._by_name:
            raise InputError(f"Variable {name} is registered twice.")
        self._by_name[name] = len(self.names)
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.names) - 1

    def add_variables(self, names: Sequence[str], lower=0.0, upper=math.inf) -> np.ndarray:
        lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), (len(names),))
        upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), (len(names),))
        return np.asarray([self.add_variable(n, lo, hi) for n, lo, hi in zip(names, lower, upper)],
                          dtype=np.int64)

    def variable(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise InputError(SolverMessages.LP['UNKNOWN_VARIABLE'].format(name=name)) from None

    def set_bounds(self, column: int, lower: float, upper: float) -> None:
        self.lower[column] = float(lower)
        self.upper[column] = float(upper)

    def add_row(self, cols, vals, sense: str, rhs: float, name: Optional[str] = None) -> int:
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        row_name = name or f'c{self.num_rows}'
        if sense not in SENSES:
            raise InputError(f"Unknown relation '{sense}'.")
        if cols.shape != vals.shape:
            raise InputError(f"Row '{row_name}' has {len(cols)} columns and {len(vals)} coefficients.")
        if not np.all(np.isfinite(vals)) or not math.isfinite(rhs):
            raise InputError(SolverMessages.LP['NON_FINITE'].format(row=row_name))
        if len(cols) and (cols.min() < 0 or cols.max() >= self.num_variables):
            raise InputError(SolverMessages.LP['UNKNOWN_VARIABLE'].format(name=int(cols.max())))
        row = self.num_rows
        self._rows.append(np.full(len(cols), row, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(vals)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(row_name)
        return row

    def add_matrix(self, matrix: sp.spmatrix, columns: np.ndarray, sense: str, rhs, prefix: str = 'r') -> None:
        """Append every row of ``matrix`` whose columns map onto ``columns``."""
        matrix = sp.csr_matrix(matrix)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=np.float64), (matrix.shape[0],))
        for r in range(matrix.shape[0]):
            start, stop = matrix.indptr[r], matrix.indptr[r + 1]
            self.add_row(columns[matrix.indices[start:stop]], matrix.data[start:stop], sense, float(rhs[r]),
                         name=f'{prefix}{r}')

    def add_objective(self, cols, vals) -> None:
        for c, v in zip(np.asarray(cols, dtype=np.int64).tolist(), np.asarray(vals, dtype=np.float64).tolist()):
            self.objective[c] = self.objective.get(c, 0.0) + v

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.num_variables)
        for col, val in self.objective.items():
            c[col] = val
        return c

    def matrix(self) -> sp.csr_matrix:
        if not self._rows:
            return sp.csr_matrix((0, self.num_variables))
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        out = sp.csr_matrix((vals, (rows, cols)), shape=(self.num_rows, self.num_variables))
        out.sum_duplicates()
        return out

    def residual(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at ``x``."""
        x = np.asarray(x, dtype=np.float64)
        worst = 0.0
        if self.num_rows:
            ax = self.matrix() @ x
            rhs = np.asarray(self.rhs)
            senses = np.asarray(self.senses)
            gap = np.where(senses == LE, ax - rhs, np.where(senses == GE, rhs - ax, np.abs(ax - rhs)))
            worst = max(worst, float(np.max(gap)))
        lower, upper = np.asarray(self.lower), np.asarray(self.upper)
        with np.errstate(invalid='ignore'):
            worst = max(worst, float(np.max(np.where(np.isfinite(lower), lower - x, -np.inf), initial=0.0)))
            worst = max(worst, float(np.max(np.where(np.isfinite(upper), x - upper, -np.inf), initial=0.0)))
        return max(worst, 0.0)

    def matrix_hash(self) -> str:
        """Digest of the program keyed by names, independent of variable order."""
        digest = hashlib.sha256()
        coo = self.matrix().tocoo()
        entries = sorted((self.row_names[r], self.names[c], repr(float(v)))
                         for r, c, v in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()) if v != 0.0)
        for entry in entries:
            digest.update('|'.join(entry).encode('utf-8'))
        for name, sense, rhs in sorted(zip(self.row_names, self.senses, self.rhs)):
            digest.update(f'{name}{sense}{rhs!r}'.encode('utf-8'))
        for name, lower, upper in sorted(zip(self.names, self.lower, self.upper)):
            digest.update(f'{name}[{lower!r},{upper!r}]'.encode('utf-8'))
        for name, val in sorted((self.names[c], v) for c, v in self.objective.items() if v != 0.0):
            digest.update(f'obj{name}{val!r}'.encode('utf-8'))
        return digest.hexdigest()

    def __repr__(self):
        return f"LinearProgram({self.name!r}, {self.num_variables} vars, {self.num_rows} rows)"


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray]
    objective: float = math.nan
    residual: float = math.nan
    backend: str = 'highs'
    iterations: int = 0
    message: str = ''
    path: Optional[Path] = None
    extra: Dict[str, float] = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# HiGHS
# ---------------------------------------------------------------------------

_HIGHS_STATUS = {0: OPTIMAL, 1: ITERATION_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def _solve_highs(lp: LinearProgram, max_iterations: int) -> LpSolution:
    matrix = lp.matrix()
    senses = np.asarray(lp.senses)
    rhs = np.asarray(lp.rhs)
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    a_ub = sp.vstack([matrix[le], -matrix[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([rhs[le], -rhs[ge]]) if a_ub is not None else None
    a_eq = matrix[eq] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = [(lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None)
              for lo, hi in zip(lp.lower, lp.upper)]
    result = linprog(-lp.objective_vector(), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds,
                     method='highs', options={'maxiter': max_iterations})
    status = _HIGHS_STATUS.get(result.status, f'error-{result.status}')
    x = np.asarray(result.x, dtype=np.float64) if result.x is not None else None
    return LpSolution(
        status=status, x=x,
        objective=-float(result.fun) if result.fun is not None else math.nan,
        residual=lp.residual(x) if x is not None else math.nan,
        backend='highs', iterations=int(getattr(result, 'nit', 0) or 0), message=str(result.message),
    )


# ---------------------------------------------------------------------------
# Reference revised simplex
# ---------------------------------------------------------------------------

class RevisedSimplex:
    """Solves ``min c·x s.t. A x = b, x >= 0`` with ``b >= 0`` in two phases."""

    def __init__(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, max_iterations: int = 50000,
                 tol: float = FEASIBILITY_TOL):
        self.a = np.asarray(a, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64)
        self.max_iterations = max_iterations
        self.tol = tol
        self.iterations = 0

    def _run(self, a, cost, basis, allowed) -> str:
        degenerate = 0
        while True:
            if self.iterations >= self.max_iterations:
                return ITERATION_LIMIT
            factor = scipy.linalg.lu_factor(a[:, basis])
            x_b = scipy.linalg.lu_solve(factor, self.b_work)
            y = scipy.linalg.lu_solve(factor, cost[basis], trans=1)
            reduced = cost - a.T @ y
            reduced[basis] = 0.0
            candidates = np.flatnonzero(allowed & (reduced < -OPTIMALITY_TOL))
            if len(candidates) == 0:
                self._x_b = x_b
                return OPTIMAL
            bland = degenerate >= DEGENERATE_RUN
            entering = int(candidates[0]) if bland else int(candidates[np.argmin(reduced[candidates])])
            direction = scipy.linalg.lu_solve(factor, a[:, entering])
            positive = np.flatnonzero(direction > self.tol)
            if len(positive) == 0:
                return UNBOUNDED
            ratios = x_b[positive] / direction[positive]
            theta = ratios.min()
            ties = positive[ratios <= theta + self.tol]
            leaving = int(ties[np.argmin(np.asarray(basis)[ties])])
            degenerate = degenerate + 1 if theta <= self.tol else 0
            basis[leaving] = entering
            self.iterations += 1

    def solve(self) -> Tuple[str, Optional[np.ndarray]]:
        a, b = self.a, self.b
        m, n = a.shape
        self.b_work = b
        if m == 0:
            if np.any(self.c < -OPTIMALITY_TOL):
                return UNBOUNDED, None
            return OPTIMAL, np.zeros(n)

        # phase one over [A | I]
        phase_one = np.hstack([a, np.eye(m)])
        cost = np.concatenate([np.zeros(n), np.ones(m)])
        basis = list(range(n, n + m))
        allowed = np.ones(n + m, dtype=bool)
        status = self._run(phase_one, cost, basis, allowed)
        if status != OPTIMAL:
            return status, None
        if float(np.dot(cost[basis], self._x_b)) > self.tol * max(1.0, float(np.abs(b).max())):
            return INFEASIBLE, None

        # drive artificial columns out of the basis; rows that keep one are redundant
        keep_rows = np.ones(m, dtype=bool)
        for r in range(m):
            if basis[r] < n:
                continue
            factor = scipy.linalg.lu_factor(phase_one[:, basis])
            row = scipy.linalg.lu_solve(factor, np.eye(m)[r], trans=1) @ a
            options = [j for j in np.flatnonzero(np.abs(row) > self.tol).tolist() if j not in basis]
            if options:
                basis[r] = options[0]
            else:
                keep_rows[r] = False

        a2 = a[keep_rows]
        self.b_work = b[keep_rows]
        basis2 = [j for j, keep in zip(basis, keep_rows) if keep]
        allowed = np.ones(n, dtype=bool)
        status = self._run(a2, self.c, basis2, allowed)
        if status != OPTIMAL:
            return status, None
        x = np.zeros(n)
        x[basis2] = self._x_b
        return OPTIMAL, np.maximum(x, 0.0)


def _standard_form(lp: LinearProgram):
    """Map the program onto ``A z = b, z >= 0, b >= 0`` and return the recovery map."""
    matrix = lp.matrix().toarray()
    lower, upper = np.asarray(lp.lower), np.asarray(lp.upper)
    n = lp.num_variables
    offset = np.where(np.isfinite(lower), lower, 0.0)
    blocks = []

    shift_lower = np.isfinite(lower)
    free_upper = ~shift_lower & np.isfinite(upper)
    # x = lower + z, x = upper - z, or x = z+ - z-
    for j in range(n):
        if shift_lower[j]:
            blocks.append((j, 1.0))
        elif free_upper[j]:
            offset[j] = upper[j]
            blocks.append((j, -1.0))
        else:
            blocks.append((j, 1.0))
            blocks.append((j, -1.0))
    recover = np.zeros((n, len(blocks)))
    for k, (j, sign) in enumerate(blocks):
        recover[j, k] = sign
    a = matrix @ recover
    b = np.asarray(lp.rhs) - matrix @ offset
    senses = list(lp.senses)

    # finite upper bounds of shifted variables become rows
    extra_rows, extra_rhs = [], []
    for k, (j, sign) in enumerate(blocks):
        if shift_lower[j] and np.isfinite(upper[j]):
            row = np.zeros(len(blocks))
            row[k] = 1.0
            extra_rows.append(row)
            extra_rhs.append(upper[j] - lower[j])
    if extra_rows:
        a = np.vstack([a, np.asarray(extra_rows)])
        b = np.concatenate([b, extra_rhs])
        senses += [LE] * len(extra_rows)

    slack = [i for i, s in enumerate(senses) if s != EQ]
    slack_block = np.zeros((a.shape[0], len(slack)))
    for k, i in enumerate(slack):
        slack_block[i, k] = 1.0 if senses[i] == LE else -1.0
    a = np.hstack([a, slack_block])
    flip = b < 0
    a[flip] *= -1.0
    b = np.abs(b)
    c = np.concatenate([-(lp.objective_vector() @ recover), np.zeros(len(slack))])
    return a, b, c, recover, offset


def _solve_reference(lp: LinearProgram, max_iterations: int) -> LpSolution:
    a, b, c, recover, offset = _standard_form(lp)
    simplex = RevisedSimplex(a, b, c, max_iterations=max_iterations)
    status, z = simplex.solve()
    if z is None:
        return LpSolution(status=status, x=None, backend='reference', iterations=simplex.iterations)
    x = offset + recover @ z[:recover.shape[1]]
    return LpSolution(
        status=status, x=x, objective=float(lp.objective_vector() @ x), residual=lp.residual(x),
        backend='reference', iterations=simplex.iterations,
    )


# ---------------------------------------------------------------------------
# LP text export
# ---------------------------------------------------------------------------

_NAME = re.compile(r'^[A-Za-z_][A-Za-z0-9_.\[\]]*$')


def _terms(pairs: Iterable[Tuple[str, float]]) -> str:
    out = []
    for name, value in pairs:
        sign = '-' if value < 0 else '+'
        out.append(f'{sign} {abs(value)!r} {name}')
    return ' '.join(out) if out else '0'


def _bound_text(value: float) -> str:
    if value == math.inf:
        return '+inf'
    if value == -math.inf:
        return '-inf'
    return repr(value)


def write_lp_text(lp: LinearProgram) -> str:
    for name in lp.names:
        if not _NAME.match(name):
            raise InputError(f"Variable name '{name}' cannot be written as LP text.")
    lines = [f'\\ {lp.name}', 'Maximize']
    objective = sorted(((lp.names[c], v) for c, v in lp.objective.items() if v != 0.0),
                       key=lambda t: lp.variable(t[0]))
    lines.append(f' obj: {_terms(objective)}')
    lines.append('Subject To')
    matrix = lp.matrix()
    for r in range(lp.num_rows):
        start, stop = matrix.indptr[r], matrix.indptr[r + 1]
        terms = [(lp.names[c], v) for c, v in zip(matrix.indices[start:stop], matrix.data[start:stop])]
        lines.append(f' {lp.row_names[r]}: {_terms(terms)} {lp.senses[r]} {lp.rhs[r]!r}')
    lines.append('Bounds')
    for name, lower, upper in zip(lp.names, lp.lower, lp.upper):
        if lower == -math.inf and upper == math.inf:
            lines.append(f' {name} free')
        elif lower == upper:
            lines.append(f' {name} = {lower!r}')
        elif upper == math.inf:
            lines.append(f' {name} >= {_bound_text(lower)}')
        else:
            lines.append(f' {_bound_text(lower)} <= {name} <= {_bound_text(upper)}')
    lines.append('End')
    return '\n'.join(lines) + '\n'


def _parse_terms(tokens: List[str], line_number: int) -> List[Tuple[str, float]]:
    out = []
    sign, coef = 1.0, None
    for token in tokens:
        if token in ('+', '-'):
            sign = -1.0 if token == '-' else 1.0
            continue
        try:
            coef = float(token)
            continue
        except ValueError:
            pass
        if not _NAME.match(token):
            raise GameFormatError(SolverMessages.LP['LP_PARSE'].format(line=line_number, reason=f'bad token {token!r}'),
                                  line_number)
        out.append((token, sign * (1.0 if coef is None else coef)))
        sign, coef = 1.0, None
    return out


def _parse_bound(value: str) -> float:
    lowered = value.lower()
    if lowered in ('+inf', 'inf', '+infinity', 'infinity'):
        return math.inf
    if lowered in ('-inf', '-infinity'):
        return -math.inf
    return float(value)


def read_lp_text(text: str) -> LinearProgram:
    """Parse LP text written by :func:`write_lp_text` (maximization, one row per line)."""
    name = 'lp'
    section = None
    objective: List[Tuple[str, float]] = []
    rows: List[Tuple[str, List[Tuple[str, float]], str, float]] = []
    bounds: Dict[str, Tuple[float, float]] = {}
    order: List[str] = []

    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith('\\'):
            name = line[1:].strip() or name
            continue
        keyword = line.lower()
        if keyword in ('maximize', 'subject to', 'bounds', 'end'):
            section = keyword
            continue
        if section == 'maximize':
            _, _, body = line.partition(':')
            tokens = body.split()
            objective = [] if tokens == ['0'] else _parse_terms(tokens, line_number)
        elif section == 'subject to':
            row_name, sep, body = line.partition(':')
            tokens = body.split()
            if not sep or len(tokens) < 2 or tokens[-2] not in SENSES:
                raise GameFormatError(SolverMessages.LP['LP_PARSE'].format(line=line_number, reason='malformed row'),
                                      line_number)
            terms = [] if tokens[:-2] == ['0'] else _parse_terms(tokens[:-2], line_number)
            rows.append((row_name.strip(), terms, tokens[-2], float(tokens[-1])))
        elif section == 'bounds':
            tokens = line.split()
            try:
                if len(tokens) == 2 and tokens[1].lower() == 'free':
                    var, lo, hi = tokens[0], -math.inf, math.inf
                elif len(tokens) == 3 and tokens[1] == '=':
                    var, lo = tokens[0], float(tokens[2])
                    hi = lo
                elif len(tokens) == 3 and tokens[1] == '>=':
                    var, lo, hi = tokens[0], _parse_bound(tokens[2]), math.inf
                elif len(tokens) == 3 and tokens[1] == '<=':
                    var, lo, hi = tokens[0], 0.0, _parse_bound(tokens[2])
                elif len(tokens) == 5 and tokens[1] == '<=' and tokens[3] == '<=':
                    var, lo, hi = tokens[2], _parse_bound(tokens[0]), _parse_bound(tokens[4])
                else:
                    raise ValueError(line)
            except ValueError as exc:
                raise GameFormatError(SolverMessages.LP['LP_PARSE'].format(line=line_number, reason='malformed bound'),
                                      line_number) from exc
            bounds[var] = (lo, hi)
            order.append(var)
        elif section == 'end':
            break
        else:
            raise GameFormatError(SolverMessages.LP['LP_PARSE'].format(line=line_number, reason='text outside a section'),
                                  line_number)

    lp = LinearProgram(name)
    for var in order:
        lp.add_variable(var, *bounds[var])
    for var, _ in objective + [t for row in rows for t in row[1]]:
        if var not in lp._by_name:
            lp.add_variable(var)
    lp.add_objective([lp.variable(v) for v, _ in objective], [c for _, c in objective])
    for row_name, terms, sense, rhs in rows:
        lp.add_row([lp.variable(v) for v, _ in terms], [c for _, c in terms], sense, rhs, name=row_name)
    return lp


def read_solution(lp: LinearProgram, path) -> np.ndarray:
    """Read ``name value`` lines; unnamed variables default to 0."""
    x = np.zeros(lp.num_variables)
    for line_number, raw in enumerate(Path(path).read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GameFormatError(SolverMessages.LP['LP_PARSE'].format(line=line_number, reason='expected name value'),
                                  line_number)
        if parts[0] not in lp._by_name:
            raise InputError(SolverMessages.LP['SOLUTION_SIZE'])
        x[lp.variable(parts[0])] = float(parts[1])
    return x


def write_solution(lp: LinearProgram, x: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(''.join(f'{n} {float(v)!r}\n' for n, v in zip(lp.names, x)), encoding='utf-8')
    return path


def _solve_export(lp: LinearProgram, path, solution, tol: float) -> LpSolution:
    if path is None:
        raise InputError(SolverMessages.LP['EXPORT_PATH'])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(write_lp_text(lp), encoding='utf-8')
    logger.info("Exported %r to %s", lp, path)
    if solution is None:
        return LpSolution(status=EXPORTED, x=None, backend='export', path=path)
    x = read_solution(lp, solution)
    residual = lp.residual(x)
    status = OPTIMAL if residual <= tol else INFEASIBLE
    return LpSolution(status=status, x=x, objective=float(lp.objective_vector() @ x), residual=residual,
                      backend='export', path=path)


def solve_lp(lp: LinearProgram, backend: str = 'highs', max_iterations: int = 50000, path=None,
             solution=None, tol: float = 1e-7) -> LpSolution:
    if backend == 'highs':
        result = _solve_highs(lp, max_iterations)
    elif backend == 'reference':
        result = _solve_reference(lp, max_iterations)
    elif backend == 'export':
        result = _solve_export(lp, path, solution, tol)
    else:
        raise InputError(SolverMessages.LP['UNKNOWN_BACKEND'].format(backend=backend))
    logger.debug("Solved %r with %s: %s (objective %.6g, residual %.2e)",
                 lp, backend, result.status, result.objective, result.residual)
    return result
