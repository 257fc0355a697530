"""Semidefinite programs in standard primal form, and a dense interior-point solver.

    minimize    sum_b <C_b, X_b> + c_w . w
    subject to  sum_b <A_kb, X_b> + a_k . w = b_k      k = 1..m
                X_b positive semidefinite, w free

An entry ``(b, i, j, v)`` with i <= j stands for v at both (i, j) and (j, i) of
block b, as in the SDPA format.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
MAX_ITERATIONS = 100
DIVERGENCE = 1e8
STEP_FRACTION = 0.95
NEAR_OPTIMAL = 1e3
SCHUR_CHUNK = 1024
RANK_TOL = 1e-10

STATUSES = ("optimal", "near_optimal", "infeasible", "unbounded", "stalled")


@dataclass(frozen=True)
class Functional:
    blocks: tuple[tuple[int, int, int, float], ...] = ()
    free: tuple[tuple[int, float], ...] = ()


@dataclass(frozen=True)
class ConicProblem:
    block_dims: tuple[int, ...]
    n_free: int
    objective: Functional
    equalities: tuple[Functional, ...]
    rhs: tuple[float, ...]
    names: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.equalities)

    def check(self):
        if len(self.rhs) != len(self.equalities):
            raise ValueError(
                f"{len(self.equalities)} equalities but {len(self.rhs)} right-hand sides"
            )
        for b, n in enumerate(self.block_dims):
            if n <= 0:
                raise ValueError(f"block {b} has dimension {n}")
        functionals = [("objective", self.objective)] + [
            (f"equality {k}", f) for k, f in enumerate(self.equalities)
        ]
        for label, f in functionals:
            for b, i, j, value in f.blocks:
                if not 0 <= b < len(self.block_dims):
                    raise ValueError(f"{label}: block {b} does not exist")
                if not 0 <= i <= j < self.block_dims[b]:
                    raise ValueError(
                        f"{label}: entry ({i}, {j}) not in the upper triangle of block {b}"
                    )
                if not math.isfinite(value):
                    raise ValueError(f"{label}: non-finite coefficient")
            for k, value in f.free:
                if not 0 <= k < self.n_free:
                    raise ValueError(f"{label}: free scalar {k} does not exist")
                if not math.isfinite(value):
                    raise ValueError(f"{label}: non-finite coefficient")
        if not all(math.isfinite(v) for v in self.rhs):
            raise ValueError("non-finite right-hand side")


@dataclass
class ConicSolution:
    blocks: list
    free: np.ndarray
    dual: np.ndarray
    slacks: list
    objective: float
    dual_objective: float
    status: str
    residuals: dict
    iterations: int

    @property
    def solved(self):
        return self.status in ("optimal", "near_optimal")


class _Data:
    def __init__(self, problem):
        self.m = problem.m
        self.dims = problem.block_dims
        self.n_free = problem.n_free
        self.upper = [np.triu_indices(n) for n in self.dims]
        self.diagonal = [rows == cols for rows, cols in self.upper]
        self.weights = [np.where(diag, 1.0, 2.0) for diag in self.diagonal]
        positions = []
        for n, (rows, cols) in zip(self.dims, self.upper):
            position = np.zeros((n, n), dtype=np.int64)
            position[rows, cols] = np.arange(len(rows))
            positions.append(position)
        entries = [([], [], []) for _ in self.dims]
        free_entries = ([], [], [])
        for k, functional in enumerate(problem.equalities):
            for b, i, j, value in functional.blocks:
                entries[b][0].append(positions[b][i, j])
                entries[b][1].append(k)
                entries[b][2].append(value)
            for column, value in functional.free:
                free_entries[0].append(k)
                free_entries[1].append(column)
                free_entries[2].append(value)
        self.phi = []
        self.active = []
        for b, (rows, cols, values) in enumerate(entries):
            size = len(self.upper[b][0])
            phi = scipy.sparse.csc_matrix(
                (values, (rows, cols)), shape=(size, self.m)
            )
            active = np.unique(np.asarray(cols, dtype=np.int64))
            self.active.append(active)
            self.phi.append(phi[:, active].tocsr())
        self.c_blocks = [np.zeros(len(rows)) for rows, _ in self.upper]
        self.c_free = np.zeros(self.n_free)
        for b, i, j, value in problem.objective.blocks:
            self.c_blocks[b][positions[b][i, j]] += value
        for column, value in problem.objective.free:
            self.c_free[column] += value
        self.a_free = scipy.sparse.csr_matrix(
            (free_entries[2], (free_entries[0], free_entries[1])),
            shape=(self.m, self.n_free),
        ).toarray()
        self.b = np.asarray(problem.rhs, dtype=float)
        self.c_full = [self.smat(b, c) for b, c in enumerate(self.c_blocks)]
        self.kept = self._independent_free_columns()

    def _independent_free_columns(self):
        if not self.n_free:
            return np.zeros(0, dtype=np.int64)
        _, r, pivots = scipy.linalg.qr(self.a_free, mode="economic", pivoting=True)
        diagonal = np.abs(np.diag(r))
        if not len(diagonal) or diagonal[0] == 0.0:
            return np.zeros(0, dtype=np.int64)
        rank = int(np.sum(diagonal > RANK_TOL * diagonal[0]))
        kept = np.sort(pivots[:rank])
        dropped = np.setdiff1d(np.arange(self.n_free), kept)
        if len(dropped):
            basis = self.a_free[:, kept]
            combination, *_ = np.linalg.lstsq(basis, self.a_free[:, dropped], rcond=None)
            mismatch = np.abs(self.c_free[kept] @ combination - self.c_free[dropped])
            if np.any(mismatch > 1e-8 * (1 + np.abs(self.c_free).max())):
                logger.warning("dependent free columns with inconsistent costs")
            logger.debug("dropped %d dependent free columns", len(dropped))
        return kept

    def smat(self, b, vector):
        n = self.dims[b]
        rows, cols = self.upper[b]
        matrix = np.zeros((n, n))
        matrix[rows, cols] = vector
        matrix[cols, rows] = vector
        return matrix

    def op(self, blocks):
        result = np.zeros(self.m)
        for b, matrix in enumerate(blocks):
            rows, cols = self.upper[b]
            local = self.phi[b].T @ (matrix[rows, cols] * self.weights[b])
            result[self.active[b]] += local
        return result

    def adjoint(self, lam):
        return [
            self.smat(b, self.phi[b] @ lam[self.active[b]]) for b in range(len(self.dims))
        ]

    def schur(self, scalings):
        matrix = np.zeros((self.m, self.m))
        for b, w in enumerate(scalings):
            rows, cols = self.upper[b]
            half = np.where(self.diagonal[b], 0.5, 1.0)
            phi = self.phi[b]
            phi_t = phi.T.tocsr()
            block = np.zeros((len(self.active[b]), len(self.active[b])))
            for lo in range(0, len(rows), SCHUR_CHUNK):
                hi = min(lo + SCHUR_CHUNK, len(rows))
                i, j = rows[lo:hi], cols[lo:hi]
                kernel = w[np.ix_(i, rows)] * w[np.ix_(j, cols)] + w[np.ix_(i, cols)] * w[
                    np.ix_(j, rows)
                ]
                kernel *= 2.0 * half[lo:hi, None] * half[None, :]
                right = np.asarray(phi_t @ kernel.T)
                block += np.asarray(phi[lo:hi].T @ right.T)
            active = self.active[b]
            matrix[np.ix_(active, active)] += block
        return matrix


def _inner(a, b):
    return float(np.sum(a * b))


def _max_step(x, dx):
    try:
        lower = np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return 0.0
    inverse = scipy.linalg.solve_triangular(lower, np.eye(len(x)), lower=True)
    smallest = np.linalg.eigvalsh(inverse @ dx @ inverse.T).min()
    return math.inf if smallest >= 0 else -1.0 / smallest


def _nt_scaling(x, s):
    lower_x = np.linalg.cholesky(x)
    lower_s = np.linalg.cholesky(s)
    _, singular, vt = np.linalg.svd(lower_s.T @ lower_x)
    g = lower_x @ vt.T / np.sqrt(singular)
    return g @ g.T


class _Kkt:
    def __init__(self, data, schur):
        self.data = data
        scale = max(1.0, float(np.abs(np.diag(schur)).max(initial=0.0)))
        for shift in (0.0, 1e-14, 1e-12, 1e-10):
            try:
                self.factor = scipy.linalg.cho_factor(
                    schur + shift * scale * np.eye(len(schur))
                )
                break
            except np.linalg.LinAlgError:
                continue
        else:
            raise np.linalg.LinAlgError("Schur complement not positive definite")
        self.a = data.a_free[:, data.kept]
        if self.a.shape[1]:
            self.y = scipy.linalg.cho_solve(self.factor, self.a)
            reduced = self.a.T @ self.y
            self.reduced = scipy.linalg.cho_factor(reduced)

    def solve(self, h, r_free):
        dw = np.zeros(self.data.n_free)
        if self.a.shape[1]:
            rhs = self.a.T @ scipy.linalg.cho_solve(self.factor, h) - r_free[self.data.kept]
            dw[self.data.kept] = scipy.linalg.cho_solve(self.reduced, rhs)
            h = h - self.a @ dw[self.data.kept]
        return scipy.linalg.cho_solve(self.factor, h), dw


def _initial_point(data):
    x, s = [], []
    column_norms = []
    for b, n in enumerate(data.dims):
        norms = np.sqrt(np.asarray(data.phi[b].multiply(data.phi[b]).T @ data.weights[b]))
        column_norms.append(norms)
        rhs = np.abs(data.b[data.active[b]])
        zeta = max(10.0, math.sqrt(n), n * float(np.max((1 + rhs) / (1 + norms), initial=0)))
        eta = max(
            10.0,
            math.sqrt(n),
            float(np.linalg.norm(data.c_full[b])),
            float(norms.max(initial=0.0)),
        )
        x.append(zeta * np.eye(n))
        s.append(eta * np.eye(n))
    return x, s


def solve(problem, tol=DEFAULT_TOL, max_iterations=MAX_ITERATIONS):
    """Infeasible-start primal-dual path following with Nesterov-Todd scaling."""
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    problem.check()
    data = _Data(problem)
    x, s = _initial_point(data)
    w = np.zeros(data.n_free)
    lam = np.zeros(data.m)
    total_dim = max(1, sum(data.dims))
    norm_b = float(np.linalg.norm(data.b))
    norm_c = math.sqrt(
        sum(_inner(c, c) for c in data.c_full) + float(data.c_free @ data.c_free)
    )
    best = None
    status = "stalled"
    iteration = 0
    for iteration in range(max_iterations + 1):
        r_p = data.b - data.op(x) - data.a_free @ w
        adjoint = data.adjoint(lam)
        r_d = [c - sb - ab for c, sb, ab in zip(data.c_full, s, adjoint)]
        r_f = data.c_free - data.a_free.T @ lam
        primal = sum(_inner(c, xb) for c, xb in zip(data.c_full, x)) + float(
            data.c_free @ w
        )
        dual = float(data.b @ lam)
        residuals = {
            "primal": float(np.linalg.norm(r_p)) / (1 + norm_b),
            "dual": math.sqrt(
                sum(_inner(r, r) for r in r_d) + float(r_f[data.kept] @ r_f[data.kept])
            )
            / (1 + norm_c),
            "gap": abs(primal - dual) / (1 + abs(primal) + abs(dual)),
        }
        worst = max(residuals.values())
        logger.debug(
            "iter %2d  pobj %+.8e  dobj %+.8e  pres %.1e  dres %.1e  gap %.1e",
            iteration,
            primal,
            dual,
            residuals["primal"],
            residuals["dual"],
            residuals["gap"],
        )
        if best is None or worst <= best[0]:
            best = (
                worst,
                [xb.copy() for xb in x],
                w.copy(),
                lam.copy(),
                [sb.copy() for sb in s],
                primal,
                dual,
                residuals,
                iteration,
            )
        if worst <= tol:
            status = "optimal"
            break
        certificate = _certificate(data, x, w, lam, primal, dual)
        if certificate:
            status = certificate
            best = (worst, x, w, lam, s, primal, dual, residuals, iteration)
            break
        if iteration == max_iterations:
            break
        try:
            scalings = [_nt_scaling(xb, sb) for xb, sb in zip(x, s)]
            kkt = _Kkt(data, data.schur(scalings))
            inverses = [
                scipy.linalg.cho_solve(scipy.linalg.cho_factor(sb), np.eye(len(sb)))
                for sb in s
            ]
        except np.linalg.LinAlgError as error:
            logger.info("numerical breakdown at iteration %d: %s", iteration, error)
            break
        mu = sum(_inner(xb, sb) for xb, sb in zip(x, s)) / total_dim

        def direction(r_c, scalings=scalings, r_d=r_d, r_p=r_p, r_f=r_f, kkt=kkt):
            h = r_p - data.op(
                [rc - wb @ rd @ wb for rc, wb, rd in zip(r_c, scalings, r_d)]
            )
            dlam, dw = kkt.solve(h, r_f)
            ds = [rd - ad for rd, ad in zip(r_d, data.adjoint(dlam))]
            dx = [rc - wb @ dsb @ wb for rc, wb, dsb in zip(r_c, scalings, ds)]
            return [(d + d.T) / 2 for d in dx], dw, dlam, [(d + d.T) / 2 for d in ds]

        def steps(dx, ds):
            alpha = min([1.0, *(STEP_FRACTION * _max_step(xb, d) for xb, d in zip(x, dx))])
            beta = min([1.0, *(STEP_FRACTION * _max_step(sb, d) for sb, d in zip(s, ds))])
            return alpha, beta

        dx, dw, dlam, ds = direction([-xb for xb in x])
        alpha, beta = steps(dx, ds)
        mu_affine = (
            sum(
                _inner(xb + alpha * a, sb + beta * b)
                for xb, a, sb, b in zip(x, dx, s, ds)
            )
            / total_dim
        )
        sigma = min(1.0, max(0.0, (mu_affine / mu) ** 3)) if mu > 0 else 0.0
        dx, dw, dlam, ds = direction([sigma * mu * si - xb for si, xb in zip(inverses, x)])
        alpha, beta = steps(dx, ds)
        if max(alpha, beta) < 1e-10:
            logger.info("step length collapsed at iteration %d", iteration)
            break
        x = [xb + alpha * d for xb, d in zip(x, dx)]
        w = w + alpha * dw
        lam = lam + beta * dlam
        s = [sb + beta * d for sb, d in zip(s, ds)]
    worst, x, w, lam, s, primal, dual, residuals, iteration = best
    if status == "stalled" and worst <= NEAR_OPTIMAL * tol:
        status = "near_optimal"
    logger.info(
        "solver %s after %d iterations: objective %.10g (residual %.1e)",
        status,
        iteration,
        primal,
        worst,
    )
    return ConicSolution(
        blocks=x,
        free=w,
        dual=lam,
        slacks=s,
        objective=primal,
        dual_objective=dual,
        status=status,
        residuals=residuals,
        iterations=iteration,
    )


def _certificate(data, x, w, lam, primal, dual):
    if dual > DIVERGENCE:
        ray = lam / dual
        cone = [-a for a in data.adjoint(ray)]
        free_residual = np.linalg.norm(data.a_free.T @ ray)
        if free_residual < 1e-6 and all(
            np.linalg.eigvalsh(c).min() > -1e-6 for c in cone
        ):
            return "infeasible"
    if primal < -DIVERGENCE:
        residual = np.linalg.norm(data.op(x) + data.a_free @ w) / abs(primal)
        if residual < 1e-6:
            return "unbounded"
    return None


def _merged(functional):
    blocks = defaultdict(float)
    for b, i, j, value in functional.blocks:
        blocks[(b, i, j)] += value
    free = defaultdict(float)
    for k, value in functional.free:
        free[k] += value
    return blocks, free


def _number(value):
    return repr(float(value))


def export_sdpa(problem, destination, title="hocp-revise conic problem"):
    """Write the problem in sparse SDPA format (the problem is the SDPA dual)."""
    problem.check()
    if not problem.block_dims and not problem.n_free:
        raise ValueError("nothing to export")
    structure = list(problem.block_dims)
    free_block = None
    if problem.n_free:
        structure.append(-2 * problem.n_free)
        free_block = len(structure)

    def entries(matno, functional, sign):
        blocks, free = _merged(functional)
        for (b, i, j), value in sorted(blocks.items()):
            if value:
                yield f"{matno} {b + 1} {i + 1} {j + 1} {_number(sign * value)}"
        for k, value in sorted(free.items()):
            if value:
                yield f"{matno} {free_block} {2 * k + 1} {2 * k + 1} {_number(sign * value)}"
                yield f"{matno} {free_block} {2 * k + 2} {2 * k + 2} {_number(-sign * value)}"

    lines = [
        f'"{title}"',
        f"{problem.m} = mDIM",
        f"{len(structure)} = nBLOCK",
        " ".join(str(n) for n in structure),
        " ".join(_number(v) for v in problem.rhs) if problem.rhs else "",
    ]
    lines.extend(entries(0, problem.objective, -1.0))
    for k, functional in enumerate(problem.equalities, start=1):
        lines.extend(entries(k, functional, 1.0))
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _numbers(line):
    for char in ",(){}=":
        line = line.replace(char, " ")
    values = []
    for token in line.split():
        try:
            values.append(float(token))
        except ValueError:
            break
    return values


def read_sdpa(path):
    """Read a sparse SDPA file; diagonal blocks become 1x1 blocks."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = [
            line for line in fh if line.strip() and not line.lstrip().startswith(('"', "*"))
        ]
    try:
        m = int(_numbers(lines[0])[0])
        n_blocks = int(_numbers(lines[1])[0])
        cursor = 2
        structure = []
        while len(structure) < n_blocks:
            structure.extend(int(v) for v in _numbers(lines[cursor]))
            cursor += 1
        rhs = []
        while len(rhs) < m:
            rhs.extend(_numbers(lines[cursor]))
            cursor += 1
    except (IndexError, ValueError) as error:
        raise ValueError(f"{path}: malformed SDPA header") from error
    block_map = {}
    dims = []
    for b, size in enumerate(structure[:n_blocks], start=1):
        if size > 0:
            block_map[(b, None)] = len(dims)
            dims.append(size)
        else:
            for i in range(1, -size + 1):
                block_map[(b, i)] = len(dims)
                dims.append(1)
    per_matrix = defaultdict(list)
    for line in lines[cursor:]:
        values = _numbers(line)
        if len(values) < 5:
            raise ValueError(f"{path}: malformed entry {line.strip()!r}")
        matno, b, i, j = (int(v) for v in values[:4])
        i, j = min(i, j), max(i, j)
        if structure[b - 1] > 0:
            entry = (block_map[(b, None)], i - 1, j - 1, values[4])
        elif i == j:
            entry = (block_map[(b, i)], 0, 0, values[4])
        else:
            continue
        per_matrix[matno].append(entry)
    objective = Functional(
        blocks=tuple((b, i, j, -v) for b, i, j, v in per_matrix.get(0, ()))
    )
    equalities = tuple(
        Functional(blocks=tuple(per_matrix.get(k, ()))) for k in range(1, m + 1)
    )
    return ConicProblem(
        block_dims=tuple(dims),
        n_free=0,
        objective=objective,
        equalities=equalities,
        rhs=tuple(rhs[:m]),
    )
