"""Solver-agnostic cone programs.

A ConeProgram is a linear objective over real scalar variables plus affine
rows grouped into tagged cone blocks (equality, nonnegative, second-order,
rotated second-order, positive-semidefinite).  Everything downstream builds
these programs and never touches solver internals; the solve contract is met
here by the Clarabel primal-dual interior-point solver.

Row convention: each affine row is e_i(x) = a_i . x + const_i, and a block
states the cone its rows' values must lie in.  PSD blocks pack a complex
d x d Hermitian matrix H as d*d real rows in row-major order of the matrix
G = Re(H) + Im(H), with Re(H) symmetric and Im(H) antisymmetric, so
Re(H) = (G + G^T)/2 and Im(H) = (G - G^T)/2.  Internally H >= 0 is imposed
through the real symmetric embedding [[Re, -Im], [Im, Re]] of side 2d.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

import clarabel

ZERO = "zero"
NONNEG = "nonneg"
SOC = "soc"
RSOC = "rsoc"
PSD = "psd"

_KINDS = (ZERO, NONNEG, SOC, RSOC, PSD)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical-failure"
ITER_LIMIT = "iteration-limit"


class Row:
    """One affine row a.x + const, stored sparse."""

    __slots__ = ("idx", "val", "const")

    def __init__(self, idx, val, const=0.0):
        self.idx = np.asarray(idx, dtype=np.int64)
        self.val = np.asarray(val, dtype=float)
        self.const = float(const)

    @classmethod
    def from_terms(cls, terms: dict[int, float], const: float = 0.0) -> "Row":
        items = sorted((i, v) for i, v in terms.items() if v != 0.0)
        if items:
            idx, val = zip(*items)
        else:
            idx, val = (), ()
        return cls(np.array(idx, dtype=np.int64), np.array(val, dtype=float), const)

    def value(self, x: np.ndarray) -> float:
        return float(x[self.idx] @ self.val + self.const)


@dataclass(frozen=True)
class ConeBlock:
    kind: str
    start: int     # first row index within the program
    size: int      # number of rows
    side: int = 0  # psd: Hermitian matrix side d (size == d*d)


@dataclass
class SolveResult:
    status: str
    primal: Optional[np.ndarray]
    objective_value: Optional[float]
    duals: list              # per block, solver geometry (see module docstring)
    residual_primal: float
    residual_dual: float
    gap: float
    iterations: int
    solve_time: float

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class ConeProgram:
    """Mutable while being built; frozen at first assembly/solve."""

    def __init__(self, n_vars: int, sense: str = "min"):
        if n_vars < 1:
            raise ValueError("need at least one variable")
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.n_vars = n_vars
        self.sense = sense
        self.obj_coeffs = np.zeros(n_vars)
        self.obj_const = 0.0
        self.rows: list[Row] = []
        self.blocks: list[ConeBlock] = []
        self._assembled: Optional[_Assembled] = None

    # -- construction -----------------------------------------------------

    def set_objective(self, coeffs, constant: float = 0.0, sense: Optional[str] = None):
        self._check_mutable()
        if isinstance(coeffs, dict):
            vec = np.zeros(self.n_vars)
            for i, v in coeffs.items():
                vec[i] = v
        else:
            vec = np.asarray(coeffs, dtype=float)
            if vec.shape != (self.n_vars,):
                raise ValueError("objective coefficient length mismatch")
        self.obj_coeffs = vec
        self.obj_const = float(constant)
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError("sense must be 'min' or 'max'")
            self.sense = sense

    def add_block(self, kind: str, rows: Sequence[Row], side: int = 0) -> int:
        """Append a cone block; returns the program row index of its first row."""
        self._check_mutable()
        if kind not in _KINDS:
            raise ValueError(f"unknown cone kind {kind!r}")
        rows = list(rows)
        if not rows:
            raise ValueError("empty cone block")
        if kind == SOC and len(rows) < 2:
            raise ValueError("second-order block needs >= 2 rows")
        if kind == RSOC and len(rows) < 3:
            raise ValueError("rotated second-order block needs >= 3 rows")
        if kind == PSD:
            if side < 1 or len(rows) != side * side:
                raise ValueError("psd block must carry side*side rows")
        start = len(self.rows)
        self.rows.extend(rows)
        self.blocks.append(ConeBlock(kind, start, len(rows), side))
        return start

    def _check_mutable(self):
        if self._assembled is not None:
            raise RuntimeError("program is frozen after assembly")

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    # -- evaluation helpers ------------------------------------------------

    def objective_at(self, x: np.ndarray) -> float:
        return float(self.obj_coeffs @ x + self.obj_const)

    def block_values(self, block: ConeBlock, x: np.ndarray) -> np.ndarray:
        return np.array([r.value(x) for r in self.rows[block.start:block.start + block.size]])

    def assemble(self) -> "_Assembled":
        if self._assembled is None:
            self._assembled = _Assembled(self)
        return self._assembled


def _psd_svec_plan(side: int, start: int):
    """Map a packed Hermitian block to svec rows of its 2d real embedding.

    Yields (scale, [(program_row, coeff), ...]) per svec entry, column-major
    upper triangle of the embedded 2d x 2d matrix, off-diagonals times
    sqrt(2) as the solver expects.
    """
    d = side
    g = lambda i, k: start + i * d + k   # program row of G[i, k]
    plan = []
    for c in range(2 * d):
        for r in range(c + 1):
            if r < d and c < d:
                terms = [(g(r, c), 0.5), (g(c, r), 0.5)]          # Re[r,c]
            elif r < d <= c:
                i, k = r, c - d
                if i == k:
                    terms = []                                     # Im diagonal = 0
                else:
                    terms = [(g(i, k), -0.5), (g(k, i), 0.5)]      # -Im[i,k]
            else:
                i, k = r - d, c - d
                terms = [(g(i, k), 0.5), (g(k, i), 0.5)]           # Re[i,k]
            scale = 1.0 if r == c else math.sqrt(2.0)
            plan.append((scale, terms))
    return plan


class _Assembled:
    """Clarabel-form data for a ConeProgram, with patchable row constants."""

    def __init__(self, prog: ConeProgram):
        self.prog = prog
        tri_i, tri_j, tri_v = [], [], []
        b = []
        cones = []
        # source_map[program_row] -> [(clarabel_row, coeff)]
        self.source_map: dict[int, list[tuple[int, float]]] = {}
        cl_row = 0

        def emit(combined: list[tuple[int, float]], scale_terms=None):
            """Emit one clarabel row as a signed combination of program rows."""
            nonlocal cl_row
            acc: dict[int, float] = {}
            const = 0.0
            for prow, coeff in combined:
                row = prog.rows[prow]
                const += coeff * row.const
                for i, v in zip(row.idx, row.val):
                    acc[int(i)] = acc.get(int(i), 0.0) + coeff * v
                self.source_map.setdefault(prow, []).append((cl_row, coeff))
            for i, v in acc.items():
                if v != 0.0:
                    tri_i.append(cl_row)
                    tri_j.append(i)
                    tri_v.append(-v)      # s = b - A x with s = e(x)
            b.append(const)
            cl_row += 1

        for blk in prog.blocks:
            s, n = blk.start, blk.size
            if blk.kind in (ZERO, NONNEG, SOC):
                for k in range(n):
                    emit([(s + k, 1.0)])
                cone = {ZERO: clarabel.ZeroConeT, NONNEG: clarabel.NonnegativeConeT,
                        SOC: clarabel.SecondOrderConeT}[blk.kind](n)
                cones.append(cone)
            elif blk.kind == RSOC:
                # 2 e0 e1 >= ||z||^2, e0,e1 >= 0  <=>  ||(e0-e1, sqrt2 z)|| <= e0+e1
                emit([(s, 1.0), (s + 1, 1.0)])
                emit([(s, 1.0), (s + 1, -1.0)])
                r2 = math.sqrt(2.0)
                for k in range(2, n):
                    emit([(s + k, r2)])
                cones.append(clarabel.SecondOrderConeT(n))
            elif blk.kind == PSD:
                for scale, terms in _psd_svec_plan(blk.side, s):
                    emit([(p, scale * c) for p, c in terms])
                cones.append(clarabel.PSDTriangleConeT(2 * blk.side))
        self.n_cl_rows = cl_row
        self.b0 = np.asarray(b, dtype=float)
        self.A = sparse.csc_matrix(
            (tri_v, (tri_i, tri_j)), shape=(cl_row, prog.n_vars)
        )
        self.P = sparse.csc_matrix((prog.n_vars, prog.n_vars))
        sign = 1.0 if prog.sense == "min" else -1.0
        self.q = sign * prog.obj_coeffs
        self.cones = cones
        self.row_const0 = np.array([r.const for r in prog.rows])
        self._block_slices = []
        pos = 0
        for blk in prog.blocks:
            ncl = blk.size
            if blk.kind == PSD:
                ncl = blk.side * (2 * blk.side + 1)
            self._block_slices.append((pos, pos + ncl))
            pos += ncl

    def solve(
        self,
        tol: float = 1e-8,
        max_iters: int = 200,
        const_patch: Optional[dict[int, float]] = None,
        static_reg: Optional[float] = None,
    ) -> SolveResult:
        b = self.b0
        if const_patch:
            b = b.copy()
            for prow, new_const in const_patch.items():
                delta = new_const - self.row_const0[prow]
                if delta == 0.0:
                    continue
                for cl, coeff in self.source_map.get(prow, ()):
                    b[cl] += coeff * delta
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = int(max_iters)
        settings.tol_gap_abs = tol
        settings.tol_gap_rel = tol
        settings.tol_feas = tol
        if static_reg is not None:
            # lifts degenerate KKT systems (e.g. vanishing PSD slacks) at the
            # cost of an O(static_reg) perturbation of the optimum
            settings.static_regularization_constant = static_reg
        solver = clarabel.DefaultSolver(self.P, self.q, self.A, b, self.cones, settings)
        sol = solver.solve()
        status = _map_status(sol.status)
        sign = 1.0 if self.prog.sense == "min" else -1.0
        x = None if status in (INFEASIBLE, UNBOUNDED) else np.asarray(sol.x)
        obj = None
        if x is not None:
            obj = sign * float(sol.obj_val) + self.prog.obj_const
        z = np.asarray(sol.z)
        duals = [z[a:bq] for a, bq in self._block_slices] if z.size == self.n_cl_rows else []
        gap = abs(float(sol.obj_val) - float(sol.obj_val_dual))
        return SolveResult(
            status=status,
            primal=x,
            objective_value=obj,
            duals=duals,
            residual_primal=float(sol.r_prim) if sol.r_prim is not None else math.nan,
            residual_dual=float(sol.r_dual) if sol.r_dual is not None else math.nan,
            gap=gap,
            iterations=int(sol.iterations),
            solve_time=float(sol.solve_time),
        )


def _map_status(st) -> str:
    name = str(st)
    if "." in name:
        name = name.split(".")[-1]
    if name in ("Solved", "AlmostSolved"):
        return OPTIMAL
    if name == "PrimalInfeasible":
        return INFEASIBLE
    if name == "DualInfeasible":
        return UNBOUNDED
    if name in ("MaxIterations", "MaxTime"):
        return ITER_LIMIT
    return NUMERICAL


def solve(program: ConeProgram, tol: float = 1e-8, max_iters: int = 200,
          static_reg: Optional[float] = None) -> SolveResult:
    """Solve a cone program to the requested interior-point tolerance."""
    return program.assemble().solve(tol=tol, max_iters=max_iters,
                                    static_reg=static_reg)


def hermitian_from_packed(values: np.ndarray, side: int) -> np.ndarray:
    """Rebuild the complex Hermitian matrix from a packed d*d value block."""
    g = np.asarray(values, dtype=float).reshape(side, side)
    re = 0.5 * (g + g.T)
    im = 0.5 * (g - g.T)
    return re + 1j * im


def packed_quadratic_terms(h: np.ndarray, offset: int = 0, scale: float = 1.0) -> dict[int, float]:
    """Coefficients of scale * h^H H h over the packed entries of H.

    The quadratic form is real for Hermitian H and linear in the packing, so
    it can be used directly in affine rows.
    """
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    t: dict[int, float] = {}
    for a in range(n):
        t[offset + a * n + a] = t.get(offset + a * n + a, 0.0) + scale * (abs(h[a]) ** 2)
        for b in range(a + 1, n):
            z = np.conj(h[a]) * h[b]
            t[offset + a * n + b] = t.get(offset + a * n + b, 0.0) + scale * (z.real - z.imag)
            t[offset + b * n + a] = t.get(offset + b * n + a, 0.0) + scale * (z.real + z.imag)
    return t


def packed_basis(side: int) -> np.ndarray:
    """Hermitian basis matrices B_q such that H = sum_q packed[q] * B_q."""
    out = np.zeros((side * side, side, side), dtype=complex)
    for i in range(side):
        for k in range(side):
            q = i * side + k
            if i == k:
                out[q, i, i] = 1.0
            elif i < k:
                out[q, i, k] = 0.5 + 0.5j
                out[q, k, i] = 0.5 - 0.5j
            else:
                out[q, k, i] = 0.5 - 0.5j
                out[q, i, k] = 0.5 + 0.5j
    return out


def check_certificate(program: ConeProgram, result: SolveResult, tol: float = 1e-6):
    """Independently recompute feasibility and objective of an optimal result.

    Returns (ok, report) where report maps block labels to signed residuals
    (negative = violation).  The recomputation uses only the stored program
    rows, not the solver output beyond the primal point.
    """
    if not result.optimal or result.primal is None:
        return False, {"status": result.status}
    x = result.primal
    report: dict[str, float] = {}
    ok = True
    for bi, blk in enumerate(program.blocks):
        e = program.block_values(blk, x)
        scale = 1.0 + float(np.max(np.abs(e))) if e.size else 1.0
        if blk.kind == ZERO:
            resid = -float(np.max(np.abs(e)))
        elif blk.kind == NONNEG:
            resid = float(np.min(e))
        elif blk.kind == SOC:
            resid = e[0] - float(np.linalg.norm(e[1:]))
        elif blk.kind == RSOC:
            resid = min(
                2.0 * e[0] * e[1] - float(np.sum(e[2:] ** 2)),
                e[0], e[1],
            )
        else:  # PSD
            H = hermitian_from_packed(e, blk.side)
            resid = float(np.min(np.linalg.eigvalsh(H)))
        report[f"block{bi}:{blk.kind}"] = resid
        if resid < -tol * scale:
            ok = False
    obj = program.objective_at(x)
    report["objective-mismatch"] = abs(obj - result.objective_value)
    if report["objective-mismatch"] > tol * (1.0 + abs(obj)):
        ok = False
    return ok, report


def dump_text(program: ConeProgram) -> str:
    """Plain-text dump: header, objective, sparse row triplets, block list."""
    out = io.StringIO()
    out.write(f"coneprogram v1 vars={program.n_vars} rows={program.n_rows} "
              f"blocks={len(program.blocks)} sense={program.sense}\n")
    nz = np.nonzero(program.obj_coeffs)[0]
    out.write(f"objective const={program.obj_const!r} nnz={len(nz)}\n")
    for i in nz:
        out.write(f"  {i} {program.obj_coeffs[i]!r}\n")
    for k, row in enumerate(program.rows):
        out.write(f"row {k} const={row.const!r} nnz={len(row.idx)}\n")
        for i, v in zip(row.idx, row.val):
            out.write(f"  {i} {v!r}\n")
    for blk in program.blocks:
        side = f" side={blk.side}" if blk.kind == PSD else ""
        out.write(f"block {blk.kind} start={blk.start} size={blk.size}{side}\n")
    return out.getvalue()
