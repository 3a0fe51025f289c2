"""Discrete-rate solvers built on branch-and-bound over cone-program nodes.

The weighted-sum-rate problem is convexified into a mixed-integer SOCP:
binary products are linearized (envelope inequalities over the admission and
common-MCS bits), precoder/bit couplings become power-gate cones, per-MCS
SINR disjunctions are merged with tight big-M constants, and the private
SINR cones are made convex by fixing the free phase of each beam against its
own channel.  The common SINR cones additionally align the common beam's
phase with every user channel, an inner approximation whose cost is audited
by the semidefinite-relaxation upper bound in this module.

Branch and bound relaxes unfixed bits to [0, 1], prunes on node bounds, and
polishes every integral incumbent with a fixed-bit re-solve.  The weighted
energy-efficiency objective is handled by a parametric outer loop: for a
ratio guess lam, maximize rate - lam * total power (a genuine MISOCP via a
power epigraph), then update lam with the achieved ratio until the residual
vanishes.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import cones
from .cones import ConeProgram, Row
from .model import (
    AT_MOST_K,
    EXACT_K,
    BinaryAssignment,
    PrecoderSolution,
    SystemInstance,
    l_max,
    wsr,
)
from .sca import principal_component, rank_oneness

BOUND_PAD_REL = 1e-7     # node bounds are IPM-accurate, pad before pruning
INT_TOL = 1e-6

RSMA = "rsma"
SDMA = "sdma"


@dataclass(frozen=True)
class MisocpOptions:
    use_cuts_j1: bool = True
    use_cuts_j2: bool = True
    branching: str = "most-fractional"      # or "pseudo-cost"
    node_selection: str = "best-bound"      # or "depth-first"
    rel_gap: float = 1e-6
    node_limit: int = 200_000
    time_limit: Optional[float] = None      # seconds
    variant: str = RSMA                     # or SDMA (forces the common bit off)
    dinkelbach_tol: float = 1e-8
    dinkelbach_max_iters: int = 30
    node_tol: float = 1e-8
    polish_tol: float = 1e-9

    def __post_init__(self):
        if self.rel_gap <= 0 or self.node_limit <= 0:
            raise ValueError("limits must be positive")
        if self.branching not in ("most-fractional", "pseudo-cost"):
            raise ValueError("unknown branching rule")
        if self.node_selection not in ("best-bound", "depth-first"):
            raise ValueError("unknown node selection rule")
        if self.variant not in (RSMA, SDMA):
            raise ValueError("variant must be rsma or sdma")


@dataclass
class BnBStats:
    nodes_explored: int = 0
    nodes_pruned: int = 0
    incumbent_updates: int = 0
    early_stop_hit: bool = False
    wallclock: float = 0.0


@dataclass
class DinkelbachTrace:
    lams: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = True


@dataclass
class MisocpSolution:
    status: str                        # optimal | infeasible | limit
    assignment: Optional[BinaryAssignment]
    precoders: Optional[PrecoderSolution]
    objective: float
    stats: BnBStats
    certificate_gap: float             # relative global-optimality gap achieved
    dinkelbach: Optional[DinkelbachTrace] = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# --------------------------------------------------------------------------
# binary vector layout shared by the SOCP and lifted-SDP templates
# --------------------------------------------------------------------------


class _BinLayout:
    """Local indices of the decision bits inside one flat vector.

    Order fixes the branching priority: admission first, then the common
    on/off bit, common MCS, private on/off, private MCS, products.
    """

    def __init__(self, U: int, J: int):
        self.U, self.J = U, J
        self.chi0 = 0
        self.psi = U
        self.kappa0 = U + 1
        self.mu0 = U + 1 + J
        self.alpha0 = U + 1 + J + U
        self.pi0 = U + 1 + J + U + U * J
        self.nb = U + 1 + J + U + 2 * U * J

    def chi(self, u): return self.chi0 + u
    def kappa(self, j): return self.kappa0 + j
    def mu(self, u): return self.mu0 + u
    def alpha(self, u, j): return self.alpha0 + u * self.J + j
    def pi(self, u, j): return self.pi0 + u * self.J + j


def _propagate_bits(lay: _BinLayout, lo: np.ndarray, up: np.ndarray,
                    k_admit: int, exact_k: bool) -> bool:
    """Tighten bit bounds by logical implication; False when inconsistent."""
    U, J = lay.U, lay.J
    changed = True
    while changed:
        changed = False

        def set_lo(i, v):
            nonlocal changed
            if lo[i] < v:
                lo[i] = v
                changed = True

        def set_up(i, v):
            nonlocal changed
            if up[i] > v:
                up[i] = v
                changed = True

        for u in range(U):
            set_up(lay.mu(u), up[lay.chi(u)])
            set_lo(lay.chi(u), lo[lay.mu(u)])
            a = [lay.alpha(u, j) for j in range(J)]
            for i in a:
                set_up(i, up[lay.mu(u)])
            s_up = sum(up[i] for i in a)
            set_up(lay.mu(u), min(1, s_up))
            s_lo = sum(lo[i] for i in a)
            if s_lo > 1:
                return False
            if s_lo == 1:
                set_lo(lay.mu(u), 1)
                for i in a:
                    if lo[i] == 0:
                        set_up(i, 0)
            if lo[lay.mu(u)] == 1 and s_up == 1:
                for i in a:
                    if up[i] == 1:
                        set_lo(i, 1)
        kap = [lay.kappa(j) for j in range(J)]
        for i in kap:
            set_up(i, up[lay.psi])
        s_up = sum(up[i] for i in kap)
        set_up(lay.psi, min(1, s_up))
        s_lo = sum(lo[i] for i in kap)
        if s_lo > 1:
            return False
        if s_lo == 1:
            set_lo(lay.psi, 1)
            for i in kap:
                if lo[i] == 0:
                    set_up(i, 0)
        if lo[lay.psi] == 1 and s_up == 1:
            for i in kap:
                if up[i] == 1:
                    set_lo(i, 1)
        for u in range(U):
            for j in range(J):
                p = lay.pi(u, j)
                set_up(p, min(up[lay.chi(u)], up[lay.kappa(j)]))
                set_lo(p, max(0, lo[lay.chi(u)] + lo[lay.kappa(j)] - 1))
                if lo[p] == 1:
                    set_lo(lay.chi(u), 1)
                    set_lo(lay.kappa(j), 1)
        chis = [lay.chi(u) for u in range(U)]
        s_lo = sum(lo[i] for i in chis)
        s_up = sum(up[i] for i in chis)
        if s_lo > k_admit:
            return False
        if exact_k and s_up < k_admit:
            return False
        if s_lo == k_admit:
            for i in chis:
                if lo[i] == 0:
                    set_up(i, 0)
        if exact_k and s_up == k_admit:
            for i in chis:
                if up[i] == 1 and lo[i] == 0:
                    set_lo(i, 1)
        if np.any(lo > up):
            return False
    return True


def _herm_product_rows(h: np.ndarray, re_off: int, im_off: int):
    """(real, imag) affine rows of h^H x for a complex variable block."""
    n = h.shape[0]
    idx = np.concatenate([np.arange(re_off, re_off + n),
                          np.arange(im_off, im_off + n)])
    re = Row(idx, np.concatenate([h.real, h.imag]))
    im = Row(idx, np.concatenate([-h.imag, h.real]))
    return re, im


def weighted_rate_ceiling(instance: SystemInstance) -> float:
    """Weighted analog of the sum-rate ceiling (K + 1) * R_J.

    At most K users carry a private rate <= R_J, and the common pool of at
    most R_J is split among admitted users, so its weighted value is at most
    max(weights) * R_J.
    """
    top = instance.mcs.top_rate
    w_sorted = np.sort(instance.weights)[::-1]
    k = min(instance.k_admit, instance.n_users)
    return float(np.sum(w_sorted[:k]) * top + np.max(instance.weights) * top)


# --------------------------------------------------------------------------
# node templates: SOCP relaxation and lifted-SDP relaxation
# --------------------------------------------------------------------------


class _DwsrTemplate:
    """Cone program for the convexified discrete-rate problem.

    Variables: Re/Im of each private beam and the common beam, the common
    rate split, the relaxed bits, and (for the parametric EE objective) a
    transmit-power epigraph scalar.
    """

    def __init__(self, instance: SystemInstance, options: MisocpOptions,
                 lam: Optional[float] = None):
        self.instance = instance
        self.options = options
        self.lam = lam
        U, N, J = instance.n_users, instance.n_tx, instance.mcs.J
        lay = _BinLayout(U, J)
        self.lay = lay
        self.with_epi = lam is not None
        self.vw = 0
        self.vm = U * 2 * N
        self.vc = self.vm + 2 * N
        self.vb = self.vc + U
        self.vpe = self.vb + lay.nb
        n_vars = self.vpe + (1 if self.with_epi else 0)
        self.n_vars = n_vars

        inst = instance
        P = inst.power.p_tx_max
        sigma = math.sqrt(inst.sigma2)
        rates = np.asarray(inst.mcs.rates)
        gammas = np.asarray(inst.mcs.sinrs)
        lmaxes = [l_max(inst.channels[u], P, inst.sigma2) for u in range(U)]

        def wre(u): return self.vw + u * 2 * N
        def wim(u): return self.vw + u * 2 * N + N

        hw = [[None] * U for _ in range(U)]   # (re,im) rows of h_u^H w_i
        hm = [None] * U                       # (re,im) rows of h_u^H m
        for u in range(U):
            h = inst.channels[u]
            for i in range(U):
                hw[u][i] = _herm_product_rows(h, wre(i), wim(i))
            hm[u] = _herm_product_rows(h, self.vm, self.vm + N)

        prog = ConeProgram(n_vars, sense="max")

        # objective
        obj = {}
        for u in range(U):
            obj[self.vc + u] = inst.weights[u]
            for j in range(J):
                obj[self.vb + lay.alpha(u, j)] = inst.weights[u] * rates[j]
        const = 0.0
        if self.with_epi:
            obj[self.vpe] = -lam / inst.power.eta_eff
            const = -lam * inst.p_cir
        prog.set_objective(obj, constant=const)

        def bv(i):  # global index of bit i
            return self.vb + i

        # equalities
        eq = []
        chi_terms = {bv(lay.chi(u)): 1.0 for u in range(U)}
        if inst.admission_mode == EXACT_K:
            eq.append(Row.from_terms(chi_terms, -float(inst.k_admit)))
        for u in range(U):
            t = {bv(lay.alpha(u, j)): 1.0 for j in range(J)}
            t[bv(lay.mu(u))] = -1.0
            eq.append(Row.from_terms(t))
        t = {bv(lay.kappa(j)): 1.0 for j in range(J)}
        t[bv(lay.psi)] = -1.0
        eq.append(Row.from_terms(t))
        t = {self.vc + u: 1.0 for u in range(U)}
        for j in range(J):
            t[bv(lay.kappa(j))] = -rates[j]
        eq.append(Row.from_terms(t))
        for u in range(U):
            eq.append(hw[u][u][1])            # Im{h_u^H w_u} = 0
        prog.add_block(cones.ZERO, eq)

        # linear inequalities
        ineq = []
        if inst.admission_mode == AT_MOST_K:
            ineq.append(Row.from_terms({k: -v for k, v in chi_terms.items()},
                                       float(inst.k_admit)))
        for u in range(U):
            ineq.append(Row.from_terms({bv(lay.chi(u)): 1.0, bv(lay.mu(u)): -1.0}))
            ineq.append(Row.from_terms({self.vc + u: 1.0}))
            t = {bv(lay.alpha(u, j)): rates[j] for j in range(J)}
            t[self.vc + u] = 1.0
            t[bv(lay.chi(u))] = -inst.r_min
            ineq.append(Row.from_terms(t))
            t = {bv(lay.pi(u, j)): rates[j] for j in range(J)}
            t[self.vc + u] = -1.0
            ineq.append(Row.from_terms(t))
            for j in range(J):
                ineq.append(Row.from_terms(
                    {bv(lay.chi(u)): 1.0, bv(lay.pi(u, j)): -1.0}))
                ineq.append(Row.from_terms(
                    {bv(lay.kappa(j)): 1.0, bv(lay.pi(u, j)): -1.0}))
                ineq.append(Row.from_terms(
                    {bv(lay.pi(u, j)): 1.0, bv(lay.chi(u)): -1.0,
                     bv(lay.kappa(j)): -1.0}, 1.0))
            re_uu = hw[u][u][0]
            ineq.append(re_uu)                # phase-fixed beam gain >= 0
            ineq.append(hm[u][0])             # common beam aligned per user
            if options.use_cuts_j1:
                t = dict(zip(re_uu.idx.tolist(), re_uu.val.tolist()))
                for j in range(J):
                    t[bv(lay.alpha(u, j))] = -sigma * math.sqrt(gammas[j])
                ineq.append(Row.from_terms(t))
        if options.use_cuts_j2:
            t = {}
            for u in range(U):
                t[self.vc + u] = -1.0
                for j in range(J):
                    t[bv(lay.alpha(u, j))] = -rates[j]
            ineq.append(Row.from_terms(
                t, (inst.k_admit + 1) * inst.mcs.top_rate))
        prog.add_block(cones.NONNEG, ineq)

        # bit box bounds, patched per node (lower rows then upper rows)
        lo_rows = [Row([self.vb + i], [1.0], 0.0) for i in range(lay.nb)]
        up_rows = [Row([self.vb + i], [-1.0], 1.0) for i in range(lay.nb)]
        self.bounds_start = prog.add_block(cones.NONNEG, lo_rows + up_rows)

        all_wm = np.arange(self.vm + 2 * N)
        prog.add_block(cones.SOC, [Row([], [], math.sqrt(P))]
                       + [Row([i], [1.0]) for i in all_wm])
        for u in range(U):
            wu = np.arange(wre(u), wre(u) + 2 * N)
            prog.add_block(cones.RSOC,
                           [Row([bv(lay.mu(u))], [P / 2.0]), Row([], [], 1.0)]
                           + [Row([i], [1.0]) for i in wu])
        mvars = np.arange(self.vm, self.vm + 2 * N)
        prog.add_block(cones.RSOC,
                       [Row([bv(lay.psi)], [P / 2.0]), Row([], [], 1.0)]
                       + [Row([i], [1.0]) for i in mvars])
        if self.with_epi:
            prog.add_block(cones.RSOC,
                           [Row([self.vpe], [0.5]), Row([], [], 1.0)]
                           + [Row([i], [1.0]) for i in np.arange(self.vm + 2 * N)])

        # per-MCS SINR cones with big-M deactivation
        dsic = inst.delta_sic
        for u in range(U):
            for j in range(J):
                top = _combine_rows(
                    [(hw[u][u][0], 1.0 / math.sqrt(gammas[j]))],
                    const=lmaxes[u],
                    extra={bv(lay.alpha(u, j)): -lmaxes[u]})
                tail = []
                if dsic > 0.0:
                    tail += [_scale_row(hm[u][0], dsic), _scale_row(hm[u][1], dsic)]
                for i in range(U):
                    if i != u:
                        tail += [hw[u][i][0], hw[u][i][1]]
                tail.append(Row([], [], sigma))
                prog.add_block(cones.SOC, [top] + tail)
        for u in range(U):
            for j in range(J):
                top = _combine_rows(
                    [(hm[u][0], 1.0 / math.sqrt(gammas[j]))],
                    const=lmaxes[u],
                    extra={bv(lay.pi(u, j)): -lmaxes[u]})
                tail = [r for i in range(U) for r in hw[u][i]]
                tail.append(Row([], [], sigma))
                prog.add_block(cones.SOC, [top] + tail)

        self.prog = prog
        self.assembled = prog.assemble()

    # -- node interface ----------------------------------------------------

    def root_bounds(self):
        lay = self.lay
        lo = np.zeros(lay.nb, dtype=np.int8)
        up = np.ones(lay.nb, dtype=np.int8)
        if self.options.variant == SDMA:
            up[lay.psi] = 0
        return lo, up

    def solve_node(self, lo, up, tol=None, max_iters=200,
                   static_reg=None) -> cones.SolveResult:
        patch = {}
        for i in range(self.lay.nb):
            if lo[i]:
                patch[self.bounds_start + i] = -float(lo[i])
            if up[i] != 1:
                patch[self.bounds_start + self.lay.nb + i] = float(up[i])
        return self.assembled.solve(tol=tol or self.options.node_tol,
                                    max_iters=max_iters, const_patch=patch,
                                    static_reg=static_reg)

    def bits_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.vb:self.vb + self.lay.nb]

    def assignment_from_bits(self, bits: np.ndarray) -> BinaryAssignment:
        lay, U, J = self.lay, self.lay.U, self.lay.J
        b = np.rint(bits).astype(int)
        return BinaryAssignment(
            chi=b[[lay.chi(u) for u in range(U)]],
            mu=b[[lay.mu(u) for u in range(U)]],
            psi=int(b[lay.psi]),
            alpha=b[lay.alpha0:lay.alpha0 + U * J].reshape(U, J),
            kappa=b[[lay.kappa(j) for j in range(J)]],
            pi=b[lay.pi0:lay.pi0 + U * J].reshape(U, J),
        )

    def extract(self, x: np.ndarray, assignment: BinaryAssignment) -> PrecoderSolution:
        inst, N, U = self.instance, self.instance.n_tx, self.instance.n_users
        w = np.zeros((U, N), dtype=complex)
        for u in range(U):
            off = self.vw + u * 2 * N
            w[u] = x[off:off + N] + 1j * x[off + N:off + 2 * N]
            if assignment.mu[u] == 0:
                w[u] = 0.0
        m = x[self.vm:self.vm + N] + 1j * x[self.vm + N:self.vm + 2 * N]
        if assignment.psi == 0:
            m = np.zeros(N, dtype=complex)
        c = np.clip(x[self.vc:self.vc + U], 0.0, None)
        c[assignment.chi == 0] = 0.0
        if assignment.psi == 0:
            c[:] = 0.0
        rates = np.asarray(inst.mcs.rates)
        priv = assignment.alpha @ rates
        obj = float(np.sum(inst.weights * (priv + c)))
        return PrecoderSolution(w=w, m=m, c=c, private_rates=priv, objective=obj)

    def incumbent_value(self, assignment: BinaryAssignment,
                        precoders: PrecoderSolution) -> float:
        """Exact objective of an integral solution (parametric when lam set)."""
        val = wsr(self.instance, assignment, precoders.c)
        if self.with_epi:
            total = (precoders.tx_power() / self.instance.power.eta_eff
                     + self.instance.p_cir)
            val -= self.lam * total
        return val


def _scale_row(row: Row, s: float) -> Row:
    return Row(row.idx, row.val * s, row.const * s)


def _combine_rows(scaled, const=0.0, extra=None) -> Row:
    terms: dict[int, float] = dict(extra or {})
    c = const
    for row, s in scaled:
        c += s * row.const
        for i, v in zip(row.idx, row.val):
            terms[int(i)] = terms.get(int(i), 0.0) + s * v
    return Row.from_terms(terms, c)


class _SdrTemplate:
    """Rank-relaxed lifted variant: beam outer products become PSD matrices.

    The per-MCS SINR disjunctions stay in their exact quadratic form, which
    is linear in the lifted matrices, so solving this relaxation over the
    bits upper-bounds the original (pre-convexification) discrete problem.
    """

    def __init__(self, instance: SystemInstance, options: MisocpOptions):
        self.instance = instance
        self.options = options
        U, N, J = instance.n_users, instance.n_tx, instance.mcs.J
        lay = _BinLayout(U, J)
        self.lay = lay
        d2 = N * N
        self.vX = 0                      # U+1 packed Hermitian blocks; X_0 last
        self.vc = (U + 1) * d2
        self.vb = self.vc + U
        self.n_vars = self.vb + lay.nb
        self.with_epi = False
        self.lam = None

        inst = instance
        P = inst.power.p_tx_max
        rates = np.asarray(inst.mcs.rates)
        gammas = np.asarray(inst.mcs.sinrs)
        lmax2 = [l_max(inst.channels[u], P, inst.sigma2) ** 2 for u in range(U)]

        def xoff(i):  # matrix block i in 0..U (U = common)
            return self.vX + i * d2

        def quad_terms(u: int, i: int, scale: float) -> dict[int, float]:
            """scale * h_u^H X_i h_u as packed-entry coefficients."""
            return cones.packed_quadratic_terms(inst.channels[u], xoff(i), scale)

        def tr_terms(i: int, scale: float) -> dict[int, float]:
            off = xoff(i)
            return {off + a * N + a: scale for a in range(N)}

        prog = ConeProgram(self.n_vars, sense="max")
        obj = {}
        for u in range(U):
            obj[self.vc + u] = inst.weights[u]
            for j in range(J):
                obj[self.vb + lay.alpha(u, j)] = inst.weights[u] * rates[j]
        prog.set_objective(obj)

        def bv(i):
            return self.vb + i

        eq = []
        chi_terms = {bv(lay.chi(u)): 1.0 for u in range(U)}
        if inst.admission_mode == EXACT_K:
            eq.append(Row.from_terms(chi_terms, -float(inst.k_admit)))
        for u in range(U):
            t = {bv(lay.alpha(u, j)): 1.0 for j in range(J)}
            t[bv(lay.mu(u))] = -1.0
            eq.append(Row.from_terms(t))
        t = {bv(lay.kappa(j)): 1.0 for j in range(J)}
        t[bv(lay.psi)] = -1.0
        eq.append(Row.from_terms(t))
        t = {self.vc + u: 1.0 for u in range(U)}
        for j in range(J):
            t[bv(lay.kappa(j))] = -rates[j]
        eq.append(Row.from_terms(t))
        prog.add_block(cones.ZERO, eq)

        ineq = []
        if inst.admission_mode == AT_MOST_K:
            ineq.append(Row.from_terms({k: -v for k, v in chi_terms.items()},
                                       float(inst.k_admit)))
        t = tr_terms(U, -1.0)
        for u in range(U):
            t.update({k: -1.0 for k in tr_terms(u, 1.0)})
        ineq.append(Row.from_terms(t, P))                      # total power
        for u in range(U):
            t = tr_terms(u, -1.0)
            t[bv(lay.mu(u))] = P
            ineq.append(Row.from_terms(t))                     # private gate
        t = tr_terms(U, -1.0)
        t[bv(lay.psi)] = P
        ineq.append(Row.from_terms(t))                         # common gate
        for u in range(U):
            ineq.append(Row.from_terms({bv(lay.chi(u)): 1.0, bv(lay.mu(u)): -1.0}))
            ineq.append(Row.from_terms({self.vc + u: 1.0}))
            t = {bv(lay.alpha(u, j)): rates[j] for j in range(J)}
            t[self.vc + u] = 1.0
            t[bv(lay.chi(u))] = -inst.r_min
            ineq.append(Row.from_terms(t))
            t = {bv(lay.pi(u, j)): rates[j] for j in range(J)}
            t[self.vc + u] = -1.0
            ineq.append(Row.from_terms(t))
            for j in range(J):
                ineq.append(Row.from_terms(
                    {bv(lay.chi(u)): 1.0, bv(lay.pi(u, j)): -1.0}))
                ineq.append(Row.from_terms(
                    {bv(lay.kappa(j)): 1.0, bv(lay.pi(u, j)): -1.0}))
                ineq.append(Row.from_terms(
                    {bv(lay.pi(u, j)): 1.0, bv(lay.chi(u)): -1.0,
                     bv(lay.kappa(j)): -1.0}, 1.0))
        dsic2 = inst.delta_sic ** 2
        for u in range(U):
            for j in range(J):
                # exact SINR inequality, big-M released when the bit is 0
                t = quad_terms(u, u, 1.0)
                if dsic2 > 0.0:
                    for k, v in quad_terms(u, U, gammas[j] * dsic2).items():
                        t[k] = t.get(k, 0.0) - v
                for i in range(U):
                    if i != u:
                        for k, v in quad_terms(u, i, gammas[j]).items():
                            t[k] = t.get(k, 0.0) - v
                bigm = gammas[j] * lmax2[u]
                t[bv(lay.alpha(u, j))] = -bigm
                ineq.append(Row.from_terms(
                    t, bigm - gammas[j] * inst.sigma2))
        for u in range(U):
            for j in range(J):
                t = quad_terms(u, U, 1.0)
                for i in range(U):
                    for k, v in quad_terms(u, i, gammas[j]).items():
                        t[k] = t.get(k, 0.0) - v
                bigm = gammas[j] * lmax2[u]
                t[bv(lay.pi(u, j))] = -bigm
                ineq.append(Row.from_terms(t, bigm - gammas[j] * inst.sigma2))
        if options.use_cuts_j2:
            t = {}
            for u in range(U):
                t[self.vc + u] = -1.0
                for j in range(J):
                    t[bv(lay.alpha(u, j))] = -rates[j]
            ineq.append(Row.from_terms(t, (inst.k_admit + 1) * inst.mcs.top_rate))
        prog.add_block(cones.NONNEG, ineq)

        lo_rows = [Row([self.vb + i], [1.0], 0.0) for i in range(lay.nb)]
        up_rows = [Row([self.vb + i], [-1.0], 1.0) for i in range(lay.nb)]
        self.bounds_start = prog.add_block(cones.NONNEG, lo_rows + up_rows)

        for i in range(U + 1):
            off = xoff(i)
            prog.add_block(cones.PSD, [Row([off + k], [1.0]) for k in range(d2)],
                           side=N)

        self.prog = prog
        self.assembled = prog.assemble()

    def root_bounds(self):
        lay = self.lay
        lo = np.zeros(lay.nb, dtype=np.int8)
        up = np.ones(lay.nb, dtype=np.int8)
        if self.options.variant == SDMA:
            up[lay.psi] = 0
        return lo, up

    def solve_node(self, lo, up, tol=None, max_iters=200,
                   static_reg=None) -> cones.SolveResult:
        patch = {}
        for i in range(self.lay.nb):
            if lo[i]:
                patch[self.bounds_start + i] = -float(lo[i])
            if up[i] != 1:
                patch[self.bounds_start + self.lay.nb + i] = float(up[i])
        return self.assembled.solve(tol=tol or self.options.node_tol,
                                    max_iters=max_iters, const_patch=patch,
                                    static_reg=static_reg)

    bits_of = _DwsrTemplate.bits_of
    assignment_from_bits = _DwsrTemplate.assignment_from_bits

    def matrices(self, x: np.ndarray) -> list[np.ndarray]:
        """Lifted matrices [X_1..X_U, X_0] reconstructed as Hermitian."""
        N = self.instance.n_tx
        out = []
        for i in range(self.instance.n_users + 1):
            off = self.vX + i * N * N
            out.append(cones.hermitian_from_packed(x[off:off + N * N], N))
        return out

    def low_rank_polish(self, bits: np.ndarray, objective: float):
        """Re-solve at fixed bits, minimizing power at the achieved objective.

        Interior-point solvers return the max-rank optimum; with slack in
        the budget that inflates the rank-oneness metric artificially, so
        the reported matrices come from the minimum-trace solution instead.
        """
        prog = ConeProgram(self.n_vars, sense="min")
        inst = self.instance
        N, U = inst.n_tx, inst.n_users
        obj = {self.vX + i * N * N + a * N + a: 1.0
               for i in range(U + 1) for a in range(N)}
        prog.set_objective(obj)
        lay = self.lay
        for blk in self.prog.blocks:
            rows = []
            for k in range(blk.size):
                r = self.prog.rows[blk.start + k]
                const = r.const
                if self.bounds_start <= blk.start + k < self.bounds_start + 2 * lay.nb:
                    i = blk.start + k - self.bounds_start
                    const = (-float(bits[i]) if i < lay.nb
                             else float(bits[i - lay.nb]))
                rows.append(Row(r.idx, r.val, const))
            prog.add_block(blk.kind, rows, side=blk.side)
        target = dict(zip(self.prog.obj_coeffs.nonzero()[0].tolist(),
                          self.prog.obj_coeffs[self.prog.obj_coeffs != 0.0]))
        floor = objective - 1e-7 * (1.0 + abs(objective))
        prog.add_block(cones.NONNEG, [Row.from_terms(target, -floor)])
        res = cones.solve(prog, tol=self.options.polish_tol)
        if not res.optimal:
            res = cones.solve(prog, tol=self.options.polish_tol * 100.0,
                              static_reg=1e-7)
        return res

    def extract(self, x: np.ndarray, assignment: BinaryAssignment) -> PrecoderSolution:
        inst = self.instance
        U, N = inst.n_users, inst.n_tx
        mats = self.matrices(x)
        w = np.zeros((U, N), dtype=complex)
        for u in range(U):
            w[u] = principal_component(mats[u])
        m = principal_component(mats[U])
        c = np.clip(x[self.vc:self.vc + U], 0.0, None)
        c[assignment.chi == 0] = 0.0
        if assignment.psi == 0:
            c[:] = 0.0
        rates = np.asarray(inst.mcs.rates)
        priv = assignment.alpha @ rates
        obj = float(np.sum(inst.weights * (priv + c)))
        return PrecoderSolution(w=w, m=m, c=c, private_rates=priv, objective=obj)

    def incumbent_value(self, assignment, precoders) -> float:
        return wsr(self.instance, assignment, precoders.c)


def _bits_of_assignment(lay: _BinLayout, assignment: BinaryAssignment) -> np.ndarray:
    bits = np.zeros(lay.nb, dtype=np.int8)
    U, J = lay.U, lay.J
    for u in range(U):
        bits[lay.chi(u)] = assignment.chi[u]
        bits[lay.mu(u)] = assignment.mu[u]
        for j in range(J):
            bits[lay.alpha(u, j)] = assignment.alpha[u, j]
            bits[lay.pi(u, j)] = assignment.pi[u, j]
    bits[lay.psi] = assignment.psi
    for j in range(J):
        bits[lay.kappa(j)] = assignment.kappa[j]
    return bits


# --------------------------------------------------------------------------
# branch and bound
# --------------------------------------------------------------------------


@dataclass
class _Node:
    lo: np.ndarray
    up: np.ndarray
    bound: float
    depth: int


def _branch_and_bound(template, options: MisocpOptions,
                      early_stop_ceiling: Optional[float] = None,
                      warm_bits: Optional[np.ndarray] = None,
                      fixed_admission: Optional[tuple] = None):
    """Maximize over the bits; returns (status, x, assignment, precoders,
    incumbent value, stats, achieved relative gap)."""
    t0 = time.monotonic()
    stats = BnBStats()
    lay = template.lay
    inst = template.instance
    exact = inst.admission_mode == EXACT_K
    big = math.inf

    lo0, up0 = template.root_bounds()
    if fixed_admission is not None:
        chosen = set(fixed_admission)
        for u in range(lay.U):
            if u in chosen:
                lo0[lay.chi(u)] = 1
            else:
                up0[lay.chi(u)] = 0
    best_val = -big
    best = None           # (x, assignment, precoders)
    counter = itertools.count()
    heap: list = []
    pseudo: dict[int, tuple[float, int]] = {}

    if warm_bits is not None:
        wb = np.asarray(warm_bits, dtype=np.int8)
        wres = template.solve_node(wb, wb, tol=options.polish_tol)
        stats.nodes_explored += 1
        if wres.status == cones.OPTIMAL:
            assign = template.assignment_from_bits(wb)
            prec = template.extract(wres.primal, assign)
            best_val = template.incumbent_value(assign, prec)
            best = (wres.primal, assign, prec)
            stats.incumbent_updates += 1

    def prune_cut():
        if best is None:
            return -big
        return best_val + options.rel_gap * max(1.0, abs(best_val))

    def push(node: _Node):
        if options.node_selection == "best-bound":
            heapq.heappush(heap, (-node.bound, next(counter), node))
        else:
            heap.append((node.depth, next(counter), node))

    def pop() -> _Node:
        if options.node_selection == "best-bound":
            return heapq.heappop(heap)[2]
        return heap.pop()[2]

    lo0 = lo0.copy().astype(np.int8)
    up0 = up0.copy().astype(np.int8)
    if not _propagate_bits(lay, lo0, up0, inst.k_admit, exact):
        return ("infeasible", None, None, None, -big, stats, math.inf)
    push(_Node(lo0, up0, big, 0))

    status = "optimal"
    while heap:
        if stats.nodes_explored >= options.node_limit:
            status = "limit"
            break
        if options.time_limit is not None and time.monotonic() - t0 > options.time_limit:
            status = "limit"
            break
        node = pop()
        if node.bound <= prune_cut():
            stats.nodes_pruned += 1
            continue
        res = template.solve_node(node.lo, node.up)
        stats.nodes_explored += 1
        if res.status == cones.INFEASIBLE:
            stats.nodes_pruned += 1
            continue
        if res.status not in (cones.OPTIMAL,):
            res = template.solve_node(node.lo, node.up,
                                      tol=options.node_tol * 10.0,
                                      static_reg=1e-7)
            if res.status == cones.INFEASIBLE:
                stats.nodes_pruned += 1
                continue
            if res.status != cones.OPTIMAL:
                # undecided: keep exploring below with the parent bound
                res = None
        if res is not None:
            bound = res.objective_value + BOUND_PAD_REL * (1.0 + abs(res.objective_value))
            bound = min(bound, node.bound)
        else:
            bound = node.bound
        if bound <= prune_cut():
            stats.nodes_pruned += 1
            continue

        frac_i = -1
        if res is not None:
            bits = template.bits_of(res.primal)
            fracs = np.minimum(bits - node.lo, node.up - bits)
            fracs = np.minimum(fracs, np.abs(bits - np.rint(bits)))
            cand = np.where((node.lo == 0) & (node.up == 1))[0]
            if cand.size and float(np.max(fracs[cand])) > INT_TOL:
                scores = fracs[cand]
                if options.branching == "pseudo-cost":
                    hist = np.array([
                        pseudo.get(int(i), (1.0, 1))[0] / pseudo.get(int(i), (1.0, 1))[1]
                        for i in cand])
                    scores = scores * hist
                frac_i = int(cand[int(np.argmax(scores))])
            if frac_i < 0:
                # integral node: polish with the bits pinned, then record
                rbits = np.rint(bits).astype(np.int8)
                plo, pup = rbits.copy(), rbits.copy()
                pres = template.solve_node(plo, pup, tol=options.polish_tol)
                use = pres if pres.status == cones.OPTIMAL else res
                assign = template.assignment_from_bits(rbits)
                prec = template.extract(use.primal, assign)
                val = template.incumbent_value(assign, prec)
                if val > best_val + 1e-12:
                    best_val = val
                    best = (use.primal, assign, prec)
                    stats.incumbent_updates += 1
                    ceil_tol = (options.rel_gap * max(1.0, abs(early_stop_ceiling))
                                if early_stop_ceiling is not None else 0.0)
                    if (early_stop_ceiling is not None
                            and best_val >= early_stop_ceiling - ceil_tol):
                        stats.early_stop_hit = True
                        break
                continue
        else:
            cand = np.where((node.lo == 0) & (node.up == 1))[0]
            if not cand.size:
                stats.nodes_pruned += 1
                continue
            frac_i = int(cand[0])

        for fix in (0, 1):
            clo, cup = node.lo.copy(), node.up.copy()
            clo[frac_i] = cup[frac_i] = fix
            if not _propagate_bits(lay, clo, cup, inst.k_admit, exact):
                continue
            if options.branching == "pseudo-cost" and res is not None:
                d, n = pseudo.get(frac_i, (1.0, 1))
                pseudo[frac_i] = (d + abs(bits[frac_i] - fix), n + 1)
            push(_Node(clo, cup, bound, node.depth + 1))

    stats.wallclock = time.monotonic() - t0
    if best is None:
        st = "infeasible" if status == "optimal" else status
        return (st, None, None, None, -big, stats, math.inf)
    open_bound = best_val
    for entry in heap:
        open_bound = max(open_bound, entry[2].bound)
    if stats.early_stop_hit and early_stop_ceiling is not None:
        open_bound = min(open_bound, early_stop_ceiling)
    achieved = (open_bound - best_val) / max(1.0, abs(best_val))
    if status == "optimal" and achieved > options.rel_gap:
        status = "limit"
    x, assign, prec = best
    return (status, x, assign, prec, best_val, stats, max(achieved, 0.0))


# --------------------------------------------------------------------------
# public solvers
# --------------------------------------------------------------------------


def build_dwsr_relaxation(instance: SystemInstance,
                          fixings: Optional[dict[str, np.ndarray]] = None,
                          options: Optional[MisocpOptions] = None) -> ConeProgram:
    """Cone program of the root (or partially fixed) relaxation.

    fixings maps bit-group names (chi, mu, psi, alpha, kappa, pi) to arrays
    with entries in {0, 1, -1}, -1 meaning free.  The returned program pins
    the fixed bits through their box rows.
    """
    options = options or MisocpOptions()
    tpl = _DwsrTemplate(instance, options)
    lo, up = tpl.root_bounds()
    lay = tpl.lay
    if fixings:
        def apply(name, idx_fun, shape):
            arr = np.asarray(fixings.get(name, -np.ones(shape)), dtype=int)
            for pos, v in np.ndenumerate(arr):
                if v >= 0:
                    i = idx_fun(*pos) if isinstance(pos, tuple) and len(pos) > 1 else idx_fun(pos[0])
                    lo[i] = up[i] = v
        U, J = lay.U, lay.J
        apply("chi", lay.chi, (U,))
        apply("mu", lay.mu, (U,))
        apply("alpha", lay.alpha, (U, J))
        apply("kappa", lay.kappa, (J,))
        apply("pi", lay.pi, (U, J))
        if "psi" in fixings and int(fixings["psi"]) >= 0:
            lo[lay.psi] = up[lay.psi] = int(fixings["psi"])
    # rebuild as a standalone program with the bounds baked in
    prog = ConeProgram(tpl.n_vars, sense=tpl.prog.sense)
    prog.set_objective(tpl.prog.obj_coeffs.copy(), tpl.prog.obj_const)
    for blk in tpl.prog.blocks:
        rows = []
        for k in range(blk.size):
            r = tpl.prog.rows[blk.start + k]
            const = r.const
            if blk.start + k >= tpl.bounds_start and blk.start + k < tpl.bounds_start + 2 * lay.nb:
                i = blk.start + k - tpl.bounds_start
                const = -float(lo[i]) if i < lay.nb else float(up[i - lay.nb])
            rows.append(Row(r.idx.copy(), r.val.copy(), const))
        prog.add_block(blk.kind, rows, side=blk.side)
    return prog


def solve_dwsr(instance: SystemInstance,
               options: Optional[MisocpOptions] = None,
               fixed_admission: Optional[tuple] = None) -> MisocpSolution:
    """Globally optimal weighted sum rate with discrete rates.

    fixed_admission pins the admitted-user set (the random-admission
    baseline); all remaining bits stay free.
    """
    options = options or MisocpOptions()
    tpl = _DwsrTemplate(instance, options)
    ceiling = weighted_rate_ceiling(instance) if options.use_cuts_j2 else None
    status, x, assign, prec, val, stats, gap = _branch_and_bound(
        tpl, options, ceiling, fixed_admission=fixed_admission)
    if assign is None:
        return MisocpSolution(status, None, None, -math.inf, stats, gap)
    return MisocpSolution(status, assign, prec, val, stats, gap)


def solve_dwee(instance: SystemInstance,
               options: Optional[MisocpOptions] = None,
               fixed_admission: Optional[tuple] = None) -> MisocpSolution:
    """Weighted energy efficiency via the parametric ratio iteration.

    Each pass maximizes rate - lam * total power as a MISOCP (transmit power
    enters through a rotated-cone epigraph); lam is updated to the achieved
    ratio and the iteration stops when the parametric optimum drops to the
    tolerance, at which point lam is the global optimum of the ratio.
    """
    options = options or MisocpOptions()
    if instance.p_cir <= 0.0:
        raise ValueError("energy-efficiency objective needs positive circuit power")
    trace = DinkelbachTrace()
    lam = 0.0
    best: Optional[MisocpSolution] = None
    stats_total = BnBStats()
    warm = None
    for _ in range(options.dinkelbach_max_iters):
        tpl = _DwsrTemplate(instance, options, lam=lam)
        status, x, assign, prec, val, stats, gap = _branch_and_bound(
            tpl, options, warm_bits=warm, fixed_admission=fixed_admission)
        stats_total.nodes_explored += stats.nodes_explored
        stats_total.nodes_pruned += stats.nodes_pruned
        stats_total.incumbent_updates += stats.incumbent_updates
        stats_total.wallclock += stats.wallclock
        if assign is None:
            return MisocpSolution(status, None, None, -math.inf, stats_total, gap,
                                  dinkelbach=trace)
        warm = _bits_of_assignment(tpl.lay, assign)
        rate = wsr(instance, assign, prec.c)
        total_power = prec.tx_power() / instance.power.eta_eff + instance.p_cir
        resid = rate - lam * total_power
        trace.lams.append(lam)
        trace.residuals.append(resid)
        best = MisocpSolution(status, assign, prec, lam, stats_total, gap,
                              dinkelbach=trace)
        if resid <= options.dinkelbach_tol:
            return best
        lam = rate / total_power
    trace.converged = False
    best.objective = lam
    return best


def dinkelbach_value(instance: SystemInstance, lam: float,
                     options: Optional[MisocpOptions] = None) -> float:
    """max rate - lam * total power; the parametric residual at lam."""
    options = options or MisocpOptions()
    tpl = _DwsrTemplate(instance, options, lam=lam)
    status, x, assign, prec, val, stats, gap = _branch_and_bound(tpl, options)
    if assign is None:
        return -math.inf
    rate = wsr(instance, assign, prec.c)
    total_power = prec.tx_power() / instance.power.eta_eff + instance.p_cir
    return rate - lam * total_power


def sdr_upper_bound(instance: SystemInstance,
                    options: Optional[MisocpOptions] = None):
    """Rank-relaxed upper bound and the rank-oneness of its solution.

    Returns (bound, lambda_metric, solution).  The bound dominates the
    discrete-rate optimum because the lifted SINR constraints are the exact
    ones and the rank restriction is dropped.
    """
    options = options or MisocpOptions()
    tpl = _SdrTemplate(instance, options)
    ceiling = weighted_rate_ceiling(instance) if options.use_cuts_j2 else None
    status, x, assign, prec, val, stats, gap = _branch_and_bound(tpl, options, ceiling)
    if assign is None:
        return (math.inf if status == "limit" else -math.inf, None,
                MisocpSolution(status, None, None, -math.inf, stats, gap))
    bound = val * (1.0 + gap) if status == "limit" else val
    bits = _bits_of_assignment(tpl.lay, assign)
    polish = tpl.low_rank_polish(bits, val)
    mats = tpl.matrices(polish.primal if polish.optimal else x)
    lam_metric = rank_oneness(mats, trace_tol=1e-6 * max(1.0, instance.power.p_tx_max))
    sol = MisocpSolution(status, assign, prec, bound, stats, gap)
    return bound, lam_metric, sol


def brute_force_dwsr(instance: SystemInstance,
                     options: Optional[MisocpOptions] = None,
                     guard: int = 1_000_000) -> MisocpSolution:
    """Enumerate every valid bit pattern and keep the best fixed-bit SOCP.

    Independent of the branch-and-bound path; used as the optimality oracle
    at small sizes.  Rejects instances whose pattern count exceeds guard.
    """
    options = options or MisocpOptions()
    U, J, K = instance.n_users, instance.mcs.J, instance.k_admit
    exact = instance.admission_mode == EXACT_K
    sizes = [K] if exact else list(range(0, K + 1))

    def count() -> int:
        total = 0
        for s in sizes:
            n_chi = math.comb(U, s)
            per_mu = sum(math.comb(s, r) * (J ** r) for r in range(s + 1))
            psis = 1 + (J if options.variant == RSMA else 0)
            total += n_chi * per_mu * psis
        return total

    n_patterns = count()
    if n_patterns > guard:
        raise ValueError(f"enumeration too large: {n_patterns} > {guard}")

    tpl = _DwsrTemplate(instance, options)
    lay = tpl.lay
    t0 = time.monotonic()
    stats = BnBStats()
    best_val = -math.inf
    best = None
    psi_choices = [(0, None)]
    if options.variant == RSMA:
        psi_choices += [(1, j) for j in range(J)]
    for s in sizes:
        for chi_set in itertools.combinations(range(U), s):
            for r in range(s + 1):
                for mu_set in itertools.combinations(chi_set, r):
                    for alpha_pick in itertools.product(range(J), repeat=r):
                        for psi, kj in psi_choices:
                            lo = np.zeros(lay.nb, dtype=np.int8)
                            up = np.zeros(lay.nb, dtype=np.int8)
                            for u in chi_set:
                                lo[lay.chi(u)] = up[lay.chi(u)] = 1
                            for u, j in zip(mu_set, alpha_pick):
                                lo[lay.mu(u)] = up[lay.mu(u)] = 1
                                lo[lay.alpha(u, j)] = up[lay.alpha(u, j)] = 1
                            if psi:
                                lo[lay.psi] = up[lay.psi] = 1
                                lo[lay.kappa(kj)] = up[lay.kappa(kj)] = 1
                                for u in chi_set:
                                    lo[lay.pi(u, kj)] = up[lay.pi(u, kj)] = 1
                            res = tpl.solve_node(lo, up, tol=options.polish_tol)
                            stats.nodes_explored += 1
                            if res.status != cones.OPTIMAL:
                                continue
                            assign = tpl.assignment_from_bits(lo)  # bits are pinned
                            prec = tpl.extract(res.primal, assign)
                            val = wsr(instance, assign, prec.c)
                            if val > best_val + 1e-12:
                                best_val = val
                                best = (assign, prec)
                                stats.incumbent_updates += 1
    stats.wallclock = time.monotonic() - t0
    if best is None:
        return MisocpSolution("infeasible", None, None, -math.inf, stats, math.inf)
    assign, prec = best
    return MisocpSolution("optimal", assign, prec, best_val, stats, 0.0)


@dataclass(frozen=True)
class MisocpComplexity:
    n_v: int
    n_c: int
    n_d: int
    n_p_all: int


def worst_case_complexity_misocp(U: int, K: int, J: int, n_tx: int) -> MisocpComplexity:
    """Closed-form worst-case sizes of the discrete-rate pipeline."""
    if min(U, K, J, n_tx) < 1 or K > U:
        raise ValueError("need U, K, J, N_tx >= 1 and K <= U")
    n_v = (U + 1) * n_tx + U
    n_c = 5 * U * J + 7 * U + 4
    n_d = (2 * J * n_tx * U * U + U * U + 3 * U * J + 7 * U
           + 2 * U * n_tx + 2 * n_tx)
    n_p_all = math.comb(U, K) * sum(
        math.comb(K, m) * J ** (K + 1 - m) for m in range(K + 1))
    return MisocpComplexity(n_v, n_c, n_d, n_p_all)
