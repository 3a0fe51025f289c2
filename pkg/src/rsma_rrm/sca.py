"""Continuous-rate solvers: subset enumeration plus an iterative SDP.

Admitted-user subsets are enumerated outright; each subset's nonconvex
beamforming problem is lifted to positive-semidefinite beam matrices with
sublevel/superlevel auxiliaries (gamma: 1 + private SINR lower bound, rho:
private interference upper bound, tau/lambda: the common-signal analogs) and
solved by repeated convex approximation:

* bilinear products such as gamma * rho are replaced by weighted
  arithmetic-geometric-mean overestimates whose weight is refitted at the
  previous iterate, where the overestimate is exact;
* rank-one restrictions on the beam matrices become penalty slacks bounding
  the matrix mass inside the eigen-subspace complementary to the previous
  principal direction, with geometrically growing penalty weights;
* concave log2 terms are kept conic by chordal (secant) lower bounds over a
  per-user SINR interval, refined each iteration at the incumbent point, so
  the surrogate is tight at the converged iterate and never overclaims rate.

The loop yields a nondecreasing objective sequence; converged matrices are
deflated to beams by principal eigenpairs and the continuous rates can be
projected onto the MCS grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import cones
from .cones import ConeProgram, Row
from .model import (
    AT_MOST_K,
    EXACT_K,
    PrecoderSolution,
    SystemInstance,
    sinr_common,
    sinr_private,
)

WSR = "wsr"
WEE = "wee"


@dataclass(frozen=True)
class ScaConfig:
    epsilon: float = 1e-4          # objective-stall stopping threshold
    n_iter_max: int = 120
    p_init: float = 0.01
    p_inc: float = 4.0
    p_max: float = 1000.0
    psi0: int = 1                  # 1: try the common signal too; 0: never
    rank_tol: float = 0.999        # principal-eigenvalue share for acceptance
    solve_tol: float = 1e-8
    base_grid: int = 24            # log-spaced chord breakpoints per user

    def __post_init__(self):
        if self.epsilon <= 0 or self.p_inc <= 1.0 or self.p_max < self.p_init:
            raise ValueError("bad SCA parameters")
        if self.psi0 not in (0, 1):
            raise ValueError("psi0 must be 0 or 1")
        if self.base_grid < 2:
            raise ValueError("need at least two chord breakpoints")


@dataclass
class ScaState:
    """Mutable per-subset iteration state of the convex approximations."""

    gamma: np.ndarray
    rho: np.ndarray
    tau: np.ndarray
    lam: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    omega3: float
    penalties: np.ndarray          # per member, then the common slot
    T: list                        # trailing eigen-bases of the beam matrices
    T0: Optional[np.ndarray]
    theta: float = 1.0
    delta: float = 1.0


@dataclass
class SubsetSolution:
    subset: tuple
    psi0: int
    converged: bool
    iterations: int
    objective: float                      # final surrogate objective
    trace: list                           # (iter, objective, penalty_term, rank_oneness)
    W: list = field(default_factory=list)  # lifted private matrices (subset order)
    M: Optional[np.ndarray] = None
    precoders: Optional[PrecoderSolution] = None   # recovered, full-U arrays
    c: Optional[np.ndarray] = None                 # full-U common split
    gamma: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    evaluated_objective: float = -math.inf         # re-evaluated on recovery
    private_rates: Optional[np.ndarray] = None     # log2(1+SINR) of recovery
    projected_private: Optional[np.ndarray] = None
    projected_c: Optional[np.ndarray] = None
    projected_objective: float = -math.inf
    worst_tol: float = 1e-8        # loosest subproblem tolerance actually used
    error: Optional[str] = None

    @property
    def usable(self) -> bool:
        return self.error is None


def enumerate_subsets(U: int, K: int) -> list[tuple]:
    """All K-subsets of range(U) in lexicographic order."""
    if not 1 <= K <= U:
        raise ValueError("need 1 <= K <= U")
    return list(itertools.combinations(range(U), K))


def principal_component(mat: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """sqrt(largest eigenvalue) times the principal eigenvector; 0 for ~0."""
    vals, vecs = np.linalg.eigh(mat)
    lead = float(vals[-1])
    if lead <= tol * max(1.0, abs(float(np.trace(mat).real))):
        return np.zeros(mat.shape[0], dtype=complex)
    return math.sqrt(lead) * vecs[:, -1]


def recover_precoders(M: Optional[np.ndarray], W: Sequence[np.ndarray]):
    """Principal eigenpair deflation of the lifted matrices.

    Returns (m, [w_u], discarded) where discarded lists the eigenvalue mass
    dropped from each matrix (common last).
    """
    ws, discarded = [], []
    for mat in W:
        v = principal_component(mat)
        ws.append(v)
        discarded.append(float(np.trace(mat).real) - float(np.vdot(v, v).real))
    if M is None:
        return np.zeros(0, dtype=complex), ws, discarded + [0.0]
    vals = np.linalg.eigvalsh(M)
    if vals.size and vals[0] < -1e-6 * max(1.0, float(np.trace(M).real)):
        raise ValueError("matrix is not positive semidefinite within tolerance")
    m = principal_component(M)
    discarded.append(float(np.trace(M).real) - float(np.vdot(m, m).real))
    return m, ws, discarded


def rank_oneness(matrices, trace_tol: float = 1e-9) -> Optional[float]:
    """Mean principal-eigenvalue share over the nonzero PSD matrices."""
    ratios = []
    for mat in matrices:
        tr = float(np.trace(np.asarray(mat)).real)
        if tr <= trace_tol:
            continue
        vals = np.linalg.eigvalsh(np.asarray(mat))
        ratios.append(float(vals[-1]) / float(np.sum(np.abs(vals))))
    if not ratios:
        return None
    return float(np.mean(ratios))


def _chords(grid: np.ndarray) -> list[tuple[float, float]]:
    """(intercept, slope) of the log2 secants over consecutive breakpoints."""
    out = []
    for a, b in zip(grid, grid[1:]):
        if b - a <= 1e-12:
            continue
        slope = (math.log2(b) - math.log2(a)) / (b - a)
        out.append((math.log2(a) - slope * a, slope))
    if not out:
        out.append((0.0, 0.0))     # degenerate interval: log2(1) = 0
    return out


def _orth_complement(vecs: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the complement of the given column span."""
    n = vecs.shape[0]
    u, _, _ = np.linalg.svd(np.atleast_2d(vecs.reshape(n, -1)), full_matrices=True)
    k = np.linalg.matrix_rank(np.atleast_2d(vecs.reshape(n, -1)), tol=1e-10)
    return u[:, k:]

def _trailing_basis(mat: np.ndarray) -> np.ndarray:
    """Eigenvectors of all but the largest eigenvalue."""
    _, vecs = np.linalg.eigh(mat)
    return vecs[:, :-1]


class _SubsetProgram:
    """One convex iteration program for a fixed subset and state."""

    def __init__(self, instance: SystemInstance, subset, psi0: int,
                 objective: str, state: ScaState,
                 grids_g: list[np.ndarray], grids_t: list[np.ndarray]):
        inst = instance
        K = len(subset)
        N = inst.n_tx
        d2 = N * N
        P = inst.power.p_tx_max
        self.K, self.N, self.psi0, self.objective = K, N, psi0, objective
        wts = inst.weights[list(subset)]
        hs = [inst.channels[u] for u in subset]
        with_pen = N >= 2
        self.with_pen = with_pen

        alloc = itertools.count()
        def take(n):
            first = next(alloc)
            for _ in range(n - 1):
                next(alloc)
            return first
        self.offW = [take(d2) for _ in range(K)]
        self.offM = take(d2) if psi0 else None
        self.c = take(K) if psi0 else None
        self.gamma = take(K)
        self.rho = take(K)
        self.s = take(K)
        if psi0:
            self.tau = take(K)
            self.lamv = take(K)
            self.t = take(K)
        self.beta = take(1)
        self.zeta = take(K + psi0) if with_pen else None
        if objective == WEE:
            self.theta = take(1)
            self.delta = take(1)
        n_vars = next(alloc)

        prog = ConeProgram(n_vars, sense="max")
        obj: dict[int, float] = {}
        head = self.beta if objective == WSR else self.theta
        obj[head] = 1.0
        if with_pen:
            for i in range(K + psi0):
                obj[self.zeta + i] = -float(state.penalties[i])
        prog.set_objective(obj)

        quad = cones.packed_quadratic_terms

        # nonnegative rows
        rows = []
        tr = {}
        for u in range(K):
            for a in range(N):
                tr[self.offW[u] + a * N + a] = -1.0
        if psi0:
            for a in range(N):
                tr[self.offM + a * N + a] = -1.0
        rows.append(Row.from_terms(dict(tr), P))                    # power budget
        if psi0:
            rows.append(Row.from_terms(
                {self.offM + a * N + a: -1.0 for a in range(N)}, P))
        dsic2 = inst.delta_sic ** 2
        for u in range(K):
            t = {self.rho + u: 1.0}
            if psi0 and dsic2 > 0.0:
                for k, v in quad(hs[u], self.offM, dsic2).items():
                    t[k] = t.get(k, 0.0) - v
            for i in range(K):
                if i != u:
                    for k, v in quad(hs[u], self.offW[i]).items():
                        t[k] = t.get(k, 0.0) - v
            rows.append(Row.from_terms(t, -inst.sigma2))            # interference cap
            if psi0:
                t = {self.lamv + u: 1.0}
                for i in range(K):
                    for k, v in quad(hs[u], self.offW[i]).items():
                        t[k] = t.get(k, 0.0) - v
                rows.append(Row.from_terms(t, -inst.sigma2))
        for u in range(K):
            gmax = float(grids_g[u][-1])
            rows.append(Row([self.gamma + u], [1.0], -1.0))
            rows.append(Row([self.gamma + u], [-1.0], gmax))
            for icpt, slope in _chords(grids_g[u]):
                rows.append(Row([self.s + u, self.gamma + u], [-1.0, slope], icpt))
            if psi0:
                tmax = float(grids_t[u][-1])
                rows.append(Row([self.tau + u], [1.0], -1.0))
                rows.append(Row([self.tau + u], [-1.0], tmax))
                for icpt, slope in _chords(grids_t[u]):
                    rows.append(Row([self.t + u, self.tau + u], [-1.0, slope], icpt))
        t = {self.beta: -1.0}
        for u in range(K):
            t[self.s + u] = wts[u]
            if psi0:
                t[self.c + u] = wts[u]
        rows.append(Row.from_terms(t))                              # rate floor of the objective
        for u in range(K):
            if psi0:
                t = {self.t + u: 1.0}
                for i in range(K):
                    t[self.c + i] = -1.0
                rows.append(Row.from_terms(t))                      # common pool vs per-user decode
                rows.append(Row([self.c + u], [1.0]))
            if inst.r_min > 0.0:
                t = {self.s + u: 1.0}
                if psi0:
                    t[self.c + u] = 1.0
                rows.append(Row.from_terms(t, -inst.r_min))
        rows.append(Row([self.beta], [1.0]))
        if objective == WEE:
            t = {self.delta: inst.power.eta_eff}
            for u in range(K):
                for a in range(N):
                    t[self.offW[u] + a * N + a] = -1.0
            if psi0:
                for a in range(N):
                    t[self.offM + a * N + a] = -1.0
            rows.append(Row.from_terms(t))                          # amplifier draw cap
            rows.append(Row([self.theta], [1.0]))
        prog.add_block(cones.NONNEG, rows)

        # AM-GM surrogates of the bilinear sublevel products
        for u in range(K):
            om = float(state.omega1[u])
            x1 = Row.from_terms({**{k: 0.5 * v for k, v in quad(hs[u], self.offW[u]).items()},
                                 self.rho + u: 0.5})
            prog.add_block(cones.RSOC, [
                x1, Row([], [], 1.0),
                Row([self.gamma + u], [math.sqrt(om / 2.0)]),
                Row([self.rho + u], [math.sqrt(1.0 / (2.0 * om))]),
            ])
        if psi0:
            for u in range(K):
                om = float(state.omega2[u])
                x1 = Row.from_terms({**{k: 0.5 * v for k, v in quad(hs[u], self.offM).items()},
                                     self.lamv + u: 0.5})
                prog.add_block(cones.RSOC, [
                    x1, Row([], [], 1.0),
                    Row([self.tau + u], [math.sqrt(om / 2.0)]),
                    Row([self.lamv + u], [math.sqrt(1.0 / (2.0 * om))]),
                ])
        if objective == WEE:
            om = float(state.omega3)
            x1 = Row.from_terms({self.beta: 0.5, self.theta: -0.5 * inst.p_cir})
            prog.add_block(cones.RSOC, [
                x1, Row([], [], 1.0),
                Row([self.theta], [math.sqrt(om / 2.0)]),
                Row([self.delta], [math.sqrt(1.0 / (2.0 * om))]),
            ])

        # beam matrices and the trailing-subspace penalty blocks
        basis = cones.packed_basis(N)
        for u in range(K):
            prog.add_block(cones.PSD,
                           [Row([self.offW[u] + q], [1.0]) for q in range(d2)], side=N)
        if psi0:
            prog.add_block(cones.PSD,
                           [Row([self.offM + q], [1.0]) for q in range(d2)], side=N)
        if with_pen:
            for u in range(K):
                self._penalty_block(prog, basis, state.T[u], self.offW[u], self.zeta + u)
            if psi0:
                self._penalty_block(prog, basis, state.T0, self.offM, self.zeta + K)
        self.prog = prog

    @staticmethod
    def _penalty_block(prog, basis, T, off, zvar):
        """zeta I - T^H X T >= 0 over the packed entries of X."""
        n1 = T.shape[1]
        S = np.einsum("ia,qik,kb->qab", np.conj(T), basis, T)
        coeff = -(S.real + S.imag)      # packed coefficients of -(T^H X T)
        rows = []
        for a in range(n1):
            for b in range(n1):
                t = {}
                for q in range(coeff.shape[0]):
                    v = coeff[q, a, b]
                    if abs(v) > 1e-14:
                        t[off + q] = v
                if a == b:
                    t[zvar] = t.get(zvar, 0.0) + 1.0
                rows.append(Row.from_terms(t))
        prog.add_block(cones.PSD, rows, side=n1)

    def unpack(self, x: np.ndarray):
        N, K = self.N, self.K
        W = [cones.hermitian_from_packed(x[o:o + N * N], N) for o in self.offW]
        M = (cones.hermitian_from_packed(x[self.offM:self.offM + N * N], N)
             if self.psi0 else None)
        out = {
            "W": W, "M": M,
            "gamma": x[self.gamma:self.gamma + K].copy(),
            "rho": x[self.rho:self.rho + K].copy(),
            "s": x[self.s:self.s + K].copy(),
            "beta": float(x[self.beta]),
            "c": (np.clip(x[self.c:self.c + K], 0.0, None)
                  if self.psi0 else np.zeros(K)),
            "tau": (x[self.tau:self.tau + K].copy() if self.psi0 else np.ones(K)),
            "lam": (x[self.lamv:self.lamv + K].copy() if self.psi0 else np.ones(K)),
            "zeta": (np.clip(x[self.zeta:self.zeta + K + self.psi0], 0.0, None)
                     if self.with_pen else np.zeros(K + self.psi0)),
        }
        if self.objective == WEE:
            out["theta"] = float(x[self.theta])
            out["delta"] = float(x[self.delta])
        return out


def _noise_normalized(instance: SystemInstance) -> SystemInstance:
    """Rescale channels by the noise deviation so sigma2 becomes 1.

    All SINRs, rates and precoder powers are invariant under h -> h/sigma,
    sigma2 -> 1, but the surrogate state initialization at unit values only
    makes sense when interference-plus-noise levels are O(1).
    """
    if instance.sigma2 == 1.0:
        return instance
    sigma = math.sqrt(instance.sigma2)
    return SystemInstance(
        channels=instance.channels / sigma, sigma2=1.0, power=instance.power,
        k_admit=instance.k_admit, weights=instance.weights,
        delta_sic=instance.delta_sic, r_min=instance.r_min, mcs=instance.mcs,
        admission_mode=instance.admission_mode)


def default_state(instance: SystemInstance, subset, psi0: int,
                  config: Optional[ScaConfig] = None) -> ScaState:
    """Iteration-one state: unit scalars, channel-orthogonal eigen bases."""
    config = config or ScaConfig()
    subset = tuple(sorted(subset))
    hs = [instance.channels[u] for u in subset]
    ones = np.ones(len(subset))
    return ScaState(
        gamma=ones.copy(), rho=ones.copy(), tau=ones.copy(), lam=ones.copy(),
        omega1=ones.copy(), omega2=ones.copy(), omega3=1.0,
        penalties=np.full(len(subset) + psi0, config.p_init),
        T=[_orth_complement(h) for h in hs],
        T0=(_orth_complement(np.linalg.svd(np.stack(hs, axis=1))[0][:, :1])
            if psi0 else None),
    )


def _sinr_cap_grids(instance: SystemInstance, subset, n_points: int):
    caps = [1.0 + instance.power.p_tx_max
            * float(np.sum(np.abs(instance.channels[u]) ** 2)) / instance.sigma2
            for u in subset]
    grids = []
    for cap in caps:
        if cap <= 1.0 + 1e-12:
            grids.append(np.array([1.0]))
        else:
            grids.append(np.geomspace(1.0, cap, n_points))
    return grids


def build_cwsr_sdp(instance: SystemInstance, subset, state: ScaState,
                   psi0: int, objective: str = WSR,
                   config: Optional[ScaConfig] = None) -> ConeProgram:
    """One iteration's convex program for the given surrogate state.

    The log2 terms are represented by their chordal lower bounds over the
    per-user SINR interval implied by the power budget.
    """
    config = config or ScaConfig()
    subset = tuple(sorted(subset))
    work = _noise_normalized(instance)
    grids = _sinr_cap_grids(work, subset, config.base_grid)
    sp = _SubsetProgram(work, subset, psi0, objective, state,
                        grids, [g.copy() for g in grids])
    return sp.prog


def _insert_point(grid: np.ndarray, value: float) -> np.ndarray:
    # near-duplicate breakpoints give nearly parallel chord rows, which
    # degrade the interior-point KKT system without buying accuracy
    lo, hi = grid[0], grid[-1]
    v = min(max(value, lo), hi)
    if np.min(np.abs(grid - v)) <= 1e-4 * max(1.0, v):
        return grid
    return np.sort(np.append(grid, v))


def sca_iterate(instance: SystemInstance, subset, psi0: int,
                config: Optional[ScaConfig] = None,
                objective: str = WSR) -> SubsetSolution:
    """Run the convex-approximation loop for one admitted subset.

    Stops when the surrogate objective stalls within epsilon or the
    iteration cap is reached; `converged` additionally requires every
    nonzero beam matrix to be rank-one within rank_tol.
    """
    config = config or ScaConfig()
    subset = tuple(sorted(subset))
    inst = instance
    work = _noise_normalized(instance)   # solver-side units; outputs invariant
    K, N, U = len(subset), inst.n_tx, inst.n_users
    P = inst.power.p_tx_max

    grids_g = _sinr_cap_grids(work, subset, config.base_grid)
    grids_t = [g.copy() for g in grids_g]
    state = default_state(work, subset, psi0, config)

    trace = []
    prev_obj = 0.0
    converged_obj = False
    last = None
    iterations = 0
    worst_tol = config.solve_tol
    for it in range(1, config.n_iter_max + 1):
        iterations = it
        sp = _SubsetProgram(work, subset, psi0, objective, state, grids_g, grids_t)
        res = None
        # retries regularize the KKT system: penalty blocks go degenerate
        # as both the slack and the trailing eigenvalues vanish
        for tol, reg in ((config.solve_tol, None),
                         (config.solve_tol, 1e-7),
                         (config.solve_tol * 100.0, 1e-6)):
            res = cones.solve(sp.prog, tol=tol, static_reg=reg)
            if res.optimal:
                # regularization perturbs the optimum by O(reg) as well
                worst_tol = max(worst_tol, tol if reg is None else max(tol, reg))
                break
        if not res.optimal:
            return SubsetSolution(
                subset=subset, psi0=psi0, converged=False, iterations=it,
                objective=-math.inf, trace=trace, worst_tol=worst_tol,
                error=f"subproblem {res.status} at iteration {it}")
        last = sp.unpack(res.primal)
        obj_t = last["beta"] if objective == WSR else last["theta"]
        pen_t = float(state.penalties @ last["zeta"])
        mats = list(last["W"]) + ([last["M"]] if psi0 else [])
        lam_metric = rank_oneness(mats, trace_tol=1e-6 * max(1.0, P))
        trace.append((it, obj_t, pen_t, lam_metric))
        converged_obj = abs(obj_t - prev_obj) < config.epsilon
        prev_obj = obj_t
        if converged_obj:
            break
        guard = last["gamma"] >= 1.0 + 1e-9
        state.omega1 = np.where(guard, last["rho"] / np.maximum(last["gamma"], 1.0),
                                state.omega1)
        if psi0:
            guard_t = last["tau"] >= 1.0 + 1e-9
            state.omega2 = np.where(guard_t, last["lam"] / np.maximum(last["tau"], 1.0),
                                    state.omega2)
        if objective == WEE and last["theta"] >= 1e-9:
            state.omega3 = last["delta"] / last["theta"]
        state.penalties = np.minimum(state.penalties * config.p_inc, config.p_max)
        if sp.with_pen:
            state.T = [_trailing_basis(Wu) for Wu in last["W"]]
            if psi0:
                state.T0 = _trailing_basis(last["M"])
        for u in range(K):
            grids_g[u] = _insert_point(grids_g[u], float(last["gamma"][u]))
            if psi0:
                grids_t[u] = _insert_point(grids_t[u], float(last["tau"][u]))
        state.gamma, state.rho = last["gamma"], last["rho"]
        state.tau, state.lam = last["tau"], last["lam"]

    mats = list(last["W"]) + ([last["M"]] if psi0 else [])
    rank_ok = all(
        (float(np.trace(m).real) <= 1e-6 * max(1.0, P))
        or (float(np.linalg.eigvalsh(m)[-1]) / float(np.trace(m).real) >= config.rank_tol)
        for m in mats)

    m_vec, w_vecs, _ = recover_precoders(last["M"] if psi0 else None, last["W"])
    w_full = np.zeros((U, N), dtype=complex)
    for k, u in enumerate(subset):
        w_full[u] = w_vecs[k]
    m_full = m_vec if psi0 else np.zeros(N, dtype=complex)
    c_full = np.zeros(U)
    for k, u in enumerate(subset):
        c_full[u] = last["c"][k]
    prec = PrecoderSolution(w=w_full, m=m_full, c=c_full)
    mask = np.zeros(U, dtype=bool)
    mask[list(subset)] = True
    priv = np.zeros(U)
    for u in subset:
        priv[u] = math.log2(1.0 + sinr_private(inst, prec, mask, u))
    rate_obj = float(np.sum(inst.weights * (priv + c_full)))
    if objective == WEE:
        total = prec.tx_power() / inst.power.eta_eff + inst.p_cir
        evaluated = rate_obj / total
    else:
        evaluated = rate_obj

    proj_p, proj_c = project_rates(inst, subset, prec, c_full)
    proj_obj = float(np.sum(inst.weights * (proj_p + proj_c)))
    if objective == WEE:
        total = prec.tx_power() / inst.power.eta_eff + inst.p_cir
        proj_obj = float(np.sum(inst.weights * (proj_p + proj_c))) / total

    gam_full = np.zeros(U)
    tau_full = np.zeros(U)
    for k, u in enumerate(subset):
        gam_full[u] = last["gamma"][k]
        tau_full[u] = last["tau"][k]
    return SubsetSolution(
        subset=subset, psi0=psi0,
        converged=converged_obj and rank_ok, iterations=iterations,
        objective=prev_obj, trace=trace,
        W=last["W"], M=last["M"], precoders=prec, c=c_full,
        gamma=gam_full, tau=tau_full,
        evaluated_objective=evaluated, private_rates=priv,
        projected_private=proj_p, projected_c=proj_c,
        projected_objective=proj_obj, worst_tol=worst_tol,
    )


def project_rates(instance: SystemInstance, subset, precoders: PrecoderSolution,
                  c: Sequence[float]):
    """Snap continuous rates onto the MCS grid.

    Private rates map each achieved SINR to the best supported entry (zero
    when below the smallest threshold).  The common pool is set by the worst
    common SINR across the subset and split proportionally to the continuous
    shares; a zero share sum yields zeros.
    """
    inst = instance
    U = inst.n_users
    subset = tuple(sorted(subset))
    mask = np.zeros(U, dtype=bool)
    mask[list(subset)] = True
    c = np.asarray(c, dtype=float)
    proj_p = np.zeros(U)
    for u in subset:
        e = inst.mcs.best_for_sinr(sinr_private(inst, precoders, mask, u))
        proj_p[u] = e.rate if e else 0.0
    proj_c = np.zeros(U)
    csum = float(np.sum(c[list(subset)]))
    if csum > 0.0:
        smin = min(sinr_common(inst, precoders, mask, u) for u in subset)
        e = inst.mcs.best_for_sinr(smin)
        pool = e.rate if e else 0.0
        for u in subset:
            proj_c[u] = c[u] / csum * pool
    return proj_p, proj_c


def _admission_subsets(instance: SystemInstance) -> list[tuple]:
    if instance.admission_mode == EXACT_K:
        return enumerate_subsets(instance.n_users, instance.k_admit)
    out = []
    for k in range(1, instance.k_admit + 1):
        out.extend(enumerate_subsets(instance.n_users, k))
    return out


def _solve_continuous(instance: SystemInstance, config: ScaConfig,
                      objective: str, subsets=None):
    psis = (0, 1) if config.psi0 == 1 else (0,)
    table: list[SubsetSolution] = []
    for subset in (subsets if subsets is not None else _admission_subsets(instance)):
        for psi0 in psis:
            table.append(sca_iterate(instance, subset, psi0, config, objective))
    usable = [s for s in table if s.usable and s.converged]
    if not usable:
        errs = "; ".join(s.error or f"{s.subset}/psi{s.psi0}: no rank-one convergence"
                         for s in table)
        raise RuntimeError(f"no admitted subset converged: {errs}")
    best = max(usable, key=lambda s: (s.objective, -table.index(s)))
    return best, table


def solve_cwsr(instance: SystemInstance, config: Optional[ScaConfig] = None,
               subsets=None):
    """Best continuous-rate weighted sum rate over admitted subsets.

    Returns (best SubsetSolution, full per-subset table).  The table also
    carries the projected-rate objectives, whose maximum is the projected
    variant of this solver.
    """
    return _solve_continuous(instance, config or ScaConfig(), WSR, subsets)


def solve_cwee(instance: SystemInstance, config: Optional[ScaConfig] = None,
               subsets=None):
    """Best continuous-rate weighted energy efficiency over admitted subsets."""
    return _solve_continuous(instance, config or ScaConfig(), WEE, subsets)


def best_projected(table: Sequence[SubsetSolution]) -> SubsetSolution:
    """Subset whose projected-rate objective is largest."""
    usable = [s for s in table if s.usable and s.converged]
    if not usable:
        raise RuntimeError("no usable subset solutions to project")
    return max(usable, key=lambda s: s.projected_objective)


def trace_csv(solution: SubsetSolution) -> str:
    """Iteration trace as CSV: objective, penalty mass, rank-oneness."""
    lines = ["iteration,objective,penalty,rank_oneness"]
    for it, obj, pen, lam in solution.trace:
        lam_s = "" if lam is None else f"{lam:.12g}"
        lines.append(f"{it},{obj:.12g},{pen:.12g},{lam_s}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ScaComplexity:
    n_q: int
    n_c: int
    n_v: int
    n_d: int


def worst_case_complexity_sca(U: int, K: int, n_tx: int) -> ScaComplexity:
    """Closed-form worst-case sizes of the continuous-rate pipeline."""
    if min(U, K, n_tx) < 1 or K > U:
        raise ValueError("need U, K, N_tx >= 1 and K <= U")
    n_q = 2 * math.comb(U, K)
    n_c = 9 * K + 6
    n_v = 2 * K * n_tx + 9 * n_tx + 2 * K + 11
    n_d = (n_tx ** 2 * K ** 3 + n_tx ** 2 * K ** 2 + 5 * K * n_tx ** 2
           + K ** 3 + 3 * n_tx ** 2 + K ** 2 + 2 * K + 1)
    return ScaComplexity(n_q, n_c, n_v, n_d)
