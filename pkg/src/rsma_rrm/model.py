"""Core system model: instances, decision variables, SINR/power arithmetic,
and the feasibility checker that audits solver output against the original
nonconvex constraints.

Conventions: all powers are in watts, channels are dimensionless complex
amplitude-gain vectors, rates are in bps/Hz, SINRs are linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mcs import McsTable, default_table

EXACT_K = "exact-K"
AT_MOST_K = "at-most-K"


def db_to_lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watt_to_dbm(x_w: float) -> float:
    return 10.0 * math.log10(x_w) + 30.0


@dataclass(frozen=True)
class PowerModel:
    """Transmit budget and consumption model of the base station."""

    p_tx_max: float                # W
    eta_eff: float = 1.0           # amplifier efficiency in (0, 1]
    p_dyn: float = 0.0             # W per antenna
    p_sta: float = 0.0             # W

    def __post_init__(self):
        if self.p_tx_max < 0 or self.p_dyn < 0 or self.p_sta < 0:
            raise ValueError("powers must be nonnegative")
        if not 0.0 < self.eta_eff <= 1.0:
            raise ValueError("eta_eff must be in (0, 1]")

    def p_cir(self, n_tx: int) -> float:
        """Circuitry consumption: per-antenna dynamic part plus static part."""
        return n_tx * self.p_dyn + self.p_sta


@dataclass(frozen=True)
class SystemInstance:
    """One downlink resource-management problem instance."""

    channels: np.ndarray           # U x N_tx complex
    sigma2: float                  # noise power, W
    power: PowerModel
    k_admit: int
    weights: np.ndarray = None     # omega_u >= 0
    delta_sic: float = 0.0         # residual common-signal fraction in [0, 1]
    r_min: float = 0.0             # bps/Hz per admitted user
    mcs: McsTable = None
    admission_mode: str = EXACT_K

    def __post_init__(self):
        ch = np.atleast_2d(np.asarray(self.channels, dtype=complex))
        object.__setattr__(self, "channels", ch)
        if self.weights is None:
            object.__setattr__(self, "weights", np.ones(ch.shape[0]))
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (ch.shape[0],) or np.any(w < 0):
                raise ValueError("weights must be U nonnegative scalars")
            object.__setattr__(self, "weights", w)
        if self.mcs is None:
            object.__setattr__(self, "mcs", default_table())
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not 1 <= self.k_admit <= ch.shape[0]:
            raise ValueError("k_admit must satisfy 1 <= K <= U")
        if not 0.0 <= self.delta_sic <= 1.0:
            raise ValueError("delta_sic must be in [0, 1]")
        if self.r_min < 0:
            raise ValueError("r_min must be nonnegative")
        if self.admission_mode not in (EXACT_K, AT_MOST_K):
            raise ValueError(f"unknown admission mode {self.admission_mode!r}")
        self.channels.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_users(self) -> int:
        return self.channels.shape[0]

    @property
    def n_tx(self) -> int:
        return self.channels.shape[1]

    @property
    def p_cir(self) -> float:
        return self.power.p_cir(self.n_tx)


@dataclass(frozen=True)
class BinaryAssignment:
    """Integral decision bits: admission, signal usage and MCS selection.

    chi[u]      user u admitted
    mu[u]       user u served by a private signal
    psi         common signal transmitted
    alpha[u,j]  private signal of user u carries MCS j
    kappa[j]    common signal carries MCS j
    pi[u,j]     product chi[u]*kappa[j] (admitted and common MCS j active)
    """

    chi: np.ndarray
    mu: np.ndarray
    psi: int
    alpha: np.ndarray
    kappa: np.ndarray
    pi: np.ndarray = None

    def __post_init__(self):
        for name in ("chi", "mu", "alpha", "kappa"):
            arr = np.asarray(getattr(self, name), dtype=int)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "psi", int(self.psi))
        if self.pi is None:
            object.__setattr__(self, "pi", np.outer(self.chi, self.kappa))
        else:
            object.__setattr__(self, "pi", np.asarray(self.pi, dtype=int))
        for name in ("chi", "mu", "alpha", "kappa", "pi"):
            getattr(self, name).setflags(write=False)

    def check(self, instance: SystemInstance) -> list[str]:
        """Structural violations as human-readable strings (empty = valid)."""
        errs = []
        U, J = instance.n_users, instance.mcs.J
        if self.chi.shape != (U,) or self.mu.shape != (U,):
            errs.append("chi/mu shape mismatch")
            return errs
        if self.alpha.shape != (U, J) or self.kappa.shape != (J,) or self.pi.shape != (U, J):
            errs.append("alpha/kappa/pi shape mismatch")
            return errs
        for name in ("chi", "mu", "alpha", "kappa", "pi"):
            v = getattr(self, name)
            if not np.all((v == 0) | (v == 1)):
                errs.append(f"{name} not binary")
        if self.psi not in (0, 1):
            errs.append("psi not binary")
        k = int(self.chi.sum())
        if instance.admission_mode == EXACT_K and k != instance.k_admit:
            errs.append(f"sum(chi)={k} != K={instance.k_admit}")
        if instance.admission_mode == AT_MOST_K and k > instance.k_admit:
            errs.append(f"sum(chi)={k} > K={instance.k_admit}")
        if np.any(self.mu > self.chi):
            errs.append("mu exceeds chi")
        if np.any(self.alpha.sum(axis=1) != self.mu):
            errs.append("alpha rows do not sum to mu")
        if int(self.kappa.sum()) != self.psi:
            errs.append("kappa does not sum to psi")
        if np.any(self.pi != np.outer(self.chi, self.kappa)):
            errs.append("pi != chi * kappa")
        return errs

    def private_rate(self, instance: SystemInstance, u: int) -> float:
        return float(self.alpha[u] @ np.asarray(instance.mcs.rates))

    def common_rate(self, instance: SystemInstance) -> float:
        return float(self.kappa @ np.asarray(instance.mcs.rates))


@dataclass(frozen=True)
class PrecoderSolution:
    """Continuous part of a solution: precoders and the common-rate split."""

    w: np.ndarray                  # U x N_tx complex, private precoders
    m: np.ndarray                  # N_tx complex, common precoder
    c: np.ndarray                  # U nonnegative common-rate portions, bps/Hz
    private_rates: np.ndarray = None
    objective: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "w", np.atleast_2d(np.asarray(self.w, dtype=complex)))
        object.__setattr__(self, "m", np.asarray(self.m, dtype=complex).ravel())
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).ravel())
        if self.private_rates is None:
            object.__setattr__(self, "private_rates", np.zeros(self.w.shape[0]))
        else:
            object.__setattr__(
                self, "private_rates", np.asarray(self.private_rates, dtype=float).ravel()
            )
        for name in ("w", "m", "c", "private_rates"):
            getattr(self, name).setflags(write=False)

    def tx_power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2) + np.sum(np.abs(self.m) ** 2))

    def rate(self, u: int) -> float:
        return float(self.private_rates[u] + self.c[u])


def effective_precoders(assignment: BinaryAssignment, precoders: PrecoderSolution):
    """Precoders gated by the usage bits: w_u * mu_u and m * psi."""
    w = precoders.w * assignment.mu[:, None]
    m = precoders.m * assignment.psi
    return w, m


def sinr_private(
    instance: SystemInstance,
    precoders: PrecoderSolution,
    served_mask: Sequence[bool],
    u: int,
    common_on: bool = True,
) -> float:
    """Private-signal SINR at user u.

    The denominator carries the residual of the (imperfectly cancelled)
    common signal scaled by delta_sic**2, the private signals of the other
    served users, and noise.
    """
    h = instance.channels[u]
    if precoders.w.shape[1] != h.shape[0] or precoders.m.shape[0] != h.shape[0]:
        raise ValueError("precoder / channel dimension mismatch")
    mask = np.asarray(served_mask, dtype=bool)
    sig = abs(np.vdot(h, precoders.w[u])) ** 2
    common = abs(np.vdot(h, precoders.m)) ** 2 if common_on else 0.0
    interf = 0.0
    for i in range(instance.n_users):
        if i != u and mask[i]:
            interf += abs(np.vdot(h, precoders.w[i])) ** 2
    den = instance.delta_sic ** 2 * common + interf + instance.sigma2
    return sig / den


def sinr_common(
    instance: SystemInstance,
    precoders: PrecoderSolution,
    served_mask: Sequence[bool],
    u: int,
) -> float:
    """Common-signal SINR at user u (all served private signals act as noise)."""
    h = instance.channels[u]
    if precoders.w.shape[1] != h.shape[0] or precoders.m.shape[0] != h.shape[0]:
        raise ValueError("precoder / channel dimension mismatch")
    mask = np.asarray(served_mask, dtype=bool)
    sig = abs(np.vdot(h, precoders.m)) ** 2
    interf = sum(
        abs(np.vdot(h, precoders.w[i])) ** 2 for i in range(instance.n_users) if mask[i]
    )
    return sig / (interf + instance.sigma2)


def wsr(instance: SystemInstance, assignment: BinaryAssignment, c: Sequence[float]) -> float:
    """Weighted sum rate of an assignment plus common-rate split."""
    rates = np.asarray(instance.mcs.rates)
    c = np.asarray(c, dtype=float)
    return float(np.sum(instance.weights * (assignment.alpha @ rates + c)))


def wee(
    instance: SystemInstance,
    assignment: BinaryAssignment,
    precoders: PrecoderSolution,
) -> float:
    """Weighted energy efficiency: weighted sum rate over consumed power."""
    w_eff, m_eff = effective_precoders(assignment, precoders)
    p_tx = float(np.sum(np.abs(w_eff) ** 2) + np.sum(np.abs(m_eff) ** 2))
    total = p_tx / instance.power.eta_eff + instance.p_cir
    return wsr(instance, assignment, precoders.c) / total


def l_max(channel: np.ndarray, p_tx_max: float, sigma2: float) -> float:
    """Largest possible received-signal norm; the tight big-M constant."""
    h = np.asarray(channel, dtype=complex)
    return math.sqrt(float(np.sum(np.abs(h) ** 2)) * p_tx_max + sigma2)


def s_max(instance: SystemInstance) -> float:
    """Upper bound on any continuous rate: best single-user capacity."""
    gains = np.sum(np.abs(instance.channels) ** 2, axis=1)
    snr = instance.power.p_tx_max / instance.sigma2 * gains
    return float(np.max(np.log2(1.0 + snr)))


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    ok: bool
    violation: float   # positive magnitude of the worst violation, 0 if ok
    detail: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    checks: tuple[ConstraintCheck, ...]
    passed: bool
    worst_violation: float

    def failed(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.ok]

    def summary(self) -> str:
        lines = [f"feasibility: {'PASS' if self.passed else 'FAIL'} "
                 f"(worst violation {self.worst_violation:.3e})"]
        for c in self.checks:
            mark = "ok " if c.ok else "BAD"
            lines.append(f"  [{mark}] {c.name:26s} violation={c.violation:.3e} {c.detail}")
        return "\n".join(lines)


def validate_solution(
    instance: SystemInstance,
    assignment: BinaryAssignment,
    precoders: PrecoderSolution,
    tol: float = 1e-6,
) -> FeasibilityReport:
    """Audit a solution against the original nonconvex constraint set.

    Inequalities are checked as lhs - rhs >= -tol*(1 + |rhs|); equalities as
    |lhs - rhs| <= tol*(1 + |rhs|).  Failures are recorded, never raised.
    """
    checks: list[ConstraintCheck] = []
    U, J = instance.n_users, instance.mcs.J
    rates = np.asarray(instance.mcs.rates)
    sinrs = np.asarray(instance.mcs.sinrs)

    def add_ineq(name, lhs, rhs, detail=""):
        slack = lhs - rhs
        lim = tol * (1.0 + abs(rhs))
        checks.append(ConstraintCheck(name, slack >= -lim, max(0.0, -slack), detail))

    def add_eq(name, lhs, rhs, detail=""):
        err = abs(lhs - rhs)
        lim = tol * (1.0 + abs(rhs))
        checks.append(ConstraintCheck(name, err <= lim, err, detail))

    struct = assignment.check(instance)
    checks.append(
        ConstraintCheck("binary-structure", not struct, float(len(struct)), "; ".join(struct))
    )

    w_eff, m_eff = effective_precoders(assignment, precoders)
    gated = PrecoderSolution(w=w_eff, m=m_eff, c=precoders.c)
    served = assignment.mu.astype(bool)

    p_used = gated.tx_power()
    add_ineq("power-budget", instance.power.p_tx_max, p_used)

    kappa_sinr = float(assignment.kappa @ sinrs)
    kappa_rate = float(assignment.kappa @ rates)
    for u in range(U):
        target_p = float(assignment.alpha[u] @ sinrs)
        if target_p > 0.0:
            add_ineq(f"private-sinr[{u}]",
                     sinr_private(instance, gated, served, u), target_p)
        target_c = assignment.chi[u] * kappa_sinr
        if target_c > 0.0:
            add_ineq(f"common-sinr[{u}]",
                     sinr_common(instance, gated, served, u), target_c)
        add_ineq(f"common-split-lo[{u}]", precoders.c[u], 0.0)
        add_ineq(f"common-split-hi[{u}]", assignment.chi[u] * kappa_rate, precoders.c[u])
        add_ineq(f"min-rate[{u}]",
                 float(assignment.alpha[u] @ rates) + precoders.c[u],
                 instance.r_min * assignment.chi[u])
    add_eq("common-split-sum", float(np.sum(precoders.c)), kappa_rate)

    passed = all(c.ok for c in checks)
    worst = max((c.violation for c in checks if not c.ok), default=0.0)
    return FeasibilityReport(tuple(checks), passed, worst)
