import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_rrm.mcs import default_table
from rsma_rrm.model import (
    AT_MOST_K,
    EXACT_K,
    BinaryAssignment,
    PowerModel,
    PrecoderSolution,
    SystemInstance,
    dbm_to_watt,
    l_max,
    s_max,
    sinr_common,
    sinr_private,
    validate_solution,
    watt_to_dbm,
    wee,
    wsr,
)

from conftest import two_user_instance


def one_user_instance(h, p=10.0, sigma2=1.0, delta=0.0):
    return SystemInstance(channels=np.asarray(h, dtype=complex)[None, :],
                          sigma2=sigma2, power=PowerModel(p_tx_max=p),
                          k_admit=1, delta_sic=delta, admission_mode=AT_MOST_K)


def assignment_for(instance, chi, mu, psi, alpha_cqi, kappa_cqi):
    """Build the bit pattern from chosen CQIs (0 = none)."""
    U, J = instance.n_users, instance.mcs.J
    alpha = np.zeros((U, J), dtype=int)
    for u, cqi in enumerate(alpha_cqi):
        if cqi:
            alpha[u, cqi - 1] = 1
    kappa = np.zeros(J, dtype=int)
    if kappa_cqi:
        kappa[kappa_cqi - 1] = 1
    return BinaryAssignment(chi=chi, mu=mu, psi=psi, alpha=alpha, kappa=kappa)


def test_unit_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(40.0) == pytest.approx(10.0)
    assert watt_to_dbm(1.0) == pytest.approx(30.0)


def test_power_model():
    pm = PowerModel(p_tx_max=10.0, eta_eff=0.5, p_dyn=2.0, p_sta=6.3)
    assert pm.p_cir(4) == pytest.approx(4 * 2.0 + 6.3)
    with pytest.raises(ValueError):
        PowerModel(p_tx_max=1.0, eta_eff=0.0)
    with pytest.raises(ValueError):
        PowerModel(p_tx_max=-1.0)


def test_sinr_private_single_user_matched():
    inst = one_user_instance([1, 1, 1, 1])
    prec = PrecoderSolution(w=[[1, 0, 0, 0]], m=np.zeros(4), c=[0.0])
    assert sinr_private(inst, prec, [True], 0) == pytest.approx(1.0)


def test_sinr_private_zero_numerator():
    inst = one_user_instance([1, 1, 1, 1], delta=1.0)
    prec = PrecoderSolution(w=np.zeros((1, 4)), m=np.ones(4), c=[0.0])
    assert sinr_private(inst, prec, [True], 0) == 0.0


def test_sinr_private_orthogonal_interference():
    # independent oracle: direct scalar evaluation of the ratio
    h1 = np.array([1, 1, 1, 1], dtype=complex)
    h2 = np.array([1, -1, 1, -1], dtype=complex)
    w1, w2 = h1 / 2, h2 / 2
    expect = abs(np.vdot(h1, w1)) ** 2 / (abs(np.vdot(h1, w2)) ** 2 + 1.0)
    assert expect == pytest.approx(4.0)
    inst = SystemInstance(channels=np.stack([h1, h2]), sigma2=1.0,
                          power=PowerModel(p_tx_max=10.0), k_admit=2)
    prec = PrecoderSolution(w=np.stack([w1, w2]), m=np.zeros(4), c=[0, 0])
    assert sinr_private(inst, prec, [True, True], 0) == pytest.approx(4.0)


def test_sinr_common_examples():
    h = np.array([1, 1, 1, 1], dtype=complex)
    inst = one_user_instance(h, p=4.0)
    m = h / np.linalg.norm(h) * 2.0          # ||m||^2 = P = 4
    prec = PrecoderSolution(w=np.zeros((1, 4)), m=m, c=[0.0])
    assert sinr_common(inst, prec, [False], 0) == pytest.approx(4.0 * 4.0)
    prec0 = PrecoderSolution(w=np.zeros((1, 4)), m=np.zeros(4), c=[0.0])
    assert sinr_common(inst, prec0, [False], 0) == 0.0
    # one private beam orthogonal to the channel: interference vanishes
    w = np.array([[0.5, -0.5, 0.5, -0.5]])
    prec2 = PrecoderSolution(w=w, m=0.5 * np.ones(4), c=[0.0])
    assert sinr_common(inst, prec2, [True], 0) == pytest.approx(4.0)


def test_sinr_dimension_mismatch():
    inst = one_user_instance([1, 1, 1, 1])
    bad = PrecoderSolution(w=np.zeros((1, 3)), m=np.zeros(3), c=[0.0])
    with pytest.raises(ValueError):
        sinr_private(inst, bad, [True], 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-math.pi, max_value=math.pi), st.integers(0, 1))
def test_phase_invariance(theta, u):
    inst = two_user_instance(math.pi / 7, snr_db=10.0, delta_sic=0.3)
    rng = np.random.default_rng(5)
    w = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    m = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    prec = PrecoderSolution(w=w, m=m, c=[0, 0])
    w2 = w.copy()
    w2[u] = w2[u] * np.exp(1j * theta)
    prec2 = PrecoderSolution(w=w2, m=m, c=[0, 0])
    for v in range(2):
        a = sinr_private(inst, prec, [True, True], v)
        b = sinr_private(inst, prec2, [True, True], v)
        assert b == pytest.approx(a, rel=1e-12)
        a = sinr_common(inst, prec, [True, True], v)
        b = sinr_common(inst, prec2, [True, True], v)
        assert b == pytest.approx(a, rel=1e-12)


def test_wsr_examples(table):
    inst = two_user_instance(math.pi / 9)
    a = assignment_for(inst, [1, 1], [1, 1], 0, (7, 7), 0)
    assert wsr(inst, a, [0, 0]) == pytest.approx(2.9532)
    z = assignment_for(inst, [1, 1], [0, 0], 0, (0, 0), 0)
    assert wsr(inst, z, [0, 0]) == 0.0
    inst2 = two_user_instance(math.pi / 9, weights=(2.0, 1.0))
    a2 = assignment_for(inst2, [1, 1], [1, 1], 1, (1, 1), 1)
    assert wsr(inst2, a2, [0.1, 0.1]) == pytest.approx(2 * 0.2523 + 0.2523)


def test_wee_examples():
    pm = PowerModel(p_tx_max=10.0, eta_eff=0.5, p_dyn=0.5, p_sta=0.0)
    inst = two_user_instance(math.pi / 9, power_model=pm)   # p_cir = 2 W
    a = assignment_for(inst, [1, 1], [1, 1], 0, (7, 7), 0)
    w = np.zeros((2, 4), dtype=complex)
    w[0, 0] = w[1, 0] = math.sqrt(0.5)                      # 1 W total
    prec = PrecoderSolution(w=w, m=np.zeros(4), c=[0, 0])
    assert wee(inst, a, prec) == pytest.approx(2.9532 / 4.0)
    z = assignment_for(inst, [1, 1], [0, 0], 0, (0, 0), 0)
    assert wee(inst, z, prec) == 0.0
    # common-only structure check: rate / (||m||^2/eta + p_cir)
    pm2 = PowerModel(p_tx_max=10.0, eta_eff=1.0, p_dyn=0.25, p_sta=0.0)
    inst2 = two_user_instance(math.pi / 9, power_model=pm2)  # p_cir = 1 W
    a2 = assignment_for(inst2, [1, 1], [0, 0], 1, (0, 0), 3)
    m = np.zeros(4, dtype=complex)
    m[0] = 1.0
    prec2 = PrecoderSolution(w=np.zeros((2, 4)), m=m, c=[0.377, 0.0])
    assert wee(inst2, a2, prec2) == pytest.approx(0.377 / 2.0)


def test_wee_bounded_by_wsr_over_pcir():
    pm = PowerModel(p_tx_max=10.0, eta_eff=0.35, p_dyn=1.0, p_sta=1.0)
    inst = two_user_instance(math.pi / 5, power_model=pm)
    a = assignment_for(inst, [1, 1], [1, 1], 1, (3, 2), 4)
    rng = np.random.default_rng(0)
    prec = PrecoderSolution(w=rng.standard_normal((2, 4)),
                            m=rng.standard_normal(4), c=[0.3, 0.3016])
    assert wee(inst, a, prec) <= wsr(inst, a, prec.c) / inst.p_cir + 1e-12


def test_l_max_examples():
    assert l_max(np.ones(4), 10.0, 1.0) == pytest.approx(math.sqrt(41.0))
    assert l_max(np.zeros(4), 10.0, 2.25) == pytest.approx(1.5)
    assert l_max(np.array([1.0, 0, 0, 0]), 1.0, 0.0) == pytest.approx(1.0)


def test_s_max_examples():
    inst = one_user_instance([1, 1, 1, 1], p=1.0)       # ||h||^2 = 4, P/s2 = 1
    assert s_max(inst) == pytest.approx(math.log2(5.0))
    inst0 = one_user_instance([1, 1, 1, 1], p=0.0)
    assert s_max(inst0) == 0.0
    ch = np.array([[1, 0, 0, 0], [1, 1, 1, 0]], dtype=complex)
    inst2 = SystemInstance(channels=ch, sigma2=1.0, power=PowerModel(p_tx_max=1.0),
                           k_admit=2)
    assert s_max(inst2) == pytest.approx(2.0)


def test_validate_all_zero_solution():
    inst = two_user_instance(math.pi / 9, r_min=0.0)
    a = assignment_for(inst, [1, 0], [0, 0], 0, (0, 0), 0)
    prec = PrecoderSolution(w=np.zeros((2, 4)), m=np.zeros(4), c=[0, 0])
    assert validate_solution(inst, a, prec).passed
    inst_rmin = two_user_instance(math.pi / 9, r_min=0.5)
    rep = validate_solution(inst_rmin, a, prec)
    assert not rep.passed
    assert any(c.name == "min-rate[0]" for c in rep.failed())


def test_validate_flags_power_violation():
    inst = two_user_instance(math.pi / 9, snr_db=0.0)    # P = 1 W
    a = assignment_for(inst, [1, 1], [1, 1], 0, (1, 1), 0)
    w = np.zeros((2, 4), dtype=complex)
    w[0, 0] = w[1, 1] = math.sqrt(0.51)                  # exceeds by 2 * tol-ish
    prec = PrecoderSolution(w=w, m=np.zeros(4), c=[0, 0])
    rep = validate_solution(inst, a, prec, tol=1e-6)
    bad = {c.name for c in rep.failed()}
    assert "power-budget" in bad
    assert rep.worst_violation >= 0.019


def test_validate_deterministic_and_idempotent():
    inst = two_user_instance(math.pi / 5, r_min=0.1)
    a = assignment_for(inst, [1, 1], [1, 0], 1, (4, 0), 2)
    rng = np.random.default_rng(11)
    prec = PrecoderSolution(w=rng.standard_normal((2, 4)) * 0.4,
                            m=rng.standard_normal(4) * 0.4, c=[0.1, 0.1344])
    r1 = validate_solution(inst, a, prec)
    r2 = validate_solution(inst, a, prec)
    assert r1 == r2


def test_assignment_invariant_checks():
    inst = two_user_instance(math.pi / 9, admission=EXACT_K)
    bad = assignment_for(inst, [1, 0], [1, 1], 0, (1, 1), 0)   # mu > chi
    errs = bad.check(inst)
    assert any("mu exceeds chi" in e for e in errs)
    assert any("sum(chi)" in e for e in errs)


def test_instance_validation():
    with pytest.raises(ValueError):
        SystemInstance(channels=np.ones((2, 4)), sigma2=0.0,
                       power=PowerModel(p_tx_max=1.0), k_admit=2)
    with pytest.raises(ValueError):
        SystemInstance(channels=np.ones((2, 4)), sigma2=1.0,
                       power=PowerModel(p_tx_max=1.0), k_admit=3)
    with pytest.raises(ValueError):
        SystemInstance(channels=np.ones((2, 4)), sigma2=1.0,
                       power=PowerModel(p_tx_max=1.0), k_admit=2, delta_sic=1.5)
