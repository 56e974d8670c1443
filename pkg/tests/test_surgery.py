import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oneshot_qsw import CapacityError, ContractViolation, DensityOperator, DomainError, Ket, RegisterSystem
from oneshot_qsw.instances import ghz_rmn, random_rmn
from oneshot_qsw.qstate import TestOperator, maximally_entangled, maximally_mixed
from oneshot_qsw.surgery import (
    chernoff_mass_bound,
    classical_dh_dense,
    classical_dh_iid,
    cut_projector,
    dual_projector,
    np_cut,
    second_order_table,
    smoothed_state_pipeline,
    typical_mass_enumerated,
    typical_window,
    verify_surgery,
    warmup_lemma,
)

from oracles import classical_dh_lp


def diag(*p):
    return DensityOperator(RegisterSystem.of(A=len(p)), np.diag(p).astype(complex))


@pytest.mark.parametrize("p,n,delta", [((0.7, 0.3), 4, 0.2), ((0.5, 0.3, 0.2), 3, 0.1), ((0.9, 0.1), 5, 0.5)])
def test_typical_mass_matches_enumeration(p, n, delta):
    win = typical_window(diag(*p), n, delta)
    assert win.mass == pytest.approx(typical_mass_enumerated(p, n, delta), abs=1e-12)
    lo, hi = win.dimension_bracket()
    assert lo - 1e-9 <= win.rank <= hi + 1e-9
    assert win.sandwich_slack() >= -1e-12


def test_typical_projector_is_projector():
    win = typical_window(diag(0.6, 0.4), 3, 0.3)
    p = win.projector.matrix
    assert np.allclose(p @ p, p)
    assert win.projector.system.names == ("A_1", "A_2", "A_3")


def test_chernoff_bound_regime():
    assert chernoff_mass_bound(0.0, 0.5, 4, 0.1) is None
    assert chernoff_mass_bound(1.0, 0.5, 4, 1.5) is None
    b = chernoff_mass_bound(0.88, 0.3, 50, 0.3)
    assert b is not None and b < 1
    p = (0.7, 0.3)
    S = -sum(x * math.log2(x) for x in p)
    for n in (4, 8):
        bound = chernoff_mass_bound(S, 0.3, n, 0.5)
        if bound is not None:
            assert typical_window(diag(*p), n, 0.5).mass >= bound - 1e-12


def test_cut_with_large_threshold_keeps_everything():
    rho, sigma = diag(0.6, 0.4), diag(0.5, 0.5)
    assert np.allclose(cut_projector(rho, sigma, 1.0), np.eye(2))
    state, kept = np_cut(rho, sigma, 1.0)
    assert kept == pytest.approx(1.0) and np.allclose(state.matrix, rho.matrix)


def test_cut_removes_excess_direction():
    state, kept = np_cut(diag(0.8, 0.2), diag(0.5, 0.5), 0.0)
    assert kept == pytest.approx(0.2)
    assert np.allclose(state.matrix, np.diag([0, 1]))


def test_dual_projector_transfers_projection():
    psi = maximally_entangled("A", "B", 3)
    pa = TestOperator(RegisterSystem.of(A=3), np.diag([1, 1, 0]).astype(complex))
    pb = dual_projector(psi, pa)
    assert np.allclose(pb.matrix, np.diag([1, 1, 0]))


def test_dual_projector_rejects_noncommuting():
    skewed = Ket(RegisterSystem.of(R=2, X=2), np.array([math.sqrt(0.8), 0, 0, math.sqrt(0.2)]))
    bad = TestOperator(RegisterSystem.of(R=2), np.full((2, 2), 0.5, dtype=complex))
    with pytest.raises(ContractViolation):
        dual_projector(skewed, bad)


@pytest.mark.parametrize("n", [2, 3])
def test_ghz_pipeline_flags(n):
    _, rep = smoothed_state_pipeline(ghz_rmn(), n, 0.3)
    flags = verify_surgery(rep)
    assert flags["passed"], flags
    assert rep.purity >= 1 - 1e-9


@pytest.mark.parametrize("seed", [1, 2])
def test_random_pipeline_flags(seed):
    _, rep = smoothed_state_pipeline(random_rmn(seed), 2, 0.5)
    assert verify_surgery(rep)["passed"]


def test_warmup_lemma_on_ghz():
    out = warmup_lemma(ghz_rmn(), 0.1)
    assert out["flags"]["passed"]
    with pytest.raises(DomainError):
        warmup_lemma(ghz_rmn(), 0.3)


@given(seed=st.integers(0, 10 ** 6), n=st.integers(1, 4), eps=st.floats(0.05, 0.95))
@settings(max_examples=20)
def test_type_class_dh_matches_dense_and_lp(seed, n, eps):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet([1, 1, 1]), rng.dirichlet([1, 1, 1])
    exact = classical_dh_iid(p, q, n, eps)
    assert exact == pytest.approx(classical_dh_dense(p, q, n, eps), abs=1e-9)
    pn, qn = p, q
    for _ in range(n - 1):
        pn, qn = np.kron(pn, p), np.kron(qn, q)
    assert exact == pytest.approx(classical_dh_lp(pn, qn, eps), abs=1e-7)


def test_type_class_dh_validation():
    with pytest.raises(DomainError):
        classical_dh_iid([0.5, 0.5], [0.9, 0.1], 3, 0.0)
    with pytest.raises(DomainError):
        classical_dh_iid([0.6, 0.6], [0.9, 0.1], 3, 0.2)
    with pytest.raises(CapacityError):
        classical_dh_dense([0.5, 0.5], [0.9, 0.1], 14, 0.2)


def test_second_order_table_shape_and_gap():
    rows = second_order_table([0.5, 0.5], [0.9, 0.1], 0.25, range(4, 9))
    assert [r[0] for r in rows] == [4, 5, 6, 7, 8]
    for n, exact, est, gap in rows:
        assert gap == pytest.approx(abs(exact - est))
        assert gap <= 10 + 2 * math.log2(n)


def test_maximally_mixed_window_is_everything():
    win = typical_window(maximally_mixed(RegisterSystem.of(A=2)), 3, 0.0)
    assert win.mass == pytest.approx(1.0) and win.rank == 8
