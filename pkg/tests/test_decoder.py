import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oneshot_qsw import DomainError, RegisterSystem, ShapeError, random_state
from oneshot_qsw.decoder import (
    verify_decoding,
    gentle_povm_check,
    hayashi_nagaoka_residual,
    position_tests,
    product_complement_residual,
)
from oneshot_qsw.instances import decoder_micro
from oneshot_qsw.qstate import random_test


def base_test(seed):
    return random_test(RegisterSystem.of(A=2, M=2), np.random.default_rng(seed))


@pytest.mark.parametrize("n_pos", [1, 2, 3])
def test_decoder_povm_resolves_identity(n_pos):
    b = position_tests(base_test(n_pos), n_pos, ["M"])
    assert b.povm.shape[0] == n_pos + 1
    assert np.allclose(b.povm.sum(axis=0), np.eye(b.system.dim), atol=1e-9)
    assert b.pgm_isometry.isometry_defect() < 1e-9
    assert b.copy_names == [[f"M_{i}"] for i in range(1, n_pos + 1)]


def test_position_tests_validation():
    with pytest.raises(ShapeError):
        position_tests(base_test(0), 0, ["M"])
    with pytest.raises(ShapeError):
        position_tests(base_test(0), 2, ["X"])
    with pytest.raises(ShapeError):
        position_tests(base_test(0), 2, ["M"], outcome_name="A")


@pytest.mark.parametrize("seed", range(4))
def test_micro_instances_decode(seed):
    psi, sig, om = decoder_micro(seed)
    rep = verify_decoding(psi, sig, om, 0.15, 1, 1)
    assert rep.preconditions_hold
    assert rep.claim_holds
    assert rep.F2 >= 1 - 24 * 0.15 ** 2 - 1e-7
    assert rep.row_sum_defect <= 1e-9
    assert rep.error_given_first <= rep.error_chain_bound + 1e-9
    assert rep.confusion.entries.shape == (3, 3, 2, 2)


def test_failed_preconditions_leave_claim_open():
    psi = random_state(RegisterSystem.of(R=2, A=2, M=2, B=2, N=2), 3)
    from oneshot_qsw import partial_trace

    rep = verify_decoding(psi, partial_trace(psi, ["M"]), partial_trace(psi, ["N"]), 0.15, 1, 1)
    assert not rep.preconditions_hold
    assert rep.claim_holds is None
    assert rep.row_sum_defect <= 1e-9


def test_claim_domain():
    psi, sig, om = decoder_micro(0)
    with pytest.raises(DomainError):
        verify_decoding(psi, sig, om, 1.5, 1, 1)
    with pytest.raises(DomainError):
        verify_decoding(psi, sig, om, 0.1, -1, 1)


@given(seed=st.integers(0, 10 ** 6), d=st.integers(2, 4))
def test_hayashi_nagaoka_residual_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    S = random_test(RegisterSystem.of(A=d), rng).matrix
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    assert hayashi_nagaoka_residual(S, g @ g.conj().T / d) >= -1e-9


@given(seed=st.integers(0, 10 ** 6))
def test_product_complement_residual_nonnegative(seed):
    rng = np.random.default_rng(seed)
    P = random_test(RegisterSystem.of(A=2), rng).matrix
    Q = random_test(RegisterSystem.of(A=3), rng).matrix
    assert product_complement_residual(P, Q) >= -1e-9


def test_hayashi_nagaoka_shape_mismatch():
    with pytest.raises(ShapeError):
        hayashi_nagaoka_residual(np.eye(2), np.eye(3))


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=15)
def test_gentle_measurement_bound(seed):
    rng = np.random.default_rng(seed)
    sy = RegisterSystem.of(A=2, E=2)
    kets = [random_state(sy, seed + i) for i in range(2)]
    probs = rng.dirichlet([1, 1])
    # two-outcome square-root measurement {sqrt(T), sqrt(I - T)} on A
    t = random_test(RegisterSystem.of(A=2), rng).matrix
    w, v = np.linalg.eigh(t)
    w = np.clip(w, 0, 1)
    p0 = (v * np.sqrt(w)) @ v.conj().T
    p1 = (v * np.sqrt(1 - w)) @ v.conj().T
    F, bound = gentle_povm_check(probs, kets, [p0, p1], ["A"])
    assert F >= bound - 1e-9
    assert 0 <= F <= 1 + 1e-12


def test_two_position_decoder_matches_hand_assembly():
    # base test |00><00| on (A, M); lifted registers A, M_1, M_2 (basis a m1 m2)
    proj = np.zeros((4, 4), dtype=complex)
    proj[0, 0] = 1
    from oneshot_qsw.qstate import TestOperator

    b = position_tests(TestOperator(RegisterSystem.of(A=2, M=2), proj), 2, ["M"])
    # S = L1 + L2 is diag(2, 1, 1, 0, ...); the PGM gives
    #   outcome 1: |000> weight 1/2, |001> weight 1
    #   outcome 2: |000> weight 1/2, |010> weight 1
    #   failure:   the five basis states outside supp(S)
    sq = np.zeros((3, 8, 8))
    sq[0] = np.diag([0, 0, 0, 1, 1, 1, 1, 1])
    sq[1] = np.diag([1 / np.sqrt(2), 1, 0, 0, 0, 0, 0, 0])
    sq[2] = np.diag([1 / np.sqrt(2), 0, 1, 0, 0, 0, 0, 0])
    want = sq.transpose(1, 0, 2).reshape(24, 8)  # row = 3 * input basis index + outcome
    assert b.pgm_isometry.matrix.shape == (24, 8)
    assert np.allclose(b.pgm_isometry.matrix, want, atol=1e-12)
