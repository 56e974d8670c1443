import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oneshot_qsw import CapacityError, DomainError, ShapeError, partial_trace
from oneshot_qsw.convexsplit import (
    ConvexSplitInstance,
    build_convex_split_state,
    certified_bound,
    mixture_decomposition,
    pair_coefficients,
    pair_marginal,
    product_state,
    verify_lemma,
)
from oneshot_qsw.instances import convex_split_instance
from oneshot_qsw.qstate import fidelity_pd, reorder


def test_product_input_splits_exactly():
    rep = verify_lemma(convex_split_instance(0, 1, 1, product=True))
    assert rep.exact_P <= 1e-9
    assert abs(rep.exact_D) <= 1e-9
    assert rep.within_bound


def test_pair_coefficients_sum_to_one():
    for ra in range(4):
        for rb in range(4):
            c = pair_coefficients(ra, rb)
            assert sum(c) == 1
            assert c[0] == Fraction(1, 2 ** (ra + rb))


@pytest.mark.parametrize("ra,rb,pos", [(1, 1, (1, 2)), (2, 1, (3, 1)), (1, 0, (2, 1))])
def test_pair_marginal_matches_dense_trace(ra, rb, pos):
    inst = convex_split_instance(4, ra, rb)
    tau = build_convex_split_state(inst, "rho")
    i, j = pos
    names = ["R", f"A_{i}", f"B_{j}"]
    dense = partial_trace(tau, names).renamed({f"A_{i}": "A", f"B_{j}": "B"})
    dense = reorder(dense, ["R", "A", "B"])
    assert np.allclose(dense.matrix, pair_marginal(inst, "rho").matrix, atol=1e-12)


def test_split_state_is_a_state():
    tau = build_convex_split_state(convex_split_instance(2, 1, 1))
    assert abs(np.trace(tau.matrix) - 1) < 1e-12
    assert np.linalg.eigvalsh(tau.matrix).min() > -1e-12
    assert tau.system.names == ("R", "A_1", "A_2", "B_1", "B_2")


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=10)
def test_mixture_identity(seed):
    lhs, rhs = mixture_decomposition(convex_split_instance(seed, 1, 1, t=0.2))
    assert lhs == pytest.approx(rhs, abs=1e-9)


@given(seed=st.integers(0, 10 ** 6), ra=st.integers(1, 2), rb=st.integers(1, 2))
@settings(max_examples=10)
def test_closeness_bound_holds(seed, ra, rb):
    rep = verify_lemma(convex_split_instance(seed, ra, rb), tol=1e-7)
    assert rep.within_bound
    assert rep.exact_P <= 0.01 + 2 * math.sqrt(rep.delta_eff) + 1e-7
    assert rep.exact_D_prime <= rep.relent_bound_exact_coeffs + 1e-7


def test_smoothed_state_with_prime():
    inst = convex_split_instance(5, 1, 1)
    rho = inst.rho_RAB
    mixed = 0.98 * rho.matrix + 0.02 * product_state(convex_split_instance(5, 0, 0, product=True)).matrix
    prime = type(rho)(rho.system, mixed)
    inst2 = ConvexSplitInstance(rho, prime, inst.sigma_A, inst.omega_B, 1, 1, 0.05, 0.2)
    assert inst2.distance_to_prime() == pytest.approx(fidelity_pd(rho, prime)[1])
    rep = verify_lemma(inst2)
    assert rep.exact_D_prime is not None and rep.within_bound


def test_certified_bound_conditions_track_rates():
    inst = convex_split_instance(1, 0, 0)
    rep = certified_bound(inst)
    assert rep.certified_P == pytest.approx(inst.epsilon + math.sqrt(4 * rep.delta_eff))
    big = certified_bound(convex_split_instance(1, 6, 6))
    assert all(big.conditions.values())
    assert big.delta_eff < rep.delta_eff


def test_instance_validation():
    inst = convex_split_instance(0)
    args = (inst.rho_RAB, inst.rho_RAB, inst.sigma_A, inst.omega_B)
    with pytest.raises(DomainError):
        ConvexSplitInstance(*args, 1, 1, 0.0, 0.01)
    with pytest.raises(DomainError):
        ConvexSplitInstance(*args, 1, 1, 0.05, 1.0)
    with pytest.raises(ShapeError):
        ConvexSplitInstance(*args, -1, 1, 0.05, 0.01)
    with pytest.raises(ShapeError):
        ConvexSplitInstance(inst.rho_RAB, inst.rho_RAB, inst.sigma_A, inst.sigma_A, 1, 1, 0.05, 0.01)


def test_dense_cap():
    with pytest.raises(CapacityError):
        build_convex_split_state(convex_split_instance(0, 4, 4))


def test_split_state_matches_hand_assembled_mixture():
    inst = convex_split_instance(8, 1, 1)
    rho = inst.rho_RAB.matrix.reshape([2] * 6)  # R A B ; R' A' B'
    s, w = inst.sigma_A.matrix, inst.omega_B.matrix
    total = np.zeros([2] * 10, dtype=complex)
    # output order R A1 A2 B1 B2, row indices then column indices
    for i in (1, 2):
        for j in (1, 2):
            a_other = "d" if i == 1 else "c"
            b_other = "f" if j == 1 else "e"
            a_hit = "c" if i == 1 else "d"
            b_hit = "e" if j == 1 else "f"
            subscripts = (f"r{a_hit}{b_hit}R{a_hit.upper()}{b_hit.upper()},"
                    f"{a_other}{a_other.upper()},{b_other}{b_other.upper()}->rcdefRCDEF")
            total += np.einsum(subscripts, rho, s, w)
    tau = build_convex_split_state(inst, "rho").matrix
    assert np.allclose(tau, total.reshape(32, 32) / 4, atol=1e-14)
