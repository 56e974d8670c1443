import math

import numpy as np
import pytest

from oneshot_qsw import CapacityError, DomainError, RegisterSystem, ShapeError, random_state
from oneshot_qsw.instances import protocol_state
from oneshot_qsw.protocol import (
    ProtocolInstance,
    owner_of,
    plan_rates,
    rate_terms,
    reverse_chain,
    run_task1,
    run_task2,
    verify_end_to_end,
    with_roles,
)

MICRO = {"R_A": 1, "R_B": 1, "r_A": 0, "r_B": 0}


def instance(seed, kind="near_product"):
    return ProtocolInstance(protocol_state(seed, kind), eps1=0.05, eps2=0.1, delta=0.05)


def test_missing_roles_become_trivial():
    psi = random_state(RegisterSystem.of(R=2, M=2, N=2), 0)
    full = with_roles(psi)
    assert full.system.names == ("R", "A", "M", "B", "N", "C")
    assert [full.system.dim_of(n) for n in ("A", "B", "C")] == [1, 1, 1]
    inst = ProtocolInstance(psi)
    assert not inst.trivial_a and not inst.trivial_b


def test_instance_validation():
    psi = protocol_state(0)
    with pytest.raises(DomainError):
        ProtocolInstance(psi, eps1=0.0)
    with pytest.raises(DomainError):
        ProtocolInstance(psi, delta=1.0)
    with pytest.raises(ShapeError):
        ProtocolInstance(psi, sigma_M=random_state(RegisterSystem.of(M=3), 0).dm())


def test_owners():
    assert owner_of("A") == "Alice" and owner_of("B") == "Bob"
    assert owner_of("C") == "Charlie" and owner_of("R") == "Reference"


def test_plan_rates_meets_its_lower_bounds():
    inst = instance(1)
    t = rate_terms(inst)
    cert = plan_rates(inst, terms=t)
    L = math.log2(1 / (inst.eps2 ** 2 * inst.delta))
    lg = 2 * math.log2(inst.eps2)
    assert cert.r_A == max(0, math.floor(t["dh_A"] + lg + 1e-9))
    want_a = max(t["dmax_A"] - t["dh_A"] + L, t["dmax_A"] + math.log2(1 / inst.delta) - cert.r_A, 0.0)
    assert cert.lower_bounds["A"] == pytest.approx(want_a)
    assert cert.R_A >= want_a - 1e-9 and cert.R_B >= cert.lower_bounds["B"] - 1e-9
    assert cert.R_A + cert.R_B >= cert.lower_bounds["sum"] - 1e-9
    # minimality: dropping a unit from either side breaks some constraint
    for side in ("A", "B"):
        R = {"A": cert.R_A, "B": cert.R_B}
        R[side] -= 1
        assert R[side] < cert.lower_bounds[side] - 1e-9 or sum(R.values()) < cert.lower_bounds["sum"] - 1e-9
    assert cert.guaranteed_error == pytest.approx(0.05 + 0.5 + 2 * math.sqrt(0.05))
    assert cert.qubits_CtoA == cert.R_A / 2


def test_override_rates_rejects_negative():
    with pytest.raises(DomainError):
        plan_rates(instance(0), override={"R_A": -1})


def test_product_state_is_transferred_exactly():
    inst = instance(0, "product")
    cert = plan_rates(inst, override=MICRO)
    t2 = run_task2(inst, cert)
    assert t2.P_final <= 1e-6
    assert verify_end_to_end(inst, cert, t2)["passed"]


@pytest.mark.parametrize("seed", [0, 3])
def test_tasks_agree_and_meet_bound(seed):
    inst = instance(seed)
    cert = plan_rates(inst, override=MICRO)
    t2 = run_task2(inst, cert, keep_states=True)
    t1 = run_task1(inst, cert, theta_prime=(t2.states["theta_prime_1"], t2.states["theta_prime_2"]))
    assert abs(t1.P_final - t2.P_final) <= 1e-8
    ver = verify_end_to_end(inst, cert, t2)
    assert ver["passed"]
    assert t2.P_final <= inst.eps1 + 5 * inst.eps2 + 2 * math.sqrt(cert.delta_eff) + 1e-6
    assert t2.uhlmann_gap <= 1e-9
    assert t2.chain_ok


def test_reverse_chain_undoes_forward_run():
    inst = instance(2)
    cert = plan_rates(inst, override=MICRO)
    t2 = run_task2(inst, cert, keep_states=True)
    back = reverse_chain(inst, cert, t2.states["final"])
    assert np.allclose(back.vector, t2.states["xi"].vector, atol=1e-9)


def test_register_tags_cover_final_state():
    inst = instance(0)
    t2 = run_task2(inst, plan_rates(inst, override=MICRO))
    assert set(t2.tags.values()) <= {"Alice", "Bob", "Charlie", "Reference"}
    assert t2.qubits == {"C->A": 0.5, "C->B": 0.5}


def test_large_rates_refused():
    inst = instance(0)
    cert = plan_rates(inst, override={"R_A": 12, "R_B": 12, "r_A": 0, "r_B": 0})
    with pytest.raises(CapacityError):
        run_task2(inst, cert)


def test_undersized_rates_are_flagged():
    inst = instance(1)
    cert = plan_rates(inst, override=MICRO)
    ver = verify_end_to_end(inst, cert, run_task2(inst, cert))
    assert cert.delta_eff > inst.delta
    assert ver["delta_eff_flagged"] and not ver["rates_certified"]
    assert not cert.flags["delta_eff <= delta"]


def test_planned_rates_are_certified():
    inst = instance(1)
    cert = plan_rates(inst)
    assert cert.flags["delta_eff <= delta"] and cert.delta_eff <= inst.delta
    assert all(v for k, v in cert.flags.items() if k.startswith("meets"))


def test_product_instance_rates():
    # all D_max terms vanish; the copy exponent is twice the qubit rate
    inst = ProtocolInstance(protocol_state(0, "product"), eps1=0.05, eps2=0.3, delta=0.05)
    cert = plan_rates(inst)
    assert cert.dmax_terms == pytest.approx((0, 0, 0), abs=1e-9)
    want = math.log2(1 / (0.3 ** 2 * 0.05)) - math.log2(1 / (1 - 0.3 ** 2))
    assert cert.lower_bounds["A"] == pytest.approx(want)
    assert (cert.R_A, cert.R_B) == (8, 8)
    assert (cert.qubits_CtoA, cert.qubits_CtoB) == (4.0, 4.0)
