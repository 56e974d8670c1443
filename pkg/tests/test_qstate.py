import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oneshot_qsw import (
    CapacityError,
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    NameClash,
    RegisterSystem,
    ShapeError,
    apply_on,
    fidelity_pd,
    ghz,
    partial_trace,
    purified_distance,
    purify,
    random_state,
    tensor,
    uhlmann_isometry,
)
from oneshot_qsw.qstate import (
    apply_controlled,
    fidelity,
    maximally_entangled,
    maximally_mixed,
    reorder,
    tensor_power,
)
from oneshot_qsw.stateio import dumps_state, load_state, loads_state, save_state

from oracles import partial_trace_einsum

dims_strategy = st.lists(st.integers(1, 3), min_size=2, max_size=4)


@given(dims=dims_strategy, seed=st.integers(0, 10 ** 6), data=st.data())
def test_partial_trace_matches_einsum(dims, seed, data):
    names = [f"X{i}" for i in range(len(dims))]
    sy = RegisterSystem(tuple(zip(names, dims)))
    rho = random_state(sy, seed, "mixed_by_tracing")
    keep = sorted(data.draw(st.sets(st.integers(0, len(dims) - 1), min_size=1)))
    got = partial_trace(rho, [names[i] for i in keep]).matrix
    want = partial_trace_einsum(rho.matrix, dims, keep)
    assert np.allclose(got, want, atol=1e-12)


@given(seed=st.integers(0, 10 ** 6))
def test_partial_trace_of_ket_is_a_state(seed):
    sy = RegisterSystem.of(A=2, B=3, C=2)
    psi = random_state(sy, seed)
    rho = partial_trace(psi, ["C", "A"])
    assert rho.system.names == ("A", "C")  # parent order is kept
    assert abs(np.trace(rho.matrix) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12


def test_ghz_marginals():
    g = ghz()
    assert np.allclose(partial_trace(g, ["R"]).matrix, np.eye(2) / 2)
    rm = partial_trace(g, ["R", "M"]).matrix
    assert np.allclose(rm, np.diag([0.5, 0, 0, 0.5]))


def test_reorder_roundtrip():
    sy = RegisterSystem.of(A=2, B=3, C=4)
    psi = random_state(sy, 3)
    back = reorder(reorder(psi, ["C", "A", "B"]), ["A", "B", "C"])
    assert np.allclose(back.vector, psi.vector)


def test_tensor_rejects_name_clash():
    a = random_state(RegisterSystem.of(A=2), 1)
    with pytest.raises(NameClash):
        tensor(a, a)


def test_tensor_power_names():
    rho = maximally_mixed(RegisterSystem.of(A=2))
    t = tensor_power(rho, 3)
    assert t.system.names == ("A_1", "A_2", "A_3")
    assert np.allclose(t.matrix, np.eye(8) / 8)


@given(seed=st.integers(0, 10 ** 6))
def test_purify_reproduces_state(seed):
    rho = random_state(RegisterSystem.of(A=3), seed, "mixed_by_tracing")
    psi = purify(rho, "E")
    assert np.allclose(partial_trace(psi, ["A"]).matrix, rho.matrix, atol=1e-12)


def test_fidelity_conventions():
    zero = Ket(RegisterSystem.of(A=2), [1, 0])
    plus = Ket(RegisterSystem.of(A=2), np.array([1, 1]) / math.sqrt(2))
    assert fidelity(zero, plus) == pytest.approx(1 / math.sqrt(2))
    mix = maximally_mixed(RegisterSystem.of(A=2))
    assert fidelity(zero, mix) == pytest.approx(1 / math.sqrt(2))
    f, p = fidelity_pd(zero.dm(), mix)
    assert p == pytest.approx(math.sqrt(1 - f * f))


@given(seed=st.integers(0, 10 ** 6))
def test_fidelity_symmetric_and_bounded(seed):
    sy = RegisterSystem.of(A=3)
    a = random_state(sy, seed, "mixed_by_tracing")
    b = random_state(sy, seed + 1, "mixed_by_tracing")
    assert fidelity(a, b) == pytest.approx(fidelity(b, a), abs=1e-12)
    assert 0 <= purified_distance(a, b) <= 1


def test_fidelity_rank_deficient_pair_against_overlap():
    # pure-state overlap formula: F(rho_A, sigma_A) = max over purifier isometries
    sy_r = RegisterSystem.of(A=3, B=3)
    sy_s = RegisterSystem.of(A=3, C=2)
    r = random_state(sy_r, 6)
    s = random_state(sy_s, 7)
    P = r.vector.reshape(3, 3)
    S = s.vector.reshape(3, 2)
    want = np.linalg.svd(P.conj().T @ S, compute_uv=False).sum()
    got = fidelity(partial_trace(r, ["A"]), partial_trace(s, ["A"]))
    assert got == pytest.approx(want, abs=1e-12)


@given(seed=st.integers(0, 10 ** 6), db=st.integers(2, 4))
def test_uhlmann_isometry_reaches_fidelity(seed, db):
    r = random_state(RegisterSystem.of(A=3, B=db), seed)
    s = random_state(RegisterSystem.of(A=3, C=2), seed + 7)
    v = uhlmann_isometry(r, s)
    assert v.isometry_defect() < 1e-9
    theta = reorder(apply_on(s, v), r.system.names)
    want = fidelity(partial_trace(r, ["A"]), partial_trace(s, ["A"]))
    assert abs(np.vdot(r.vector, theta.vector)) == pytest.approx(want, abs=1e-9)


def test_apply_on_subsystem_unitary():
    psi = maximally_entangled("A", "B", 2)
    x = LinearMapOnRegisters([("A", 2)], [("A", 2)], np.array([[0, 1], [1, 0]]))
    out = apply_on(psi, x)
    assert np.allclose(reorder(out, ["A", "B"]).vector, np.array([0, 1, 1, 0]) / math.sqrt(2))


def test_apply_on_shape_mismatch():
    psi = maximally_entangled("A", "B", 2)
    x = LinearMapOnRegisters([("A", 3)], [("A", 3)], np.eye(3))
    with pytest.raises(ShapeError):
        apply_on(psi, x)


def test_apply_controlled_branches():
    ctrl = Ket(RegisterSystem.of(K=2), np.array([1, 1]) / math.sqrt(2))
    tgt = Ket(RegisterSystem.of(T=2), [1, 0])
    psi = tensor(ctrl, tgt)
    flip = LinearMapOnRegisters([("T", 2)], [("T", 2)], np.array([[0, 1], [1, 0]]))
    ident = LinearMapOnRegisters([("T", 2)], [("T", 2)], np.eye(2))
    out = apply_controlled(psi, ["K"], {(0,): ident, (1,): flip})
    assert np.allclose(reorder(out, ["K", "T"]).vector, np.array([1, 0, 0, 1]) / math.sqrt(2))


def test_random_state_is_seeded():
    sy = RegisterSystem.of(A=2, B=2)
    assert np.array_equal(random_state(sy, 4).vector, random_state(sy, 4).vector)
    assert not np.array_equal(random_state(sy, 4).vector, random_state(sy, 5).vector)


def test_state_file_roundtrip_is_exact(tmp_path):
    rho = random_state(RegisterSystem.of(A=2, B=3), 9, "mixed_by_tracing")
    path = tmp_path / "rho.json"
    save_state(rho, path)
    back = load_state(path)
    assert np.array_equal(back.matrix, rho.matrix)
    assert dumps_state(back) == path.read_text()
    psi = random_state(RegisterSystem.of(A=2), 2)
    assert np.array_equal(loads_state(dumps_state(psi)).vector, psi.vector)


def test_state_file_rejects_bad_size():
    text = '{"registers": [{"name": "A", "dim": 2}], "kind": "mixed", "data": [[1, 0]]}'
    with pytest.raises(ShapeError):
        loads_state(text)


def test_density_operator_validation():
    with pytest.raises(Exception):
        DensityOperator(RegisterSystem.of(A=2), np.diag([2.0, -1.0]))


@given(seed=st.integers(0, 10 ** 6))
def test_marginal_fidelity_matches_mixed_formula(seed):
    from oneshot_qsw.qstate import marginal_fidelity

    a = random_state(RegisterSystem.of(A=3, B=2), seed)
    b = random_state(RegisterSystem.of(A=3, C=4), seed + 1)
    want = fidelity(partial_trace(a, ["A"]), partial_trace(b, ["A"]))
    assert marginal_fidelity(a, b, ["A"]) == pytest.approx(want, abs=1e-9)


def test_purified_distance_resolves_nearby_states():
    a = random_state(RegisterSystem.of(A=3), 1, "mixed_by_tracing")
    b = random_state(RegisterSystem.of(A=3), 2, "mixed_by_tracing")
    d = [purified_distance(a, DensityOperator(a.system, (1 - t) * a.matrix + t * b.matrix)) for t in (1e-5, 1e-7)]
    # the distance is linear in the mixing weight near zero
    assert d[1] == pytest.approx(d[0] / 100, rel=1e-3)
    assert purified_distance(a, a) < 1e-12
    k = random_state(RegisterSystem.of(A=3), 4)
    assert purified_distance(k, k) < 1e-12
