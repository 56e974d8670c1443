import json

import pytest
from hypothesis import given, settings, strategies as st

from oneshot_qsw import ContractViolation, DomainError, RegisterSystem, ShapeError, mutual_information, random_state
from oneshot_qsw.instances import ghz_rmn, random_rmn
from oneshot_qsw.protocol import ProtocolInstance
from oneshot_qsw.qstate import partial_trace
from oneshot_qsw.regions import (
    converse_gap_report,
    converse_region,
    export_region,
    iid_region,
    make_region,
    message_register_check,
    oneshot_region,
    union_of_regions,
)

GHZ_CSV = (
    "R1,R2,kind\n"
    "0.5,1.0,corner\n"
    "1.0,0.5,corner\n"
    "1,0,constraint>=0.5\n"
    "0,1,constraint>=0.5\n"
    "1,1,constraint>=1.5\n"
)


def test_ghz_corners():
    reg = iid_region(ghz_rmn())
    assert reg.c_values() == pytest.approx({"R1": 0.5, "R2": 0.5, "R1+R2": 1.5}, abs=1e-9)
    got = sorted(reg.corners)
    for g, w in zip(got, [(0.5, 1.0), (1.0, 0.5)]):
        assert g == pytest.approx(w, abs=1e-9)
    assert reg.check()


def test_ghz_csv_bytes():
    assert export_region(iid_region(ghz_rmn()), "csv") == GHZ_CSV.encode()


def test_json_export_schema():
    obj = json.loads(export_region(iid_region(ghz_rmn()), "json"))
    assert obj["schema"] == 1 and obj["kind"] == "iid"
    assert {c["label"] for c in obj["constraints"]} == {"R1", "R2", "R1+R2"}
    assert len(obj["corners"]) == 2 and obj["unconstrained"] is False
    with pytest.raises(DomainError):
        export_region(iid_region(ghz_rmn()), "xml")


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=10)
def test_single_sided_reduction(seed):
    psi = random_state(RegisterSystem.of(R=2, A=2, M=2), seed)
    reg = iid_region(psi)
    want = 0.5 * (mutual_information(psi, [["R", "A"], ["M"]]) - mutual_information(psi, [["A"], ["M"]]))
    assert [c.label for c in reg.constraints] == ["R1"]
    assert reg.constraints[0].c == pytest.approx(want, abs=1e-9)
    assert reg.corners == [(pytest.approx(want), 0.0)]


def test_iid_region_rejects_charlie_side_information():
    psi = random_state(RegisterSystem.of(R=2, M=2, N=2, C=2), 0)
    with pytest.raises(ShapeError):
        iid_region(psi)


@pytest.mark.parametrize("seed", range(3))
def test_converse_gap_matches_hypothesis_terms(seed):
    rep = converse_gap_report(random_rmn(seed), 0.1, 0.05)
    for row in rep["constraints"].values():
        assert row["matches"]
        assert row["converse_below"] in (True, None)


def test_converse_region_checks_reference_marginal():
    psi = random_rmn(4)
    other = random_rmn(5).dm()
    with pytest.raises(ContractViolation):
        converse_region(other, partial_trace(psi, ["R"]), partial_trace(psi, ["M"]), partial_trace(psi, ["N"]))


def test_oneshot_region_is_well_formed():
    reg = oneshot_region(ProtocolInstance(random_rmn(1), eps1=0.05, eps2=0.1, delta=0.05))
    assert reg.check() and reg.kind == "oneshot"
    assert set(reg.c_values()) == {"R1", "R2", "R1+R2"}


def test_union_drops_dominated_corners():
    a = make_region(1.0, 1.0, 3.0)
    b = make_region(0.5, 2.5, 3.0)
    c = make_region(2.0, 2.0, None)
    pts = union_of_regions([a, b, c])
    assert (2.0, 2.0) not in pts
    assert pts == sorted(pts) and (0.5, 2.5) in pts


def test_make_region_corner_cases():
    assert make_region(1.0, 1.0, 1.5).corners == [(1.0, 1.0)]
    assert make_region(None, 2.0, None).corners == [(0.0, 2.0)]
    assert make_region(None, None, None).corners == []
    assert export_region(make_region(None, None, None)) == b"R1,R2,kind\nnan,nan,unconstrained\n"


@pytest.mark.parametrize("state", [ghz_rmn(), random_rmn(3), random_rmn(3, dim=3)])
def test_message_register_bounds(state):
    assert message_register_check(state)["passed"]
