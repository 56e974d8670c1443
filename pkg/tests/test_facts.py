import pytest
from hypothesis import given, strategies as st

from oneshot_qsw.facts import FACT_CHECKS, run_fact, run_fact_suite


@pytest.mark.parametrize("name", sorted(FACT_CHECKS))
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_fact_holds_on_random_instances(name, seed):
    assert FACT_CHECKS[name](seed) >= -1e-7


def test_checks_are_deterministic():
    for check in FACT_CHECKS.values():
        assert check(17) == check(17)


def test_suite_summary_counts():
    rows = run_fact_suite(count=3, names=["mixture identity", "hayashi nagaoka"])
    assert [r.instances for r in rows] == [3, 3]
    assert all(r.passed for r in rows)
    d = rows[0].to_dict()
    assert set(d) == {"name", "instances", "violations", "worst_slack", "passed"}


def test_identity_checks_are_tight():
    # identities report minus the discrepancy, so the worst slack sits near zero
    for name in ("mixture identity", "uhlmann overlap", "pure state spectrum"):
        assert -1e-9 <= run_fact(name, range(20)).worst_slack <= 0.0
