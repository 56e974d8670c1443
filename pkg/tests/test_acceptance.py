"""Acceptance criteria, one test each.

Every test stores a one-line PASS/FAIL verdict in ``RESULTS``; the
conftest hook prints them after the run. Running this file directly
prints the same lines without pytest.
"""

import math
import time

import numpy as np
import pytest

from oneshot_qsw import (
    DensityOperator,
    RegisterSystem,
    apply_on,
    dmax,
    hypothesis_testing_divergence,
    iid_region,
    mutual_information,
    optimal_test,
    partial_trace,
    random_state,
    uhlmann_isometry,
)
from oneshot_qsw.convexsplit import verify_lemma
from oneshot_qsw.decoder import verify_decoding, hayashi_nagaoka_residual
from oneshot_qsw.facts import FACT_CHECKS, run_fact_suite
from oneshot_qsw.instances import convex_split_instance, decoder_micro, ghz_rmn, protocol_state, random_rmn
from oneshot_qsw.protocol import ProtocolInstance, plan_rates, run_task1, run_task2, verify_end_to_end
from oneshot_qsw.qstate import fidelity, random_test, reorder
from oneshot_qsw.regions import converse_gap_report
from oneshot_qsw.surgery import classical_dh_iid, second_order_table, smoothed_state_pipeline, verify_surgery

from oracles import classical_dh_lp, classical_dh_threshold, qubit_dh_grid

RESULTS = {}
MICRO = {"R_A": 1, "R_B": 1, "r_A": 0, "r_B": 0}


def record(number, title, ok, detail, started, limit=None):
    elapsed = time.perf_counter() - started
    if limit is not None and elapsed >= limit:
        ok = False
        detail += f"; runtime {elapsed:.1f}s exceeds {limit}s"
    RESULTS[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} ({elapsed:.1f}s)"
    print(RESULTS[number])
    return ok


def test_divergence_identities():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        d = int(np.random.default_rng(seed).integers(2, 9))
        rho = random_state(RegisterSystem.of(A=d), seed, "mixed_by_tracing")
        for eps in (0.1, 0.5):
            worst = max(worst, abs(hypothesis_testing_divergence(rho, rho, eps) - math.log2(1 / (1 - eps))))
        worst = max(worst, abs(dmax(rho, rho).value))
    ok = record(1, "divergence identities", worst <= 1e-9, f"worst deviation {worst:.2e} on 50 states", t0, 10)
    assert ok


def test_neyman_pearson_oracle():
    t0 = time.perf_counter()
    worst_diag = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        d = int(rng.integers(2, 7))
        p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        eps = float(rng.uniform(0.05, 0.95))
        sy = RegisterSystem.of(A=d)
        got = optimal_test(DensityOperator(sy, np.diag(p)), DensityOperator(sy, np.diag(q)), eps).value
        worst_diag = max(worst_diag, abs(got - classical_dh_threshold(p, q, eps)), abs(got - classical_dh_lp(p, q, eps)))
    worst_grid = 0.0
    below = True
    sy = RegisterSystem.of(A=2)
    for seed in range(20):
        rho = random_state(sy, 2000 + seed, "mixed_by_tracing")
        sigma = random_state(sy, 3000 + seed, "mixed_by_tracing")
        eps = 0.1 + 0.8 * (seed % 5) / 4
        exact = optimal_test(rho, sigma, eps).value
        grid = qubit_dh_grid(rho.matrix, sigma.matrix, eps, step=1e-2)
        worst_grid = max(worst_grid, abs(exact - grid))
        below &= grid <= exact + 1e-9
    ok = worst_diag <= 1e-9 and worst_grid <= 2e-2 and below
    detail = f"diagonal worst {worst_diag:.2e}, qubit grid worst {worst_grid:.2e}"
    assert record(2, "Neyman-Pearson oracle", ok, detail, t0, 60)


def test_fact_suite():
    t0 = time.perf_counter()
    rows = run_fact_suite(count=100, tol=1e-7)
    bad = [r.name for r in rows if not r.passed]
    ok = not bad and all(r.instances >= 100 for r in rows) and len(rows) == len(FACT_CHECKS)
    detail = f"{len(rows)} facts x 100 instances, " + ("zero violations" if not bad else f"violations in {bad}")
    assert record(3, "fact suite", ok, detail, t0, 120)


def test_uhlmann_equality():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(4000 + seed)
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        dc = int(rng.integers(2, db + 1))  # the isometry C -> B needs dc <= db
        r = random_state(RegisterSystem.of(A=da, B=db), 5000 + seed)
        s = random_state(RegisterSystem.of(A=da, C=dc), 6000 + seed)
        v = uhlmann_isometry(r, s)
        overlap = abs(np.vdot(r.vector, reorder(apply_on(s, v), r.system.names).vector))
        worst = max(worst, abs(overlap - fidelity(partial_trace(r, ["A"]), partial_trace(s, ["A"]))))
    assert record(4, "Uhlmann equality", worst <= 1e-9, f"worst gap {worst:.2e} on 100 instances", t0)


def test_convex_split():
    t0 = time.perf_counter()
    failures, worst_margin = 0, -math.inf
    for seed in range(100):
        ra, rb = 1 + seed % 2, 1 + (seed // 2) % 2
        rep = verify_lemma(convex_split_instance(seed, ra, rb), tol=1e-7)
        p_ok = rep.exact_P <= 0.01 + 2 * math.sqrt(rep.delta_eff) + 1e-7
        d_ok = rep.exact_D_prime <= rep.relent_bound + 1e-7
        failures += not (p_ok and d_ok)
        worst_margin = max(worst_margin, rep.exact_P - (0.01 + 2 * math.sqrt(rep.delta_eff)))
    prod = max(verify_lemma(convex_split_instance(s, 1, 1, product=True)).exact_P for s in range(5))
    ok = failures == 0 and prod <= 1e-9
    detail = f"{failures} failures in 100, worst P minus bound {worst_margin:.3f}, product P {prod:.1e}"
    assert record(5, "convex split", ok, detail, t0, 120)


def test_position_decoder():
    t0 = time.perf_counter()
    eps2 = 0.15
    used, seed, worst, row_defect, skipped = 0, 0, math.inf, 0.0, 0
    while used < 20 and seed < 200:
        psi, sig, om = decoder_micro(seed)
        seed += 1
        rep = verify_decoding(psi, sig, om, eps2, 1, 1)
        if not rep.preconditions_hold:
            skipped += 1
            continue
        used += 1
        worst = min(worst, rep.F2 - (1 - 24 * eps2 ** 2))
        row_defect = max(row_defect, rep.row_sum_defect)
    rng = np.random.default_rng(7)
    hn = math.inf
    for _ in range(200):
        d = int(rng.integers(2, 5))
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        hn = min(hn, hayashi_nagaoka_residual(random_test(RegisterSystem.of(A=d), rng).matrix, g @ g.conj().T / d))
    ok = used == 20 and worst >= -1e-7 and row_defect <= 1e-9 and hn >= -1e-9
    detail = (f"{used} instances ({skipped} skipped), min F^2 slack {worst:.3f}, "
              f"row-sum defect {row_defect:.1e}, Hayashi-Nagaoka min {hn:.2e}")
    assert record(6, "position-based decoder", ok, detail, t0)


def test_end_to_end_protocol():
    t0 = time.perf_counter()
    inst = ProtocolInstance(protocol_state(0, "product"), eps1=0.05, eps2=0.1, delta=0.05)
    p_prod = run_task2(inst, plan_rates(inst, override=MICRO)).P_final
    bad, worst_gap, max_p, vacuous = 0, 0.0, 0.0, 0
    for seed in range(10):
        inst = ProtocolInstance(protocol_state(seed, "near_product"), eps1=0.05, eps2=0.1, delta=0.05)
        cert = plan_rates(inst, override=MICRO)
        t2 = run_task2(inst, cert, keep_states=True)
        t1 = run_task1(inst, cert, theta_prime=(t2.states["theta_prime_1"], t2.states["theta_prime_2"]))
        bound = inst.eps1 + 5 * inst.eps2 + 2 * math.sqrt(cert.delta_eff)
        gap = abs(t1.P_final - t2.P_final)
        worst_gap = max(worst_gap, gap)
        max_p = max(max_p, t2.P_final)
        vacuous += bound >= 1
        ver = verify_end_to_end(inst, cert, t2)
        bad += not (t2.P_final <= bound + 1e-6 and gap <= 1e-8 and ver["passed"])
    ok = p_prod <= 1e-6 and bad == 0
    detail = (f"product P {p_prod:.1e}, {bad} failures in 10, max P {max_p:.3f}, "
              f"bound >= 1 in {vacuous} of 10, task gap {worst_gap:.1e}")
    assert record(7, "end-to-end protocol", ok, detail, t0, 300)


def test_state_surgery():
    t0 = time.perf_counter()
    cases = [("ghz", ghz_rmn(), 0.3), ("random 1", random_rmn(1), 0.5), ("random 2", random_rmn(2), 0.5)]
    failed, min_purity = [], 1.0
    for label, state, delta in cases:
        for n in (2, 3):
            _, rep = smoothed_state_pipeline(state, n, delta)
            flags = verify_surgery(rep)
            if not flags["passed"]:
                failed.append(f"{label} n={n}")
            else:
                min_purity = min(min_purity, rep.purity)
    ok = not failed and min_purity >= 1 - 1e-9
    detail = f"6 runs, min purity {min_purity:.12f}" + (f", failed {failed}" if failed else "")
    assert record(8, "state surgery", ok, detail, t0, 120)


def test_second_order_convergence():
    t0 = time.perf_counter()
    ok, worst = True, -math.inf
    for eps in (0.25, 0.5):
        rows = {n: gap for n, _, _, gap in second_order_table([0.5, 0.5], [0.9, 0.1], eps, range(4, 21))}
        for n, gap in rows.items():
            worst = max(worst, gap - (10 + 2 * math.log2(n)))
            ok &= gap <= 10 + 2 * math.log2(n)
        scaled = [rows[n] / math.sqrt(n) for n in (8, 12, 16, 20)]
        ok &= all(b <= a + 0.1 for a, b in zip(scaled, scaled[1:]))
    assert classical_dh_iid([0.5, 0.5], [0.9, 0.1], 4, 0.25) > 0
    assert record(9, "second-order convergence", ok, f"worst gap minus allowance {worst:.2f} bits", t0, 60)


def test_rate_regions():
    t0 = time.perf_counter()
    corners = sorted(iid_region(ghz_rmn()).corners)
    corner_err = max(abs(a - b) for c, w in zip(corners, [(0.5, 1.0), (1.0, 0.5)]) for a, b in zip(c, w))
    corners_ok = len(corners) == 2 and corner_err <= 1e-9
    red_err = 0.0
    for seed in range(5):
        psi = random_state(RegisterSystem.of(R=2, A=2, M=2), seed)
        want = 0.5 * (mutual_information(psi, [["R", "A"], ["M"]]) - mutual_information(psi, [["A"], ["M"]]))
        red_err = max(red_err, abs(iid_region(psi).constraints[0].c - want))
    reports = [converse_gap_report(random_rmn(seed), 0.1, 0.05) for seed in range(10)]
    gaps_ok = all(r["matches"] for rep in reports for r in rep["constraints"].values())
    ok = corners_ok and red_err <= 1e-9 and gaps_ok
    detail = f"corner error {corner_err:.1e}, reduction error {red_err:.1e}, 10 gap reports consistent={gaps_ok}"
    assert record(10, "rate regions", ok, detail, t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
