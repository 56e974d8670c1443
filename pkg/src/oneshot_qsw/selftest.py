"""Invariant suites behind ``oneshot-qsw selftest``.

Each suite returns ``{"passed": bool, ...details}``. ``quick`` shrinks
instance counts so the whole run takes a few seconds.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .convexsplit import verify_lemma
from .decoder import verify_decoding, hayashi_nagaoka_residual
from .divergences import dmax, hypothesis_testing_divergence, optimal_test
from .facts import run_fact_suite
from .instances import convex_split_instance, decoder_micro, ghz_rmn, protocol_state
from .protocol import ProtocolInstance, plan_rates, run_task1, run_task2, verify_end_to_end
from .qstate import DensityOperator, RegisterSystem, random_state, random_test
from .regions import iid_region
from .surgery import second_order_table, smoothed_state_pipeline, verify_surgery

MICRO_RATES = {"R_A": 1, "R_B": 1, "r_A": 0, "r_B": 0}


def threshold_enumeration_dh(p, q, eps) -> float:
    """Classical ``D_H^eps`` by a likelihood-ratio sweep with one fractional entry."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore"):
        ratio = np.where(q > 0, p / np.where(q > 0, q, 1.0), np.inf)
    need = 1.0 - eps
    kept_q = 0.0
    for i in np.argsort(-ratio, kind="stable"):
        if need <= 0:
            break
        take = min(1.0, need / p[i]) if p[i] > 0 else 0.0
        need -= take * p[i]
        kept_q += take * q[i]
    return -math.log2(kept_q)


def suite_divergence_identities(quick, seed, tol):
    n = 10 if quick else 50
    worst = 0.0
    for s in range(seed, seed + n):
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 9))
        rho = random_state(RegisterSystem.of(A=d), s, "mixed_by_tracing")
        for eps in (0.1, 0.5):
            worst = max(worst, abs(hypothesis_testing_divergence(rho, rho, eps) - math.log2(1 / (1 - eps))))
        worst = max(worst, abs(dmax(rho, rho).value))
    return {"passed": worst <= tol, "instances": n, "worst": worst}


def suite_neyman_pearson(quick, seed, tol):
    n = 10 if quick else 50
    worst = 0.0
    for s in range(seed, seed + n):
        rng = np.random.default_rng(s)
        d = int(rng.integers(2, 7))
        p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        eps = float(rng.uniform(0.05, 0.95))
        sy = RegisterSystem.of(A=d)
        val = optimal_test(DensityOperator(sy, np.diag(p)), DensityOperator(sy, np.diag(q)), eps).value
        worst = max(worst, abs(val - threshold_enumeration_dh(p, q, eps)))
    return {"passed": worst <= tol, "instances": n, "worst": worst}


def suite_facts(quick, seed, tol):
    rows = run_fact_suite(count=10 if quick else 100, tol=tol, seed0=seed)
    return {"passed": all(r.passed for r in rows), "facts": [r.to_dict() for r in rows]}


def suite_convex_split(quick, seed, tol):
    n = 2 if quick else 10
    prod = verify_lemma(convex_split_instance(seed, 1, 1, product=True))
    ok = prod.exact_P <= 1e-9
    worst = -math.inf
    for s in range(seed, seed + n):
        rep = verify_lemma(convex_split_instance(s, 1 + s % 2, 1 + (s // 2) % 2), tol=tol)
        ok &= bool(rep.within_bound)
        worst = max(worst, rep.exact_P - (rep.certified_P if math.isfinite(rep.certified_P) else math.inf))
    return {"passed": bool(ok), "product_P": prod.exact_P, "worst_margin": worst, "instances": n}


def suite_decoder(quick, seed, tol):
    n = 2 if quick else 10
    ok, rows = True, []
    for s in range(seed, seed + n):
        psi, sig, om = decoder_micro(s)
        rep = verify_decoding(psi, sig, om, 0.15, 1, 1, tol=tol)
        ok &= bool(rep.claim_holds) and rep.row_sum_defect <= 1e-9
        rows.append(rep.F2)
    rng = np.random.default_rng(seed)
    hn = []
    for _ in range(20 if quick else 200):
        d = int(rng.integers(2, 5))
        sy = RegisterSystem.of(A=d)
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        hn.append(hayashi_nagaoka_residual(random_test(sy, rng).matrix, g @ g.conj().T / d))
    ok &= min(hn) >= -1e-9
    return {"passed": bool(ok), "F2": rows, "hayashi_nagaoka_min": min(hn)}


def suite_protocol(quick, seed, tol):
    kinds = [("product", seed)] + [("near_product", s) for s in range(seed, seed + (1 if quick else 3))]
    ok, rows = True, []
    for kind, s in kinds:
        inst = ProtocolInstance(protocol_state(s, kind), eps1=0.05, eps2=0.1, delta=0.05)
        cert = plan_rates(inst, override=MICRO_RATES)
        t2 = run_task2(inst, cert, keep_states=True)
        t1 = run_task1(inst, cert, theta_prime=(t2.states["theta_prime_1"], t2.states["theta_prime_2"]))
        ver = verify_end_to_end(inst, cert, t2, tol=max(tol, 1e-6))
        gap = abs(t1.P_final - t2.P_final)
        good = ver["passed"] and gap <= 1e-8 and (kind != "product" or t2.P_final <= 1e-6)
        ok &= bool(good)
        rows.append({"kind": kind, "seed": s, "P": t2.P_final, "task_gap": gap, "passed": bool(good)})
    return {"passed": bool(ok), "runs": rows}


def suite_regions(quick, seed, tol):
    reg = iid_region(ghz_rmn())
    got = sorted(reg.corners)
    want = [(0.5, 1.0), (1.0, 0.5)]
    err = max(abs(a - b) for g, w in zip(got, want) for a, b in zip(g, w))
    return {"passed": len(got) == 2 and err <= 1e-9 and reg.check(), "corners": got}


def suite_second_order(quick, seed, tol):
    ns = range(4, 9) if quick else range(4, 21)
    ok = True
    for eps in (0.25, 0.5):
        for n, exact, est, gap in second_order_table([0.5, 0.5], [0.9, 0.1], eps, ns):
            ok &= gap <= 10 + 2 * math.log2(n)
    return {"passed": bool(ok)}


def suite_surgery(quick, seed, tol):
    ns = (2,) if quick else (2, 3)
    ok, rows = True, []
    for n in ns:
        _, rep = smoothed_state_pipeline(ghz_rmn(), n, 0.3)
        flags = verify_surgery(rep, tol=tol)
        ok &= bool(flags["passed"])
        rows.append({"n": n, "passed": flags["passed"]})
    return {"passed": bool(ok), "runs": rows}


SUITES = {
    "divergence identities": suite_divergence_identities,
    "neyman pearson": suite_neyman_pearson,
    "facts": suite_facts,
    "convex split": suite_convex_split,
    "decoder": suite_decoder,
    "protocol": suite_protocol,
    "regions": suite_regions,
    "second order": suite_second_order,
    "surgery": suite_surgery,
}


def _run_one(args):
    name, quick, seed, tol = args
    return name, SUITES[name](quick, seed, tol)


def run_selftest(quick=False, seed=0, tol=1e-7, jobs=1) -> dict:
    """Run every suite; ``jobs > 1`` spreads suites over worker processes."""
    work = [(name, quick, seed, tol) for name in SUITES]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = dict(ex.map(_run_one, work))
    else:
        results = dict(map(_run_one, work))
    return {"passed": all(r["passed"] for r in results.values()), "suites": results}
