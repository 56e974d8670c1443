"""``oneshot-qsw`` command-line front end.

Exit codes: 0 success, 1 a checked inequality failed beyond tolerance,
2 usage or input error. Reports are JSON (``"schema": 1``) or CSV, written
to stdout or ``--out``. The default seed comes from ``ONESHOT_QSW_SEED``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import QSWError
from .stateio import dumps_report, dumps_state, load_state, state_from_obj, state_to_obj

SCHEMA = 1
REVERSAL_TOL = 1e-8


class CheckFailed(Exception):
    """Carries a report whose checks did not all pass (exit code 1)."""

    def __init__(self, payload):
        super().__init__("check failed")
        self.payload = payload


def _default_seed() -> int:
    raw = os.environ.get("ONESHOT_QSW_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: ONESHOT_QSW_SEED must be an integer, got {raw!r}")


def _groups(text: str):
    """``"R+A:M"`` -> ``[["R", "A"], ["M"]]``."""
    return [[n for n in g.split("+") if n] for g in text.split(":")]


def _floats(text: str):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_range(text: str):
    """``"4:20"`` or ``"4:20:4"`` (inclusive) or ``"4,8,12"``."""
    if ":" in text:
        parts = [int(x) for x in text.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(lo, hi + 1, step))
    return [int(x) for x in text.split(",") if x.strip()]


def _report(command, body: dict) -> dict:
    out = {"schema": SCHEMA, "command": command}
    out.update(body)
    return out


# ---------------------------------------------------------------------------
# instance documents
# ---------------------------------------------------------------------------


def _load_doc(path):
    text = Path(path).read_text(encoding="utf-8")
    obj = json.loads(text)
    if "registers" in obj:
        return {"psi": state_from_obj(obj)}
    doc = dict(obj)
    for key in ("psi", "psi_prime", "sigma_M", "omega_N"):
        if doc.get(key) is not None:
            doc[key] = state_from_obj(doc[key])
    return doc


def _protocol_instance(doc, args):
    from .protocol import ProtocolInstance

    def pick(name, default):
        v = getattr(args, name, None)
        return v if v is not None else doc.get(name, default)

    psi = doc["psi"]
    if not hasattr(psi, "vector"):
        raise QSWError("protocol instances need a pure state 'psi'")
    return ProtocolInstance(psi, doc.get("psi_prime"), doc.get("sigma_M"), doc.get("omega_N"),
                            eps1=pick("eps1", 0.05), eps2=pick("eps2", 0.1), delta=pick("delta", 0.05))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args):
    from .instances import generate

    state = generate(args.kind, args.seed, t=args.t, dim=args.dim)
    if not args.instance:
        return dumps_state(state)
    doc = _report("gen", {
        "kind": args.kind,
        "seed": args.seed,
        "psi": state_to_obj(state),
        "eps1": args.eps1 if args.eps1 is not None else 0.05,
        "eps2": args.eps2 if args.eps2 is not None else 0.1,
        "delta": args.delta if args.delta is not None else 0.05,
    })
    return doc


def cmd_entropy(args):
    from .divergences import mutual_information, relative_entropy_to_product, von_neumann_entropy
    from .qstate import partial_trace

    rho = load_state(args.inp)
    names = list(rho.system.names)
    ent = {f"S({n})": von_neumann_entropy(partial_trace(rho, [n])) for n in names}
    ent["S(" + "".join(names) + ")"] = von_neumann_entropy(rho)
    mi, tri, checks = {}, {}, {}

    def cross(groups, value, label):
        marg = [partial_trace(rho, g) for g in groups]
        flat = [n for g in groups for n in g]
        d = relative_entropy_to_product(partial_trace(rho, flat), marg)
        checks[f"{label} = D(rho || product of marginals)"] = abs(d - value) <= 1e-8

    for entry in filter(None, (args.pairs or "").split(",")):
        g = _groups(entry)
        if len(g) != 2:
            raise QSWError(f"--pairs entry {entry!r} needs exactly two groups")
        label = "I(" + ":".join("".join(x) for x in g) + ")"
        mi[label] = mutual_information(rho, g)
        cross(g, mi[label], label)
    for entry in filter(None, (args.tri or "").split(",")):
        g = _groups(entry)
        if len(g) != 3:
            raise QSWError(f"--tri entry {entry!r} needs exactly three groups")
        label = "I(" + ":".join("".join(x) for x in g) + ")"
        tri[label] = mutual_information(rho, g)
        cross(g, tri[label], label)
    rep = _report("entropy", {"entropies": ent, "mutual_information": mi, "tripartite": tri,
                              "checks": checks, "passed": all(checks.values())})
    if not rep["passed"]:
        raise CheckFailed(rep)
    return rep


def cmd_convex_split(args):
    from .convexsplit import ConvexSplitInstance, verify_lemma
    from .instances import convex_split_instance
    from .qstate import partial_trace

    if args.inp:
        rho = load_state(args.inp)
        if hasattr(rho, "dm"):
            rho = rho.dm()
        prime = load_state(args.prime) if args.prime else rho
        if hasattr(prime, "dm"):
            prime = prime.dm()
        a, b = _groups(args.a_names)[0], _groups(args.b_names)[0]
        inst = ConvexSplitInstance(rho, prime, partial_trace(rho, a), partial_trace(rho, b),
                                   args.RA, args.RB, args.delta, args.epsilon)
    else:
        inst = convex_split_instance(args.seed, args.RA, args.RB, epsilon=args.epsilon, delta=args.delta)
    rep = verify_lemma(inst, tol=args.tol)
    out = _report("convex-split", {"report": rep.to_dict(), "passed": bool(rep.within_bound)})
    if not out["passed"]:
        raise CheckFailed(out)
    return out


def cmd_decode(args):
    from .decoder import verify_decoding
    from .instances import decoder_micro

    if args.inp:
        psi = load_state(args.inp)
        sig = load_state(args.sigma) if args.sigma else None
        om = load_state(args.omega) if args.omega else None
        if sig is None or om is None:
            from .qstate import partial_trace

            sig = sig or partial_trace(psi, ["M"])
            om = om or partial_trace(psi, ["N"])
    else:
        psi, sig, om = decoder_micro(args.seed)
    rep = verify_decoding(psi, sig, om, args.eps2, args.rA, args.rB, tol=args.tol)
    body = rep.to_dict()
    body["confusion_row_sums_ok"] = rep.row_sum_defect <= 1e-9
    passed = rep.claim_holds is not False and body["confusion_row_sums_ok"]
    out = _report("decode", {"report": body, "passed": bool(passed)})
    if not passed:
        raise CheckFailed(out)
    return out


def cmd_protocol(args):
    from .protocol import plan_rates, rate_terms, run_task1, run_task2, verify_end_to_end

    inst = _protocol_instance(_load_doc(args.inp), args)
    terms = rate_terms(inst)
    override = None
    if args.rates:
        vals = [int(x) for x in args.rates.split(",")]
        if len(vals) != 4:
            raise QSWError("--rates takes R_A,R_B,r_A,r_B")
        override = dict(zip(("R_A", "R_B", "r_A", "r_B"), vals))
    cert = plan_rates(inst, override=override, terms=terms)
    t2 = run_task2(inst, cert, keep_states=True, terms=terms)
    ver = verify_end_to_end(inst, cert, t2, tol=max(args.tol, 1e-6))
    body = {"certificate": cert.to_dict(), "instance_checks": inst.checks(),
            "task2": t2.to_dict(emit_states=args.emit_states), "verification": ver}
    passed = bool(ver["passed"])
    if args.task in ("1", "both"):
        t1 = run_task1(inst, cert, theta_prime=(t2.states["theta_prime_1"], t2.states["theta_prime_2"]),
                       terms=terms)
        gap = abs(t1.P_final - t2.P_final)
        body["task1"] = t1.to_dict(emit_states=args.emit_states)
        body["task1_task2_gap"] = gap
        passed = passed and gap <= REVERSAL_TOL
    body["passed"] = passed
    out = _report("protocol run", body)
    if not passed:
        raise CheckFailed(out)
    return out


def cmd_surgery_run(args):
    from .surgery import smoothed_state_pipeline, verify_surgery

    rho = load_state(args.inp)
    if not hasattr(rho, "vector"):
        raise QSWError("surgery needs a pure rho_RMN")
    _, rep = smoothed_state_pipeline(rho, args.n, args.delta, eps_cut=args.eps_cut)
    flags = verify_surgery(rep, tol=args.tol)
    out = _report("surgery run", {"report": rep.to_dict(), "flags": flags, "passed": bool(flags["passed"])})
    if not out["passed"]:
        raise CheckFailed(out)
    return out


def cmd_surgery_second_order(args):
    import io
    import csv

    from .surgery import second_order_table

    rows = second_order_table(_floats(args.p), _floats(args.q), args.eps, _int_range(args.ns))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "exact", "estimate", "gap"])
    for n, exact, est, gap in rows:
        w.writerow([n, repr(float(exact)), repr(float(est)), repr(float(gap))])
    return buf.getvalue()


def cmd_region(args):
    from .regions import converse_gap_report, converse_region, export_region, iid_region, oneshot_region
    from .qstate import partial_trace

    doc = _load_doc(args.inp)
    psi = doc["psi"]
    if args.which == "iid":
        region = iid_region(psi)
    elif args.which == "oneshot":
        region = oneshot_region(_protocol_instance(doc, args))
    elif args.which == "converse":
        inst = _protocol_instance(doc, args)
        full = inst.psi
        region = converse_region(partial_trace(full, ["R", "M", "N", "C"]), partial_trace(full, ["R"]),
                                 inst.sigma_M, inst.omega_N)
    else:  # gap
        rep = converse_gap_report(psi, args.eps2 if args.eps2 is not None else 0.1,
                                  args.delta if args.delta is not None else 0.05)
        ok = all(r["matches"] for r in rep["constraints"].values())
        out = _report("region gap", {"constraints": rep["constraints"], "passed": ok})
        if not ok:
            raise CheckFailed(out)
        return out
    data = export_region(region, args.format).decode()
    if not region.check():
        raise CheckFailed(data)
    return data


def cmd_selftest(args):
    from .selftest import run_selftest

    res = run_selftest(quick=args.quick, seed=args.seed, tol=args.tol, jobs=args.jobs)
    out = _report("selftest", res)
    if not res["passed"]:
        raise CheckFailed(out)
    return out


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed (default $ONESHOT_QSW_SEED or 0)")
    common.add_argument("--tol", type=float, default=1e-7, help="slack for inequality checks")
    common.add_argument("--id-tol", type=float, default=1e-9, help="slack for algebraic identities")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for instance batches")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")

    p = argparse.ArgumentParser(prog="oneshot-qsw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="write a seeded instance")
    g.add_argument("kind", help="ghz, rmn, product, near_product, haar, decoder_micro, convex_split")
    g.add_argument("--t", type=float, default=0.05, help="correlation weight for near_product")
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--instance", action="store_true", help="wrap the state in a protocol instance document")
    for name in ("eps1", "eps2", "delta"):
        g.add_argument(f"--{name}", type=float, default=None)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("entropy", parents=[common], help="entropies and mutual informations")
    e.add_argument("--in", dest="inp", required=True)
    e.add_argument("--pairs", default="", help="e.g. R:M,R+A:N")
    e.add_argument("--tri", default="", help="e.g. R:M:N")
    e.set_defaults(func=cmd_entropy)

    c = sub.add_parser("convex-split", parents=[common], help="dense convex-split check")
    c.add_argument("--in", dest="inp", default=None, help="rho_RAB state (default: seeded instance)")
    c.add_argument("--prime", default=None, help="smoothed state rho'_RAB (default rho)")
    c.add_argument("--a-names", default="A")
    c.add_argument("--b-names", default="B")
    c.add_argument("--RA", type=int, default=1)
    c.add_argument("--RB", type=int, default=1)
    c.add_argument("--epsilon", type=float, default=0.01)
    c.add_argument("--delta", type=float, default=0.05)
    c.set_defaults(func=cmd_convex_split)

    d = sub.add_parser("decode", parents=[common], help="position-based decoding check")
    d.add_argument("--in", dest="inp", default=None, help="pure psi on R,A,M,B,N (default: seeded micro instance)")
    d.add_argument("--sigma", default=None)
    d.add_argument("--omega", default=None)
    d.add_argument("--eps2", type=float, default=0.15)
    d.add_argument("--rA", type=int, default=1)
    d.add_argument("--rB", type=int, default=1)
    d.set_defaults(func=cmd_decode)

    pr = sub.add_parser("protocol", help="simulate the redistribution protocol")
    prs = pr.add_subparsers(dest="action", required=True)
    run = prs.add_parser("run", parents=[common])
    run.add_argument("--in", dest="inp", required=True, help="pure state or instance document")
    run.add_argument("--rates", default=None, help="override R_A,R_B,r_A,r_B")
    run.add_argument("--task", choices=("1", "2", "both"), default="both")
    run.add_argument("--emit-states", action="store_true")
    for name in ("eps1", "eps2", "delta"):
        run.add_argument(f"--{name}", type=float, default=None)
    run.set_defaults(func=cmd_protocol)

    su = sub.add_parser("surgery", help="typical projections and eigenvalue cuts")
    sus = su.add_subparsers(dest="action", required=True)
    sr = sus.add_parser("run", parents=[common])
    sr.add_argument("--in", dest="inp", required=True, help="pure rho_RMN")
    sr.add_argument("--n", type=int, required=True)
    sr.add_argument("--delta", type=float, required=True)
    sr.add_argument("--eps-cut", type=float, default=0.1)
    sr.set_defaults(func=cmd_surgery_run)
    so = sus.add_parser("second-order", parents=[common])
    so.add_argument("--p", default="0.5,0.5")
    so.add_argument("--q", default="0.9,0.1")
    so.add_argument("--eps", type=float, default=0.25)
    so.add_argument("--ns", default="4:20")
    so.set_defaults(func=cmd_surgery_second_order)

    rg = sub.add_parser("region", parents=[common], help="rate regions")
    rg.add_argument("which", choices=("iid", "oneshot", "converse", "gap"))
    rg.add_argument("--in", dest="inp", required=True)
    rg.add_argument("--format", choices=("csv", "json"), default="csv")
    for name in ("eps1", "eps2", "delta"):
        rg.add_argument(f"--{name}", type=float, default=None)
    rg.set_defaults(func=cmd_region)

    st = sub.add_parser("selftest", parents=[common], help="run the invariant suites")
    st.add_argument("--quick", action="store_true")
    st.set_defaults(func=cmd_selftest)
    return p


def _emit(payload, out):
    text = payload if isinstance(payload, str) else dumps_report(payload)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.seed is None:
        args.seed = _default_seed()
    try:
        payload = args.func(args)
    except CheckFailed as exc:
        _emit(exc.payload, args.out)
        return 1
    except (QSWError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(payload, args.out)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
