"""Two-dimensional rate regions: one-shot achievable, i.i.d. and converse.

A region is the upward-closed set cut out by three half-planes
``R1 >= c1``, ``R2 >= c2`` and ``R1 + R2 >= c3`` (fewer when a side is
trivial). All values are in qubits. ``R1`` is the rate on Alice's side and
``R2`` the rate on Bob's side, whichever direction the communication goes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .divergences import dmax_to_product, mutual_information, optimal_test
from .errors import ContractViolation, DomainError, ShapeError
from .qstate import DensityOperator, Ket, maximally_mixed, partial_trace

SCHEMA = 1


@dataclass(frozen=True)
class Constraint:
    """``a1 R1 + a2 R2 >= c``."""

    a1: int
    a2: int
    c: float
    label: str = ""

    def value(self, r1, r2) -> float:
        return self.a1 * r1 + self.a2 * r2

    def slack(self, r1, r2) -> float:
        return self.value(r1, r2) - self.c


@dataclass
class RateRegion:
    """Constraints, corner points and a boundary polyline."""

    constraints: list
    corners: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    kind: str = ""
    meta: dict = field(default_factory=dict)

    def contains(self, r1, r2, tol=1e-9) -> bool:
        return all(c.slack(r1, r2) >= -tol for c in self.constraints)

    def c_values(self) -> dict:
        return {c.label: c.c for c in self.constraints}

    def check(self, tol=1e-9) -> bool:
        """Every corner satisfies every constraint and is tight on at least two."""
        for r1, r2 in self.corners:
            if not self.contains(r1, r2, tol):
                return False
            tight = sum(abs(c.slack(r1, r2)) <= tol for c in self.constraints)
            if len(self.constraints) >= 2 and tight < 2:
                return False
        return True


def _polygon(c1: Optional[float], c2: Optional[float], c3: Optional[float]):
    """Constraints and corners of ``{R1 >= c1, R2 >= c2, R1 + R2 >= c3}``; None drops a side.

    When ``c3`` is dropped or not binding the region has a single corner.
    """
    cons = []
    if c1 is not None:
        cons.append(Constraint(1, 0, float(c1), "R1"))
    if c2 is not None:
        cons.append(Constraint(0, 1, float(c2), "R2"))
    if c3 is not None:
        cons.append(Constraint(1, 1, float(c3), "R1+R2"))
    if c1 is None and c2 is None:
        return cons, []
    if c2 is None:
        return cons, [(float(c1), 0.0)]
    if c1 is None:
        return cons, [(0.0, float(c2))]
    if c3 is not None and c3 > c1 + c2:
        corners = [(float(c1), float(c3 - c1)), (float(c3 - c2), float(c2))]
    else:
        corners = [(float(c1), float(c2))]
    return cons, sorted(set(corners))


def _samples(corners, pad=1.0):
    if not corners:
        return []
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    first, last = corners[0], corners[-1]
    return [(first[0], max(ys) + pad)] + list(corners) + [(max(xs) + pad, last[1])]


def make_region(c1, c2, c3, kind="", meta=None) -> RateRegion:
    cons, corners = _polygon(c1, c2, c3)
    return RateRegion(cons, corners, _samples(corners), kind, dict(meta or {}))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


def oneshot_region(inst, terms=None) -> RateRegion:
    """One-shot region of a :class:`~oneshot_qsw.protocol.ProtocolInstance`.

    ``c = (D_max - D_H + log 1/(eps2^2 delta)) / 2`` per constraint; the same
    values bound Charlie's sending rates and the reversed senders' rates.
    A side with a one-dimensional message register drops out.
    """
    from .protocol import rate_terms

    t = terms if terms is not None else rate_terms(inst)
    L = math.log2(1.0 / (inst.eps2 ** 2 * inst.delta))
    c1 = None if inst.trivial_a else 0.5 * (t["dmax_A"] - t["dh_A"] + L)
    c2 = None if inst.trivial_b else 0.5 * (t["dmax_B"] - t["dh_B"] + L)
    c3 = None
    if not (inst.trivial_a or inst.trivial_b):
        c3 = 0.5 * (t["dmax_AB"] - t["dh_A"] - t["dh_B"] + L)
    meta = {
        "eps1": inst.eps1,
        "eps2": inst.eps2,
        "delta": inst.delta,
        "dmax_terms": [t["dmax_A"], t["dmax_B"], t["dmax_AB"]],
        "dh_terms": [t["dh_A"], t["dh_B"]],
    }
    return make_region(c1, c2, c3, "oneshot", meta)


def _drop_trivial(psi: Ket, names):
    return [n for n in names if n in psi.system and psi.system.dim_of(n) > 1]


def iid_region(psi: Ket) -> RateRegion:
    """Asymptotic region from mutual informations of a pure state on ``R, A, M, B, N``.

    ``R1 >= (I(RAB:M) - I(A:M))/2``, ``R2 >= (I(RAB:N) - I(B:N))/2`` and
    ``R1 + R2 >= (I(RAB:M:N) - I(A:M) - I(B:N))/2``. Register ``C``, if
    present, must be one-dimensional.
    """
    if "C" in psi.system and psi.system.dim_of("C") > 1:
        raise ShapeError("i.i.d. region needs a trivial C register")
    for n in psi.system.names:
        if n not in ("R", "A", "M", "B", "N", "C"):
            raise ShapeError(f"unexpected register {n!r}")
    has_m = "M" in psi.system and psi.system.dim_of("M") > 1
    has_n = "N" in psi.system and psi.system.dim_of("N") > 1
    rab = _drop_trivial(psi, ["R", "A", "B"])

    def mi(a, b):
        a, b = _drop_trivial(psi, a), _drop_trivial(psi, b)
        if not a or not b:
            return 0.0
        return mutual_information(psi, [a, b])

    def tri(a, b, c):
        groups = [g for g in (_drop_trivial(psi, a), _drop_trivial(psi, b), _drop_trivial(psi, c)) if g]
        if len(groups) < 2:
            return 0.0
        return mutual_information(psi, groups)

    i_am = mi(["A"], ["M"])
    i_bn = mi(["B"], ["N"])
    c1 = 0.5 * (mi(rab, ["M"]) - i_am) if has_m else None
    c2 = 0.5 * (mi(rab, ["N"]) - i_bn) if has_n else None
    c3 = 0.5 * (tri(rab, ["M"], ["N"]) - i_am - i_bn) if (has_m and has_n) else None
    return make_region(c1, c2, c3, "iid")


def converse_region(psi_prime: DensityOperator, psi_R: DensityOperator, sigma_M, omega_N, tol=1e-8) -> RateRegion:
    """Lower bounds ``D_max(psi'_RM || psi_R sigma_M)/2`` and the two analogs.

    Raises
    ------
    ContractViolation
        ``psi'_R`` differs from ``psi_R`` by more than ``tol``.
    """
    if isinstance(psi_prime, Ket):
        psi_prime = psi_prime.dm()
    r_names = list(psi_R.system.names)
    gap = float(np.max(np.abs(partial_trace(psi_prime, r_names).matrix - psi_R.matrix)))
    if gap > tol:
        raise ContractViolation(f"psi'_R differs from psi_R by {gap:.2e}")
    m_names = list(sigma_M.system.names)
    n_names = list(omega_N.system.names)
    rm = partial_trace(psi_prime, r_names + m_names)
    rn = partial_trace(psi_prime, r_names + n_names)
    rmn = partial_trace(psi_prime, r_names + m_names + n_names)
    c1 = 0.5 * dmax_to_product(rm, [psi_R, sigma_M]).value
    c2 = 0.5 * dmax_to_product(rn, [psi_R, omega_N]).value
    c3 = 0.5 * dmax_to_product(rmn, [psi_R, sigma_M, omega_N]).value
    return make_region(c1, c2, c3, "converse")


def converse_gap_report(psi: Ket, eps2: float, delta: float, sigma_M=None, omega_N=None) -> dict:
    """Compare achievable and converse constraints on an instance without A and B.

    Both regions use ``psi' = psi``. The achievable value exceeds the converse
    value by exactly ``(log 1/(eps2^2 delta) - D_H)/2`` per side and by
    ``(log 1/(eps2^2 delta) - D_H^A - D_H^B)/2`` on the sum.
    """
    from .protocol import ProtocolInstance, rate_terms

    for n in ("A", "B"):
        if n in psi.system and psi.system.dim_of(n) > 1:
            raise ShapeError("converse comparison needs trivial A and B")
    inst = ProtocolInstance(psi, sigma_M=sigma_M, omega_N=omega_N, eps1=0.01, eps2=eps2, delta=delta)
    t = rate_terms(inst)
    ach = oneshot_region(inst, terms=t)
    full = inst.psi
    conv = converse_region(partial_trace(full, ["R", "M", "N", "C"]), partial_trace(full, ["R"]), inst.sigma_M, inst.omega_N)
    L = math.log2(1.0 / (eps2 ** 2 * delta))
    expected = {"R1": 0.5 * (L - t["dh_A"]), "R2": 0.5 * (L - t["dh_B"]), "R1+R2": 0.5 * (L - t["dh_A"] - t["dh_B"])}
    a, c = ach.c_values(), conv.c_values()
    rows = {}
    for key in ("R1", "R2", "R1+R2"):
        measured = a[key] - c[key]
        rows[key] = {
            "achievable": a[key],
            "converse": c[key],
            "gap": measured,
            "expected_gap": expected[key],
            "matches": abs(measured - expected[key]) <= 1e-7,
            "converse_below": c[key] <= a[key] + 1e-9 if expected[key] >= 0 else None,
        }
    return {"constraints": rows, "achievable": ach, "converse": conv}


def message_register_check(psi: Ket, tol=1e-9) -> dict:
    """Converse bounds for the protocol that sends ``M`` and ``N`` unchanged.

    The message registers are ``M`` and ``N`` themselves, the decoded dummy
    states are maximally mixed, and each bound must not exceed the log of the
    message dimension.
    """
    dm = psi.system.dim_of("M")
    dn = psi.system.dim_of("N")
    rest = [n for n in psi.system.names if n not in ("R", "M", "N")]
    keep = ["R", "M", "N"]
    state = partial_trace(psi, keep) if rest else psi.dm()
    conv = converse_region(state, partial_trace(psi, ["R"]),
                           maximally_mixed(psi.system.sub(["M"])), maximally_mixed(psi.system.sub(["N"])))
    c = conv.c_values()
    limits = {"R1": math.log2(dm), "R2": math.log2(dn), "R1+R2": math.log2(dm * dn)}
    ok = {k: c[k] <= limits[k] + tol for k in limits}
    return {"bounds": c, "limits": limits, "ok": ok, "passed": all(ok.values())}


# ---------------------------------------------------------------------------
# candidates and convergence
# ---------------------------------------------------------------------------


def enumerate_candidates(psi: Ket, surgery_state: Optional[Ket] = None):
    """``{psi, surgery output} x {psi_M} x {psi_N}`` as ``(label, psi_prime, sigma, omega)``."""
    sig = partial_trace(psi, ["M"])
    om = partial_trace(psi, ["N"])
    out = [("psi", None, sig, om)]
    if surgery_state is not None:
        out.append(("surgery", surgery_state, sig, om))
    return out


def union_of_regions(regions) -> list:
    """Corners of the union that are not dominated by another region's corner."""
    pts = sorted({c for r in regions for c in r.corners})
    keep = []
    for p in pts:
        if not any(q != p and q[0] <= p[0] + 1e-12 and q[1] <= p[1] + 1e-12 for q in pts):
            keep.append(p)
    return keep


def convergence_table(psi_RMN: Ket, ns, delta: float, eps2: float = 0.3, delta_region: float = 0.05,
                      eps_cut: float = 0.1):
    """Per-copy one-shot c-values with the surgery state against the i.i.d. values.

    For each ``n`` the smoothed state of ``psi_RMN^{(x)n}`` is used as
    ``psi'``, with ``sigma = psi_M^{(x)n}`` and ``omega = psi_N^{(x)n}``.

    Returns
    -------
    list of dict
        Keys ``n``, ``oneshot_per_copy`` (dict), ``iid`` (dict) and ``gap``.
    """
    from .surgery import _iid_marginal, smoothed_state_pipeline

    ref = iid_region(psi_RMN).c_values()
    L = math.log2(1.0 / (eps2 ** 2 * delta_region))
    rows = []
    for n in ns:
        state, rep = smoothed_state_pipeline(psi_RMN, n, delta, eps_cut, check_spectrum=False)
        if state is None:
            rows.append({"n": n, "oneshot_per_copy": None, "iid": ref, "gap": None, "note": rep.note})
            continue
        iid = {r: _iid_marginal(partial_trace(psi_RMN, [r]), n, r) for r in "RMN"}
        dh_m = optimal_test(iid["M"], iid["M"], eps2 ** 2).value
        dh_n = optimal_test(iid["N"], iid["N"], eps2 ** 2).value
        names = {r: list(iid[r].system.names) for r in "RMN"}
        d1 = rep.dmax["RM"]
        d2 = rep.dmax["RN"]
        d3 = rep.dmax["RMN"]
        vals = {
            "R1": 0.5 * (d1 - dh_m + L) / n,
            "R2": 0.5 * (d2 - dh_n + L) / n,
            "R1+R2": 0.5 * (d3 - dh_m - dh_n + L) / n,
        }
        rows.append({
            "n": n,
            "oneshot_per_copy": vals,
            "iid": ref,
            "gap": {k: vals[k] - ref[k] for k in vals},
            "registers": names,
        })
    return rows


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    return repr(round(float(x), 12) + 0.0)


def export_region(region: RateRegion, format: str = "csv") -> bytes:
    """Deterministic CSV (columns ``R1,R2,kind``) or JSON serialization.

    CSV corner rows have kind ``corner``; constraint rows put the two
    coefficients in ``R1, R2`` and the kind ``constraint>=<c>``. A region
    without constraints is a single ``nan,nan,unconstrained`` row.
    """
    corners = sorted(region.corners)
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R1", "R2", "kind"])
        if not region.constraints:
            w.writerow(["nan", "nan", "unconstrained"])
        for r1, r2 in corners:
            w.writerow([_num(r1), _num(r2), "corner"])
        for c in region.constraints:
            w.writerow([c.a1, c.a2, f"constraint>={_num(c.c)}"])
        return buf.getvalue().encode()
    if format == "json":
        obj = {
            "schema": SCHEMA,
            "kind": region.kind,
            "constraints": [{"a1": c.a1, "a2": c.a2, "c": c.c, "label": c.label} for c in region.constraints],
            "corners": [list(p) for p in corners],
            "samples": [list(p) for p in region.samples],
            "unconstrained": not region.constraints,
            "meta": region.meta,
        }
        return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode()
    raise DomainError(f"unknown export format {format!r}")
