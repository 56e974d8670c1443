"""Two-receiver redistribution protocol (Charlie sends M to Alice, N to Bob).

Roles are fixed register names: ``R`` (reference), ``A`` and ``M`` (Alice's
side), ``B`` and ``N`` (Bob's side) and ``C`` (Charlie's side information).
Missing roles are inserted as dimension-1 registers.

Register naming inside a run
----------------------------
``M_i`` / ``Mp_i``
    Copy ``i`` of M and its purifier (Alice / Charlie).
``J1, J2, K1, K2``
    Charlie's position registers; position ``j = (j1 - 1) 2^r_A + j2``.
``J1c, K1c``
    Alice's and Bob's copies of ``J1`` and ``K1`` after the classical
    message step (modelled as an ideal coherent copy).
``J2c, K2c``
    Decoder outcomes; ``0`` is the failure branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .convexsplit import ConvexSplitInstance, certified_bound
from .decoder import position_kets, position_tests
from .divergences import dmax_to_product, optimal_test
from .errors import CapacityError, DomainError, ShapeError
from .qstate import (
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    RegisterSystem,
    TestOperator,
    apply_controlled,
    apply_on,
    density,
    fidelity,
    fidelity_pd,
    marginal_fidelity,
    partial_trace,
    purify,
    reorder,
    tensor,
    uhlmann_isometry,
)

ROLES = ("R", "A", "M", "B", "N", "C")
KET_CAP = 2 ** 21
OWNERS = ("Alice", "Bob", "Charlie", "Reference")


def with_roles(state, roles=ROLES):
    """Insert missing role registers with dimension 1 and reorder to ``roles``."""
    extra = [n for n in state.system.names if n not in roles]
    if extra:
        raise ShapeError(f"registers {extra} are not protocol roles {list(roles)}")
    missing = [n for n in roles if n not in state.system]
    if missing:
        triv = RegisterSystem(tuple((n, 1) for n in missing))
        if isinstance(state, Ket):
            state = tensor(state, Ket(triv, np.ones(1)))
        else:
            state = tensor(state, DensityOperator(triv, np.ones((1, 1))))
    return reorder(state, [n for n in roles])


def owner_of(name: str) -> str:
    """Party holding a register at the end of the Task 2 run."""
    if name == "R":
        return "Reference"
    if name in ("A", "M", "J1c", "J2c") or name.startswith("M_"):
        return "Alice"
    if name in ("B", "N", "K1c", "K2c") or name.startswith("N_"):
        return "Bob"
    return "Charlie"


@dataclass
class ProtocolInstance:
    """Inputs: the pure state, a smoothed state, dummy states, error parameters."""

    psi: Ket
    psi_prime: Optional[DensityOperator] = None
    sigma_M: Optional[DensityOperator] = None
    omega_N: Optional[DensityOperator] = None
    eps1: float = 0.1
    eps2: float = 0.1
    delta: float = 0.05

    def __post_init__(self):
        for name in ("eps1", "eps2", "delta"):
            v = float(getattr(self, name))
            if not 0.0 < v < 1.0:
                raise DomainError(f"{name} must lie in (0, 1), got {v}")
            setattr(self, name, v)
        self.psi = with_roles(self.psi)
        if self.psi_prime is None:
            pp = partial_trace(self.psi, ["R", "A", "B", "M", "N"])
        else:
            pp = self.psi_prime
            if isinstance(pp, Ket):
                pp = pp.dm()
            present = list(pp.system.names)
            for n in ("R", "A", "B", "M", "N"):
                if n not in pp.system and self.psi.system.dim_of(n) > 1:
                    raise ShapeError(f"psi_prime must include register {n!r}")
            pp = with_roles(pp, [n for n in ROLES if n in present or n != "C"])
            pp = partial_trace(pp, ["R", "A", "B", "M", "N"])
        self.psi_prime = reorder(pp, ["R", "A", "B", "M", "N"])
        if self.sigma_M is None:
            self.sigma_M = partial_trace(self.psi, ["M"])
        if self.omega_N is None:
            self.omega_N = partial_trace(self.psi, ["N"])
        for st, nm in ((self.sigma_M, "M"), (self.omega_N, "N")):
            if list(st.system.names) != [nm] or st.system.dim_of(nm) != self.psi.system.dim_of(nm):
                raise ShapeError(f"dummy state must live on register {nm!r} of matching dimension")

    def dim(self, role) -> int:
        return self.psi.system.dim_of(role)

    @property
    def trivial_a(self) -> bool:
        return self.dim("M") == 1

    @property
    def trivial_b(self) -> bool:
        return self.dim("N") == 1

    def checks(self) -> dict:
        psi_rabmn = partial_trace(self.psi, ["R", "A", "B", "M", "N"])
        dist = fidelity_pd(psi_rabmn, self.psi_prime)[1]
        rab = dmax_to_product(partial_trace(self.psi_prime, ["R", "A", "B"]), [partial_trace(self.psi, ["R", "A", "B"])]).value
        return {
            "eps1 + 5 eps2 + 2 sqrt(delta) < 1": self.eps1 + 5 * self.eps2 + 2 * math.sqrt(self.delta) < 1.0,
            "P(psi', psi) <= eps1": dist <= self.eps1 + 1e-12,
            "psi'_RAB <= 2^delta psi_RAB": rab <= self.delta + 1e-12,
        }


@dataclass
class Certificate:
    """Rate terms, chosen integer rates and the guaranteed error."""

    dmax_terms: tuple
    dh_terms: tuple
    r_A: int
    r_B: int
    R_A: int
    R_B: int
    qubits_CtoA: float
    qubits_CtoB: float
    guaranteed_error: float
    lower_bounds: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    delta_eff: float = float("nan")
    overridden: bool = False

    @property
    def copies_A(self) -> int:
        return 2 ** (self.R_A + self.r_A)

    @property
    def copies_B(self) -> int:
        return 2 ** (self.R_B + self.r_B)

    def to_dict(self):
        d = dict(self.__dict__)
        d["dmax_terms"] = list(self.dmax_terms)
        d["dh_terms"] = list(self.dh_terms)
        return d


def _ceil(x, tol=1e-9):
    return int(math.ceil(x - tol))


def rate_terms(inst: ProtocolInstance) -> dict:
    """The three max-divergence and two hypothesis-testing terms, in bits."""
    psi, pp = inst.psi, inst.psi_prime
    rab = partial_trace(psi, ["R", "A", "B"])
    s, w = inst.sigma_M, inst.omega_N
    d_a = dmax_to_product(partial_trace(pp, ["R", "A", "B", "M"]), [rab, s]).value
    d_b = dmax_to_product(partial_trace(pp, ["R", "A", "B", "N"]), [rab, w]).value
    d_ab = dmax_to_product(pp, [rab, s, w]).value
    e = inst.eps2 ** 2
    ta = optimal_test(partial_trace(psi, ["A", "M"]), tensor(partial_trace(psi, ["A"]), s), e)
    tb = optimal_test(partial_trace(psi, ["B", "N"]), tensor(partial_trace(psi, ["B"]), w), e)
    return {"dmax_A": d_a, "dmax_B": d_b, "dmax_AB": d_ab, "dh_A": ta.value, "dh_B": tb.value,
            "test_A": ta.witness, "test_B": tb.witness}


def _split_instance(inst: ProtocolInstance, R_A: int, R_B: int) -> ConvexSplitInstance:
    rho = partial_trace(inst.psi, ["R", "A", "B", "M", "N"])
    return ConvexSplitInstance(rho, inst.psi_prime, inst.sigma_M, inst.omega_N, R_A, R_B, inst.delta, inst.eps1)


def plan_rates(inst: ProtocolInstance, override: Optional[dict] = None, terms=None) -> Certificate:
    """Smallest integer rates meeting every constraint, or a report on ``override`` rates.

    ``R_A`` is twice the qubit rate from Charlie to Alice. ``r_A`` is the
    largest integer with ``r_A <= D_H + 2 log eps2``, clamped at 0. The
    sum constraint is met by adding units to whichever side has less slack
    (Alice's on ties). A side whose message register has dimension 1 gets
    zero rates and drops out of the constraints.
    """
    t = terms if terms is not None else rate_terms(inst)
    e2, dl = inst.eps2, inst.delta
    L = math.log2(1.0 / (e2 * e2 * dl))
    log_inv = math.log2(1.0 / dl)
    lg = 2.0 * math.log2(e2)
    flags = {}
    raw_a = t["dh_A"] + lg
    raw_b = t["dh_B"] + lg
    r_A = 0 if inst.trivial_a else max(0, int(math.floor(raw_a + 1e-9)))
    r_B = 0 if inst.trivial_b else max(0, int(math.floor(raw_b + 1e-9)))
    flags["r_A clamped"] = (not inst.trivial_a) and raw_a < 0
    flags["r_B clamped"] = (not inst.trivial_b) and raw_b < 0
    flags["collapsed_A"] = inst.trivial_a
    flags["collapsed_B"] = inst.trivial_b
    lower = {}
    if inst.trivial_a:
        lower["A"] = 0.0
    else:
        lower["A"] = max(t["dmax_A"] - t["dh_A"] + L, t["dmax_A"] + log_inv - r_A, 0.0)
    if inst.trivial_b:
        lower["B"] = 0.0
    else:
        lower["B"] = max(t["dmax_B"] - t["dh_B"] + L, t["dmax_B"] + log_inv - r_B, 0.0)
    if inst.trivial_a or inst.trivial_b:
        lower["sum"] = lower["A"] + lower["B"]
    else:
        lower["sum"] = max(t["dmax_AB"] - t["dh_A"] - t["dh_B"] + L, t["dmax_AB"] + log_inv - r_A - r_B)
    R_A, R_B = _ceil(lower["A"]), _ceil(lower["B"])
    need = _ceil(lower["sum"])
    while R_A + R_B < need:
        if inst.trivial_b or (not inst.trivial_a and R_A - lower["A"] <= R_B - lower["B"]):
            R_A += 1
        else:
            R_B += 1
    overridden = False
    if override:
        overridden = True
        R_A = int(override.get("R_A", R_A))
        R_B = int(override.get("R_B", R_B))
        r_A = int(override.get("r_A", r_A))
        r_B = int(override.get("r_B", r_B))
        if min(R_A, R_B, r_A, r_B) < 0:
            raise DomainError("rates must be non-negative")
    flags["r_A within D_H bound"] = inst.trivial_a or r_A <= raw_a + 1e-12
    flags["r_B within D_H bound"] = inst.trivial_b or r_B <= raw_b + 1e-12
    flags["meets A constraint"] = R_A >= lower["A"] - 1e-9
    flags["meets B constraint"] = R_B >= lower["B"] - 1e-9
    flags["meets sum constraint"] = R_A + R_B >= lower["sum"] - 1e-9
    rep = certified_bound(_split_instance(inst, R_A + r_A, R_B + r_B))
    flags["delta_eff <= delta"] = rep.delta_eff <= dl + 1e-12
    return Certificate(
        dmax_terms=(t["dmax_A"], t["dmax_B"], t["dmax_AB"]),
        dh_terms=(t["dh_A"], t["dh_B"]),
        r_A=r_A,
        r_B=r_B,
        R_A=R_A,
        R_B=R_B,
        qubits_CtoA=R_A / 2.0,
        qubits_CtoB=R_B / 2.0,
        guaranteed_error=inst.eps1 + 5 * e2 + 2 * math.sqrt(dl),
        lower_bounds=lower,
        flags=flags,
        delta_eff=rep.delta_eff,
        overridden=overridden,
    )


@dataclass
class Transcript:
    """Outcome of a dense protocol run."""

    task: int
    P_final: float
    distances: dict
    qubits: dict
    tags: dict
    rates: dict
    uhlmann_gap: float = float("nan")
    chain_ok: Optional[bool] = None
    states: dict = field(default_factory=dict, repr=False)

    def to_dict(self, emit_states=False):
        d = {k: v for k, v in self.__dict__.items() if k != "states"}
        if emit_states:
            d["states"] = self.states
        return d


class _Run:
    """Register bookkeeping and the isometries of one protocol run."""

    def __init__(self, inst: ProtocolInstance, cert: Certificate, terms=None):
        self.inst = inst
        self.cert = cert
        t = terms if terms is not None else rate_terms(inst)
        self.na, self.nb = cert.copies_A, cert.copies_B
        self.pa, self.pb = 2 ** cert.r_A, 2 ** cert.r_B
        self.qa, self.qb = 2 ** cert.R_A, 2 ** cert.R_B
        dm, dn = inst.dim("M"), inst.dim("N")
        rank_m = purify(inst.sigma_M, "x").system.dim_of("x")
        rank_n = purify(inst.omega_N, "x").system.dim_of("x")
        # log2 of the simulated dimension; exact integers overflow for real rates
        log_size = sum(math.log2(inst.dim(r)) for r in ("R", "A", "B", "C"))
        log_size += self.na * math.log2(dm * rank_m) + self.nb * math.log2(dn * rank_n)
        log_size += (cert.R_A + cert.r_A + cert.R_B + cert.r_B + cert.R_A + cert.R_B
                     + math.log2((self.pa + 1) * (self.pb + 1) * dm * dn))
        if log_size > math.log2(KET_CAP) + 1e-9:
            raise CapacityError(
                f"protocol state would have dimension 2^{log_size:.1f} > cap 2^{math.log2(KET_CAP):.0f}; "
                "pass smaller rates (e.g. R_A = R_B = 1, r_A = r_B = 0)"
            )
        self.m_copies = [[f"M_{i}"] for i in range(1, self.na + 1)]
        self.n_copies = [[f"N_{i}"] for i in range(1, self.nb + 1)]
        eye_a = TestOperator(RegisterSystem((("A", inst.dim("A")), ("M", dm))), np.eye(inst.dim("A") * dm))
        eye_b = TestOperator(RegisterSystem((("B", inst.dim("B")), ("N", dn))), np.eye(inst.dim("B") * dn))
        self.test_a = eye_a if inst.trivial_a else t["test_A"]
        self.test_b = eye_b if inst.trivial_b else t["test_B"]

    # -- states -----------------------------------------------------------
    def theta(self) -> Ket:
        inst = self.inst
        parts = []
        sp = purify(inst.sigma_M, "__p")
        for i in range(1, self.na + 1):
            parts.append(sp.renamed({"M": f"M_{i}", "__p": f"Mp_{i}"}))
        op = purify(inst.omega_N, "__q")
        for i in range(1, self.nb + 1):
            parts.append(op.renamed({"N": f"N_{i}", "__q": f"Np_{i}"}))
        return tensor(*parts)

    def xi(self) -> Ket:
        return tensor(self.inst.psi, self.theta())

    def mu(self) -> Ket:
        kets = position_kets(self.inst.psi, self.inst.sigma_M, self.inst.omega_N, ["M"], self.m_copies,
                             ["N"], self.n_copies, purifier_prefix=("Mp", "Np"))
        first = next(iter(kets.values()))
        lab = RegisterSystem((("J1", self.qa), ("J2", self.pa), ("K1", self.qb), ("K2", self.pb)))
        d = first.system.dim
        vec = np.zeros(lab.dim * d, dtype=complex)
        for (j, k), ket in kets.items():
            idx = np.ravel_multi_index(((j - 1) // self.pa, (j - 1) % self.pa, (k - 1) // self.pb, (k - 1) % self.pb), lab.dims)
            vec[idx * d:(idx + 1) * d] = ket.vector
        vec /= math.sqrt(len(kets))
        return Ket(lab + first.system, vec, normalized=False)

    # -- step maps ----------------------------------------------------------
    def charlie_isometry(self, xi: Ket, mu: Ket) -> LinearMapOnRegisters:
        charlie = ["C"] + [f"Mp_{i}" for i in range(1, self.na + 1)] + [f"Np_{i}" for i in range(1, self.nb + 1)]
        tmp = {n: n + "~" for n in charlie}
        v = uhlmann_isometry(mu, xi.renamed(tmp))
        return v.renamed({n + "~": n for n in charlie})

    @staticmethod
    def copy_map(src, dst, d, shift=0, dst_dim=None) -> LinearMapOnRegisters:
        """``|x>_src -> |x>_src |x + shift>_dst``."""
        dd = dst_dim or d
        m = np.zeros((d * dd, d))
        for x in range(d):
            m[x * dd + x + shift, x] = 1.0
        return LinearMapOnRegisters([(src, d)], [(src, d), (dst, dd)], m)

    def decoder_branches(self, side):
        if side == "A":
            p, q, test, copies, role, out = self.pa, self.qa, self.test_a, self.m_copies, "M", "J2c"
        else:
            p, q, test, copies, role, out = self.pb, self.qb, self.test_b, self.n_copies, "N", "K2c"
        maps = {}
        for j1 in range(q):
            block = copies[j1 * p:(j1 + 1) * p]
            maps[(j1,)] = position_tests(test, p, [role], copy_names=block, outcome_name=out).pgm_isometry
        return maps

    def swap_branch(self, side):
        if side == "A":
            p, role, d = self.pa, "M", self.inst.dim("M")
        else:
            p, role, d = self.pb, "N", self.inst.dim("N")
        sw = np.zeros((d * d, d * d))
        for a in range(d):
            for b in range(d):
                sw[b * d + a, a * d + b] = 1.0

        def branch(vals):
            j1, jo = vals
            if jo == 0:
                return None
            j = j1 * p + jo
            regs = [(role, d), (f"{role}_{j}", d)]
            return LinearMapOnRegisters(regs, regs, sw)

        return branch

    def fresh(self, role):
        d = self.inst.dim(role)
        z = np.zeros(d, dtype=complex)
        z[0] = 1.0
        return Ket(RegisterSystem(((role, d),)), z)

    def unfresh(self, role):
        d = self.inst.dim(role)
        m = np.zeros((1, d))
        m[0, 0] = 1.0
        return LinearMapOnRegisters([(role, d)], [], m)

    # -- forward and backward chains ------------------------------------------
    def steps(self, v_prime):
        dec_a, dec_b = self.decoder_branches("A"), self.decoder_branches("B")
        sw_a, sw_b = self.swap_branch("A"), self.swap_branch("B")
        cp_a = self.copy_map("J1", "J1c", self.qa)
        cp_b = self.copy_map("K1", "K1c", self.qb)
        fwd = [
            ("charlie_isometry", lambda s: apply_on(s, v_prime), lambda s: apply_on(s, v_prime.adjoint())),
            ("message_copy", lambda s: apply_on(apply_on(s, cp_a), cp_b),
             lambda s: apply_on(apply_on(s, cp_b.adjoint()), cp_a.adjoint())),
            ("decode", lambda s: apply_controlled(apply_controlled(s, ["J1c"], dec_a), ["K1c"], dec_b),
             lambda s: apply_controlled(apply_controlled(s, ["K1c"], dec_b, adjoint=True), ["J1c"], dec_a, adjoint=True)),
            ("fresh_registers", lambda s: tensor(s, self.fresh("M"), self.fresh("N")),
             lambda s: apply_on(apply_on(s, self.unfresh("N")), self.unfresh("M"))),
            ("swap_in", lambda s: apply_controlled(apply_controlled(s, ["J1c", "J2c"], sw_a), ["K1c", "K2c"], sw_b),
             lambda s: apply_controlled(apply_controlled(s, ["K1c", "K2c"], sw_b, adjoint=True), ["J1c", "J2c"], sw_a, adjoint=True)),
        ]
        return fwd

    def e_names(self):
        eac = ["J1", "J2", "J1c", "J2c"] + [f"M_{i}" for i in range(1, self.na + 1)] + [f"Mp_{i}" for i in range(1, self.na + 1)]
        ebc = ["K1", "K2", "K1c", "K2c"] + [f"N_{i}" for i in range(1, self.nb + 1)] + [f"Np_{i}" for i in range(1, self.nb + 1)]
        return eac, ebc


def best_product_overlap(phi: Ket, psi: Ket, eac, ebc):
    """``max |<psi (x) a (x) b | phi>|`` over unit ``a`` on ``eac`` and ``b`` on ``ebc``.

    Returns the overlap and the optimal ``(a, b)`` as kets.
    """
    names = list(psi.system.names)
    ordered = reorder(phi, names + list(eac) + list(ebc))
    dp = psi.system.dim
    da = ordered.system.sub(eac).dim
    db = ordered.system.sub(ebc).dim
    x = np.tensordot(psi.vector.conj(), ordered.vector.reshape(dp, da * db), axes=(0, 0)).reshape(da, db)
    u, s, vh = np.linalg.svd(x)
    a = Ket(ordered.system.sub(eac).ordered(eac), u[:, 0])
    b = Ket(ordered.system.sub(ebc).ordered(ebc), vh[0, :])
    return float(s[0]), a, b


def _residual(target, vec) -> float:
    """``sqrt(1 - |<vec|target>|^2)`` for unit vectors, computed as a residual norm."""
    return float(np.linalg.norm(target - np.vdot(vec, target) * vec))


def _pd_kets(a: Ket, b: Ket) -> float:
    f = fidelity(a, b)
    return math.sqrt(max(0.0, 1.0 - f * f))


def run_task2(inst: ProtocolInstance, cert: Certificate, *, keep_states=False, terms=None) -> Transcript:
    """Dense run of the protocol on ``Psi (x) theta``.

    ``P_final`` is minimised exactly over product states on the two
    entanglement blocks via the top singular pair of the contracted state.
    """
    run = _Run(inst, cert, terms)
    xi = run.xi()
    mu = run.mu()
    v_prime = run.charlie_isometry(xi, mu)
    steps = run.steps(v_prime)
    state = xi
    trace = {"xi": xi}
    for name, fwd, _ in steps:
        state = fwd(state)
        trace[name] = state
    xi_prime = trace["charlie_isometry"]
    common = ["R", "A", "B"] + [c[0] for c in run.m_copies] + [c[0] for c in run.n_copies]
    f_marg = marginal_fidelity(xi, mu, common)
    f_pure = fidelity(xi_prime, mu)
    # ideal decoding target: copy the true position into the outcome registers
    mu2 = steps[1][1](mu)
    mu3 = steps[2][1](mu2)
    mu4 = apply_on(apply_on(mu2, run.copy_map("J2", "J2c", run.pa, 1, run.pa + 1)),
                   run.copy_map("K2", "K2c", run.pb, 1, run.pb + 1))
    mu4 = reorder(mu4, mu3.system.names)
    eac, ebc = run.e_names()
    _, th1, th2 = best_product_overlap(state, inst.psi, eac, ebc)
    ideal = reorder(tensor(inst.psi, th1, th2), state.system.names)
    P = _residual(state.vector, ideal.vector)
    d_split = _pd_kets(xi_prime, mu)
    d_dec = _pd_kets(mu3, mu4)
    states = {}
    if keep_states:
        states = {"xi": xi, "xi_prime": xi_prime, "mu": mu, "mu2": mu2, "mu3": mu3, "mu4": mu4,
                  "final": state, "theta_prime_1": th1, "theta_prime_2": th2}
    else:
        states = {"theta_prime_1": th1, "theta_prime_2": th2, "final": state}
    return Transcript(
        task=2,
        P_final=P,
        distances={"P(xi', mu)": d_split, "P(mu3, mu4)": d_dec, "P(final, ideal)": P},
        qubits={"C->A": cert.R_A / 2.0, "C->B": cert.R_B / 2.0},
        tags={n: owner_of(n) for n in state.system.names},
        rates={"R_A": cert.R_A, "R_B": cert.R_B, "r_A": cert.r_A, "r_B": cert.r_B},
        uhlmann_gap=abs(f_pure - f_marg),
        chain_ok=P <= d_split + d_dec + 1e-6,
        states=states,
    )


def run_task1(inst: ProtocolInstance, cert: Certificate, *, theta_prime=None, start=None,
              keep_states=False, terms=None) -> Transcript:
    """Reverse run: the adjoint chain applied to ``Psi (x) theta'_1 (x) theta'_2``.

    Parts of the input outside the range of the forward isometry are sent to
    an orthogonal failure flag, so the fidelity with ``Psi (x) theta`` is the
    overlap of the adjoint-chain output with it.

    Parameters
    ----------
    theta_prime : (Ket, Ket), optional
        Entanglement blocks; taken from a Task 2 run when omitted.
    start : Ket, optional
        Explicit starting state on the final registers (overrides ``theta_prime``).
    """
    run = _Run(inst, cert, terms)
    xi = run.xi()
    mu = run.mu()
    v_prime = run.charlie_isometry(xi, mu)
    steps = run.steps(v_prime)
    if start is None:
        if theta_prime is None:
            t2 = run_task2(inst, cert, terms=terms)
            theta_prime = (t2.states["theta_prime_1"], t2.states["theta_prime_2"])
            final_names = t2.states["final"].system.names
        else:
            final_names = None
        start = tensor(inst.psi, *theta_prime)
        if final_names is not None:
            start = reorder(start, final_names)
    state = start
    for _, _, back in reversed(steps):
        state = back(state)
    state = reorder(state, xi.system.names)
    # weight lost to the failure flag, measured as the part of start outside the range
    again = state
    for _, fwd, _ in steps:
        again = fwd(again)
    lost = np.linalg.norm(start.vector - reorder(again, start.system.names).vector)
    kept = _residual(state.vector, xi.vector)
    P = float(math.hypot(lost, kept))
    states = {"final": state} if not keep_states else {"start": start, "final": state}
    return Transcript(
        task=1,
        P_final=P,
        distances={"P(final, ideal)": P, "norm_in_range": float(np.linalg.norm(state.vector))},
        qubits={"A->C": cert.R_A / 2.0, "B->C": cert.R_B / 2.0},
        tags={n: owner_of(n) for n in start.system.names},
        rates={"R_A": cert.R_A, "R_B": cert.R_B, "r_A": cert.r_A, "r_B": cert.r_B},
        states=states,
    )


def reverse_chain(inst: ProtocolInstance, cert: Certificate, state: Ket, terms=None) -> Ket:
    """Apply the adjoint of the whole forward chain to ``state``."""
    run = _Run(inst, cert, terms)
    xi = run.xi()
    steps = run.steps(run.charlie_isometry(xi, run.mu()))
    for _, _, back in reversed(steps):
        state = back(state)
    return reorder(state, xi.system.names)


def verify_end_to_end(inst: ProtocolInstance, cert: Certificate, transcript: Transcript, tol=1e-6) -> dict:
    """Compare measured distances with the guaranteed error split into its two parts."""
    de = cert.delta_eff
    split_bound = inst.eps1 + 2.0 * math.sqrt(de)
    dec_bound = 5.0 * inst.eps2
    total_bound = inst.eps1 + 5.0 * inst.eps2 + 2.0 * math.sqrt(de)
    out = {
        "P_final": transcript.P_final,
        "delta_eff": de,
        "split_gap": transcript.distances.get("P(xi', mu)"),
        "decode_gap": transcript.distances.get("P(mu3, mu4)"),
        "split_bound": split_bound,
        "decode_bound": dec_bound,
        "total_bound": total_bound,
    }
    out["total_ok"] = transcript.P_final <= total_bound + tol
    out["split_ok"] = out["split_gap"] is None or out["split_gap"] <= split_bound + tol
    out["decode_ok"] = out["decode_gap"] is None or out["decode_gap"] <= dec_bound + tol
    out["rates_certified"] = bool(
        de <= inst.delta + 1e-12
        and cert.flags.get("r_A within D_H bound", True)
        and cert.flags.get("r_B within D_H bound", True)
    )
    out["delta_eff_flagged"] = de > inst.delta + 1e-12
    out["passed"] = bool(out["total_ok"] and out["split_ok"] and out["decode_ok"])
    return out
