"""Position-based decoding.

A base test on ``A (x) M`` is lifted to every position of
``A (x) M_1 (x) ... (x) M_n``. The coherent decoder is the square-root
measurement of the lifted tests with an extra failure outcome ``0``
(positions are 1-based). Also here: the decoding confusion matrix, the
fidelity check on the ideal post-decoding state, and a few operator
inequalities used along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .divergences import optimal_test
from .errors import CapacityError, DomainError, ShapeError
from .linalg import hermitize, min_eig, psd_power, psd_sqrt, support_projector
from .qstate import (
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    RegisterSystem,
    TestOperator,
    apply_on,
    embed_operator,
    matrix_of,
    partial_trace,
    purify,
    reorder,
    tensor,
)

DENSE_CAP = 2 ** 13
KET_CAP = 2 ** 17


def position_names(m_names, n_pos):
    """Default copy names ``[[M_1, ...], [M_2, ...], ...]`` for ``n_pos`` positions."""
    return [[f"{m}_{i}" for m in m_names] for i in range(1, n_pos + 1)]


@dataclass
class DecoderBundle:
    """Lifted tests and the coherent decoder for one block of positions."""

    base_test: TestOperator
    positions: int
    lifted_tests: list
    total: TestOperator
    pgm_isometry: LinearMapOnRegisters
    povm: np.ndarray
    fixed_names: list
    m_names: list
    copy_names: list
    outcome_name: str

    @property
    def system(self) -> RegisterSystem:
        return self.total.system

    def sqrt_elements(self) -> np.ndarray:
        """Stack ``[sqrt(I - Pi^0), sqrt(L_1), ...]`` of decoder blocks."""
        d = self.system.dim
        n = self.positions + 1
        return self.pgm_isometry.matrix.reshape(d, n, d).transpose(1, 0, 2)


def position_tests(base: TestOperator, n_pos: int, which_register: Sequence[str],
                   copy_names=None, outcome_name="J") -> DecoderBundle:
    """Lift ``base`` to ``n_pos`` positions and build the coherent decoder.

    Parameters
    ----------
    base : TestOperator
        Test on the fixed registers plus the position registers.
    n_pos : int
        Number of positions.
    which_register : list of str
        Registers of ``base`` that are copied per position.
    copy_names : list of list of str, optional
        Names of the copies at each position. Defaults to ``M_1, M_2, ...``.
    outcome_name : str
        Name of the outcome register (dimension ``n_pos + 1``; 0 = failure).

    Returns
    -------
    DecoderBundle
    """
    n_pos = int(n_pos)
    if n_pos < 1:
        raise ShapeError("need at least one position")
    m_names = list(which_register)
    for m in m_names:
        if m not in base.system:
            raise ShapeError(f"position register {m!r} not in the base test")
    fixed = [n for n in base.system.names if n not in set(m_names)]
    if copy_names is None:
        copy_names = position_names(m_names, n_pos)
    copy_names = [list(c) for c in copy_names]
    if len(copy_names) != n_pos or any(len(c) != len(m_names) for c in copy_names):
        raise ShapeError("copy_names must list one name per position register per position")
    regs = [(n, base.system.dim_of(n)) for n in fixed]
    for c in copy_names:
        regs += [(cn, base.system.dim_of(m)) for cn, m in zip(c, m_names)]
    lifted_sys = RegisterSystem(tuple(regs))
    if lifted_sys.dim > DENSE_CAP:
        raise CapacityError(f"lifted test dimension {lifted_sys.dim} > cap {DENSE_CAP}")
    if outcome_name in lifted_sys:
        raise ShapeError(f"outcome register {outcome_name!r} clashes with the test registers")
    base_m = reorder(base, fixed + m_names).matrix
    lifted = []
    for c in copy_names:
        lifted.append(embed_operator(base_m, fixed + c, lifted_sys))
    total = sum(lifted)
    inv_sqrt = psd_power(total, -0.5)
    fail = np.eye(lifted_sys.dim) - support_projector(total)
    povm = [hermitize(fail)] + [hermitize(inv_sqrt @ t @ inv_sqrt) for t in lifted]
    sq = np.stack([povm[0]] + [psd_sqrt(p) for p in povm[1:]])
    d = lifted_sys.dim
    mat = sq.transpose(1, 0, 2).reshape(d * (n_pos + 1), d)
    iso = LinearMapOnRegisters(lifted_sys, lifted_sys + RegisterSystem(((outcome_name, n_pos + 1),)), mat)
    return DecoderBundle(
        base_test=base,
        positions=n_pos,
        lifted_tests=[TestOperator(lifted_sys, t, check=False) for t in lifted],
        total=TestOperator(lifted_sys, total, check=False),
        pgm_isometry=iso,
        povm=np.stack(povm),
        fixed_names=fixed,
        m_names=m_names,
        copy_names=copy_names,
        outcome_name=outcome_name,
    )


@dataclass
class ConfusionMatrix:
    """``entries[jt, kt, j-1, k-1] = p(jt, kt | j, k)``; outcome 0 is failure."""

    entries: np.ndarray

    @property
    def n_a(self) -> int:
        return self.entries.shape[2]

    @property
    def n_b(self) -> int:
        return self.entries.shape[3]

    def given(self, j: int, k: int) -> np.ndarray:
        return self.entries[:, :, j - 1, k - 1]

    def row_sums(self) -> np.ndarray:
        return self.entries.sum(axis=(0, 1))

    def success(self, j: int, k: int) -> float:
        return float(self.entries[j, k, j - 1, k - 1])

    def diagonal_average(self) -> float:
        return float(np.mean([self.success(j, k) for j in range(1, self.n_a + 1) for k in range(1, self.n_b + 1)]))

    def error_given(self, j=1, k=1) -> float:
        """Total probability of any outcome other than ``(j, k)``."""
        return float(self.given(j, k).sum() - self.success(j, k))


def _renamed_psi(psi, bundle: DecoderBundle, pos: int):
    return psi.renamed(dict(zip(bundle.m_names, bundle.copy_names[pos - 1])))


def _dummy(state: DensityOperator, m_names, names):
    return state.renamed(dict(zip(m_names, names)))


def position_state(psi_abmn, bundle_a: DecoderBundle, bundle_b: DecoderBundle, sigma_M, omega_N, j, k):
    """``psi_{A B M_j N_k} (x) sigma`` elsewhere ``(x) omega`` elsewhere, on the decoders' registers."""
    psi = _renamed_psi(_renamed_psi(psi_abmn, bundle_a, j), bundle_b, k)
    parts = [psi]
    parts += [_dummy(sigma_M, bundle_a.m_names, c) for i, c in enumerate(bundle_a.copy_names, 1) if i != j]
    parts += [_dummy(omega_N, bundle_b.m_names, c) for i, c in enumerate(bundle_b.copy_names, 1) if i != k]
    order = list(bundle_a.system.names) + list(bundle_b.system.names)
    return reorder(tensor(*parts), order)


def confusion_matrix(psi_ABMN, bundle_a: DecoderBundle, bundle_b: DecoderBundle, sigma_M, omega_N) -> ConfusionMatrix:
    """All decoding probabilities ``p(jt, kt | j, k)``.

    ``psi_ABMN`` may carry extra registers (R, C); they are traced out.
    """
    keep = bundle_a.fixed_names + bundle_a.m_names + bundle_b.fixed_names + bundle_b.m_names
    rho = partial_trace(psi_ABMN, keep)
    da, db = bundle_a.system.dim, bundle_b.system.dim
    if da * db > DENSE_CAP:
        raise CapacityError(f"confusion computation dimension {da * db} > cap {DENSE_CAP}")
    la, lb = bundle_a.povm, bundle_b.povm
    na, nb = bundle_a.positions, bundle_b.positions
    out = np.zeros((na + 1, nb + 1, na, nb))
    for j in range(1, na + 1):
        for k in range(1, nb + 1):
            st = position_state(rho, bundle_a, bundle_b, sigma_M, omega_N, j, k)
            r4 = st.matrix.reshape(da, db, da, db)
            out[:, :, j - 1, k - 1] = np.real(np.einsum("xac,ybd,cdab->xy", la, lb, r4))
    return ConfusionMatrix(out)


@dataclass
class DecodingReport:
    F: float
    F2: float
    bound: float
    block_bound: float
    diagonal_success: float
    preconditions: dict
    preconditions_hold: bool
    claim_holds: Optional[bool]
    dh_A: float
    dh_B: float
    r_A: int
    r_B: int
    error_given_first: float
    error_chain_bound: float
    symmetry_gap: float
    row_sum_defect: float
    confusion: ConfusionMatrix = field(repr=False, default=None)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "confusion"}
        return d


def position_kets(psi, sigma_M, omega_N, m_names, m_copies, n_names, n_copies,
                  purifier_prefix=None):
    """Kets ``phi_{jk}``: ``psi`` with its M at copy ``j`` and N at copy ``k``.

    Every other copy holds a purification of the dummy state; the purifier
    of the occupied copy is left in ``|0>``. Purifiers are named
    ``<M>p_<i>`` (resp. ``<N>p_<i>``) after the first register of each role
    unless ``purifier_prefix`` gives the two prefixes.

    Returns
    -------
    dict
        ``{(j, k): Ket}`` with 1-based keys, all in one register order.
    """
    m_names, n_names = list(m_names), list(n_names)
    na, nb = len(m_copies), len(n_copies)
    pa, pb = purifier_prefix or (f"{m_names[0]}p", f"{n_names[0]}p")
    sig_pur = purify(sigma_M, "__p")
    om_pur = purify(omega_N, "__q")
    dp = sig_pur.system.dim_of("__p")
    dq = om_pur.system.dim_of("__q")
    pur_a = [f"{pa}_{i}" for i in range(1, na + 1)]
    pur_b = [f"{pb}_{i}" for i in range(1, nb + 1)]

    def zero(name, d):
        z = np.zeros(d, dtype=complex)
        z[0] = 1.0
        return Ket(RegisterSystem(((name, d),)), z)

    def dummies(pur, names, copies, pur_names, skip, tag):
        out = []
        for i in range(1, len(copies) + 1):
            if i == skip:
                out.append(zero(pur_names[i - 1], pur.system.dim_of(tag)))
            else:
                ren = dict(zip(names, copies[i - 1]))
                ren[tag] = pur_names[i - 1]
                out.append(pur.renamed(ren))
        return out

    kets = {}
    order = None
    for j in range(1, na + 1):
        for k in range(1, nb + 1):
            ren = dict(zip(m_names, m_copies[j - 1]))
            ren.update(zip(n_names, n_copies[k - 1]))
            parts = [psi.renamed(ren)]
            parts += dummies(sig_pur, m_names, m_copies, pur_a, j, "__p")
            parts += dummies(om_pur, n_names, n_copies, pur_b, k, "__q")
            t = tensor(*parts)
            if order is None:
                order = list(t.system.names)
            kets[(j, k)] = reorder(t, order)
    return kets


def _superpose(kets, labels):
    """``sum_key |labels(key)> (x) kets[key]`` normalized uniformly."""
    first = next(iter(kets.values()))
    lab_sys, _ = labels(None)
    vec = np.zeros(lab_sys.dim * first.system.dim, dtype=complex)
    d = first.system.dim
    for key, ket in kets.items():
        _, idx = labels(key)
        vec[idx * d:(idx + 1) * d] += ket.vector
    vec /= math.sqrt(len(kets))
    return Ket(lab_sys + first.system, vec, normalized=False)


def decoding_states(psi, sigma_M, omega_N, bundle_a, bundle_b, label_names=("J2", "K2")):
    """Dense ``(mu2, mu3, mu4)`` for one ``(j1, k1)`` block."""
    na, nb = bundle_a.positions, bundle_b.positions
    kets = position_kets(psi, sigma_M, omega_N, bundle_a.m_names, bundle_a.copy_names,
                         bundle_b.m_names, bundle_b.copy_names)
    total = next(iter(kets.values())).system.dim * na * nb * (na + 1) * (nb + 1)
    if total > KET_CAP:
        raise CapacityError(f"decoding ket dimension {total} > cap {KET_CAP}")
    j2, k2 = label_names
    lab2 = RegisterSystem(((j2, na), (k2, nb)))
    mu2 = _superpose(kets, lambda key: (lab2, None if key is None else (key[0] - 1) * nb + (key[1] - 1)))
    mu3 = apply_on(apply_on(mu2, bundle_a.pgm_isometry), bundle_b.pgm_isometry)
    oa, ob = bundle_a.outcome_name, bundle_b.outcome_name
    lab4 = RegisterSystem(((j2, na), (k2, nb), (oa, na + 1), (ob, nb + 1)))

    def lab4_index(key):
        if key is None:
            return lab4, None
        j, k = key
        return lab4, int(np.ravel_multi_index((j - 1, k - 1, j, k), lab4.dims))

    mu4 = reorder(_superpose(kets, lab4_index), mu3.system.names)
    return mu2, mu3, mu4


def verify_decoding(psi, sigma_M, omega_N, eps2, r_A, r_B, *, base_A=None, base_B=None,
                  a_names=("A",), m_names=("M",), b_names=("B",), n_names=("N",), tol=1e-7) -> DecodingReport:
    """Decoding fidelity check for one block of ``2^r_A x 2^r_B`` positions.

    Base tests default to the optimal tests at type-I error ``eps2**2``.
    When the rate preconditions fail the report still carries every
    measured quantity and ``claim_holds`` is ``None``.
    """
    eps2 = float(eps2)
    if not 0.0 < eps2 < 1.0:
        raise DomainError(f"eps2 must lie in (0, 1), got {eps2}")
    r_A, r_B = int(r_A), int(r_B)
    if r_A < 0 or r_B < 0:
        raise DomainError("position exponents must be non-negative")
    a_names, m_names, b_names, n_names = map(list, (a_names, m_names, b_names, n_names))
    psi_am = partial_trace(psi, a_names + m_names)
    psi_bn = partial_trace(psi, b_names + n_names)
    ref_a = tensor(partial_trace(psi, a_names), sigma_M) if a_names else sigma_M
    ref_b = tensor(partial_trace(psi, b_names), omega_N) if b_names else omega_N
    ta = optimal_test(psi_am, ref_a, eps2 ** 2)
    tb = optimal_test(psi_bn, ref_b, eps2 ** 2)
    dh_a, dh_b = ta.value, tb.value
    if base_A is None:
        base_A = ta.witness
    if base_B is None:
        base_B = tb.witness
    na, nb = 2 ** r_A, 2 ** r_B
    bundle_a = position_tests(base_A, na, m_names, outcome_name="Jp2")
    bundle_b = position_tests(base_B, nb, n_names, outcome_name="Kp2")
    conf = confusion_matrix(psi, bundle_a, bundle_b, sigma_M, omega_N)
    _, mu3, mu4 = decoding_states(psi, sigma_M, omega_N, bundle_a, bundle_b)
    F = float(min(1.0, abs(np.vdot(mu4.vector, mu3.vector))))
    lg = 2.0 * math.log2(eps2)
    pre = {
        "r_A <= D_H(A) + 2 log eps2": r_A <= dh_a + lg + 1e-12,
        "r_B <= D_H(B) + 2 log eps2": r_B <= dh_b + lg + 1e-12,
    }
    holds = all(pre.values())
    bound = 1.0 - 24.0 * eps2 ** 2
    diag = conf.diagonal_average()
    err = conf.error_given(1, 1)
    chain = 4.0 * eps2 ** 2 + 4.0 * 2.0 ** (r_A - dh_a) + 4.0 * 2.0 ** (r_B - dh_b)
    return DecodingReport(
        F=F,
        F2=F * F,
        bound=bound,
        block_bound=1.0 - 12.0 * eps2 ** 2,
        diagonal_success=diag,
        preconditions=pre,
        preconditions_hold=holds,
        claim_holds=(F * F >= bound - tol) if holds else None,
        dh_A=dh_a,
        dh_B=dh_b,
        r_A=r_A,
        r_B=r_B,
        error_given_first=err,
        error_chain_bound=chain,
        symmetry_gap=abs(diag - (1.0 - err)),
        row_sum_defect=float(np.max(np.abs(conf.row_sums() - 1.0))),
        confusion=conf,
    )


def _inv_sqrt_sandwich(s, t):
    x = psd_power(s + t, -0.5)
    return hermitize(x @ s @ x)


def hayashi_nagaoka_residual(S, T) -> float:
    """Min eigenvalue of ``2(I - S) + 4T - (I - (S+T)^{-1/2} S (S+T)^{-1/2})``."""
    s = hermitize(matrix_of(S))
    t = hermitize(matrix_of(T))
    if s.shape != t.shape or s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"shape mismatch {s.shape} vs {t.shape}")
    eye = np.eye(s.shape[0])
    return min_eig(2.0 * (eye - s) + 4.0 * t - (eye - _inv_sqrt_sandwich(s, t)))


def product_complement_residual(P, Q) -> float:
    """Min eigenvalue of ``I (x) (I-Q) + (I-P) (x) I - (I - P (x) Q)``."""
    p = hermitize(matrix_of(P))
    q = hermitize(matrix_of(Q))
    ip, iq = np.eye(p.shape[0]), np.eye(q.shape[0])
    lhs = np.kron(ip, iq - q) + np.kron(ip - p, iq)
    return min_eig(lhs - (np.kron(ip, iq) - np.kron(p, q)))


def gentle_povm_check(probs, kets, sqrt_povm, a_names):
    """Fidelity of coherent measurement against ideal labelling, with its lower bound.

    Parameters
    ----------
    probs : sequence of float
        Weights ``p_i``.
    kets : sequence of Ket
        States ``rho^i`` on the same registers (which include ``a_names``).
    sqrt_povm : sequence of ndarray
        Operators ``P_i`` on ``a_names`` with ``sum_i P_i^2 = I``.

    Returns
    -------
    (float, float)
        ``F(rho', A rho A^dagger)`` and ``sum_i p_i Tr(P_i^2 rho^i_A)``.
    """
    probs = np.asarray(probs, dtype=float)
    n = len(probs)
    sys0 = kets[0].system
    d = sys0.dim
    lab = RegisterSystem((("O", n),))
    vec = np.zeros(n * d, dtype=complex)
    ideal = np.zeros(n * d * n, dtype=complex)
    for i, (p, k) in enumerate(zip(probs, kets)):
        v = reorder(k, sys0.names).vector
        vec[i * d:(i + 1) * d] = math.sqrt(p) * v
        ideal.reshape(n, d, n)[i, :, i] = math.sqrt(p) * v
    rho = Ket(lab + sys0, vec)
    a_sys = sys0.sub(a_names).ordered(a_names)
    da = a_sys.dim
    mat = np.stack(list(sqrt_povm)).transpose(1, 0, 2).reshape(da * n, da)
    iso = LinearMapOnRegisters(a_sys, a_sys + RegisterSystem((("Op", n),)), mat)
    out = apply_on(rho, iso)
    target = Ket(lab + sys0 + RegisterSystem((("Op", n),)), ideal)
    target = reorder(target, out.system.names)
    F = float(abs(np.vdot(target.vector, out.vector)))
    bound = 0.0
    for p, k, P in zip(probs, kets, sqrt_povm):
        ka = partial_trace(k, a_names)
        ka = reorder(ka, a_names)
        bound += p * float(np.real(np.trace(P @ P @ ka.matrix)))
    return F, bound
