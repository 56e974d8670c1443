"""Eigenvalue surgery on i.i.d. pure states and classical i.i.d. hypothesis testing.

The pipeline takes ``n`` copies of a pure state on ``R, M, N`` and

1. projects every register group onto its typical eigenvalue window,
2. cuts the large eigenvalues of the ``(R, M)`` marginal relative to the
   uniform typical states,
3. does the same on ``(R, N)``; the cut is also realised on ``M`` alone via
   the dual projector, which is what keeps the ``(R, M)`` bound intact.

Every inequality checked by :func:`verify_surgery` uses measured trace
masses in place of the asymptotic ``1 - O(delta)`` guarantees, so it can be
tested at ``n <= 4``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .divergences import (
    dmax_pure_to_product,
    dmax_to_product,
    info_spectrum,
    optimal_test,
    second_order_estimate,
)
from .errors import CapacityError, ContractViolation, DomainError, ShapeError
from .linalg import ZERO_BAND, distinct_count, eigh_clipped, hermitize, support_projector
from .qstate import DensityOperator, Ket, RegisterSystem, TestOperator, matrix_of, partial_trace
from .stateio import to_jsonable

DENSE_CAP = 2 ** 13
TYPE_CAP = 2 ** 22


# ---------------------------------------------------------------------------
# typical windows
# ---------------------------------------------------------------------------


@dataclass
class TypicalWindow:
    """Eigenvalue window ``[2^{-n(S+delta)}, 2^{-n(S-delta)}]`` of ``rho^{(x)n}``.

    Attributes
    ----------
    projector : TestOperator
        Projector onto product eigenvectors with eigenvalue in the window
        (closed at both ends).
    mass : float
        ``Tr(Pi rho^{(x)n})``.
    eigenvalues : ndarray
        Eigenvalues of ``rho^{(x)n}`` kept by the window.
    min_eig : float
        Smallest nonzero single-copy eigenvalue.
    single_distinct : int
        Number of distinct nonzero single-copy eigenvalues.
    """

    n: int
    delta: float
    entropy: float
    log_lo: float
    log_hi: float
    projector: TestOperator = field(repr=False)
    mass: float
    eigenvalues: np.ndarray = field(repr=False)
    min_eig: float
    single_distinct: int

    @property
    def rank(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def lo(self) -> float:
        return 2.0 ** self.log_lo

    @property
    def hi(self) -> float:
        return 2.0 ** self.log_hi

    def dimension_bracket(self):
        """``(mass 2^{n(S - delta)}, 2^{n(S + delta)})``; the rank always lies inside."""
        return self.mass * 2.0 ** (self.n * (self.entropy - self.delta)), 2.0 ** (self.n * (self.entropy + self.delta))

    def uniform(self) -> np.ndarray:
        """Matrix of the uniform state on the window."""
        return matrix_of(self.projector) / max(self.rank, 1)

    def sandwich_slack(self) -> float:
        """Smallest eigenvalue slack of ``2^{-2n delta} PrP <= mu <= (2^{2n delta}/mass) PrP``."""
        if self.rank == 0:
            return 0.0
        u = 1.0 / self.rank
        f = 2.0 ** (2 * self.n * self.delta)
        lower = u - self.eigenvalues / f
        upper = self.eigenvalues * f / self.mass - u
        return float(min(lower.min(), upper.min()))

    def sandwich_constant(self) -> float:
        """Smallest ``c`` with ``mu <= c PrP``: ``1 / (rank * smallest kept eigenvalue)``."""
        if self.rank == 0:
            return math.inf
        return 1.0 / (self.rank * float(self.eigenvalues.min()))

    def to_dict(self):
        return {
            "n": self.n,
            "delta": self.delta,
            "entropy": self.entropy,
            "log_lo": self.log_lo,
            "log_hi": self.log_hi,
            "mass": self.mass,
            "rank": self.rank,
            "min_eig": self.min_eig,
        }


def typical_window(rho: DensityOperator, n: int, delta: float, suffix="_{}") -> TypicalWindow:
    """Typical window of ``rho^{(x)n}`` built from the single-copy spectrum.

    Registers of the output are ``name + suffix.format(t)``, copy-major, as
    in :func:`tensor_power`.
    """
    n = int(n)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if delta < 0:
        raise DomainError(f"delta must be >= 0, got {delta}")
    d = rho.system.dim
    if d ** n > DENSE_CAP:
        raise CapacityError(f"typical projector needs dimension {d}^{n} > {DENSE_CAP}")
    w, v = eigh_clipped(matrix_of(rho))
    w = np.clip(w, 0.0, None)
    nz = w[w > 0]
    S = float(-np.sum(nz * np.log2(nz)))
    logs = np.full(d, -np.inf)
    logs[w > 0] = np.log2(w[w > 0])
    total = np.zeros(1)
    vec = np.ones((1, 1))
    for _ in range(n):
        total = np.add.outer(total, logs).ravel()
        vec = np.kron(vec, v)
    lo, hi = -n * (S + delta), -n * (S - delta)
    tol = 1e-12 * max(1.0, n * (S + delta))
    keep = (total >= lo - tol) & (total <= hi + tol)
    vals = np.exp2(total[keep])
    vk = vec[:, keep]
    names = [nm + suffix.format(t) for t in range(1, n + 1) for nm in rho.system.names]
    dims = [dd for _ in range(n) for dd in rho.system.dims]
    system = RegisterSystem(tuple(zip(names, dims)))
    proj = TestOperator(system, vk @ vk.conj().T, check=False)
    return TypicalWindow(
        n=n,
        delta=float(delta),
        entropy=S,
        log_lo=lo,
        log_hi=hi,
        projector=proj,
        mass=float(np.sum(vals)),
        eigenvalues=vals,
        min_eig=float(nz.min()) if nz.size else 0.0,
        single_distinct=distinct_count(nz),
    )


def typical_projector(rho: DensityOperator, n: int, delta: float):
    """``(projector, mass)`` of the typical window of ``rho^{(x)n}``."""
    win = typical_window(rho, n, delta)
    return win.projector, win.mass


def chernoff_mass_bound(entropy: float, min_eig: float, n: int, delta: float) -> Optional[float]:
    """Chernoff lower bound ``1 - 2 exp(-delta^2 n / (3 S log(1/lambda_min)))``.

    Returns None outside the regime where the bound applies (``delta > S`` or a
    flat spectrum).
    """
    if entropy <= 0 or min_eig <= 0 or min_eig >= 1 or delta > entropy:
        return None
    return 1.0 - 2.0 * math.exp(-(delta ** 2) * n / (3.0 * entropy * math.log2(1.0 / min_eig)))


# ---------------------------------------------------------------------------
# cuts and dual projectors
# ---------------------------------------------------------------------------


def cut_projector(rho, sigma_ref, k: float) -> np.ndarray:
    """Projector onto the non-positive eigenspace of ``rho - 2^k sigma_ref``."""
    a = hermitize(matrix_of(rho))
    b = hermitize(matrix_of(sigma_ref))
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    w, v = np.linalg.eigh(hermitize(a - 2.0 ** k * b))
    keep = w <= ZERO_BAND
    vk = v[:, keep]
    return vk @ vk.conj().T


def np_cut(rho: DensityOperator, sigma_ref, k: float):
    """Remove the eigen-directions where ``rho`` exceeds ``2^k sigma_ref``.

    Returns
    -------
    (DensityOperator, float)
        ``Pi rho Pi / Tr(Pi rho)`` and the kept mass ``Tr(Pi rho)``. The state
        is None when nothing is kept.
    """
    sys_s = getattr(sigma_ref, "system", None)
    if sys_s is not None and sys_s.names != rho.system.names:
        raise ShapeError("np_cut: operators on different register layouts")
    p = cut_projector(rho, sigma_ref, k)
    a = matrix_of(rho)
    kept = float(np.real(np.trace(p @ a)))
    if kept <= 0:
        return None, 0.0
    return DensityOperator(rho.system, hermitize(p @ a @ p) / kept, check=False), kept


def dual_projector(psi: Ket, pi_a: TestOperator, tol=1e-8) -> TestOperator:
    """Projector on the complement registers inducing the same projected pure state.

    With ``psi`` viewed as a matrix ``X`` from the complement to ``pi_a``'s
    registers, the dual is ``conj(X^+ Pi_A X)``.

    Raises
    ------
    ContractViolation
        ``pi_a`` does not commute with the marginal or leaves its support.
    """
    a_names = list(pi_a.system.names)
    b_names = [n for n in psi.system.names if n not in set(a_names)]
    if len(b_names) + len(a_names) != len(psi.system.names):
        raise ShapeError("projector registers must belong to psi")
    order = a_names + b_names
    arr = np.moveaxis(psi.tensor, [psi.system.index(n) for n in order], range(len(order)))
    da = psi.system.sub(a_names).dim
    x = arr.reshape(da, -1)
    pa = matrix_of(pi_a)
    marg = x @ x.conj().T
    comm = float(np.linalg.norm(pa @ marg - marg @ pa))
    if comm > tol:
        raise ContractViolation(f"projector does not commute with the marginal (defect {comm:.2e})")
    supp = support_projector(marg)
    leak = float(np.linalg.norm(pa - supp @ pa @ supp))
    if leak > tol:
        raise ContractViolation(f"projector leaves the support of the marginal (defect {leak:.2e})")
    pb = np.linalg.pinv(x, rcond=1e-10) @ pa @ x
    b_sys = psi.system.sub(b_names).ordered(b_names)
    return TestOperator(b_sys, hermitize(pb.conj()), check=False)


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class SurgeryReport:
    """Measured quantities of one pipeline run.

    ``masses`` holds ``typical_R``, ``typical_M``, ``typical_N`` (single
    windows), ``typical`` (joint projection), ``cut_RM`` and ``cut_RN``.
    ``bounds`` holds the measured-constant right-hand sides checked by
    :func:`verify_surgery`; ``literal`` holds the same bounds with the
    window constants ``2 n delta + 2 log(1 + delta)`` for reference only.
    """

    n: int
    delta: float
    eps_cut: tuple
    windows: dict = field(repr=False)
    masses: dict = field(default_factory=dict)
    k: float = float("nan")
    k_prime: float = float("nan")
    distances: dict = field(default_factory=dict)
    dmax: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    literal: dict = field(default_factory=dict)
    r_marginal_slack: float = float("nan")
    purity: float = float("nan")
    dual_defect: float = float("nan")
    sandwich_slack: dict = field(default_factory=dict)
    spectrum_gap: dict = field(default_factory=dict)
    v: int = 0
    v_bound: int = 0
    v_literal: float = 0.0
    chernoff: dict = field(default_factory=dict)
    completed: bool = False
    note: str = ""

    def to_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "windows"}
        out["eps_cut"] = list(self.eps_cut)
        out["windows"] = {k: w.to_dict() for k, w in self.windows.items()}
        return _jsonable(out)


_jsonable = to_jsonable


def _iid_array(rho_RMN: Ket, n: int):
    names = list(rho_RMN.system.names)
    if sorted(names) != ["M", "N", "R"]:
        raise ShapeError(f"surgery expects registers R, M, N, got {names}")
    arr = np.moveaxis(rho_RMN.tensor, [names.index(r) for r in "RMN"], [0, 1, 2])
    out = arr
    for _ in range(n - 1):
        out = np.multiply.outer(out, arr)
    # axes now (R1, M1, N1, R2, M2, N2, ...); group by role
    perm = [3 * t + j for j in range(3) for t in range(n)]
    return np.transpose(out, perm)


def _grouped_system(rho_RMN: Ket, n: int) -> RegisterSystem:
    regs = []
    for r in "RMN":
        d = rho_RMN.system.dim_of(r)
        regs += [(f"{r}_{t}", d) for t in range(1, n + 1)]
    return RegisterSystem(tuple(regs))


def _overlap_pd(a, b) -> float:
    return float(np.linalg.norm(a - np.vdot(b, a) * b))


def _min_eig(m) -> float:
    return float(np.linalg.eigvalsh(hermitize(m))[0]) if m.size else 0.0


def smoothed_state_pipeline(rho_RMN: Ket, n: int, delta: float, eps_cut=0.1, eps_cut2=None, *,
                            check_spectrum=True):
    """Run typical projection and the two eigenvalue cuts on ``rho_RMN^{(x)n}``.

    Parameters
    ----------
    rho_RMN : Ket
        Pure state on registers ``R, M, N``.
    n : int
        Number of copies; ``(|R||M||N|)^n`` must stay within the dense cap.
    delta : float
        Half-width of the typical windows in bits per copy.
    eps_cut, eps_cut2 : float
        Smoothing of the two information-spectrum thresholds ``k`` and ``k'``
        (``eps_cut2`` defaults to ``eps_cut``).
    check_spectrum : bool
        Also compare the spectrum divergence of the output against the
        uniform product with its max-divergence (one dense bisection).

    Returns
    -------
    (Ket or None, SurgeryReport)
        The final state on ``R_1..R_n, M_1..M_n, N_1..N_n``. None when a
        projection removes everything; the report then has ``completed=False``.
    """
    n = int(n)
    eps2 = eps_cut if eps_cut2 is None else eps_cut2
    for e in (eps_cut, eps2):
        if not 0 < e < 1:
            raise DomainError(f"cut smoothing must lie in (0, 1), got {e}")
    dims = {r: rho_RMN.system.dim_of(r) for r in "RMN"}
    total = (dims["R"] * dims["M"] * dims["N"]) ** n
    if total > DENSE_CAP:
        raise CapacityError(f"surgery needs dimension {total} > {DENSE_CAP}")
    marg = {r: partial_trace(rho_RMN, [r]) for r in "RMN"}
    win = {r: typical_window(marg[r], n, delta) for r in "RMN"}
    rep = SurgeryReport(n=n, delta=float(delta), eps_cut=(float(eps_cut), float(eps2)), windows=win)
    for r in "RMN":
        rep.masses[f"typical_{r}"] = win[r].mass
        rep.sandwich_slack[r] = win[r].sandwich_slack()
        rep.chernoff[r] = chernoff_mass_bound(win[r].entropy, win[r].min_eig, n, delta)
    system = _grouped_system(rho_RMN, n)
    a, b, c = (dims[r] ** n for r in "RMN")
    x0 = _iid_array(rho_RMN, n).reshape(a, b, c)
    pR, pM, pN = (matrix_of(win[r].projector) for r in "RMN")

    # typical projection
    x1 = np.einsum("ai,bj,ck,ijk->abc", pR, pM, pN, x0, optimize=True)
    m1 = float(np.vdot(x1, x1).real)
    rep.masses["typical"] = m1
    if m1 <= 1e-14:
        rep.note = "typical projection removed all weight"
        return None, rep
    x1 /= math.sqrt(m1)

    # cut on (R, M)
    muR, muM, muN = (win[r].uniform() for r in "RMN")
    rm_sys = system.sub([f"R_{t}" for t in range(1, n + 1)] + [f"M_{t}" for t in range(1, n + 1)])
    rn_sys = system.sub([f"R_{t}" for t in range(1, n + 1)] + [f"N_{t}" for t in range(1, n + 1)])
    y = x1.reshape(a * b, c)
    rho1_rm = DensityOperator(rm_sys, hermitize(y @ y.conj().T), check=False)
    ref_rm = DensityOperator(rm_sys, np.kron(muR, muM), check=False)
    rep.k = info_spectrum(rho1_rm, ref_rm, eps_cut, variant="minus").value
    p1 = cut_projector(rho1_rm, ref_rm, rep.k)
    x2 = (p1 @ y).reshape(a, b, c)
    m2 = float(np.vdot(x2, x2).real)
    rep.masses["cut_RM"] = m2
    if m2 <= 1e-14:
        rep.note = "first cut removed all weight"
        return None, rep
    x2 /= math.sqrt(m2)

    # cut on (R, N), realised on N's side and checked against the dual on M
    z = np.transpose(x2, (0, 2, 1)).reshape(a * c, b)
    rho2_rn = DensityOperator(rn_sys, hermitize(z @ z.conj().T), check=False)
    ref_rn = DensityOperator(rn_sys, np.kron(muR, muN), check=False)
    rep.k_prime = info_spectrum(rho2_rn, ref_rn, eps2, variant="minus").value
    p2 = cut_projector(rho2_rn, ref_rn, rep.k_prime)
    z3 = p2 @ z
    m3 = float(np.vdot(z3, z3).real)
    rep.masses["cut_RN"] = m3
    if m3 <= 1e-14:
        rep.note = "second cut removed all weight"
        return None, rep

    # dual transfer: the same cut as a projector on M alone
    supp = support_projector(rho2_rn.matrix)
    p2s = hermitize(supp @ p2 @ supp)
    psi2 = Ket(system, x2.reshape(-1), normalized=False)
    dual = dual_projector(psi2, TestOperator(rn_sys, p2s, check=False))
    x3_dual = np.einsum("jk,akc->ajc", matrix_of(dual), x2)
    x3_raw = np.transpose(z3.reshape(a, c, b), (0, 2, 1))
    rep.dual_defect = float(np.linalg.norm(x3_dual - x3_raw))
    x3 = x3_raw / math.sqrt(m3)
    dm3 = np.outer(x3_dual.reshape(-1), x3_dual.reshape(-1).conj())
    dm3 /= np.trace(dm3).real
    rep.purity = float(np.real(np.vdot(dm3, dm3)))
    psi = Ket(system, x3.reshape(-1), normalized=False)

    # distances along the chain
    v0, v1, v2, v3 = (t.reshape(-1) for t in (x0, x1, x2, x3))
    rep.distances = {
        "typical": _overlap_pd(v1, v0),
        "cut_RM": _overlap_pd(v2, v1),
        "cut_RN": _overlap_pd(v3, v2),
        "total": _overlap_pd(v3, v0),
    }

    # max-divergences of the final marginals against i.i.d. products
    iid = {r: _iid_marginal(marg[r], n, r) for r in "RMN"}
    rm = partial_trace(psi, list(rm_sys.names))
    rn = partial_trace(psi, list(rn_sys.names))
    rep.dmax = {
        "RM": dmax_to_product(rm, [iid["R"], iid["M"]]).value,
        "RN": dmax_to_product(rn, [iid["R"], iid["N"]]).value,
        "RMN": dmax_pure_to_product(psi, [iid["R"], iid["M"], iid["N"]]).value,
    }
    psi_r = partial_trace(psi, list(iid["R"].system.names)).matrix
    scale = 1.0 / (m1 * m2 * m3)
    rep.r_marginal_slack = _min_eig(scale * iid["R"].matrix - psi_r)

    nd = n * delta
    mR, mM, mN = (win[r].mass for r in "RMN")
    lg = math.log2
    rep.bounds = {
        "RM": rep.k + 4 * nd + lg(1 / (m2 * m3 * mR * mM)),
        "RN": rep.k_prime + 4 * nd + lg(1 / (m3 * mR * mN)),
        "RMN": lg(win["R"].rank * win["M"].rank * win["N"].rank) + 6 * nd + lg(1 / (mR * mM * mN)),
        "R_marginal": lg(scale),
        "chain": math.sqrt(max(0.0, 1 - m1)) + math.sqrt(max(0.0, 1 - m2)) + math.sqrt(max(0.0, 1 - m3)),
    }
    cR, cM, cN = (win[r].sandwich_constant() for r in "RMN")
    rep.bounds["RM_tight"] = rep.k + lg(cR * cM / (m2 * m3))
    rep.bounds["RN_tight"] = rep.k_prime + lg(cR * cN / m3)
    rep.literal = {
        "RM": rep.k + lg(1 / (m2 * m3)) + 2 * nd + 2 * lg(1 + delta),
        "RN": rep.k_prime + lg(1 / m3) + 2 * nd + 2 * lg(1 + delta),
    }
    rep.literal["RM holds"] = rep.dmax["RM"] <= rep.literal["RM"] + 1e-7
    rep.literal["RN holds"] = rep.dmax["RN"] <= rep.literal["RN"] + 1e-7

    # pure state against the uniform product: spectrum divergence equals D_max
    if check_spectrum:
        unis = [DensityOperator(system.sub(iid[r].system.names), u, check=False) for r, u in zip("RMN", (muR, muM, muN))]
        dm_mu = dmax_pure_to_product(psi, unis).value
        mu3 = DensityOperator(system, np.kron(np.kron(muR, muM), muN), check=False)
        full = psi.dm()
        for e in (0.1, 0.5):
            ds = info_spectrum(full, mu3, e, variant="plus").value
            rep.spectrum_gap[str(e)] = abs(ds - dm_mu)

    prod = np.multiply.outer(np.multiply.outer(win["R"].eigenvalues, win["M"].eigenvalues), win["N"].eigenvalues)
    rep.v = distinct_count(prod.ravel())
    rep.v_bound = int((n + 1) ** (win["R"].single_distinct + win["M"].single_distinct + win["N"].single_distinct))
    rep.v_literal = float(n ** (2 * (dims["R"] + dims["M"] + dims["N"])))
    rep.completed = True
    return psi, rep


def _iid_marginal(rho: DensityOperator, n: int, role: str) -> DensityOperator:
    m = np.ones((1, 1))
    for _ in range(n):
        m = np.kron(m, rho.matrix)
    d = rho.system.dim
    return DensityOperator(RegisterSystem(tuple((f"{role}_{t}", d) for t in range(1, n + 1))), m, check=False)


def verify_surgery(report: SurgeryReport, tol=1e-7) -> dict:
    """Boolean checks of the measured-constant inequalities.

    Never raises; a run that lost all weight reports ``passed=False`` with
    the mass flag set.
    """
    out = {"masses positive": bool(report.completed)}
    if not report.completed:
        out["passed"] = False
        out["note"] = report.note
        return out
    m = report.masses
    d = report.distances
    gentle = {
        "typical": math.sqrt(max(0.0, 1 - m["typical"])),
        "cut_RM": math.sqrt(max(0.0, 1 - m["cut_RM"])),
        "cut_RN": math.sqrt(max(0.0, 1 - m["cut_RN"])),
    }
    out["gentle steps"] = all(d[s] <= gentle[s] + tol for s in gentle)
    out["distance chain"] = d["total"] <= report.bounds["chain"] + tol
    out["R marginal"] = report.r_marginal_slack >= -1e-8
    out["RM bound"] = report.dmax["RM"] <= report.bounds["RM"] + tol
    out["RN bound"] = report.dmax["RN"] <= report.bounds["RN"] + tol
    out["RMN bound"] = report.dmax["RMN"] <= report.bounds["RMN"] + tol
    out["purity"] = report.purity >= 1 - 1e-9
    out["dual transfer"] = report.dual_defect <= 1e-8
    out["window sandwich"] = all(s >= -1e-9 for s in report.sandwich_slack.values())
    out["pure state spectrum"] = all(g <= tol for g in report.spectrum_gap.values())
    out["distinct eigenvalue count"] = report.v <= report.v_bound
    cher = [report.masses[f"typical_{r}"] >= b - 1e-12 for r, b in report.chernoff.items() if b is not None]
    out["chernoff"] = all(cher)
    out["passed"] = all(bool(v) for v in out.values())
    return out


def warmup_lemma(rho_RMN: Ket, delta: float, tol=1e-7) -> dict:
    """One-shot cuts for a pure state with maximally mixed marginals.

    Uses smoothing ``2 delta^2`` and ``8 delta^2`` for the two cuts and checks
    the closeness ``P <= 5 delta`` and ``rho''_R <= rho_R / (1 - 10 delta^2)``
    alongside the measured-constant bounds.
    """
    if not 0 < delta < 0.2:
        raise DomainError("delta must lie in (0, 1/5)")
    for r in "RMN":
        m = partial_trace(rho_RMN, [r]).matrix
        d = m.shape[0]
        if np.linalg.norm(m - np.eye(d) / d) > 1e-8:
            raise ContractViolation(f"marginal on {r} is not maximally mixed")
    psi, rep = smoothed_state_pipeline(rho_RMN, 1, 0.0, eps_cut=2 * delta ** 2, eps_cut2=8 * delta ** 2)
    flags = verify_surgery(rep, tol)
    if rep.completed:
        flags["closeness"] = rep.distances["total"] <= 5 * delta + tol
        flags["R marginal literal"] = rep.bounds["R_marginal"] <= math.log2(1 / (1 - 10 * delta ** 2)) + tol
        flags["passed"] = flags["passed"] and flags["closeness"] and flags["R marginal literal"]
    return {"flags": flags, "report": rep, "state": psi}


# ---------------------------------------------------------------------------
# classical i.i.d. hypothesis testing
# ---------------------------------------------------------------------------


def _compositions(n, parts):
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def classical_dh_iid(p, q, n: int, eps: float) -> float:
    """Exact ``D_H^eps(p^n || q^n)`` in bits by type-class aggregation.

    Types are sorted by log-likelihood ratio; the optimal test accepts whole
    classes in that order and a fraction of the boundary class.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ShapeError("p and q must be 1-d distributions of equal length")
    if abs(p.sum() - 1) > 1e-9 or abs(q.sum() - 1) > 1e-9 or (p < 0).any() or (q < 0).any():
        raise DomainError("p and q must be probability vectors")
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    n = int(n)
    if math.comb(n + p.size - 1, p.size - 1) > TYPE_CAP:
        raise CapacityError("too many type classes")
    with np.errstate(divide="ignore"):
        lp, lq = np.log(p), np.log(q)
    rows = []
    for t in _compositions(n, p.size):
        t = np.asarray(t)
        used = t > 0
        if np.any(np.isneginf(lp[used])):
            continue
        lc = math.lgamma(n + 1) - sum(math.lgamma(x + 1) for x in t)
        a = lc + float(np.dot(t[used], lp[used]))
        b = lc + float(np.dot(t[used], lq[used])) if not np.any(np.isneginf(lq[used])) else -math.inf
        rows.append((a - b, math.exp(a), math.exp(b) if b > -math.inf else 0.0))
    rows.sort(key=lambda r: -r[0])
    target = 1.0 - eps
    acc = beta = 0.0
    i = 0
    while i < len(rows) and acc < target:
        j = i
        gp = gq = 0.0
        while j < len(rows) and abs(rows[j][0] - rows[i][0]) <= 1e-12 * max(1.0, abs(rows[i][0])):
            gp += rows[j][1]
            gq += rows[j][2]
            j += 1
        if acc + gp >= target:
            beta += gq * (target - acc) / gp
            acc = target
        else:
            acc += gp
            beta += gq
        i = j
    if beta <= 0:
        return math.inf
    return -math.log2(beta)


def classical_dh_dense(p, q, n: int, eps: float) -> float:
    """The same quantity via :func:`optimal_test` on the diagonal embedding."""
    pn, qn = np.ones(1), np.ones(1)
    for _ in range(int(n)):
        pn = np.kron(pn, p)
        qn = np.kron(qn, q)
    if pn.size > DENSE_CAP:
        raise CapacityError("dense embedding too large")
    sys_ = RegisterSystem((("X", pn.size),))
    return optimal_test(DensityOperator(sys_, np.diag(pn)), DensityOperator(sys_, np.diag(qn)), eps).value


def second_order_table(p, q, eps: float, ns):
    """Rows ``(n, exact, estimate, gap)`` with ``gap = |exact - estimate|``."""
    sys_ = RegisterSystem((("X", len(p)),))
    rho = DensityOperator(sys_, np.diag(np.asarray(p, dtype=float)))
    sigma = DensityOperator(sys_, np.diag(np.asarray(q, dtype=float)))
    rows = []
    for n in ns:
        exact = classical_dh_iid(p, q, n, eps)
        est = second_order_estimate(rho, sigma, n, eps).value
        rows.append((int(n), exact, est, abs(exact - est)))
    return rows


def typical_mass_enumerated(probs, n: int, delta: float) -> float:
    """Typical mass of an i.i.d. distribution by sequence enumeration (test oracle)."""
    probs = np.asarray(probs, dtype=float)
    nz = probs[probs > 0]
    S = float(-np.sum(nz * np.log2(nz)))
    lo, hi = -n * (S + delta), -n * (S - delta)
    tol = 1e-12 * max(1.0, n * (S + delta))
    total = 0.0
    for seq in itertools.product(range(probs.size), repeat=n):
        pr = float(np.prod(probs[list(seq)]))
        if pr > 0 and lo - tol <= math.log2(pr) <= hi + tol:
            total += pr
    return total
