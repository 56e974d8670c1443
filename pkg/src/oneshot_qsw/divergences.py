"""Entropic quantities in bits.

Relative entropy, mutual informations, max-relative entropy, the
hypothesis-testing divergence (quantum Neyman-Pearson), both
information-spectrum divergences, a smooth max-divergence bracket and the
second-order (Gaussian) estimate for i.i.d. hypothesis testing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, NameClash, NumericalError, ShapeError, SupportError
from .linalg import (
    CLIP_TOL,
    ZERO_BAND,
    distinct_count,
    eigh_clipped,
    hermitize,
    log2_psd,
    support_mask,
)
from .qstate import (
    DensityOperator,
    Ket,
    RegisterSystem,
    TestOperator,
    matrix_of,
    partial_trace,
    reorder,
    tensor,
)

SUPPORT_TOL = 1e-9
SPECTRUM_LO, SPECTRUM_HI = -60.0, 60.0
SPECTRUM_TOL = 1e-9
TEST_BISECT_TOL = 1e-13


@dataclass
class DivergenceResult:
    """Value of a divergence with optional certificate data.

    Attributes
    ----------
    value : float
        Bits.
    witness : TestOperator, optional
        Optimal test for hypothesis-testing quantities.
    threshold : float, optional
        Feasible endpoint of the bisection (in bits) for spectrum quantities.
    bracket : (float, float), optional
        Lower and upper bound when the value is only bracketed.
    estimate : bool
        True when ``value`` is a midpoint estimate rather than exact.
    extras : dict
        Auxiliary numbers (e.g. the alternative lower bound of a bracket).
    """

    value: float
    witness: Optional[TestOperator] = None
    threshold: Optional[float] = None
    bracket: Optional[tuple] = None
    estimate: bool = False
    extras: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


@dataclass
class SecondOrderEstimate:
    n: int
    dominant: float
    dispersion: float
    V: float

    @property
    def value(self) -> float:
        return self.dominant + self.dispersion


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _pair(rho, sigma):
    """Matrices of two operators on a common register layout."""
    sys_r = getattr(rho, "system", None)
    sys_s = getattr(sigma, "system", None)
    if sys_r is not None and sys_s is not None and sys_r.names != sys_s.names:
        if sorted(sys_r.names) != sorted(sys_s.names):
            raise ShapeError(f"operators on different systems {sys_r.names} vs {sys_s.names}")
        sigma = reorder(sigma, sys_r.names)
    a = matrix_of(rho)
    b = matrix_of(sigma)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return hermitize(a), hermitize(b), (sys_r or sys_s)


def _check_eps(eps, name="eps"):
    if not (0.0 < float(eps) < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {eps!r}")


def _support_basis(b):
    w, v = eigh_clipped(b)
    mask = support_mask(w)
    return w[mask], v[:, mask], v[:, ~mask]


def _check_support(a, ker):
    if ker.shape[1] == 0:
        return
    leak = float(np.real(np.trace(ker.conj().T @ a @ ker)))
    if leak > SUPPORT_TOL:
        raise SupportError(f"support violation: weight {leak:.3g} outside the second argument's support")


# ---------------------------------------------------------------------------
# entropies
# ---------------------------------------------------------------------------


def von_neumann_entropy(rho) -> float:
    """``S(rho) = -Tr rho log rho`` in bits (equals ``-D(rho || I)``)."""
    w = np.linalg.eigvalsh(hermitize(matrix_of(rho)))
    w = w[w > CLIP_TOL]
    return float(-np.sum(w * np.log2(w)))


def relative_entropy(rho, sigma) -> float:
    """``D(rho || sigma) = Tr rho log rho - Tr rho log sigma`` in bits.

    Raises
    ------
    SupportError
        If ``supp(rho)`` is not inside ``supp(sigma)``; infinity is never
        returned silently.
    """
    a, b, _ = _pair(rho, sigma)
    ws, vs, ker = _support_basis(b)
    _check_support(a, ker)
    wa = eigh_clipped(a)[0]
    wa = wa[wa > 0]
    t1 = float(np.sum(wa * np.log2(wa)))
    ar = vs.conj().T @ a @ vs
    t2 = float(np.real(np.sum(np.diag(ar) * np.log2(ws))))
    return t1 - t2


def relative_entropy_to_product(rho, factors) -> float:
    """``D(rho || f_1 (x) ... (x) f_k)`` without forming the product.

    ``factors`` are states on disjoint register groups covering ``rho``.
    Uses ``D(rho || (x) f_i) = -S(rho) + sum_i (S(rho_i) + D(rho_i || f_i))``,
    which needs a single eigen-decomposition of ``rho``.
    """
    names = [n for f in factors for n in f.system.names]
    if len(set(names)) != len(names):
        raise NameClash(names)
    if sorted(names) != sorted(rho.system.names):
        raise ShapeError("factors must cover the registers of rho exactly")
    total = -von_neumann_entropy(rho)
    for f in factors:
        part = partial_trace(rho, list(f.system.names))
        total += von_neumann_entropy(part) + relative_entropy(part, f)
    return total


def dmax_to_product(rho, factors) -> DivergenceResult:
    """``D_max(rho || f_1 (x) ... (x) f_k)`` whitening each factor on its own support.

    Equivalent to :func:`dmax` against the tensor product, but the support of
    each factor is decided separately, so tiny product eigenvalues are not
    mistaken for kernel directions.
    """
    names = [n for f in factors for n in f.system.names]
    if len(set(names)) != len(names):
        raise NameClash(names)
    if sorted(names) != sorted(rho.system.names):
        raise ShapeError("factors must cover the registers of rho exactly")
    rho = reorder(rho, names)
    a = hermitize(matrix_of(rho))
    whiten, sup = np.ones((1, 1)), np.ones((1, 1))
    for f in factors:
        ws, vs, _ = _support_basis(hermitize(matrix_of(f)))
        whiten = np.kron(whiten, vs * (1.0 / np.sqrt(ws))[None, :])
        sup = np.kron(sup, vs)
    leak = float(np.real(np.trace(a))) - float(np.real(np.trace(sup.conj().T @ a @ sup)))
    if leak > SUPPORT_TOL:
        raise SupportError(f"support violation: weight {leak:.3g} outside the second argument's support")
    x = hermitize(whiten.conj().T @ a @ whiten)
    top = float(np.linalg.eigvalsh(x)[-1]) if x.size else 0.0
    if top <= 0:
        return DivergenceResult(value=-math.inf)
    return DivergenceResult(value=math.log2(top))


def dmax_pure_to_product(psi: Ket, factors) -> DivergenceResult:
    """``D_max(|psi><psi| || (x) f_i) = log <psi| (x) f_i^{-1} |psi>`` for a ket.

    Each factor is inverted on its own support; no operator of the full
    dimension is formed.
    """
    names = [n for f in factors for n in f.system.names]
    if len(set(names)) != len(names):
        raise NameClash(names)
    if sorted(names) != sorted(psi.system.names):
        raise ShapeError("factors must cover the registers of psi exactly")
    t = reorder(psi, names).vector
    t_sup = t
    for f in factors:
        ws, vs, _ = _support_basis(hermitize(matrix_of(f)))
        d = f.system.dim
        t = t.reshape(d, -1)
        t_sup = t_sup.reshape(d, -1)
        # contract the leading factor and rotate it to the back
        t = ((vs * (1.0 / np.sqrt(ws))[None, :]).conj().T @ t).T.reshape(-1)
        t_sup = (vs.conj().T @ t_sup).T.reshape(-1)
    norm2 = float(np.real(np.vdot(psi.vector, psi.vector)))
    leak = norm2 - float(np.real(np.vdot(t_sup, t_sup)))
    if leak > SUPPORT_TOL:
        raise SupportError(f"support violation: weight {leak:.3g} outside the second argument's support")
    val = float(np.real(np.vdot(t, t)))
    if val <= 0:
        return DivergenceResult(value=-math.inf)
    return DivergenceResult(value=math.log2(val))


def mutual_information(rho, parts) -> float:
    """Mutual information of two or three register groups.

    ``I = sum_k S(rho_k) - S(rho_union)``; with three groups this is the
    tripartite quantity ``I(X:Y:Z)``.
    """
    parts = [list(p) if not isinstance(p, str) else [p] for p in parts]
    if len(parts) not in (2, 3):
        raise ShapeError("mutual_information takes 2 or 3 register groups")
    flat = [n for p in parts for n in p]
    if len(set(flat)) != len(flat):
        raise NameClash(f"register groups overlap: {parts}")
    total = 0.0
    for p in parts:
        total += von_neumann_entropy(partial_trace(rho, p))
    total -= von_neumann_entropy(partial_trace(rho, flat))
    return float(total)


def mutual_information_as_divergence(rho, parts) -> float:
    """Same quantity written as ``D(rho_union || tensor of marginals)``."""
    parts = [list(p) if not isinstance(p, str) else [p] for p in parts]
    flat = [n for p in parts for n in p]
    joint = partial_trace(rho, flat)
    prod = tensor(*[partial_trace(rho, p) for p in parts])
    return relative_entropy(joint, reorder(prod, joint.system.names))


# ---------------------------------------------------------------------------
# max-relative entropy
# ---------------------------------------------------------------------------


def dmax(rho, sigma) -> DivergenceResult:
    """``log lambda_max(sigma^{-1/2} rho sigma^{-1/2})`` on ``supp(sigma)``."""
    a, b, _ = _pair(rho, sigma)
    ws, vs, ker = _support_basis(b)
    _check_support(a, ker)
    ar = vs.conj().T @ a @ vs
    s = 1.0 / np.sqrt(ws)
    x = hermitize((ar * s[None, :]) * s[:, None])
    top = float(np.linalg.eigvalsh(x)[-1]) if x.size else 0.0
    if top <= 0:
        return DivergenceResult(value=-math.inf)
    return DivergenceResult(value=math.log2(top))


# ---------------------------------------------------------------------------
# threshold projectors
# ---------------------------------------------------------------------------


def _threshold_split(a, b, mu):
    """Eigenvectors of ``a - mu b`` split at zero (band to the plus side)."""
    w, v = np.linalg.eigh(hermitize(a - mu * b))
    plus = w >= -ZERO_BAND
    return v, plus


def _plus_mass(a, b, mu):
    v, plus = _threshold_split(a, b, mu)
    diag = np.real(np.sum(v.conj() * (a @ v), axis=0))
    return float(np.sum(diag[plus])), v, plus


def spectrum_mass(rho, sigma, R) -> float:
    """``Tr(rho {rho - 2^R sigma}_+)``."""
    a, b, _ = _pair(rho, sigma)
    return _plus_mass(a, b, 2.0 ** R)[0]


def _projector(v, mask):
    vs = v[:, mask]
    return vs @ vs.conj().T


# ---------------------------------------------------------------------------
# hypothesis testing divergence
# ---------------------------------------------------------------------------


def optimal_test(rho, sigma, eps) -> DivergenceResult:
    """Hypothesis-testing divergence ``D_H^eps(rho || sigma)`` with an optimal test.

    The optimum over ``0 <= Pi <= I`` with ``Tr(Pi rho) >= 1 - eps`` is a
    Neyman-Pearson test: the projector onto the non-negative part of
    ``rho - mu sigma`` plus a fractional weight on the zero eigenspace of the
    critical ``mu``. The critical ``mu`` is found by bisection on ``log2 mu``
    and the fractional weight is realised as the convex combination of the
    two projectors bracketing it, which fixes ``Tr(Pi rho) = 1 - eps``.
    """
    _check_eps(eps)
    a, b, system = _pair(rho, sigma)
    if system is None:
        system = RegisterSystem((("X", a.shape[0]),))
    target = 1.0 - float(eps)
    d = a.shape[0]

    # weight of rho outside supp(sigma): tests there cost nothing
    ws, vs, ker = _support_basis(b)
    if ker.shape[1]:
        pk = ker @ ker.conj().T
        free = float(np.real(np.trace(pk @ a)))
        if free >= target:
            pi = pk * (target / free)
            return DivergenceResult(value=math.inf, witness=TestOperator(system, pi, check=False))

    lo, hi = SPECTRUM_LO, SPECTRUM_HI
    f_lo, v_lo, p_lo = _plus_mass(a, b, 2.0 ** lo)
    f_hi, v_hi, p_hi = _plus_mass(a, b, 2.0 ** hi)
    if f_lo < target:
        raise NumericalError("hypothesis test bisection: lower end already infeasible")
    if f_hi >= target:
        raise NumericalError("hypothesis test bisection: value exceeds the search window")
    while hi - lo > TEST_BISECT_TOL:
        mid = 0.5 * (lo + hi)
        f, v, p = _plus_mass(a, b, 2.0 ** mid)
        if f >= target:
            lo, f_lo, v_lo, p_lo = mid, f, v, p
        else:
            hi, f_hi, v_hi, p_hi = mid, f, v, p
    P_lo = _projector(v_lo, p_lo)
    P_hi = _projector(v_hi, p_hi)
    gamma = (target - f_hi) / (f_lo - f_hi)
    gamma = min(1.0, max(0.0, gamma))
    pi = hermitize((1.0 - gamma) * P_hi + gamma * P_lo)
    q = float(np.real(np.trace(pi @ b)))
    value = math.inf if q <= 0 else -math.log2(q)
    return DivergenceResult(
        value=value,
        witness=TestOperator(system, pi, check=False),
        threshold=0.5 * (lo + hi),
        extras={"type_one_mass": float(np.real(np.trace(pi @ a))), "gamma": gamma},
    )


def hypothesis_testing_divergence(rho, sigma, eps) -> float:
    return optimal_test(rho, sigma, eps).value


# ---------------------------------------------------------------------------
# information spectrum
# ---------------------------------------------------------------------------


def info_spectrum(rho, sigma, eps, variant="plus") -> DivergenceResult:
    """Information-spectrum divergences by bisection over ``R`` in [-60, 60] bits.

    ``variant="plus"``  : ``sup{R : Tr(rho {rho - 2^R sigma}_+) >= 1 - eps}``
    ``variant="minus"`` : ``inf{R : Tr(rho {rho - 2^R sigma}_-) >= 1 - eps}``

    ``threshold`` holds the endpoint at which the defining condition holds.
    """
    _check_eps(eps)
    if variant not in ("plus", "minus"):
        raise DomainError(f"variant must be 'plus' or 'minus', got {variant!r}")
    a, b, _ = _pair(rho, sigma)
    _, _, ker = _support_basis(b)
    _check_support(a, ker)
    target = 1.0 - float(eps)

    if variant == "plus":
        def ok(R):
            return _plus_mass(a, b, 2.0 ** R)[0] >= target
        lo, hi = SPECTRUM_LO, SPECTRUM_HI
        if not ok(lo):
            raise NumericalError("information spectrum: condition fails at the lower end")
        if ok(hi):
            raise NumericalError("information spectrum: condition still holds at the upper end")
        while hi - lo > SPECTRUM_TOL:
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        return DivergenceResult(value=lo, threshold=lo)

    def ok(R):
        return 1.0 - _plus_mass(a, b, 2.0 ** R)[0] >= target
    lo, hi = SPECTRUM_LO, SPECTRUM_HI
    if not ok(hi):
        raise NumericalError("information spectrum: condition fails at the upper end")
    if ok(lo):
        raise NumericalError("information spectrum: condition already holds at the lower end")
    while hi - lo > SPECTRUM_TOL:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return DivergenceResult(value=hi, threshold=hi)


# ---------------------------------------------------------------------------
# smooth max-divergence bracket
# ---------------------------------------------------------------------------


def distinct_eigenvalue_count(sigma, rel_gap=1e-8) -> int:
    """Number of distinct eigenvalues, merging neighbours closer than ``rel_gap``."""
    w = eigh_clipped(matrix_of(sigma))[0]
    w = np.where(support_mask(w), w, 0.0)
    return distinct_count(w, rel_gap)


def smooth_dmax_bracket(rho, sigma, eps, delta) -> DivergenceResult:
    """Bracket for the smooth max-divergence from information-spectrum values.

    ``lower = D_s^{1-eps^2-delta} - 2 log(1/delta) - 2``
    ``upper = D_s^{1-eps^2+delta} + log v(sigma) + 2 log(1/eps) + log(1/delta)``

    ``upper`` is ``inf`` when ``1 - eps^2 + delta >= 1``. ``extras`` carries
    the alternative lower bound ``tilde D_s^{eps^2+delta} - 2 log(1/delta) - 2``.
    """
    _check_eps(eps)
    _check_eps(delta, "delta")
    e2 = float(eps) ** 2
    if e2 + delta >= 1.0:
        raise DomainError("need eps^2 + delta < 1")
    v = distinct_eigenvalue_count(sigma)
    c_low = -2.0 * math.log2(1.0 / delta) - 2.0
    lower = info_spectrum(rho, sigma, 1.0 - e2 - delta, "plus").value + c_low
    if 1.0 - e2 + delta < 1.0:
        upper = (
            info_spectrum(rho, sigma, 1.0 - e2 + delta, "plus").value
            + math.log2(v)
            + 2.0 * math.log2(1.0 / eps)
            + math.log2(1.0 / delta)
        )
    else:
        upper = math.inf
    alt = info_spectrum(rho, sigma, e2 + delta, "minus").value + c_low
    mid = 0.5 * (lower + upper) if math.isfinite(upper) else lower
    return DivergenceResult(
        value=mid,
        bracket=(lower, upper),
        estimate=True,
        extras={"distinct_eigenvalues": v, "tilde_lower": alt},
    )


# ---------------------------------------------------------------------------
# second order
# ---------------------------------------------------------------------------


def relative_entropy_variance(rho, sigma) -> float:
    """``V = Tr rho (log rho - log sigma)^2 - D^2``."""
    a, b, _ = _pair(rho, sigma)
    _, _, ker = _support_basis(b)
    _check_support(a, ker)
    wa, va = eigh_clipped(a)
    sq = (va * np.sqrt(np.clip(wa, 0.0, None))) @ va.conj().T
    L = log2_psd(a) - log2_psd(b)
    X = L @ sq
    second = float(np.real(np.sum(np.abs(X) ** 2)))
    D = relative_entropy(a, b)
    return max(second - D * D, 0.0) if second - D * D > -1e-9 else second - D * D


def second_order_estimate(rho, sigma, n, eps) -> SecondOrderEstimate:
    """``n D + sqrt(n V) Phi^{-1}(eps)`` for ``D_H^eps(rho^{(x)n} || sigma^{(x)n})``."""
    _check_eps(eps)
    if int(n) < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    n = int(n)
    D = relative_entropy(rho, sigma)
    V = relative_entropy_variance(rho, sigma)
    disp = math.sqrt(n * max(V, 0.0)) * float(ndtri(float(eps)))
    return SecondOrderEstimate(n=n, dominant=n * D, dispersion=disp, V=V)


def inverse_normal_cdf(p) -> float:
    return float(ndtri(float(p)))
