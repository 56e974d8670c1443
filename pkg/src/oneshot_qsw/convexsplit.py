"""Tripartite convex split.

A correlated state ``rho_RAB`` is hidden at a uniformly random position
``(i, j)`` among ``2^R_A`` copies of ``sigma_A`` and ``2^R_B`` copies of
``omega_B``. When the rates exceed the relevant max-divergences the mixture
is close to ``rho_R (x) sigma^{(x)} (x) omega^{(x)}``. This module builds the
mixture densely for tiny instances and evaluates the analytic bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .divergences import dmax, dmax_to_product, relative_entropy, relative_entropy_to_product
from .errors import CapacityError, ContractViolation, DomainError, ShapeError
from .qstate import (
    DensityOperator,
    RegisterSystem,
    fidelity_pd,
    partial_trace,
    reorder,
    tensor,
)

DENSE_CAP = 2 ** 13


def copy_name(name: str, index: int) -> str:
    """Register name of the ``index``-th copy (1-based)."""
    return f"{name}_{index}"


@dataclass
class ConvexSplitInstance:
    """Inputs of the tripartite convex split.

    The registers of ``sigma_A`` and ``omega_B`` name the A and B parts of
    ``rho_RAB``; every other register of ``rho_RAB`` belongs to R.
    """

    rho_RAB: DensityOperator
    rho_prime_RAB: DensityOperator
    sigma_A: DensityOperator
    omega_B: DensityOperator
    R_A: int
    R_B: int
    delta: float
    epsilon: float

    def __post_init__(self):
        self.R_A = int(self.R_A)
        self.R_B = int(self.R_B)
        if self.R_A < 0 or self.R_B < 0:
            raise ShapeError("copy exponents must be non-negative")
        if not 0.0 < float(self.delta) < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 <= float(self.epsilon) < 1.0:
            raise DomainError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        names = set(self.rho_RAB.system.names)
        if set(self.rho_prime_RAB.system.names) != names:
            raise ShapeError("rho and rho' must live on the same registers")
        for part in (self.sigma_A, self.omega_B):
            for n in part.system.names:
                if n not in names:
                    raise ShapeError(f"register {n!r} of a dummy state is not in rho")
                if part.system.dim_of(n) != self.rho_RAB.system.dim_of(n):
                    raise ShapeError(f"register {n!r} dimension mismatch")
        if set(self.a_names) & set(self.b_names):
            raise ShapeError("A and B registers overlap")
        self.rho_prime_RAB = reorder(self.rho_prime_RAB, self.rho_RAB.system.names)

    @property
    def a_names(self):
        return list(self.sigma_A.system.names)

    @property
    def b_names(self):
        return list(self.omega_B.system.names)

    @property
    def r_names(self):
        ab = set(self.a_names) | set(self.b_names)
        return [n for n in self.rho_RAB.system.names if n not in ab]

    @property
    def n_a(self) -> int:
        return 2 ** self.R_A

    @property
    def n_b(self) -> int:
        return 2 ** self.R_B

    def distance_to_prime(self) -> float:
        return fidelity_pd(self.rho_RAB, self.rho_prime_RAB)[1]

    def dense_dim(self) -> int:
        s = self.rho_RAB.system
        return (
            s.sub(self.r_names).dim
            * self.sigma_A.system.dim ** self.n_a
            * self.omega_B.system.dim ** self.n_b
        )

    def copy_order(self):
        """Register order of the split state: R, then A copies, then B copies."""
        order = list(self.r_names)
        for i in range(1, self.n_a + 1):
            order += [copy_name(n, i) for n in self.a_names]
        for j in range(1, self.n_b + 1):
            order += [copy_name(n, j) for n in self.b_names]
        return order


@dataclass
class ConvexSplitReport:
    k1: float
    k2: float
    k3: float
    delta_check: bool
    dmax_R: float
    delta_eff: float
    certified_P: float
    relent_bound: float
    relent_bound_exact_coeffs: float
    pinsker_P: float
    conditions: dict = field(default_factory=dict)
    exact_P: Optional[float] = None
    exact_D: Optional[float] = None
    exact_D_prime: Optional[float] = None
    within_bound: Optional[bool] = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items()}


def _check_cap(inst: ConvexSplitInstance, cap=DENSE_CAP):
    d = inst.dense_dim()
    if d > cap:
        raise CapacityError(f"convex-split state would have dimension {d} > cap {cap}")


def _rename_copy(state, names, index):
    return state.renamed({n: copy_name(n, index) for n in names})


def _product_factors(inst: ConvexSplitInstance):
    parts = [partial_trace(inst.rho_RAB, inst.r_names)] if inst.r_names else []
    parts += [_rename_copy(inst.sigma_A, inst.a_names, i) for i in range(1, inst.n_a + 1)]
    parts += [_rename_copy(inst.omega_B, inst.b_names, j) for j in range(1, inst.n_b + 1)]
    return parts


def _product_state(inst: ConvexSplitInstance) -> DensityOperator:
    return reorder(tensor(*_product_factors(inst)), inst.copy_order())


def product_state(inst: ConvexSplitInstance) -> DensityOperator:
    """``rho_R (x) sigma^{(x) 2^R_A} (x) omega^{(x) 2^R_B}`` in split order."""
    _check_cap(inst)
    return _product_state(inst)


def position_term(inst: ConvexSplitInstance, i: int, j: int, which="rho") -> DensityOperator:
    """``rho_{R A_i B_j}`` with dummies elsewhere (1-based positions)."""
    base = inst.rho_RAB if which == "rho" else inst.rho_prime_RAB
    ren = {n: copy_name(n, i) for n in inst.a_names}
    ren.update({n: copy_name(n, j) for n in inst.b_names})
    parts = [base.renamed(ren)]
    parts += [_rename_copy(inst.sigma_A, inst.a_names, a) for a in range(1, inst.n_a + 1) if a != i]
    parts += [_rename_copy(inst.omega_B, inst.b_names, b) for b in range(1, inst.n_b + 1) if b != j]
    return reorder(tensor(*parts), inst.copy_order())


def build_convex_split_state(inst: ConvexSplitInstance, which="rho") -> DensityOperator:
    """Uniform mixture over positions of :func:`position_term`.

    Parameters
    ----------
    which : {"rho", "rho_prime"}
        Correlated state placed at the hidden position.
    """
    _check_cap(inst)
    acc = None
    for i in range(1, inst.n_a + 1):
        for j in range(1, inst.n_b + 1):
            m = position_term(inst, i, j, which).matrix
            acc = np.array(m) if acc is None else acc + m
    acc /= inst.n_a * inst.n_b
    order = inst.copy_order()
    return DensityOperator(_product_state_system(inst, order), acc, check=False)


def _product_state_system(inst, order):
    dims = {}
    s = inst.rho_RAB.system
    for n in inst.r_names:
        dims[n] = s.dim_of(n)
    for i in range(1, inst.n_a + 1):
        for n in inst.a_names:
            dims[copy_name(n, i)] = s.dim_of(n)
    for j in range(1, inst.n_b + 1):
        for n in inst.b_names:
            dims[copy_name(n, j)] = s.dim_of(n)
    return RegisterSystem(tuple((n, dims[n]) for n in order))


def pair_coefficients(R_A: int, R_B: int):
    """Exact weights of the four terms of a single-position marginal.

    Returns ``(c_AB, c_A, c_B, c_0)`` as Fractions: the weights of the fully
    correlated term, the A-correlated term, the B-correlated term and the
    product term.
    """
    x = Fraction(1, 2 ** int(R_A))
    y = Fraction(1, 2 ** int(R_B))
    return x * y, x * (1 - y), y * (1 - x), (1 - x) * (1 - y)


def pair_marginal(inst: ConvexSplitInstance, which="rho_prime") -> DensityOperator:
    """Marginal of the split state on ``R, A_i, B_j`` (any fixed position pair).

    The result lives on the original ``R, A, B`` registers.
    """
    base = inst.rho_prime_RAB if which == "rho_prime" else inst.rho_RAB
    names = list(base.system.names)
    r, a, b = inst.r_names, inst.a_names, inst.b_names
    c_ab, c_a, c_b, c_0 = (float(c) for c in pair_coefficients(inst.R_A, inst.R_B))
    rho_ra = partial_trace(base, r + a)
    rho_rb = partial_trace(base, r + b)
    rho_r = partial_trace(base, r)
    t_a = reorder(tensor(rho_ra, inst.omega_B), names).matrix
    t_b = reorder(tensor(rho_rb, inst.sigma_A), names).matrix
    t_0 = reorder(tensor(rho_r, inst.sigma_A, inst.omega_B), names).matrix
    m = c_ab * base.matrix + c_a * t_a + c_b * t_b + c_0 * t_0
    return DensityOperator(base.system, m, check=False)


def _reference_factors(inst: ConvexSplitInstance, parts):
    return [partial_trace(inst.rho_RAB, inst.r_names), *parts]


def certified_bound(inst: ConvexSplitInstance) -> ConvexSplitReport:
    """Analytic closeness bound without building the split state.

    ``k1 = D_max(rho'_RAB || rho_R sigma omega)``, ``k2 = D_max(rho'_RA || rho_R sigma)``,
    ``k3 = D_max(rho'_RB || rho_R omega)``. ``delta_eff`` is the smallest
    ``delta`` for which all rate conditions and ``rho'_R <= 2^delta rho_R``
    hold, and ``certified_P = epsilon + sqrt(4 delta_eff)``.
    """
    r, a, b = inst.r_names, inst.a_names, inst.b_names
    rp = inst.rho_prime_RAB
    k1 = dmax_to_product(rp, _reference_factors(inst, [inst.sigma_A, inst.omega_B])).value
    rp_ra = partial_trace(rp, r + a)
    k2 = dmax_to_product(rp_ra, _reference_factors(inst, [inst.sigma_A])).value
    rp_rb = partial_trace(rp, r + b)
    k3 = dmax_to_product(rp_rb, _reference_factors(inst, [inst.omega_B])).value
    if r:
        d_R = dmax(partial_trace(rp, r), partial_trace(inst.rho_RAB, r)).value
    else:
        d_R = 0.0
    d_R = max(d_R, 0.0)
    delta = float(inst.delta)
    delta_check = d_R <= delta + 1e-12
    RA, RB = inst.R_A, inst.R_B
    # a dim-1 dummy register makes its correlated term a product term
    trivial_a = inst.sigma_A.system.dim == 1
    trivial_b = inst.omega_B.system.dim == 1
    excess = [2.0 ** (k1 - RA - RB)]
    if not trivial_a:
        excess.append(2.0 ** (k2 - RA))
    if not trivial_b:
        excess.append(2.0 ** (k3 - RB))
    delta_eff = max(excess + [d_R])
    d_used = delta if delta_check else d_R
    relent = math.log2(2.0 ** d_used + sum(excess))
    c_ab, c_a, c_b, c_0 = (float(c) for c in pair_coefficients(RA, RB))
    relent_tight = math.log2(c_ab * 2.0 ** k1 + c_a * 2.0 ** k2 + c_b * 2.0 ** k3 + c_0 * 2.0 ** d_R)
    eps = float(inst.epsilon)
    certified = eps + math.sqrt(4.0 * delta_eff)
    pinsker = eps + math.sqrt(max(0.0, 1.0 - 2.0 ** (-relent_tight)))
    log_inv = math.log2(1.0 / delta)
    conditions = {
        "R_A >= k2 + log 1/delta": trivial_a or RA >= k2 + log_inv - 1e-12,
        "R_B >= k3 + log 1/delta": trivial_b or RB >= k3 + log_inv - 1e-12,
        "R_A + R_B >= k1 + log 1/delta": RA + RB >= k1 + log_inv - 1e-12,
        "rho'_R <= 2^delta rho_R": delta_check,
        "P(rho', rho) <= epsilon": inst.distance_to_prime() <= eps + 1e-12,
    }
    return ConvexSplitReport(
        k1=k1,
        k2=k2,
        k3=k3,
        delta_check=delta_check,
        dmax_R=d_R,
        delta_eff=delta_eff,
        certified_P=certified,
        relent_bound=relent,
        relent_bound_exact_coeffs=relent_tight,
        pinsker_P=pinsker,
        conditions=conditions,
    )


def verify_lemma(inst: ConvexSplitInstance, tol=1e-7) -> ConvexSplitReport:
    """Dense check of the convex-split closeness on a tiny instance.

    Fills ``exact_P = P(tau, product)`` (tau built from rho),
    ``exact_D = D(tau || product)`` and ``exact_D_prime`` for the state
    built from rho'. ``within_bound`` records
    ``exact_P <= epsilon + 2 sqrt(delta_eff) + tol`` and
    ``exact_D_prime <= relent_bound + tol``.
    """
    rep = certified_bound(inst)
    _check_cap(inst)
    prod = _product_state(inst)
    tau = build_convex_split_state(inst, "rho")
    rep.exact_P = fidelity_pd(tau, prod)[1]
    factors = _product_factors(inst)
    rep.exact_D = relative_entropy_to_product(tau, factors)
    if inst.distance_to_prime() == 0.0:
        rep.exact_D_prime = rep.exact_D
    else:
        tau_p = build_convex_split_state(inst, "rho_prime")
        rep.exact_D_prime = relative_entropy_to_product(tau_p, factors)
    rep.within_bound = bool(
        rep.exact_P <= inst.epsilon + 2.0 * math.sqrt(rep.delta_eff) + tol
        and rep.exact_D_prime <= rep.relent_bound + tol
    )
    return rep


def mixture_decomposition(inst: ConvexSplitInstance, which="rho_prime"):
    """Both sides of ``D(mu || theta) = sum_i p_i (D(mu_i || theta) - D(mu_i || mu))``
    for the split mixture ``mu`` and the product ``theta``.
    """
    _check_cap(inst)
    prod = _product_state(inst)
    mix = build_convex_split_state(inst, which)
    lhs = relative_entropy(mix, prod)
    rhs = 0.0
    w = 1.0 / (inst.n_a * inst.n_b)
    for i in range(1, inst.n_a + 1):
        for j in range(1, inst.n_b + 1):
            term = position_term(inst, i, j, which)
            rhs += w * (relative_entropy(term, prod) - relative_entropy(term, mix))
    return lhs, rhs
