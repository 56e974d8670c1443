"""Randomized checks of the standard inequalities the protocol proofs lean on.

Every check draws one seeded instance and returns a *slack*: the amount
by which the inequality holds (``rhs - lhs``) or, for identities, minus
the absolute discrepancy. A check passes when ``slack >= -tol``.

``FACT_CHECKS`` maps a descriptive name to each check; ``run_fact_suite``
runs a batch and summarizes it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoder import hayashi_nagaoka_residual
from .divergences import (
    dmax,
    dmax_to_product,
    info_spectrum,
    optimal_test,
    relative_entropy,
)
from .qstate import (
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    RegisterSystem,
    apply_on,
    fidelity,
    maximally_mixed,
    partial_trace,
    purified_distance,
    random_state,
    random_test,
    random_unitary,
    reorder,
    uhlmann_isometry,
)


def _rng(seed):
    return np.random.default_rng([int(seed), 0x5EED])


def _mixed(rng, system) -> DensityOperator:
    return random_state(system, int(rng.integers(2 ** 31)), "mixed_by_tracing")


def _pure(rng, system) -> Ket:
    return random_state(system, int(rng.integers(2 ** 31)), "haar_pure")


def _dim(rng, lo=2, hi=4) -> int:
    return int(rng.integers(lo, hi + 1))


def _random_channel(rng, d_in, d_out, d_env):
    """Stinespring isometry ``C^{d_in} -> C^{d_out} (x) C^{d_env}``."""
    z = rng.standard_normal((d_out * d_env, d_in)) + 1j * rng.standard_normal((d_out * d_env, d_in))
    q, _ = np.linalg.qr(z)
    return LinearMapOnRegisters([("X", d_in)], [("Y", d_out), ("Env", d_env)], q)


def _through_channel(rho: DensityOperator, iso) -> DensityOperator:
    out = apply_on(rho.renamed({rho.system.names[0]: "X"}), iso)
    return partial_trace(out, ["Y"])


def purified_distance_triangle(seed) -> float:
    """``P(rho, sigma) <= P(rho, tau) + P(tau, sigma)``."""
    rng = _rng(seed)
    sy = RegisterSystem.of(A=_dim(rng))
    rho, sigma, tau = (_mixed(rng, sy) for _ in range(3))
    return purified_distance(rho, tau) + purified_distance(tau, sigma) - purified_distance(rho, sigma)


def monotonicity(seed) -> float:
    """``D_max``, ``F`` and ``D_H`` are monotone under a random channel and under partial trace."""
    rng = _rng(seed)
    da, db = _dim(rng, 2, 3), _dim(rng, 2, 3)
    sy = RegisterSystem.of(A=da, B=db)
    rho, sigma = _mixed(rng, sy), _mixed(rng, sy)
    eps = float(rng.uniform(0.05, 0.95))
    slacks = []
    pairs = [(partial_trace(rho, ["A"]), partial_trace(sigma, ["A"]))]
    d_out = _dim(rng, 2, 3)
    iso = _random_channel(rng, da * db, d_out, -(-da * db // d_out) + int(rng.integers(0, 2)))
    flat = RegisterSystem.of(X=da * db)
    r_flat = DensityOperator(flat, rho.matrix, check=False)
    s_flat = DensityOperator(flat, sigma.matrix, check=False)
    pairs.append((_through_channel(r_flat, iso), _through_channel(s_flat, iso)))
    d_before = dmax(rho, sigma).value
    f_before = fidelity(rho, sigma)
    h_before = optimal_test(rho, sigma, eps).value
    for r2, s2 in pairs:
        slacks.append(d_before - dmax(r2, s2).value)
        slacks.append(fidelity(r2, s2) - f_before)
        slacks.append(h_before - optimal_test(r2, s2, eps).value)
    return min(slacks)


def uhlmann_overlap(seed) -> float:
    """The Uhlmann isometry reaches ``F(rho_A, sigma_A)`` exactly (identity)."""
    rng = _rng(seed)
    da, db = _dim(rng), _dim(rng)
    dc = _dim(rng, 2, db)  # the isometry C -> B needs room for sigma_C's support
    r = _pure(rng, RegisterSystem.of(A=da, B=db))
    s = _pure(rng, RegisterSystem.of(A=da, C=dc))
    v = uhlmann_isometry(r, s)
    theta = reorder(apply_on(s, v), r.system.names)
    overlap = abs(np.vdot(r.vector, theta.vector))
    return -abs(overlap - fidelity(partial_trace(r, ["A"]), partial_trace(s, ["A"])))


def fidelity_relative_entropy(seed) -> float:
    """``F(rho, sigma) >= 2^{-D(rho||sigma)/2}`` (implies Pinsker)."""
    rng = _rng(seed)
    sy = RegisterSystem.of(A=_dim(rng))
    rho, sigma = _mixed(rng, sy), _mixed(rng, sy)
    return fidelity(rho, sigma) - 2.0 ** (-0.5 * relative_entropy(rho, sigma))


def dmax_against_maximally_mixed(seed) -> float:
    """``D_max(rho_AB || rho_A (x) I/|B|) <= 2 log|B|``; pure inputs sit at the edge."""
    rng = _rng(seed)
    da, db = _dim(rng), _dim(rng)
    sy = RegisterSystem.of(A=da, B=db)
    rho = _pure(rng, sy).dm() if rng.random() < 0.5 else _mixed(rng, sy)
    val = dmax_to_product(rho, [partial_trace(rho, ["A"]), maximally_mixed(RegisterSystem.of(B=db))]).value
    return 2.0 * math.log2(db) - val


def gentle_measurement(seed) -> float:
    """``F(rho, A rho A / Tr(A^2 rho)) >= sqrt(Tr(A^2 rho))`` for ``0 <= A <= I``."""
    rng = _rng(seed)
    sy = RegisterSystem.of(A=_dim(rng))
    rho = _mixed(rng, sy)
    a = random_test(sy, rng).matrix
    post = a @ rho.matrix @ a
    q = float(np.real(np.trace(post)))
    after = DensityOperator(sy, post / q, check=False)
    return fidelity(rho, after) - math.sqrt(q)


def close_states_measurement(seed) -> float:
    """``P(rho, sigma) <= eps`` and ``Tr(Pi rho) >= 1 - d^2`` give ``Tr(Pi sigma) >= 1 - (2 eps + d)^2``.

    The instance is drawn so that ``2 eps + d < 1`` always holds.
    """
    rng = _rng(seed)
    d = _dim(rng)
    sy = RegisterSystem.of(A=d)
    u = random_unitary(d, rng)
    s = float(rng.uniform(0.0, 0.08))
    t = float(rng.uniform(0.0, 0.03))
    top = np.outer(u[:, 0], u[:, 0].conj())
    rho = (1 - s) * top + s * _mixed(rng, sy).matrix
    sigma = (1 - t) * rho + t * _mixed(rng, sy).matrix
    rho = DensityOperator(sy, rho, check=False)
    sigma = DensityOperator(sy, sigma, check=False)
    # projector on the dominant direction plus a random partial test elsewhere
    pi = top + (np.eye(d) - top) @ random_test(sy, rng).matrix @ (np.eye(d) - top)
    eps = purified_distance(rho, sigma)
    gap = 1.0 - float(np.real(np.trace(pi @ rho.matrix)))
    dd = math.sqrt(max(gap, 0.0))
    if not 2 * eps + dd < 1:  # pragma: no cover - excluded by the ranges above
        raise AssertionError("close-states instance outside its premise")
    return float(np.real(np.trace(pi @ sigma.matrix))) - (1.0 - (2 * eps + dd) ** 2)


def hayashi_nagaoka(seed) -> float:
    """``I - (S+T)^{-1/2} S (S+T)^{-1/2} <= 2(I - S) + 4T``."""
    rng = _rng(seed)
    d = _dim(rng, 2, 5)
    sy = RegisterSystem.of(A=d)
    s = random_test(sy, rng).matrix
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rank = int(rng.integers(1, d + 1))
    g = g[:, :rank]
    t = float(rng.uniform(0.0, 2.0)) * (g @ g.conj().T) / d
    return hayashi_nagaoka_residual(s, t)


def mixture_identity(seed) -> float:
    """``D(mu || theta) = sum_i p_i (D(mu_i || theta) - D(mu_i || mu))`` (identity)."""
    rng = _rng(seed)
    sy = RegisterSystem.of(A=_dim(rng))
    k = int(rng.integers(2, 5))
    parts = [_mixed(rng, sy) for _ in range(k)]
    p = rng.dirichlet(np.ones(k))
    theta = _mixed(rng, sy)
    mu = DensityOperator(sy, sum(pi * m.matrix for pi, m in zip(p, parts)), check=False)
    rhs = sum(pi * (relative_entropy(m, theta) - relative_entropy(m, mu)) for pi, m in zip(p, parts))
    return -abs(relative_entropy(mu, theta) - rhs)


def spectrum_variants_ordered(seed) -> float:
    """``D_s^eps(rho||sigma) <= D~_s^{1-eps}(rho||sigma)``."""
    rng = _rng(seed)
    sy = RegisterSystem.of(A=_dim(rng))
    rho, sigma = _mixed(rng, sy), _mixed(rng, sy)
    eps = float(rng.uniform(0.05, 0.95))
    plus = info_spectrum(rho, sigma, eps, "plus").value
    minus = info_spectrum(rho, sigma, 1.0 - eps, "minus").value
    return minus - plus


def projected_spectrum(seed) -> float:
    """``D_s`` is unchanged by projecting ``sigma`` onto a commuting projector that holds ``rho`` (identity)."""
    rng = _rng(seed)
    d = _dim(rng, 3, 5)
    k = int(rng.integers(1, d))
    sy = RegisterSystem.of(A=d)
    u = random_unitary(d, rng)
    sig = (u * rng.dirichlet(np.ones(d))) @ u.conj().T
    sub = _mixed(rng, RegisterSystem.of(A=k)).matrix
    rho = u[:, :k] @ sub @ u[:, :k].conj().T
    pi = u[:, :k] @ u[:, :k].conj().T
    eps = float(rng.uniform(0.05, 0.95))
    a = info_spectrum(DensityOperator(sy, rho, check=False), DensityOperator(sy, sig, check=False), eps).value
    proj = DensityOperator(sy, pi @ sig @ pi, check=False)
    b = info_spectrum(DensityOperator(sy, rho, check=False), proj, eps).value
    return -abs(a - b)


def pure_state_spectrum(seed) -> float:
    """``D_s^eps(psi || I/d) = D_max(psi || I/d) = log d`` for pure ``psi`` (identity)."""
    rng = _rng(seed)
    d = _dim(rng, 2, 6)
    sy = RegisterSystem.of(A=d)
    psi = _pure(rng, sy).dm()
    mu = maximally_mixed(sy)
    eps = float(rng.uniform(0.05, 0.95))
    a = info_spectrum(psi, mu, eps).value
    b = dmax(psi, mu).value
    return -max(abs(a - b), abs(b - math.log2(d)))


FACT_CHECKS = {
    "purified distance triangle": purified_distance_triangle,
    "monotonicity": monotonicity,
    "uhlmann overlap": uhlmann_overlap,
    "fidelity vs relative entropy": fidelity_relative_entropy,
    "dmax against maximally mixed": dmax_against_maximally_mixed,
    "gentle measurement": gentle_measurement,
    "close states measurement": close_states_measurement,
    "hayashi nagaoka": hayashi_nagaoka,
    "mixture identity": mixture_identity,
    "spectrum variants ordered": spectrum_variants_ordered,
    "projected spectrum": projected_spectrum,
    "pure state spectrum": pure_state_spectrum,
}


@dataclass
class FactSummary:
    name: str
    instances: int
    violations: int
    worst_slack: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self):
        return {"name": self.name, "instances": self.instances, "violations": self.violations,
                "worst_slack": self.worst_slack, "passed": self.passed}


def run_fact(name: str, seeds, tol=1e-7) -> FactSummary:
    check = FACT_CHECKS[name]
    slacks = [float(check(s)) for s in seeds]
    bad = sum(1 for s in slacks if not s >= -tol)
    return FactSummary(name, len(slacks), bad, min(slacks))


def run_fact_suite(count=100, tol=1e-7, names=None, seed0=0):
    """Run each named check on ``count`` seeds ``seed0, seed0+1, ...``."""
    names = list(FACT_CHECKS) if names is None else list(names)
    return [run_fact(n, range(seed0, seed0 + count), tol) for n in names]
