"""Seeded instance generators shared by the CLI, the demos and the tests."""

from __future__ import annotations

import numpy as np

from .convexsplit import ConvexSplitInstance
from .qstate import (
    DensityOperator,
    Ket,
    LinearMapOnRegisters,
    RegisterSystem,
    apply_on,
    ghz,
    partial_trace,
    random_state,
    tensor,
)

PROTOCOL_ROLES = ("R", "A", "M", "B", "N", "C")
KINDS = ("ghz", "product", "near_product", "haar", "decoder_micro", "convex_split", "rmn")


def ghz_rmn(dim=2) -> Ket:
    """GHZ ket on ``R, M, N``."""
    return ghz(("R", "M", "N"), dim)


def random_rmn(seed, dim=2) -> Ket:
    """Haar-random pure ``rho_RMN`` with qubit (or ``dim``) registers."""
    return random_state(RegisterSystem.of(R=dim, M=dim, N=dim), seed)


def protocol_state(seed, kind="near_product", t=0.05, dim=2) -> Ket:
    """Pure state on ``R, A, M, B, N, C``.

    ``kind="product"`` gives a product of Haar kets, ``"near_product"``
    mixes that product with a correlated ket at weight ``t`` and
    ``"haar"`` is fully Haar random.
    """
    system = RegisterSystem(tuple((r, dim) for r in PROTOCOL_ROLES))
    if kind == "haar":
        return random_state(system, seed)
    if kind == "product":
        t = 0.0
    elif kind != "near_product":
        raise ValueError(f"unknown protocol state kind {kind!r}")
    return random_state(system, seed, "near_product", t=t, pure=True)


def decoder_micro(seed, filter_weight=0.03, dummy_weight=0.004):
    """Pure ``psi_RAMBN`` whose M and N are nearly orthogonal to the dummies.

    The M and N legs are filtered towards ``|1>`` while the dummy states sit
    near ``|0>``, so the position tests have large ``D_H`` and a 2x2 grid
    of positions decodes well.

    Returns
    -------
    (Ket, DensityOperator, DensityOperator)
        ``psi``, ``sigma_M``, ``omega_N``.
    """
    sy = RegisterSystem.of(R=2, A=2, M=2, B=2, N=2)
    k = random_state(sy, seed, "haar_pure")
    filt = np.diag([filter_weight, 1.0])
    k = apply_on(k, LinearMapOnRegisters([("M", 2)], [("M", 2)], filt))
    k = apply_on(k, LinearMapOnRegisters([("N", 2)], [("N", 2)], filt)).normalized()
    s = dummy_weight
    sig = DensityOperator(RegisterSystem.of(M=2), np.diag([1 - s, s]).astype(complex))
    om = DensityOperator(RegisterSystem.of(N=2), np.diag([1 - s, s]).astype(complex))
    return k, sig, om


def convex_split_instance(seed, R_A=1, R_B=1, t=0.05, epsilon=0.01, delta=0.05,
                          product=False) -> ConvexSplitInstance:
    """Qubit ``rho_RAB`` with dummies equal to its own A and B marginals.

    ``rho' = rho`` so the closeness term vanishes; ``product=True`` uses
    the product of the marginals, for which the split state is exact.
    """
    sy = RegisterSystem.of(R=2, A=2, B=2)
    rho = random_state(sy, seed, "near_product", t=t)
    if product:
        rho = tensor(*(partial_trace(rho, [n]) for n in ("R", "A", "B")))
    return ConvexSplitInstance(rho, rho, partial_trace(rho, ["A"]), partial_trace(rho, ["B"]),
                               R_A, R_B, delta, epsilon)


def generate(kind: str, seed: int = 0, **kw):
    """Dispatch used by ``oneshot-qsw gen``; returns a Ket or DensityOperator."""
    if kind == "ghz":
        return ghz_rmn(kw.get("dim", 2))
    if kind == "rmn":
        return random_rmn(seed, kw.get("dim", 2))
    if kind in ("product", "near_product", "haar"):
        return protocol_state(seed, kind, t=kw.get("t", 0.05), dim=kw.get("dim", 2))
    if kind == "decoder_micro":
        return decoder_micro(seed)[0]
    if kind == "convex_split":
        return convex_split_instance(seed, t=kw.get("t", 0.05)).rho_RAB
    raise ValueError(f"unknown instance kind {kind!r}; choose from {KINDS}")
