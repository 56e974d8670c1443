"""Small dense Hermitian helpers with the package-wide numerical conventions.

Conventions
-----------
* Hermitian results are symmetrized as ``(M + M^dagger) / 2``.
* Eigenvalues in ``[-CLIP_TOL, 0)`` are clipped to zero before square roots
  and logarithms.
* The support (rank) cutoff is ``RANK_RTOL * lambda_max``.
"""

from __future__ import annotations

import numpy as np

HERM_TOL = 1e-10
CLIP_TOL = 1e-10
RANK_RTOL = 1e-10
ZERO_BAND = 1e-10


def hermitize(m):
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def is_hermitian(m, tol=1e-9):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * scale)


def eigh_clipped(m):
    """Eigen-decomposition of a PSD matrix with tiny negative eigenvalues clipped.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order, entries in ``[-CLIP_TOL, 0)`` set to 0.
    v : ndarray
        Orthonormal eigenvectors as columns.
    """
    w, v = np.linalg.eigh(hermitize(m))
    w = np.where((w < 0) & (w >= -CLIP_TOL), 0.0, w)
    return w, v


def support_mask(w):
    """Boolean mask of eigenvalues above the relative rank cutoff."""
    w = np.asarray(w, dtype=float)
    if w.size == 0:
        return np.zeros(0, dtype=bool)
    top = float(np.max(w))
    if top <= 0:
        return np.zeros_like(w, dtype=bool)
    return w > RANK_RTOL * top


def psd_power(m, p, *, support_only=True):
    """``m**p`` for PSD ``m``; negative powers act as pseudo-inverse powers."""
    w, v = eigh_clipped(m)
    mask = support_mask(w)
    wp = np.zeros_like(w)
    if p < 0 or support_only:
        wp[mask] = w[mask] ** p
    else:
        wp = np.clip(w, 0.0, None) ** p
    return hermitize((v * wp) @ v.conj().T)


def psd_sqrt(m):
    w, v = eigh_clipped(m)
    w = np.sqrt(np.clip(w, 0.0, None))
    return hermitize((v * w) @ v.conj().T)


def support_projector(m):
    w, v = eigh_clipped(m)
    vs = v[:, support_mask(w)]
    return hermitize(vs @ vs.conj().T)


def kernel_projector(m):
    w, v = eigh_clipped(m)
    vk = v[:, ~support_mask(w)]
    return hermitize(vk @ vk.conj().T)


def log2_psd(m):
    """Base-2 logarithm on the support; zero on the kernel."""
    w, v = eigh_clipped(m)
    mask = support_mask(w)
    lw = np.zeros_like(w)
    lw[mask] = np.log2(w[mask])
    return hermitize((v * lw) @ v.conj().T)


def min_eig(m):
    return float(np.linalg.eigvalsh(hermitize(m))[0])


def max_eig(m):
    return float(np.linalg.eigvalsh(hermitize(m))[-1])


def trace_norm(m):
    return float(np.sum(np.linalg.svd(np.asarray(m), compute_uv=False)))


def distinct_count(values, rel_gap=1e-8):
    """Number of clusters after merging neighbouring sorted values closer than ``rel_gap`` (relative)."""
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        return 0
    count = 1
    for prev, x in zip(vals[:-1], vals[1:]):
        scale = max(abs(prev), abs(x), 1e-300)
        if (x - prev) / scale > rel_gap:
            count += 1
    return count
