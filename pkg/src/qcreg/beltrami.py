"""Beltrami coefficients: diffusion coefficients, extraction from maps, layouts.

A Beltrami field is a plain complex ndarray.  Two layouts are used:

* square: ``(N, N)``, one value per vertex of the grid;
* face: ``(N - 1, 2 (N - 1))``, one value per triangle in face-index order
  (column ``2 j`` is the lower triangle of cell ``(i, j)``, ``2 j + 1`` the
  upper one).
"""

from typing import NamedTuple

import numpy as np

from .mesh import as_positions

DEFAULT_EPS = 1e-3


class AlphaTriple(NamedTuple):
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray


def clamp_mu(mu, eps=DEFAULT_EPS):
    """Scale entries with ``|mu| > 1 - eps`` back to modulus ``1 - eps``."""
    mu = np.asarray(mu, dtype=complex)
    r = np.abs(mu)
    limit = 1.0 - eps
    over = r > limit
    if not np.any(over):
        return mu
    out = mu.copy()
    out[over] *= limit / r[over]
    return out


def alpha_from_mu(mu, eps=DEFAULT_EPS, clamp=True):
    """Entries of the symmetric matrix ``A = [[a1, a2], [a2, a3]]``.

    With ``rho = Re mu`` and ``tau = Im mu``::

        a1 = ((rho - 1)^2 + tau^2) / (1 - rho^2 - tau^2)
        a2 = -2 tau / (1 - rho^2 - tau^2)
        a3 = ((rho + 1)^2 + tau^2) / (1 - rho^2 - tau^2)

    ``det A == 1`` for every ``|mu| < 1``.  When ``clamp`` is true, moduli
    above ``1 - eps`` are pulled back (argument kept); otherwise a modulus
    ``>= 1`` raises ``ValueError``.
    """
    mu = np.asarray(mu, dtype=complex)
    if clamp:
        mu = clamp_mu(mu, eps)
    elif np.any(np.abs(mu) >= 1.0):
        raise ValueError("Beltrami coefficient with modulus >= 1")
    rho, tau = mu.real, mu.imag
    denom = 1.0 - rho * rho - tau * tau
    a1 = ((rho - 1.0) ** 2 + tau * tau) / denom
    a2 = -2.0 * tau / denom
    a3 = ((rho + 1.0) ** 2 + tau * tau) / denom
    return AlphaTriple(a1, a2, a3)


def alpha_derivatives(mu):
    """Partial derivatives of (a1, a2, a3) with respect to rho and tau.

    Returns two ``(3, ...)`` arrays ``(d/drho, d/dtau)``.
    """
    rho, tau = mu.real, mu.imag
    d = 1.0 - rho * rho - tau * tau
    d2 = d * d
    p = (rho - 1.0) ** 2 + tau * tau
    q = (rho + 1.0) ** 2 + tau * tau
    drho = np.stack([
        (2.0 * (rho - 1.0) * d + 2.0 * rho * p) / d2,
        -4.0 * rho * tau / d2,
        (2.0 * (rho + 1.0) * d + 2.0 * rho * q) / d2,
    ])
    dtau = np.stack([
        (2.0 * tau * d + 2.0 * tau * p) / d2,
        -2.0 * (d + 2.0 * tau * tau) / d2,
        (2.0 * tau * d + 2.0 * tau * q) / d2,
    ])
    return drho, dtau


def face_derivatives(mesh, positions):
    """Per-face Jacobian entries ``(a, b, c, d)`` of the face-wise linear map.

    ``u|_T = a x + b y + r`` and ``v|_T = c x + d y + s``.
    """
    pos = as_positions(mesh, positions)
    s = pos[mesh.faces, 0]  # (F, 3)
    t = pos[mesh.faces, 1]
    A = mesh.grads[..., 0]
    B = mesh.grads[..., 1]
    a = np.einsum("fk,fk->f", A, s)
    b = np.einsum("fk,fk->f", B, s)
    c = np.einsum("fk,fk->f", A, t)
    d = np.einsum("fk,fk->f", B, t)
    return a, b, c, d


def mu_from_map(mesh, qcmap, return_degenerate=False):
    """Face-wise Beltrami coefficient ``f_zbar / f_z`` of a vertex map.

    Faces where ``f_z`` vanishes (e.g. reflections) get a sentinel value of
    modulus exactly 1 and are listed in the degenerate index array, returned
    as a second value when ``return_degenerate`` is set.  Moduli ``>= 1`` are
    never clamped here.
    """
    a, b, c, d = face_derivatives(mesh, qcmap)
    fz = 0.5 * ((a + d) + 1j * (c - b))
    fzbar = 0.5 * ((a - d) + 1j * (c + b))
    scale = np.maximum(np.abs(fz), np.abs(fzbar))
    degenerate = np.abs(fz) <= 1e-14 * np.where(scale > 0, scale, 1.0)
    mu = np.empty_like(fz)
    ok = ~degenerate
    mu[ok] = fzbar[ok] / fz[ok]
    r = np.abs(fzbar[degenerate])
    mu[degenerate] = np.where(r > 0, fzbar[degenerate] / np.where(r > 0, r, 1.0), 1.0)
    mu = mu.reshape(mesh.face_shape)
    if return_degenerate:
        return mu, np.flatnonzero(degenerate)
    return mu


def _upper_neighbor_counts(m):
    # lower triangles adjacent to the upper triangle of cell (i, j):
    # own cell, cell (i + 1, j) across the top edge, cell (i, j - 1) across
    # the left edge
    count = np.ones((m, m))
    count[:-1, :] += 1
    count[:, 1:] += 1
    return count


def square_to_faces(mu_sqr, mesh=None):
    """Expand an ``N x N`` field to the ``(N - 1) x 2 (N - 1)`` face layout.

    Lower triangles copy ``mu_sqr[:-1, :-1]``.  Each upper triangle is the
    mean of the lower-triangle values of its own cell and of the in-grid cells
    across its top and left edges.
    """
    mu_sqr = np.asarray(mu_sqr)
    if mu_sqr.ndim != 2 or mu_sqr.shape[0] != mu_sqr.shape[1] or mu_sqr.shape[0] < 2:
        raise ValueError(f"expected a square N x N field with N >= 2, got {mu_sqr.shape}")
    if mesh is not None and mesh.n != mu_sqr.shape[0]:
        raise ValueError(f"field side {mu_sqr.shape[0]} does not match mesh side {mesh.n}")
    low = mu_sqr[:-1, :-1]
    m = low.shape[0]
    acc = low.copy()
    acc[:-1, :] += low[1:, :]
    acc[:, 1:] += low[:, :-1]
    up = acc / _upper_neighbor_counts(m)
    out = np.empty((m, 2 * m), dtype=np.result_type(mu_sqr, float))
    out[:, 0::2] = low
    out[:, 1::2] = up
    return out


def square_to_faces_adjoint(g_faces):
    """Transpose of :func:`square_to_faces` (maps face sensitivities to squares)."""
    g_faces = np.asarray(g_faces)
    m = g_faces.shape[0]
    g_low = g_faces[:, 0::2].copy()
    g_up = g_faces[:, 1::2] / _upper_neighbor_counts(m)
    g_low += g_up
    g_low[1:, :] += g_up[:-1, :]
    g_low[:, :-1] += g_up[:, 1:]
    out = np.zeros((m + 1, m + 1), dtype=g_faces.dtype)
    out[:-1, :-1] = g_low
    return out


def faces_to_square(mu_faces):
    """Collapse a face field back to ``N x N`` using the lower triangles.

    The last row and column are replicated from the nearest cell.
    """
    mu_faces = np.asarray(mu_faces)
    m = mu_faces.shape[0]
    if mu_faces.ndim != 2 or mu_faces.shape[1] != 2 * m or m < 1:
        raise ValueError(f"expected an (N-1) x 2(N-1) face field, got {mu_faces.shape}")
    return np.pad(mu_faces[:, 0::2], ((0, 1), (0, 1)), mode="edge")
