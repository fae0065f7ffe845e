"""Linear Beltrami Solver on the unit-square grid.

The map ``f = u + i v`` solves ``div(A grad u) = div(A grad v) = 0`` with the
face-wise diffusion matrix ``A`` built from the Beltrami coefficient.  The
discrete rows are

    c_i s_i + sum_{v in V_i} c_v s_v = 0,

with ``c_i = sum_T |T| grad_i^T A_T grad_i`` and ``c_v`` summing
``|T| grad_i^T A_T grad_v`` over the (one or two) faces that share edge
``(i, v)``.  The face-area weight is the usual P1 stiffness scaling; on the
uniform grid it is a global constant and leaves the solution unchanged.
The u system fixes ``u`` on the left/right edges, the v system fixes ``v`` on
the bottom/top edges; each leaves the other coordinate free along the
remaining sides.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .beltrami import DEFAULT_EPS, alpha_from_mu
from .mesh import QCMap, as_positions


class AssemblyError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass
class SparseSystem:
    """One coordinate's system ``matrix @ x = rhs``.

    Masked rows are identity rows whose right-hand side is the prescribed
    boundary value; every other row is an interior LBS equation.
    """

    matrix: sp.csr_matrix
    boundary_mask: np.ndarray
    boundary_values: np.ndarray

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def rhs(self):
        return np.where(self.boundary_mask, self.boundary_values, 0.0)


@dataclass
class SolverConfig:
    method: str = "auto"  # "auto", "direct" or "cg"
    tol: float = 1e-10
    maxiter: int | None = None
    direct_max_n: int = 128


def _check_faces(mesh, mu_faces):
    mu_faces = np.asarray(mu_faces)
    if mu_faces.shape != mesh.face_shape:
        raise ValueError(
            f"face field has shape {mu_faces.shape}, mesh needs {mesh.face_shape}")
    return mu_faces


def stiffness_matrix(mesh, alpha):
    """Assemble the LBS operator (no boundary treatment) as CSR."""
    a1, a2, a3 = (np.ravel(x) for x in alpha)
    for name, arr in (("a1", a1), ("a2", a2), ("a3", a3)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise AssemblyError(f"non-finite {name} on face {bad[0]}")
    A = mesh.grads[..., 0]
    B = mesh.grads[..., 1]
    local = (a1[:, None, None] * A[:, :, None] * A[:, None, :]
             + a2[:, None, None] * (A[:, :, None] * B[:, None, :] + B[:, :, None] * A[:, None, :])
             + a3[:, None, None] * B[:, :, None] * B[:, None, :])
    local *= mesh.areas[:, None, None]
    rows = np.repeat(mesh.faces, 3, axis=1).ravel()
    cols = np.tile(mesh.faces, (1, 3)).ravel()
    n2 = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n2, n2)).tocsr()


def _with_boundary(K, mask, values):
    keep = sp.diags((~mask).astype(float))
    C = (keep @ K + sp.diags(mask.astype(float))).tocsr()
    C.eliminate_zeros()
    C.sort_indices()
    return SparseSystem(C, mask, np.where(mask, values, 0.0))


def assemble(mesh, mu_faces, eps=DEFAULT_EPS):
    """Build the u and v systems for a face-based Beltrami field.

    Both share the interior rows; they differ only in which rows are
    boundary-constrained.
    """
    mu_faces = _check_faces(mesh, mu_faces)
    K = stiffness_matrix(mesh, alpha_from_mu(mu_faces.ravel(), eps))
    u_mask, v_mask = mesh.boundary_masks()
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    return _with_boundary(K, u_mask, x), _with_boundary(K, v_mask, y)


class _Reduced:
    """Free-free block of one system with a reusable solver."""

    def __init__(self, system, cfg, n):
        free = ~system.boundary_mask
        self.free = free
        C = system.matrix
        self.K_ff = C[free][:, free].tocsc()
        K_fd = C[free][:, ~free]
        self.rhs = -(K_fd @ system.boundary_values[~free])
        self.cfg = cfg
        method = cfg.method
        if method == "auto":
            method = "direct" if n <= cfg.direct_max_n else "cg"
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown solver method {cfg.method!r}")
        self.method = method
        self._lu = None
        if method == "direct" and self.K_ff.shape[0]:
            # the free block is SPD with a 2-D grid pattern
            self._lu = spla.splu(self.K_ff, permc_spec="MMD_AT_PLUS_A",
                                 diag_pivot_thresh=0.0,
                                 options={"SymmetricMode": True})
        self.maxiter = cfg.maxiter if cfg.maxiter is not None else 10 * n * n

    def solve(self, b):
        if b.size == 0:
            return b.copy()
        if self.method == "direct":
            x = self._lu.solve(b)
            if not np.all(np.isfinite(x)):
                raise ConvergenceError("direct factorization produced non-finite values", np.inf)
            return x
        diag = self.K_ff.diagonal()
        M = sp.diags(1.0 / diag)
        x, info = spla.cg(self.K_ff, b, rtol=0.0, atol=self.cfg.tol,
                          maxiter=self.maxiter, M=M)
        if info != 0:
            res = float(np.linalg.norm(self.K_ff @ x - b))
            raise ConvergenceError(f"CG did not converge in {self.maxiter} iterations", res)
        return x


class LBSSolution:
    """A solved LBS instance kept around for adjoint sensitivities."""

    def __init__(self, mesh, mu_faces, cfg=None, eps=DEFAULT_EPS):
        cfg = cfg or SolverConfig()
        self.mesh = mesh
        self.mu_faces = _check_faces(mesh, mu_faces)
        self.systems = assemble(mesh, self.mu_faces, eps)
        self._reduced = [_Reduced(s, cfg, mesh.n) for s in self.systems]
        pos = np.empty((mesh.n_vertices, 2))
        for c, (sys_, red) in enumerate(zip(self.systems, self._reduced)):
            col = sys_.boundary_values.copy()
            col[red.free] = red.solve(red.rhs)
            pos[:, c] = col
        self.positions = pos

    @property
    def qcmap(self):
        return QCMap(self.mesh.n, self.positions.copy())

    def alpha_sensitivity(self, g_positions):
        """Gradient of a scalar loss w.r.t. the face coefficients (a1, a2, a3).

        ``g_positions`` is ``dL/d positions`` with shape ``(n^2, 2)``.  For
        each coordinate the adjoint ``K_ff lam = g_free`` is solved once; then
        ``dL/dA_T = -grad(lam)_T grad(x)_T^T`` on every face.
        """
        mesh = self.mesh
        out = np.zeros((3, mesh.n_faces))
        A = mesh.grads[..., 0]
        B = mesh.grads[..., 1]
        for c, red in enumerate(self._reduced):
            lam = np.zeros(mesh.n_vertices)
            lam[red.free] = red.solve(g_positions[red.free, c])
            lf = lam[mesh.faces]
            xf = self.positions[mesh.faces, c]
            lx, ly = np.einsum("fk,fk->f", A, lf), np.einsum("fk,fk->f", B, lf)
            ux, uy = np.einsum("fk,fk->f", A, xf), np.einsum("fk,fk->f", B, xf)
            w = mesh.areas
            out[0] -= w * lx * ux
            out[1] -= w * (lx * uy + ly * ux)
            out[2] -= w * ly * uy
        return out


def solve_lbs(mesh, mu_faces, solver=None, eps=DEFAULT_EPS):
    """Reconstruct the quasi-conformal map of a face-based Beltrami field.

    The corners stay fixed, ``u`` is 0/1 on the left/right edges and ``v`` is
    0/1 on the bottom/top edges.  Moduli above ``1 - eps`` are clamped.
    Raises :class:`ConvergenceError` if the iterative solver stalls.
    """
    return LBSSolution(mesh, mu_faces, solver, eps).qcmap


def laplacian_residual(mesh, mu_faces, qcmap, eps=DEFAULT_EPS):
    """``(|C_s s|_1 + |C_t t|_1) / (2 N^2)`` with boundary rows zeroed."""
    pos = as_positions(mesh, qcmap)
    total = 0.0
    for c, system in enumerate(assemble(mesh, mu_faces, eps)):
        r = system.matrix @ pos[:, c]
        r[system.boundary_mask] = 0.0
        total += np.abs(r).sum()
    return total / (2.0 * mesh.n_vertices)
