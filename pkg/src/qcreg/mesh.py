"""Triangulated regular grid on the unit square.

Vertex ``(i, j)`` (row ``i``, column ``j``) has flat index ``i * n + j`` and
sits at ``(x, y) = (j / (n - 1), i / (n - 1))``.  Every cell is cut along the
diagonal joining its lower-left and upper-right corners.  Faces are numbered
row-major by cell, lower triangle first, so that face ``2 * j`` and
``2 * j + 1`` in row ``i`` of the face layout belong to cell ``(i, j)``.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GridMesh:
    n: int
    vertices: np.ndarray
    faces: np.ndarray
    vertex_faces: tuple = field(repr=False)
    vertex_neighbors: tuple = field(repr=False)
    # (F, 3, 2): gradient of each corner's hat function on the face,
    # i.e. the (A, B) coefficients of the face-wise derivative formula.
    grads: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)

    @property
    def n_vertices(self):
        return self.n * self.n

    @property
    def n_faces(self):
        return 2 * (self.n - 1) ** 2

    @property
    def face_shape(self):
        """Shape of a face-based field, ``(n - 1, 2 (n - 1))``."""
        return (self.n - 1, 2 * (self.n - 1))

    def boundary_masks(self):
        """Vertices whose u (left/right edges) and v (bottom/top edges) are fixed."""
        idx = np.arange(self.n_vertices)
        i, j = np.divmod(idx, self.n)
        u_mask = (j == 0) | (j == self.n - 1)
        v_mask = (i == 0) | (i == self.n - 1)
        return u_mask, v_mask


def _face_gradients(vertices, faces):
    p = vertices[faces]  # (F, 3, 2)
    g, h = p[..., 0], p[..., 1]
    gi, gj, gk = g[:, 0], g[:, 1], g[:, 2]
    hi, hj, hk = h[:, 0], h[:, 1], h[:, 2]
    twice_area = (gj - gi) * (hk - hi) - (gk - gi) * (hj - hi)
    A = np.stack([hj - hk, hk - hi, hi - hj], axis=1) / twice_area[:, None]
    B = np.stack([gk - gj, gi - gk, gj - gi], axis=1) / twice_area[:, None]
    return np.stack([A, B], axis=2), 0.5 * twice_area


def build_grid_mesh(n):
    """Build the ``n x n`` vertex grid with ``2 (n - 1)^2`` CCW triangles."""
    if int(n) != n or n < 2:
        raise ValueError(f"grid side must be an integer >= 2, got {n!r}")
    n = int(n)
    h = 1.0 / (n - 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    vertices = np.column_stack([jj.ravel() * h, ii.ravel() * h])

    ci, cj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    v00 = (ci * n + cj).ravel()
    v01 = v00 + 1
    v10 = v00 + n
    v11 = v10 + 1
    lower = np.column_stack([v00, v01, v11])
    upper = np.column_stack([v00, v11, v10])
    faces = np.stack([lower, upper], axis=1).reshape(-1, 3)

    vf = [[] for _ in range(n * n)]
    nb = [set() for _ in range(n * n)]
    for f, tri in enumerate(faces.tolist()):
        for a in tri:
            vf[a].append(f)
            nb[a].update(b for b in tri if b != a)
    vertex_faces = tuple(np.array(x, dtype=np.int64) for x in vf)
    vertex_neighbors = tuple(np.array(sorted(x), dtype=np.int64) for x in nb)

    grads, areas = _face_gradients(vertices, faces)
    for arr in (vertices, faces, grads, areas):
        arr.setflags(write=False)
    return GridMesh(n, vertices, faces, vertex_faces, vertex_neighbors, grads, areas)


def face_area(mesh, face):
    """Signed (positive for CCW) area of one face."""
    if not 0 <= face < mesh.n_faces:
        raise IndexError(f"face index {face} out of range [0, {mesh.n_faces})")
    return float(mesh.areas[face])


@dataclass
class QCMap:
    """Vertex-based map ``f = u + i v`` on an ``n x n`` grid.

    ``positions`` has shape ``(n * n, 2)`` in row-major vertex order.
    """

    n: int
    positions: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.shape != (self.n * self.n, 2):
            raise ValueError(
                f"expected positions of shape {(self.n * self.n, 2)}, "
                f"got {self.positions.shape}")

    @property
    def u(self):
        return self.positions[:, 0].reshape(self.n, self.n)

    @property
    def v(self):
        return self.positions[:, 1].reshape(self.n, self.n)

    @classmethod
    def identity(cls, n):
        t = np.linspace(0.0, 1.0, n)
        x, y = np.meshgrid(t, t)
        return cls.from_grids(x, y)

    @classmethod
    def from_grids(cls, u, v):
        u = np.asarray(u, dtype=float)
        return cls(u.shape[0], np.column_stack([u.ravel(), np.asarray(v, float).ravel()]))


def as_positions(mesh, qcmap):
    pos = qcmap.positions if isinstance(qcmap, QCMap) else np.asarray(qcmap, float)
    if pos.shape != (mesh.n_vertices, 2):
        raise ValueError(
            f"map has shape {pos.shape}, mesh needs {(mesh.n_vertices, 2)}")
    return pos
