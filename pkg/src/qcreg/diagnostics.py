"""Fold detection for face-wise linear maps.

A face is folded when its Jacobian determinant is ``<= 0``.  ``n_folded``
counts those faces and ``s_folded`` sums their absolute determinants.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .beltrami import face_derivatives

DEFAULT_BUCKETS = 100
DEFAULT_TAIL_CUT = 500000.0


@dataclass
class DiagnosticsReport:
    n_folded: int
    s_folded: float
    min_det: float
    histogram: np.ndarray
    bucket_edges: np.ndarray
    tail_count: int
    per_face_det: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "n_folded": int(self.n_folded),
            "s_folded": float(self.s_folded),
            "min_det": float(self.min_det),
            "histogram": [int(c) for c in self.histogram],
            "bucket_edges": [float(e) for e in self.bucket_edges],
            "tail_count": int(self.tail_count),
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def jacobian_per_face(mesh, qcmap):
    a, b, c, d = face_derivatives(mesh, qcmap)
    return a * d - b * c


def fold_report(mesh, qcmap, histogram_buckets=DEFAULT_BUCKETS,
                tail_cut=DEFAULT_TAIL_CUT, keep_per_face=False):
    """Count folded faces and histogram their ``|det J|``.

    Folded faces with ``|det J| > tail_cut`` are counted in ``tail_count``
    and left out of the buckets.
    """
    det = jacobian_per_face(mesh, qcmap)
    folded = det <= 0.0
    mags = np.abs(det[folded])
    in_range = mags <= tail_cut
    counts, edges = np.histogram(mags[in_range], bins=histogram_buckets,
                                 range=(0.0, tail_cut))
    return DiagnosticsReport(
        n_folded=int(folded.sum()),
        s_folded=float(mags.sum()),
        min_det=float(det.min()),
        histogram=counts,
        bucket_edges=edges,
        tail_count=int((~in_range).sum()),
        per_face_det=det if keep_per_face else None,
    )


def jacobian_beltrami_check(mesh, qcmap, return_excluded=False):
    """Largest relative gap in ``det J = |f_z|^2 (1 - |mu|^2)`` over faces.

    Faces with ``f_z == 0`` are skipped and reported when ``return_excluded``
    is set.
    """
    a, b, c, d = face_derivatives(mesh, qcmap)
    det = a * d - b * c
    fz = 0.5 * ((a + d) + 1j * (c - b))
    fzbar = 0.5 * ((a - d) + 1j * (c + b))
    ok = np.abs(fz) > 0.0
    mu = fzbar[ok] / fz[ok]
    pred = np.abs(fz[ok]) ** 2 * (1.0 - np.abs(mu) ** 2)
    err = np.abs(det[ok] - pred) / np.maximum(np.abs(det[ok]), 1e-12)
    worst = float(err.max()) if err.size else 0.0
    if return_excluded:
        return worst, np.flatnonzero(~ok)
    return worst
