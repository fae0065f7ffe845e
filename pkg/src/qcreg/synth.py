"""Random band-limited Beltrami fields and synthetic registration pairs.

Random numbers come from ``numpy.random.Generator(numpy.random.Philox(seed))``
(counter-based Philox-4x64).  Changing the generator or the order of draws
changes every seeded output and the golden values in the tests.
"""

from dataclasses import dataclass

import numpy as np

from .beltrami import square_to_faces
from .imaging import warp
from .lbs import solve_lbs
from .mesh import build_grid_mesh
from .spectral import idft2, lowpass_mask


@dataclass
class SynthConfig:
    seed: int = 0
    size: int = 64
    max_norm: float = 0.6
    bandwidth: int = 8

    def __post_init__(self):
        if not 0.0 < self.max_norm < 1.0:
            raise ValueError(f"max_norm must lie in (0, 1), got {self.max_norm}")
        if self.size < 2:
            raise ValueError(f"size must be >= 2, got {self.size}")
        if not 1 <= self.bandwidth <= self.size:
            raise ValueError(f"bandwidth must lie in [1, {self.size}], got {self.bandwidth}")


def make_rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def gen_random_mu(cfg):
    """Band-limited complex field rescaled to ``max |mu| == cfg.max_norm``.

    The real and imaginary channels get independent complex Gaussian spectra
    on the low-frequency block (no Hermitian symmetry), each brought to the
    spatial domain with the inverse transform.
    """
    n = cfg.size
    rng = make_rng(cfg.seed)
    mask = lowpass_mask(n, cfg.bandwidth)
    k = int(mask.sum())
    channels = []
    for _ in range(2):
        spec = np.zeros((n, n), dtype=complex)
        spec[mask] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        channels.append(idft2(spec))
    mu = channels[0] + 1j * channels[1]
    peak = np.abs(mu).max()
    if peak == 0.0:
        raise ValueError("degenerate draw: all-zero spectrum")
    return mu * (cfg.max_norm / peak)


def synth_pair(image, cfg, solver=None):
    """Deform ``image`` by the LBS map of a random Beltrami field.

    Returns ``(moving, ground_truth_map, ground_truth_mu)`` where
    ``moving = warp(image, map)``.  Registering ``image`` onto ``moving``
    (``register(image, moving, ...)``) has the ground-truth map as an exact
    zero of the fidelity term.
    """
    image = np.asarray(image, dtype=float)
    if image.shape != (cfg.size, cfg.size):
        raise ValueError(f"image shape {image.shape} does not match size {cfg.size}")
    mesh = build_grid_mesh(cfg.size)
    mu = gen_random_mu(cfg)
    qcmap = solve_lbs(mesh, square_to_faces(mu, mesh), solver)
    return warp(image, qcmap), qcmap, mu


def make_test_card(n, seed=None):
    """Smooth grayscale pattern in ``[0, 1]`` with structure at several scales.

    Deterministic when ``seed`` is None; otherwise a few blob centres are
    jittered with the seeded generator.
    """
    t = np.linspace(0.0, 1.0, n)
    x, y = np.meshgrid(t, t)
    img = 0.5 + 0.18 * np.sin(2 * np.pi * (1.5 * x + 0.5 * y)) * np.cos(2 * np.pi * 1.2 * y)
    centres = [(0.3, 0.3, 0.12, 0.35), (0.7, 0.65, 0.1, -0.3),
               (0.35, 0.75, 0.08, 0.25), (0.72, 0.28, 0.09, -0.2)]
    if seed is not None:
        jitter = make_rng(seed).uniform(-0.08, 0.08, size=(len(centres), 2))
        centres = [(cx + dx, cy + dy, s, a) for (cx, cy, s, a), (dx, dy) in zip(centres, jitter)]
    for cx, cy, s, a in centres:
        img += a * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * s * s))
    return np.clip(img, 0.0, 1.0)
