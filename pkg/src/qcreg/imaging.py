"""Grayscale images: map-driven warping, registration loss terms, PGM I/O.

Images are float arrays in ``[0, 1]``.  Pixel ``(i, j)`` is attached to mesh
vertex ``(i, j)``, so a map position ``(u, v)`` is sampled at pixel
coordinates ``(row, col) = (v (n - 1), u (n - 1))``.
"""

import re

import numpy as np

_SNAP = 1e-10


def _pixel_coords(qcmap, shape):
    n = qcmap.n
    if shape != (n, n):
        raise ValueError(f"image shape {shape} does not match map grid {n} x {n}")
    rows = qcmap.positions[:, 1] * (n - 1)
    cols = qcmap.positions[:, 0] * (n - 1)
    return rows, cols


def _axis_weights(p, size):
    """Cell index, fraction and d(frac)/dp for border-clamped sampling."""
    # u * (n - 1) for u = j / (n - 1) is not always exactly j in floating point
    r = np.rint(p)
    p = np.where(np.abs(p - r) < _SNAP, r, p)
    inside = (p >= 0.0) & (p <= size - 1)
    pc = np.clip(p, 0.0, size - 1)
    i0 = np.clip(np.floor(pc).astype(np.int64), 0, max(size - 2, 0))
    frac = pc - i0
    return i0, frac, inside.astype(float)


def bilinear_sample(image, rows, cols, with_grad=False):
    """Bilinear, border-clamped samples of ``image`` at fractional pixels.

    With ``with_grad`` also returns the partial derivatives with respect to
    ``rows`` and ``cols`` (right-continuous at lattice lines, zero outside the
    image).
    """
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    r0, fr, dr = _axis_weights(np.asarray(rows, float), h)
    c0, fc, dc = _axis_weights(np.asarray(cols, float), w)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    i00 = image[r0, c0]
    i01 = image[r0, c1]
    i10 = image[r1, c0]
    i11 = image[r1, c1]
    top = i00 + fc * (i01 - i00)
    bot = i10 + fc * (i11 - i10)
    val = top + fr * (bot - top)
    if not with_grad:
        return val
    d_row = (bot - top) * dr
    d_col = ((1.0 - fr) * (i01 - i00) + fr * (i11 - i10)) * dc
    return val, d_row, d_col


def warp(image, qcmap):
    """Pull back ``image`` through the map: ``out[i, j] = image(f(v_ij))``."""
    image = np.asarray(image, dtype=float)
    rows, cols = _pixel_coords(qcmap, image.shape)
    return bilinear_sample(image, rows, cols).reshape(image.shape)


def warp_with_grad(image, qcmap):
    """Warped image plus d(out)/du and d(out)/dv per vertex (flattened)."""
    image = np.asarray(image, dtype=float)
    rows, cols = _pixel_coords(qcmap, image.shape)
    val, d_row, d_col = bilinear_sample(image, rows, cols, with_grad=True)
    s = qcmap.n - 1
    return val.reshape(image.shape), d_col * s, d_row * s


def _same_shape(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def loss_fidelity(warped, target):
    """Mean squared intensity difference."""
    a, b = _same_shape(warped, target)
    return float(np.mean((a - b) ** 2))


def loss_mu_norm(mu):
    """Mean of ``|mu|^2`` over all entries."""
    return float(np.mean(np.abs(np.asarray(mu)) ** 2))


def _forward_diffs(mu):
    dx = np.zeros_like(mu)
    dy = np.zeros_like(mu)
    dx[:, :-1] = mu[:, 1:] - mu[:, :-1]
    dy[:-1, :] = mu[1:, :] - mu[:-1, :]
    return dx, dy


def loss_smooth(mu):
    """Mean squared forward-difference gradient, replicate boundary.

    Columns are the x direction, rows the y direction; the real and imaginary
    channels both contribute.
    """
    mu = np.asarray(mu, dtype=complex)
    dx, dy = _forward_diffs(mu)
    return float(np.mean(np.abs(dx) ** 2 + np.abs(dy) ** 2))


def loss_smooth_grad(mu):
    """``dL/dRe + i dL/dIm`` of :func:`loss_smooth`."""
    mu = np.asarray(mu, dtype=complex)
    dx, dy = _forward_diffs(mu)
    g = np.zeros_like(mu)
    g[:, :-1] -= dx[:, :-1]
    g[:, 1:] += dx[:, :-1]
    g[:-1, :] -= dy[:-1, :]
    g[1:, :] += dy[:-1, :]
    return 2.0 * g / mu.size


# -- PGM ---------------------------------------------------------------------

_TOKEN = re.compile(rb"(?:\s|#[^\n]*(?:\n|$))*([^\s#]+)")


def _header_tokens(data, count):
    tokens = []
    pos = 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ValueError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def decode_pgm(data):
    """Decode P5/P2 bytes to a float image in ``[0, 1]`` (divided by maxval)."""
    if data[:2] not in (b"P5", b"P2"):
        raise ValueError("not a P5/P2 PGM file")
    (magic, w, h, maxval), pos = _header_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise ValueError("malformed PGM header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval < 256:
        raise ValueError(f"unsupported PGM geometry/maxval: {w}x{h}, maxval {maxval}")
    if magic == b"P5":
        payload = data[pos + 1:pos + 1 + w * h]
        if len(payload) != w * h:
            raise ValueError("truncated PGM payload")
        pix = np.frombuffer(payload, dtype=np.uint8)
    else:
        pix = np.array(data[pos:].split()[:w * h], dtype=np.int64)
        if pix.size != w * h:
            raise ValueError("truncated PGM payload")
    if pix.max(initial=0) > maxval:
        raise ValueError("PGM sample exceeds maxval")
    return pix.reshape(h, w).astype(float) / maxval


def encode_pgm(image, ascii=False):
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    pix = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    if ascii:
        lines = [" ".join(str(int(x)) for x in row) for row in pix]
        return f"P2\n{w} {h}\n255\n".encode() + "\n".join(lines).encode() + b"\n"
    return f"P5\n{w} {h}\n255\n".encode() + pix.tobytes()


def read_pgm(path):
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def write_pgm(path, image, ascii=False):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image, ascii))

