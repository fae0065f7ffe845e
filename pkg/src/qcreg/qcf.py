"""QCF container for maps, Beltrami fields and spectra.

Layout::

    b"QCF1" + b"<kind> <rows> <cols> <channels>\\n" + payload

``kind`` is ``map`` (channels u, v), ``mu`` (Re, Im) or ``spec``
(Re/Im of the real-channel spectrum, then Re/Im of the imaginary-channel
spectrum).  The payload is little-endian float64, row-major with channels
interleaved, exactly ``rows * cols * channels * 8`` bytes.
"""

import warnings

import numpy as np

from .beltrami import DEFAULT_EPS, clamp_mu
from .mesh import QCMap
from .spectral import SpectralField

MAGIC = b"QCF1"
CHANNELS = {"map": 2, "mu": 2, "spec": 4}


class QCFError(ValueError):
    pass


def encode(kind, data):
    """Serialise a ``(rows, cols, channels)`` float array."""
    if kind not in CHANNELS:
        raise QCFError(f"unknown QCF kind {kind!r}")
    data = np.asarray(data, dtype="<f8")
    if data.ndim != 3 or data.shape[2] != CHANNELS[kind]:
        raise QCFError(f"{kind} payload must be (rows, cols, {CHANNELS[kind]}), got {data.shape}")
    rows, cols, ch = data.shape
    header = f"{kind} {rows} {cols} {ch}\n".encode("ascii")
    return MAGIC + header + np.ascontiguousarray(data).tobytes()


def decode(raw):
    """Inverse of :func:`encode`; returns ``(kind, array)``."""
    if raw[:4] != MAGIC:
        raise QCFError("missing QCF1 magic")
    end = raw.find(b"\n", 4)
    if end < 0:
        raise QCFError("unterminated QCF header")
    try:
        kind, rows, cols, ch = raw[4:end].decode("ascii").split()
        rows, cols, ch = int(rows), int(cols), int(ch)
    except ValueError as exc:
        raise QCFError("malformed QCF header") from exc
    if kind not in CHANNELS or ch != CHANNELS[kind] or rows < 1 or cols < 1:
        raise QCFError(f"invalid QCF header: {kind} {rows} {cols} {ch}")
    payload = raw[end + 1:]
    if len(payload) != rows * cols * ch * 8:
        raise QCFError(
            f"payload is {len(payload)} bytes, header implies {rows * cols * ch * 8}")
    arr = np.frombuffer(payload, dtype="<f8").reshape(rows, cols, ch)
    return kind, arr.astype(float)


def write(path, kind, data):
    with open(path, "wb") as fh:
        fh.write(encode(kind, data))


def read(path, expect=None):
    with open(path, "rb") as fh:
        kind, arr = decode(fh.read())
    if expect is not None and kind != expect:
        raise QCFError(f"{path}: expected a {expect} file, found {kind}")
    return kind, arr


def mu_to_array(mu):
    mu = np.asarray(mu, dtype=complex)
    return np.stack([mu.real, mu.imag], axis=-1)


def save_mu(path, mu):
    write(path, "mu", mu_to_array(mu))


def load_mu(path, clamp=True, eps=DEFAULT_EPS):
    """Read a Beltrami field.  Moduli ``>= 1`` trigger a warning and, with
    ``clamp``, are pulled back to ``1 - eps``."""
    _, arr = read(path, "mu")
    mu = arr[..., 0] + 1j * arr[..., 1]
    if np.any(np.abs(mu) >= 1.0):
        warnings.warn(f"{path}: Beltrami field has sup modulus >= 1", RuntimeWarning)
        if clamp:
            mu = clamp_mu(mu, eps)
    return mu


def save_map(path, qcmap):
    write(path, "map", qcmap.positions.reshape(qcmap.n, qcmap.n, 2))


def load_map(path):
    _, arr = read(path, "map")
    if arr.shape[0] != arr.shape[1]:
        raise QCFError(f"{path}: map grid must be square, got {arr.shape[:2]}")
    return QCMap(arr.shape[0], arr.reshape(-1, 2))


def save_spec(path, spec):
    c = spec.coefficients
    write(path, "spec", np.stack([c[0].real, c[0].imag, c[1].real, c[1].imag], axis=-1))


def load_spec(path):
    _, arr = read(path, "spec")
    coeffs = np.stack([arr[..., 0] + 1j * arr[..., 1], arr[..., 2] + 1j * arr[..., 3]])
    return SpectralField(coeffs)
