"""Fourier representation of Beltrami fields and low-frequency truncation.

Forward transform uses the ``1 / N^2`` normalisation::

    X[m, n] = 1/N^2 sum_{k,l} x[k, l] exp(-2 pi i (k m + l n) / N)

so the inverse is the plain (un-normalised) sum.  The retained block for a
budget ``k`` is the wrap-around corner set ``[0, ceil(k/2)) U [N - floor(k/2), N)``
along each axis.
"""

from dataclasses import dataclass

import numpy as np

from .beltrami import DEFAULT_EPS, clamp_mu

DEFAULT_KEEP = 14


def _check_square(x):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"expected a square N x N array, got shape {x.shape}")
    return x


def dft2(x):
    x = _check_square(x)
    return np.fft.fft2(x) / x.shape[0] ** 2


def idft2(X):
    X = _check_square(X)
    return np.fft.ifft2(X) * X.shape[0] ** 2


def lowpass_indices(n, keep):
    if not 1 <= keep <= n:
        raise ValueError(f"keep must lie in [1, {n}], got {keep}")
    lo = -(-keep // 2)
    hi = keep // 2
    return np.concatenate([np.arange(lo), np.arange(n - hi, n)]).astype(np.int64)


def lowpass_mask(n, keep):
    """Boolean ``n x n`` mask of the retained low-frequency block."""
    idx = lowpass_indices(n, keep)
    axis = np.zeros(n, dtype=bool)
    axis[idx] = True
    return axis[:, None] & axis[None, :]


@dataclass
class SpectralField:
    """Spectra of the real and imaginary channels of a Beltrami field.

    ``coefficients`` has shape ``(2, N, N)``: ``[dft2(Re mu), dft2(Im mu)]``.
    """

    coefficients: np.ndarray
    keep: int | None = None

    @property
    def size(self):
        return self.coefficients.shape[-1]

    @classmethod
    def from_field(cls, mu, keep=None):
        mu = _check_square(mu)
        coeffs = np.stack([dft2(mu.real), dft2(mu.imag)])
        if keep is not None:
            coeffs = coeffs * lowpass_mask(mu.shape[0], keep)
        return cls(coeffs, keep)

    def to_field(self):
        """Recombine the channels as ``idft2(ch0) + i idft2(ch1)``."""
        return idft2(self.coefficients[0]) + 1j * idft2(self.coefficients[1])


def compress(mu, keep=DEFAULT_KEEP, eps=DEFAULT_EPS):
    """Keep only the low-frequency ``keep x keep`` block of both channels.

    Because the transform is linear, truncating the two channel spectra and
    recombining is the same as truncating the spectrum of the complex field.
    Entries pushed to ``|mu| > 1 - eps`` by the truncation are clamped.
    """
    mu = _check_square(mu)
    out = SpectralField.from_field(mu, keep).to_field()
    return clamp_mu(out, eps)
