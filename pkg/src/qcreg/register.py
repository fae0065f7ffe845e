"""Variational registration through the Linear Beltrami Solver.

The unknown is an unconstrained complex field ``theta`` (or its truncated
spectrum).  It is squashed to a Beltrami coefficient with ``|mu| < 1``,
expanded to faces, turned into a map by the LBS, and scored by::

    total = alpha * L_F + beta * L_mu + eta * L_smooth

where ``L_F`` compares the moving image pulled back through the map with the
fixed image.  Gradients are exact: the LBS is differentiated with one adjoint
solve per coordinate.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .beltrami import (DEFAULT_EPS, alpha_derivatives, square_to_faces,
                       square_to_faces_adjoint)
from .diagnostics import DiagnosticsReport, fold_report
from .imaging import loss_mu_norm, loss_smooth, loss_smooth_grad, warp_with_grad
from .lbs import LBSSolution, SolverConfig, laplacian_residual
from .mesh import QCMap, build_grid_mesh
from .spectral import idft2, lowpass_mask


@dataclass
class RegistrationConfig:
    alpha: float = 400.0
    beta: float = 1.0
    eta: float = 1.0
    gamma: float = 50.0  # weight of the reported LBS residual, not optimised
    max_iters: int = 500
    grad_tol: float = 1e-6
    method: str = "gd"  # "gd" or "lbfgs"
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40
    lbfgs_memory: int = 10
    spectral_keep: int | None = None
    eps_clamp: float = DEFAULT_EPS
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if min(self.alpha, self.beta, self.eta) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 < self.eps_clamp <= 0.1:
            raise ValueError(f"eps_clamp must lie in (0, 0.1], got {self.eps_clamp}")
        if self.method not in ("gd", "lbfgs"):
            raise ValueError(f"unknown optimiser {self.method!r}")


class LossTerms(NamedTuple):
    fidelity: float
    mu_norm: float
    smooth: float
    total: float


@dataclass
class RegistrationResult:
    mu: np.ndarray
    map: QCMap
    loss_trace: np.ndarray  # (iterations + 1, 4): L_F, L_mu, L_smooth, total
    diagnostics: DiagnosticsReport
    converged: bool
    iterations: int
    theta: np.ndarray
    residual_metric: float  # gamma * L_Lapla of the final map

    def trace_dict(self):
        names = ("fidelity", "mu_norm", "smooth", "total")
        return {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "trace": [dict(zip(names, map(float, row))) for row in self.loss_trace],
        }


# -- squashing ---------------------------------------------------------------

_BELOW_ONE = 1.0 - 2.0 ** -50  # a few ulps of headroom for the complex product

def squash(theta):
    """``|mu| = tanh(|theta|)`` with the argument kept; ``theta = 0 -> 0``."""
    theta = np.asarray(theta, dtype=complex)
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite entries")
    r = np.abs(theta)
    return theta * _tanh_ratio(r)


def _tanh_ratio(r):
    small = r < 1e-4
    safe = np.where(small, 1.0, r)
    # tanh rounds to 1.0 for |theta| > ~19; keep the modulus strictly below 1
    t = np.minimum(np.tanh(safe), _BELOW_ONE)
    return np.where(small, 1.0 - r * r / 3.0, t / safe)


def squash_adjoint(theta, g_mu):
    """Pull ``dL/dmu`` (as ``d/dRe + i d/dIm``) back to ``dL/dtheta``."""
    r = np.abs(theta)
    small = r < 1e-3
    safe = np.where(small, 1.0, r)
    k = np.where(small, -2.0 / 3.0 + 8.0 * r * r / 15.0,
                 (safe / np.cosh(safe) ** 2 - np.tanh(safe)) / safe ** 3)
    proj = np.real(np.conj(g_mu) * theta)
    return _tanh_ratio(r) * g_mu + k * proj * theta


def _clamp_adjoint(mu, g, eps):
    limit = 1.0 - eps
    r = np.abs(mu)
    over = r > limit
    if not np.any(over):
        return g
    g = g.copy()
    hat = mu[over] / r[over]
    gc = g[over]
    g[over] = limit / r[over] * (gc - np.real(np.conj(gc) * hat) * hat)
    return g


# -- objective ---------------------------------------------------------------

class _Evaluation:
    """Forward pass with everything the backward pass needs."""

    def __init__(self, theta, moving, fixed, mesh, cfg):
        self.theta = theta
        self.mu = squash(theta)
        self.faces = square_to_faces(self.mu, mesh)
        self.lbs = LBSSolution(mesh, self.faces, cfg.solver, cfg.eps_clamp)
        self.warped, self.dwdu, self.dwdv = warp_with_grad(moving, self.lbs.qcmap)
        self.resid = self.warped - fixed
        lf = float(np.mean(self.resid ** 2))
        lm = loss_mu_norm(self.mu)
        ls = loss_smooth(self.mu)
        self.terms = LossTerms(lf, lm, ls, cfg.alpha * lf + cfg.beta * lm + cfg.eta * ls)
        self.cfg = cfg
        self.mesh = mesh

    def grad_theta(self):
        cfg, mesh = self.cfg, self.mesh
        r = self.resid.ravel()
        scale = 2.0 * cfg.alpha / r.size
        g_pos = np.column_stack([scale * r * self.dwdu, scale * r * self.dwdv])
        g_alpha = self.lbs.alpha_sensitivity(g_pos)
        mu_f = self.faces.ravel()
        clamped = mu_f.copy()
        limit = 1.0 - cfg.eps_clamp
        rr = np.abs(mu_f)
        over = rr > limit
        clamped[over] *= limit / rr[over]
        drho, dtau = alpha_derivatives(clamped)
        g_faces = (g_alpha * drho).sum(0) + 1j * (g_alpha * dtau).sum(0)
        g_faces = _clamp_adjoint(mu_f, g_faces, cfg.eps_clamp)
        g_mu = square_to_faces_adjoint(g_faces.reshape(mesh.face_shape))
        g_mu = g_mu + cfg.beta * 2.0 * self.mu / self.mu.size
        g_mu = g_mu + cfg.eta * loss_smooth_grad(self.mu)
        return squash_adjoint(self.theta, g_mu)


def _project(theta, keep):
    if keep is None:
        return theta
    mask = lowpass_mask(theta.shape[0], keep)
    spec = np.fft.fft2(theta) * mask
    return np.fft.ifft2(spec)


def _check_inputs(theta, moving, fixed, mesh):
    theta = np.asarray(theta, dtype=complex)
    moving = np.asarray(moving, dtype=float)
    fixed = np.asarray(fixed, dtype=float)
    shape = (mesh.n, mesh.n)
    for name, arr in (("theta", theta), ("moving", moving), ("fixed", fixed)):
        if arr.shape != shape:
            raise ValueError(f"{name} has shape {arr.shape}, mesh needs {shape}")
    return theta, moving, fixed


def total_loss(theta, moving, fixed, mesh, cfg=None):
    """Weighted registration loss and its three components.

    With ``cfg.spectral_keep`` set, ``theta`` is low-pass truncated before
    squashing.
    """
    cfg = cfg or RegistrationConfig()
    theta, moving, fixed = _check_inputs(theta, moving, fixed, mesh)
    ev = _Evaluation(_project(theta, cfg.spectral_keep), moving, fixed, mesh, cfg)
    return ev.terms


def gradient(theta, moving, fixed, mesh, cfg=None):
    """``dtotal/dRe(theta) + i dtotal/dIm(theta)`` for every entry."""
    cfg = cfg or RegistrationConfig()
    theta, moving, fixed = _check_inputs(theta, moving, fixed, mesh)
    ev = _Evaluation(_project(theta, cfg.spectral_keep), moving, fixed, mesh, cfg)
    g = ev.grad_theta()
    # the truncation is an orthogonal projection, hence self-adjoint
    return _project(g, cfg.spectral_keep)


class _Problem:
    """Real parameter vector <-> theta, on the grid or on a spectral block."""

    def __init__(self, moving, fixed, mesh, cfg):
        self.moving, self.fixed, self.mesh, self.cfg = moving, fixed, mesh, cfg
        n = mesh.n
        self.mask = None if cfg.spectral_keep is None else lowpass_mask(n, cfg.spectral_keep)
        self.size = n * n if self.mask is None else int(self.mask.sum())

    def theta(self, x):
        z = x[:self.size] + 1j * x[self.size:]
        if self.mask is None:
            return z.reshape(self.mesh.n, self.mesh.n)
        spec = np.zeros((self.mesh.n, self.mesh.n), dtype=complex)
        spec[self.mask] = z
        return idft2(spec)

    def evaluate(self, x):
        return _Evaluation(self.theta(x), self.moving, self.fixed, self.mesh, self.cfg)

    def grad(self, ev):
        g = ev.grad_theta()
        if self.mask is not None:
            # adjoint of the un-normalised inverse transform
            g = np.fft.fft2(g)[self.mask]
        g = g.ravel()
        return np.concatenate([g.real, g.imag])


def _lbfgs_direction(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / y.dot(s)
        a = rho * s.dot(q)
        alphas.append((rho, a))
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= s.dot(y) / y.dot(y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def register(moving, fixed, mesh=None, cfg=None, callback=None):
    """Find a fold-free map with ``warp(moving, map) ~ fixed``.

    Starts from the identity (``theta = 0``) and runs gradient descent (or
    L-BFGS) with Armijo backtracking, so every accepted step lowers the total
    loss.  Stops when ``max |grad| <= cfg.grad_tol`` (``converged``), when no
    decreasing step can be found, or after ``cfg.max_iters`` iterations; the
    best iterate is returned in every case.
    """
    cfg = cfg or RegistrationConfig()
    moving = np.asarray(moving, dtype=float)
    fixed = np.asarray(fixed, dtype=float)
    if mesh is None:
        mesh = build_grid_mesh(moving.shape[0])
    _check_inputs(np.zeros((mesh.n, mesh.n)), moving, fixed, mesh)
    prob = _Problem(moving, fixed, mesh, cfg)

    x = np.zeros(2 * prob.size)
    ev = prob.evaluate(x)
    g = prob.grad(ev)
    trace = [ev.terms[:]]
    s_hist, y_hist = [], []
    step = None
    converged = False
    it = 0
    while True:
        if np.max(np.abs(g), initial=0.0) <= cfg.grad_tol:
            converged = True
            break
        if it >= cfg.max_iters:
            break
        if cfg.method == "lbfgs":
            d = _lbfgs_direction(g, s_hist, y_hist)
            slope = g.dot(d)
            if slope >= 0:
                s_hist.clear()
                y_hist.clear()
                d, slope = -g, -g.dot(g)
            t = 1.0 if s_hist else 0.1 / np.max(np.abs(g))
        else:
            d, slope = -g, -g.dot(g)
            t = 0.1 / np.max(np.abs(g)) if step is None else 2.0 * step

        f0 = ev.terms.total
        accepted = None
        for _ in range(cfg.max_backtracks):
            cand = prob.evaluate(x + t * d)
            if cand.terms.total <= f0 + cfg.armijo_c * t * slope:
                accepted = cand
                break
            t *= cfg.shrink
        if accepted is None or accepted.terms.total >= f0:
            break
        x_new = x + t * d
        g_new = prob.grad(accepted)
        if cfg.method == "lbfgs":
            s, y = x_new - x, g_new - g
            if s.dot(y) > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
                s_hist.append(s)
                y_hist.append(y)
                if len(s_hist) > cfg.lbfgs_memory:
                    s_hist.pop(0)
                    y_hist.pop(0)
        x, g, ev, step = x_new, g_new, accepted, t
        it += 1
        trace.append(ev.terms[:])
        if callback is not None:
            callback(it, ev.terms)

    qcmap = ev.lbs.qcmap
    resid = laplacian_residual(mesh, ev.faces, qcmap, cfg.eps_clamp)
    return RegistrationResult(
        mu=ev.mu,
        map=qcmap,
        loss_trace=np.array(trace, dtype=float),
        diagnostics=fold_report(mesh, qcmap),
        converged=converged,
        iterations=it,
        theta=ev.theta,
        residual_metric=cfg.gamma * resid,
    )
